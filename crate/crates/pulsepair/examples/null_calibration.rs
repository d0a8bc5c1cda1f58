//! Noise-only Monte-Carlo calibration: how large a Cohen's d does pure
//! noise reach at the reference dataset size (3417 accepted pairs over the
//! 500 analyzed bins), and how often bins stay below the 4.4 level.
//!
//! Run with: cargo run --release --example null_calibration [n_runs]

use pulsepair::calibrate::null_distribution_with_exposure;
use pulsepair::config::ScenarioConfig;
use pulsepair::scan::ExposureModel;

fn main() {
    let n_runs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let mut cfg = ScenarioConfig::defaults(-71.6267);
    cfg.noise_pairs = 3417;
    cfg.coverage = vec![(60498.499, 60517.663), (60532.329, 60603.653)];
    let exposure = ExposureModel::uniform(cfg.filters.ra_bins_per_24h, cfg.filters.analyzed_ra_range);

    let cal = null_distribution_with_exposure(&cfg, &exposure, n_runs, 1).unwrap();
    println!("noise-only calibration over {n_runs} runs, N = {} pairs, {} analyzed bins",
        cfg.noise_pairs, exposure.analyzed_bin_count());
    println!("per-bin final d: mean {:+.4}, sd {:.4}", cal.final_d_mean, cal.final_d_std);
    println!("fraction of bins with max d below 4.4: {:.4}", cal.fraction_below_reference);
    let q = cal.run_max_quantiles;
    println!("run max d quantiles  (50/90/99/99.9%): {:.2} {:.2} {:.2} {:.2}", q[0], q[1], q[2], q[3]);
    let q = cal.pooled_bin_max_quantiles;
    println!("bin max d quantiles  (50/90/99/99.9%): {:.2} {:.2} {:.2} {:.2}", q[0], q[1], q[2], q[3]);
    let q = cal.pooled_qualified_quantiles;
    println!("qualified quantiles  (50/90/99/99.9%): {:.2} {:.2} {:.2} {:.2}", q[0], q[1], q[2], q[3]);
    let per_run: Vec<String> = cal.runs.iter().take(20)
        .map(|r| format!("{}", r.bins_below_reference))
        .collect();
    println!("bins below 4.4 per run (first 20): {}", per_run.join(" "));
}
