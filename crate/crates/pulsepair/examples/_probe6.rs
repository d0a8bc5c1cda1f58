use pulsepair::config::ScenarioConfig;
use pulsepair::pipeline::{run_discovery, RunInput, DEFAULT_CANDIDATE_THRESHOLD};
use pulsepair::synth::{DeltaFLaw, FrequencyLaw, InjectedSource};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rate: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(250.0);
    let fwhm: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.00625);
    let snr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40.0);
    let mut ok = 0;
    for seed in 11u64..=30 {
        let mut cfg = ScenarioConfig::defaults(-71.6267);
        cfg.coverage = vec![(60498.499, 60517.663), (60532.329, 60603.653)];
        cfg.noise_pairs = 3417;
        cfg.seed = seed;
        cfg.instrument.phase_detector_offset = 0.07;
        cfg.sources.push(InjectedSource {
            ra_hours: 5.1675,
            amplitude_snr: snr,
            delta_f_law: DeltaFLaw::Uniform(3.0, 6.5),
            rate_per_hour: rate,
            beam_fwhm_deg: fwhm,
            frequency_law: FrequencyLaw::Comb(1.0 / 0.082),
        });
        let run = run_discovery(&cfg, RunInput::Synthesize, DEFAULT_CANDIDATE_THRESHOLD).unwrap();
        let bin = pulsepair::skygeom::ra_bin(5.1675, 1600) as usize;
        let (top_bin, top_d) = run.top_bins[0];
        let est = run.offset.estimate.unwrap();
        let in_tol = (est.offset - 0.07).abs() < 0.01 && est.confident;
        if in_tol && top_bin as usize == bin { ok += 1; }
        println!(
            "seed {seed}: top {top_bin} d {top_d:6.1} | count {} | offset {:+.4} conf {} | s3 {:6.2} s4 {:6.2} {}",
            run.step1.per_bin_count[bin], est.offset, est.confident,
            run.step3.per_bin_max_d[bin], run.step4.per_bin_max_d[bin],
            if in_tol { "OK" } else { "MISS" },
        );
    }
    println!("rate {rate} fwhm {fwhm} snr {snr}: {ok}/10 within tolerance");
}
