//! CSV tables and SVG figure analogues for a completed discovery run.
//!
//! One CSV row per scanned point and one per bin for each scan step, the
//! exposure profile, an association table (separation, frequency, MJD and
//! likelihoods versus RA) and twelve figures. All output is deterministic.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::pipeline::DiscoveryRun;
use crate::scan::{BinScanResult, REPETITION_MIN};
use crate::skygeom::ra_bin_low;
use crate::svg::{Layer, Plot};

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.4}")
    }
}

fn points_csv(run: &DiscoveryRun, scan: &BinScanResult) -> String {
    let mut out = String::from("k,key,ra,bin,bin_count,d,mjd,delta_f\n");
    for p in &scan.per_point {
        let r = &run.records[p.record_index];
        writeln!(
            out,
            "{},{:.6},{:.6},{},{},{:.4},{:.6},{:.6}",
            p.k, p.key, r.ra, p.ra_bin, p.bin_count, p.d, r.first.mjd, r.delta_f
        )
        .unwrap();
    }
    out
}

fn bins_csv(run: &DiscoveryRun, scan: &BinScanResult) -> String {
    let mut out = String::from("bin,ra_low,probability,count,max_d,qualified_max_d,final_d\n");
    let bins = run.exposure.bins_per_24h;
    for b in run.exposure.analyzed_bins() {
        let i = b as usize;
        writeln!(
            out,
            "{},{:.6},{:.8},{},{},{},{}",
            b,
            ra_bin_low(b, bins),
            run.exposure.bin_probability[i],
            scan.per_bin_count[i],
            fmt_opt(scan.per_bin_max_d[i]),
            fmt_opt(scan.per_bin_qualified_max_d[i]),
            fmt_opt(scan.per_bin_final_d[i]),
        )
        .unwrap();
    }
    out
}

fn associated_csv(run: &DiscoveryRun) -> String {
    let mut out =
        String::from("ra,mjd,delta_f,f_first,f_second,d_ew_phi_first,d_df_d_ew_phi,llsnr_pulse,llsnr_pair\n");
    for r in &run.records {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.4}",
            r.ra,
            r.first.mjd,
            r.delta_f,
            r.first.rf_frequency,
            r.second.rf_frequency,
            r.d_ew_phi_first,
            r.d_df_d_ew_phi,
            r.llsnr_pulse,
            r.llsnr_pair
        )
        .unwrap();
    }
    out
}

fn exposure_csv(run: &DiscoveryRun) -> String {
    let mut out = String::from("bin,ra_low,probability\n");
    let bins = run.exposure.bins_per_24h;
    for b in run.exposure.analyzed_bins() {
        writeln!(
            out,
            "{},{:.6},{:.8}",
            b,
            ra_bin_low(b, bins),
            run.exposure.bin_probability[b as usize]
        )
        .unwrap();
    }
    out
}

fn offset_text(run: &DiscoveryRun) -> String {
    let mut out = String::new();
    match run.offset.estimate {
        Some(est) => {
            writeln!(out, "cluster_mode_rad = {:.4}", est.offset).unwrap();
            writeln!(out, "peak_ratio = {:.3}", est.peak_ratio).unwrap();
            writeln!(out, "records_in_bin = {}", est.n).unwrap();
            writeln!(out, "confident = {}", est.confident).unwrap();
        }
        None => {
            writeln!(out, "cluster_mode_rad = none").unwrap();
        }
    }
    writeln!(out, "applied_step4_offset_rad = {:.4}", run.offset.applied).unwrap();
    writeln!(out, "fallback_to_zero = {}", run.offset.fallback).unwrap();
    out
}

fn summary_text(run: &DiscoveryRun) -> String {
    let mut out = String::new();
    writeln!(out, "accepted_records = {}", run.records.len()).unwrap();
    writeln!(out, "points_scanned = {}", run.step1.points_scanned).unwrap();
    writeln!(out, "filter_input = {}", run.filter_summary.input).unwrap();
    writeln!(out, "rejected_delta_f = {}", run.filter_summary.rejected_delta_f).unwrap();
    writeln!(out, "rejected_d_ew = {}", run.filter_summary.rejected_d_ew).unwrap();
    writeln!(out, "rejected_d_df = {}", run.filter_summary.rejected_d_df).unwrap();
    writeln!(out, "rejected_llsnr_pulse = {}", run.filter_summary.rejected_llsnr_pulse).unwrap();
    writeln!(out, "rejected_llsnr_pair = {}", run.filter_summary.rejected_llsnr_pair).unwrap();
    writeln!(out, "record_read_errors = {}", run.record_read_errors).unwrap();
    writeln!(out, "candidate_threshold = {:.3}", run.candidate_threshold).unwrap();
    for (i, (bin, d)) in run.top_bins.iter().enumerate() {
        writeln!(
            out,
            "top_{} = bin {} (ra {:.3}-{:.3} hr) qualified_max_d {:.3}",
            i + 1,
            bin,
            ra_bin_low(*bin, run.exposure.bins_per_24h),
            ra_bin_low(*bin + 1, run.exposure.bins_per_24h),
            d
        )
        .unwrap();
    }
    match run.candidate {
        Some((bin, d)) => writeln!(out, "candidate = bin {bin} d {d:.3}").unwrap(),
        None => writeln!(out, "candidate = none").unwrap(),
    }
    out
}

/// Write all CSV/text tables of a run into `out_dir`.
pub fn write_tables(run: &DiscoveryRun, out_dir: &Path) -> io::Result<()> {
    std::fs::write(out_dir.join("step1_points.csv"), points_csv(run, &run.step1))?;
    std::fs::write(out_dir.join("step1_bins.csv"), bins_csv(run, &run.step1))?;
    std::fs::write(out_dir.join("step2_offset.txt"), offset_text(run))?;
    std::fs::write(out_dir.join("step3_points.csv"), points_csv(run, &run.step3))?;
    std::fs::write(out_dir.join("step3_bins.csv"), bins_csv(run, &run.step3))?;
    std::fs::write(out_dir.join("step4_points.csv"), points_csv(run, &run.step4))?;
    std::fs::write(out_dir.join("step4_bins.csv"), bins_csv(run, &run.step4))?;
    std::fs::write(out_dir.join("associated_pairs.csv"), associated_csv(run))?;
    std::fs::write(out_dir.join("exposure.csv"), exposure_csv(run))?;
    std::fs::write(out_dir.join("summary.txt"), summary_text(run))?;
    Ok(())
}

fn parameter_block(run: &DiscoveryRun, sort: &str, offset: f64) -> Vec<String> {
    let cfg = &run.config;
    let i = &cfg.instrument;
    let f = &cfg.filters;
    let coverage = cfg
        .coverage
        .iter()
        .map(|(lo, hi)| format!("{lo:.3}-{hi:.3}"))
        .collect::<Vec<_>>()
        .join(",");
    let bands = i
        .rf_bands
        .iter()
        .map(|(lo, hi)| format!("{lo:.1}-{hi:.1}"))
        .collect::<Vec<_>>()
        .join(",");
    let fringe = cfg
        .fringe_model()
        .fringe_period()
        .map(|p| format!("{p:.4}"))
        .unwrap_or_else(|_| "n/a".to_string());
    vec![
        format!("sort = ascending {sort}"),
        format!("offset = {offset:.4} rad"),
        format!("points = {}", run.step1.points_scanned),
        format!("mjd coverage = {coverage}"),
        format!("rf bands = {bands} MHz"),
        format!("delta_f = {:.6}-{:.3} MHz", f.delta_f_range.0, f.delta_f_range.1),
        format!("d_df window = +/-{:.2} rad", f.d_df_window),
        format!("d_ew window = +/-{:.2} rad", f.d_ew_window),
        format!("tau_int = {:.4} us", i.tau_int),
        format!("rfi margin = +/-{} segments", f.rfi_margin_segments),
        format!(
            "llsnr thresholds pulse/pair = {:.1}/{:.1}",
            f.llsnr_pulse_threshold, f.llsnr_pair_threshold
        ),
        format!("ra bins / 24 hr = {}", f.ra_bins_per_24h),
        format!("fft bin = {:.4} Hz, integration = {:.4} s", i.fft_bin_width, i.integration_time),
        format!(
            "baseline = {:.1} lambda at {:.1} MHz, azimuth {:.1} deg",
            cfg.array.baseline_length, cfg.array.reference_frequency, cfg.array.perpendicular_azimuth
        ),
        format!("fringe period = {fringe} hr"),
    ]
}

fn d_vs_ra_figure(run: &DiscoveryRun, scan: &BinScanResult, title: &str, offset: f64) -> Plot {
    let mut plot = Plot::new(title, "RA (hr)", "Cohen's d of sorted pulse pair count");
    let points: Vec<(f64, f64)> = scan
        .per_point
        .iter()
        .map(|p| (run.records[p.record_index].ra, p.d))
        .collect();
    plot.layers.push(Layer::Scatter {
        points,
        radius: 1.6,
        color: "#1f4e79".into(),
    });
    plot.layers.push(Layer::HLine {
        y: crate::calibrate::REFERENCE_D,
        color: "#b22222".into(),
        dashed: true,
    });
    plot.annotations = parameter_block(run, &scan.sort_key_name, offset);
    plot.autoscale();
    plot.x_range = run.exposure.analyzed_range;
    plot
}

fn scatter_figure(title: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Plot {
    let mut plot = Plot::new(title, x_label, y_label);
    plot.layers.push(Layer::Scatter {
        points,
        radius: 1.6,
        color: "#1f4e79".into(),
    });
    plot.autoscale();
    plot
}

/// Render the twelve figure analogues into `dir`.
pub fn emit_figures(run: &DiscoveryRun, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let records = &run.records;
    let bins = run.exposure.bins_per_24h;

    // 1, 3, 4: the three scan presentations
    let fig1 = d_vs_ra_figure(run, &run.step1, "step 1: d vs RA, pair-difference sort", 0.0);
    std::fs::write(dir.join("fig01_step1_d_vs_ra.svg"), fig1.render())?;
    let fig3 = d_vs_ra_figure(run, &run.step3, "step 3: d vs RA, zero-offset phase sort", 0.0);
    std::fs::write(dir.join("fig03_step3_d_vs_ra.svg"), fig3.render())?;
    let fig4 = d_vs_ra_figure(
        run,
        &run.step4,
        "step 4: d vs RA, offset phase sort",
        run.offset.applied,
    );
    std::fs::write(dir.join("fig04_step4_d_vs_ra.svg"), fig4.render())?;

    // 2: first-pulse phase vs RA
    let mut fig2 = scatter_figure(
        "step 2: first-pulse West-East phase vs RA",
        "RA (hr)",
        "d_ew_phi first pulse (rad)",
        records.iter().map(|r| (r.ra, r.d_ew_phi_first)).collect(),
    );
    fig2.x_range = run.exposure.analyzed_range;
    if let Some(est) = run.offset.estimate {
        fig2.layers.push(Layer::HLine {
            y: est.offset,
            color: "#b22222".into(),
            dashed: true,
        });
        fig2.annotations.push(format!("cluster mode = {:.4} rad", est.offset));
        fig2.annotations.push(format!("confident = {}", est.confident));
    }
    std::fs::write(dir.join("fig02_first_phase_vs_ra.svg"), fig2.render())?;

    // 5-7: associations
    let mut fig5 = scatter_figure(
        "pair frequency separation vs RA",
        "RA (hr)",
        "delta_f (MHz)",
        records.iter().map(|r| (r.ra, r.delta_f)).collect(),
    );
    fig5.x_range = run.exposure.analyzed_range;
    std::fs::write(dir.join("fig05_delta_f_vs_ra.svg"), fig5.render())?;

    let mut freq_points: Vec<(f64, f64)> = records.iter().map(|r| (r.ra, r.first.rf_frequency)).collect();
    freq_points.extend(records.iter().map(|r| (r.ra, r.second.rf_frequency)));
    let mut fig6 = scatter_figure("pulse RF frequency vs RA", "RA (hr)", "RF frequency (MHz)", freq_points);
    fig6.x_range = run.exposure.analyzed_range;
    std::fs::write(dir.join("fig06_rf_frequency_vs_ra.svg"), fig6.render())?;

    let mut fig7 = scatter_figure(
        "pulse pair MJD vs RA",
        "RA (hr)",
        "MJD (days)",
        records.iter().map(|r| (r.ra, r.first.mjd)).collect(),
    );
    fig7.x_range = run.exposure.analyzed_range;
    std::fs::write(dir.join("fig07_mjd_vs_ra.svg"), fig7.render())?;

    // 8: zoom on the candidate bin
    let mut fig8 = Plot::new(
        "step 4 d vs RA, candidate bin zoom",
        "RA (hr)",
        "Cohen's d of sorted pulse pair count",
    );
    if let Some(&(bin, _)) = run.top_bins.first() {
        let lo = ra_bin_low(bin.saturating_sub(10), bins);
        let hi = ra_bin_low((bin + 11).min(bins - 1), bins);
        let points: Vec<(f64, f64)> = run
            .step4
            .per_point
            .iter()
            .filter(|p| {
                let ra = records[p.record_index].ra;
                ra >= lo && ra < hi
            })
            .map(|p| (records[p.record_index].ra, p.d))
            .collect();
        fig8.layers.push(Layer::Scatter {
            points,
            radius: 2.4,
            color: "#1f4e79".into(),
        });
        fig8.autoscale();
        fig8.x_range = (lo, hi);
        // annotate the strongest point in the bin
        if let Some(best) = run
            .step4
            .per_point
            .iter()
            .filter(|p| p.ra_bin == bin)
            .max_by(|a, b| a.d.total_cmp(&b.d))
        {
            let r = &records[best.record_index];
            fig8.annotations = vec![
                format!("bin {} peak d = {:.1}", bin, best.d),
                format!("mjd = {:.6}", r.first.mjd),
                format!("rf = {:.6} MHz", r.first.rf_frequency),
                format!("delta_f = {:.6} MHz", r.delta_f),
                format!(
                    "snr e/w = {:.2}/{:.2} dB",
                    r.first.snr_east, r.first.snr_west
                ),
                format!("d_ew_phi = {:.4} rad", r.d_ew_phi_first),
                format!("d_df_d_ew_phi = {:.4} rad", r.d_df_d_ew_phi),
            ];
        }
    } else {
        fig8.autoscale();
    }
    std::fs::write(dir.join("fig08_candidate_zoom.svg"), fig8.render())?;

    // 9: exposure probability
    let mut fig9 = Plot::new("RA bin event probability", "RA (hr)", "probability");
    let exposure_points: Vec<(f64, f64)> = run
        .exposure
        .analyzed_bins()
        .map(|b| (ra_bin_low(b, bins), run.exposure.bin_probability[b as usize]))
        .collect();
    fig9.layers.push(Layer::Line {
        points: exposure_points,
        color: "#1f4e79".into(),
    });
    fig9.autoscale();
    let y_hi = fig9.y_range.1;
    fig9.y_range = (0.0, y_hi);
    std::fs::write(dir.join("fig09_exposure.svg"), fig9.render())?;

    // 10-11: likelihoods
    let mut fig10 = scatter_figure(
        "pulse composite SNR log likelihood vs RA",
        "RA (hr)",
        "llsnr pulse",
        records.iter().map(|r| (r.ra, r.llsnr_pulse)).collect(),
    );
    fig10.x_range = run.exposure.analyzed_range;
    std::fs::write(dir.join("fig10_llsnr_pulse_vs_ra.svg"), fig10.render())?;
    let mut fig11 = scatter_figure(
        "pair composite SNR log likelihood vs RA",
        "RA (hr)",
        "llsnr pair",
        records.iter().map(|r| (r.ra, r.llsnr_pair)).collect(),
    );
    fig11.x_range = run.exposure.analyzed_range;
    std::fs::write(dir.join("fig11_llsnr_pair_vs_ra.svg"), fig11.render())?;

    // 12: per-bin counts
    let mut fig12 = Plot::new("pulse pair count per RA bin", "RA (hr)", "count");
    let bar_points: Vec<(f64, f64)> = run
        .exposure
        .analyzed_bins()
        .map(|b| {
            (
                ra_bin_low(b, bins) + 12.0 / bins as f64,
                run.step1.per_bin_count[b as usize] as f64,
            )
        })
        .collect();
    fig12.layers.push(Layer::Bars {
        points: bar_points,
        width: 24.0 / bins as f64,
        color: "#1f4e79".into(),
    });
    fig12.annotations = vec![format!(
        "repetition floor for candidate ranking = {REPETITION_MIN} records"
    )];
    fig12.autoscale();
    fig12.x_range = run.exposure.analyzed_range;
    let y_hi = fig12.y_range.1;
    fig12.y_range = (0.0, y_hi);
    std::fs::write(dir.join("fig12_bin_counts.svg"), fig12.render())?;

    Ok(())
}
