//! Thin command-line front end over the pulsepair library.
//!
//! Exit codes: 0 = ran, 2 = configuration error, 3 = no candidate found.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pulsepair::calibrate::{fullscale_constants_check, null_distribution};
use pulsepair::config::{parse_config, ScenarioConfig};
use pulsepair::pipeline::{
    run_discovery_to_dir, RunInput, DEFAULT_CANDIDATE_THRESHOLD,
};
use pulsepair::records::read_record_path;
use pulsepair::rfi::{excise, SegmentMap};
use pulsepair::synth::{raw_sample_oracle, synthesize_records, synthesize_run, OracleTone, SynthMode};

#[derive(Parser)]
#[command(name = "pulsepair", about = "Two-element interferometer pulse-pair search pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario configuration file (key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig, ExitCode> {
        let text = match std::fs::read_to_string(&self.config) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", self.config.display());
                return Err(ExitCode::from(2));
            }
        };
        let mut cfg = match parse_config(&text) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return Err(ExitCode::from(2));
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize record files (and optionally a frame dump) from a scenario.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for record files.
        #[arg(long, default_value = "out/synth")]
        out: PathBuf,
        /// Also write the binary frame dump (frame mode only).
        #[arg(long)]
        dump_frames: bool,
    },
    /// Run discovery steps 1-4 and write scan tables.
    Scan {
        #[command(flatten)]
        config: ConfigArgs,
        /// Record files to analyze instead of synthesizing.
        #[arg(long)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "out/scan")]
        out: PathBuf,
        /// Candidate threshold on the repetition-qualified max d.
        #[arg(long, default_value_t = DEFAULT_CANDIDATE_THRESHOLD)]
        candidate_threshold: f64,
    },
    /// Full report bundle: steps 1-5 with figures.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "out/report")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CANDIDATE_THRESHOLD)]
        candidate_threshold: f64,
    },
    /// Standalone RFI excision of a record file against a segment map.
    Rfi {
        #[command(flatten)]
        config: ConfigArgs,
        /// Record file to excise.
        #[arg(long)]
        records: PathBuf,
        /// Segment map sidecar (RFIMAPv1).
        #[arg(long)]
        map: PathBuf,
        /// Excised output record file.
        #[arg(long, default_value = "out/excised.ppr")]
        out: PathBuf,
    },
    /// Raw-sample oracle checks of the channelizer conventions.
    Oracle {
        #[command(flatten)]
        config: ConfigArgs,
        /// Tone RF frequency, MHz.
        #[arg(long, default_value_t = 1420.0)]
        frequency: f64,
        /// West-minus-East delay, microseconds.
        #[arg(long, default_value_t = -0.082)]
        delay: f64,
        /// FFT length (power of two).
        #[arg(long, default_value_t = 4096)]
        fft_length: usize,
    },
    /// Noise-only Monte-Carlo null distribution.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value = "out/calibration.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Synth {
            config,
            out,
            dump_frames,
        } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            std::fs::create_dir_all(&out)?;
            match cfg.synth_mode {
                SynthMode::Records => {
                    let set = synthesize_records(&cfg, cfg.seed)?;
                    let windows =
                        pulsepair::pairer::assign_ra_and_partition(set.records, &cfg.array)?;
                    let mut total = 0usize;
                    for (window, recs) in &windows {
                        let path = out.join(format!("window_{window}.ppr"));
                        let mut buf = Vec::new();
                        pulsepair::records::write_record_file(&mut buf, recs)?;
                        std::fs::write(&path, buf)?;
                        total += recs.len();
                    }
                    println!(
                        "wrote {total} records ({} from sources) into {} window files under {}",
                        set.source_records,
                        windows.len(),
                        out.display()
                    );
                }
                SynthMode::Frames => {
                    let mut frames = Vec::new();
                    for frame in synthesize_run(&cfg)? {
                        frames.push(frame?);
                    }
                    println!("synthesized {} frames", frames.len());
                    if dump_frames {
                        let path = out.join("frames.ppfd");
                        let file = std::fs::File::create(&path)?;
                        pulsepair::synth::write_frame_dump(std::io::BufWriter::new(file), &frames)?;
                        println!("frame dump at {}", path.display());
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scan {
            config,
            records,
            out,
            candidate_threshold,
        } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let input = if records.is_empty() {
                RunInput::Synthesize
            } else {
                RunInput::RecordFiles(records)
            };
            let run = run_discovery_to_dir(&cfg, input, &out, candidate_threshold)?;
            match run.candidate {
                Some((bin, d)) => {
                    println!("candidate: bin {bin} qualified_max_d {d:.3}");
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("no candidate above threshold {candidate_threshold:.3}");
                    Ok(ExitCode::from(3))
                }
            }
        }
        Command::Report {
            config,
            records,
            out,
            candidate_threshold,
        } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let input = if records.is_empty() {
                RunInput::Synthesize
            } else {
                RunInput::RecordFiles(records)
            };
            let run = run_discovery_to_dir(&cfg, input, &out, candidate_threshold)?;
            println!(
                "report bundle at {} ({} records, candidate: {})",
                out.display(),
                run.records.len(),
                match run.candidate {
                    Some((bin, _)) => format!("bin {bin}"),
                    None => "none".to_string(),
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Rfi {
            config,
            records,
            map,
            out,
        } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let (recs, errors) = read_record_path(&records)?;
            if !errors.is_empty() {
                eprintln!("{} malformed record lines skipped", errors.len());
            }
            let map = SegmentMap::from_text(&std::fs::read_to_string(&map)?)?;
            let (kept, report) = excise(
                recs,
                &map,
                cfg.filters.rfi_count_criterion,
                cfg.filters.rfi_margin_segments,
            );
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut buf = Vec::new();
            pulsepair::records::write_record_file(&mut buf, &kept)?;
            std::fs::write(&out, buf)?;
            print!("{}", report.to_text());
            println!("excised records at {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            config,
            frequency,
            delay,
            fft_length,
        } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let tone = OracleTone {
                rf_frequency: frequency,
                amplitude: 1.0,
                delay_east: 0.0,
                delay_west: delay,
                phase0: 0.3,
            };
            let (east, west) = raw_sample_oracle(&cfg, &tone, fft_length)?;
            let frame = pulsepair::channelizer::channelize(
                &east,
                &west,
                fft_length,
                60500.0,
                cfg.array.reference_frequency,
                cfg.instrument.sample_rate,
            )?;
            let bin = frame
                .bin_of_frequency(frequency)
                .ok_or("tone does not land in the channelized band")?;
            let measured = pulsepair::wrap_phase(frame.west[bin].arg() - frame.east[bin].arg());
            let expected =
                pulsepair::wrap_phase(-2.0 * std::f64::consts::PI * frequency * delay);
            println!("tone {frequency} MHz, delay {delay} us, fft {fft_length}");
            println!("bin magnitude east/west = {:.6}/{:.6}", frame.east[bin].norm(), frame.west[bin].norm());
            println!("west-east phase measured = {measured:.6} rad, expected = {expected:.6} rad");
            println!("difference = {:.2e} rad", (measured - expected).abs());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate { config, runs, out } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let cal = null_distribution(&cfg, runs, cfg.seed)?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut csv = String::from("statistic,q50,q90,q99,q999\n");
            for (name, q) in [
                ("run_max_d", cal.run_max_quantiles),
                ("pooled_bin_max_d", cal.pooled_bin_max_quantiles),
                ("pooled_qualified_max_d", cal.pooled_qualified_quantiles),
            ] {
                csv.push_str(&format!(
                    "{name},{:.4},{:.4},{:.4},{:.4}\n",
                    q[0], q[1], q[2], q[3]
                ));
            }
            csv.push_str(&format!(
                "final_d_mean,{0:.4},,,\nfinal_d_std,{1:.4},,,\nfraction_below_4p4,{2:.6},,,\n",
                cal.final_d_mean, cal.final_d_std, cal.fraction_below_reference
            ));
            std::fs::write(&out, &csv)?;
            println!("{csv}");
            // constants cross-check comes along for free
            for entry in fullscale_constants_check() {
                println!(
                    "{}: {:.6} (expected {} +/- {}) {}",
                    entry.name,
                    entry.computed,
                    entry.expected,
                    entry.tolerance,
                    if entry.passes() { "ok" } else { "FAIL" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
