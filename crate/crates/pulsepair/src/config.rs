//! Scenario configuration: array geometry, instrument parameters,
//! post-processing filters, synthesis inputs, and the plain-text
//! `key = value` format they are read from.
//!
//! The text format is one key per line, `#` starts a comment, and list
//! values use `low-high` ranges separated by commas. Writing a config back
//! out with [`ScenarioConfig::to_config_text`] and re-parsing it yields the
//! identical configuration, which is how run manifests stay reproducible.

use std::fmt::Write as _;

use thiserror::Error;

use crate::skygeom::FringeModel;
use crate::synth::{ContinuumSource, DeltaFLaw, FrequencyLaw, InjectedSource, RfiSource, SynthMode};

/// Number of FFT bins in one RFI/noise spectral segment.
pub const SEGMENT_BINS: u32 = 256;

/// Interferometer array geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    /// Baseline length in wavelengths at `reference_frequency`.
    pub baseline_length: f64,
    /// Reference frequency in MHz.
    pub reference_frequency: f64,
    /// Azimuth of the baseline's perpendicular bisecting plane, degrees.
    pub perpendicular_azimuth: f64,
    /// Site longitude in degrees east of Greenwich.
    pub site_longitude: f64,
    /// Pointing declination in degrees.
    pub declination_pointing: f64,
}

impl ArrayConfig {
    pub fn fringe_model(&self) -> FringeModel {
        FringeModel::new(
            self.baseline_length,
            self.declination_pointing,
            self.reference_frequency,
        )
    }
}

/// Receiver and digitizer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentConfig {
    /// Differential instrument delay, West minus East, in microseconds.
    pub tau_int: f64,
    /// Constant offset added to measured West-minus-East phase, radians.
    pub phase_detector_offset: f64,
    /// First-level detection threshold applied per antenna, dB.
    pub snr_threshold: f64,
    /// Seconds between triggered integrations.
    pub integration_interval: f64,
    /// FFT bin width in Hz.
    pub fft_bin_width: f64,
    /// Coherent integration time in seconds (one FFT).
    pub integration_time: f64,
    /// Accepted RF bands in MHz, ascending and non-overlapping.
    pub rf_bands: Vec<(f64, f64)>,
    /// Complex sample rate in megasamples per second.
    pub sample_rate: f64,
}

/// Post-processing filter thresholds and binning.
#[derive(Debug, Clone, PartialEq)]
pub struct PostFilterConfig {
    /// Accepted pulse-pair frequency separation, MHz.
    pub delta_f_range: (f64, f64),
    /// Half-width of the corrected pair phase difference window, radians.
    pub d_df_window: f64,
    /// Half-width of the first-pulse West-minus-East phase window, radians.
    pub d_ew_window: f64,
    /// Offset applied to the phase sort key in the offset scan, radians.
    pub d_ew_offset: f64,
    /// Excision margin around a flagged RFI segment, in segments.
    pub rfi_margin_segments: u32,
    /// Detections per segment per 4-hour window that flag it as RFI.
    pub rfi_count_criterion: u32,
    /// Keep records with first-pulse composite SNR log-likelihood at or
    /// below this value (more negative means less noise-like).
    pub llsnr_pulse_threshold: f64,
    /// Keep records with pair composite SNR log-likelihood at or below
    /// this value.
    pub llsnr_pair_threshold: f64,
    /// RA bins across 24 hours.
    pub ra_bins_per_24h: u32,
    /// Analyzed RA range in hours; exposure is normalized over it.
    pub analyzed_ra_range: (f64, f64),
}

/// A complete run scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub array: ArrayConfig,
    pub instrument: InstrumentConfig,
    pub filters: PostFilterConfig,
    /// Observed MJD intervals.
    pub coverage: Vec<(f64, f64)>,
    /// RNG seed for synthesis.
    pub seed: u64,
    /// Record-level or frame-level synthesis.
    pub synth_mode: SynthMode,
    /// Accepted noise pulse pairs to draw in record-level synthesis.
    pub noise_pairs: u32,
    /// Bins per frame in frame-level synthesis.
    pub bins_per_frame: u32,
    /// RF frequency of frame bin 0 in frame-level synthesis, MHz.
    pub frame_band_low: f64,
    pub sources: Vec<InjectedSource>,
    pub rfi: Vec<RfiSource>,
    pub continuum: Vec<ContinuumSource>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigIssue {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("{field} {constraint}")]
    Invariant {
        field: &'static str,
        constraint: String,
    },
    #[error("rf_bands overlap or are out of order: ({0}, {1}) then ({2}, {3}) MHz")]
    BandOverlap(f64, f64, f64, f64),
}

#[derive(Debug, Error, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} configuration error(s):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

impl ScenarioConfig {
    /// Instrument-block defaults; the site longitude has no standard value
    /// and must always be supplied.
    pub fn defaults(site_longitude: f64) -> Self {
        ScenarioConfig {
            array: ArrayConfig {
                baseline_length: 33.0,
                reference_frequency: 1425.0,
                perpendicular_azimuth: 180.0,
                site_longitude,
                declination_pointing: -7.6,
            },
            instrument: InstrumentConfig {
                tau_int: -0.082,
                phase_detector_offset: 0.0,
                snr_threshold: 8.5,
                integration_interval: 3.0,
                fft_bin_width: 62.5e6 / (1u64 << 24) as f64,
                integration_time: (1u64 << 24) as f64 / 62.5e6,
                rf_bands: vec![(1405.0, 1424.0), (1426.0, 1455.0)],
                sample_rate: 62.5,
            },
            filters: PostFilterConfig {
                delta_f_range: (1.0e-6, 7.0),
                d_df_window: 0.80,
                d_ew_window: 0.10,
                d_ew_offset: 0.0,
                rfi_margin_segments: 500,
                rfi_count_criterion: 20,
                llsnr_pulse_threshold: -1.6,
                llsnr_pair_threshold: -2.7,
                ra_bins_per_24h: 1600,
                analyzed_ra_range: (1.5, 9.0),
            },
            coverage: vec![(60498.499, 60517.663), (60532.329, 60603.653)],
            seed: 1,
            synth_mode: SynthMode::Records,
            noise_pairs: 3417,
            bins_per_frame: 1 << 14,
            frame_band_low: 1405.0,
            sources: Vec::new(),
            rfi: Vec::new(),
            continuum: Vec::new(),
        }
    }

    pub fn fringe_model(&self) -> FringeModel {
        self.array.fringe_model()
    }

    /// Check every structural invariant; collects all violations.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let inv = |issues: &mut Vec<ConfigIssue>, ok: bool, field: &'static str, c: &str| {
            if !ok {
                issues.push(ConfigIssue::Invariant {
                    field,
                    constraint: c.to_string(),
                });
            }
        };

        let a = &self.array;
        inv(&mut issues, a.baseline_length > 0.0, "baseline_length", "must be > 0");
        inv(&mut issues, a.reference_frequency > 0.0, "reference_frequency", "must be > 0");
        inv(
            &mut issues,
            (0.0..360.0).contains(&a.perpendicular_azimuth),
            "perpendicular_azimuth",
            "must be in [0, 360)",
        );
        inv(
            &mut issues,
            a.declination_pointing.abs() < 90.0,
            "declination_pointing",
            "must satisfy |dec| < 90",
        );
        inv(
            &mut issues,
            a.site_longitude.is_finite() && a.site_longitude.abs() <= 360.0,
            "site_longitude",
            "must be a finite longitude in degrees",
        );

        let i = &self.instrument;
        inv(&mut issues, i.fft_bin_width > 0.0, "fft_bin_width", "must be > 0");
        if i.fft_bin_width > 0.0 {
            let nominal = 1.0 / i.fft_bin_width;
            inv(
                &mut issues,
                (i.integration_time - nominal).abs() <= 0.05 * nominal,
                "integration_time",
                "must equal 1/fft_bin_width within 5%",
            );
        }
        inv(&mut issues, i.tau_int.is_finite(), "tau_int", "must be finite");
        inv(&mut issues, i.sample_rate > 0.0, "sample_rate", "must be > 0");
        inv(&mut issues, i.integration_interval > 0.0, "integration_interval", "must be > 0");
        inv(&mut issues, !i.rf_bands.is_empty(), "rf_bands", "must not be empty");
        for (low, high) in &i.rf_bands {
            inv(&mut issues, low < high, "rf_bands", "each band must have low < high");
        }
        for pair in i.rf_bands.windows(2) {
            if pair[1].0 < pair[0].1 {
                issues.push(ConfigIssue::BandOverlap(pair[0].0, pair[0].1, pair[1].0, pair[1].1));
            }
        }

        let f = &self.filters;
        inv(
            &mut issues,
            f.delta_f_range.0 < f.delta_f_range.1,
            "delta_f_range",
            "must have low < high",
        );
        inv(&mut issues, f.delta_f_range.0 >= 0.0, "delta_f_range", "must be non-negative");
        inv(&mut issues, f.d_df_window >= 0.0, "d_df_window", "must be >= 0");
        inv(&mut issues, f.d_ew_window >= 0.0, "d_ew_window", "must be >= 0");
        inv(&mut issues, f.ra_bins_per_24h > 0, "ra_bins_per_24h", "must be > 0");
        inv(
            &mut issues,
            f.analyzed_ra_range.0 < f.analyzed_ra_range.1 && f.analyzed_ra_range.1 <= 24.0,
            "analyzed_ra_range",
            "must be an ascending range within [0, 24]",
        );

        for (low, high) in &self.coverage {
            inv(&mut issues, low < high, "coverage", "each interval must have low < high");
        }
        for pair in self.coverage.windows(2) {
            inv(
                &mut issues,
                pair[0].1 <= pair[1].0,
                "coverage",
                "intervals must be ascending and non-overlapping",
            );
        }
        inv(&mut issues, self.bins_per_frame >= 512, "bins_per_frame", "must be >= 512");
        inv(
            &mut issues,
            self.bins_per_frame.is_power_of_two(),
            "bins_per_frame",
            "must be a power of two",
        );

        for (n, s) in self.sources.iter().enumerate() {
            if s.amplitude_snr < i.snr_threshold {
                issues.push(ConfigIssue::Invariant {
                    field: "source.amplitude_snr",
                    constraint: format!(
                        "source {n} target SNR {} dB is below the {} dB detection threshold",
                        s.amplitude_snr, i.snr_threshold
                    ),
                });
            }
            inv(&mut issues, s.rate_per_hour >= 0.0, "source.rate_per_hour", "must be >= 0");
            inv(&mut issues, s.beam_fwhm_deg > 0.0, "source.beam_fwhm_deg", "must be > 0");
            if let DeltaFLaw::Uniform(lo, hi) = s.delta_f_law {
                inv(&mut issues, lo < hi, "source.delta_f", "uniform law needs low < high");
            }
        }
        for (n, r) in self.rfi.iter().enumerate() {
            if r.bandwidth_hz > 10.0 * SEGMENT_BINS as f64 * i.fft_bin_width {
                issues.push(ConfigIssue::Invariant {
                    field: "rfi.bandwidth",
                    constraint: format!("rfi {n} wider than 10 spectral segments"),
                });
            }
            inv(
                &mut issues,
                (0.0..=1.0).contains(&r.on_fraction),
                "rfi.on_fraction",
                "must be in [0, 1]",
            );
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }

    /// Render the full configuration in the `key = value` text format.
    /// Parsing the output reproduces the configuration exactly.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let a = &self.array;
        let i = &self.instrument;
        let f = &self.filters;
        writeln!(out, "# pulse-pair scenario").unwrap();
        writeln!(out, "baseline_length = {}", a.baseline_length).unwrap();
        writeln!(out, "reference_frequency = {}", a.reference_frequency).unwrap();
        writeln!(out, "perpendicular_azimuth = {}", a.perpendicular_azimuth).unwrap();
        writeln!(out, "site_longitude = {}", a.site_longitude).unwrap();
        writeln!(out, "declination_pointing = {}", a.declination_pointing).unwrap();
        writeln!(out, "tau_int = {}", i.tau_int).unwrap();
        writeln!(out, "phase_detector_offset = {}", i.phase_detector_offset).unwrap();
        writeln!(out, "snr_threshold = {}", i.snr_threshold).unwrap();
        writeln!(out, "integration_interval = {}", i.integration_interval).unwrap();
        writeln!(out, "fft_bin_width = {}", i.fft_bin_width).unwrap();
        writeln!(out, "integration_time = {}", i.integration_time).unwrap();
        writeln!(out, "rf_bands = {}", ranges_to_text(&i.rf_bands)).unwrap();
        writeln!(out, "sample_rate = {}", i.sample_rate).unwrap();
        writeln!(out, "delta_f_low = {}", f.delta_f_range.0).unwrap();
        writeln!(out, "delta_f_high = {}", f.delta_f_range.1).unwrap();
        writeln!(out, "d_df_window = {}", f.d_df_window).unwrap();
        writeln!(out, "d_ew_window = {}", f.d_ew_window).unwrap();
        writeln!(out, "d_ew_offset = {}", f.d_ew_offset).unwrap();
        writeln!(out, "rfi_margin_segments = {}", f.rfi_margin_segments).unwrap();
        writeln!(out, "rfi_count_criterion = {}", f.rfi_count_criterion).unwrap();
        writeln!(out, "llsnr_pulse_threshold = {}", f.llsnr_pulse_threshold).unwrap();
        writeln!(out, "llsnr_pair_threshold = {}", f.llsnr_pair_threshold).unwrap();
        writeln!(out, "ra_bins_per_24h = {}", f.ra_bins_per_24h).unwrap();
        writeln!(out, "analyzed_ra_low = {}", f.analyzed_ra_range.0).unwrap();
        writeln!(out, "analyzed_ra_high = {}", f.analyzed_ra_range.1).unwrap();
        writeln!(out, "coverage = {}", ranges_to_text(&self.coverage)).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "synth_mode = {}", self.synth_mode).unwrap();
        writeln!(out, "noise_pairs = {}", self.noise_pairs).unwrap();
        writeln!(out, "bins_per_frame = {}", self.bins_per_frame).unwrap();
        writeln!(out, "frame_band_low = {}", self.frame_band_low).unwrap();
        for (n, s) in self.sources.iter().enumerate() {
            writeln!(out, "source.{n}.ra = {}", s.ra_hours).unwrap();
            writeln!(out, "source.{n}.snr = {}", s.amplitude_snr).unwrap();
            writeln!(out, "source.{n}.delta_f = {}", s.delta_f_law).unwrap();
            writeln!(out, "source.{n}.rate_per_hour = {}", s.rate_per_hour).unwrap();
            writeln!(out, "source.{n}.beam_fwhm_deg = {}", s.beam_fwhm_deg).unwrap();
            writeln!(out, "source.{n}.frequency = {}", s.frequency_law).unwrap();
        }
        for (n, r) in self.rfi.iter().enumerate() {
            writeln!(out, "rfi.{n}.frequency = {}", r.center_frequency).unwrap();
            writeln!(out, "rfi.{n}.bandwidth = {}", r.bandwidth_hz).unwrap();
            writeln!(out, "rfi.{n}.on_fraction = {}", r.on_fraction).unwrap();
            writeln!(out, "rfi.{n}.snr = {}", r.snr).unwrap();
            if let Some((lo, hi)) = r.active_mjd {
                writeln!(out, "rfi.{n}.active = {lo}-{hi}").unwrap();
            }
        }
        for (n, c) in self.continuum.iter().enumerate() {
            writeln!(out, "continuum.{n}.ra = {}", c.ra_hours).unwrap();
            writeln!(out, "continuum.{n}.power = {}", c.power_per_bin).unwrap();
            writeln!(out, "continuum.{n}.beam_fwhm_deg = {}", c.beam_fwhm_deg).unwrap();
        }
        out
    }
}

fn ranges_to_text(ranges: &[(f64, f64)]) -> String {
    ranges
        .iter()
        .map(|(lo, hi)| format!("{lo}-{hi}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parse and validate a configuration from its text form.
///
/// Omitted keys (other than `site_longitude`, which is site metrology and
/// has no standard value) fall back to the instrument defaults. All parse
/// and invariant problems are reported together.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut issues = Vec::new();
    let mut longitude: Option<f64> = None;
    let mut cfg = ScenarioConfig::defaults(0.0);
    // Source/RFI/continuum blocks are keyed by index; collect sparse
    // fields first, then assemble in index order.
    let mut sources: std::collections::BTreeMap<u32, SourceDraft> = Default::default();
    let mut rfis: std::collections::BTreeMap<u32, RfiDraft> = Default::default();
    let mut continua: std::collections::BTreeMap<u32, ContinuumDraft> = Default::default();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ConfigIssue::Malformed { line: line_no });
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| ConfigIssue::BadValue {
            line: line_no,
            key: key.to_string(),
            message,
        };

        macro_rules! set_f64 {
            ($target:expr) => {
                match value.parse::<f64>() {
                    Ok(v) => $target = v,
                    Err(e) => issues.push(bad(e.to_string())),
                }
            };
        }
        macro_rules! set_u32 {
            ($target:expr) => {
                match value.parse::<u32>() {
                    Ok(v) => $target = v,
                    Err(e) => issues.push(bad(e.to_string())),
                }
            };
        }

        match key {
            "baseline_length" => set_f64!(cfg.array.baseline_length),
            "reference_frequency" => set_f64!(cfg.array.reference_frequency),
            "perpendicular_azimuth" => set_f64!(cfg.array.perpendicular_azimuth),
            "site_longitude" => match value.parse::<f64>() {
                Ok(v) => longitude = Some(v),
                Err(e) => issues.push(bad(e.to_string())),
            },
            "declination_pointing" => set_f64!(cfg.array.declination_pointing),
            "tau_int" => set_f64!(cfg.instrument.tau_int),
            "phase_detector_offset" => set_f64!(cfg.instrument.phase_detector_offset),
            "snr_threshold" => set_f64!(cfg.instrument.snr_threshold),
            "integration_interval" => set_f64!(cfg.instrument.integration_interval),
            "fft_bin_width" => {
                match value.parse::<f64>() {
                    Ok(v) => {
                        cfg.instrument.fft_bin_width = v;
                        // keep the derived default consistent unless the
                        // file also sets integration_time explicitly later
                        if v > 0.0 {
                            cfg.instrument.integration_time = 1.0 / v;
                        }
                    }
                    Err(e) => issues.push(bad(e.to_string())),
                }
            }
            "integration_time" => set_f64!(cfg.instrument.integration_time),
            "rf_bands" => match parse_ranges(value) {
                Ok(v) => cfg.instrument.rf_bands = v,
                Err(e) => issues.push(bad(e)),
            },
            "sample_rate" => set_f64!(cfg.instrument.sample_rate),
            "delta_f_low" => set_f64!(cfg.filters.delta_f_range.0),
            "delta_f_high" => set_f64!(cfg.filters.delta_f_range.1),
            "d_df_window" => set_f64!(cfg.filters.d_df_window),
            "d_ew_window" => set_f64!(cfg.filters.d_ew_window),
            "d_ew_offset" => set_f64!(cfg.filters.d_ew_offset),
            "rfi_margin_segments" => set_u32!(cfg.filters.rfi_margin_segments),
            "rfi_count_criterion" => set_u32!(cfg.filters.rfi_count_criterion),
            "llsnr_pulse_threshold" => set_f64!(cfg.filters.llsnr_pulse_threshold),
            "llsnr_pair_threshold" => set_f64!(cfg.filters.llsnr_pair_threshold),
            "ra_bins_per_24h" => set_u32!(cfg.filters.ra_bins_per_24h),
            "analyzed_ra_low" => set_f64!(cfg.filters.analyzed_ra_range.0),
            "analyzed_ra_high" => set_f64!(cfg.filters.analyzed_ra_range.1),
            "coverage" => match parse_ranges(value) {
                Ok(v) => cfg.coverage = v,
                Err(e) => issues.push(bad(e)),
            },
            "seed" => match value.parse::<u64>() {
                Ok(v) => cfg.seed = v,
                Err(e) => issues.push(bad(e.to_string())),
            },
            "synth_mode" => match value.parse::<SynthMode>() {
                Ok(v) => cfg.synth_mode = v,
                Err(e) => issues.push(bad(e)),
            },
            "noise_pairs" => set_u32!(cfg.noise_pairs),
            "bins_per_frame" => set_u32!(cfg.bins_per_frame),
            "frame_band_low" => set_f64!(cfg.frame_band_low),
            _ => {
                if let Some(issue) = parse_indexed_key(
                    key, value, line_no, &mut sources, &mut rfis, &mut continua,
                ) {
                    issues.push(issue);
                }
            }
        }
    }

    for (n, draft) in sources {
        match draft.build(n) {
            Ok(s) => cfg.sources.push(s),
            Err(mut e) => issues.append(&mut e),
        }
    }
    for (n, draft) in rfis {
        match draft.build(n) {
            Ok(r) => cfg.rfi.push(r),
            Err(mut e) => issues.append(&mut e),
        }
    }
    for (n, draft) in continua {
        match draft.build(n) {
            Ok(c) => cfg.continuum.push(c),
            Err(mut e) => issues.append(&mut e),
        }
    }

    match longitude {
        Some(v) => cfg.array.site_longitude = v,
        None => issues.push(ConfigIssue::MissingKey("site_longitude")),
    }

    if !issues.is_empty() {
        return Err(ConfigError { issues });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_ranges(value: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        // split on the dash separating the two numbers; the low bound may
        // itself start with a minus sign
        let bytes = part.as_bytes();
        let mut split_at = None;
        for i in 1..bytes.len() {
            if bytes[i] == b'-' && bytes[i - 1] != b'e' && bytes[i - 1] != b'E' {
                split_at = Some(i);
                break;
            }
        }
        let Some(i) = split_at else {
            return Err(format!("expected `low-high` in `{part}`"));
        };
        let lo: f64 = part[..i].trim().parse().map_err(|e| format!("{e} in `{part}`"))?;
        let hi: f64 = part[i + 1..].trim().parse().map_err(|e| format!("{e} in `{part}`"))?;
        out.push((lo, hi));
    }
    if out.is_empty() {
        return Err("empty range list".into());
    }
    Ok(out)
}

#[derive(Default)]
struct SourceDraft {
    ra: Option<f64>,
    snr: Option<f64>,
    delta_f: Option<DeltaFLaw>,
    rate_per_hour: Option<f64>,
    beam_fwhm_deg: Option<f64>,
    frequency: Option<FrequencyLaw>,
}

impl SourceDraft {
    fn build(self, n: u32) -> Result<InjectedSource, Vec<ConfigIssue>> {
        let mut missing = Vec::new();
        if self.ra.is_none() {
            missing.push(ConfigIssue::Invariant {
                field: "source.ra",
                constraint: format!("source {n} is missing `ra`"),
            });
        }
        if self.snr.is_none() {
            missing.push(ConfigIssue::Invariant {
                field: "source.snr",
                constraint: format!("source {n} is missing `snr`"),
            });
        }
        if !missing.is_empty() {
            return Err(missing);
        }
        Ok(InjectedSource {
            ra_hours: self.ra.unwrap(),
            amplitude_snr: self.snr.unwrap(),
            delta_f_law: self.delta_f.unwrap_or(DeltaFLaw::Uniform(1.0, 7.0)),
            rate_per_hour: self.rate_per_hour.unwrap_or(1.0),
            beam_fwhm_deg: self.beam_fwhm_deg.unwrap_or(7.0),
            frequency_law: self.frequency.unwrap_or(FrequencyLaw::UniformBands),
        })
    }
}

#[derive(Default)]
struct RfiDraft {
    frequency: Option<f64>,
    bandwidth: Option<f64>,
    on_fraction: Option<f64>,
    snr: Option<f64>,
    active: Option<(f64, f64)>,
}

impl RfiDraft {
    fn build(self, n: u32) -> Result<RfiSource, Vec<ConfigIssue>> {
        match self.frequency {
            Some(f) => Ok(RfiSource {
                center_frequency: f,
                bandwidth_hz: self.bandwidth.unwrap_or(954.0),
                on_fraction: self.on_fraction.unwrap_or(1.0),
                snr: self.snr.unwrap_or(20.0),
                active_mjd: self.active,
            }),
            None => Err(vec![ConfigIssue::Invariant {
                field: "rfi.frequency",
                constraint: format!("rfi {n} is missing `frequency`"),
            }]),
        }
    }
}

#[derive(Default)]
struct ContinuumDraft {
    ra: Option<f64>,
    power: Option<f64>,
    beam_fwhm_deg: Option<f64>,
}

impl ContinuumDraft {
    fn build(self, n: u32) -> Result<ContinuumSource, Vec<ConfigIssue>> {
        match (self.ra, self.power) {
            (Some(ra), Some(power)) => Ok(ContinuumSource {
                ra_hours: ra,
                power_per_bin: power,
                beam_fwhm_deg: self.beam_fwhm_deg.unwrap_or(7.0),
            }),
            _ => Err(vec![ConfigIssue::Invariant {
                field: "continuum",
                constraint: format!("continuum {n} needs both `ra` and `power`"),
            }]),
        }
    }
}

fn parse_indexed_key(
    key: &str,
    value: &str,
    line: usize,
    sources: &mut std::collections::BTreeMap<u32, SourceDraft>,
    rfis: &mut std::collections::BTreeMap<u32, RfiDraft>,
    continua: &mut std::collections::BTreeMap<u32, ContinuumDraft>,
) -> Option<ConfigIssue> {
    let bad = |message: String| {
        Some(ConfigIssue::BadValue {
            line,
            key: key.to_string(),
            message,
        })
    };
    let unknown = || {
        Some(ConfigIssue::UnknownKey {
            line,
            key: key.to_string(),
        })
    };
    let mut parts = key.splitn(3, '.');
    let group = parts.next()?;
    let (Some(index), Some(field)) = (parts.next(), parts.next()) else {
        return unknown();
    };
    let Ok(n) = index.parse::<u32>() else {
        return unknown();
    };

    macro_rules! set_opt_f64 {
        ($slot:expr) => {
            match value.parse::<f64>() {
                Ok(v) => $slot = Some(v),
                Err(e) => return bad(e.to_string()),
            }
        };
    }

    match group {
        "source" => {
            let d = sources.entry(n).or_default();
            match field {
                "ra" => set_opt_f64!(d.ra),
                "snr" => set_opt_f64!(d.snr),
                "delta_f" => match value.parse::<DeltaFLaw>() {
                    Ok(v) => d.delta_f = Some(v),
                    Err(e) => return bad(e),
                },
                "rate_per_hour" => set_opt_f64!(d.rate_per_hour),
                "beam_fwhm_deg" => set_opt_f64!(d.beam_fwhm_deg),
                "frequency" => match value.parse::<FrequencyLaw>() {
                    Ok(v) => d.frequency = Some(v),
                    Err(e) => return bad(e),
                },
                _ => return unknown(),
            }
        }
        "rfi" => {
            let d = rfis.entry(n).or_default();
            match field {
                "frequency" => set_opt_f64!(d.frequency),
                "bandwidth" => set_opt_f64!(d.bandwidth),
                "on_fraction" => set_opt_f64!(d.on_fraction),
                "snr" => set_opt_f64!(d.snr),
                "active" => match parse_ranges(value) {
                    Ok(v) if v.len() == 1 => d.active = Some(v[0]),
                    Ok(_) => return bad("expected a single mjd range".into()),
                    Err(e) => return bad(e),
                },
                _ => return unknown(),
            }
        }
        "continuum" => {
            let d = continua.entry(n).or_default();
            match field {
                "ra" => set_opt_f64!(d.ra),
                "power" => set_opt_f64!(d.power),
                "beam_fwhm_deg" => set_opt_f64!(d.beam_fwhm_deg),
                _ => return unknown(),
            }
        }
        _ => return unknown(),
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        "site_longitude = -71.6267\n".to_string()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse_config(&minimal()).unwrap();
        assert_eq!(cfg.array.baseline_length, 33.0);
        assert_eq!(cfg.array.reference_frequency, 1425.0);
        let period = cfg.fringe_model().fringe_period().unwrap();
        assert!((period - 0.117).abs() < 1e-3);
        assert_eq!(cfg.filters.ra_bins_per_24h, 1600);
        assert_eq!(cfg.instrument.rf_bands.len(), 2);
    }

    #[test]
    fn missing_longitude_is_an_error() {
        let err = parse_config("baseline_length = 33.0\n").unwrap_err();
        assert!(err
            .issues
            .iter()
            .any(|i| matches!(i, ConfigIssue::MissingKey("site_longitude"))));
    }

    #[test]
    fn zero_baseline_rejected() {
        let text = format!("{}baseline_length = 0\n", minimal());
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("baseline_length"), "{msg}");
        assert!(msg.contains("> 0"), "{msg}");
    }

    #[test]
    fn overlapping_bands_rejected() {
        let text = format!("{}rf_bands = 1405-1424,1420-1455\n", minimal());
        let err = parse_config(&text).unwrap_err();
        assert!(err.issues.iter().any(|i| matches!(i, ConfigIssue::BandOverlap(..))));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{}no_such_key = 1\n", minimal());
        let err = parse_config(&text).unwrap_err();
        assert!(err.issues.iter().any(|i| matches!(i, ConfigIssue::UnknownKey { .. })));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# header\n\nsite_longitude = 0.0 # inline comment\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.array.site_longitude, 0.0);
    }

    #[test]
    fn config_text_roundtrip_is_exact() {
        let mut cfg = ScenarioConfig::defaults(-71.6267);
        cfg.seed = 99;
        cfg.sources.push(InjectedSource {
            ra_hours: 5.1675,
            amplitude_snr: 30.0,
            delta_f_law: DeltaFLaw::Uniform(3.0, 6.5),
            rate_per_hour: 12.5,
            beam_fwhm_deg: 7.0,
            frequency_law: FrequencyLaw::Comb(12.195121951219512),
        });
        cfg.rfi.push(RfiSource {
            center_frequency: 1431.25,
            bandwidth_hz: 954.0,
            on_fraction: 1.0,
            snr: 25.0,
            active_mjd: Some((60500.0, 60500.083)),
        });
        cfg.continuum.push(ContinuumSource {
            ra_hours: 5.5,
            power_per_bin: 0.2,
            beam_fwhm_deg: 7.0,
        });
        let text = cfg.to_config_text();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
        // canonical: render(parse(render(c))) == render(c)
        assert_eq!(text, back.to_config_text());
    }

    #[test]
    fn bad_integration_time_rejected() {
        let text = format!("{}integration_time = 1.0\n", minimal());
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("integration_time"));
    }

    #[test]
    fn negative_coverage_interval_rejected() {
        let text = format!("{}coverage = 60500.0-60490.0\n", minimal());
        assert!(parse_config(&text).is_err());
    }
}
