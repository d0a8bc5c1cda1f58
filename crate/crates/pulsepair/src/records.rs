//! Pulse detection and pulse-pair record types, their line-oriented text
//! format, and 4-hour MJD file windows.
//!
//! One record per line under a `PPRv1` header, fields in fixed order,
//! single-space separated. Real values are stored at fixed decimal
//! precision (MJD, frequencies and RA to 1e-6; phases, SNRs and
//! log-likelihoods to 1e-4) so that a decoded record re-encodes to the
//! identical line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::SEGMENT_BINS;

/// File format version header.
pub const RECORD_HEADER: &str = "PPRv1";

/// Number of 4-hour file windows per MJD day.
pub const WINDOWS_PER_DAY: i64 = 6;

/// One FFT bin exceeding the detection threshold on both antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseDetection {
    /// Integration timestamp, MJD days.
    pub mjd: f64,
    /// RF frequency of the bin center, MHz.
    pub rf_frequency: f64,
    /// East antenna SNR, dB.
    pub snr_east: f64,
    /// West antenna SNR, dB.
    pub snr_west: f64,
    /// East antenna bin phase, radians in [-pi, pi).
    pub phase_east: f64,
    /// West antenna bin phase, radians in [-pi, pi).
    pub phase_west: f64,
    /// Absolute bin index (bin center frequency / bin width).
    pub bin_index: u32,
    /// 256-bin spectral segment containing `bin_index`.
    pub segment_index: u32,
}

impl PulseDetection {
    /// Segment index implied by a bin index.
    pub fn segment_of(bin_index: u32) -> u32 {
        bin_index / SEGMENT_BINS
    }
}

/// Two simultaneous detections separated in RF frequency.
///
/// `first` is always the lower-frequency member, so `delta_f > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsePairRecord {
    pub first: PulseDetection,
    pub second: PulseDetection,
    /// Frequency separation, MHz.
    pub delta_f: f64,
    /// West-minus-East phase of the first pulse, radians.
    pub d_ew_phi_first: f64,
    /// West-minus-East phase of the second pulse, radians.
    pub d_ew_phi_second: f64,
    /// Instrument-delay corrected pair phase difference, radians.
    pub d_df_d_ew_phi: f64,
    /// Composite SNR log10 likelihood of the first pulse.
    pub llsnr_pulse: f64,
    /// Composite SNR log10 likelihood of all four pulse SNRs.
    pub llsnr_pair: f64,
    /// Right ascension at the integration time, hours in [0, 24).
    pub ra: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: field `{field}`: {message}")]
    BadField {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("missing or wrong header: expected `{RECORD_HEADER}`")]
    BadHeader,
    #[error("io: {0}")]
    Io(String),
}

fn q6(x: f64) -> f64 {
    format!("{x:.6}").parse().unwrap()
}

fn q4(x: f64) -> f64 {
    format!("{x:.4}").parse().unwrap()
}

impl PulsePairRecord {
    /// The record with every real field rounded to its stored precision.
    /// `decode(encode(r))` equals `r.quantized()` field for field.
    pub fn quantized(&self) -> Self {
        let qdet = |d: &PulseDetection| PulseDetection {
            mjd: q6(d.mjd),
            rf_frequency: q6(d.rf_frequency),
            snr_east: q4(d.snr_east),
            snr_west: q4(d.snr_west),
            phase_east: q4(d.phase_east),
            phase_west: q4(d.phase_west),
            bin_index: d.bin_index,
            segment_index: PulseDetection::segment_of(d.bin_index),
        };
        PulsePairRecord {
            first: qdet(&self.first),
            second: qdet(&self.second),
            delta_f: q6(self.delta_f),
            d_ew_phi_first: q4(self.d_ew_phi_first),
            d_ew_phi_second: q4(self.d_ew_phi_second),
            d_df_d_ew_phi: q4(self.d_df_d_ew_phi),
            llsnr_pulse: q4(self.llsnr_pulse),
            llsnr_pair: q4(self.llsnr_pair),
            ra: q6(self.ra),
        }
    }
}

/// Index of the 4-hour file window containing `mjd` (half-open windows,
/// boundary belongs to the later window).
pub fn file_window_index(mjd: f64) -> i64 {
    (mjd * WINDOWS_PER_DAY as f64).floor() as i64
}

/// MJD range `[low, high)` of file window `index`.
pub fn file_window_range(index: i64) -> (f64, f64) {
    (
        index as f64 / WINDOWS_PER_DAY as f64,
        (index + 1) as f64 / WINDOWS_PER_DAY as f64,
    )
}

/// Render one record as its canonical text line.
pub fn encode_pair_record(r: &PulsePairRecord) -> String {
    format!(
        "{:.6} {:.6} {:.6} {:.6} {:.4} {:.4} {:.4} {:.4} {} {:.6} {:.4} {:.4} {:.4} {:.4} {} {:.4} {:.4} {:.4} {:.4} {:.4}",
        r.first.mjd,
        r.ra,
        r.delta_f,
        r.first.rf_frequency,
        r.first.snr_east,
        r.first.snr_west,
        r.first.phase_east,
        r.first.phase_west,
        r.first.bin_index,
        r.second.rf_frequency,
        r.second.snr_east,
        r.second.snr_west,
        r.second.phase_east,
        r.second.phase_west,
        r.second.bin_index,
        r.d_ew_phi_first,
        r.d_ew_phi_second,
        r.d_df_d_ew_phi,
        r.llsnr_pulse,
        r.llsnr_pair,
    )
}

const FIELDS: usize = 20;

/// Parse one record line. Errors are local to the line.
pub fn decode_pair_record(line: &str) -> Result<PulsePairRecord, RecordError> {
    decode_line(line, 0)
}

fn decode_line(line: &str, line_no: usize) -> Result<PulsePairRecord, RecordError> {
    let parts: Vec<&str> = line.split_ascii_whitespace().collect();
    if parts.len() != FIELDS {
        return Err(RecordError::FieldCount {
            line: line_no,
            expected: FIELDS,
            found: parts.len(),
        });
    }
    fn f(parts: &[&str], i: usize, field: &'static str, line: usize) -> Result<f64, RecordError> {
        parts[i].parse().map_err(|e: std::num::ParseFloatError| RecordError::BadField {
            line,
            field,
            message: e.to_string(),
        })
    }
    fn u(parts: &[&str], i: usize, field: &'static str, line: usize) -> Result<u32, RecordError> {
        parts[i].parse().map_err(|e: std::num::ParseIntError| RecordError::BadField {
            line,
            field,
            message: e.to_string(),
        })
    }

    let mjd = f(&parts, 0, "mjd", line_no)?;
    let ra = f(&parts, 1, "ra", line_no)?;
    let delta_f = f(&parts, 2, "delta_f", line_no)?;
    let bin1 = u(&parts, 8, "first.bin_index", line_no)?;
    let bin2 = u(&parts, 14, "second.bin_index", line_no)?;
    let first = PulseDetection {
        mjd,
        rf_frequency: f(&parts, 3, "first.rf_frequency", line_no)?,
        snr_east: f(&parts, 4, "first.snr_east", line_no)?,
        snr_west: f(&parts, 5, "first.snr_west", line_no)?,
        phase_east: f(&parts, 6, "first.phase_east", line_no)?,
        phase_west: f(&parts, 7, "first.phase_west", line_no)?,
        bin_index: bin1,
        segment_index: PulseDetection::segment_of(bin1),
    };
    let second = PulseDetection {
        mjd,
        rf_frequency: f(&parts, 9, "second.rf_frequency", line_no)?,
        snr_east: f(&parts, 10, "second.snr_east", line_no)?,
        snr_west: f(&parts, 11, "second.snr_west", line_no)?,
        phase_east: f(&parts, 12, "second.phase_east", line_no)?,
        phase_west: f(&parts, 13, "second.phase_west", line_no)?,
        bin_index: bin2,
        segment_index: PulseDetection::segment_of(bin2),
    };
    Ok(PulsePairRecord {
        first,
        second,
        delta_f,
        d_ew_phi_first: f(&parts, 15, "d_ew_phi_first", line_no)?,
        d_ew_phi_second: f(&parts, 16, "d_ew_phi_second", line_no)?,
        d_df_d_ew_phi: f(&parts, 17, "d_df_d_ew_phi", line_no)?,
        llsnr_pulse: f(&parts, 18, "llsnr_pulse", line_no)?,
        llsnr_pair: f(&parts, 19, "llsnr_pair", line_no)?,
        ra,
    })
}

/// Write a record file: header line then one line per record.
pub fn write_record_file<W: Write>(mut w: W, records: &[PulsePairRecord]) -> std::io::Result<()> {
    writeln!(w, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(w, "{}", encode_pair_record(r))?;
    }
    Ok(())
}

/// Read a record file. Malformed lines are reported individually and do
/// not abort the read.
pub fn read_record_file<R: Read>(r: R) -> Result<(Vec<PulsePairRecord>, Vec<RecordError>), RecordError> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or(RecordError::BadHeader)?
        .map_err(|e| RecordError::Io(e.to_string()))?;
    if header.trim() != RECORD_HEADER {
        return Err(RecordError::BadHeader);
    }
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| RecordError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_line(&line, i + 2) {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(e),
        }
    }
    Ok((records, errors))
}

pub fn read_record_path(path: &Path) -> Result<(Vec<PulsePairRecord>, Vec<RecordError>), RecordError> {
    let file = std::fs::File::open(path).map_err(|e| RecordError::Io(format!("{}: {e}", path.display())))?;
    read_record_file(file)
}

/// The reference pair used across tests: MJD 60564.439135, first pulse
/// 1419.207393 MHz, separation 2.253599 MHz, RA 5.160117 hr.
#[cfg(test)]
pub(crate) fn sample_record() -> PulsePairRecord {
    use crate::pairer::{llsnr_pair, llsnr_pulse};
    let f1 = 1419.207393;
    let f2 = f1 + 2.253599;
    let bw = 62.5e6 / (1u64 << 24) as f64;
    let bin1 = (f1 * 1e6 / bw).round() as u32;
    let bin2 = (f2 * 1e6 / bw).round() as u32;
    let first = PulseDetection {
        mjd: 60564.439135,
        rf_frequency: f1,
        snr_east: 11.79,
        snr_west: 11.44,
        phase_east: 0.2,
        phase_west: 0.2701,
        bin_index: bin1,
        segment_index: PulseDetection::segment_of(bin1),
    };
    let second = PulseDetection {
        mjd: 60564.439135,
        rf_frequency: f2,
        snr_east: 9.4,
        snr_west: 9.9,
        phase_east: -1.0,
        phase_west: 0.6412,
        bin_index: bin2,
        segment_index: PulseDetection::segment_of(bin2),
    };
    PulsePairRecord {
        first,
        second,
        delta_f: 2.253599,
        d_ew_phi_first: 0.0701,
        d_ew_phi_second: 1.6412,
        d_df_d_ew_phi: 0.41,
        llsnr_pulse: llsnr_pulse(11.79, 11.44),
        llsnr_pair: llsnr_pair([11.79, 11.44, 9.4, 9.9]),
        ra: 5.160117,
    }
}
