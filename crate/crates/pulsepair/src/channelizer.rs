//! FFT channelization of raw baseband samples, windowed SNR estimation and
//! both-antenna pulse thresholding.
//!
//! A unit-amplitude bin-centered tone yields unit bin magnitude (the
//! forward transform is scaled by 1/N), and SNR is the bin power over the
//! mean power of the surrounding 256-bin window with the center bin and
//! its two neighbors excluded.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::records::PulseDetection;
use crate::synth::ChannelFrame;

/// Nominal SNR noise window size in bins (one spectral segment).
pub const SNR_WINDOW_BINS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelizerError {
    #[error("fft length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("need at least {need} samples per antenna, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("east and west sample counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Antenna {
    East,
    West,
}

/// Transform the first `fft_length` samples of each antenna into one
/// [`ChannelFrame`].
///
/// Bins are ordered by ascending RF frequency from
/// `lo_frequency - sample_rate/2`; bin width is `sample_rate / fft_length`.
/// `lo_frequency` is MHz, `sample_rate` megasamples per second.
pub fn channelize(
    east: &[Complex64],
    west: &[Complex64],
    fft_length: usize,
    mjd: f64,
    lo_frequency: f64,
    sample_rate: f64,
) -> Result<ChannelFrame, ChannelizerError> {
    if !fft_length.is_power_of_two() {
        return Err(ChannelizerError::NotPowerOfTwo(fft_length));
    }
    if east.len() != west.len() {
        return Err(ChannelizerError::LengthMismatch(east.len(), west.len()));
    }
    if east.len() < fft_length {
        return Err(ChannelizerError::TooFewSamples {
            need: fft_length,
            got: east.len(),
        });
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_length);
    let scale = 1.0 / fft_length as f64;
    let transform = |samples: &[Complex64]| -> Vec<Complex64> {
        let mut buf = samples[..fft_length].to_vec();
        fft.process(&mut buf);
        // reorder so bin 0 is the most negative baseband frequency
        let half = fft_length / 2;
        let mut out = Vec::with_capacity(fft_length);
        out.extend_from_slice(&buf[half..]);
        out.extend_from_slice(&buf[..half]);
        for z in &mut out {
            *z *= scale;
        }
        out
    };

    Ok(ChannelFrame {
        mjd,
        east: transform(east),
        west: transform(west),
        bin0_frequency: lo_frequency - sample_rate / 2.0,
        bin_width: sample_rate * 1e6 / fft_length as f64,
    })
}

fn window_bounds(bin: usize, n: usize) -> (usize, usize) {
    // nominal 256-bin window [bin-128, bin+127]; shrink symmetrically at
    // band edges, falling back to a clamped window for the outermost bins
    if bin >= SNR_WINDOW_BINS / 2 && bin + SNR_WINDOW_BINS / 2 - 1 < n {
        (bin - SNR_WINDOW_BINS / 2, bin + SNR_WINDOW_BINS / 2 - 1)
    } else {
        let ext = bin.min(n - 1 - bin);
        if ext >= 2 {
            (bin - ext, bin + ext)
        } else {
            (bin.saturating_sub(SNR_WINDOW_BINS / 2), (bin + SNR_WINDOW_BINS / 2 - 1).min(n - 1))
        }
    }
}

fn window_mean_power(bins: &[Complex64], bin: usize) -> f64 {
    let (lo, hi) = window_bounds(bin, bins.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, z) in bins.iter().enumerate().take(hi + 1).skip(lo) {
        if i + 1 >= bin && i <= bin + 1 {
            continue; // exclude center and immediate neighbors
        }
        sum += z.norm_sqr();
        count += 1;
    }
    if count == 0 {
        return f64::INFINITY;
    }
    sum / count as f64
}

/// SNR in dB of one bin against its local noise window.
pub fn estimate_snr(frame: &ChannelFrame, bin_index: usize, antenna: Antenna) -> f64 {
    let bins = match antenna {
        Antenna::East => &frame.east,
        Antenna::West => &frame.west,
    };
    let mean = window_mean_power(bins, bin_index);
    10.0 * (bins[bin_index].norm_sqr() / mean).log10()
}

/// Emit one detection per bin whose SNR meets `threshold_db` on BOTH
/// antennas. Detections are ordered by bin index; phases are the bin
/// arguments (`atan2(Im, Re)`).
pub fn detect_pulses(frame: &ChannelFrame, threshold_db: f64) -> Vec<PulseDetection> {
    let n = frame.len();
    if n == 0 || threshold_db == f64::INFINITY {
        return Vec::new();
    }
    let thr_lin = 10f64.powf(threshold_db / 10.0);

    // prefix sums of bin power make the sliding noise window O(1) per bin
    let power_prefix = |bins: &[Complex64]| {
        let mut p = Vec::with_capacity(n + 1);
        p.push(0.0);
        let mut acc = 0.0;
        for z in bins {
            acc += z.norm_sqr();
            p.push(acc);
        }
        p
    };
    let pe = power_prefix(&frame.east);
    let pw = power_prefix(&frame.west);
    let mean_at = |prefix: &[f64], bins: &[Complex64], bin: usize| -> f64 {
        let (lo, hi) = window_bounds(bin, n);
        let mut sum = prefix[hi + 1] - prefix[lo];
        let mut count = hi + 1 - lo;
        let ex_lo = bin.saturating_sub(1).max(lo);
        let ex_hi = (bin + 1).min(hi);
        for i in ex_lo..=ex_hi {
            sum -= bins[i].norm_sqr();
            count -= 1;
        }
        if count == 0 {
            f64::INFINITY
        } else {
            sum / count as f64
        }
    };

    let mut detections = Vec::new();
    for i in 0..n {
        let p_east = frame.east[i].norm_sqr();
        let mean_east = mean_at(&pe, &frame.east, i);
        if p_east < thr_lin * mean_east {
            continue;
        }
        let p_west = frame.west[i].norm_sqr();
        let mean_west = mean_at(&pw, &frame.west, i);
        if p_west < thr_lin * mean_west {
            continue;
        }
        let bin = frame.global_bin_index(i);
        detections.push(PulseDetection {
            mjd: frame.mjd,
            rf_frequency: frame.bin_frequency(i),
            snr_east: 10.0 * (p_east / mean_east).log10(),
            snr_west: 10.0 * (p_west / mean_west).log10(),
            phase_east: frame.east[i].im.atan2(frame.east[i].re),
            phase_west: frame.west[i].im.atan2(frame.west[i].re),
            bin_index: bin,
            segment_index: PulseDetection::segment_of(bin),
        });
    }
    detections
}
