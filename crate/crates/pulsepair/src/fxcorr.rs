//! Band-averaged FX cross-correlation: continuum power and complex
//! visibility traces versus time/RA.
//!
//! Channelization is the F step; this module is the X step: per output
//! point the East and West spectra are cross-multiplied and averaged over
//! the band and over `integration_count` frames. Visibility phase follows
//! the West-minus-East convention of the rest of the pipeline, so a West
//! phase advance of `phi` shows up as visibility phase `-phi`.

use num_complex::Complex64;
use thiserror::Error;

use crate::synth::ChannelFrame;

#[derive(Debug, Error, PartialEq)]
pub enum FxError {
    #[error("empty frame stream")]
    EmptyStream,
    #[error("integration_count must be >= 1")]
    BadIntegrationCount,
    #[error("frame bin layouts differ within one integration")]
    MixedLayout,
}

/// One integrated correlator output point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityPoint {
    /// MJD of the first frame in the integration.
    pub mjd: f64,
    /// Mean East bin power over band and frames.
    pub power_east: f64,
    /// Mean West bin power over band and frames.
    pub power_west: f64,
    /// Mean of `east x conj(west)` over band and frames.
    pub visibility: Complex64,
}

/// Correlate a frame stream into band-averaged visibility points, one per
/// `integration_count` consecutive frames (a trailing short group is
/// emitted too).
pub fn cross_correlate<I>(frames: I, integration_count: usize) -> Result<Vec<VisibilityPoint>, FxError>
where
    I: IntoIterator<Item = ChannelFrame>,
{
    if integration_count == 0 {
        return Err(FxError::BadIntegrationCount);
    }
    let mut out = Vec::new();
    let mut acc_power_east = 0.0;
    let mut acc_power_west = 0.0;
    let mut acc_vis = Complex64::new(0.0, 0.0);
    let mut acc_bins = 0usize;
    let mut in_group = 0usize;
    let mut group_mjd = 0.0;
    let mut seen = false;

    for frame in frames {
        seen = true;
        if in_group == 0 {
            group_mjd = frame.mjd;
        }
        for (e, w) in frame.east.iter().zip(frame.west.iter()) {
            acc_power_east += e.norm_sqr();
            acc_power_west += w.norm_sqr();
            acc_vis += e * w.conj();
        }
        acc_bins += frame.len();
        in_group += 1;
        if in_group == integration_count {
            let n = acc_bins as f64;
            out.push(VisibilityPoint {
                mjd: group_mjd,
                power_east: acc_power_east / n,
                power_west: acc_power_west / n,
                visibility: acc_vis / n,
            });
            acc_power_east = 0.0;
            acc_power_west = 0.0;
            acc_vis = Complex64::new(0.0, 0.0);
            acc_bins = 0;
            in_group = 0;
        }
    }
    if in_group > 0 {
        let n = acc_bins as f64;
        out.push(VisibilityPoint {
            mjd: group_mjd,
            power_east: acc_power_east / n,
            power_west: acc_power_west / n,
            visibility: acc_vis / n,
        });
    }
    if !seen {
        return Err(FxError::EmptyStream);
    }
    Ok(out)
}

/// Per-channel mode: average `east x conj(west)` per bin over
/// `integration_count` frames. Returns `(mjd, spectrum)` per group.
pub fn cross_correlate_channels<I>(
    frames: I,
    integration_count: usize,
) -> Result<Vec<(f64, Vec<Complex64>)>, FxError>
where
    I: IntoIterator<Item = ChannelFrame>,
{
    if integration_count == 0 {
        return Err(FxError::BadIntegrationCount);
    }
    let mut out: Vec<(f64, Vec<Complex64>)> = Vec::new();
    let mut acc: Vec<Complex64> = Vec::new();
    let mut in_group = 0usize;
    let mut group_mjd = 0.0;
    let mut seen = false;
    for frame in frames {
        seen = true;
        if in_group == 0 {
            group_mjd = frame.mjd;
            acc = vec![Complex64::new(0.0, 0.0); frame.len()];
        }
        if acc.len() != frame.len() {
            return Err(FxError::MixedLayout);
        }
        for (a, (e, w)) in acc.iter_mut().zip(frame.east.iter().zip(frame.west.iter())) {
            *a += e * w.conj();
        }
        in_group += 1;
        if in_group == integration_count {
            for a in &mut acc {
                *a /= integration_count as f64;
            }
            out.push((group_mjd, std::mem::take(&mut acc)));
            in_group = 0;
        }
    }
    if in_group > 0 {
        for a in &mut acc {
            *a /= in_group as f64;
        }
        out.push((group_mjd, acc));
    }
    if !seen {
        return Err(FxError::EmptyStream);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise_bins(rng: &mut ChaCha12Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im) * 0.5f64.sqrt()
            })
            .collect()
    }

    fn frame(east: Vec<Complex64>, west: Vec<Complex64>, mjd: f64) -> ChannelFrame {
        ChannelFrame {
            mjd,
            east,
            west,
            bin0_frequency: 1415.0,
            bin_width: 3.7253,
        }
    }

    #[test]
    fn identical_antennas_give_real_visibility_equal_to_power() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let e = noise_bins(&mut rng, 2048);
        let f = frame(e.clone(), e, 60500.0);
        let out = cross_correlate(vec![f], 1).unwrap();
        let p = out[0];
        assert_abs_diff_eq!(p.visibility.im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.visibility.re, p.power_east, epsilon = 1e-12);
        assert_abs_diff_eq!(p.power_east, p.power_west, epsilon = 1e-12);
    }

    #[test]
    fn independent_noise_decorrelates_with_integration() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n_frames = 64;
        let bins = 2048;
        let frames: Vec<ChannelFrame> = (0..n_frames)
            .map(|k| {
                frame(
                    noise_bins(&mut rng, bins),
                    noise_bins(&mut rng, bins),
                    60500.0 + k as f64 * 1e-5,
                )
            })
            .collect();
        let out = cross_correlate(frames, n_frames).unwrap();
        assert_eq!(out.len(), 1);
        let p = out[0];
        let bound = 3.0 / ((bins * n_frames) as f64).sqrt();
        assert!(
            p.visibility.norm() / p.power_east < bound,
            "|vis|/power = {} exceeds {bound}",
            p.visibility.norm() / p.power_east
        );
    }

    #[test]
    fn delayed_antenna_gives_phase_slope_across_band() {
        // West delayed by tau: per-bin visibility phase = +2 pi f tau
        // (E x conj(W) undoes the West phase lag), so the slope across the
        // band is 2 pi tau per Hz.
        let tau_us = 0.002; // 2 ns
        let bins = 4096;
        let bw_hz = 15000.0;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let common = noise_bins(&mut rng, bins);
        let f0_mhz = 1415.0;
        let east = common.clone();
        let west: Vec<Complex64> = common
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let f_mhz = f0_mhz + i as f64 * bw_hz * 1e-6;
                z * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f_mhz * tau_us)
            })
            .collect();
        let f = ChannelFrame {
            mjd: 60500.0,
            east,
            west,
            bin0_frequency: f0_mhz,
            bin_width: bw_hz,
        };
        let out = cross_correlate_channels(vec![f], 1).unwrap();
        let spec = &out[0].1;
        // regression of unwrapped phase against bin index
        let mut prev = spec[0].arg();
        let mut unwrapped = vec![prev];
        for z in spec.iter().skip(1) {
            let mut ph = z.arg();
            while ph - prev > std::f64::consts::PI {
                ph -= 2.0 * std::f64::consts::PI;
            }
            while ph - prev < -std::f64::consts::PI {
                ph += 2.0 * std::f64::consts::PI;
            }
            unwrapped.push(ph);
            prev = ph;
        }
        let n = unwrapped.len() as f64;
        let mean_x = (n - 1.0) / 2.0;
        let mean_y = unwrapped.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for (i, y) in unwrapped.iter().enumerate() {
            sxy += (i as f64 - mean_x) * (y - mean_y);
            sxx += (i as f64 - mean_x).powi(2);
        }
        let slope_per_bin = sxy / sxx;
        let slope_per_hz = slope_per_bin / bw_hz;
        let expected = 2.0 * std::f64::consts::PI * tau_us * 1e-6;
        assert!(
            ((slope_per_hz - expected) / expected).abs() < 0.02,
            "slope {slope_per_hz} vs {expected}"
        );
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert_eq!(cross_correlate(Vec::<ChannelFrame>::new(), 1).unwrap_err(), FxError::EmptyStream);
        assert_eq!(
            cross_correlate(vec![frame(vec![], vec![], 0.0)], 0).unwrap_err(),
            FxError::BadIntegrationCount
        );
    }
}
