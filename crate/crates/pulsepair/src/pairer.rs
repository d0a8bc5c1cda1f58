//! Pulse-pair formation and per-pair metrology: frequency pairing,
//! instrument-delay phase correction, composite-SNR log-likelihood, RA
//! assignment and 4-hour file partitioning.

use std::collections::BTreeMap;

use crate::config::ArrayConfig;
use crate::records::{file_window_index, PulseDetection, PulsePairRecord};
use crate::skygeom::mjd_to_lst;
use crate::wrap_phase;

/// log10(e); converts a natural-log exponential tail to log10 likelihood.
pub const LOG10_E: f64 = 0.4343;

/// Zero reference of the single-pulse likelihood: two antenna SNRs at
/// exactly 8.5 dB. 6.149 = 2 * 0.4343 * 10^0.85.
pub const LLSNR_PULSE_ZERO: f64 = 6.149;

/// log10 likelihood that both antenna SNRs of one pulse exceed the
/// observed values under an exponential (Rayleigh amplitude) noise power
/// model, referenced to zero at 8.5 dB on both antennas:
///
/// `LLSNR = 6.149 - 0.4343 (10^(SNR_East/10) + 10^(SNR_West/10))`
pub fn llsnr_pulse(snr_east: f64, snr_west: f64) -> f64 {
    LLSNR_PULSE_ZERO - LOG10_E * (10f64.powf(snr_east / 10.0) + 10f64.powf(snr_west / 10.0))
}

/// Pair composite: the sum of exactly two single-pulse likelihoods, so the
/// zero reference is four SNRs at 8.5 dB.
pub fn llsnr_pair(snrs: [f64; 4]) -> f64 {
    llsnr_pulse(snrs[0], snrs[1]) + llsnr_pulse(snrs[2], snrs[3])
}

/// Instrument-delay corrected pair phase difference, radians in [-pi, pi):
///
/// `corrected = wrap(measured + 2 pi * delta_f * tau_int)`
///
/// with `delta_f` in MHz and `tau_int` in microseconds. The synthesizer
/// applies the physical delay term `-2 pi f tau_int` to West bin phases, so
/// this correction cancels the instrument contribution from pair
/// differences exactly.
pub fn correct_pair_phase(measured_difference: f64, delta_f: f64, tau_int: f64) -> f64 {
    wrap_phase(measured_difference + 2.0 * std::f64::consts::PI * delta_f * tau_int)
}

/// Form all unordered pulse pairs from one integration's detections whose
/// frequency separation lies in `delta_f_range` (MHz, inclusive), and fill
/// the per-pair phase and likelihood measurements.
///
/// The lower-frequency detection becomes `first`; the West-minus-East
/// phase is computed per pulse; the pair difference is corrected with
/// `tau_int`. RA is assigned later (see [`assign_ra_and_partition`]).
pub fn form_pairs(
    detections: &[PulseDetection],
    delta_f_range: (f64, f64),
    tau_int: f64,
) -> Vec<PulsePairRecord> {
    let mut out = Vec::new();
    for i in 0..detections.len() {
        for j in (i + 1)..detections.len() {
            let (a, b) = (&detections[i], &detections[j]);
            debug_assert_eq!(a.mjd, b.mjd, "pairing requires co-temporal detections");
            let (first, second) = if a.rf_frequency <= b.rf_frequency {
                (*a, *b)
            } else {
                (*b, *a)
            };
            let delta_f = second.rf_frequency - first.rf_frequency;
            if delta_f < delta_f_range.0 || delta_f > delta_f_range.1 {
                continue;
            }
            let d_ew_first = wrap_phase(first.phase_west - first.phase_east);
            let d_ew_second = wrap_phase(second.phase_west - second.phase_east);
            out.push(PulsePairRecord {
                first,
                second,
                delta_f,
                d_ew_phi_first: d_ew_first,
                d_ew_phi_second: d_ew_second,
                d_df_d_ew_phi: correct_pair_phase(d_ew_second - d_ew_first, delta_f, tau_int),
                llsnr_pulse: llsnr_pulse(first.snr_east, first.snr_west),
                llsnr_pair: llsnr_pair([
                    first.snr_east,
                    first.snr_west,
                    second.snr_east,
                    second.snr_west,
                ]),
                ra: 0.0,
            });
        }
    }
    out
}

/// Fill each record's RA from its MJD and group records into 4-hour file
/// windows (`floor(mjd * 6)`).
///
/// With the perpendicular plane at azimuth 180 degrees the RA of a record
/// is the local sidereal time; an azimuth offset shifts the mapping by its
/// equatorial-projected hour angle (offset degrees / 15).
pub fn assign_ra_and_partition(
    mut records: Vec<PulsePairRecord>,
    array: &ArrayConfig,
) -> Result<BTreeMap<i64, Vec<PulsePairRecord>>, crate::skygeom::SkyGeomError> {
    let azimuth_shift_hours = (array.perpendicular_azimuth - 180.0) / 15.0;
    let mut windows: BTreeMap<i64, Vec<PulsePairRecord>> = BTreeMap::new();
    for rec in records.drain(..) {
        let lst = mjd_to_lst(rec.first.mjd, array.site_longitude)?;
        let mut rec = rec;
        rec.ra = crate::wrap_hours(lst - azimuth_shift_hours);
        windows.entry(file_window_index(rec.first.mjd)).or_default().push(rec);
    }
    Ok(windows)
}

/// RA for a single MJD under the same convention as
/// [`assign_ra_and_partition`].
pub fn record_ra(mjd: f64, array: &ArrayConfig) -> Result<f64, crate::skygeom::SkyGeomError> {
    let lst = mjd_to_lst(mjd, array.site_longitude)?;
    Ok(crate::wrap_hours(lst - (array.perpendicular_azimuth - 180.0) / 15.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn det(mjd: f64, f: f64, snr: f64, ph_e: f64, ph_w: f64) -> PulseDetection {
        let bw = 62.5e6 / (1u64 << 24) as f64;
        let bin = (f * 1e6 / bw).round() as u32;
        PulseDetection {
            mjd,
            rf_frequency: f,
            snr_east: snr,
            snr_west: snr,
            phase_east: ph_e,
            phase_west: ph_w,
            bin_index: bin,
            segment_index: PulseDetection::segment_of(bin),
        }
    }

    #[test]
    fn llsnr_pulse_reference_values() {
        assert_abs_diff_eq!(llsnr_pulse(8.5, 8.5), 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(llsnr_pulse(11.79, 11.44), -6.46, epsilon = 1e-2);
        assert_abs_diff_eq!(llsnr_pulse(10.0, 10.0), -2.537, epsilon = 1e-3);
    }

    #[test]
    fn llsnr_zero_reference_is_consistent() {
        // 6.149 equals 2 * 0.4343 * 10^0.85 to four significant digits.
        let derived = 2.0 * LOG10_E * 10f64.powf(0.85);
        assert_abs_diff_eq!(LLSNR_PULSE_ZERO, derived, epsilon = 5e-4);
    }

    #[test]
    fn llsnr_pair_is_additive_exactly() {
        let snrs = [11.79, 11.44, 8.5, 8.5];
        assert_eq!(
            llsnr_pair(snrs),
            llsnr_pulse(11.79, 11.44) + llsnr_pulse(8.5, 8.5)
        );
        assert_abs_diff_eq!(llsnr_pair([8.5; 4]), 0.0, epsilon = 2e-3);
        assert_abs_diff_eq!(llsnr_pair(snrs), -6.46, epsilon = 1e-2);
    }

    #[test]
    fn llsnr_pair_decreases_with_any_snr() {
        let base = llsnr_pair([9.0, 9.5, 10.0, 10.5]);
        for i in 0..4 {
            let mut s = [9.0, 9.5, 10.0, 10.5];
            s[i] += 0.5;
            assert!(llsnr_pair(s) < base, "raising snr {i} must lower the likelihood");
        }
    }

    #[test]
    fn correction_reproduces_reference_pair() {
        // measured difference 1.5712 rad at delta_f 2.253599 MHz with
        // tau_int -0.082 us lands at +0.410 rad.
        let v = correct_pair_phase(1.5712, 2.253599, -0.082);
        assert_abs_diff_eq!(v, 0.410, epsilon = 1e-3);
    }

    #[test]
    fn correction_vanishes_with_delta_f() {
        assert_abs_diff_eq!(correct_pair_phase(0.7, 1e-12, -0.082), 0.7, epsilon = 1e-9);
    }

    #[test]
    fn correction_wraps_full_turn_to_zero() {
        // delta_f * tau_int = -1 cycle exactly
        let v = correct_pair_phase(0.0, 1.0 / 0.082, -0.082);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn correction_rejects_common_mode_rotation() {
        // rotating both pulse phases by the same constant leaves the
        // corrected difference unchanged
        let d1 = 0.3;
        let d2 = -0.2;
        let base = correct_pair_phase(d2 - d1, 3.1, -0.082);
        let rot = correct_pair_phase((d2 + 1.234) - (d1 + 1.234), 3.1, -0.082);
        assert_abs_diff_eq!(base, rot, epsilon = 1e-12);
    }

    #[test]
    fn pairs_respect_delta_f_range() {
        let dets = vec![
            det(60500.0, 1410.0, 14.0, 0.0, 0.1),
            det(60500.0, 1412.0, 14.0, 0.0, 0.1),
            det(60500.0, 1430.0, 14.0, 0.0, 0.1),
        ];
        let pairs = form_pairs(&dets, (1e-6, 7.0), -0.082);
        assert_eq!(pairs.len(), 1);
        assert_abs_diff_eq!(pairs[0].delta_f, 2.0, epsilon = 1e-12);
        assert_eq!(pairs[0].first.rf_frequency, 1410.0);
    }

    #[test]
    fn single_detection_yields_no_pairs() {
        let dets = vec![det(60500.0, 1410.0, 14.0, 0.0, 0.1)];
        assert!(form_pairs(&dets, (1e-6, 7.0), -0.082).is_empty());
    }

    #[test]
    fn four_close_detections_give_six_pairs() {
        let dets: Vec<_> = (0..4)
            .map(|i| det(60500.0, 1410.0 + i as f64, 14.0, 0.0, 0.1))
            .collect();
        let pairs = form_pairs(&dets, (1e-6, 7.0), -0.082);
        // brute-force: C(4, 2) combinations, all within the window
        assert_eq!(pairs.len(), 6);
        for p in &pairs {
            assert!(p.delta_f > 0.0);
            assert!(p.first.rf_frequency < p.second.rf_frequency);
        }
    }

    #[test]
    fn partition_by_four_hour_window() {
        let array = ArrayConfig {
            baseline_length: 33.0,
            reference_frequency: 1425.0,
            perpendicular_azimuth: 180.0,
            site_longitude: -71.6267,
            declination_pointing: -7.6,
        };
        let mut records = Vec::new();
        for k in 0..5 {
            let mjd = 60564.30 + k as f64 * 0.05;
            let dets = vec![
                det(mjd, 1410.0, 14.0, 0.0, 0.1),
                det(mjd, 1412.0, 14.0, 0.0, 0.1),
            ];
            records.extend(form_pairs(&dets, (1e-6, 7.0), -0.082));
        }
        let windows = assign_ra_and_partition(records, &array).unwrap();
        let total: usize = windows.values().map(Vec::len).sum();
        assert_eq!(total, 5);
        for (idx, recs) in &windows {
            let (lo, hi) = crate::records::file_window_range(*idx);
            for r in recs {
                assert!(lo <= r.first.mjd && r.first.mjd < hi);
                assert!((0.0..24.0).contains(&r.ra));
            }
        }
        // spanning 0.2 day can touch at most 3 windows
        assert!(windows.len() <= 3);
    }

    #[test]
    fn reference_mjd_reconciles_reference_ra() {
        // The site longitude below is the value that reconciles the
        // reference record (MJD 60564.439135 at RA 5.160117 hr).
        let array = ArrayConfig {
            baseline_length: 33.0,
            reference_frequency: 1425.0,
            perpendicular_azimuth: 180.0,
            site_longitude: -71.6267,
            declination_pointing: -7.6,
        };
        let ra = record_ra(60564.439135, &array).unwrap();
        assert_abs_diff_eq!(ra, 5.160117, epsilon = 2e-5);
    }
}
