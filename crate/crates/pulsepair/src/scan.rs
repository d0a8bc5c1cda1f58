//! Exposure-weighted binomial bin probabilities and the sorted incremental
//! Cohen's d scan, plus phase-offset cluster estimation.
//!
//! The scan walks the record set in ascending order of a phase sort key.
//! When the k-th scanned record lands in RA bin `b`, the bin's running
//! count `c_b(k)` (including this record) is compared with the binomial
//! expectation over the k records seen so far:
//!
//! `d = (c_b(k) - k p_b) / sqrt(k p_b (1 - p_b))`
//!
//! The very first records of the heap produce large `d` by construction
//! (a singleton against a tiny expected count); these sporadic top-of-heap
//! outliers are reported as-is and candidate ranking additionally tracks a
//! repetition-qualified maximum that ignores bins until they have
//! accumulated several records.

use thiserror::Error;

use crate::config::ArrayConfig;
use crate::records::PulsePairRecord;
use crate::skygeom::{ra_bin, SIDEREAL_HOURS_PER_DAY};
use crate::wrap_phase;

/// Running bin count at which a point starts to qualify for candidate
/// ranking (screens out singleton heap-top spikes).
pub const REPETITION_MIN: u32 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ScanError {
    #[error("no coverage intersects the analyzed RA range")]
    NoCoverage,
    #[error("sky geometry: {0}")]
    SkyGeom(#[from] crate::skygeom::SkyGeomError),
    #[error("candidate bin {bin} has only {got} records, need at least {need}")]
    TooFewRecords { bin: u32, got: usize, need: usize },
}

/// Per-RA-bin event probabilities from observing dwell time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureModel {
    /// Probability per bin over the full 24 h circle; zero outside the
    /// analyzed range, summing to one over it.
    pub bin_probability: Vec<f64>,
    /// Total observed duration in days.
    pub observed_duration: f64,
    pub bins_per_24h: u32,
    pub analyzed_range: (f64, f64),
}

impl ExposureModel {
    /// Uniform exposure over the analyzed range (for calibration runs).
    pub fn uniform(bins_per_24h: u32, analyzed_range: (f64, f64)) -> Self {
        let mut p = vec![0.0; bins_per_24h as usize];
        let lo = ra_bin(analyzed_range.0, bins_per_24h);
        let hi = ra_bin(analyzed_range.1 - 1e-9, bins_per_24h);
        let n = (hi - lo + 1) as f64;
        for b in lo..=hi {
            p[b as usize] = 1.0 / n;
        }
        ExposureModel {
            bin_probability: p,
            observed_duration: 0.0,
            bins_per_24h,
            analyzed_range,
        }
    }

    pub fn analyzed_bins(&self) -> impl Iterator<Item = u32> + '_ {
        let lo = ra_bin(self.analyzed_range.0, self.bins_per_24h);
        let hi = ra_bin(self.analyzed_range.1 - 1e-9, self.bins_per_24h);
        lo..=hi
    }

    pub fn analyzed_bin_count(&self) -> usize {
        self.analyzed_bins().count()
    }
}

/// Per-bin probabilities proportional to sidereal dwell time over the
/// coverage intervals, normalized across the analyzed RA range.
///
/// Mean sidereal time advances linearly at 24.0657 hr per day; each
/// interval sweeps the RA circle `(length x rate / 24)` times, so each bin
/// collects the full-wrap dwell plus the partial arc at the ends. An
/// outage between intervals removes whole transits and the partial-day
/// interval ends give the probability profile its steps.
pub fn compute_exposure(
    coverage: &[(f64, f64)],
    array: &ArrayConfig,
    bins_per_24h: u32,
    analyzed_range: (f64, f64),
) -> Result<ExposureModel, ScanError> {
    let nbins = bins_per_24h as usize;
    let bin_width_hours = 24.0 / bins_per_24h as f64;
    let mut dwell_hours = vec![0.0f64; nbins]; // in sidereal-RA hours

    let add_segment = |dwell: &mut [f64], s: f64, e: f64| {
        // [s, e) in RA hours, 0 <= s < e <= 24
        let first = (s / bin_width_hours).floor() as usize;
        let last = (((e - 1e-12) / bin_width_hours).floor() as usize).min(nbins - 1);
        for b in first..=last {
            let lo = b as f64 * bin_width_hours;
            let hi = lo + bin_width_hours;
            dwell[b] += e.min(hi) - s.max(lo);
        }
    };

    let mut total_days = 0.0;
    for &(lo, hi) in coverage {
        if hi <= lo {
            continue;
        }
        total_days += hi - lo;
        let start_ra = crate::pairer::record_ra(lo, array)?;
        let swept = (hi - lo) * SIDEREAL_HOURS_PER_DAY;
        let wraps = (swept / 24.0).floor();
        for d in dwell_hours.iter_mut() {
            *d += wraps * bin_width_hours;
        }
        let arc = swept - wraps * 24.0;
        let end = start_ra + arc;
        if end <= 24.0 {
            add_segment(&mut dwell_hours, start_ra, end);
        } else {
            add_segment(&mut dwell_hours, start_ra, 24.0);
            add_segment(&mut dwell_hours, 0.0, end - 24.0);
        }
    }

    // restrict to the analyzed range and normalize
    let lo_bin = ra_bin(analyzed_range.0, bins_per_24h) as usize;
    let hi_bin = ra_bin(analyzed_range.1 - 1e-9, bins_per_24h) as usize;
    let mut p = vec![0.0f64; nbins];
    let mut total = 0.0;
    for b in lo_bin..=hi_bin {
        p[b] = dwell_hours[b];
        total += dwell_hours[b];
    }
    if total <= 0.0 {
        return Err(ScanError::NoCoverage);
    }
    for v in &mut p {
        *v /= total;
    }
    Ok(ExposureModel {
        bin_probability: p,
        observed_duration: total_days,
        bins_per_24h,
        analyzed_range,
    })
}

/// Sort key of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKey {
    /// `|corrected pair phase difference|` (discovery step 1).
    CorrectedPairPhase,
    /// `|first-pulse West-East phase + offset|` (steps 3 and 4).
    FirstPhasePlusOffset,
}

impl ScanKey {
    pub fn name(&self, offset: f64) -> String {
        match self {
            ScanKey::CorrectedPairPhase => "abs_d_df_d_ew_phi".to_string(),
            ScanKey::FirstPhasePlusOffset => format!("abs_d_ew_phi_plus_{offset:.4}"),
        }
    }

    fn value(&self, r: &PulsePairRecord, offset: f64) -> f64 {
        match self {
            ScanKey::CorrectedPairPhase => r.d_df_d_ew_phi.abs(),
            ScanKey::FirstPhasePlusOffset => wrap_phase(r.d_ew_phi_first + offset).abs(),
        }
    }
}

/// Whether per-point running statistics are computed or only the final
/// whole-dataset values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    PerPoint,
    FinalOnly,
}

/// One scanned record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    /// Index into the input record slice.
    pub record_index: usize,
    pub ra_bin: u32,
    pub key: f64,
    /// Position in the sorted heap (1-based).
    pub k: usize,
    /// Running bin count including this record.
    pub bin_count: u32,
    pub d: f64,
}

/// Scan output.
#[derive(Debug, Clone, PartialEq)]
pub struct BinScanResult {
    pub sort_key_name: String,
    pub per_point: Vec<ScanPoint>,
    /// Maximum per-point d seen in each bin; NAN where no point landed.
    pub per_bin_max_d: Vec<f64>,
    /// Maximum d among points with running count >= [`REPETITION_MIN`].
    pub per_bin_qualified_max_d: Vec<f64>,
    pub per_bin_count: Vec<u32>,
    /// d of each analyzed bin at the end of the scan; NAN outside.
    pub per_bin_final_d: Vec<f64>,
    /// Records that fell in zero-probability bins, excluded from the scan.
    pub flagged_zero_probability: Vec<usize>,
    /// Number of records scanned (the final k).
    pub points_scanned: usize,
}

impl BinScanResult {
    /// Bins ranked by qualified max d, best first, with their stats.
    pub fn ranked_bins(&self) -> Vec<(u32, f64)> {
        let mut bins: Vec<(u32, f64)> = self
            .per_bin_qualified_max_d
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.is_nan())
            .map(|(b, d)| (b as u32, *d))
            .collect();
        bins.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        bins
    }
}

/// Walk the records in ascending key order, accumulating per-bin counts
/// and the incremental binomial d statistic.
///
/// Ties in the key are broken by MJD then first-pulse frequency, so the
/// scan is deterministic. Records in bins with zero exposure probability
/// are flagged and do not advance `k`.
pub fn sorted_scan(
    records: &[PulsePairRecord],
    key: ScanKey,
    offset: f64,
    exposure: &ExposureModel,
    mode: ScanMode,
) -> BinScanResult {
    let nbins = exposure.bins_per_24h as usize;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = key.value(&records[a], offset);
        let kb = key.value(&records[b], offset);
        ka.total_cmp(&kb)
            .then(records[a].first.mjd.total_cmp(&records[b].first.mjd))
            .then(records[a].first.rf_frequency.total_cmp(&records[b].first.rf_frequency))
    });

    let mut per_point = Vec::with_capacity(if mode == ScanMode::PerPoint { records.len() } else { 0 });
    let mut counts = vec![0u32; nbins];
    let mut max_d = vec![f64::NAN; nbins];
    let mut qualified_max_d = vec![f64::NAN; nbins];
    let mut flagged = Vec::new();
    let mut k = 0usize;

    for &idx in &order {
        let r = &records[idx];
        let bin = ra_bin(r.ra, exposure.bins_per_24h) as usize;
        let p = exposure.bin_probability[bin];
        if p <= 0.0 {
            flagged.push(idx);
            continue;
        }
        k += 1;
        counts[bin] += 1;
        let c = counts[bin] as f64;
        let kf = k as f64;
        let d = (c - kf * p) / (kf * p * (1.0 - p)).sqrt();
        if max_d[bin].is_nan() || d > max_d[bin] {
            max_d[bin] = d;
        }
        if counts[bin] >= REPETITION_MIN && (qualified_max_d[bin].is_nan() || d > qualified_max_d[bin]) {
            qualified_max_d[bin] = d;
        }
        if mode == ScanMode::PerPoint {
            per_point.push(ScanPoint {
                record_index: idx,
                ra_bin: bin as u32,
                key: key.value(r, offset),
                k,
                bin_count: counts[bin],
                d,
            });
        }
    }

    let kf = k as f64;
    let mut final_d = vec![f64::NAN; nbins];
    if k > 0 {
        for b in exposure.analyzed_bins() {
            let p = exposure.bin_probability[b as usize];
            if p > 0.0 {
                final_d[b as usize] =
                    (counts[b as usize] as f64 - kf * p) / (kf * p * (1.0 - p)).sqrt();
            }
        }
    }

    BinScanResult {
        sort_key_name: key.name(offset),
        per_point,
        per_bin_max_d: max_d,
        per_bin_qualified_max_d: qualified_max_d,
        per_bin_count: counts,
        per_bin_final_d: final_d,
        flagged_zero_probability: flagged,
        points_scanned: k,
    }
}

/// Result of the near-zero phase cluster search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetEstimate {
    /// Mode of the first-pulse phase density in the candidate bin, radians.
    pub offset: f64,
    /// Peak density over the uniform-in-window level.
    pub peak_ratio: f64,
    /// False when no stable cluster stands above the uniform level.
    pub confident: bool,
    /// Records in the candidate bin.
    pub n: usize,
}

/// Kernel-density mode of `d_ew_phi_first` over the records of one RA bin.
///
/// Triangular kernel of half-width `kernel_width`, evaluated on a fine
/// grid over the phase filter window `[-uniform_window, uniform_window]`
/// the records passed. The density is renormalized by the kernel mass
/// that lies inside the window, so a cluster near the window edge is not
/// dragged inward by the truncated kernel and a uniform population stays
/// flat up to the edge. A peak below 1.8x the uniform-in-window level is
/// flagged low-confidence.
pub fn estimate_phase_offset(
    records: &[PulsePairRecord],
    candidate_bin: u32,
    bins_per_24h: u32,
    kernel_width: f64,
    uniform_window: f64,
) -> Result<OffsetEstimate, ScanError> {
    let phases: Vec<f64> = records
        .iter()
        .filter(|r| ra_bin(r.ra, bins_per_24h) == candidate_bin)
        .map(|r| r.d_ew_phi_first)
        .collect();
    if phases.len() < 5 {
        return Err(ScanError::TooFewRecords {
            bin: candidate_bin,
            got: phases.len(),
            need: 5,
        });
    }

    let w = kernel_width;
    let window = uniform_window.max(kernel_width * 1e-3);
    let density = |x: f64| -> f64 {
        let mut acc = 0.0;
        for &p in &phases {
            let u = wrap_phase(x - p).abs() / w;
            if u < 1.0 {
                acc += 1.0 - u;
            }
        }
        acc / (phases.len() as f64 * w)
    };

    // coarse circular grid locates the cluster, a fine pass sharpens it
    let coarse = 4096usize;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut best_x = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..coarse {
        let x = -std::f64::consts::PI + i as f64 * two_pi / coarse as f64;
        let v = density(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    let step = two_pi / coarse as f64;
    for i in 0..=200usize {
        let x = best_x - step + i as f64 * (2.0 * step / 200.0);
        let v = density(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }

    // the KDE peak location is biased toward the window interior when the
    // cluster sits within one kernel width of the phase filter edge (the
    // kernel hangs over a region where records cannot exist), so the
    // returned offset is the median of the phases under the peak, which
    // is immune to that truncation
    let mut near: Vec<f64> = phases
        .iter()
        .map(|&p| wrap_phase(p - best_x))
        .filter(|d| d.abs() < w)
        .collect();
    near.sort_by(f64::total_cmp);
    let offset = if near.is_empty() {
        best_x
    } else {
        let mid = near.len() / 2;
        let med = if near.len() % 2 == 1 {
            near[mid]
        } else {
            0.5 * (near[mid - 1] + near[mid])
        };
        wrap_phase(best_x + med)
    };

    let uniform_level = 1.0 / (2.0 * window);
    let peak_ratio = best / uniform_level;
    Ok(OffsetEstimate {
        offset,
        peak_ratio,
        confident: peak_ratio >= 1.8,
        n: phases.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    use crate::records::{PulseDetection, PulsePairRecord};
    use crate::skygeom::ra_bin_low;
    use crate::skygeom::SIDEREAL_DAY;

    fn array() -> ArrayConfig {
        ArrayConfig {
            baseline_length: 33.0,
            reference_frequency: 1425.0,
            perpendicular_azimuth: 180.0,
            site_longitude: -71.6267,
            declination_pointing: -7.6,
        }
    }

    pub(crate) fn record_at(ra: f64, key_phase: f64, dew1: f64) -> PulsePairRecord {
        let det = |f: f64| {
            let bw = 62.5e6 / (1u64 << 24) as f64;
            let bin = (f * 1e6 / bw).round() as u32;
            PulseDetection {
                mjd: 60500.0,
                rf_frequency: f,
                snr_east: 12.0,
                snr_west: 12.0,
                phase_east: 0.0,
                phase_west: dew1,
                bin_index: bin,
                segment_index: PulseDetection::segment_of(bin),
            }
        };
        PulsePairRecord {
            first: det(1410.0),
            second: det(1412.0),
            delta_f: 2.0,
            d_ew_phi_first: dew1,
            d_ew_phi_second: 0.0,
            d_df_d_ew_phi: key_phase,
            llsnr_pulse: -2.0,
            llsnr_pair: -3.0,
            ra,
        }
    }

    #[test]
    fn uniform_exposure_from_whole_sidereal_days() {
        // coverage of exactly 30 sidereal days: every bin equally sampled
        let coverage = vec![(60500.0, 60500.0 + 30.0 * SIDEREAL_DAY)];
        let exp = compute_exposure(&coverage, &array(), 1600, (0.0, 24.0)).unwrap();
        let expect = 1.0 / 1600.0;
        for b in 0..1600usize {
            assert_abs_diff_eq!(exp.bin_probability[b], expect, epsilon = 1e-9);
        }
        let total: f64 = exp.bin_probability.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn outage_gap_lowers_swept_bins() {
        // two 10.25-sidereal-day intervals around a half-day hole: the
        // quarter-day end arcs get 11 transits, the rest 10, and the two
        // extra arcs are disjoint because of the gap
        let a0 = 60500.0;
        let a1 = a0 + 10.25 * SIDEREAL_DAY;
        let b0 = a1 + 0.5 * SIDEREAL_DAY;
        let b1 = b0 + 10.25 * SIDEREAL_DAY;
        let exp = compute_exposure(&[(a0, a1), (b0, b1)], &array(), 1600, (0.0, 24.0)).unwrap();
        let probs = &exp.bin_probability;
        let lo = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi > lo, "gap must produce a probability step");
        // 21 vs 20 transits
        assert_abs_diff_eq!(hi / lo, 21.0 / 20.0, epsilon = 1e-6);
        // exactly half the circle got the extra transits
        let n_hi = probs.iter().filter(|p| **p > (lo + hi) / 2.0).count();
        assert!((n_hi as i64 - 800).abs() <= 2, "high bins {n_hi}");
    }

    #[test]
    fn sliver_coverage_concentrates_probability() {
        // 0.015 hr of RA is one bin: all probability lands there
        let start = 60500.2;
        let len_days = 0.015 / SIDEREAL_HOURS_PER_DAY;
        let exp = compute_exposure(&[(start, start + len_days)], &array(), 1600, (0.0, 24.0)).unwrap();
        let nonzero: Vec<usize> = exp
            .bin_probability
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 1e-12)
            .map(|(b, _)| b)
            .collect();
        // the sliver may straddle one bin boundary
        assert!(nonzero.len() <= 2, "bins {nonzero:?}");
        let total: f64 = exp.bin_probability.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        let top = exp.bin_probability[nonzero[0]].max(*exp.bin_probability.get(nonzero[nonzero.len()-1]).unwrap());
        assert!(top > 0.5);
    }

    #[test]
    fn no_coverage_in_range_errors() {
        // analyzed range far from the swept sliver
        let start = 60500.2;
        let len_days = 0.015 / SIDEREAL_HOURS_PER_DAY;
        let exp = compute_exposure(&[(start, start + len_days)], &array(), 1600, (0.0, 24.0)).unwrap();
        let swept_bin = exp.bin_probability.iter().position(|p| *p > 0.5).unwrap() as u32;
        let swept_ra = ra_bin_low(swept_bin, 1600);
        let far = crate::wrap_hours(swept_ra + 12.0);
        let r = compute_exposure(
            &[(start, start + len_days)],
            &array(),
            1600,
            (far, far + 0.5),
        );
        assert_eq!(r.unwrap_err(), ScanError::NoCoverage);
    }

    #[test]
    fn first_record_d_is_closed_form() {
        let exp = ExposureModel::uniform(1600, (0.0, 24.0));
        let recs = vec![record_at(3.0, 0.01, 0.0)];
        let out = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::PerPoint);
        let p = 1.0f64 / 1600.0;
        let expect = (1.0 - p) / (p * (1.0 - p)).sqrt();
        assert_abs_diff_eq!(out.per_point[0].d, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(out.per_point[0].d, 39.99, epsilon = 0.01);
    }

    #[test]
    fn binomial_d_at_reference_count() {
        // k = 3417 with 21 in one bin at p = 1/1600: d = 12.91
        let exp = ExposureModel::uniform(1600, (0.0, 24.0));
        let mut recs = Vec::new();
        // 3396 spread across distinct bins, keys below the hot-bin keys
        for i in 0..3396 {
            let ra = (i % 1590) as f64 * 0.015 + 0.001 + 16.0 * 0.0; // bins 0..1589
            recs.push(record_at(crate::wrap_hours(ra), 0.0001 * (i + 1) as f64, 0.0));
        }
        // 21 records in bin 1595, scanned last
        for j in 0..21 {
            recs.push(record_at(1595.0 * 0.015 + 0.001, 0.9 + 0.0001 * j as f64, 0.0));
        }
        let out = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::PerPoint);
        let last = out.per_point.last().unwrap();
        assert_eq!(last.k, 3417);
        assert_eq!(last.bin_count, 21);
        assert_abs_diff_eq!(last.d, 12.91, epsilon = 0.01);
    }

    #[test]
    fn proportional_records_give_near_zero_final_d() {
        let exp = ExposureModel::uniform(1600, (0.0, 24.0));
        // exactly one record per bin in a block: counts proportional to p
        let mut recs = Vec::new();
        for b in 0..1600 {
            recs.push(record_at(b as f64 * 0.015 + 0.001, (b + 1) as f64 * 1e-4, 0.0));
        }
        let out = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::FinalOnly);
        for b in 0..1600usize {
            assert_abs_diff_eq!(out.per_bin_final_d[b], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_probability_bin_flags_record() {
        let exp = ExposureModel::uniform(1600, (1.5, 9.0));
        let recs = vec![record_at(12.0, 0.01, 0.0), record_at(3.0, 0.02, 0.0)];
        let out = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::PerPoint);
        assert_eq!(out.flagged_zero_probability, vec![0]);
        assert_eq!(out.points_scanned, 1);
        assert_eq!(out.per_point.len(), 1);
        assert_eq!(out.per_point[0].record_index, 1);
    }

    #[test]
    fn scan_is_deterministic_under_permutation_for_distinct_keys() {
        let exp = ExposureModel::uniform(1600, (0.0, 24.0));
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut recs: Vec<PulsePairRecord> = (0..500)
            .map(|_| {
                record_at(
                    rng.gen_range(0.0..24.0),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.1..0.1),
                )
            })
            .collect();
        let a = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::PerPoint);
        recs.reverse();
        let b = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::PerPoint);
        let da: Vec<f64> = a.per_point.iter().map(|p| p.d).collect();
        let db: Vec<f64> = b.per_point.iter().map(|p| p.d).collect();
        assert_eq!(da, db);
        assert_eq!(a.per_bin_count, b.per_bin_count);
    }

    #[test]
    fn offset_key_shifts_sort_order() {
        let exp = ExposureModel::uniform(1600, (0.0, 24.0));
        let recs = vec![
            record_at(3.0, 0.0, 0.07),
            record_at(4.0, 0.0, 0.00),
        ];
        // offset -0.07: the 0.07 record sorts first
        let out = sorted_scan(&recs, ScanKey::FirstPhasePlusOffset, -0.07, &exp, ScanMode::PerPoint);
        assert_eq!(out.per_point[0].record_index, 0);
        // offset 0: the 0.0 record sorts first
        let out = sorted_scan(&recs, ScanKey::FirstPhasePlusOffset, 0.0, &exp, ScanMode::PerPoint);
        assert_eq!(out.per_point[0].record_index, 1);
    }

    #[test]
    fn phase_cluster_is_recovered() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut recs = Vec::new();
        // 60 clustered at +0.07 +/- 0.02, 20 uniform background in the
        // filter window, all in bin 344
        let ra = 5.165;
        for _ in 0..60 {
            let phase = 0.07 + 0.02 * rng.gen_range(-1.0..1.0f64);
            recs.push(record_at(ra, 0.0, phase));
        }
        for _ in 0..20 {
            recs.push(record_at(ra, 0.0, rng.gen_range(-0.1..0.1)));
        }
        let est = estimate_phase_offset(&recs, 344, 1600, 0.05, 0.10).unwrap();
        assert!(est.confident, "peak ratio {}", est.peak_ratio);
        assert_abs_diff_eq!(est.offset, 0.07, epsilon = 0.01);
    }

    #[test]
    fn uniform_phases_flag_low_confidence() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let recs: Vec<PulsePairRecord> = (0..500)
            .map(|_| record_at(5.165, 0.0, rng.gen_range(-0.1..0.1)))
            .collect();
        let est = estimate_phase_offset(&recs, 344, 1600, 0.05, 0.10).unwrap();
        assert!(!est.confident, "uniform phases must be low confidence (ratio {})", est.peak_ratio);
        // no stable cluster: the mode is a noise artifact inside the window
        assert!(est.offset.abs() <= 0.10, "mode {}", est.offset);
    }

    #[test]
    fn cluster_at_window_edge_is_not_dragged_inward() {
        // without boundary renormalization the truncated kernel biases an
        // edge-adjacent cluster toward the window interior
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let mut recs = Vec::new();
        for _ in 0..50 {
            let phase = (0.085 + 0.008 * rng.gen_range(-1.0..1.0f64)).min(0.0999);
            recs.push(record_at(5.165, 0.0, phase));
        }
        for _ in 0..12 {
            recs.push(record_at(5.165, 0.0, rng.gen_range(-0.1..0.1)));
        }
        let est = estimate_phase_offset(&recs, 344, 1600, 0.05, 0.10).unwrap();
        assert!((est.offset - 0.085).abs() < 0.01, "edge cluster mode {}", est.offset);
    }

    #[test]
    fn degenerate_cluster_returns_exact_offset() {
        let recs: Vec<PulsePairRecord> = (0..10).map(|_| record_at(5.165, 0.0, 0.0)).collect();
        let est = estimate_phase_offset(&recs, 344, 1600, 0.05, 0.10).unwrap();
        assert_abs_diff_eq!(est.offset, 0.0, epsilon = 1e-6);
        assert!(est.confident);
    }

    #[test]
    fn too_few_records_errors() {
        let recs = vec![record_at(5.165, 0.0, 0.0); 4];
        assert!(matches!(
            estimate_phase_offset(&recs, 344, 1600, 0.05, 0.10),
            Err(ScanError::TooFewRecords { got: 4, .. })
        ));
    }

    #[test]
    fn null_run_final_d_calibrates() {
        // multinomial noise: per-bin final d has mean ~0, sd ~1
        let exp = ExposureModel::uniform(1600, (1.5, 9.0));
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let recs: Vec<PulsePairRecord> = (0..3417)
            .map(|_| {
                record_at(
                    rng.gen_range(1.5..9.0),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.1..0.1),
                )
            })
            .collect();
        let out = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::FinalOnly);
        let ds: Vec<f64> = exp
            .analyzed_bins()
            .map(|b| out.per_bin_final_d[b as usize])
            .collect();
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        let var = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (ds.len() - 1) as f64;
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.15, "sd {}", var.sqrt());
    }

    #[test]
    fn monotone_injection_response() {
        // adding records to one bin never lowers its final d
        let exp = ExposureModel::uniform(1600, (0.0, 24.0));
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let noise: Vec<PulsePairRecord> = (0..800)
            .map(|_| record_at(rng.gen_range(0.0..24.0), rng.gen_range(-0.8..0.8), 0.0))
            .collect();
        let mut last = f64::NEG_INFINITY;
        for extra in [0usize, 5, 15, 40] {
            let mut recs = noise.clone();
            for j in 0..extra {
                recs.push(record_at(7.0005, 0.8 + j as f64 * 1e-5, 0.0));
            }
            let out = sorted_scan(&recs, ScanKey::CorrectedPairPhase, 0.0, &exp, ScanMode::FinalOnly);
            let d = out.per_bin_final_d[ra_bin(7.0005, 1600) as usize];
            assert!(d >= last, "d {d} dropped below {last} at extra {extra}");
            last = d;
        }
    }
}
