//! Segment-count RFI discovery, look-forward excision and frequency-margin
//! filtering over 4-hour file windows.
//!
//! Every detection in a window is counted into its 256-bin spectral
//! segment. A segment whose whole-window count reaches the criterion is
//! flagged, and any record with a pulse within the margin of a flagged
//! segment is removed. Because flagging uses the completed window map,
//! detections recorded before the flagging activity are excised too (the
//! look-forward behavior).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::records::{PulseDetection, PulsePairRecord};

/// Per-window detection counts by spectral segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    /// 4-hour file window index.
    pub file_window: i64,
    /// Detection count per segment index.
    pub counts: BTreeMap<u32, u32>,
}

impl SegmentMap {
    pub fn new(file_window: i64) -> Self {
        SegmentMap {
            file_window,
            counts: BTreeMap::new(),
        }
    }

    pub fn count(&self, segment: u32) -> u32 {
        self.counts.get(&segment).copied().unwrap_or(0)
    }

    /// Segments whose count reaches `criterion`.
    pub fn flagged(&self, criterion: u32) -> Vec<u32> {
        self.counts
            .iter()
            .filter(|(_, &c)| c >= criterion)
            .map(|(&s, _)| s)
            .collect()
    }

    /// Render the map as `segment count` lines for the window sidecar file.
    pub fn to_text(&self) -> String {
        let mut out = format!("RFIMAPv1 window {}\n", self.file_window);
        for (seg, count) in &self.counts {
            writeln!(out, "{seg} {count}").unwrap();
        }
        out
    }

    /// Parse the sidecar text written by [`SegmentMap::to_text`].
    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty map file")?;
        let window = header
            .strip_prefix("RFIMAPv1 window ")
            .ok_or("bad map header")?
            .trim()
            .parse::<i64>()
            .map_err(|e| e.to_string())?;
        let mut counts = BTreeMap::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (seg, count) = line.split_once(' ').ok_or_else(|| format!("bad map line `{line}`"))?;
            counts.insert(
                seg.parse::<u32>().map_err(|e| e.to_string())?,
                count.parse::<u32>().map_err(|e| e.to_string())?,
            );
        }
        Ok(SegmentMap {
            file_window: window,
            counts,
        })
    }
}

/// Count every detection of one 4-hour window into its segment, including
/// detections that later excision removes.
pub fn accumulate_segments(detections: &[PulseDetection], file_window: i64) -> SegmentMap {
    let mut map = SegmentMap::new(file_window);
    for d in detections {
        debug_assert_eq!(crate::records::file_window_index(d.mjd), file_window);
        *map.counts.entry(d.segment_index).or_insert(0) += 1;
    }
    map
}

/// Per-window excision report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcisionReport {
    pub file_window: i64,
    pub count_criterion: u32,
    pub margin_segments: u32,
    /// Flagged segments with their whole-window counts.
    pub flagged: Vec<(u32, u32)>,
    /// Records removed per flagged segment zone (keyed by flagged segment).
    pub removed_per_segment: BTreeMap<u32, u32>,
    pub records_in: usize,
    pub records_removed: usize,
}

impl ExcisionReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "RFI excision report, window {}", self.file_window).unwrap();
        writeln!(
            out,
            "criterion {} detections/segment, margin +/-{} segments",
            self.count_criterion, self.margin_segments
        )
        .unwrap();
        writeln!(
            out,
            "records in {}, removed {}",
            self.records_in, self.records_removed
        )
        .unwrap();
        if self.flagged.is_empty() {
            writeln!(out, "no flagged segments").unwrap();
        }
        for (seg, count) in &self.flagged {
            writeln!(
                out,
                "segment {seg}: count {count}, removed {}",
                self.removed_per_segment.get(seg).copied().unwrap_or(0)
            )
            .unwrap();
        }
        out
    }
}

/// Remove every record with a pulse within `margin_segments` (inclusive) of
/// any segment whose count reaches `count_criterion`.
///
/// Record order is preserved; the surviving set does not depend on the
/// input order, and excising twice changes nothing.
pub fn excise(
    records: Vec<PulsePairRecord>,
    map: &SegmentMap,
    count_criterion: u32,
    margin_segments: u32,
) -> (Vec<PulsePairRecord>, ExcisionReport) {
    let flagged: Vec<u32> = map.flagged(count_criterion);
    let in_zone = |segment: u32| -> Option<u32> {
        flagged
            .iter()
            .find(|&&s| segment.abs_diff(s) <= margin_segments)
            .copied()
    };

    let records_in = records.len();
    let mut removed_per_segment: BTreeMap<u32, u32> = BTreeMap::new();
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        let hit = in_zone(rec.first.segment_index).or_else(|| in_zone(rec.second.segment_index));
        match hit {
            Some(seg) => {
                *removed_per_segment.entry(seg).or_insert(0) += 1;
            }
            None => kept.push(rec),
        }
    }
    let removed = records_in - kept.len();
    let report = ExcisionReport {
        file_window: map.file_window,
        count_criterion,
        margin_segments,
        flagged: flagged.iter().map(|&s| (s, map.count(s))).collect(),
        removed_per_segment,
        records_in,
        records_removed: removed,
    };
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairer::form_pairs;

    fn det(mjd: f64, bin: u32) -> PulseDetection {
        let bw = 62.5e6 / (1u64 << 24) as f64;
        PulseDetection {
            mjd,
            rf_frequency: bin as f64 * bw * 1e-6,
            snr_east: 14.0,
            snr_west: 14.0,
            phase_east: 0.0,
            phase_west: 0.1,
            bin_index: bin,
            segment_index: PulseDetection::segment_of(bin),
        }
    }

    fn pair(mjd: f64, bin1: u32, bin2: u32) -> PulsePairRecord {
        let dets = vec![det(mjd, bin1), det(mjd, bin2)];
        form_pairs(&dets, (0.0, 60.0), -0.082).remove(0)
    }

    #[test]
    fn counts_accumulate_per_segment() {
        let window = crate::records::file_window_index(60500.05);
        let dets: Vec<_> = (0..5).map(|i| det(60500.05, 512 + i)).collect();
        let map = accumulate_segments(&dets, window);
        assert_eq!(map.count(2), 5);
        assert_eq!(map.count(1), 0);
    }

    #[test]
    fn segment_boundary_bins() {
        let window = crate::records::file_window_index(60500.05);
        let dets = vec![det(60500.05, 255), det(60500.05, 256)];
        let map = accumulate_segments(&dets, window);
        assert_eq!(map.count(0), 1);
        assert_eq!(map.count(1), 1);
    }

    #[test]
    fn no_flag_below_criterion_keeps_everything() {
        let window = 363000;
        let mut map = SegmentMap::new(window);
        map.counts.insert(4, 19);
        let records = vec![pair(60500.05, 4 * 256 + 3, 4 * 256 + 90)];
        let (kept, report) = excise(records.clone(), &map, 20, 2);
        assert_eq!(kept, records);
        assert_eq!(report.records_removed, 0);
        assert!(report.flagged.is_empty());
    }

    #[test]
    fn margin_is_inclusive() {
        let mut map = SegmentMap::new(363000);
        map.counts.insert(100, 20);
        // records whose first pulse sits 500 and 501 segments above
        let at = |seg: u32| pair(60500.05, seg * 256 + 7, seg * 256 + 80);
        let records = vec![at(600), at(601)];
        let (kept, report) = excise(records, &map, 20, 500);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].first.segment_index, 601);
        assert_eq!(report.records_removed, 1);
    }

    #[test]
    fn either_pulse_in_zone_removes_the_record() {
        let mut map = SegmentMap::new(363000);
        map.counts.insert(50, 25);
        // second pulse in the flagged segment, first far away
        let rec = pair(60500.05, 200 * 256, 50 * 256 + 10);
        let (kept, _) = excise(vec![rec], &map, 20, 0);
        assert!(kept.is_empty());
    }

    #[test]
    fn look_forward_removes_earlier_records() {
        // victim record early in the window, interferer counted later:
        // the completed map flags the segment, so the early record goes
        let window = crate::records::file_window_index(60500.01);
        let victim = pair(60500.01, 30 * 256 + 5, 31 * 256 + 5);
        let mut dets: Vec<_> = vec![det(60500.01, 30 * 256 + 5), det(60500.01, 31 * 256 + 5)];
        // interferer active only near the end of the window
        for k in 0..25 {
            dets.push(det(60500.16, 30 * 256 + 9 + (k % 3)));
        }
        let map = accumulate_segments(&dets, window);
        let (kept, report) = excise(vec![victim], &map, 20, 1);
        assert!(kept.is_empty(), "look-forward must remove the earlier record");
        assert_eq!(report.records_removed, 1);
        assert_eq!(report.flagged.len(), 1);
        assert_eq!(report.flagged[0].0, 30);
    }

    #[test]
    fn excision_is_idempotent_and_order_independent() {
        let mut map = SegmentMap::new(363000);
        map.counts.insert(40, 30);
        map.counts.insert(140, 30);
        let mut records: Vec<_> = (0..40u32)
            .map(|i| pair(60500.05, (10 + 5 * i) * 256 + 3, (11 + 5 * i) * 256 + 9))
            .collect();
        let (once, _) = excise(records.clone(), &map, 20, 3);
        let (twice, second_report) = excise(once.clone(), &map, 20, 3);
        assert_eq!(once, twice);
        assert_eq!(second_report.records_removed, 0);

        records.reverse();
        let (reversed, _) = excise(records, &map, 20, 3);
        let mut a: Vec<u32> = once.iter().map(|r| r.first.bin_index).collect();
        let mut b: Vec<u32> = reversed.iter().map(|r| r.first.bin_index).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn segment_map_text_roundtrip() {
        let mut map = SegmentMap::new(363386);
        map.counts.insert(3, 21);
        map.counts.insert(77, 4);
        let text = map.to_text();
        assert_eq!(SegmentMap::from_text(&text).unwrap(), map);
    }
}
