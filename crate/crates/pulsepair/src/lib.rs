//! Two-element East-West interferometer pulse-pair search pipeline.
//!
//! The library covers the whole desk-scale measurement chain for narrow
//! bandwidth simultaneous pulse pairs:
//!
//! - [`config`]: scenario configuration (array geometry, instrument,
//!   post-processing filters) parsed from plain `key = value` text.
//! - [`skygeom`]: sidereal time, fringe geometry, delay/phase sensitivity
//!   and Doppler-spread utilities.
//! - [`synth`]: deterministic seeded synthesis of channelized observations
//!   (frame level), a raw-sample oracle for validating the channelizer, and
//!   a fast record-level scenario generator for long-duration runs.
//! - [`channelizer`]: FFT channelization, windowed SNR estimation and
//!   both-antenna pulse thresholding.
//! - [`pairer`]: pulse-pair formation, instrument-delay phase correction,
//!   composite SNR log-likelihood, RA assignment and 4-hour file windows.
//! - [`rfi`]: segment-count RFI discovery with look-forward excision.
//! - [`scan`]: exposure-weighted binomial bin probabilities and the sorted
//!   incremental Cohen's d scan, plus phase-offset cluster estimation.
//! - [`fxcorr`]: a small FX cross-correlator for continuum power and
//!   complex visibility traces.
//! - [`calibrate`]: noise-only Monte-Carlo null distributions and
//!   full-scale constants cross-checks.
//! - [`pipeline`]: the five-step discovery orchestration and its report
//!   bundle (CSV + SVG figure analogues).
//!
//! Every run is reproducible: a scenario plus a seed determines the frame
//! stream, the record set and every report byte.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `pulsepair` binary for the `synth` / `scan` / `report` / `rfi` /
//! `oracle` / `calibrate` subcommands.

pub mod calibrate;
pub mod channelizer;
pub mod config;
pub mod fxcorr;
pub mod pairer;
pub mod pipeline;
pub mod records;
pub mod report;
pub mod rfi;
pub mod scan;
pub mod skygeom;
pub mod svg;
pub mod synth;

/// Wrap an angle in radians into `[-pi, pi)`.
#[inline]
pub fn wrap_phase(radians: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = (radians + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    // rem_euclid can return the open bound when the argument is a tiny
    // negative number; fold it back.
    if w >= std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

/// Wrap hours into `[0, 24)`.
#[inline]
pub fn wrap_hours(hours: f64) -> f64 {
    let w = hours.rem_euclid(24.0);
    if w >= 24.0 {
        w - 24.0
    } else {
        w
    }
}

/// Wrap an hour offset into `[-12, 12)`.
#[inline]
pub fn wrap_hours_signed(hours: f64) -> f64 {
    let w = (hours + 12.0).rem_euclid(24.0) - 12.0;
    if w >= 12.0 {
        w - 24.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_phase_range() {
        for i in -1000..1000 {
            let x = i as f64 * 0.093;
            let w = wrap_phase(x);
            assert!((-PI..PI).contains(&w), "wrap_phase({x}) = {w}");
            // same angle modulo 2*pi
            let d = (x - w) / (2.0 * PI);
            assert!((d - d.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_phase_boundaries() {
        assert_eq!(wrap_phase(PI), -PI);
        assert_eq!(wrap_phase(-PI), -PI);
        assert_eq!(wrap_phase(0.0), 0.0);
        assert!((wrap_phase(2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn wrap_hours_range() {
        assert_eq!(wrap_hours(24.0), 0.0);
        assert_eq!(wrap_hours(-0.5), 23.5);
        assert_eq!(wrap_hours_signed(12.0), -12.0);
        assert_eq!(wrap_hours_signed(-12.5), 11.5);
    }
}
