//! Astrometry and interferometer fringe geometry.
//!
//! The pipeline is one-dimensional in right ascension: an East-West
//! baseline whose perpendicular bisecting plane sweeps the sky once per
//! sidereal day. Everything here is a pure function of time and geometry.
//!
//! Mean sidereal time is used throughout. The RA bin width downstream is
//! 0.015 hr (54 s of RA); the mean-vs-apparent sidereal difference is
//! under 1.2 s and does not move a record across a bin.

use thiserror::Error;

use crate::{wrap_hours, wrap_phase};

/// Hours of mean sidereal time elapsed per MJD day.
pub const SIDEREAL_HOURS_PER_DAY: f64 = 360.98564736629 / 15.0;

/// Mean sidereal day expressed in MJD days.
pub const SIDEREAL_DAY: f64 = 24.0 / SIDEREAL_HOURS_PER_DAY;

#[derive(Debug, Error, PartialEq)]
pub enum SkyGeomError {
    #[error("mjd {0} outside supported range [40000, 80000]")]
    MjdOutOfRange(f64),
    #[error("fringe period undefined near pole (|cos dec| = {0:.4})")]
    NearPolarDeclination(f64),
}

/// Greenwich mean sidereal time in hours `[0, 24)` at the given MJD.
fn gmst_hours(mjd: f64) -> f64 {
    let jd = mjd + 2_400_000.5;
    let d = jd - 2_451_545.0;
    let jc = d / 36_525.0;
    let deg = 280.460_618_37 + 360.985_647_366_29 * d + jc * jc * (0.000_387_933 - jc / 38_710_000.0);
    wrap_hours(deg.rem_euclid(360.0) / 15.0)
}

/// Local mean sidereal time in hours `[0, 24)`.
///
/// `site_longitude` is degrees east of Greenwich (west negative).
pub fn mjd_to_lst(mjd: f64, site_longitude: f64) -> Result<f64, SkyGeomError> {
    if !(40_000.0..=80_000.0).contains(&mjd) {
        return Err(SkyGeomError::MjdOutOfRange(mjd));
    }
    Ok(wrap_hours(gmst_hours(mjd) + site_longitude / 15.0))
}

/// Fringe geometry of the East-West baseline for one pointing declination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeModel {
    /// Baseline length in wavelengths at the reference frequency.
    pub baseline_lambda: f64,
    /// Pointing declination in degrees.
    pub declination: f64,
    /// Reference frequency in MHz (the frequency at which the baseline
    /// length in wavelengths was measured).
    pub reference_frequency: f64,
}

impl FringeModel {
    pub fn new(baseline_lambda: f64, declination: f64, reference_frequency: f64) -> Self {
        Self {
            baseline_lambda,
            declination,
            reference_frequency,
        }
    }

    fn cos_dec(&self) -> f64 {
        self.declination.to_radians().cos()
    }

    /// RA aliasing period in hours: the pointing offset at which the
    /// geometric path difference changes by one wavelength.
    ///
    /// One radian of path phase corresponds to `1 / (B cos dec)` radians of
    /// hour angle near transit, so one full fringe spans
    /// `24 / (2 pi B cos dec)` hours of RA.
    pub fn fringe_period(&self) -> Result<f64, SkyGeomError> {
        let c = self.cos_dec();
        if c <= 0.05 {
            return Err(SkyGeomError::NearPolarDeclination(c));
        }
        Ok(24.0 / (2.0 * std::f64::consts::PI * self.baseline_lambda * c))
    }

    /// West-minus-East geometric fringe phase, wrapped to `[-pi, pi)`, for
    /// a pointing `hour_angle_offset` hours past the perpendicular-plane
    /// transit, observed at `rf_frequency` MHz.
    ///
    /// Uses the near-transit linearization (phase proportional to the hour
    /// angle offset), so exactly one fringe period advances the unwrapped
    /// phase by 2 pi and the phase is zero at transit.
    pub fn interferometer_phase(&self, hour_angle_offset: f64, rf_frequency: f64) -> f64 {
        debug_assert!(hour_angle_offset.abs() < 6.0, "offset beyond near-transit regime");
        wrap_phase(self.interferometer_phase_unwrapped(hour_angle_offset, rf_frequency))
    }

    /// Unwrapped variant of [`Self::interferometer_phase`].
    pub fn interferometer_phase_unwrapped(&self, hour_angle_offset: f64, rf_frequency: f64) -> f64 {
        let ha_radians = hour_angle_offset * std::f64::consts::PI / 12.0;
        2.0 * std::f64::consts::PI
            * self.baseline_lambda
            * (rf_frequency / self.reference_frequency)
            * self.cos_dec()
            * ha_radians
    }
}

/// Magnitude bound of the phase shift produced by a delay uncertainty:
/// `2 pi * frequency_scale * delay`, with frequency in MHz and delay in
/// microseconds.
///
/// Applied to the pair frequency separation (a few MHz) this stays small;
/// applied to the absolute RF frequency it exceeds a full turn, which is
/// why single-pulse phase differences are not delay-corrected.
pub fn delay_phase_sensitivity(frequency_scale: f64, delay_uncertainty: f64) -> f64 {
    2.0 * std::f64::consts::PI * frequency_scale * delay_uncertainty
}

/// Half-width in Hz of the Doppler spread of a rotating spherical radiator
/// with equatorial circumference `circumference_lambda` wavelengths
/// spinning at `revolutions_per_second`.
pub fn doppler_spread(circumference_lambda: f64, revolutions_per_second: f64) -> f64 {
    circumference_lambda * revolutions_per_second
}

/// Index of the RA bin containing `ra_hours`, for `bins_per_24h` bins.
pub fn ra_bin(ra_hours: f64, bins_per_24h: u32) -> u32 {
    let b = (wrap_hours(ra_hours) / 24.0 * bins_per_24h as f64).floor() as u32;
    b.min(bins_per_24h - 1)
}

/// Low edge in hours of RA bin `bin`.
pub fn ra_bin_low(bin: u32, bins_per_24h: u32) -> f64 {
    bin as f64 * 24.0 / bins_per_24h as f64
}
