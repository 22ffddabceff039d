//! Unit helpers. Everything internal is SI with angular frequencies in rad/s.

use core::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Gyromagnetic ratio of 13C in rad/s/T.
pub const GAMMA_13C: f64 = TWO_PI * 10.7084e6;

/// Hz to rad/s.
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    TWO_PI * f
}

/// rad/s to Hz.
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TWO_PI
}

/// Degrees to radians.
#[inline]
pub fn deg(d: f64) -> f64 {
    d * PI / 180.0
}
