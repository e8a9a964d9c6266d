use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Sawtooth gait clock. The phase ramps linearly from `-2 pi` to `2 pi`
/// over one period; negative phase is scheduled stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseClock {
    period: f64,
    /// Fraction of the current period elapsed, in `[0, 1)`.
    frac: f64,
}

impl PhaseClock {
    /// Clock at `phi = -2 pi`. Panics unless `period` is positive and finite.
    pub fn new(period: f64) -> Self {
        assert!(period.is_finite() && period > 0.0, "gait period must be positive");
        PhaseClock { period, frac: 0.0 }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Phase in `[-2 pi, 2 pi)`.
    pub fn phase(&self) -> f64 {
        -TAU + 2.0 * TAU * self.frac
    }

    /// Fraction of the period elapsed.
    pub fn fraction(&self) -> f64 {
        self.frac
    }

    pub fn in_stance(&self) -> bool {
        self.phase() < 0.0
    }

    /// Progress through the current stance (or swing) half, in `[0, 1)`.
    pub fn half_progress(&self) -> f64 {
        (2.0 * self.frac).fract()
    }

    /// `(cos phi, sin phi)`.
    pub fn features(&self) -> (f64, f64) {
        let (s, c) = self.phase().sin_cos();
        (c, s)
    }

    /// Advances by `dt`. Returns true when the phase wrapped back to `-2 pi`.
    pub fn advance(&mut self, dt: f64) -> bool {
        // rounding slack so that n steps of period/n wrap exactly once
        const SNAP: f64 = 1e-9;
        let mut next = self.frac + dt / self.period;
        let mut wrapped = false;
        while next >= 1.0 - SNAP {
            next -= 1.0;
            wrapped = true;
        }
        self.frac = if next.abs() < SNAP { 0.0 } else { next };
        wrapped
    }
}
