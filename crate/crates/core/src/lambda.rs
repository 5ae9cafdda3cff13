//! Λ-system parameters and the closed-form scalars derived from them.
//!
//! Every frequency in this crate is an angular frequency in rad/s. Config files
//! and CSV output speak ordinary frequencies in MHz; use [`mhz`] and [`to_mhz`]
//! at that boundary only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Converts an ordinary frequency in MHz to an angular frequency in rad/s.
#[inline]
pub fn mhz(nu_mhz: f64) -> f64 {
    TWO_PI * nu_mhz * 1e6
}

/// Converts an angular frequency in rad/s to an ordinary frequency in MHz.
#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / (TWO_PI * 1e6)
}

/// Basis states of the Λ atom.
///
/// `A` is the signal-coupled ground state (F=3, m=∓3), `B` the pump-coupled
/// ground state the atoms are prepared in (F=4, m=∓4), `E` the shared excited
/// state (F'=4, m'=∓4). The Zeeman labels are metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    A,
    B,
    E,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::A, Level::B, Level::E];

    #[inline]
    pub const fn index(self) -> usize {
        match self {
            Level::A => 0,
            Level::B => 1,
            Level::E => 2,
        }
    }
}

/// Full parameter set of one driven Λ atom.
///
/// `delta` is stored signed: the pump sits red of b→e, so physical presets
/// carry a negative value. `delta_two_photon` is the bare two-photon detuning
/// δ; the dressed resonance sits at δ + δ_LS = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub omega_s: f64,
    pub omega_p: f64,
    pub delta: f64,
    pub delta_two_photon: f64,
    pub gamma_e: f64,
    pub gamma_ab: f64,
    pub od0: f64,
    pub branch_a: f64,
    pub branch_b: f64,
}

impl LambdaParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_s", self.omega_s),
            ("omega_p", self.omega_p),
            ("delta", self.delta),
            ("delta_two_photon", self.delta_two_photon),
            ("gamma_e", self.gamma_e),
            ("gamma_ab", self.gamma_ab),
            ("od0", self.od0),
            ("branch_a", self.branch_a),
            ("branch_b", self.branch_b),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.gamma_e <= 0.0 {
            return Err(Error::invalid("gamma_e", "must be > 0"));
        }
        if self.gamma_ab < 0.0 {
            return Err(Error::invalid("gamma_ab", "must be >= 0"));
        }
        if self.od0 < 0.0 {
            return Err(Error::invalid("od0", "must be >= 0"));
        }
        if self.omega_s < 0.0 {
            return Err(Error::invalid("omega_s", "must be >= 0"));
        }
        if self.omega_p < 0.0 {
            return Err(Error::invalid("omega_p", "must be >= 0"));
        }
        for (name, b) in [("branch_a", self.branch_a), ("branch_b", self.branch_b)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::invalid(name, format!("{b} is outside [0, 1]")));
            }
        }
        if (self.branch_a + self.branch_b - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "branch_a",
                format!(
                    "branch_a + branch_b = {} (must be 1)",
                    self.branch_a + self.branch_b
                ),
            ));
        }
        Ok(())
    }

    /// Dressed-frame detuning δ + δ_LS.
    pub fn dressed_detuning(&self) -> f64 {
        self.delta_two_photon + pump_light_shift(self)
    }

    /// Returns a copy tuned so that δ + δ_LS equals `offset`.
    pub fn with_dressed_detuning(mut self, offset: f64) -> Self {
        self.delta_two_photon = offset - pump_light_shift(&self);
        self
    }

    /// Copy with decay branching set to (`branch_a`, 1 − `branch_a`).
    pub fn with_branching(mut self, branch_a: f64) -> Self {
        self.branch_a = branch_a;
        self.branch_b = 1.0 - branch_a;
        self
    }
}

/// Two-photon Rabi frequency Ω_s Ω_p / (2|Δ|).
///
/// Only meaningful when the excited state can be adiabatically eliminated;
/// Δ = 0 is rejected. The magnitude is returned regardless of the sign of Δ.
pub fn two_photon_rabi(p: &LambdaParams) -> Result<f64> {
    if p.delta == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(p.omega_s * p.omega_p / (2.0 * p.delta.abs()))
}

/// Pump-induced light shift ½(√(Ω_p² + Δ²) − |Δ|) of the pump-coupled ground state.
pub fn pump_light_shift(p: &LambdaParams) -> f64 {
    let (w, d) = (p.omega_p, p.delta.abs());
    // Rationalized form avoids cancellation for Ω_p ≪ |Δ|.
    let s = (w * w + d * d).sqrt();
    if s + d == 0.0 {
        0.0
    } else {
        0.5 * w * w / (s + d)
    }
}
