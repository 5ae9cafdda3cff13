//! Direction-, spin- and field-dependent coupling.
//!
//! The guided signal mode is locally circularly polarized with a handedness
//! locked to the propagation direction. Atoms in m_F = −4 form the Λ⁻ system
//! and couple only through the σ⁻ component of the signal; atoms in
//! m_F = +4 form Λ⁺ and couple through σ⁺. The π-polarized pump couples
//! identically for both directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda::{LambdaParams, TWO_PI};

/// Bohr magneton over Planck's constant, MHz per gauss.
pub const BOHR_MHZ_PER_GAUSS: f64 = 1.399_624;
/// Landé factor of the F = 4 ground manifold.
pub const G_F4: f64 = 0.25;
/// Landé factor of the F = 3 ground manifold.
pub const G_F3: f64 = -0.25;

/// Propagation direction of the signal through the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Port 1 to port 2.
    #[serde(rename = "1->2")]
    Forward,
    /// Port 2 to port 1.
    #[serde(rename = "2->1")]
    Backward,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Forward => "1->2",
            Direction::Backward => "2->1",
        }
    }
}

/// Stretched ground state of an atom; also names its Λ system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    #[serde(rename = "-4")]
    Minus4,
    #[serde(rename = "+4")]
    Plus4,
}

impl Spin {
    pub fn flipped(self) -> Self {
        match self {
            Spin::Minus4 => Spin::Plus4,
            Spin::Plus4 => Spin::Minus4,
        }
    }

    /// m_F of the pump-coupled ground state |b⟩.
    pub fn m_b(self) -> f64 {
        match self {
            Spin::Minus4 => -4.0,
            Spin::Plus4 => 4.0,
        }
    }

    /// m_F of the signal-coupled ground state |a⟩ (F = 3).
    pub fn m_a(self) -> f64 {
        match self {
            Spin::Minus4 => -3.0,
            Spin::Plus4 => 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinPreparation {
    #[serde(rename = "-4")]
    Minus4,
    #[serde(rename = "+4")]
    Plus4,
    /// Equal statistical mixture of m_F = −4 and m_F = +4.
    #[serde(rename = "mixture")]
    Mixture,
}

impl SpinPreparation {
    /// Populated species with their weights; weights sum to 1.
    pub fn species(self) -> Vec<(f64, Spin)> {
        match self {
            SpinPreparation::Minus4 => vec![(1.0, Spin::Minus4)],
            SpinPreparation::Plus4 => vec![(1.0, Spin::Plus4)],
            SpinPreparation::Mixture => vec![(0.5, Spin::Minus4), (0.5, Spin::Plus4)],
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SpinPreparation::Minus4 => SpinPreparation::Plus4,
            SpinPreparation::Plus4 => SpinPreparation::Minus4,
            SpinPreparation::Mixture => SpinPreparation::Mixture,
        }
    }
}

/// Intensity overlap of the local signal polarization with σ⁻ for 1→2
/// propagation; σ⁺ takes the rest. The two swap under direction reversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalOverlap {
    pub f_minus: f64,
}

impl Default for DirectionalOverlap {
    fn default() -> Self {
        Self { f_minus: 0.92 }
    }
}

impl DirectionalOverlap {
    pub fn new(f_minus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&f_minus) {
            return Err(Error::invalid("f_minus", "must lie in [0, 1]"));
        }
        Ok(Self { f_minus })
    }

    pub fn f_plus(&self) -> f64 {
        1.0 - self.f_minus
    }

    /// Overlap fraction seen by an atom of the given spin.
    pub fn fraction(&self, spin: Spin, dir: Direction) -> f64 {
        match (spin, dir) {
            (Spin::Minus4, Direction::Forward) | (Spin::Plus4, Direction::Backward) => self.f_minus,
            (Spin::Plus4, Direction::Forward) | (Spin::Minus4, Direction::Backward) => self.f_plus(),
        }
    }
}

/// Static magnetic field along +z and tensor light shift E(m_F) = C m_F².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldEnvironment {
    pub b_gauss: f64,
    /// Curvature C in rad/s.
    pub tls_coefficient: f64,
}

impl FieldEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_gauss >= 0.0) {
            return Err(Error::invalid("b_gauss", "must be >= 0"));
        }
        if !(self.tls_coefficient >= 0.0) {
            return Err(Error::invalid("tls_coefficient", "must be >= 0"));
        }
        Ok(())
    }
}

/// Separation of the Λ⁺ and Λ⁻ two-photon resonances in a field of `b_gauss`.
///
/// Each Λ shifts by (g₄·4 + |g₃|·3)·μ_B B = (7/4) μ_B B with opposite signs.
pub fn zeeman_two_photon_separation(b_gauss: f64) -> f64 {
    2.0 * zeeman_ground_splitting(Spin::Plus4, b_gauss)
}

/// Zeeman shift of E_b − E_a for the given Λ system (rad/s).
fn zeeman_ground_splitting(spin: Spin, b_gauss: f64) -> f64 {
    let bohr = TWO_PI * BOHR_MHZ_PER_GAUSS * 1e6 * b_gauss;
    (G_F4 * spin.m_b() - G_F3 * spin.m_a()) * bohr
}

/// Field magnitude that produces a given resonance separation.
pub fn field_from_separation(separation: f64) -> f64 {
    separation / zeeman_two_photon_separation(1.0)
}

/// Differential tensor light shift between m_F = ±4 and ±3: C(16 − 9).
pub fn tls_differential_shift(tls_coefficient: f64) -> f64 {
    tls_coefficient * (16.0 - 9.0)
}

/// Tensor light shift of the F = 4 sublevel `m`. F = 3 is unaffected.
pub fn tls_shift(tls_coefficient: f64, m: f64) -> f64 {
    tls_coefficient * m * m
}

/// Two-photon detuning of one Λ system.
///
/// `offset` is the bare two-photon detuning at zero field and zero TLS. The
/// Zeeman term enters as δ⁻ = offset + S/2, δ⁺ = offset − S/2, so that the
/// Λ⁺ resonance lies at positive Λ⁻ detuning. The TLS raises |b⟩ by C m_F²,
/// which is the same for both systems.
pub fn effective_two_photon_detuning(spin: Spin, env: &FieldEnvironment, offset: f64) -> f64 {
    offset - zeeman_ground_splitting(spin, env.b_gauss) + tls_shift(env.tls_coefficient, spin.m_b())
}

/// Effective parameters of one spin species for one propagation direction.
pub fn effective_params(
    spin: Spin,
    dir: Direction,
    env: &FieldEnvironment,
    base: &LambdaParams,
    ovl: &DirectionalOverlap,
    offset: f64,
) -> LambdaParams {
    let f = ovl.fraction(spin, dir);
    LambdaParams {
        omega_s: base.omega_s * f.sqrt(),
        od0: base.od0 * f,
        delta_two_photon: effective_two_photon_detuning(spin, env, offset),
        ..*base
    }
}

/// Resolves a scenario into weighted effective parameter sets, one per
/// populated spin species (in the order −4, +4).
pub fn resolve_scenario(
    spin: SpinPreparation,
    dir: Direction,
    env: &FieldEnvironment,
    base: &LambdaParams,
    ovl: &DirectionalOverlap,
    offset: f64,
) -> Result<Vec<(f64, LambdaParams)>> {
    base.validate()?;
    env.validate()?;
    DirectionalOverlap::new(ovl.f_minus)?;
    Ok(spin
        .species()
        .into_iter()
        .map(|(w, s)| (w, effective_params(s, dir, env, base, ovl, offset)))
        .collect())
}

/// Signal offset that puts the given Λ system on its light-shifted resonance
/// (δ + δ_LS = `dressed`).
pub fn offset_for_resonance(
    spin: Spin,
    env: &FieldEnvironment,
    base: &LambdaParams,
    dressed: f64,
) -> f64 {
    let zero = effective_two_photon_detuning(spin, env, 0.0);
    base.with_dressed_detuning(dressed).delta_two_photon - zero
}
