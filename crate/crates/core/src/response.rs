//! Optical response of one atom: susceptibility, transfer function and
//! transmission.
//!
//! Normalization: χ = γ_e ρ_ae / (2 Ω_s) with the ½Ω coupling convention of
//! [`crate::lindblad`]. In this normalization a resonant two-level absorber
//! has χ = i/2, and the per-atom transfer is h = exp(i · od/2 · χ). The
//! closed-form steady state below is expressed in the same normalization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lambda::LambdaParams;

/// Dimensionless complex susceptibility χ̃_ae. Im χ < 0 means gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibility(pub Complex64);

impl Susceptibility {
    pub const ZERO: Self = Self(Complex64::new(0.0, 0.0));

    pub fn is_gain(&self) -> bool {
        self.0.im < 0.0
    }
}

/// Complex amplitude transfer of one atom and the matching power transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSample {
    pub h: Complex64,
    pub t: f64,
}

/// Default drive regularization relative to the launched amplitude.
pub const DEFAULT_DRIVE_EPS_REL: f64 = 1e-12;

/// χ from the instantaneous coherence and complex signal drive.
///
/// ρ_ae follows Ω_s* (the signal enters H as ½Ω_s|e⟩⟨a|), so the ratio is
/// taken against Ω_s* and χ does not depend on the drive phase.
/// `eps_drive` is an absolute floor on |Ω_s|; below it the ratio is not
/// formed and [`Error::DegenerateDrive`] is returned.
pub fn chi_from_rho(
    rho_ae: Complex64,
    omega_s: Complex64,
    gamma_e: f64,
    eps_drive: f64,
) -> Result<Susceptibility> {
    let amp = omega_s.norm();
    if !(amp > eps_drive) {
        return Err(Error::DegenerateDrive { amplitude: amp });
    }
    Ok(Susceptibility(rho_ae * gamma_e / (omega_s.conj() * 2.0)))
}

/// Stateful wrapper for time traces: when the drive drops below the floor
/// the last valid χ is held.
#[derive(Debug, Clone)]
pub struct ChiTracker {
    gamma_e: f64,
    eps_drive: f64,
    last: Susceptibility,
}

impl ChiTracker {
    pub fn new(gamma_e: f64, eps_drive: f64) -> Self {
        Self {
            gamma_e,
            eps_drive,
            last: Susceptibility::ZERO,
        }
    }

    pub fn update(&mut self, rho_ae: Complex64, omega_s: Complex64) -> Susceptibility {
        if let Ok(chi) = chi_from_rho(rho_ae, omega_s, self.gamma_e, self.eps_drive) {
            self.last = chi;
        }
        self.last
    }
}

/// Closed-form weak-probe steady-state susceptibility with all population
/// in |a⟩, δ = `p.delta_two_photon`:
///
/// ```text
/// χ = (γ_e/4) · [4δ(Ω_p² − 4δΔ) − 4Δγ_ab² + i(8δ²γ_e + 2γ_ab(Ω_p² + γ_ab γ_e))]
///             / |Ω_p² + (γ_e + 2iΔ)(γ_ab + 2iδ)|²
/// ```
///
/// The prefactor is γ_e/4 rather than the γ_e/2 often quoted with this
/// expression; the difference is the χ normalization described in the
/// module docs.
pub fn chi_steady_analytic(p: &LambdaParams) -> Result<Susceptibility> {
    let (wp2, d, dd, ge, gab) = (
        p.omega_p * p.omega_p,
        p.delta,
        p.delta_two_photon,
        p.gamma_e,
        p.gamma_ab,
    );
    let den = Complex64::new(wp2, 0.0) + Complex64::new(ge, 2.0 * d) * Complex64::new(gab, 2.0 * dd);
    let den2 = den.norm_sqr();
    if !(den2 > 0.0) || !den2.is_finite() {
        return Err(Error::SingularParameters);
    }
    let re = 4.0 * dd * (wp2 - 4.0 * dd * d) - 4.0 * d * gab * gab;
    let im = 8.0 * dd * dd * ge + 2.0 * gab * (wp2 + gab * ge);
    Ok(Susceptibility(Complex64::new(re, im) * (ge / 4.0 / den2)))
}

/// h = exp(i · od/2 · χ), T = |h|².
pub fn transfer(chi: Susceptibility, od: f64) -> Result<TransferSample> {
    if !(od >= 0.0) {
        return Err(Error::invalid("od", "must be >= 0"));
    }
    let h = (Complex64::i() * chi.0 * (od / 2.0)).exp();
    Ok(TransferSample { h, t: h.norm_sqr() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda::{mhz, pump_light_shift};
    use crate::lindblad::{steady_state, DriveSample};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> LambdaParams {
        LambdaParams {
            omega_s: mhz(0.95),
            omega_p: mhz(20.7),
            delta: mhz(-82.0),
            delta_two_photon: 0.0,
            gamma_e: mhz(5.225),
            gamma_ab: mhz(0.29),
            od0: 0.0131,
            branch_a: 0.5,
            branch_b: 0.5,
        }
    }

    #[test]
    fn chi_normalization() {
        let ge = mhz(5.225);
        let ws = Complex64::new(mhz(0.3), 0.0);
        assert_eq!(chi_from_rho(Complex64::new(0.0, 0.0), ws, ge, 0.0).unwrap(), Susceptibility::ZERO);
        let rho_ae = Complex64::i() * ws * 2.0 / ge;
        let chi = chi_from_rho(rho_ae, ws, ge, 0.0).unwrap();
        assert!((chi.0 - Complex64::i()).norm() < 1e-14);
    }

    #[test]
    fn degenerate_drive_is_rejected_or_held() {
        let ge = mhz(5.0);
        assert!(matches!(
            chi_from_rho(Complex64::new(1e-3, 0.0), Complex64::new(1e-20, 0.0), ge, 1e-12),
            Err(Error::DegenerateDrive { .. })
        ));
        let mut tr = ChiTracker::new(ge, 1e-6);
        let first = tr.update(Complex64::new(0.0, 1e-3), Complex64::new(1.0, 0.0));
        let held = tr.update(Complex64::new(0.5, 0.5), Complex64::new(1e-9, 0.0));
        assert_eq!(first, held);
    }

    #[test]
    fn perfect_transparency_without_dephasing() {
        let mut p = reference();
        p.gamma_ab = 0.0;
        p.delta_two_photon = 0.0;
        assert_eq!(chi_steady_analytic(&p).unwrap(), Susceptibility::ZERO);
    }

    #[test]
    fn two_level_limit() {
        let mut p = reference();
        p.omega_p = 0.0;
        p.gamma_ab = 0.0;
        for dd in [mhz(-3.0), mhz(0.4), mhz(10.0)] {
            for d in [mhz(-82.0), mhz(0.0), mhz(2.0)] {
                p.delta = d;
                p.delta_two_photon = dd;
                let chi = chi_steady_analytic(&p).unwrap().0;
                let ge = p.gamma_e;
                // Lorentzian of a bare two-level atom, one-photon detuning Δ
                let expected = Complex64::new(-4.0 * d, 2.0 * ge) * (ge / 4.0) / (ge * ge + 4.0 * d * d);
                assert!((chi - expected).norm() <= 1e-12 * expected.norm());
            }
        }
    }

    #[test]
    fn quasi_steady_loss_at_dressed_resonance() {
        let p = reference().with_dressed_detuning(0.0);
        assert!(chi_steady_analytic(&p).unwrap().0.im > 0.0);
    }

    #[test]
    fn analytic_matches_master_equation_steady_state() {
        for (dd_mhz, gab_mhz) in [(0.0, 0.29), (-1.2862, 0.29), (0.7, 1.0), (-3.0, 0.05)] {
            let mut p = reference();
            p.gamma_ab = mhz(gab_mhz);
            p.delta_two_photon = mhz(dd_mhz);
            p.omega_s = 1e-4 * p.omega_p;
            let d = DriveSample::from_params(&p);
            let ss = steady_state(&p, &d).unwrap();
            let chi_me = chi_from_rho(ss.rho_ae(), d.omega_s, p.gamma_e, 0.0).unwrap().0;
            let chi_cf = chi_steady_analytic(&p).unwrap().0;
            assert!((chi_me - chi_cf).norm() < 1e-3 * chi_cf.norm(), "{chi_me} vs {chi_cf}");
        }
    }

    #[test]
    fn chi_is_independent_of_drive_phase() {
        let mut p = reference();
        p.omega_s = 1e-4 * p.omega_p;
        let real = DriveSample::from_params(&p);
        let chi0 = chi_from_rho(steady_state(&p, &real).unwrap().rho_ae(), real.omega_s, p.gamma_e, 0.0)
            .unwrap()
            .0;
        for phi in [0.3, 1.7, -2.9] {
            let d = DriveSample::new(real.omega_s * Complex64::from_polar(1.0, phi), real.omega_p);
            let chi = chi_from_rho(steady_state(&p, &d).unwrap().rho_ae(), d.omega_s, p.gamma_e, 0.0)
                .unwrap()
                .0;
            assert!((chi - chi0).norm() < 1e-9 * chi0.norm(), "phi={phi}: {chi} vs {chi0}");
        }
    }

    #[test]
    fn chi_at_exact_dressed_resonance_matches_raman_peak() {
        // The Raman loss maximum sits at δ = Ω_p²/(4Δ), close to −δ_LS.
        let p = reference();
        let target = p.omega_p.powi(2) / (4.0 * p.delta);
        let im = |dd: f64| {
            let mut q = p;
            q.delta_two_photon = dd;
            chi_steady_analytic(&q).unwrap().0.im
        };
        let peak = im(target);
        assert!(peak > im(target + mhz(0.02)) && peak > im(target - mhz(0.02)));
        assert!((target + pump_light_shift(&p)).abs() < mhz(0.03));
    }

    fn raman_fwhm(gab: f64) -> f64 {
        let mut p = reference();
        p.gamma_ab = gab;
        let center = p.omega_p.powi(2) / (4.0 * p.delta);
        let im = |dd: f64| {
            let mut q = p;
            q.delta_two_photon = dd;
            chi_steady_analytic(&q).unwrap().0.im
        };
        let half = 0.5 * im(center);
        let n = 4000;
        let span = mhz(20.0);
        let xs: Vec<f64> = (0..=n).map(|k| center - span / 2.0 + span * k as f64 / n as f64).collect();
        let above: Vec<&f64> = xs.iter().filter(|&&x| im(x) >= half).collect();
        *above.last().unwrap() - *above.first().unwrap()
    }

    #[test]
    fn dip_width_and_depth_grow_with_dephasing() {
        let widths: Vec<f64> = [0.1, 0.3, 0.6, 1.2, 2.4].iter().map(|&g| raman_fwhm(mhz(g))).collect();
        assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");

        // On one-photon resonance the same expression is an EIT window whose
        // absorption floor rises with γ_ab.
        let mut p = reference();
        p.delta = 0.0;
        let floors: Vec<f64> = [0.0, 0.1, 0.3, 0.6, 1.2]
            .iter()
            .map(|&g| {
                p.gamma_ab = mhz(g);
                chi_steady_analytic(&p).unwrap().0.im
            })
            .collect();
        assert!(floors.windows(2).all(|w| w[1] > w[0]), "{floors:?}");
    }

    #[test]
    fn transfer_examples() {
        let t = transfer(Susceptibility(Complex64::new(0.3, 0.7)), 0.0).unwrap();
        assert_eq!(t.h, Complex64::new(1.0, 0.0));
        assert_eq!(t.t, 1.0);
        let c = 0.8;
        let od = 1.7;
        let t = transfer(Susceptibility(Complex64::new(0.0, c)), od).unwrap();
        assert_relative_eq!(t.t, (-od * c).exp(), max_relative = 1e-14);
        let t = transfer(Susceptibility(Complex64::new(0.0, -c)), od).unwrap();
        assert_relative_eq!(t.t, (od * c).exp(), max_relative = 1e-14);
        assert!(t.t > 1.0);
        assert!(transfer(Susceptibility::ZERO, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn gain_iff_negative_imaginary_part(re in -5.0f64..5.0, im in -5.0f64..5.0, od in 1e-3f64..30.0) {
            prop_assume!(im.abs() > 1e-9);
            let chi = Susceptibility(Complex64::new(re, im));
            let t = transfer(chi, od).unwrap();
            prop_assert_eq!(t.t > 1.0, chi.is_gain());
            prop_assert!((t.t - t.h.norm_sqr()).abs() <= f64::EPSILON * t.t);
        }

        #[test]
        fn real_part_only_rotates_phase(re1 in -5.0f64..5.0, re2 in -5.0f64..5.0, im in -3.0f64..3.0, od in 0.0f64..20.0) {
            let a = transfer(Susceptibility(Complex64::new(re1, im)), od).unwrap();
            let b = transfer(Susceptibility(Complex64::new(re2, im)), od).unwrap();
            prop_assert!((a.h.norm() - b.h.norm()).abs() <= 1e-12 * a.h.norm());
        }
    }
}
