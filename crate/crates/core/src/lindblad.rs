//! Master equation for one driven Λ atom.
//!
//! Rotating-frame Hamiltonian (ħ = 1, basis {a, b, e}):
//!
//! ```text
//! H = −δ |a⟩⟨a| + (Δ − δ) |e⟩⟨e| + ½ Ω_p |e⟩⟨b| + ½ Ω_s |e⟩⟨a| + h.c.
//! ```
//!
//! so that the signal one-photon detuning is H_ee − H_aa = Δ and the bare
//! two-photon detuning is H_bb − H_aa = δ. Jump operators:
//!
//! * `√(branch_a γ_e) |a⟩⟨e|` and `√(branch_b γ_e) |b⟩⟨e|` (spontaneous decay),
//! * `√γ_ab |b⟩⟨b|` (ground-state dephasing of the pump-coupled level).
//!
//! With these choices the ground coherence ρ_ab decays at γ_ab / 2, ρ_ae at
//! γ_e / 2, and the weak-probe steady state reproduces the closed-form
//! susceptibility in [`crate::response::chi_steady_analytic`] exactly.

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lambda::{LambdaParams, Level};
use crate::ode::{integrate_dense, AdaptiveOptions};

pub type Operator = Matrix3<Complex64>;
/// Generator acting on column-stacked vec(ρ).
pub type Superoperator = SMatrix<Complex64, 9, 9>;

const A: usize = 0;
const B: usize = 1;
const E: usize = 2;

#[inline]
fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// 3×3 density matrix in the {a, b, e} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Operator);

impl DensityMatrix {
    pub fn pure(level: Level) -> Self {
        let mut m = Operator::zeros();
        m[(level.index(), level.index())] = c(1.0);
        Self(m)
    }

    /// Incoherent mixture Σ w_k |k⟩⟨k|. Weights are normalized.
    pub fn diagonal(weights: [f64; 3]) -> Self {
        let s: f64 = weights.iter().sum();
        let mut m = Operator::zeros();
        for (k, w) in weights.iter().enumerate() {
            m[(k, k)] = c(w / s);
        }
        Self(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    #[inline]
    pub fn element(&self, row: Level, col: Level) -> Complex64 {
        self.0[(row.index(), col.index())]
    }

    #[inline]
    pub fn population(&self, level: Level) -> f64 {
        self.element(level, level).re
    }

    /// ρ_ae = ⟨a|ρ|e⟩, the coherence that sources the signal response.
    #[inline]
    pub fn rho_ae(&self) -> Complex64 {
        self.0[(A, E)]
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// max |ρ − ρ†| elementwise.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.0 - self.0.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()) * c(0.5);
        h.symmetric_eigenvalues().min()
    }

    /// Checks Hermiticity, unit trace and positivity against the given floors.
    pub fn is_physical(&self, herm_tol: f64, trace_tol: f64, eig_floor: f64) -> bool {
        self.hermiticity_error() <= herm_tol
            && (self.trace() - c(1.0)).norm() <= trace_tol
            && self.min_eigenvalue() >= eig_floor
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("rho0", "non-finite entry"));
        }
        if !self.is_physical(1e-12, 1e-9, -1e-9) {
            return Err(Error::invalid(
                "rho0",
                "not a Hermitian, unit-trace, positive semidefinite matrix",
            ));
        }
        Ok(())
    }
}

/// Instantaneous complex Rabi amplitudes of signal and pump (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub omega_s: Complex64,
    pub omega_p: Complex64,
}

impl DriveSample {
    pub fn new(omega_s: Complex64, omega_p: Complex64) -> Self {
        Self { omega_s, omega_p }
    }

    /// Real drives taken from the parameter set.
    pub fn from_params(p: &LambdaParams) -> Self {
        Self::new(c(p.omega_s), c(p.omega_p))
    }

    pub fn off() -> Self {
        Self::new(c(0.0), c(0.0))
    }
}

pub fn hamiltonian(p: &LambdaParams, d: &DriveSample) -> Operator {
    let mut h = Operator::zeros();
    h[(A, A)] = c(-p.delta_two_photon);
    h[(E, E)] = c(p.delta - p.delta_two_photon);
    h[(E, B)] = d.omega_p * 0.5;
    h[(B, E)] = d.omega_p.conj() * 0.5;
    h[(E, A)] = d.omega_s * 0.5;
    h[(A, E)] = d.omega_s.conj() * 0.5;
    h
}

/// Jump operators paired with their rates.
pub fn collapse_operators(p: &LambdaParams) -> Vec<(f64, Operator)> {
    let mut decay_a = Operator::zeros();
    decay_a[(A, E)] = c(1.0);
    let mut decay_b = Operator::zeros();
    decay_b[(B, E)] = c(1.0);
    let mut dephase = Operator::zeros();
    dephase[(B, B)] = c(1.0);
    vec![
        (p.branch_a * p.gamma_e, decay_a),
        (p.branch_b * p.gamma_e, decay_b),
        (p.gamma_ab, dephase),
    ]
}

/// Column-stacking vectorization.
pub fn vectorize(rho: &Operator) -> SVector<Complex64, 9> {
    SVector::<Complex64, 9>::from_column_slice(rho.as_slice())
}

pub fn unvectorize(v: &SVector<Complex64, 9>) -> Operator {
    Operator::from_column_slice(v.as_slice())
}

/// Generator L with d vec(ρ)/dt = L vec(ρ), using vec(XρY) = (Yᵀ ⊗ X) vec(ρ).
pub fn build_liouvillian(p: &LambdaParams, d: &DriveSample) -> Superoperator {
    let id = Operator::identity();
    let h = hamiltonian(p, d);
    let mut l: Superoperator =
        (id.kronecker(&h) - h.transpose().kronecker(&id)) * Complex64::new(0.0, -1.0);
    for (rate, op) in collapse_operators(p) {
        if rate == 0.0 {
            continue;
        }
        let ldl = op.adjoint() * op;
        let term: Superoperator = op.conjugate().kronecker(&op)
            - id.kronecker(&ldl) * c(0.5)
            - ldl.transpose().kronecker(&id) * c(0.5);
        l += term * c(rate);
    }
    l
}

/// Direct-form right-hand side of the master equation, hand-expanded for
/// the fixed jump-operator structure. Agrees with [`build_liouvillian`].
#[derive(Debug, Clone, Copy)]
pub struct MasterEquation {
    params: LambdaParams,
    decay_a: f64,
    decay_b: f64,
}

impl MasterEquation {
    pub fn new(params: LambdaParams) -> Self {
        Self {
            decay_a: params.branch_a * params.gamma_e,
            decay_b: params.branch_b * params.gamma_e,
            params,
        }
    }

    pub fn params(&self) -> &LambdaParams {
        &self.params
    }

    pub fn rhs(&self, d: &DriveSample, rho: &Operator) -> Operator {
        let h = hamiltonian(&self.params, d);
        let mut out = (h * rho - rho * h) * Complex64::new(0.0, -1.0);
        let ge = self.params.gamma_e;
        let gd = self.params.gamma_ab;
        let ree = rho[(E, E)];
        out[(A, A)] += ree * self.decay_a;
        out[(B, B)] += ree * self.decay_b;
        out[(E, E)] -= ree * ge;
        for x in [A, B] {
            out[(x, E)] -= rho[(x, E)] * (0.5 * ge);
            out[(E, x)] -= rho[(E, x)] * (0.5 * ge);
        }
        for x in [A, E] {
            out[(x, B)] -= rho[(x, B)] * (0.5 * gd);
            out[(B, x)] -= rho[(B, x)] * (0.5 * gd);
        }
        out
    }
}

/// Sampled trajectory of one atom.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl EvolutionResult {
    pub fn rho_ae(&self) -> Vec<Complex64> {
        self.states.iter().map(DensityMatrix::rho_ae).collect()
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("t_grid", "must not be empty"));
    }
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("t_grid", "non-finite time"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Integrates the master equation under a time-dependent drive and samples
/// ρ on `t_grid`. Integration starts at `t_grid[0]` from `rho0`.
pub fn evolve<F>(
    p: &LambdaParams,
    drive: F,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &AdaptiveOptions,
) -> Result<EvolutionResult>
where
    F: Fn(f64) -> DriveSample,
{
    p.validate()?;
    rho0.validate()?;
    check_grid(t_grid)?;
    let me = MasterEquation::new(*p);
    let states = integrate_dense(|t, rho: &Operator| me.rhs(&drive(t), rho), t_grid, rho0.0, opts)?;
    Ok(EvolutionResult {
        times: t_grid.to_vec(),
        states: states.into_iter().map(DensityMatrix).collect(),
    })
}

/// Stationary state of a constant drive via the null space of the generator.
pub fn steady_state(p: &LambdaParams, d: &DriveSample) -> Result<DensityMatrix> {
    p.validate()?;
    let l = build_liouvillian(p, d);
    let svd = l.svd(false, true);
    let sv = svd.singular_values;
    let v_t = svd.v_t.expect("requested V^T");
    let smax = sv.max();
    if smax == 0.0 {
        return Err(Error::NoUniqueSteadyState);
    }
    let tol = 1e-10 * smax;
    let kernel: Vec<usize> = (0..9).filter(|&k| sv[k] <= tol).collect();
    let imin = (0..9)
        .min_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap())
        .unwrap();
    if kernel.len() > 1 {
        return Err(Error::NoUniqueSteadyState);
    }
    // Right singular vector for the smallest singular value.
    let v: SVector<Complex64, 9> = v_t.row(imin).adjoint();
    let mut rho = unvectorize(&v);
    let tr = rho.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::NoUniqueSteadyState);
    }
    rho /= tr;
    rho = (rho + rho.adjoint()) * c(0.5);
    Ok(DensityMatrix(rho))
}

/// Exact propagation for a constant drive with the matrix exponential of
/// the generator, applied step by step on `t_grid`.
pub fn propagate_constant_expm(
    p: &LambdaParams,
    d: &DriveSample,
    rho0: &DensityMatrix,
    t_grid: &[f64],
) -> Result<EvolutionResult> {
    check_grid(t_grid)?;
    let l = build_liouvillian(p, d);
    let mut v = vectorize(&rho0.0);
    let mut states = vec![*rho0];
    let mut cache: Option<(f64, Superoperator)> = None;
    for w in t_grid.windows(2) {
        let dt = w[1] - w[0];
        let prop = match &cache {
            Some((h, m)) if (h - dt).abs() <= 1e-15 * dt.abs() => *m,
            _ => {
                let m = (l * c(dt)).exp();
                cache = Some((dt, m));
                m
            }
        };
        v = prop * v;
        states.push(DensityMatrix(unvectorize(&v)));
    }
    Ok(EvolutionResult {
        times: t_grid.to_vec(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda::{mhz, two_photon_rabi};
    use approx::assert_relative_eq;

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
        .with_dressed_detuning(0.0)
    }

    fn apply(l: &Superoperator, rho: &Operator) -> Operator {
        unvectorize(&(l * vectorize(rho)))
    }

    #[test]
    fn dark_state_is_stationary() {
        let mut p = reference();
        p.omega_s = 0.0;
        p.omega_p = 0.0;
        let l = build_liouvillian(&p, &DriveSample::from_params(&p));
        let out = apply(&l, &DensityMatrix::pure(Level::B).0);
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn excited_population_decays_at_gamma_e() {
        let p = reference();
        let l = build_liouvillian(&p, &DriveSample::off());
        let out = apply(&l, &DensityMatrix::pure(Level::E).0);
        assert_relative_eq!(out[(E, E)].re, -p.gamma_e, max_relative = 1e-12);
        assert_relative_eq!(out[(A, A)].re, p.branch_a * p.gamma_e, max_relative = 1e-12);
    }

    #[test]
    fn ground_coherence_decays_at_half_gamma_ab() {
        let p = reference();
        let l = build_liouvillian(&p, &DriveSample::off());
        let mut rho = Operator::zeros();
        for (i, j) in [(A, A), (B, B), (A, B), (B, A)] {
            rho[(i, j)] = c(0.5);
        }
        let out = apply(&l, &rho);
        // drives off: ρ_ab evolves only by the bare detuning and dephasing
        let rate = -(out[(A, B)] / rho[(A, B)]).re;
        assert_relative_eq!(rate, 0.5 * p.gamma_ab, max_relative = 1e-12);
    }

    #[test]
    fn ground_coherence_decay_by_integration() {
        // Fit the envelope of |ρ_ab(t)| from the integrator instead of reading the generator.
        let p = reference();
        let mut rho = Operator::zeros();
        for (i, j) in [(A, A), (B, B), (A, B), (B, A)] {
            rho[(i, j)] = c(0.5);
        }
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1e-6).collect();
        let res = evolve(&p, |_| DriveSample::off(), &DensityMatrix(rho), &grid, &AdaptiveOptions::default()).unwrap();
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (t, s) in grid.iter().zip(&res.states) {
            let y = s.element(Level::A, Level::B).norm().ln();
            sx += t;
            sy += y;
            sxx += t * t;
            sxy += t * y;
        }
        let n = grid.len() as f64;
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert_relative_eq!(-slope, 0.5 * p.gamma_ab, max_relative = 1e-6);
    }

    #[test]
    fn direct_rhs_matches_superoperator() {
        let p = reference();
        let d = DriveSample::new(Complex64::new(mhz(0.7), mhz(-0.3)), Complex64::new(mhz(20.7), mhz(1.0)));
        let l = build_liouvillian(&p, &d);
        let me = MasterEquation::new(p);
        let mut rho = Operator::zeros();
        let vals = [0.3, 0.5, 0.2];
        for i in 0..3 {
            rho[(i, i)] = c(vals[i]);
        }
        rho[(A, B)] = Complex64::new(0.1, 0.05);
        rho[(B, A)] = rho[(A, B)].conj();
        rho[(A, E)] = Complex64::new(-0.02, 0.07);
        rho[(E, A)] = rho[(A, E)].conj();
        rho[(B, E)] = Complex64::new(0.03, 0.01);
        rho[(E, B)] = rho[(B, E)].conj();
        let a = apply(&l, &rho);
        let b = me.rhs(&d, &rho);
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((a - b).iter().all(|z| z.norm() < 1e-12 * scale));
    }

    #[test]
    fn resonant_rabi_oscillation() {
        let mut p = reference();
        p.delta = 0.0;
        p.delta_two_photon = 0.0;
        p.omega_s = 0.0;
        p.gamma_e = 1e-30;
        p.gamma_ab = 0.0;
        let wp = mhz(2.0);
        let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 5e-9).collect();
        let res = evolve(&p, |_| DriveSample::new(c(0.0), c(wp)), &DensityMatrix::pure(Level::B), &grid, &AdaptiveOptions::default()).unwrap();
        for (t, s) in grid.iter().zip(&res.states) {
            let exact = (wp * t / 2.0).cos().powi(2);
            assert!((s.population(Level::B) - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn spontaneous_decay_and_branching() {
        let mut p = reference();
        p.branch_a = 0.3;
        p.branch_b = 0.7;
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 20e-9).collect();
        let res = evolve(&p, |_| DriveSample::off(), &DensityMatrix::pure(Level::E), &grid, &AdaptiveOptions::default()).unwrap();
        for (t, s) in grid.iter().zip(&res.states) {
            assert!((s.population(Level::E) - (-p.gamma_e * t).exp()).abs() < 1e-8);
        }
        let last = res.final_state().unwrap();
        assert!((last.population(Level::A) - 0.3 * (1.0 - (-p.gamma_e * 2e-6).exp())).abs() < 1e-8);
    }

    #[test]
    fn degenerate_kernel_is_rejected() {
        let mut p = reference();
        p.omega_s = 0.0;
        p.omega_p = 0.0;
        assert!(matches!(
            steady_state(&p, &DriveSample::from_params(&p)),
            Err(Error::NoUniqueSteadyState)
        ));
    }

    #[test]
    fn optical_pumping_into_signal_ground_state() {
        let mut p = reference();
        p.omega_s = 0.0;
        let ss = steady_state(&p, &DriveSample::from_params(&p)).unwrap();
        assert!((ss.population(Level::A) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn steady_state_is_annihilated_by_generator() {
        let p = reference();
        let d = DriveSample::from_params(&p);
        let ss = steady_state(&p, &d).unwrap();
        let l = build_liouvillian(&p, &d);
        let r = apply(&l, &ss.0);
        assert!(r.iter().all(|z| z.norm() < 1e-6 * p.gamma_e * 1e-6));
        assert!(ss.is_physical(1e-12, 1e-12, -1e-12));
    }

    #[test]
    fn adaptive_matches_matrix_exponential() {
        let p = reference();
        let d = DriveSample::from_params(&p);
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 * 2e-9).collect();
        let rho0 = DensityMatrix::pure(Level::B);
        let a = evolve(&p, |_| d, &rho0, &grid, &AdaptiveOptions::default()).unwrap();
        let b = propagate_constant_expm(&p, &d, &rho0, &grid).unwrap();
        let worst = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| (x.0 - y.0).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    #[test]
    fn population_inversion_crosses_near_quarter_period() {
        // Weak decoherence so the two-photon Rabi oscillation is clean.
        let mut p = reference();
        p.gamma_ab = 0.0;
        p.gamma_e = mhz(0.05);
        let d = DriveSample::from_params(&p);
        let w2p = two_photon_rabi(&p).unwrap();
        let quarter = std::f64::consts::PI / w2p / 2.0;
        let grid: Vec<f64> = (0..=600).map(|k| k as f64 * quarter / 300.0).collect();
        let res = propagate_constant_expm(&p, &d, &DensityMatrix::pure(Level::B), &grid).unwrap();
        let inv: Vec<f64> = res
            .states
            .iter()
            .map(|s| s.population(Level::B) - s.population(Level::A))
            .collect();
        let k = inv.iter().position(|&x| x < 0.0).unwrap();
        let t_cross = grid[k];
        assert!((t_cross / quarter - 1.0).abs() < 0.05, "crossing at {t_cross}, quarter {quarter}");
    }
}
