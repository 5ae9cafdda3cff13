//! Quasi-steady-state transmission spectra and the closed-form fit.
//!
//! Spectra are sampled against the dressed Λ⁻ detuning x = δ⁻ + δ_LS. The
//! fit model is T(x) = exp(−OD · Im χ(δ)) with δ = x − x₀ − δ_LS(Ω_p, Δ),
//! so x₀ is the dressed location of the resonance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{propagate, quasi_steady_average, EnsembleConfig};
use crate::chiral::{
    field_from_separation, offset_for_resonance, resolve_scenario, Direction,
    DirectionalOverlap, FieldEnvironment, Spin, SpinPreparation,
};
use crate::error::{Error, Result};
use crate::lambda::LambdaParams;
use crate::ode::AdaptiveOptions;
use crate::response::chi_steady_analytic;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Dressed detuning samples (rad/s), strictly increasing.
    pub detunings: Vec<f64>,
    pub transmission: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Spectrum {
    pub fn new(detunings: Vec<f64>, transmission: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if detunings.len() != transmission.len() {
            return Err(Error::FitInput("detuning and transmission lengths differ".into()));
        }
        if detunings.windows(2).any(|w| !(w[1] > w[0])) || detunings.iter().any(|d| !d.is_finite()) {
            return Err(Error::FitInput("detunings must be finite and strictly increasing".into()));
        }
        if transmission.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::FitInput("transmission must be finite and >= 0".into()));
        }
        if let Some(s) = &sigma {
            if s.len() != detunings.len() {
                return Err(Error::FitInput("sigma length differs".into()));
            }
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::FitInput("sigma must be finite and > 0".into()));
            }
        }
        Ok(Self { detunings, transmission, sigma })
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }
}

/// Scenario whose spectrum is scanned. The scan variable is applied to the
/// Λ⁻ system; other species follow through their Zeeman offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanScenario {
    pub base: LambdaParams,
    pub spin: SpinPreparation,
    pub direction: Direction,
    pub env: FieldEnvironment,
    pub overlap: DirectionalOverlap,
    pub n_atoms: usize,
}

impl ScanScenario {
    /// Weighted effective parameters with the Λ⁻ system at dressed detuning `x`.
    pub fn species_at(&self, x: f64) -> Result<Vec<(f64, LambdaParams)>> {
        let offset = offset_for_resonance(Spin::Minus4, &self.env, &self.base, x);
        resolve_scenario(self.spin, self.direction, &self.env, &self.base, &self.overlap, offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanMode {
    /// Closed-form weak-probe steady state.
    Analytic,
    /// Full cascade averaged over `window` (s).
    Cascade {
        times: Vec<f64>,
        window: (f64, f64),
        ode: AdaptiveOptions,
    },
}

/// `n` evenly spaced values from `start` to `end`.
pub fn detuning_axis(start: f64, end: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(end > start) || !start.is_finite() || !end.is_finite() {
        return Err(Error::invalid("scan", "need n >= 2 and finite start < end"));
    }
    let step = (end - start) / (n - 1) as f64;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

pub fn scan_spectrum(sc: &ScanScenario, range: (f64, f64), n: usize, mode: &ScanMode) -> Result<Spectrum> {
    let xs = detuning_axis(range.0, range.1, n)?;
    let point = |x: &f64| -> Result<f64> {
        let species = sc.species_at(*x)?;
        match mode {
            ScanMode::Analytic => {
                let mut exponent = 0.0;
                for (w, p) in &species {
                    let od = sc.n_atoms as f64 * w * p.od0;
                    exponent -= od * chi_steady_analytic(p)?.0.im;
                }
                Ok(exponent.exp())
            }
            ScanMode::Cascade { times, window, ode } => {
                let mut cfg = EnsembleConfig::from_species(&species, sc.n_atoms, sc.direction, times.clone());
                cfg.ode = *ode;
                quasi_steady_average(&propagate(&cfg)?, window.0, window.1)
            }
        }
    };
    let t = xs.par_iter().map(point).collect::<Result<Vec<_>>>()?;
    Spectrum::new(xs, t, None)
}

/// Closed-form transmission of one species at dressed detuning `x`.
pub fn model_transmission(x: f64, theta: &FitParameters, omega_p: f64, gamma_e: f64) -> Result<f64> {
    let p = LambdaParams {
        omega_s: 0.0,
        omega_p,
        delta: theta.delta,
        delta_two_photon: 0.0,
        gamma_e,
        gamma_ab: theta.gamma_ab,
        od0: 0.0,
        branch_a: 0.5,
        branch_b: 0.5,
    }
    .with_dressed_detuning(x - theta.center);
    Ok((-theta.od * chi_steady_analytic(&p)?.0.im).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParameters {
    pub gamma_ab: f64,
    /// Total optical depth N · od_eff.
    pub od: f64,
    pub delta: f64,
    /// Dressed resonance location.
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub omega_p: f64,
    pub gamma_e: f64,
    /// Δ starting value, usually the configured one-photon detuning.
    pub delta_guess: f64,
    /// Overrides for the heuristic starting values.
    pub gamma_ab_guess: Option<f64>,
    pub od_guess: Option<f64>,
    /// Fit the resonance location; otherwise it is held at `fixed_center`.
    pub free_center: bool,
    pub fixed_center: f64,
    pub max_iterations: usize,
}

impl FitConfig {
    pub fn new(omega_p: f64, gamma_e: f64, delta_guess: f64) -> Self {
        Self {
            omega_p,
            gamma_e,
            delta_guess,
            gamma_ab_guess: None,
            od_guess: None,
            free_center: false,
            fixed_center: 0.0,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    pub params: FitParameters,
    /// Parameter covariance, ordered (γ_ab, OD, Δ[, x₀]). `None` when the
    /// normal matrix is singular.
    pub covariance: Option<DMatrix<f64>>,
    /// Weighted residual 2-norm.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some parameter is not identifiable from the data.
    pub degenerate: bool,
}

impl SpectrumFit {
    /// Dressed resonance location δ + δ_LS.
    pub fn resonance(&self) -> f64 {
        self.params.center
    }

    /// One-sigma errors in parameter order.
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        let c = self.covariance.as_ref()?;
        Some((0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

/// Levenberg–Marquardt fit of the closed-form model.
pub fn fit_spectrum(s: &Spectrum, cfg: &FitConfig) -> Result<SpectrumFit> {
    if s.len() < 5 {
        return Err(Error::FitInput(format!("need at least 5 points, got {}", s.len())));
    }
    if !(cfg.omega_p.is_finite() && cfg.gamma_e > 0.0 && cfg.delta_guess.is_finite() && cfg.delta_guess != 0.0) {
        return Err(Error::FitInput("omega_p, gamma_e and delta_guess must be finite, gamma_e > 0, delta != 0".into()));
    }
    let guess = initial_guess(s, cfg);
    let np = if cfg.free_center { 4 } else { 3 };
    let weights: Vec<f64> = match &s.sigma {
        Some(sig) => sig.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; s.len()],
    };
    let unpack = |v: &DVector<f64>| FitParameters {
        gamma_ab: v[0],
        od: v[1],
        delta: v[2],
        center: if cfg.free_center { v[3] } else { cfg.fixed_center },
    };
    let residuals = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let th = unpack(v);
        let mut r = DVector::zeros(s.len());
        for i in 0..s.len() {
            let m = model_transmission(s.detunings[i], &th, cfg.omega_p, cfg.gamma_e)?;
            r[i] = weights[i] * (s.transmission[i] - m);
        }
        Ok(r)
    };
    let scale = |v: &DVector<f64>| -> DVector<f64> {
        let g = cfg.gamma_e;
        let mut sc = DVector::from_vec(vec![v[0].abs().max(1e-3 * g), v[1].abs().max(1e-3), v[2].abs().max(1e-3 * g)]);
        if cfg.free_center {
            sc = sc.push(v[3].abs().max(1e-3 * g));
        }
        sc
    };
    // Jacobian of the model (not the residual) by central differences
    let jacobian = |v: &DVector<f64>| -> Result<DMatrix<f64>> {
        let sc = scale(v);
        let mut j = DMatrix::zeros(s.len(), np);
        for k in 0..np {
            let h = 1e-6 * sc[k];
            let (mut up, mut dn) = (v.clone(), v.clone());
            up[k] += h;
            // rates stay non-negative: one-sided at the bound
            let lower = if k < 2 && v[k] - h < 0.0 { v[k] } else { v[k] - h };
            dn[k] = lower;
            let col = (residuals(&dn)? - residuals(&up)?) / (up[k] - lower);
            j.set_column(k, &col);
        }
        Ok(j)
    };

    let mut theta = {
        let mut v = vec![guess.gamma_ab, guess.od, guess.delta];
        if cfg.free_center {
            v.push(guess.center);
        }
        DVector::from_vec(v)
    };
    let mut r = residuals(&theta)?;
    let mut ssr = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = ssr == 0.0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let j = jacobian(&theta)?;
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        let dmax = a.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = a.clone();
            for k in 0..np {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-12 * dmax);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = &theta + &step;
            trial[0] = trial[0].max(0.0);
            trial[1] = trial[1].max(0.0);
            let rt = residuals(&trial)?;
            let st = rt.norm_squared();
            if st <= ssr {
                let sc = scale(&theta);
                let small_step = (0..np).all(|k| (trial[k] - theta[k]).abs() <= 1e-10 * sc[k]);
                let small_gain = ssr - st <= 1e-14 * ssr;
                theta = trial;
                r = rt;
                ssr = st;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain || ssr == 0.0;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a minimum to working precision
            converged = true;
        }
    }

    // identifiability is judged on the correlation-scaled normal matrix
    let j = jacobian(&theta)?;
    let a = j.transpose() * &j;
    let d: DVector<f64> = a.diagonal().map(f64::sqrt);
    let mut degenerate = d.iter().any(|v| !(*v > 0.0)) || theta[1] <= 1e-9;
    let mut covariance = None;
    if !degenerate {
        let scaled = DMatrix::from_fn(np, np, |i, k| a[(i, k)] / (d[i] * d[k]));
        let sv = scaled.clone().svd(false, false).singular_values;
        degenerate = sv.min() <= 1e-12 * sv.max();
        if !degenerate {
            let dof = (s.len() - np).max(1) as f64;
            covariance = scaled.try_inverse().map(|inv| {
                let c = DMatrix::from_fn(np, np, |i, k| inv[(i, k)] / (d[i] * d[k])) * (ssr / dof);
                (&c + c.transpose()) * 0.5
            });
            degenerate = covariance.is_none();
        }
    }
    let fit = SpectrumFit {
        params: unpack(&theta),
        covariance,
        residual_norm: ssr.sqrt(),
        iterations,
        converged: converged && !degenerate,
        degenerate,
    };
    if !converged {
        return Err(Error::FitNotConverged { iterations, best: Box::new(fit) });
    }
    Ok(fit)
}

/// Starting values: Δ from the configuration, resonance at the deepest
/// point, γ_ab from the half-depth width of −ln T minus the pump-induced
/// broadening, OD from the depth at resonance.
fn initial_guess(s: &Spectrum, cfg: &FitConfig) -> FitParameters {
    let y: Vec<f64> = s.transmission.iter().map(|t| -t.max(1e-300).ln()).collect();
    let n = y.len();
    let imax = (0..n).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    let edge = 3.min(n / 2).max(1);
    let baseline = ((y[..edge].iter().sum::<f64>() + y[n - edge..].iter().sum::<f64>()) / (2 * edge) as f64).max(0.0);
    let half = baseline + 0.5 * (y[imax] - baseline);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if y[i] <= half {
                let s_ = if y[prev] > y[i] { (y[prev] - half) / (y[prev] - y[i]) } else { 0.0 };
                return Some(s.detunings[prev] + s_ * (s.detunings[i] - s.detunings[prev]));
            }
            prev = i;
        }
        None
    };
    let span = s.detunings[n - 1] - s.detunings[0];
    let width = if y[imax] - baseline <= 1e-12 {
        0.25 * span
    } else {
        match (cross(&mut (0..imax).rev()), cross(&mut (imax + 1..n))) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (s.detunings[imax] - l),
        (None, Some(r)) => 2.0 * (r - s.detunings[imax]),
            (None, None) => 0.25 * span,
        }
    };
    let (wp, ge, d) = (cfg.omega_p, cfg.gamma_e, cfg.delta_guess);
    let pump_broadening = wp * wp * ge / (4.0 * d * d + ge * ge);
    let gamma_ab = cfg
        .gamma_ab_guess
        .unwrap_or_else(|| (width - pump_broadening).max(0.05 * width));
    let center = if cfg.free_center { s.detunings[imax] } else { cfg.fixed_center };
    let od = cfg.od_guess.unwrap_or_else(|| {
        let th = FitParameters { gamma_ab, od: 1.0, delta: d, center };
        let f = model_transmission(s.detunings[imax], &th, wp, ge).map(|t| -t.ln()).unwrap_or(0.0);
        if f > 0.0 { (y[imax] / f).max(0.0) } else { 0.0 }
    });
    FitParameters { gamma_ab, od, delta: d, center }
}

/// Signed separation `b − a` of two fitted resonances and the field that
/// would produce it.
pub fn resonance_separation(a: &SpectrumFit, b: &SpectrumFit) -> Result<(f64, f64)> {
    if !a.converged || !b.converged {
        return Err(Error::FitInput("resonance separation needs two converged fits".into()));
    }
    let sep = b.resonance() - a.resonance();
    Ok((sep, field_from_separation(sep.abs())))
}
