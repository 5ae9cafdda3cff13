//! Propagation of the signal through the atom array.
//!
//! Atom k sees the launched signal multiplied by the product of the transfer
//! functions of all atoms upstream of it. Atoms are solved one after another
//! on a shared time grid; the running product is kept on the grid and
//! interpolated linearly when the integrator asks for off-grid drive values.

use num_complex::Complex64;

use crate::chiral::Direction;
use crate::error::{Error, Result};
use crate::lambda::{Level, LambdaParams};
use crate::lindblad::{check_grid, DensityMatrix, DriveSample, MasterEquation, Operator};
use crate::ode::{integrate_dense, AdaptiveOptions};
use crate::response::{transfer, ChiTracker, DEFAULT_DRIVE_EPS_REL};

/// Uniform grid from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::invalid("grid", "need finite start <= end and step > 0"));
    }
    let n = ((end - start) / step).round() as usize;
    if (start + n as f64 * step - end).abs() > 1e-6 * step {
        return Err(Error::invalid("grid", "span is not a multiple of the step"));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Default dynamics grid: −1 µs to 15 µs in 2 ns steps.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(-1e-6, 15e-6, 2e-9).expect("valid default grid")
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    /// Effective parameters of each atom in the order the light meets them.
    /// `omega_s` is the Rabi frequency the launched field would produce on
    /// that atom.
    pub atoms: Vec<LambdaParams>,
    pub times: Vec<f64>,
    pub rho0: DensityMatrix,
    /// Pump is off before this time and on (at `omega_p`) after it.
    pub pump_on: f64,
    pub ode: AdaptiveOptions,
    /// Drive floor for χ, relative to each atom's launched Rabi frequency.
    pub eps_drive_rel: f64,
}

impl EnsembleConfig {
    pub fn homogeneous(p: LambdaParams, n_atoms: usize, times: Vec<f64>) -> Self {
        Self {
            atoms: vec![p; n_atoms],
            times,
            rho0: DensityMatrix::pure(Level::B),
            pump_on: 0.0,
            ode: AdaptiveOptions::default(),
            eps_drive_rel: DEFAULT_DRIVE_EPS_REL,
        }
    }

    /// Array of `n_atoms` built from weighted species.
    ///
    /// Species are interleaved deterministically along the array so that
    /// every prefix holds them in proportion to their weights. The array is
    /// fixed in space: 2→1 propagation meets the atoms in reverse order.
    pub fn from_species(
        species: &[(f64, LambdaParams)],
        n_atoms: usize,
        dir: Direction,
        times: Vec<f64>,
    ) -> Self {
        let mut counts = vec![0usize; species.len()];
        let mut atoms = Vec::with_capacity(n_atoms);
        for k in 0..n_atoms {
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for (s, (w, _)) in species.iter().enumerate() {
                let deficit = w * (k + 1) as f64 - counts[s] as f64;
                if deficit > best_deficit {
                    best = s;
                    best_deficit = deficit;
                }
            }
            counts[best] += 1;
            atoms.push(species[best].1);
        }
        if dir == Direction::Backward {
            atoms.reverse();
        }
        Self {
            atoms,
            ..Self::homogeneous(species[0].1, 0, times)
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.times)?;
        self.rho0.validate()?;
        if !self.pump_on.is_finite() {
            return Err(Error::invalid("pump_on", "must be finite"));
        }
        if !(self.eps_drive_rel > 0.0) {
            return Err(Error::invalid("eps_drive_rel", "must be > 0"));
        }
        for p in &self.atoms {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionTrace {
    pub times: Vec<f64>,
    /// Power transmission |field|².
    pub transmission: Vec<f64>,
    /// Output field relative to the launched field, ∏ h_k.
    pub field: Vec<Complex64>,
}

impl TransmissionTrace {
    pub fn unity(times: Vec<f64>) -> Self {
        let n = times.len();
        Self {
            times,
            transmission: vec![1.0; n],
            field: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Time and value of the maximum transmission.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.transmission)
            .fold(None, |best: Option<(f64, f64)>, (&t, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((t, v)),
            })
    }

    /// First time after the peak at which T drops to `level` or below,
    /// linearly interpolated between samples.
    pub fn first_crossing_after_peak(&self, level: f64) -> Option<f64> {
        let (tp, _) = self.peak()?;
        let start = self.times.iter().position(|&t| t == tp)?;
        for i in start..self.times.len().saturating_sub(1) {
            let (a, b) = (self.transmission[i], self.transmission[i + 1]);
            if a > level && b <= level {
                let s = (a - level) / (a - b);
                return Some(self.times[i] + s * (self.times[i + 1] - self.times[i]));
            }
        }
        None
    }

    /// Linear interpolation of T at `t` (clamped to the span).
    pub fn transmission_at(&self, t: f64) -> f64 {
        let interp = GridInterp::new(&self.times);
        interp.eval(&self.transmission, t, |a, b, s| a + (b - a) * s)
    }
}

/// Everything known about one atom after it has been solved.
pub struct AtomRecord<'a> {
    pub index: usize,
    pub params: &'a LambdaParams,
    pub states: &'a [Operator],
    /// This atom's transfer function on the grid.
    pub h: &'a [Complex64],
    /// Field after this atom, relative to the launched field.
    pub field: &'a [Complex64],
}

/// Runs the cascade.
pub fn propagate(cfg: &EnsembleConfig) -> Result<TransmissionTrace> {
    propagate_observed(cfg, |_| {})
}

/// [`propagate`] with a callback after every atom.
pub fn propagate_observed<O>(cfg: &EnsembleConfig, mut observer: O) -> Result<TransmissionTrace>
where
    O: FnMut(&AtomRecord<'_>),
{
    cfg.validate()?;
    let times = &cfg.times;
    let mut field = vec![Complex64::new(1.0, 0.0); times.len()];
    let interp = GridInterp::new(times);
    let split = times.partition_point(|&t| t < cfg.pump_on);
    let mut h = vec![Complex64::new(0.0, 0.0); times.len()];

    for (k, p) in cfg.atoms.iter().enumerate() {
        let wrap = |e| Error::AtomFailure { atom: k, source: Box::new(e) };
        let states = solve_atom(p, cfg, &field, &interp, split).map_err(wrap)?;
        let mut tracker = ChiTracker::new(p.gamma_e, cfg.eps_drive_rel * p.omega_s);
        for i in 0..times.len() {
            let drive = field[i] * p.omega_s;
            let chi = tracker.update(states[i][(0, 2)], drive);
            h[i] = transfer(chi, p.od0).map_err(wrap)?.h;
            field[i] *= h[i];
        }
        observer(&AtomRecord {
            index: k,
            params: p,
            states: &states,
            h: &h,
            field: &field,
        });
    }
    Ok(TransmissionTrace {
        times: times.clone(),
        transmission: field.iter().map(|z| z.norm_sqr()).collect(),
        field,
    })
}

/// Integrates one atom under the upstream field, in two pieces split at the
/// pump turn-on so the integrator never steps across the discontinuity.
fn solve_atom(
    p: &LambdaParams,
    cfg: &EnsembleConfig,
    field: &[Complex64],
    interp: &GridInterp,
    split: usize,
) -> Result<Vec<Operator>> {
    let me = MasterEquation::new(*p);
    let times = &cfg.times;
    let drive = |t: f64, pump: bool| DriveSample {
        omega_s: interp.eval(field, t, |a, b, s| a + (b - a) * s) * p.omega_s,
        omega_p: Complex64::new(if pump { p.omega_p } else { 0.0 }, 0.0),
    };
    let run = |grid: &[f64], rho0: Operator, pump: bool| {
        integrate_dense(|t, rho: &Operator| me.rhs(&drive(t, pump), rho), grid, rho0, &cfg.ode)
    };

    if split == 0 {
        return run(times, cfg.rho0.0, true);
    }
    if split == times.len() {
        return run(times, cfg.rho0.0, false);
    }
    // pre-pump piece ends exactly at pump_on
    let mut pre_grid = times[..split].to_vec();
    pre_grid.push(cfg.pump_on);
    let mut pre = run(&pre_grid, cfg.rho0.0, false)?;
    let at_on = pre.pop().expect("non-empty");
    let on_grid = times[split] == cfg.pump_on;
    let mut post_grid = Vec::with_capacity(times.len() - split + 1);
    if !on_grid {
        post_grid.push(cfg.pump_on);
    }
    post_grid.extend_from_slice(&times[split..]);
    let mut post = run(&post_grid, at_on, true)?;
    if !on_grid {
        post.remove(0);
    }
    pre.extend(post);
    Ok(pre)
}

/// Mean of T over samples with t in [t1, t2].
pub fn quasi_steady_average(trace: &TransmissionTrace, t1: f64, t2: f64) -> Result<f64> {
    let (Some(&first), Some(&last)) = (trace.times.first(), trace.times.last()) else {
        return Err(Error::EmptyWindow { start: t1, end: t2 });
    };
    if !(t1 <= t2) || t1 < first || t2 > last {
        return Err(Error::invalid("window", "must lie within the trace span"));
    }
    let (sum, n) = trace
        .times
        .iter()
        .zip(&trace.transmission)
        .filter(|(t, _)| **t >= t1 && **t <= t2)
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::EmptyWindow { start: t1, end: t2 });
    }
    Ok(sum / n as f64)
}

/// Index lookup on a sorted grid with a fast path for uniform grids.
struct GridInterp<'a> {
    times: &'a [f64],
    uniform: Option<(f64, f64)>,
}

impl<'a> GridInterp<'a> {
    fn new(times: &'a [f64]) -> Self {
        let uniform = match times {
            [t0, .., tn] if times.len() > 2 => {
                let dt = (tn - t0) / (times.len() - 1) as f64;
                let ok = times
                    .iter()
                    .enumerate()
                    .all(|(i, &t)| (t - (t0 + i as f64 * dt)).abs() <= 1e-9 * dt);
                ok.then_some((*t0, dt))
            }
            _ => None,
        };
        Self { times, uniform }
    }

    fn eval<T: Copy>(&self, values: &[T], t: f64, lerp: impl Fn(T, T, f64) -> T) -> T {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return values[0];
        }
        if t >= self.times[n - 1] {
            return values[n - 1];
        }
        let i = match self.uniform {
            Some((t0, dt)) => (((t - t0) / dt) as usize).min(n - 2),
            None => self.times.partition_point(|&x| x <= t) - 1,
        };
        let (a, b) = (self.times[i], self.times[i + 1]);
        lerp(values[i], values[i + 1], (t - a) / (b - a))
    }
}
