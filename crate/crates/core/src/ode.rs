//! Embedded Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! Steps are chosen by local error control; solution values on a caller
//! supplied grid come from the 4th-order continuous extension, so grid
//! density never forces the step size.

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Vector-space operations the integrator needs from a state type.
pub trait OdeState: Clone {
    /// `self += a * x`
    fn scaled_add(&mut self, a: f64, x: &Self);

    /// RMS of `err` scaled componentwise by `atol + rtol * max(|y0|, |y1|)`.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;

    /// RMS magnitude, used for the initial step heuristic.
    fn rms(&self) -> f64;
}

impl OdeState for f64 {
    fn scaled_add(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        (err / (atol + rtol * y0.abs().max(y1.abs()))).abs()
    }

    fn rms(&self) -> f64 {
        self.abs()
    }
}

impl OdeState for Matrix3<Complex64> {
    fn scaled_add(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x.iter()) {
            *s += v * a;
        }
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let mut acc = 0.0;
        for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
            let sre = atol + rtol * a.re.abs().max(b.re.abs());
            let sim = atol + rtol * a.im.abs().max(b.im.abs());
            acc += (e.re / sre).powi(2) + (e.im / sim).powi(2);
        }
        (acc / 18.0).sqrt()
    }

    fn rms(&self) -> f64 {
        (self.iter().map(|z| z.norm_sqr()).sum::<f64>() / 18.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size (s). Infinite by default.
    pub max_step: f64,
    /// Steps smaller than this, relative to |t| + span, count as underflow.
    pub min_step_rel: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            min_step_rel: 1e-14,
            max_steps: 50_000_000,
        }
    }
}

impl AdaptiveOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension (Hairer's dense output for DOPRI5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combo<S: OdeState>(y: &S, h: f64, terms: &[(f64, &S)]) -> S {
    let mut out = y.clone();
    for &(c, k) in terms {
        if c != 0.0 {
            out.scaled_add(h * c, k);
        }
    }
    out
}

/// Integrates `dy/dt = f(t, y)` from `t_grid[0]` and returns `y` at every
/// grid time. The first entry is `y0` itself.
pub fn integrate_dense<S, F>(
    mut f: F,
    t_grid: &[f64],
    y0: S,
    opts: &AdaptiveOptions,
) -> Result<Vec<S>>
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    let Some(&t_start) = t_grid.first() else {
        return Ok(Vec::new());
    };
    let t_end = *t_grid.last().unwrap();
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(y0.clone());
    if t_grid.len() == 1 {
        return Ok(out);
    }
    let span = t_end - t_start;

    let mut t = t_start;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&mut f, t, &y, &k1, span, opts).min(opts.max_step).min(span);
    let mut next_out = 1;
    let mut steps = 0usize;
    let mut last_rejected = false;

    while next_out < t_grid.len() {
        if steps >= opts.max_steps {
            return Err(Error::IntegrationFailure { time: t });
        }
        let h_min = opts.min_step_rel * (t.abs() + span);
        if h < h_min {
            return Err(Error::IntegrationFailure { time: t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let k2 = f(t + C2 * h, &combo(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &combo(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &combo(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &combo(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &combo(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = combo(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let t_new = if last { t_end } else { t + h };
        let k7 = f(t_new, &y_new);

        let mut err = combo(
            &y,
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        err.scaled_add(-1.0, &y);
        let en = S::error_norm(&err, &y, &y_new, opts.rtol, opts.atol);
        steps += 1;

        if !en.is_finite() {
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        if en <= 1.0 {
            // Emit every grid point covered by [t, t_new].
            if next_out < t_grid.len() && t_grid[next_out] <= t_new {
                let dy = {
                    let mut d = y_new.clone();
                    d.scaled_add(-1.0, &y);
                    d
                };
                // r3 = h k1 - dy ; r4 = dy - h k7 - r3 ; r5 = h Σ d_i k_i
                let mut r3 = k1.clone();
                for_scale(&mut r3, h);
                r3.scaled_add(-1.0, &dy);
                let mut r4 = dy.clone();
                r4.scaled_add(-h, &k7);
                r4.scaled_add(-1.0, &r3);
                let mut r5 = k1.clone();
                for_scale(&mut r5, h * D1);
                r5.scaled_add(h * D3, &k3);
                r5.scaled_add(h * D4, &k4);
                r5.scaled_add(h * D5, &k5);
                r5.scaled_add(h * D6, &k6);
                r5.scaled_add(h * D7, &k7);

                while next_out < t_grid.len() && t_grid[next_out] <= t_new {
                    let tq = t_grid[next_out];
                    if tq == t_new {
                        out.push(y_new.clone());
                    } else {
                        let th = (tq - t) / h;
                        let th1 = 1.0 - th;
                        // y + θ(dy + θ1(r3 + θ(r4 + θ1 r5)))
                        let mut inner = r4.clone();
                        inner.scaled_add(th1, &r5);
                        let mut acc = r3.clone();
                        acc.scaled_add(th, &inner);
                        let mut acc2 = dy.clone();
                        acc2.scaled_add(th1, &acc);
                        let mut val = y.clone();
                        val.scaled_add(th, &acc2);
                        out.push(val);
                    }
                    next_out += 1;
                }
            }

            t = t_new;
            y = y_new;
            k1 = k7;
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.max_step);
            last_rejected = false;
        } else {
            let fac = (0.9 * en.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
    }
    Ok(out)
}

fn for_scale<S: OdeState>(x: &mut S, a: f64) {
    let copy = x.clone();
    x.scaled_add(a - 1.0, &copy);
}

fn initial_step<S, F>(f: &mut F, t: f64, y: &S, f0: &S, span: f64, opts: &AdaptiveOptions) -> f64
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    let d0 = S::error_norm(y, y, y, opts.rtol, opts.atol);
    let d1 = S::error_norm(f0, y, y, opts.rtol, opts.atol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    let mut y1 = y.clone();
    y1.scaled_add(h0, f0);
    let mut df = f(t + h0, &y1);
    df.scaled_add(-1.0, f0);
    let d2 = S::error_norm(&df, y, y, opts.rtol, opts.atol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
