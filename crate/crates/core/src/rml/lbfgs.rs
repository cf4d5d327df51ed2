//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `|g| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evals: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::LineSearchFailed => "line_search_failed",
            Termination::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsReport {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl LbfgsReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, cfg: &LbfgsConfig) -> LbfgsReport
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(cfg.memory);

    let report = |x: DVector<f64>, value: f64, g: &DVector<f64>, iterations, evaluations, termination| LbfgsReport {
        x,
        value,
        grad_norm: g.norm(),
        iterations,
        evaluations,
        termination,
    };

    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return report(x, fx, &g, 0, evaluations, Termination::NonFinite);
    }

    for iter in 0..cfg.max_iterations {
        if g.norm() <= cfg.grad_tol * (1.0 + fx.abs()) {
            return report(x, fx, &g, iter, evaluations, Termination::Converged);
        }
        let mut dir = -two_loop(&g, &pairs);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            // stale curvature information; restart from steepest descent
            pairs.clear();
            dir = -g.clone();
            slope = -g.norm_squared();
        }
        let step0 = if pairs.is_empty() { (1.0 / g.norm()).min(1.0) } else { 1.0 };
        let mut ls = line_search(&mut f, &x, fx, slope, &dir, step0, cfg);
        evaluations += ls.evaluations;
        if ls.accepted.is_none() && !pairs.is_empty() {
            // the quasi-Newton model may be at fault; retry once along -g
            pairs.clear();
            dir = -g.clone();
            ls = line_search(&mut f, &x, fx, -g.norm_squared(), &dir, (1.0 / g.norm()).min(1.0), cfg);
            evaluations += ls.evaluations;
        }
        let Some((step, f_new, g_new)) = ls.accepted else {
            return report(x, fx, &g, iter, evaluations, Termination::LineSearchFailed);
        };
        let s = &dir * step;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        x += &s;
        fx = f_new;
        g = g_new;
        if sy > f64::EPSILON * y.norm_squared() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
    }
    let termination = if g.norm() <= cfg.grad_tol * (1.0 + fx.abs()) {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    report(x, fx, &g, cfg.max_iterations, evaluations, termination)
}

/// `H g` for the implicit inverse-Hessian approximation.
fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}

struct LineSearch {
    accepted: Option<(f64, f64, DVector<f64>)>,
    evaluations: usize,
}

#[derive(Clone, Copy)]
struct Probe {
    step: f64,
    value: f64,
    slope: f64,
}

/// Bracketing phase followed by zoom with safeguarded cubic interpolation.
fn line_search<F>(
    f: &mut F,
    x: &DVector<f64>,
    f0: f64,
    slope0: f64,
    dir: &DVector<f64>,
    step0: f64,
    cfg: &LbfgsConfig,
) -> LineSearch
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut evaluations = 0;
    let mut eval = |step: f64, evaluations: &mut usize| {
        *evaluations += 1;
        let (v, g) = f(&(x + dir * step));
        let slope = g.dot(dir);
        (Probe { step, value: v, slope }, g)
    };
    // Near a minimizer decreases drop below the rounding of f; the
    // approximate test of Hager and Zhang (derivative form of sufficient
    // decrease, value within rounding of f0) takes over there.
    let noise = 1e-12 * (1.0 + f0.abs());
    let armijo = |p: &Probe| {
        p.value <= f0 + cfg.c1 * p.step * slope0
            || (p.value <= f0 + noise && p.slope <= (2.0 * cfg.c1 - 1.0) * slope0)
    };
    let curvature = |p: &Probe| p.slope.abs() <= -cfg.c2 * slope0;

    let mut prev = Probe {
        step: 0.0,
        value: f0,
        slope: slope0,
    };
    let mut step = step0;
    let mut bracket = None;
    while evaluations < cfg.max_line_search_evals {
        let (p, g) = eval(step, &mut evaluations);
        if !p.value.is_finite() || !p.slope.is_finite() {
            // shrink back towards the last finite point
            step = prev.step + 0.5 * (step - prev.step);
            continue;
        }
        if !armijo(&p) || (prev.step > 0.0 && p.value > prev.value + noise) {
            bracket = Some((prev, p));
            break;
        }
        if curvature(&p) {
            return LineSearch {
                accepted: Some((p.step, p.value, g)),
                evaluations,
            };
        }
        if p.slope >= 0.0 {
            bracket = Some((p, prev));
            break;
        }
        prev = p;
        step *= 2.0;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return LineSearch {
            accepted: None,
            evaluations,
        };
    };
    while evaluations < cfg.max_line_search_evals {
        let trial = interpolate(&lo, &hi);
        let (p, g) = eval(trial, &mut evaluations);
        // ties within rounding are settled by the slope below
        if !p.value.is_finite() || !armijo(&p) || p.value > lo.value + noise {
            hi = p;
        } else {
            if curvature(&p) {
                return LineSearch {
                    accepted: Some((p.step, p.value, g)),
                    evaluations,
                };
            }
            if p.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
        if (hi.step - lo.step).abs() <= 1e-16 * lo.step.abs().max(1.0) {
            break;
        }
    }
    // accept the best sufficient-decrease point if the zoom stalled
    let accepted = if lo.step > 0.0 && lo.value < f0 {
        let (p, g) = eval(lo.step, &mut evaluations);
        Some((p.step, p.value, g))
    } else {
        None
    };
    LineSearch { accepted, evaluations }
}

/// Minimizer of the cubic through two probes, kept inside the middle 80% of
/// the interval; falls back to bisection.
fn interpolate(a: &Probe, b: &Probe) -> f64 {
    let (lo, hi) = if a.step < b.step { (a.step, b.step) } else { (b.step, a.step) };
    let width = hi - lo;
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    let disc = d1 * d1 - a.slope * b.slope;
    let mut t = f64::NAN;
    if disc >= 0.0 && b.value.is_finite() {
        let d2 = disc.sqrt().copysign(b.step - a.step);
        let denom = b.slope - a.slope + 2.0 * d2;
        if denom != 0.0 {
            t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
        }
    }
    if !t.is_finite() || t < lo + 0.1 * width || t > hi - 0.1 * width {
        t = 0.5 * (lo + hi);
    }
    t
}
