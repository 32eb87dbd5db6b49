//! Constrained minimization of the reduced energy.
//!
//! The search space is the open admissible set where the translation
//! constants resolve; trial points outside it are rejected by the line
//! search rather than penalized. Directions come from L-BFGS with a
//! per-mode spectral preconditioner: the Hessian at the vacuum is
//! block-diagonal in Fourier space with blocks |k|^2 M + lambda S, and
//! inverting those blocks removes the stiffness of both the Laplacian
//! and the large coupling.

use std::collections::VecDeque;
use std::time::Instant;

use rustfft::num_complex::Complex;

use cshv_core::constraints;
use cshv_core::linalg;

use crate::energy::{self, Diagnostics, Evaluation, Params, State};
use crate::torus::{self, Field};
use crate::{Error, Result};

/// How the starting point is produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitMode {
    /// w = -u0, the vacuum of the deep-coupling limit. Only admissible when
    /// lambda exceeds max_i 4 n b_i / area.
    Limit,
    /// Component-wise relaxation of the single-component self-dual equation
    /// at stiffness mu (default 2 lambda), then mean removal.
    ScalarCs { mu: Option<f64> },
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    /// Convergence threshold on the L2 norm of the constrained gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
    /// Feasibility floor: trial points need every admissibility margin to be
    /// at least this fraction of area^2.
    pub margin_floor_rel: f64,
    /// Use the spectral vacuum-Hessian preconditioner.
    pub precondition: bool,
    /// Print per-iteration progress to stderr.
    pub verbose: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            memory: 10,
            margin_floor_rel: 1e-8,
            precondition: true,
            verbose: false,
        }
    }
}

/// Why a run stopped short of the gradient tolerance.
#[derive(Clone, Debug, PartialEq)]
pub enum Failure {
    /// Every productive step was blocked by the admissibility boundary.
    BoundaryTrap { min_margin: f64 },
    /// No feasible step achieved sufficient decrease.
    LineSearchStall,
    IterationCap,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::BoundaryTrap { min_margin } => {
                write!(f, "boundary trap: smallest admissibility margin {min_margin:e}")
            }
            Failure::LineSearchStall => write!(f, "line search stall"),
            Failure::IterationCap => write!(f, "iteration cap reached"),
        }
    }
}

/// Outcome of one minimization, including the invariant monitors checked
/// along the way.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub func_evals: usize,
    pub j: f64,
    pub grad_norm: f64,
    /// Admissibility margins at the final point.
    pub margins: Vec<f64>,
    /// Largest |mean w_i| observed before reprojection.
    pub mean_drift: f64,
    /// Whether J decreased (to rounding) at every accepted step.
    pub j_monotone: bool,
    /// Whether the translation-constant bounds held at every accepted step.
    pub translation_bounds_all_iterates: bool,
    pub min_margin_seen: f64,
    /// Empirical coercivity defect: max over iterates of
    /// (alpha0 / 4) * gradient-energy - J. Finite and stable when the
    /// functional controls the gradient energy.
    pub coercivity_offset: f64,
    pub wall_time: f64,
    pub failure: Option<Failure>,
    pub diagnostics: Diagnostics,
}

/// Produces the starting fields for a run.
pub fn initial_guess(params: &Params, mode: InitMode) -> Result<Vec<Field>> {
    match mode {
        InitMode::Limit => {
            let threshold = params.limit_threshold();
            if params.lambda() <= threshold {
                return Err(Error::InitInfeasible {
                    lambda: params.lambda(),
                    threshold,
                });
            }
            Ok(params
                .background_fields()
                .iter()
                .map(|u0| {
                    let mut w = u0.clone();
                    for v in w.values_mut() {
                        *v = -*v;
                    }
                    w.subtract_mean();
                    w
                })
                .collect())
        }
        InitMode::ScalarCs { mu } => scalar_cs_guess(params, mu.unwrap_or(2.0 * params.lambda())),
    }
}

/// Semi-implicit relaxation of lap v = mu e^{u0+v}(e^{u0+v}-1) + 4 pi N/area,
/// one component at a time; the shifted inverse (lap - kappa)^{-1} keeps the
/// iteration contractive for stiff mu.
fn scalar_cs_guess(params: &Params, mu: f64) -> Result<Vec<Field>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InitFailed(format!("relaxation stiffness must be positive, got {mu}")));
    }
    let sp = params.spectral();
    let grid = params.grid();
    let area = grid.area();
    let totals = params.vortices().totals();
    let mut out = Vec::with_capacity(params.n());
    for i in 0..params.n() {
        let u0 = &params.background_fields()[i];
        let source = 4.0 * std::f64::consts::PI * totals[i] as f64 / area;
        let kappa = 1.2 * mu;
        let mut omega = 0.7;
        let mut v = Field::zeros(grid);
        let mut best = v.clone();
        let mut best_res = f64::INFINITY;
        let mut converged = false;
        for _ in 0..5000 {
            let mut rhs = Field::zeros(grid);
            for (p, r) in rhs.values_mut().iter_mut().enumerate() {
                let e = (u0.values()[p] + v.values()[p]).min(constraints::EXP_GUARD).exp();
                *r = mu * e * (e - 1.0) + source - kappa * v.values()[p];
            }
            let vnew = sp.helmholtz(&rhs, kappa);
            let mut step = 0.0f64;
            for (vv, nv) in v.values_mut().iter_mut().zip(vnew.values()) {
                let d = omega * (nv - *vv);
                step = step.max(d.abs());
                *vv += d;
            }
            // True residual of the component equation.
            let lap = sp.laplacian(&v);
            let mut res = 0.0f64;
            for (p, l) in lap.values().iter().enumerate() {
                let e = (u0.values()[p] + v.values()[p]).min(constraints::EXP_GUARD).exp();
                res = res.max((l - mu * e * (e - 1.0) - source).abs());
            }
            if res < best_res {
                best_res = res;
                best = v.clone();
            } else if res > 10.0 * best_res && omega > 0.05 {
                omega *= 0.5;
                v = best.clone();
                continue;
            }
            if res <= 1e-8 * (1.0 + mu) && step <= 1e-10 * (1.0 + v.max_abs()) {
                converged = true;
                break;
            }
        }
        if !converged && best_res > 1e-4 * (1.0 + mu) {
            return Err(Error::InitFailed(format!(
                "component {i}: relaxation residual {best_res:e} at stiffness {mu}"
            )));
        }
        let mut w = best;
        w.subtract_mean();
        out.push(w);
    }
    Ok(out)
}

/// Fourier-blockwise inverse of |k|^2 M + lambda S.
struct Precond {
    n: usize,
    binv: Vec<f64>,
}

impl Precond {
    fn new(params: &Params) -> Self {
        let n = params.n();
        let m = params.cartan().m_f64();
        let stilde = params.cartan().stilde_f64();
        let lambda = params.lambda();
        let len = params.grid().len();
        let mut binv = vec![0.0; len * n * n];
        let mut block = vec![0.0; n * n];
        for (idx, nk2) in params.spectral().neg_k2().iter().enumerate() {
            let k2 = -nk2;
            for e in 0..n * n {
                block[e] = k2 * m[e] + lambda * stilde[e];
            }
            let inv = linalg::invert(n, &block)
                .expect("vacuum Hessian block is positive definite");
            binv[idx * n * n..(idx + 1) * n * n].copy_from_slice(&inv);
        }
        Self { n, binv }
    }

    fn apply(&self, params: &Params, fields: &[Field]) -> Vec<Field> {
        let sp = params.spectral();
        let n = self.n;
        let specs: Vec<Vec<Complex<f64>>> = fields.iter().map(|f| sp.forward(f)).collect();
        let len = params.grid().len();
        let mut out_specs: Vec<Vec<Complex<f64>>> = vec![vec![Complex::ZERO; len]; n];
        for idx in 0..len {
            let blk = &self.binv[idx * n * n..(idx + 1) * n * n];
            for i in 0..n {
                let mut acc = Complex::ZERO;
                for j in 0..n {
                    acc += blk[i * n + j] * specs[j][idx];
                }
                out_specs[i][idx] = acc;
            }
        }
        out_specs
            .into_iter()
            .map(|s| {
                let mut f = sp.inverse_real(s);
                f.subtract_mean();
                f
            })
            .collect()
    }
}

fn dot(params: &Params, a: &[Field], b: &[Field]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| torus::inner(params.grid(), x, y))
        .sum()
}

fn axpy(out: &mut [Field], alpha: f64, x: &[Field]) {
    for (o, f) in out.iter_mut().zip(x) {
        for (ov, fv) in o.values_mut().iter_mut().zip(f.values()) {
            *ov += alpha * fv;
        }
    }
}

/// Trial rejection: errors that mean "this point is outside the feasible
/// set", as opposed to structural errors that must propagate.
fn is_soft_reject(err: &Error) -> bool {
    matches!(
        err,
        Error::Core(
            cshv_core::Error::NotAdmissible { .. }
                | cshv_core::Error::NonConvergence { .. }
                | cshv_core::Error::StateOutOfRange { .. }
        )
    )
}

struct TrialPoint {
    w: Vec<Field>,
    ev: Evaluation,
    drift: f64,
}

/// Evaluates w + t d with mean reprojection. `Ok(None)` is a soft
/// rejection: infeasible or below the margin floor.
fn try_point(
    params: &Params,
    w: &[Field],
    d: &[Field],
    t: f64,
    floor: f64,
    evals: &mut usize,
) -> Result<Option<TrialPoint>> {
    let mut trial: Vec<Field> = w.to_vec();
    axpy(&mut trial, t, d);
    let mut drift = 0.0f64;
    for f in &mut trial {
        drift = drift.max(f.mean().abs());
        f.subtract_mean();
    }
    *evals += 1;
    match energy::evaluate(params, &trial, true) {
        Ok(ev) => {
            if ev.margins.iter().cloned().fold(f64::INFINITY, f64::min) < floor {
                Ok(None)
            } else {
                Ok(Some(TrialPoint { w: trial, ev, drift }))
            }
        }
        Err(e) if is_soft_reject(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

// Accepted carries the whole evaluated trial; the failure arm is cold.
#[allow(clippy::large_enum_variant)]
enum LineSearchOutcome {
    Accepted(f64, TrialPoint),
    /// No acceptable step; true when infeasibility (not curvature) blocked it.
    Failed { infeasible_blocked: bool },
}

/// Strong Wolfe search (c1 = 1e-4, c2 = 0.9) treating infeasible trials as
/// infinite values. `f0`/`g0d` are the value and directional derivative at 0
/// and `g_norm0` the gradient norm there. A non-increasing trial that cuts
/// the gradient norm is accepted outright: with the spectral preconditioner
/// the unit step is Newton-like, and near the minimum the decrease in J sits
/// below rounding while the gradient still contracts.
#[allow(clippy::too_many_arguments)]
fn line_search(
    params: &Params,
    w: &[Field],
    d: &[Field],
    f0: f64,
    g0d: f64,
    g_norm0: f64,
    floor: f64,
    evals: &mut usize,
) -> Result<LineSearchOutcome> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    // Near the minimum the per-step decrease falls below the evaluation
    // noise of J (accumulated rounding in the coupling-scaled sums); the
    // slack keeps the decrease test meaningful there and acceptance is then
    // governed by gradient contraction instead.
    let slack = 1e-11 * (1.0 + f0.abs());
    let mut infeasible_seen = false;

    // Pull the first trial inside the feasible set.
    let mut alpha = 1.0;
    let mut first = None;
    for _ in 0..60 {
        match try_point(params, w, d, alpha, floor, evals)? {
            Some(tp) => {
                first = Some(tp);
                break;
            }
            None => {
                infeasible_seen = true;
                alpha *= 0.5;
            }
        }
    }
    let Some(mut cur) = first else {
        return Ok(LineSearchOutcome::Failed {
            infeasible_blocked: true,
        });
    };

    let mut lo = 0.0f64;
    let mut f_lo = f0;
    let mut g_lo = g0d;
    let mut lo_point: Option<TrialPoint> = None;
    let mut hi: Option<f64> = None;

    // Bracket: expand while the Wolfe tests keep failing downhill.
    for _ in 0..25 {
        let f_a = cur.ev.j;
        if f_a <= f0 + slack && cur.ev.grad_norm <= 0.9 * g_norm0 {
            return Ok(LineSearchOutcome::Accepted(alpha, cur));
        }
        if f_a > f0 + C1 * alpha * g0d + slack || (lo_point.is_some() && f_a >= f_lo + slack) {
            hi = Some(alpha);
            break;
        }
        let g_a = dot(params, cur.ev.gradient.as_ref().unwrap(), d);
        if g_a.abs() <= -C2 * g0d {
            return Ok(LineSearchOutcome::Accepted(alpha, cur));
        }
        if g_a >= 0.0 {
            // Minimum bracketed between lo and alpha with roles swapped.
            hi = Some(lo);
            lo = alpha;
            f_lo = f_a;
            g_lo = g_a;
            lo_point = Some(cur);
            break;
        }
        lo = alpha;
        f_lo = f_a;
        g_lo = g_a;
        lo_point = Some(cur);
        let next = alpha * 2.0;
        match try_point(params, w, d, next, floor, evals)? {
            Some(tp) => {
                alpha = next;
                cur = tp;
            }
            None => {
                infeasible_seen = true;
                hi = Some(next);
                break;
            }
        }
    }

    let Some(mut hi) = hi else {
        // Expansion never bracketed; accept the best downhill point.
        return Ok(match lo_point {
            Some(tp) => LineSearchOutcome::Accepted(lo, tp),
            None => LineSearchOutcome::Failed {
                infeasible_blocked: infeasible_seen,
            },
        });
    };

    // Zoom by bisection between lo (feasible, best so far) and hi.
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= 1e-14 * (1.0 + lo.abs()) {
            break;
        }
        match try_point(params, w, d, mid, floor, evals)? {
            None => {
                infeasible_seen = true;
                hi = mid;
            }
            Some(tp) => {
                let f_m = tp.ev.j;
                if f_m <= f0 + slack && tp.ev.grad_norm <= 0.9 * g_norm0 {
                    return Ok(LineSearchOutcome::Accepted(mid, tp));
                }
                if f_m > f0 + C1 * mid * g0d + slack || f_m >= f_lo + slack {
                    hi = mid;
                } else {
                    let g_m = dot(params, tp.ev.gradient.as_ref().unwrap(), d);
                    if g_m.abs() <= -C2 * g0d {
                        return Ok(LineSearchOutcome::Accepted(mid, tp));
                    }
                    if g_m * (hi - lo) >= 0.0 {
                        hi = lo;
                    }
                    lo = mid;
                    f_lo = f_m;
                    g_lo = g_m;
                    lo_point = Some(tp);
                }
            }
        }
    }
    let _ = g_lo;
    match lo_point {
        Some(tp) if tp.ev.j <= f0 + slack => Ok(LineSearchOutcome::Accepted(lo, tp)),
        _ => Ok(LineSearchOutcome::Failed {
            infeasible_blocked: infeasible_seen,
        }),
    }
}

/// Runs the minimizer from `w0`. The start must be feasible; an infeasible
/// start is returned as the underlying admissibility error.
pub fn minimize(
    params: &Params,
    w0: &[Field],
    opts: &MinimizeOptions,
) -> Result<(State, SolveReport)> {
    let start = Instant::now();
    let alpha0 = params.cartan().alpha0();
    let floor = opts.margin_floor_rel * params.grid().area().powi(2);
    let precond = opts.precondition.then(|| Precond::new(params));

    let mut w: Vec<Field> = w0.to_vec();
    for f in &mut w {
        f.subtract_mean();
    }
    let mut evals = 0usize;
    let mut ev = energy::evaluate(params, &w, true)?;
    evals += 1;

    let mut s_hist: VecDeque<Vec<Field>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<Field>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();

    let mut j_monotone = true;
    let mut bounds_all = constraints::verify_translation_bounds(&ev.weights, &ev.constants).ok;
    let mut min_margin = ev.margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut mean_drift = 0.0f64;
    let mut coercivity = 0.25 * alpha0 * ev.grad_energy - ev.j;
    let mut failure = None;
    let mut iterations = 0usize;

    while iterations < opts.max_iter {
        if ev.grad_norm <= opts.tol {
            break;
        }
        let g = ev.gradient.as_ref().unwrap();

        // Two-loop recursion with the spectral block inverse as seed.
        let mut q: Vec<Field> = g.to_vec();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for ((s, y), rho) in s_hist.iter().zip(&y_hist).zip(&rho_hist).rev() {
            let a = rho * dot(params, s, &q);
            axpy(&mut q, -a, y);
            alphas.push(a);
        }
        let mut r = match &precond {
            Some(p) => p.apply(params, &q),
            None => {
                let gamma = match (s_hist.back(), y_hist.back()) {
                    (Some(s), Some(y)) => {
                        let yy = dot(params, y, y);
                        if yy > 0.0 {
                            dot(params, s, y) / yy
                        } else {
                            1.0
                        }
                    }
                    _ => 1.0,
                };
                let mut r = q.clone();
                for f in &mut r {
                    for v in f.values_mut() {
                        *v *= gamma;
                    }
                }
                r
            }
        };
        for (((s, y), rho), a) in s_hist
            .iter()
            .zip(&y_hist)
            .zip(&rho_hist)
            .zip(alphas.iter().rev())
        {
            let beta = rho * dot(params, y, &r);
            axpy(&mut r, a - beta, s);
        }
        let mut d: Vec<Field> = r;
        for f in &mut d {
            for v in f.values_mut() {
                *v = -*v;
            }
        }

        let mut g0d = dot(params, g, &d);
        if g0d >= 0.0 {
            // History produced an ascent direction; drop it and restart from
            // the preconditioned gradient.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = match &precond {
                Some(p) => p.apply(params, g),
                None => g.to_vec(),
            };
            for f in &mut d {
                for v in f.values_mut() {
                    *v = -*v;
                }
            }
            g0d = dot(params, g, &d);
            if g0d >= 0.0 {
                failure = Some(Failure::LineSearchStall);
                break;
            }
        }

        match line_search(params, &w, &d, ev.j, g0d, ev.grad_norm, floor, &mut evals)? {
            LineSearchOutcome::Accepted(alpha, tp) => {
                iterations += 1;
                let mut s_vec = d;
                for f in &mut s_vec {
                    for v in f.values_mut() {
                        *v *= alpha;
                    }
                }
                let y_vec: Vec<Field> = tp
                    .ev
                    .gradient
                    .as_ref()
                    .unwrap()
                    .iter()
                    .zip(g)
                    .map(|(gn, go)| {
                        let mut f = gn.clone();
                        for (fv, gv) in f.values_mut().iter_mut().zip(go.values()) {
                            *fv -= gv;
                        }
                        f
                    })
                    .collect();
                let sy = dot(params, &s_vec, &y_vec);
                if sy > 1e-14 * dot(params, &s_vec, &s_vec).sqrt() * dot(params, &y_vec, &y_vec).sqrt()
                {
                    s_hist.push_back(s_vec);
                    y_hist.push_back(y_vec);
                    rho_hist.push_back(1.0 / sy);
                    if s_hist.len() > opts.memory {
                        s_hist.pop_front();
                        y_hist.pop_front();
                        rho_hist.pop_front();
                    }
                }

                if tp.ev.j > ev.j + 1e-10 * (1.0 + ev.j.abs()) {
                    j_monotone = false;
                }
                bounds_all &= constraints::verify_translation_bounds(&tp.ev.weights, &tp.ev.constants).ok;
                min_margin =
                    min_margin.min(tp.ev.margins.iter().cloned().fold(f64::INFINITY, f64::min));
                mean_drift = mean_drift.max(tp.drift);
                coercivity = coercivity.max(0.25 * alpha0 * tp.ev.grad_energy - tp.ev.j);

                w = tp.w;
                ev = tp.ev;
                if opts.verbose {
                    eprintln!(
                        "iter {iterations:4}  J {: >.12e}  |grad| {:.3e}  step {alpha:.3e}",
                        ev.j, ev.grad_norm
                    );
                }
            }
            LineSearchOutcome::Failed { infeasible_blocked } => {
                failure = Some(if infeasible_blocked && min_margin < 1e3 * floor {
                    Failure::BoundaryTrap {
                        min_margin: min_margin.min(
                            ev.margins.iter().cloned().fold(f64::INFINITY, f64::min),
                        ),
                    }
                } else {
                    Failure::LineSearchStall
                });
                break;
            }
        }
    }

    let converged = ev.grad_norm <= opts.tol;
    if !converged && failure.is_none() {
        failure = Some(Failure::IterationCap);
    }
    if converged {
        failure = None;
    }

    let state = State {
        w,
        c: ev.constants.c.clone(),
    };
    let diagnostics = energy::diagnostics(params, &state)?;
    let report = SolveReport {
        converged,
        iterations,
        func_evals: evals,
        j: ev.j,
        grad_norm: ev.grad_norm,
        margins: ev.margins.clone(),
        mean_drift,
        j_monotone,
        translation_bounds_all_iterates: bounds_all,
        min_margin_seen: min_margin,
        coercivity_offset: coercivity.max(0.0),
        wall_time: start.elapsed().as_secs_f64(),
        failure,
        diagnostics,
    };
    Ok((state, report))
}

/// One row of a coupling sweep.
pub struct SweepRow {
    pub lambda: f64,
    pub warm_started: bool,
    pub outcome: std::result::Result<(State, SolveReport), String>,
}

/// Solves at each coupling in order, warm-starting from the last converged
/// state. Couplings should be ascending so warm starts stay admissible:
/// margins only grow with lambda.
pub fn lambda_sweep(
    base: &Params,
    lambdas: &[f64],
    init: InitMode,
    opts: &MinimizeOptions,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<Field>> = None;
    for &lambda in lambdas {
        let params = base.with_lambda(lambda)?;
        let (w0, warm_started) = match &warm {
            Some(w) => (w.clone(), true),
            None => match initial_guess(&params, init) {
                Ok(w) => (w, false),
                Err(e) => {
                    rows.push(SweepRow {
                        lambda,
                        warm_started: false,
                        outcome: Err(e.to_string()),
                    });
                    continue;
                }
            },
        };
        match minimize(&params, &w0, opts) {
            Ok((state, report)) => {
                if report.converged {
                    warm = Some(state.w.clone());
                }
                rows.push(SweepRow {
                    lambda,
                    warm_started,
                    outcome: Ok((state, report)),
                });
            }
            Err(e) => {
                rows.push(SweepRow {
                    lambda,
                    warm_started,
                    outcome: Err(e.to_string()),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Params;
    use crate::torus::{TorusGrid, VortexConfig, VortexPoint};
    use std::f64::consts::PI;

    fn pair_params(nside: usize, lambda: f64) -> Params {
        let grid = TorusGrid::new(nside, nside, 1.0, 1.0).unwrap();
        let p = VortexPoint {
            x: 0.5,
            y: 0.5,
            multiplicity: 1,
        };
        let vort = VortexConfig::new(vec![vec![p], vec![p]], 1.0, 1.0).unwrap();
        Params::new(2, grid, vort, lambda, false).unwrap()
    }

    #[test]
    fn limit_guess_requires_coupling_above_threshold() {
        let params = pair_params(16, 24.0 * PI);
        match initial_guess(&params, InitMode::Limit) {
            Err(Error::InitInfeasible { lambda, threshold }) => {
                assert!((lambda - 24.0 * PI).abs() <= 1e-12 * lambda);
                assert!((threshold - 32.0 * PI).abs() <= 1e-12 * threshold);
            }
            other => panic!("expected infeasible start, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn minimizer_converges_from_limit_guess() {
        let params = pair_params(32, 8.0 * 16.0 * PI);
        let w0 = initial_guess(&params, InitMode::Limit).unwrap();
        let opts = MinimizeOptions::default();
        let (state, report) = minimize(&params, &w0, &opts).unwrap();
        assert!(report.converged, "failure: {:?}", report.failure);
        assert!(report.grad_norm <= opts.tol);
        assert!(report.j_monotone);
        assert!(report.translation_bounds_all_iterates);
        assert!(report.min_margin_seen > 0.0);
        assert!(report.mean_drift <= 1e-10);
        for r in &report.diagnostics.residual {
            assert!(*r <= 1e-7, "residual {r}");
        }
        // Quantized flux at the critical point.
        for (q, qt) in report.diagnostics.q.iter().zip(&report.diagnostics.q_target) {
            assert!(
                (q - qt).abs() <= 5e-3 * qt.abs(),
                "flux {q} vs target {qt}"
            );
        }
        for c in &state.c {
            assert!(*c < 0.0 && *c > -1.0);
        }
    }

    #[test]
    fn scalar_relaxation_guess_reaches_the_same_minimum() {
        let params = pair_params(32, 8.0 * 16.0 * PI);
        let opts = MinimizeOptions::default();
        let w_limit = initial_guess(&params, InitMode::Limit).unwrap();
        let (_, rep_limit) = minimize(&params, &w_limit, &opts).unwrap();
        let w_cs = initial_guess(&params, InitMode::ScalarCs { mu: None }).unwrap();
        let (_, rep_cs) = minimize(&params, &w_cs, &opts).unwrap();
        assert!(rep_limit.converged && rep_cs.converged);
        assert!(
            (rep_limit.j - rep_cs.j).abs() <= 1e-6 * (1.0 + rep_limit.j.abs()),
            "J from limit {} vs relaxation {}",
            rep_limit.j,
            rep_cs.j
        );
    }

    #[test]
    fn sweep_warm_start_saves_iterations_and_records_failures() {
        let base = pair_params(32, 4.0 * 16.0 * PI);
        let opts = MinimizeOptions::default();
        let lambdas = [0.9 * 16.0 * PI, 4.0 * 16.0 * PI, 8.0 * 16.0 * PI];
        let rows = lambda_sweep(&base, &lambdas, InitMode::Limit, &opts).unwrap();
        assert_eq!(rows.len(), 3);
        // Below the necessary bound the limit start is ruled out entirely.
        assert!(rows[0].outcome.is_err());
        let (_, rep1) = rows[1].outcome.as_ref().unwrap();
        assert!(rep1.converged && !rows[1].warm_started);
        let (_, rep2) = rows[2].outcome.as_ref().unwrap();
        assert!(rep2.converged && rows[2].warm_started);

        let cold_params = base.with_lambda(lambdas[2]).unwrap();
        let w0 = initial_guess(&cold_params, InitMode::Limit).unwrap();
        let (_, cold) = minimize(&cold_params, &w0, &opts).unwrap();
        assert!(
            rep2.iterations < cold.iterations,
            "warm {} vs cold {}",
            rep2.iterations,
            cold.iterations
        );
        assert!((rep2.j - cold.j).abs() <= 1e-6 * (1.0 + cold.j.abs()));
    }

    /// The preconditioner must invert |k|^2 M + lambda S mode by mode.
    #[test]
    fn preconditioner_inverts_vacuum_hessian() {
        let params = pair_params(16, 120.0);
        let pc = Precond::new(&params);
        let f: Vec<Field> = (0..2)
            .map(|i| {
                let mut f = Field::from_fn(params.grid(), |x, y| {
                    ((2.0 * PI * (x + 0.3 * i as f64)).cos() + (4.0 * PI * y).sin()) * 0.5
                });
                f.subtract_mean();
                f
            })
            .collect();
        let pf = pc.apply(&params, &f);
        // Apply B = -lap M + lambda S pointwise and compare with f.
        let sp = params.spectral();
        let m = params.cartan().m_f64();
        let st = params.cartan().stilde_f64();
        let specs: Vec<_> = pf.iter().map(|g| sp.forward(g)).collect();
        for i in 0..2 {
            let mut spec = vec![rustfft::num_complex::Complex::ZERO; params.grid().len()];
            for j in 0..2 {
                for (idx, s) in specs[j].iter().enumerate() {
                    let k2 = -sp.neg_k2()[idx];
                    spec[idx] += (k2 * m[i * 2 + j] + params.lambda() * st[i * 2 + j]) * s;
                }
            }
            let back = sp.inverse_real(spec);
            for (a, b) in back.values().iter().zip(f[i].values()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn reports_boundary_trap_near_admissibility_threshold() {
        // Just above the limit threshold the feasible set is a thin shell;
        // the minimizer must stop with a structured failure, not panic or
        // silently claim convergence.
        let params = pair_params(16, 32.0 * PI * 1.0001);
        let w0 = initial_guess(&params, InitMode::Limit).unwrap();
        let opts = MinimizeOptions {
            max_iter: 60,
            ..MinimizeOptions::default()
        };
        let (_, report) = minimize(&params, &w0, &opts).unwrap();
        if !report.converged {
            assert!(report.failure.is_some());
        }
        assert!(report.min_margin_seen >= 0.0);
    }
}

