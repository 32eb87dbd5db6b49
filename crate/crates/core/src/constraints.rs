//! Integral weights of a field configuration and the coupled quadratic
//! constraint that determines the additive constants of the ansatz.
//!
//! For a candidate configuration with exponents h_i = u0_i + w_i the weights
//! are a_i = int e^{h_i}, a_ii = int e^{2 h_i} and a_{i,i+1} = int
//! e^{h_i + h_{i+1}}. The constants t_i = e^{c_i} then satisfy, component by
//! component,
//!
//!   a_ii t_i^2 - t_i P_i(t_{i-1}, t_{i+1}) + q_i = 0,
//!
//! with P_i affine in the neighbouring constants and q_i proportional to the
//! vortex source over the coupling. Solvability requires the admissibility
//! inequality a_i^2 >= 4 n b_i a_ii / lambda; under it the "+" branch of each
//! quadratic is selected and the chain of one-dimensional eliminations below
//! has a unique nonnegative fixed point.
//!
//! The solver eliminates t_1, ..., t_{n-1} recursively: level i resolves t_i
//! as a function of t_{i+1} by a safeguarded Newton iteration whose exact
//! derivative comes from the implicit function theorem applied to the level
//! below. The outermost level then closes the chain in t_n.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Exponent cap. Larger exponents trip [`Error::StateOutOfRange`] instead of
/// silently saturating the weights.
pub const EXP_GUARD: f64 = 40.0;

/// Integral weights of one configuration. `a`, `adiag` have length n;
/// `aoff[i]` couples components i and i+1 and has length n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    area: f64,
    a: Vec<f64>,
    adiag: Vec<f64>,
    aoff: Vec<f64>,
}

impl Weights {
    /// Assembles weights from raw values, checking lengths, finiteness and
    /// strict positivity. Weights produced by [`compute_weights`] also obey
    /// the Cauchy-Schwarz relations a_i^2 <= area a_ii and
    /// a_{i,i+1}^2 <= a_ii a_{i+1,i+1}; synthetic weights are not forced to.
    pub fn new(area: f64, a: Vec<f64>, adiag: Vec<f64>, aoff: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if n < 2 {
            return Err(Error::RankOutOfRange { n });
        }
        if adiag.len() != n {
            return Err(Error::DimensionMismatch {
                what: "diagonal weights",
                expected: n,
                got: adiag.len(),
            });
        }
        if aoff.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                what: "off-diagonal weights",
                expected: n - 1,
                got: aoff.len(),
            });
        }
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::InvalidCoefficient {
                what: "area",
                index: 0,
                value: area,
            });
        }
        for (idx, &v) in a.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidCoefficient {
                    what: "weight a",
                    index: idx,
                    value: v,
                });
            }
        }
        for (idx, &v) in adiag.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidCoefficient {
                    what: "weight a_ii",
                    index: idx,
                    value: v,
                });
            }
        }
        for (idx, &v) in aoff.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidCoefficient {
                    what: "weight a_i,i+1",
                    index: idx,
                    value: v,
                });
            }
        }
        Ok(Self {
            area,
            a,
            adiag,
            aoff,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// a_i = int e^{h_i}.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// a_ii = int e^{2 h_i}.
    pub fn adiag(&self) -> &[f64] {
        &self.adiag
    }

    /// a_{i,i+1} = int e^{h_i + h_{i+1}}, length n-1.
    pub fn aoff(&self) -> &[f64] {
        &self.aoff
    }
}

/// Quadrature of the exponential integrals from point samples of the
/// background `u0` and the mean-zero update `w` (uniform sample weights, so
/// `int f = area * mean(f)`). Components are slices of equal length.
///
/// The update fields must have zero mean within `1e-10 * area`; exponents
/// must stay at or below [`EXP_GUARD`].
pub fn compute_weights(u0: &[&[f64]], w: &[&[f64]], area: f64) -> Result<Weights> {
    let n = u0.len();
    if n < 2 {
        return Err(Error::RankOutOfRange { n });
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            what: "update components",
            expected: n,
            got: w.len(),
        });
    }
    if !(area > 0.0) || !area.is_finite() {
        return Err(Error::InvalidCoefficient {
            what: "area",
            index: 0,
            value: area,
        });
    }
    let len = u0[0].len();
    if len == 0 {
        return Err(Error::DimensionMismatch {
            what: "samples",
            expected: 1,
            got: 0,
        });
    }
    for i in 0..n {
        if u0[i].len() != len || w[i].len() != len {
            return Err(Error::DimensionMismatch {
                what: "samples",
                expected: len,
                got: if u0[i].len() != len {
                    u0[i].len()
                } else {
                    w[i].len()
                },
            });
        }
        let mean = w[i].iter().sum::<f64>() / len as f64;
        if mean.abs() > 1e-10 * area {
            return Err(Error::MeanNotZero {
                component: i,
                mean,
            });
        }
    }

    let inv_len = 1.0 / len as f64;
    let mut a = vec![0.0; n];
    let mut adiag = vec![0.0; n];
    let mut aoff = vec![0.0; n - 1];
    let mut exps: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = vec![0.0; len];
        let mut max_h = f64::NEG_INFINITY;
        for s in 0..len {
            let h = u0[i][s] + w[i][s];
            if h > max_h {
                max_h = h;
            }
            e[s] = h;
        }
        if max_h > EXP_GUARD {
            return Err(Error::StateOutOfRange {
                component: i,
                max_exponent: max_h,
            });
        }
        for v in e.iter_mut() {
            *v = math::exp(*v);
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for &v in &e {
            s1 += v;
            s2 += v * v;
        }
        a[i] = area * s1 * inv_len;
        adiag[i] = area * s2 * inv_len;
        exps.push(e);
    }
    for i in 0..n - 1 {
        let mut s = 0.0;
        for k in 0..len {
            s += exps[i][k] * exps[i + 1][k];
        }
        aoff[i] = area * s * inv_len;
    }
    Weights::new(area, a, adiag, aoff)
}

/// Outcome of the admissibility test a_i^2 >= 4 n b_i a_ii / lambda.
/// `margins[i] = a_i^2 - 4 n b_i a_ii / lambda`; negative entries are the
/// violations. Zero margin is the solvability boundary: still admissible,
/// but the constraint solution degenerates there.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub margins: Vec<f64>,
}

pub fn is_admissible(w: &Weights, b: &[f64], lambda: f64) -> Result<AdmissibilityReport> {
    let n = w.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "source vector",
            expected: n,
            got: b.len(),
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidCoefficient {
            what: "lambda",
            index: 0,
            value: lambda,
        });
    }
    let mut margins = vec![0.0; n];
    let mut admissible = true;
    for i in 0..n {
        if b[i] < 0.0 || !b[i].is_finite() {
            return Err(Error::InvalidCoefficient {
                what: "source strength",
                index: i,
                value: b[i],
            });
        }
        let m = w.a()[i] * w.a()[i] - 4.0 * n as f64 * b[i] * w.adiag()[i] / lambda;
        margins[i] = m;
        if m < 0.0 {
            admissible = false;
        }
    }
    Ok(AdmissibilityReport {
        admissible,
        margins,
    })
}

/// Tuning for [`solve_constants`]. Inner eliminations run 10x tighter than
/// `t_tol` so the back-substituted chain meets `residual_tol`.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative tolerance on each eliminated constant.
    pub t_tol: f64,
    /// Bound on the quadratic residuals of the returned solution, relative
    /// to max(1, |terms|).
    pub residual_tol: f64,
    /// Newton iteration cap per level.
    pub max_iter: usize,
    /// Optional per-level warm starts for the eliminations (length n).
    pub init_t: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            t_tol: 1e-12,
            residual_tol: 1e-10,
            max_iter: 120,
            init_t: None,
        }
    }
}

/// Constants resolved from the quadratic chain: c_i = ln t_i, together with
/// the residuals of the n quadratics at the returned t.
#[derive(Debug, Clone)]
pub struct ConstantsSolution {
    pub c: Vec<f64>,
    pub t: Vec<f64>,
    pub residuals: Vec<f64>,
}

struct System {
    n: usize,
    adiag: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    q: Vec<f64>,
}

impl System {
    fn build(w: &Weights, b: &[f64], lambda: f64) -> Self {
        let n = w.n();
        let nf = n as f64;
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut gamma = vec![0.0; n];
        let mut q = vec![0.0; n];
        for idx in 0..n {
            let i = (idx + 1) as f64;
            let d = i * (nf + 1.0 - i);
            alpha[idx] = w.a()[idx] / d;
            if idx > 0 {
                beta[idx] = (i - 1.0) * (nf + 2.0 - i) * w.aoff()[idx - 1] / (2.0 * d);
            }
            if idx + 1 < n {
                gamma[idx] = (i + 1.0) * (nf - i) * w.aoff()[idx] / (2.0 * d);
            }
            q[idx] = nf * b[idx] / (d * d * lambda);
        }
        Self {
            n,
            adiag: w.adiag().to_vec(),
            alpha,
            beta,
            gamma,
            q,
        }
    }

    /// "+" branch of level `idx` and its partials with respect to the
    /// neighbouring constants. Requires t_prev, t_next >= 0.
    fn branch(&self, idx: usize, t_prev: f64, t_next: f64) -> Result<(f64, f64, f64)> {
        let p = self.alpha[idx] + self.beta[idx] * t_prev + self.gamma[idx] * t_next;
        let mut disc = p * p - 4.0 * self.adiag[idx] * self.q[idx];
        if disc < 0.0 {
            // Admissible data keeps disc >= margin/d^2 >= 0 for nonnegative
            // neighbours; anything beyond rounding slack is a real breach.
            if disc > -1e-12 * p * p {
                disc = 0.0;
            } else {
                return Err(Error::ConstraintViolation {
                    level: idx,
                    detail: "negative discriminant",
                    value: disc,
                });
            }
        }
        let s = math::sqrt(disc);
        let f = (p + s) / (2.0 * self.adiag[idx]);
        // df/dP = f / sqrt(disc); capped when the discriminant degenerates
        // on the admissibility boundary (the safeguard absorbs the bad step).
        let dfdp = f / s.max(1e-150);
        Ok((f, self.beta[idx] * dfdp, self.gamma[idx] * dfdp))
    }
}

/// Solves level `lvl` (0-based) for its constant given the next one:
/// returns (t_lvl, d t_lvl / d t_next). Level 0 is explicit; higher levels
/// root-find z - f_lvl(g_{lvl-1}(z), t_next) = 0 over z >= 0, which is
/// negative at z = 0 and grows at least linearly, so a sign change always
/// exists. `cache` warm-starts each level across calls.
fn level_root(
    sys: &System,
    lvl: usize,
    t_next: f64,
    cache: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64)> {
    if lvl == 0 {
        let (f, _, dnext) = sys.branch(0, 0.0, t_next)?;
        return Ok((f, dnext));
    }

    let eval = |z: f64, cache: &mut [f64]| -> Result<(f64, f64, f64)> {
        let (g, dg) = level_root(sys, lvl - 1, z, cache, tol, max_iter)?;
        let (f, dprev, dnext) = sys.branch(lvl, g, t_next)?;
        Ok((z - f, 1.0 - dprev * dg, dnext))
    };

    // Establish an upper bracket; the value at 0 is -f < 0 analytically.
    let mut lo = 0.0;
    let mut z = cache[lvl].max(tol);
    let mut hi;
    let mut doublings = 0;
    let (mut fz, mut dfz, mut dnext_f);
    loop {
        let (v, dv, dn) = eval(z, cache)?;
        if v >= 0.0 {
            hi = z;
            fz = v;
            dfz = dv;
            dnext_f = dn;
            break;
        }
        lo = z;
        z *= 2.0;
        doublings += 1;
        if doublings > 400 {
            return Err(Error::NonConvergence {
                level: lvl,
                iterations: doublings,
                best_residual: v,
            });
        }
    }

    for iter in 0..max_iter {
        if fz.abs() <= 1e-15 * z.max(1.0) || hi - lo <= tol * hi.max(1.0) {
            cache[lvl] = z;
            // At the root the slope is strictly positive; the implicit
            // function theorem then gives the derivative in t_next.
            let slope = dfz.max(1e-150);
            return Ok((z, dnext_f / slope));
        }
        let mut next = if dfz > 0.0 { z - fz / dfz } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        z = next;
        let (v, dv, dn) = eval(z, cache)?;
        fz = v;
        dfz = dv;
        dnext_f = dn;
        if fz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if iter + 1 == max_iter {
            return Err(Error::NonConvergence {
                level: lvl,
                iterations: max_iter,
                best_residual: fz,
            });
        }
    }
    unreachable!()
}

/// Resolves the constants t (and c = ln t) for admissible weights.
///
/// The data must pass [`is_admissible`]; otherwise
/// [`Error::NotAdmissible`] carries the margins. With b = 0 and uniform
/// weights the solution is t = 1 exactly and is returned without iteration.
pub fn solve_constants(
    w: &Weights,
    b: &[f64],
    lambda: f64,
    opts: &SolveOptions,
) -> Result<ConstantsSolution> {
    let n = w.n();
    let adm = is_admissible(w, b, lambda)?;
    if !adm.admissible {
        return Err(Error::NotAdmissible {
            margins: adm.margins,
        });
    }

    if b.iter().all(|&x| x == 0.0) {
        let area = w.area();
        let uniform = w
            .a()
            .iter()
            .chain(w.adiag().iter())
            .chain(w.aoff().iter())
            .all(|&v| (v - area).abs() <= 1e-13 * area);
        if uniform {
            let t = vec![1.0; n];
            let residuals = residuals_at(w, b, lambda, &t);
            return Ok(ConstantsSolution {
                c: vec![0.0; n],
                t,
                residuals,
            });
        }
    }

    let sys = System::build(w, b, lambda);
    let mut cache = match &opts.init_t {
        Some(init) => {
            if init.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "warm start",
                    expected: n,
                    got: init.len(),
                });
            }
            init.clone()
        }
        None => vec![1.0; n],
    };
    for (idx, v) in cache.iter_mut().enumerate() {
        if !v.is_finite() || *v <= 0.0 {
            return Err(Error::InvalidCoefficient {
                what: "warm start",
                index: idx,
                value: *v,
            });
        }
    }

    // Inner eliminations run tighter so the closed chain meets the residual
    // bound after back-substitution.
    let inner_tol = opts.t_tol * 0.1;
    let mut t = vec![0.0; n];
    let (tn, _) = level_root(&sys, n - 1, 0.0, &mut cache, opts.t_tol, opts.max_iter)?;
    t[n - 1] = tn;
    for idx in (0..n - 1).rev() {
        let (ti, _) = level_root(&sys, idx, t[idx + 1], &mut cache, inner_tol, opts.max_iter)?;
        t[idx] = ti;
    }

    let residuals = residuals_at(w, b, lambda, &t);
    for idx in 0..n {
        let scale = (sys.adiag[idx] * t[idx] * t[idx]).abs().max(1.0);
        if !(residuals[idx].abs() <= opts.residual_tol * scale) {
            return Err(Error::NonConvergence {
                level: idx,
                iterations: opts.max_iter,
                best_residual: residuals[idx],
            });
        }
    }

    let c = t.iter().map(|&x| math::ln(x)).collect();
    Ok(ConstantsSolution { c, t, residuals })
}

/// Residuals of the n quadratics at a given t (diagnostic; also used by the
/// solver's own exit check).
pub fn residuals_at(w: &Weights, b: &[f64], lambda: f64, t: &[f64]) -> Vec<f64> {
    let sys = System::build(w, b, lambda);
    let n = sys.n;
    let mut r = vec![0.0; n];
    for idx in 0..n {
        let tp = if idx > 0 { t[idx - 1] } else { 0.0 };
        let tn = if idx + 1 < n { t[idx + 1] } else { 0.0 };
        let p = sys.alpha[idx] + sys.beta[idx] * tp + sys.gamma[idx] * tn;
        r[idx] = sys.adiag[idx] * t[idx] * t[idx] - t[idx] * p + sys.q[idx];
    }
    r
}

/// Value of the closed outer map F(t_n) = t_n - f_n(g_{n-1}(t_n)) whose
/// unique zero fixes the last constant. Exposed for diagnostics; the sign
/// structure (negative at 0, single crossing) is what the solver relies on.
pub fn outer_residual(
    w: &Weights,
    b: &[f64],
    lambda: f64,
    opts: &SolveOptions,
    t_n: f64,
) -> Result<f64> {
    let n = w.n();
    let adm = is_admissible(w, b, lambda)?;
    if !adm.admissible {
        return Err(Error::NotAdmissible {
            margins: adm.margins,
        });
    }
    let sys = System::build(w, b, lambda);
    let mut cache = vec![1.0; n];
    if n == 1 {
        unreachable!("rank >= 2 enforced by Weights");
    }
    let (g, _) = level_root(
        &sys,
        n - 2,
        t_n,
        &mut cache,
        opts.t_tol * 0.1,
        opts.max_iter,
    )?;
    let (f, _, _) = sys.branch(n - 1, g, 0.0)?;
    Ok(t_n - f)
}

/// Pointwise bounds satisfied by any solution of the constraint chain when
/// the weights come from fields whose background and update both have zero
/// mean: e^{c_i} <= 1 and e^{c_i} a_i <= area. (The second holds for any
/// field weights; the first additionally needs a_i >= area, which Jensen
/// gives under the zero-mean normalization.) `violating` is the first
/// component breaking either bound beyond a 1e-10 relative slack.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationBoundsReport {
    pub ok: bool,
    pub violating: Option<usize>,
}

pub fn verify_translation_bounds(w: &Weights, sol: &ConstantsSolution) -> TranslationBoundsReport {
    let slack = 1.0 + 1e-10;
    for i in 0..w.n() {
        let t = sol.t[i];
        if t > slack || t * w.a()[i] > w.area() * slack {
            return TranslationBoundsReport {
                ok: false,
                violating: Some(i),
            };
        }
    }
    TranslationBoundsReport {
        ok: true,
        violating: None,
    }
}
