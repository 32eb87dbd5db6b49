//! Cartan matrix of su(n+1) and the derived matrices of the vortex system.
//!
//! All closed forms are evaluated in exact `Rational64` arithmetic and the
//! defining identities are re-checked at construction time, so the float
//! views handed to downstream numerics are rounded from exact values rather
//! than accumulated through float factorizations.
//!
//! Conventions: matrices are row-major, indices in the code are 0-based,
//! while the closed forms are quoted 1-based as usual.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::linalg;
use crate::{Error, Result};

fn rat(num: i64, den: i64) -> Rational64 {
    Rational64::new(num, den)
}

fn to_f64(r: Rational64) -> f64 {
    r.to_f64().expect("rational fits in f64")
}

/// Cartan matrix of su(n+1) with its inverse, the vortex-number weights R,
/// and the derived matrices K~ = K R, S~ = P~^-1 K~ and M = (2/n) K^-1.
///
/// The struct is immutable; problem data (areas, vortex numbers, coupling)
/// stays outside and is combined through [`CartanData::source_vector`] and
/// [`CartanData::lambda_lower_bound`].
pub struct CartanData {
    n: usize,
    k: Vec<i64>,
    kinv: Vec<Rational64>,
    r: Vec<Rational64>,
    ktilde: Vec<Rational64>,
    ptilde: Vec<Rational64>,
    stilde: Vec<Rational64>,
    m: Vec<Rational64>,
    kinv_f: Vec<f64>,
    ktilde_f: Vec<f64>,
    stilde_f: Vec<f64>,
    m_f: Vec<f64>,
    ptilde_f: Vec<f64>,
    ptilde_inv_f: Vec<f64>,
    r_f: Vec<f64>,
}

impl CartanData {
    /// Builds all matrices for rank `n >= 2` and verifies the defining
    /// identities exactly: K K^-1 = I, row sums of K^-1 equal R, row sums
    /// of K~ equal 1, S~ symmetric, and S~, M positive definite.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::RankOutOfRange { n });
        }
        let ni = n as i64;
        let np1 = ni + 1;

        let mut k = vec![0i64; n * n];
        for i in 0..n {
            k[i * n + i] = 2;
            if i + 1 < n {
                k[i * n + i + 1] = -1;
                k[(i + 1) * n + i] = -1;
            }
        }

        // (K^-1)_{ij} = min(i,j) (n+1-max(i,j)) / (n+1), 1-based.
        let mut kinv = vec![Rational64::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                let (i, j) = ((a + 1) as i64, (b + 1) as i64);
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                kinv[a * n + b] = rat(lo * (np1 - hi), np1);
            }
        }

        // R_i = i (n+1-i) / 2.
        let r: Vec<Rational64> = (1..=ni).map(|i| rat(i * (np1 - i), 2)).collect();

        // K~ = K diag(R).
        let mut ktilde = vec![Rational64::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                ktilde[a * n + b] = rat(k[a * n + b], 1) * r[b];
            }
        }

        // P~_i = n / (i (n+1-i)).
        let ptilde: Vec<Rational64> = (1..=ni).map(|i| rat(ni, i * (np1 - i))).collect();

        // S~ = diag(P~)^-1 K~.
        let mut stilde = vec![Rational64::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                stilde[a * n + b] = ktilde[a * n + b] / ptilde[a];
            }
        }

        // M = (2/n) K^-1.
        let two_over_n = rat(2, ni);
        let m: Vec<Rational64> = kinv.iter().map(|&x| two_over_n * x).collect();

        // Exact identity checks. K is tridiagonal, so K K^-1 costs O(n^2).
        for a in 0..n {
            for b in 0..n {
                let mut acc = rat(2, 1) * kinv[a * n + b];
                if a > 0 {
                    acc -= kinv[(a - 1) * n + b];
                }
                if a + 1 < n {
                    acc -= kinv[(a + 1) * n + b];
                }
                let want = if a == b { rat(1, 1) } else { Rational64::zero() };
                if acc != want {
                    return Err(Error::ConstraintViolation {
                        level: a,
                        detail: "K K^-1 != I",
                        value: to_f64(acc - want),
                    });
                }
            }
        }
        for a in 0..n {
            let row_sum: Rational64 = kinv[a * n..(a + 1) * n].iter().copied().sum();
            if row_sum != r[a] {
                return Err(Error::ConstraintViolation {
                    level: a,
                    detail: "row sum of K^-1 != R",
                    value: to_f64(row_sum - r[a]),
                });
            }
            let kt_sum: Rational64 = ktilde[a * n..(a + 1) * n].iter().copied().sum();
            if kt_sum != rat(1, 1) {
                return Err(Error::ConstraintViolation {
                    level: a,
                    detail: "row sum of K~ != 1",
                    value: to_f64(kt_sum),
                });
            }
            for b in 0..a {
                if stilde[a * n + b] != stilde[b * n + a] {
                    return Err(Error::ConstraintViolation {
                        level: a,
                        detail: "S~ not symmetric",
                        value: to_f64(stilde[a * n + b] - stilde[b * n + a]),
                    });
                }
            }
        }

        let kinv_f: Vec<f64> = kinv.iter().map(|&x| to_f64(x)).collect();
        let ktilde_f: Vec<f64> = ktilde.iter().map(|&x| to_f64(x)).collect();
        let stilde_f: Vec<f64> = stilde.iter().map(|&x| to_f64(x)).collect();
        let m_f: Vec<f64> = m.iter().map(|&x| to_f64(x)).collect();
        let ptilde_f: Vec<f64> = ptilde.iter().map(|&x| to_f64(x)).collect();
        let ptilde_inv_f: Vec<f64> = ptilde.iter().map(|&x| to_f64(x.recip())).collect();
        let r_f: Vec<f64> = r.iter().map(|&x| to_f64(x)).collect();

        if !linalg::is_positive_definite(n, &stilde_f) {
            return Err(Error::ConstraintViolation {
                level: 0,
                detail: "S~ not positive definite",
                value: 0.0,
            });
        }
        if !linalg::is_positive_definite(n, &m_f) {
            return Err(Error::ConstraintViolation {
                level: 0,
                detail: "M not positive definite",
                value: 0.0,
            });
        }

        Ok(Self {
            n,
            k,
            kinv,
            r,
            ktilde,
            ptilde,
            stilde,
            m,
            kinv_f,
            ktilde_f,
            stilde_f,
            m_f,
            ptilde_f,
            ptilde_inv_f,
            r_f,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Cartan matrix K, integer entries, row-major.
    pub fn k(&self) -> &[i64] {
        &self.k
    }

    pub fn kinv(&self) -> &[Rational64] {
        &self.kinv
    }

    pub fn kinv_f64(&self) -> &[f64] {
        &self.kinv_f
    }

    /// Vortex weights R_i = i(n+1-i)/2 (diagonal).
    pub fn r(&self) -> &[Rational64] {
        &self.r
    }

    pub fn r_f64(&self) -> &[f64] {
        &self.r_f
    }

    /// K~ = K diag(R); its rows sum to 1.
    pub fn ktilde(&self) -> &[Rational64] {
        &self.ktilde
    }

    pub fn ktilde_f64(&self) -> &[f64] {
        &self.ktilde_f
    }

    /// Diagonal P~ with P~_i = n/(i(n+1-i)).
    pub fn ptilde(&self) -> &[Rational64] {
        &self.ptilde
    }

    pub fn ptilde_f64(&self) -> &[f64] {
        &self.ptilde_f
    }

    /// Entries i(n+1-i)/n, the reciprocals of P~ (exact).
    pub fn ptilde_inv_f64(&self) -> &[f64] {
        &self.ptilde_inv_f
    }

    /// S~ = diag(P~)^-1 K~, symmetric positive definite.
    pub fn stilde(&self) -> &[Rational64] {
        &self.stilde
    }

    pub fn stilde_f64(&self) -> &[f64] {
        &self.stilde_f
    }

    /// M = (2/n) K^-1, symmetric positive definite with positive entries.
    pub fn m(&self) -> &[Rational64] {
        &self.m
    }

    pub fn m_f64(&self) -> &[f64] {
        &self.m_f
    }

    /// Smallest eigenvalue of M, computed as (2/n) / lambda_max(K) with the
    /// top eigenvalue of K obtained by Sturm-sequence bisection on the
    /// tridiagonal structure.
    pub fn alpha0(&self) -> f64 {
        let diag = vec![2.0; self.n];
        let off = vec![-1.0; self.n - 1];
        let top = linalg::max_tridiagonal_eigenvalue(&diag, &off);
        (2.0 / self.n as f64) / top
    }

    /// Source strengths b = 4 pi M N for vortex totals N (one per component).
    pub fn source_vector(&self, nvec: &[u64]) -> Result<Vec<f64>> {
        if nvec.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "vortex totals",
                expected: self.n,
                got: nvec.len(),
            });
        }
        let mut b = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = Rational64::zero();
            for j in 0..self.n {
                acc += self.m[i * self.n + j] * rat(nvec[j] as i64, 1);
            }
            b[i] = 4.0 * PI * to_f64(acc);
        }
        Ok(b)
    }

    /// Coupling threshold lambda_0 below which no solution is claimed:
    /// (16 pi / area) * (sum_ij (K^-1)_ij N_j) / (sum_ij (K^-1)_ij).
    /// The rational part is exact; only the final scaling rounds.
    pub fn lambda_lower_bound(&self, nvec: &[u64], area: f64) -> Result<f64> {
        if nvec.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "vortex totals",
                expected: self.n,
                got: nvec.len(),
            });
        }
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::InvalidCoefficient {
                what: "area",
                index: 0,
                value: area,
            });
        }
        let mut num = Rational64::zero();
        let mut den = Rational64::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let kij = self.kinv[i * self.n + j];
                num += kij * rat(nvec[j] as i64, 1);
                den += kij;
            }
        }
        debug_assert!(den.is_positive());
        Ok(16.0 * PI / area * to_f64(num / den))
    }
}

/// Off-diagonal couplings that reproduce the su(n+1) case of
/// [`GeneralTridiagonal`]: returns `(sup, sub)` with
/// sup_i = alpha_{i,i+1} = (i+1)(n-i)/2 and sub_i = alpha_{i+1,i} = i(n+1-i)/2
/// for i = 1..n-1 (1-based).
pub fn su_couplings(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let sup = (1..n)
        .map(|i| {
            let i = i as f64;
            (i + 1.0) * (nf - i) / 2.0
        })
        .collect();
    let sub = (1..n)
        .map(|i| {
            let i = i as f64;
            i * (nf + 1.0 - i) / 2.0
        })
        .collect();
    (sup, sub)
}

/// General tridiagonal interaction matrix with unit row sums:
/// K^_ii = 1 + alpha_{i,i-1} + alpha_{i,i+1}, off-diagonals -alpha.
/// Carries the positive diagonal P^ that symmetrizes it and the resulting
/// S^ = diag(P^)^-1 K^.
pub struct GeneralTridiagonal {
    n: usize,
    khat: Vec<f64>,
    phat: Vec<f64>,
    shat: Vec<f64>,
    khat_inv: Vec<f64>,
}

impl GeneralTridiagonal {
    /// `sup[i] = alpha_{i+1,i+2}` and `sub[i] = alpha_{i+2,i+1}` in 1-based
    /// notation; both must have length n-1 with strictly positive entries.
    ///
    /// P^ is fixed by P^_1 = 1 and P^_{i+1}/P^_i = alpha_{i+1,i}/alpha_{i,i+1},
    /// which makes S^ symmetric; S^ is strictly diagonally dominant, hence
    /// positive definite, and K^-1 has positive entries with unit row sums.
    /// All three properties are verified, not assumed.
    pub fn new(sup: &[f64], sub: &[f64]) -> Result<Self> {
        let n = sup.len() + 1;
        if n < 2 {
            return Err(Error::RankOutOfRange { n });
        }
        if sub.len() != sup.len() {
            return Err(Error::DimensionMismatch {
                what: "sub-diagonal couplings",
                expected: sup.len(),
                got: sub.len(),
            });
        }
        for (idx, &v) in sup.iter().chain(sub.iter()).enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidCoefficient {
                    what: "coupling",
                    index: idx % (n - 1),
                    value: v,
                });
            }
        }

        let mut khat = vec![0.0; n * n];
        for i in 0..n {
            let left = if i > 0 { sub[i - 1] } else { 0.0 };
            let right = if i + 1 < n { sup[i] } else { 0.0 };
            khat[i * n + i] = 1.0 + left + right;
            if i > 0 {
                khat[i * n + i - 1] = -left;
            }
            if i + 1 < n {
                khat[i * n + i + 1] = -right;
            }
        }

        let mut phat = vec![1.0; n];
        for i in 1..n {
            phat[i] = phat[i - 1] * sub[i - 1] / sup[i - 1];
        }

        // Built symmetric by construction; K^ = diag(P^) S^ is then checked.
        let mut shat = vec![0.0; n * n];
        for i in 0..n {
            shat[i * n + i] = khat[i * n + i] / phat[i];
            if i + 1 < n {
                let off = -sup[i] / phat[i];
                shat[i * n + i + 1] = off;
                shat[(i + 1) * n + i] = off;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let recon = phat[i] * shat[i * n + j];
                let diff = (recon - khat[i * n + j]).abs();
                let scale = khat[i * n + j].abs().max(1.0);
                if diff > 1e-12 * scale {
                    return Err(Error::ConstraintViolation {
                        level: i,
                        detail: "K^ != diag(P^) S^",
                        value: diff,
                    });
                }
            }
        }

        if linalg::cholesky(n, &shat).is_none() {
            return Err(Error::ConstraintViolation {
                level: 0,
                detail: "S^ not positive definite",
                value: 0.0,
            });
        }

        let khat_inv = linalg::invert(n, &khat).ok_or(Error::ConstraintViolation {
            level: 0,
            detail: "K^ singular",
            value: 0.0,
        })?;
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let e = khat_inv[i * n + j];
                if e <= 0.0 {
                    return Err(Error::ConstraintViolation {
                        level: i,
                        detail: "K^-1 entry not positive",
                        value: e,
                    });
                }
                row_sum += e;
            }
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(Error::ConstraintViolation {
                    level: i,
                    detail: "row sum of K^-1 != 1",
                    value: row_sum - 1.0,
                });
            }
        }

        Ok(Self {
            n,
            khat,
            phat,
            shat,
            khat_inv,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn khat(&self) -> &[f64] {
        &self.khat
    }

    pub fn phat(&self) -> &[f64] {
        &self.phat
    }

    pub fn shat(&self) -> &[f64] {
        &self.shat
    }

    pub fn khat_inverse(&self) -> &[f64] {
        &self.khat_inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_below_two_is_rejected() {
        assert!(matches!(CartanData::new(0), Err(Error::RankOutOfRange { n: 0 })));
        assert!(matches!(CartanData::new(1), Err(Error::RankOutOfRange { n: 1 })));
    }

    #[test]
    fn su3_matrices_match_closed_forms() {
        let d = CartanData::new(2).unwrap();
        assert_eq!(d.k(), &[2, -1, -1, 2]);
        // R = (1, 1), so K~ = K and P~ = (1, 1), S~ = K.
        assert_eq!(d.r(), &[rat(1, 1), rat(1, 1)]);
        assert_eq!(d.ktilde(), &[rat(2, 1), rat(-1, 1), rat(-1, 1), rat(2, 1)]);
        assert_eq!(d.ptilde(), &[rat(1, 1), rat(1, 1)]);
        assert_eq!(d.stilde(), d.ktilde());
        // M = (1/3) [[2,1],[1,2]].
        assert_eq!(d.m(), &[rat(2, 3), rat(1, 3), rat(1, 3), rat(2, 3)]);
    }

    #[test]
    fn su4_matrices_match_closed_forms() {
        let d = CartanData::new(3).unwrap();
        // R = (3/2, 2, 3/2).
        assert_eq!(d.r(), &[rat(3, 2), rat(2, 1), rat(3, 2)]);
        // First row of K~ = K diag(R): (2*3/2, -2, 0) = (3, -2, 0).
        assert_eq!(&d.ktilde()[0..3], &[rat(3, 1), rat(-2, 1), rat(0, 1)]);
        assert_eq!(d.ptilde(), &[rat(1, 1), rat(3, 4), rat(1, 1)]);
        // Middle row of S~: P~_2^-1 (K~)_2 = (4/3)(-3/2, 4, -3/2).
        assert_eq!(&d.stilde()[3..6], &[rat(-2, 1), rat(16, 3), rat(-2, 1)]);
    }

    #[test]
    fn exact_identities_hold_for_all_ranks() {
        for n in 2..=30 {
            let d = CartanData::new(n).unwrap();
            // Row sums of K^-1 equal R, entries strictly positive, symmetric.
            for i in 0..n {
                let sum: Rational64 = d.kinv()[i * n..(i + 1) * n].iter().copied().sum();
                assert_eq!(sum, d.r()[i]);
                for j in 0..n {
                    assert!(d.kinv()[i * n + j].is_positive());
                    assert_eq!(d.kinv()[i * n + j], d.kinv()[j * n + i]);
                }
            }
            // Float views agree with closed forms to 1e-12 or better.
            let nf = n as f64;
            for a in 0..n {
                for bidx in 0..n {
                    let (i, j) = ((a + 1) as f64, (bidx + 1) as f64);
                    let want = i.min(j) * (nf + 1.0 - i.max(j)) / (nf + 1.0);
                    assert!((d.kinv_f64()[a * n + bidx] - want).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn spectra_are_positive_and_alpha0_matches_closed_form() {
        for n in 2..=30 {
            let d = CartanData::new(n).unwrap();
            assert!(linalg::is_positive_definite(n, d.stilde_f64()));
            assert!(linalg::is_positive_definite(n, d.m_f64()));
            let nf = n as f64;
            let s = (nf * PI / (2.0 * (nf + 1.0))).sin();
            let want = (2.0 / nf) / (4.0 * s * s);
            assert!(
                (d.alpha0() - want).abs() <= 1e-12 * want,
                "n={n}: alpha0 {} vs {}",
                d.alpha0(),
                want
            );
        }
    }

    #[test]
    fn source_vector_examples() {
        let d2 = CartanData::new(2).unwrap();
        let b = d2.source_vector(&[1, 1]).unwrap();
        assert!((b[0] - 4.0 * PI).abs() < 1e-12);
        assert!((b[1] - 4.0 * PI).abs() < 1e-12);
        let z = d2.source_vector(&[0, 0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);

        let d3 = CartanData::new(3).unwrap();
        let b = d3.source_vector(&[1, 0, 0]).unwrap();
        let want = [2.0 * PI, 4.0 * PI / 3.0, 2.0 * PI / 3.0];
        for i in 0..3 {
            assert!((b[i] - want[i]).abs() < 1e-12, "b[{i}] = {}", b[i]);
        }

        assert!(d3.source_vector(&[1, 0]).is_err());
    }

    #[test]
    fn lambda_lower_bound_reduces_for_uniform_vortex_numbers() {
        for n in 2..=30 {
            let d = CartanData::new(n).unwrap();
            for m in 1u64..=3 {
                for &area in &[1.0, 2.5] {
                    let nvec = vec![m; n];
                    let got = d.lambda_lower_bound(&nvec, area).unwrap();
                    let want = 16.0 * PI * m as f64 / area;
                    assert!(
                        (got - want).abs() <= 1e-12 * want,
                        "n={n} m={m} area={area}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn lambda_lower_bound_asymmetric_example() {
        // n = 2, N = (1, 0), area 1: K^-1 sums are (4/3 + 2/3) = 2 in the
        // denominator and (2/3 + 1/3) = 1 in the numerator, so 8 pi.
        let d = CartanData::new(2).unwrap();
        let got = d.lambda_lower_bound(&[1, 0], 1.0).unwrap();
        assert!((got - 8.0 * PI).abs() <= 1e-12 * 8.0 * PI);
        assert!((d.lambda_lower_bound(&[0, 0], 1.0).unwrap()).abs() == 0.0);
        assert!(d.lambda_lower_bound(&[1, 1], 0.0).is_err());
    }

    #[test]
    fn general_tridiagonal_reduces_to_su_case() {
        for n in 2..=8 {
            let (sup, sub) = su_couplings(n);
            let g = GeneralTridiagonal::new(&sup, &sub).unwrap();
            let d = CartanData::new(n).unwrap();
            for idx in 0..n * n {
                assert!(
                    (g.khat()[idx] - d.ktilde_f64()[idx]).abs() <= 1e-12,
                    "n={n} idx={idx}"
                );
                assert!((g.shat()[idx] - d.stilde_f64()[idx]).abs() <= 1e-12);
            }
            for i in 0..n {
                assert!((g.phat()[i] - d.ptilde_f64()[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn general_tridiagonal_symmetrizer_example() {
        // n = 3 with couplings alpha_{12} = 2, alpha_{21} = 1,
        // alpha_{23} = 1, alpha_{32} = 2: P^ = (1, 1/2, 1).
        let g = GeneralTridiagonal::new(&[2.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(g.phat(), &[1.0, 0.5, 1.0]);
        let n = 3;
        for i in 0..n {
            for j in 0..n {
                assert!((g.shat()[i * n + j] - g.shat()[j * n + i]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn general_tridiagonal_rejects_bad_couplings() {
        assert!(GeneralTridiagonal::new(&[1.0, -2.0], &[1.0, 1.0]).is_err());
        assert!(GeneralTridiagonal::new(&[0.0], &[1.0]).is_err());
        assert!(GeneralTridiagonal::new(&[1.0], &[1.0, 2.0]).is_err());
        assert!(GeneralTridiagonal::new(&[], &[]).is_err());
    }

    #[test]
    fn symmetric_couplings_give_unit_symmetrizer() {
        let g = GeneralTridiagonal::new(&[1.0], &[1.0]).unwrap();
        assert_eq!(g.khat(), &[2.0, -1.0, -1.0, 2.0]);
        assert_eq!(g.phat(), &[1.0, 1.0]);
    }
}
