//! Dense complex linear algebra used throughout the crate.
//!
//! Every rank decision goes through [`decide_rank`], which compares singular
//! values against `rank_tol * max(sigma_max, scale)` and records the outcome
//! in a [`RankDecision`] so callers can report the gap.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::Serialize;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default relative threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// A singular value within this factor of the threshold makes a decision ambiguous.
pub const AMBIGUITY_FACTOR: f64 = 100.0;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Outcome of one numerical rank decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankDecision {
    pub context: String,
    pub rank: usize,
    /// Number of singular values examined (the smaller matrix dimension).
    pub size: usize,
    pub threshold: f64,
    pub sigma_max: f64,
    pub smallest_kept: Option<f64>,
    pub largest_dropped: Option<f64>,
    pub ambiguous: bool,
}

impl RankDecision {
    /// Ratio of the smallest retained to the largest discarded singular value.
    pub fn gap(&self) -> Option<f64> {
        match (self.smallest_kept, self.largest_dropped) {
            (Some(k), Some(d)) if d > 0.0 => Some(k / d),
            _ => None,
        }
    }

    /// Smallest retained singular value measured in units of the threshold.
    pub fn margin(&self) -> Option<f64> {
        match self.smallest_kept {
            Some(k) if self.threshold > 0.0 => Some(k / self.threshold),
            _ => None,
        }
    }

    pub fn summary(&self) -> String {
        let gap = self
            .gap()
            .map(|g| format!("{g:.3e}"))
            .unwrap_or_else(|| "none".into());
        format!(
            "{}: rank {} of {} (threshold {:.3e}, gap {}{})",
            self.context,
            self.rank,
            self.size,
            self.threshold,
            gap,
            if self.ambiguous { ", AMBIGUOUS" } else { "" }
        )
    }
}

pub fn decide_rank(sv: &[f64], rank_tol: f64, scale: f64, context: &str) -> RankDecision {
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let threshold = rank_tol * sigma_max.max(scale);
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let smallest_kept = sv.iter().cloned().filter(|&s| s > threshold).reduce(f64::min);
    let largest_dropped = sv.iter().cloned().filter(|&s| s <= threshold).reduce(f64::max);
    let ambiguous = threshold > 0.0
        && sv
            .iter()
            .any(|&s| s > threshold / AMBIGUITY_FACTOR && s < threshold * AMBIGUITY_FACTOR);
    let d = RankDecision {
        context: context.to_string(),
        rank,
        size: sv.len(),
        threshold,
        sigma_max,
        smallest_kept,
        largest_dropped,
        ambiguous,
    };
    log::debug!("{}", d.summary());
    d
}

pub fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c64(x, 0.0))
}

/// Thin SVD with singular values sorted in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    /// Right singular vectors as columns (not the adjoint).
    pub v: CMat,
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD. nalgebra's complex SVD can return a wrong factorization for
/// sparse structured inputs (Kronecker-built Sylvester matrices), so this
/// goes through faer.
pub fn svd(m: &CMat) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: CMat::zeros(rows, 0),
            s: vec![],
            v: CMat::zeros(cols, 0),
        };
    }
    let d = to_faer(m).thin_svd().expect("SVD did not converge");
    let s = d.S().column_vector();
    Svd {
        u: from_faer(d.U()),
        s: (0..k).map(|i| s[i].re).collect(),
        v: from_faer(d.V()),
    }
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    svd(m).s
}

pub fn rank(m: &CMat, rank_tol: f64, scale: f64, context: &str) -> RankDecision {
    decide_rank(&singular_values(m), rank_tol, scale, context)
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn range_basis(m: &CMat, rank_tol: f64, scale: f64, context: &str) -> (CMat, RankDecision) {
    let d = svd(m);
    let dec = decide_rank(&d.s, rank_tol, scale, context);
    (d.u.columns(0, dec.rank).into_owned(), dec)
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn nullspace(m: &CMat, rank_tol: f64, scale: f64, context: &str) -> (CMat, RankDecision) {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return (CMat::zeros(0, 0), decide_rank(&[], rank_tol, scale, context));
    }
    // pad to at least square so the full right singular basis is available
    let padded = if rows < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let d = svd(&padded);
    let dec = decide_rank(&d.s[..rows.min(cols)], rank_tol, scale, context);
    let null = d.v.columns(dec.rank, cols - dec.rank).into_owned();
    (null, dec)
}

/// Minimal-norm least-squares solution of `a x = b` via the truncated SVD.
pub fn pinv_solve(a: &CMat, b: &CMat, rank_tol: f64, scale: f64, context: &str) -> (CMat, RankDecision) {
    let d = svd(a);
    let dec = decide_rank(&d.s, rank_tol, scale, context);
    let r = dec.rank;
    let mut x = CMat::zeros(a.ncols(), b.ncols());
    if r > 0 {
        let ur = d.u.columns(0, r);
        let vr = d.v.columns(0, r);
        let mut coef = ur.adjoint() * b;
        for i in 0..r {
            let inv = 1.0 / d.s[i];
            coef.row_mut(i).iter_mut().for_each(|z| *z *= inv);
        }
        x = vr * coef;
    }
    (x, dec)
}

pub fn pinv(a: &CMat, rank_tol: f64, scale: f64, context: &str) -> (CMat, RankDecision) {
    pinv_solve(a, &CMat::identity(a.nrows(), a.nrows()), rank_tol, scale, context)
}

/// General matrix exponential (Padé scaling and squaring from nalgebra).
pub fn expm(m: &CMat) -> CMat {
    if m.nrows() == 0 {
        return m.clone();
    }
    m.exp()
}

/// `∫_0^t e^{X(t-s)} C e^{Y s} ds`, read off the upper-right block of
/// `exp(t [[X, C], [0, Y]])`.
pub fn van_loan(x: &CMat, c: &CMat, y: &CMat, t: f64) -> CMat {
    let (p, q) = (x.nrows(), y.nrows());
    let mut big = CMat::zeros(p + q, p + q);
    big.view_mut((0, 0), (p, p)).copy_from(x);
    big.view_mut((0, p), (p, q)).copy_from(c);
    big.view_mut((p, p), (q, q)).copy_from(y);
    let e = expm(&(big * c64(t, 0.0)));
    e.view((0, p), (p, q)).into_owned()
}

/// Eigenvalues of a general square complex matrix.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    if m.nrows() == 0 {
        return vec![];
    }
    to_faer(m).eigenvalues().expect("eigenvalue iteration did not converge")
}

/// Matrix whose columns are the row-major flattenings of `mats`.
pub fn stack_flattened(mats: &[CMat]) -> CMat {
    let len = mats.first().map(|m| m.len()).unwrap_or(0);
    CMat::from_fn(len, mats.len(), |i, j| {
        let m = &mats[j];
        let c = m.ncols();
        m[(i / c, i % c)]
    })
}

/// Sine of the largest principal angle between the column spaces of `a` and `b`,
/// taken symmetrically so unequal dimensions are detected.
pub fn largest_angle_sin(a: &CMat, b: &CMat, rank_tol: f64) -> f64 {
    let (qa, _) = range_basis(a, rank_tol, 0.0, "angle lhs");
    let (qb, _) = range_basis(b, rank_tol, 0.0, "angle rhs");
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let ra = &qa - &qb * (qb.adjoint() * &qa);
    let rb = &qb - &qa * (qa.adjoint() * &qb);
    let sa = singular_values(&ra).first().cloned().unwrap_or(0.0);
    let sb = singular_values(&rb).first().cloned().unwrap_or(0.0);
    sa.max(sb).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> CMat {
        CMat::from_fn(rows, cols, |i, j| c64(v[i * cols + j], 0.0))
    }

    #[test]
    fn nullspace_of_wide_matrix_has_full_dimension() {
        let a = m(1, 3, &[1.0, 1.0, 0.0]);
        let (n, d) = nullspace(&a, 1e-10, 0.0, "t");
        assert_eq!(d.rank, 1);
        assert_eq!(n.ncols(), 2);
        assert!(max_abs(&(&a * &n)) < 1e-14);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let d = rank(&CMat::zeros(3, 3), 1e-8, 0.0, "zero");
        assert_eq!(d.rank, 0);
        assert!(!d.ambiguous);
    }

    #[test]
    fn scale_prevents_noise_from_counting_as_rank() {
        let a = m(1, 1, &[1e-17]);
        assert_eq!(rank(&a, 1e-8, 1.0, "noise").rank, 0);
        assert_eq!(rank(&a, 1e-8, 0.0, "noise").rank, 1);
    }

    #[test]
    fn pinv_solve_returns_minimal_norm() {
        let a = m(1, 2, &[1.0, 1.0]);
        let b = m(1, 1, &[2.0]);
        let (x, _) = pinv_solve(&a, &b, 1e-12, 0.0, "t");
        assert!((x[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((x[(1, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn van_loan_matches_scalar_integral() {
        // ∫_0^1 e^{2(1-s)} · 3 · e^{-s} ds = 3 e^2 (1 - e^{-3}) / 3
        let x = m(1, 1, &[2.0]);
        let c = m(1, 1, &[3.0]);
        let y = m(1, 1, &[-1.0]);
        let v = van_loan(&x, &c, &y, 1.0);
        let expected = 2f64.exp() * (1.0 - (-3f64).exp());
        assert!((v[(0, 0)].re - expected).abs() < 1e-12);
    }

    #[test]
    fn svd_values_are_sorted() {
        let a = m(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let s = singular_values(&a);
        for (x, y) in s.iter().zip([5.0, 3.0, 1.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_reconstructs_structured_sylvester_matrix() {
        // [J, .] for J = J_3(0) ⊕ J_2(1+i) ⊕ J_1(1+i), row-major coordinates
        let mut j = CMat::zeros(6, 6);
        for (i, l) in [(0, 0.0), (1, 0.0), (2, 0.0), (3, 1.0), (4, 1.0), (5, 1.0)] {
            j[(i, i)] = c64(l, l);
        }
        j[(0, 1)] = c64(1.0, 0.0);
        j[(1, 2)] = c64(1.0, 0.0);
        j[(3, 4)] = c64(1.0, 0.0);
        let id = CMat::identity(6, 6);
        let t = j.kronecker(&id) - id.kronecker(&j.transpose());
        let d = svd(&t);
        let s = CMat::from_diagonal(&DVector::from_iterator(d.s.len(), d.s.iter().map(|&x| c64(x, 0.0))));
        assert!(max_abs(&(&d.u * s * d.v.adjoint() - &t)) < 1e-12);
    }

    #[test]
    fn eigenvalues_of_triangular_matrix() {
        let a = CMat::from_row_slice(2, 2, &[c64(0.0, 1.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(2.0, 0.0)]);
        let mut e = eigenvalues(&a);
        e.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((e[0] - c64(0.0, 1.0)).norm() < 1e-12);
        assert!((e[1] - c64(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn angle_between_equal_spans_is_zero() {
        let a = m(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = m(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        assert!(largest_angle_sin(&a, &b, 1e-10) < 1e-14);
        let c = m(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(largest_angle_sin(&a, &c, 1e-10) > 0.9);
    }
}
