//! Sufficient test for versality of a parametrized family.
//!
//! `S` stacks the flattened commutators `[B, E_ij]` (row-major over `(i, j)`)
//! above the flattened projected directions `Ψ(0) ∂ℒ/∂α_i (Φ)`. Rank `c²`
//! shows versality; if in addition the commutators span exactly `c² - p`
//! dimensions the family is mini-versal.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, rank, CMat, RankDecision};
use crate::model::ParametrizedFamily;
use crate::spectral::SpectralBases;

/// Row-major flattening; `E_ij` maps to the unit vector at `(i-1)c + j`.
pub fn theta_flatten(m: &CMat) -> Vec<crate::linalg::C64> {
    let (r, c) = m.shape();
    (0..r * c).map(|k| m[(k / c, k % c)]).collect()
}

/// `Ψ(0) · L_i(Φ)` for every direction of the family.
pub fn direction_matrices(family: &ParametrizedFamily, bases: &SpectralBases) -> Result<Vec<CMat>> {
    if family.base.n() != bases.phi0.nrows() {
        return Err(Error::Dimension("family and bases disagree on n".into()));
    }
    family
        .directions
        .iter()
        .map(|d| Ok(&bases.psi0 * d.apply_with_generator(&bases.phi0, &bases.b)?))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct VersalityReport {
    pub c: usize,
    pub p: usize,
    pub rank_s: usize,
    pub commutator_rank: usize,
    pub versal: bool,
    pub miniversal: bool,
    pub codim: usize,
    /// Ratio of the smallest kept to the largest dropped singular value of `S`,
    /// absent when nothing was dropped.
    pub singular_value_gap: Option<f64>,
    pub rank_tol: f64,
    pub ambiguous: bool,
    pub s_decision: RankDecision,
    pub commutator_decision: RankDecision,
}

impl VersalityReport {
    pub fn verdict(&self) -> &'static str {
        match (self.versal, self.miniversal) {
            (true, true) => "mini-versal",
            (true, false) => "versal",
            _ => "not shown versal by this criterion",
        }
    }
}

pub fn build_s(b: &CMat, directions: &[CMat]) -> Result<CMat> {
    let c = b.nrows();
    if b.ncols() != c || directions.iter().any(|d| d.shape() != (c, c)) {
        return Err(Error::Dimension(format!("all matrices must be {c}x{c}")));
    }
    let p = directions.len();
    let mut s = CMat::zeros(c * c + p, c * c);
    for i in 0..c {
        for j in 0..c {
            let mut e = CMat::zeros(c, c);
            e[(i, j)] = c64(1.0, 0.0);
            let row = theta_flatten(&(b * &e - &e * b));
            for (k, v) in row.into_iter().enumerate() {
                s[(i * c + j, k)] = v;
            }
        }
    }
    for (q, d) in directions.iter().enumerate() {
        for (k, v) in theta_flatten(d).into_iter().enumerate() {
            s[(c * c + q, k)] = v;
        }
    }
    Ok(s)
}

pub fn build_s_and_check(b: &CMat, directions: &[CMat], rank_tol: f64) -> Result<VersalityReport> {
    let c = b.nrows();
    let p = directions.len();
    let s = build_s(b, directions)?;
    let s_decision = rank(&s, rank_tol, 0.0, "S");
    let commutator_decision = rank(&s.rows(0, c * c).into_owned(), rank_tol, 0.0, "commutator rows of S");
    let versal = s_decision.rank == c * c;
    let miniversal = versal && commutator_decision.rank + p == c * c;
    Ok(VersalityReport {
        c,
        p,
        rank_s: s_decision.rank,
        commutator_rank: commutator_decision.rank,
        versal,
        miniversal,
        codim: c * c - commutator_decision.rank,
        singular_value_gap: s_decision.gap(),
        rank_tol,
        ambiguous: s_decision.ambiguous || commutator_decision.ambiguous,
        s_decision,
        commutator_decision,
    })
}

/// Convenience: directions from a family, then the rank test.
pub fn check_family(family: &ParametrizedFamily, bases: &SpectralBases, rank_tol: f64) -> Result<VersalityReport> {
    let dirs = direction_matrices(family, bases)?;
    build_s_and_check(&bases.b, &dirs, rank_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_is_row_major() {
        let mut e12 = CMat::zeros(2, 2);
        e12[(0, 1)] = c64(1.0, 0.0);
        let v = theta_flatten(&e12);
        assert_eq!(v, vec![c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let mut e22 = CMat::zeros(2, 2);
        e22[(1, 1)] = c64(1.0, 0.0);
        assert_eq!(theta_flatten(&e22)[3], c64(1.0, 0.0));
    }

    #[test]
    fn scalar_zero_without_directions_is_not_versal() {
        let r = build_s_and_check(&CMat::zeros(1, 1), &[], 1e-8).unwrap();
        assert_eq!(r.rank_s, 0);
        assert!(!r.versal);
        assert_eq!(r.verdict(), "not shown versal by this criterion");
    }

    #[test]
    fn scalar_zero_with_one_direction_is_miniversal() {
        let d = CMat::from_element(1, 1, c64(0.3, -0.2));
        let r = build_s_and_check(&CMat::zeros(1, 1), &[d], 1e-8).unwrap();
        assert_eq!(r.rank_s, 1);
        assert!(r.versal && r.miniversal);
        assert_eq!(r.codim, 1);
    }
}
