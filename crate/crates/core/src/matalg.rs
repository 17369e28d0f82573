//! Structure of `Mat_{c×c}` relative to the commutator `T(M) = [B, M]`.
//!
//! Inside the diagonal eigenvalue block `j`, the block pair `(ξ, λ)` with
//! sizes `n_ξ × n_λ` carries `min(n_ξ, n_λ)` oblique segments: runs of
//! entries `(u, u - d)` (1-based, local) for `d ≥ max(0, n_ξ - n_λ)`. Every
//! segment ends on the bottom row of its block at column `n_ξ - d`. Matrices
//! commuting with `B*` are constant along segments and vanish elsewhere;
//! `range(T)` consists of the matrices whose segment sums all vanish.
//!
//! Segments and the derived bases are ordered by `(j, ξ, λ, m)` with
//! `m = d - n_ξ + n_λ + 1` ascending, i.e. the bottom end sits in column
//! `n_λ - m + 1`.

use crate::error::{Error, Result};
use crate::linalg::{c64, pinv_solve, rank, stack_flattened, CMat, CVec, RankDecision};
use crate::spectral::JordanSpec;

pub fn commutator(b: &CMat, m: &CMat) -> CMat {
    b * m - m * b
}

/// Label of a segment or of the corresponding complement element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentLabel {
    pub j: usize,
    pub xi: usize,
    pub lam: usize,
    pub m: usize,
}

impl std::fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "j{}_xi{}_lam{}_m{}", self.j + 1, self.xi + 1, self.lam + 1, self.m)
    }
}

/// Entry in row `u` (1-based within block `ξ`) of the segment labelled by
/// `(j, ξ, λ, m)`; `u < n_ξ`, so this is never the bottom end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObliqueIndex {
    pub j: usize,
    pub xi: usize,
    pub lam: usize,
    pub m: usize,
    pub u: usize,
}

/// `Q(ξ, λ)`: labels `m` of the segments in block pair `(ξ, λ)`.
pub fn q_set(n_xi: usize, n_lam: usize) -> std::ops::RangeInclusive<usize> {
    if n_xi >= n_lam {
        1..=n_lam
    } else {
        (n_lam - n_xi + 1)..=n_lam
    }
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub label: SegmentLabel,
    /// Global 0-based positions, top-left end first.
    pub entries: Vec<(usize, usize)>,
}

impl Segment {
    pub fn bottom(&self) -> (usize, usize) {
        *self.entries.last().expect("segments are nonempty")
    }
}

pub fn segments(spec: &JordanSpec) -> Vec<Segment> {
    let offs = spec.offsets();
    let mut out = vec![];
    for j in 0..spec.r() {
        let sizes = &spec.block_sizes[j];
        let local = spec.local_offsets(j);
        for xi in 0..sizes.len() {
            for lam in 0..sizes.len() {
                let (nx, nl) = (sizes[xi], sizes[lam]);
                let row0 = offs[j] + local[xi];
                let col0 = offs[j] + local[lam];
                for m in q_set(nx, nl) {
                    let d = nx + m - 1 - nl;
                    let entries = (d + 1..=nx).map(|u| (row0 + u - 1, col0 + u - d - 1)).collect();
                    out.push(Segment { label: SegmentLabel { j, xi, lam, m }, entries });
                }
            }
        }
    }
    out
}

/// Which segment (index into [`segments`]) covers each entry, if any.
fn segment_map(spec: &JordanSpec, segs: &[Segment]) -> Vec<Vec<Option<usize>>> {
    let c = spec.c();
    let mut map = vec![vec![None; c]; c];
    for (k, s) in segs.iter().enumerate() {
        for &(i, j) in &s.entries {
            map[i][j] = Some(k);
        }
    }
    map
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisTag {
    W,
    RangeT,
    KerTStar,
    WHat,
}

#[derive(Clone, Debug)]
pub struct MatrixBasis {
    pub tag: BasisTag,
    pub elements: Vec<CMat>,
}

impl MatrixBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Columns are the row-major flattenings of the elements.
    pub fn as_columns(&self) -> CMat {
        stack_flattened(&self.elements)
    }
}

fn unit(c: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(c, c);
    m[(i, j)] = c64(1.0, 0.0);
    m
}

/// `Ω_{j;ξ,λ,m}`: a single 1 at the bottom end of each segment.
pub fn build_w_basis(spec: &JordanSpec) -> MatrixBasis {
    let c = spec.c();
    MatrixBasis {
        tag: BasisTag::W,
        elements: segments(spec)
            .iter()
            .map(|s| {
                let (i, j) = s.bottom();
                unit(c, i, j)
            })
            .collect(),
    }
}

pub fn w_labels(spec: &JordanSpec) -> Vec<SegmentLabel> {
    segments(spec).iter().map(|s| s.label).collect()
}

/// One all-ones segment indicator per segment; a basis of `ker(T*)`.
pub fn build_kertstar_basis(spec: &JordanSpec) -> MatrixBasis {
    let c = spec.c();
    MatrixBasis {
        tag: BasisTag::KerTStar,
        elements: segments(spec)
            .iter()
            .map(|s| {
                let mut m = CMat::zeros(c, c);
                for &(i, j) in &s.entries {
                    m[(i, j)] = c64(1.0, 0.0);
                }
                m
            })
            .collect(),
    }
}

/// Row-major scan: singletons off the segments (including all
/// off-diagonal eigenvalue blocks) and `E_a - E_bottom` for every segment
/// entry above the bottom end.
pub fn build_range_t_basis(spec: &JordanSpec) -> MatrixBasis {
    let c = spec.c();
    let segs = segments(spec);
    let map = segment_map(spec, &segs);
    let mut elements = vec![];
    for i in 0..c {
        for j in 0..c {
            match map[i][j] {
                None => elements.push(unit(c, i, j)),
                Some(k) => {
                    let (bi, bj) = segs[k].bottom();
                    if (i, j) != (bi, bj) {
                        let mut m = unit(c, i, j);
                        m[(bi, bj)] = c64(-1.0, 0.0);
                        elements.push(m);
                    }
                }
            }
        }
    }
    MatrixBasis { tag: BasisTag::RangeT, elements }
}

/// Labels of the pair elements of the range basis, in segment order.
pub fn oblique_indices(spec: &JordanSpec) -> Vec<ObliqueIndex> {
    let mut out = vec![];
    for s in segments(spec) {
        let n_xi = spec.block_sizes[s.label.j][s.label.xi];
        let first_row = n_xi + 1 - s.entries.len();
        for u in first_row..n_xi {
            out.push(ObliqueIndex { j: s.label.j, xi: s.label.xi, lam: s.label.lam, m: s.label.m, u });
        }
    }
    out
}

/// Component of `Z` in `W` along `Mat = range(T) ⊕ W`: each segment sum moved
/// to the bottom end, everything else zeroed.
pub fn gamma_project(z: &CMat, spec: &JordanSpec) -> Result<CMat> {
    let c = spec.c();
    if z.nrows() != c || z.ncols() != c {
        return Err(Error::Dimension(format!("expected {c}x{c} matrix")));
    }
    let mut out = CMat::zeros(c, c);
    for s in segments(spec) {
        let sum = s.entries.iter().fold(c64(0.0, 0.0), |acc, &(i, j)| acc + z[(i, j)]);
        let (bi, bj) = s.bottom();
        out[(bi, bj)] = sum;
    }
    Ok(out)
}

/// `Π_j`: the block-end rows of `Ψ(0)` for eigenvalue `j`, each of full row rank.
pub fn build_pi(psi0: &CMat, spec: &JordanSpec, rank_tol: f64) -> Result<(Vec<CMat>, Vec<RankDecision>)> {
    if psi0.nrows() != spec.c() {
        return Err(Error::Dimension("Ψ(0) must have c rows".into()));
    }
    let mut pis = vec![];
    let mut decisions = vec![];
    let scale = crate::linalg::max_abs(psi0);
    for j in 0..spec.r() {
        let rows: Vec<_> = spec.block_end_rows(j).iter().map(|&r| psi0.row(r).into_owned()).collect();
        let pi = CMat::from_rows(&rows);
        let dec = rank(&pi, rank_tol, scale, &format!("Π_{}", j + 1));
        if dec.rank != spec.k(j) {
            return Err(Error::InvalidBasis(format!(
                "Π_{} has rank {} < {}; block-end rows of Ψ(0) are dependent",
                j + 1,
                dec.rank,
                spec.k(j)
            )));
        }
        decisions.push(dec);
        pis.push(pi);
    }
    Ok((pis, decisions))
}

/// The isomorphism `E: W → Ŵ ⊂ R(Ψ(0))` with its data.
#[derive(Clone, Debug)]
pub struct EMap {
    /// `v[j][ℓ]` solves `Π_j v = e_ℓ`.
    pub v: Vec<Vec<CVec>>,
    pub labels: Vec<SegmentLabel>,
    /// `R_{j;ξ,λ,m}`, `n × c`.
    pub r_list: Vec<CMat>,
    /// `Ψ(0) R` for each `R`.
    pub w_hat: MatrixBasis,
    pub span_decision: RankDecision,
}

/// Minimal-norm solutions of `Π_j v = e_ℓ`.
pub fn minimal_norm_v(pis: &[CMat], rank_tol: f64) -> Vec<Vec<CVec>> {
    pis.iter()
        .map(|pi| {
            let k = pi.nrows();
            let (x, _) = pinv_solve(pi, &CMat::identity(k, k), rank_tol, 0.0, "Π_j v = e_ℓ");
            (0..k).map(|l| x.column(l).into_owned()).collect()
        })
        .collect()
}

pub fn build_e_map(spec: &JordanSpec, psi0: &CMat, rank_tol: f64) -> Result<EMap> {
    let (pis, _) = build_pi(psi0, spec, rank_tol)?;
    let v = minimal_norm_v(&pis, rank_tol);
    build_e_map_with(spec, psi0, v, rank_tol)
}

/// Same as [`build_e_map`] with caller-supplied `v_{j,ℓ}` (checked against `Π_j`).
pub fn build_e_map_with(spec: &JordanSpec, psi0: &CMat, v: Vec<Vec<CVec>>, rank_tol: f64) -> Result<EMap> {
    let c = spec.c();
    let n = psi0.ncols();
    let (pis, _) = build_pi(psi0, spec, rank_tol)?;
    if v.len() != spec.r() || (0..spec.r()).any(|j| v[j].len() != spec.k(j)) {
        return Err(Error::Dimension("one vector per block of each eigenvalue expected".into()));
    }
    for j in 0..spec.r() {
        for (l, vl) in v[j].iter().enumerate() {
            if vl.len() != n {
                return Err(Error::Dimension("v vectors must have length n".into()));
            }
            let img = &pis[j] * vl;
            let mut e = CVec::zeros(spec.k(j));
            e[l] = c64(1.0, 0.0);
            let err = (img - e).norm();
            if err > 1e-9 {
                return Err(Error::Residual { context: format!("Π_{} v = e_{}", j + 1, l + 1), residual: err, limit: 1e-9 });
            }
        }
    }
    let offs = spec.offsets();
    let labels = w_labels(spec);
    let mut r_list = vec![];
    for lab in &labels {
        let sizes = &spec.block_sizes[lab.j];
        let col = offs[lab.j] + spec.local_offsets(lab.j)[lab.lam] + sizes[lab.lam] - lab.m;
        let mut r = CMat::zeros(n, c);
        r.set_column(col, &v[lab.j][lab.xi]);
        r_list.push(r);
    }
    let elements: Vec<CMat> = r_list.iter().map(|r| psi0 * r).collect();
    let w_hat = MatrixBasis { tag: BasisTag::WHat, elements };
    let range = build_range_t_basis(spec);
    let mut all = range.elements.clone();
    all.extend(w_hat.elements.iter().cloned());
    let span_decision = rank(&stack_flattened(&all), rank_tol, 0.0, "range(T) + Ŵ");
    if span_decision.rank != c * c {
        return Err(Error::SpanFailure(span_decision.summary()));
    }
    Ok(EMap { v, labels, r_list, w_hat, span_decision })
}
