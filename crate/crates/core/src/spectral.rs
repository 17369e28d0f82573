//! Jordan structure at selected characteristic roots, generalized eigenbases
//! of the equation and its transpose, the adjoint bilinear form and the
//! normalized pair `(Ψ, Φ) = I`.
//!
//! Chains are read off the kernels of the lower block-Toeplitz matrices
//! `T_m = [Δ_0; Δ_1 Δ_0; ...; Δ_{m-1} ... Δ_0]` with `Δ_p = Δ^{(p)}(λ)/p!`:
//! a kernel vector stacks `(φ_1, ..., φ_m)` with `Σ_p Δ_p φ_{i-p} = 0`.


use crate::error::{Error, Result};
use crate::linalg::{
    c64, max_abs, nullspace, pinv_solve, range_basis, rank, svd, van_loan, CMat, CVec, RankDecision, C64,
};
use crate::model::LinearRfde;

/// Longest chain length probed before giving up.
const MAX_CHAIN: usize = 32;

/// Largest relative distance Newton refinement may move a supplied root.
pub const ROOT_TOL: f64 = 1e-6;

/// Roots closer than this (relative) to the conjugate of an earlier root are
/// treated as its exact mirror image.
const CONJ_SNAP: f64 = 1e-9;

/// Eigenvalues with their Jordan block sizes (nonincreasing per eigenvalue).
#[derive(Clone, Debug, PartialEq)]
pub struct JordanSpec {
    pub eigenvalues: Vec<C64>,
    pub block_sizes: Vec<Vec<usize>>,
}

impl JordanSpec {
    pub fn new(eigenvalues: Vec<C64>, block_sizes: Vec<Vec<usize>>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != block_sizes.len() {
            return Err(Error::InvalidModel("one block list per eigenvalue expected".into()));
        }
        for (j, sizes) in block_sizes.iter().enumerate() {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::InvalidModel(format!("eigenvalue {j} has an empty or zero block")));
            }
            if sizes.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::InvalidModel(format!("block sizes of eigenvalue {j} must be nonincreasing")));
            }
        }
        for a in 0..eigenvalues.len() {
            for b in 0..a {
                if eigenvalues[a] == eigenvalues[b] {
                    return Err(Error::InvalidModel("eigenvalues must be distinct".into()));
                }
            }
        }
        Ok(Self { eigenvalues, block_sizes })
    }

    pub fn r(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn k(&self, j: usize) -> usize {
        self.block_sizes[j].len()
    }

    pub fn c(&self) -> usize {
        self.block_sizes.iter().flatten().sum()
    }

    /// `N_0 = 0, N_j = N_{j-1} + Σ_ℓ n_{j,ℓ}`; length `r + 1`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = vec![0];
        for s in &self.block_sizes {
            out.push(out.last().unwrap() + s.iter().sum::<usize>());
        }
        out
    }

    /// Start of each block of eigenvalue `j`, relative to `N_{j-1}`.
    pub fn local_offsets(&self, j: usize) -> Vec<usize> {
        let mut acc = 0;
        self.block_sizes[j]
            .iter()
            .map(|&s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }

    /// `δ = Σ_j Σ_ℓ (2ℓ - 1) n_{j,ℓ}`.
    pub fn delta(&self) -> usize {
        self.block_sizes
            .iter()
            .map(|s| s.iter().enumerate().map(|(l, &n)| (2 * l + 1) * n).sum::<usize>())
            .sum()
    }

    /// Global row index (0-based) of the last row of every block of eigenvalue `j`.
    pub fn block_end_rows(&self, j: usize) -> Vec<usize> {
        let base = self.offsets()[j];
        self.local_offsets(j)
            .iter()
            .zip(&self.block_sizes[j])
            .map(|(o, s)| base + o + s - 1)
            .collect()
    }

    /// Upper-triangular Jordan matrix `B`.
    pub fn jordan_matrix(&self) -> CMat {
        let c = self.c();
        let mut b = CMat::zeros(c, c);
        let offs = self.offsets();
        for j in 0..self.r() {
            for (o, &s) in self.local_offsets(j).iter().zip(&self.block_sizes[j]) {
                let start = offs[j] + o;
                for i in 0..s {
                    b[(start + i, start + i)] = self.eigenvalues[j];
                    if i + 1 < s {
                        b[(start + i, start + i + 1)] = c64(1.0, 0.0);
                    }
                }
            }
        }
        b
    }
}

/// Closed-form `e^{Bt}` for the Jordan matrix of `spec`.
pub fn matrix_exp_jordan(spec: &JordanSpec, t: f64) -> CMat {
    let c = spec.c();
    let mut e = CMat::zeros(c, c);
    let offs = spec.offsets();
    for j in 0..spec.r() {
        let scale = (spec.eigenvalues[j] * t).exp();
        for (o, &s) in spec.local_offsets(j).iter().zip(&spec.block_sizes[j]) {
            let start = offs[j] + o;
            let mut term = 1.0;
            for k in 0..s {
                for i in 0..s - k {
                    e[(start + i, start + i + k)] = scale * term;
                }
                term *= t / (k + 1) as f64;
            }
        }
    }
    e
}

/// Jordan structure together with every rank decision that produced it.
#[derive(Clone, Debug)]
pub struct JordanAnalysis {
    pub spec: JordanSpec,
    pub decisions: Vec<RankDecision>,
}

fn taylor_blocks(rfde: &LinearRfde, lambda: C64, m: usize, transpose: bool) -> Vec<CMat> {
    let mut fact = 1.0;
    (0..m)
        .map(|p| {
            if p > 0 {
                fact *= p as f64;
            }
            let d = rfde.char_matrix(lambda, p) / c64(fact, 0.0);
            if transpose {
                d.transpose()
            } else {
                d
            }
        })
        .collect()
}

/// `T_m` for `Δ` (or `Δᵀ` when `transpose`).
pub fn chain_matrix(rfde: &LinearRfde, lambda: C64, m: usize, transpose: bool) -> CMat {
    let n = rfde.n();
    let blocks = taylor_blocks(rfde, lambda, m, transpose);
    let mut t = CMat::zeros(m * n, m * n);
    for i in 0..m {
        for k in 0..=i {
            t.view_mut((i * n, k * n), (n, n)).copy_from(&blocks[i - k]);
        }
    }
    t
}

/// Newton refinement of a characteristic root using `1/tr(Δ⁻¹Δ')` steps.
/// Roots that are already numerically singular are returned unchanged.
pub fn refine_root(rfde: &LinearRfde, lambda: C64) -> C64 {
    let mut l = lambda;
    for _ in 0..200 {
        let d0 = rfde.char_matrix(l, 0);
        let s = svd(&d0).s;
        let smin = s.last().cloned().unwrap_or(0.0);
        if smin <= 1e-14 * rfde.scale_at(l) {
            break;
        }
        let inv = match d0.clone().try_inverse() {
            Some(i) => i,
            None => break,
        };
        let tr = (inv * rfde.char_matrix(l, 1)).trace();
        if tr.norm() == 0.0 {
            break;
        }
        let step = c64(1.0, 0.0) / tr;
        l -= step;
        if step.norm() <= 1e-16 * (1.0 + l.norm()) {
            break;
        }
    }
    l
}

fn snap_conjugates(rfde: &LinearRfde, lambdas: &mut [C64]) {
    if !rfde.is_real() {
        return;
    }
    for a in 0..lambdas.len() {
        let tol = CONJ_SNAP * (1.0 + lambdas[a].norm());
        if lambdas[a].im.abs() <= tol {
            lambdas[a].im = 0.0;
            continue;
        }
        for b in 0..a {
            if (lambdas[a] - lambdas[b].conj()).norm() <= tol {
                lambdas[a] = lambdas[b].conj();
                break;
            }
        }
    }
}

/// Number of blocks of length ≥ m for m = 1, 2, ... from ranks of `T_m`.
fn chain_counts(rfde: &LinearRfde, lambda: C64, rank_tol: f64, decisions: &mut Vec<RankDecision>) -> Result<Vec<usize>> {
    let n = rfde.n();
    let scale = rfde.scale_at(lambda);
    let mut counts = vec![];
    let mut prev = 0usize;
    for m in 1..=MAX_CHAIN {
        let t = chain_matrix(rfde, lambda, m, false);
        let dec = rank(&t, rank_tol, scale, &format!("chain matrix T_{m} at {lambda}"));
        let ambiguous = dec.ambiguous;
        let d = m * n - dec.rank;
        decisions.push(dec.clone());
        if ambiguous {
            return Err(Error::AmbiguousRank(dec.summary()));
        }
        if d < prev {
            return Err(Error::Chain(format!("kernel dimension decreased at m = {m} for {lambda}")));
        }
        let g = d - prev;
        if g == 0 {
            break;
        }
        if let Some(&last) = counts.last() {
            if g > last {
                return Err(Error::Chain(format!("inconsistent chain counts at m = {m} for {lambda}")));
            }
        }
        counts.push(g);
        prev = d;
        if m == MAX_CHAIN {
            return Err(Error::Chain(format!("chains at {lambda} longer than {MAX_CHAIN}")));
        }
    }
    Ok(counts)
}

/// Jordan structure of the generator at each root in `lambdas` (kept in the
/// given order). Roots are Newton-refined; for real equations, roots that
/// are numerically real or conjugate to an earlier entry are snapped exactly.
pub fn jordan_structure(rfde: &LinearRfde, lambdas: &[C64], rank_tol: f64) -> Result<JordanAnalysis> {
    let mut refined = vec![];
    for &l in lambdas {
        let r = refine_root(rfde, l);
        if !((r - l).norm() <= ROOT_TOL * (1.0 + l.norm())) {
            let scale = rfde.scale_at(l);
            let ratio = svd(&rfde.char_matrix(l, 0)).s.last().cloned().unwrap_or(0.0) / scale;
            return Err(Error::NotARoot { lambda: l, ratio });
        }
        refined.push(r);
    }
    snap_conjugates(rfde, &mut refined);
    let mut decisions = vec![];
    let mut sizes = vec![];
    for &l in &refined {
        let scale = rfde.scale_at(l);
        let d0 = rank(&rfde.char_matrix(l, 0), rank_tol, scale, &format!("Δ at {l}"));
        if d0.rank == rfde.n() {
            let ratio = d0.smallest_kept.unwrap_or(0.0) / scale;
            decisions.push(d0);
            return Err(Error::NotARoot { lambda: l, ratio });
        }
        let counts = chain_counts(rfde, l, rank_tol, &mut decisions)?;
        let mut blocks = vec![];
        for (i, &g) in counts.iter().enumerate() {
            let next = counts.get(i + 1).cloned().unwrap_or(0);
            for _ in 0..g - next {
                blocks.push(i + 1);
            }
        }
        blocks.sort_unstable_by(|a, b| b.cmp(a));
        sizes.push(blocks);
    }
    Ok(JordanAnalysis { spec: JordanSpec::new(refined, sizes)?, decisions })
}

/// Scales `x` so its first component of significant modulus equals 1.
fn normalize_leading(x: &mut CVec) {
    let big = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if big == 0.0 {
        return;
    }
    if let Some(p) = x.iter().find(|z| z.norm() > 1e-8 * big).cloned() {
        *x /= p;
    }
}

/// Chains `(φ_1, ..., φ_s)` for every block of one eigenvalue, longest first.
fn chains_at(
    rfde: &LinearRfde,
    lambda: C64,
    sizes: &[usize],
    transpose: bool,
    rank_tol: f64,
) -> Result<Vec<Vec<CVec>>> {
    let n = rfde.n();
    let scale = rfde.scale_at(lambda);
    let mut chosen: Vec<CVec> = vec![];
    let mut out: Vec<Vec<CVec>> = vec![];
    let longest = sizes[0];
    for m in (1..=longest).rev() {
        let want = sizes.iter().filter(|&&s| s == m).count();
        if want == 0 {
            continue;
        }
        let t = chain_matrix(rfde, lambda, m, transpose);
        let (k, _) = nullspace(&t, rank_tol, scale, &format!("chain kernel T_{m} at {lambda}"));
        let f = k.rows(0, n).into_owned();
        let (e_basis, dec) = range_basis(&f, rank_tol, 1.0, &format!("leading components E_{m} at {lambda}"));
        let expected = sizes.iter().filter(|&&s| s >= m).count();
        if dec.rank != expected {
            return Err(Error::Chain(format!(
                "{} independent leading vectors for chains of length {m} at {lambda}, expected {expected}",
                dec.rank
            )));
        }
        let complement = if chosen.is_empty() {
            e_basis
        } else {
            let x = CMat::from_columns(&chosen);
            let (qx, _) = range_basis(&x, rank_tol, 0.0, "chosen eigenvectors");
            &e_basis - &qx * (qx.adjoint() * &e_basis)
        };
        let d = svd(&complement);
        if d.s.len() < want || d.s[want - 1] <= 1e-6 {
            return Err(Error::Chain(format!("no complement for chains of length {m} at {lambda}")));
        }
        for i in 0..want {
            let mut x: CVec = d.u.column(i).into_owned();
            normalize_leading(&mut x);
            let (c, _) = pinv_solve(&f, &CMat::from_columns(&[x.clone()]), rank_tol, 0.0, "chain coefficients");
            let stacked = &k * c;
            let chain: Vec<CVec> = (0..m).map(|p| stacked.column(0).rows(p * n, n).into_owned()).collect();
            if (&chain[0] - &x).norm() > 1e-8 * (1.0 + x.norm()) {
                return Err(Error::Chain(format!("eigenvector not reproduced by chain solve at {lambda}")));
            }
            chosen.push(x);
            out.push(chain);
        }
    }
    Ok(out)
}

fn conj_partner(spec: &JordanSpec, j: usize) -> Option<usize> {
    let l = spec.eigenvalues[j];
    if l.im == 0.0 {
        return None;
    }
    (0..j).find(|&i| spec.eigenvalues[i] == l.conj() && spec.block_sizes[i] == spec.block_sizes[j])
}

fn all_chains(rfde: &LinearRfde, spec: &JordanSpec, transpose: bool, rank_tol: f64) -> Result<Vec<Vec<Vec<CVec>>>> {
    let mirror = rfde.is_real();
    let mut per_eig: Vec<Vec<Vec<CVec>>> = vec![];
    for j in 0..spec.r() {
        let partner = if mirror { conj_partner(spec, j) } else { None };
        let chains = match partner {
            Some(i) => per_eig[i]
                .iter()
                .map(|ch| ch.iter().map(|v| v.map(|z| z.conj())).collect())
                .collect(),
            None => chains_at(rfde, spec.eigenvalues[j], &spec.block_sizes[j], transpose, rank_tol)?,
        };
        per_eig.push(chains);
    }
    Ok(per_eig)
}

/// `Φ(0)`: right chains as columns, block by block.
pub fn right_basis(rfde: &LinearRfde, spec: &JordanSpec, rank_tol: f64) -> Result<CMat> {
    let chains = all_chains(rfde, spec, false, rank_tol)?;
    let cols: Vec<CVec> = chains.into_iter().flatten().flatten().collect();
    Ok(CMat::from_columns(&cols))
}

/// Unnormalized `Ψ*(0)`: left chains as rows, each block listed bottom-up so
/// that `Ψ*(s) = e^{-Bs} Ψ*(0)` with the same `B` as the right basis.
pub fn left_basis(rfde: &LinearRfde, spec: &JordanSpec, rank_tol: f64) -> Result<CMat> {
    let chains = all_chains(rfde, spec, true, rank_tol)?;
    let mut rows = vec![];
    for block in chains.into_iter().flatten() {
        for v in block.into_iter().rev() {
            rows.push(v.transpose());
        }
    }
    Ok(CMat::from_rows(&rows))
}

/// `(ψ, φ) = Ψ(0)Φ(0) + Σ_k ∫_{-τ_k}^0 Ψ(ξ+τ_k) A_k Φ(ξ) dξ` for
/// `Ψ(s) = e^{-G s} Ψ(0)` and `Φ(θ) = Φ(0) e^{H θ}`, integrated exactly.
pub fn bilinear_form(psi0: &CMat, psi_gen: &CMat, phi0: &CMat, phi_gen: &CMat, rfde: &LinearRfde) -> Result<CMat> {
    let n = rfde.n();
    if psi0.ncols() != n || phi0.nrows() != n || psi_gen.nrows() != psi0.nrows() || phi_gen.nrows() != phi0.ncols() {
        return Err(Error::Dimension("bilinear form operands do not match".into()));
    }
    let mut g = psi0 * phi0;
    let mg = -psi_gen.clone();
    let mh = -phi_gen.clone();
    for a in rfde.atoms() {
        if a.tau == 0.0 {
            continue;
        }
        let c = psi0 * &a.coeff * phi0;
        g += van_loan(&mg, &c, &mh, a.tau);
    }
    Ok(g)
}

/// Normalized spectral data: `Φ(θ) = Φ(0)e^{Bθ}`, `Ψ(s) = e^{-Bs}Ψ(0)`, `(Ψ,Φ) = I`.
#[derive(Clone, Debug)]
pub struct SpectralBases {
    pub spec: JordanSpec,
    pub b: CMat,
    pub phi0: CMat,
    pub psi0: CMat,
    pub psi_star0: CMat,
    /// `(Ψ*, Φ)` before normalization.
    pub gram: CMat,
    pub gram_condition: f64,
    pub tau_max: f64,
}

impl SpectralBases {
    pub fn c(&self) -> usize {
        self.spec.c()
    }

    pub fn phi_at(&self, theta: f64) -> CMat {
        &self.phi0 * matrix_exp_jordan(&self.spec, theta)
    }

    pub fn psi_at(&self, s: f64) -> CMat {
        matrix_exp_jordan(&self.spec, -s) * &self.psi0
    }
}

/// `Ψ(0) = (Ψ*, Φ)^{-1} Ψ*(0)`.
pub fn normalize(psi_star0: &CMat, phi0: &CMat, spec: &JordanSpec, rfde: &LinearRfde, rank_tol: f64) -> Result<SpectralBases> {
    let b = spec.jordan_matrix();
    let gram = bilinear_form(psi_star0, &b, phi0, &b, rfde)?;
    let s = svd(&gram).s;
    let condition = s[0] / s.last().cloned().unwrap_or(0.0);
    if !(condition.is_finite()) || condition * rank_tol >= 1.0 {
        return Err(Error::SingularForm { condition });
    }
    let inv = gram
        .clone()
        .try_inverse()
        .ok_or(Error::SingularForm { condition })?;
    let psi0 = inv * psi_star0;
    let check = bilinear_form(&psi0, &b, phi0, &b, rfde)?;
    let err = max_abs(&(check - CMat::identity(spec.c(), spec.c())));
    if err > 1e-9 * condition.max(1.0) {
        return Err(Error::Residual { context: "(Ψ,Φ) = I".into(), residual: err, limit: 1e-9 });
    }
    Ok(SpectralBases {
        spec: spec.clone(),
        b,
        phi0: phi0.clone(),
        psi0,
        psi_star0: psi_star0.clone(),
        gram,
        gram_condition: condition,
        tau_max: rfde.tau_max(),
    })
}

/// Full pipeline: Jordan structure, both chain bases and normalization.
pub fn spectral_bases(rfde: &LinearRfde, lambdas: &[C64], rank_tol: f64) -> Result<(SpectralBases, Vec<RankDecision>)> {
    let analysis = jordan_structure(rfde, lambdas, rank_tol)?;
    let bases = bases_for_spec(rfde, &analysis.spec, rank_tol)?;
    Ok((bases, analysis.decisions))
}

pub fn bases_for_spec(rfde: &LinearRfde, spec: &JordanSpec, rank_tol: f64) -> Result<SpectralBases> {
    let phi0 = right_basis(rfde, spec, rank_tol)?;
    let psi_star0 = left_basis(rfde, spec, rank_tol)?;
    normalize(&psi_star0, &phi0, spec, rfde, rank_tol)
}

/// Orders a conjugation-closed root set as real roots (descending real
/// part), then roots in the upper half plane, then their conjugates.
pub fn real_ordering(lambdas: &[C64]) -> Result<Vec<C64>> {
    let tol = |l: C64| CONJ_SNAP * (1.0 + l.norm());
    let mut real: Vec<C64> = lambdas.iter().filter(|l| l.im.abs() <= tol(**l)).map(|l| c64(l.re, 0.0)).collect();
    let mut upper: Vec<C64> = lambdas.iter().filter(|l| l.im > tol(**l)).cloned().collect();
    let lower: Vec<C64> = lambdas.iter().filter(|l| l.im < -tol(**l)).cloned().collect();
    real.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal));
    if upper.len() != lower.len() {
        return Err(Error::Conjugation("root set is not closed under conjugation".into()));
    }
    for u in &upper {
        if !lower.iter().any(|l| (*l - u.conj()).norm() <= tol(*u)) {
            return Err(Error::Conjugation(format!("conjugate of {u} is missing")));
        }
    }
    let conj: Vec<C64> = upper.iter().map(|u| u.conj()).collect();
    let mut out = real;
    out.append(&mut upper);
    out.extend(conj);
    Ok(out)
}
