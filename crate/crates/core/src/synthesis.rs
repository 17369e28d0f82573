//! Construction of mini-versal unfoldings as explicit delay operators.
//!
//! For every complement element `Ω_m` the target `ℰ(Ω_m) = Ψ(0) R_m` is
//! realised by `L_m(z) = Σ_j A^m_j z(τ_j)` with `Σ_j A^m_j Φ(τ_j) = R_m`,
//! where the delay points make `col(Φ(τ_0), ...)` of full column rank `c`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{c64, max_abs, pinv, range_basis, rank, svd, CMat, CVec, RankDecision, DEFAULT_RANK_TOL};
use crate::matalg::{build_e_map, build_e_map_with, EMap, SegmentLabel};
use crate::model::{DelayAtom, DirectionOperator, LinearRfde, ParametrizedFamily};
use crate::spectral::{bases_for_spec, real_ordering, spectral_bases, JordanSpec, SpectralBases};
use crate::versality::{build_s_and_check, VersalityReport};

pub const DEFAULT_GRID: usize = 64;

/// Tolerance on `Ψ(0) L_m(Φ) = ℰ(Ω_m)` and on the coefficient residual.
pub const INVARIANT_TOL: f64 = 1e-9;

/// Imaginary parts below this are truncated when splitting real blocks.
pub const REALNESS_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub rank_tol: f64,
    pub grid_size: usize,
    /// Replaces the minimal-norm `v_{j,ℓ}` of the ℰ map.
    pub v: Option<Vec<Vec<CVec>>>,
    /// Replaces greedy delay selection.
    pub delays: Option<Vec<f64>>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { rank_tol: DEFAULT_RANK_TOL, grid_size: DEFAULT_GRID, v: None, delays: None }
    }
}

#[derive(Clone, Debug)]
pub struct DelaySelection {
    pub delays: Vec<f64>,
    pub decision: RankDecision,
}

fn stack(phis: &[CMat]) -> CMat {
    let rows: usize = phis.iter().map(|p| p.nrows()).sum();
    let cols = phis.first().map(|p| p.ncols()).unwrap_or(0);
    let mut out = CMat::zeros(rows, cols);
    let mut r = 0;
    for p in phis {
        out.view_mut((r, 0), p.shape()).copy_from(p);
        r += p.nrows();
    }
    out
}

/// Greedy choice of delay points in `[-τ, 0]`, starting from 0. Each step
/// takes the grid point giving the largest numerical rank, then the best
/// conditioning `σ_r/σ_1`, then the smallest `|θ|`.
pub fn select_delays(bases: &SpectralBases, grid_size: usize, rank_tol: f64) -> Result<DelaySelection> {
    let c = bases.c();
    let horizon = bases.tau_max;
    let mut grid_size = grid_size.max(2);
    for attempt in 0..2 {
        let grid: Vec<f64> = (0..grid_size).map(|i| -horizon * i as f64 / (grid_size - 1) as f64).collect();
        let mut delays = vec![0.0];
        let mut phis = vec![bases.phi_at(0.0)];
        let mut current = rank(&stack(&phis), rank_tol, 0.0, "col(Φ(τ_j))");
        while current.rank < c {
            let mut best: Option<(usize, f64, f64, RankDecision)> = None;
            for &theta in grid.iter().filter(|t| !delays.contains(t)) {
                let mut cand = phis.clone();
                cand.push(bases.phi_at(theta));
                let s = svd(&stack(&cand)).s;
                let dec = crate::linalg::decide_rank(&s, rank_tol, 0.0, "col(Φ(τ_j))");
                let cond = if dec.rank == 0 { 0.0 } else { s[dec.rank - 1] / s[0] };
                let better = match &best {
                    None => true,
                    Some((r, q, _, _)) => dec.rank > *r || (dec.rank == *r && cond > *q * (1.0 + 1e-12)),
                };
                if better {
                    best = Some((dec.rank, cond, theta, dec));
                }
            }
            match best {
                Some((r, _, theta, dec)) if r > current.rank => {
                    delays.push(theta);
                    phis.push(bases.phi_at(theta));
                    current = dec;
                }
                _ => break,
            }
        }
        if current.rank == c {
            return Ok(DelaySelection { delays, decision: current });
        }
        if attempt == 0 {
            grid_size = 2 * grid_size - 1;
        }
    }
    Err(Error::DelaySelection(format!("rank {c} not reached on the grid over [-{horizon}, 0]")))
}

/// Minimal-norm `(A_0, ..., A_q)` with `Σ_j A_j Φ(τ_j) = R`.
pub fn solve_coefficients(r: &CMat, phis: &[CMat], rank_tol: f64) -> Result<Vec<CMat>> {
    let n = r.nrows();
    if phis.is_empty() || phis.iter().any(|p| p.nrows() != n || p.ncols() != r.ncols()) {
        return Err(Error::Dimension("each Φ(τ_j) must be n x c".into()));
    }
    let c = r.ncols();
    let big = stack(phis);
    let (cpinv, dec) = pinv(&big, rank_tol, 0.0, "col(Φ(τ_j))");
    if dec.rank != c {
        return Err(Error::DelaySelection(format!("col(Φ(τ_j)) has rank {} < {c}", dec.rank)));
    }
    let all = r * cpinv;
    let blocks: Vec<CMat> = (0..phis.len()).map(|j| all.columns(j * n, n).into_owned()).collect();
    let recon = blocks.iter().zip(phis).fold(CMat::zeros(n, c), |acc, (a, p)| acc + a * p);
    let err = max_abs(&(recon - r));
    let limit = INVARIANT_TOL * max_abs(r).max(1.0);
    if err > limit {
        return Err(Error::Residual { context: "Σ A_j Φ(τ_j) = R".into(), residual: err, limit });
    }
    Ok(blocks)
}

#[derive(Clone, Debug)]
pub struct UnfoldingOperator {
    pub label: String,
    /// One `n x n` matrix per delay point, aligned with `delays`.
    pub coefficients: Vec<CMat>,
}

impl UnfoldingOperator {
    pub fn to_direction(&self, delays: &[f64]) -> DirectionOperator {
        let atoms = delays
            .iter()
            .zip(&self.coefficients)
            .map(|(&t, a)| DelayAtom::new(-t, a.clone()))
            .collect();
        DirectionOperator::new(atoms, vec![])
    }
}

/// `ℒ(α) = ℒ₀ + Σ α_m L_m` with complex parameters.
#[derive(Clone, Debug)]
pub struct UnfoldingFamily {
    pub base: LinearRfde,
    pub bases: SpectralBases,
    /// Delay points `τ_j ∈ [-τ, 0]` (nonpositive; the atom delay is `-τ_j`).
    pub delays: Vec<f64>,
    pub operators: Vec<UnfoldingOperator>,
    pub labels: Vec<SegmentLabel>,
    pub emap: EMap,
    pub decisions: Vec<RankDecision>,
    pub report: VersalityReport,
}

impl UnfoldingFamily {
    pub fn delta(&self) -> usize {
        self.operators.len()
    }

    pub fn directions(&self) -> Vec<DirectionOperator> {
        self.operators.iter().map(|o| o.to_direction(&self.delays)).collect()
    }

    pub fn as_family(&self) -> Result<ParametrizedFamily> {
        ParametrizedFamily::new(self.base.clone(), self.directions(), false)?.with_names(self.param_names())
    }

    pub fn param_names(&self) -> Vec<String> {
        (1..=self.delta()).map(|m| format!("alpha_{m}")).collect()
    }

    /// `Ψ(0) L_m(Φ)` for every operator.
    pub fn projected(&self) -> Vec<CMat> {
        project_operators(&self.bases, &self.delays, &self.operators)
    }
}

fn project_operators(bases: &SpectralBases, delays: &[f64], ops: &[UnfoldingOperator]) -> Vec<CMat> {
    let phis: Vec<CMat> = delays.iter().map(|&t| bases.phi_at(t)).collect();
    ops.iter()
        .map(|o| {
            let l = o.coefficients.iter().zip(&phis).fold(CMat::zeros(bases.phi0.nrows(), bases.c()), |acc, (a, p)| acc + a * p);
            &bases.psi0 * l
        })
        .collect()
}

pub fn synthesize(rfde: &LinearRfde, spec: &JordanSpec, opts: &SynthesisOptions) -> Result<UnfoldingFamily> {
    let bases = bases_for_spec(rfde, spec, opts.rank_tol)?;
    synthesize_with_bases(rfde, bases, vec![], opts)
}

/// Runs root refinement and Jordan analysis first.
pub fn synthesize_for_roots(rfde: &LinearRfde, lambdas: &[crate::linalg::C64], opts: &SynthesisOptions) -> Result<UnfoldingFamily> {
    let (bases, decisions) = spectral_bases(rfde, lambdas, opts.rank_tol)?;
    synthesize_with_bases(rfde, bases, decisions, opts)
}

pub fn synthesize_with_bases(
    rfde: &LinearRfde,
    bases: SpectralBases,
    mut decisions: Vec<RankDecision>,
    opts: &SynthesisOptions,
) -> Result<UnfoldingFamily> {
    let spec = bases.spec.clone();
    let emap = match &opts.v {
        Some(v) => build_e_map_with(&spec, &bases.psi0, v.clone(), opts.rank_tol)?,
        None => build_e_map(&spec, &bases.psi0, opts.rank_tol)?,
    };
    decisions.push(emap.span_decision.clone());
    let delays = match &opts.delays {
        Some(d) => {
            if d.first() != Some(&0.0) || d.iter().any(|&t| t > 0.0 || t < -bases.tau_max) {
                return Err(Error::DelaySelection("delay points must start at 0 and lie in [-τ, 0]".into()));
            }
            d.clone()
        }
        None => {
            let sel = select_delays(&bases, opts.grid_size, opts.rank_tol)?;
            decisions.push(sel.decision);
            sel.delays
        }
    };
    let phis: Vec<CMat> = delays.iter().map(|&t| bases.phi_at(t)).collect();
    let mut operators = vec![];
    for (m, (r, lab)) in emap.r_list.iter().zip(&emap.labels).enumerate() {
        let coefficients = solve_coefficients(r, &phis, opts.rank_tol)?;
        operators.push(UnfoldingOperator { label: format!("L{}[{}]", m + 1, lab), coefficients });
    }
    let projected = project_operators(&bases, &delays, &operators);
    for (m, (p, w)) in projected.iter().zip(&emap.w_hat.elements).enumerate() {
        let err = max_abs(&(p - w));
        let limit = INVARIANT_TOL * max_abs(w).max(1.0);
        if err > limit {
            return Err(Error::Residual { context: format!("Ψ(0)L_{}(Φ) = ℰ(Ω_{})", m + 1, m + 1), residual: err, limit });
        }
    }
    let report = build_s_and_check(&bases.b, &projected, opts.rank_tol)?;
    if !report.miniversal {
        return Err(Error::Internal(format!("synthesized family failed the versality test: {}", report.s_decision.summary())));
    }
    Ok(UnfoldingFamily {
        base: rfde.clone(),
        bases,
        delays,
        operators,
        labels: emap.labels.clone(),
        emap,
        decisions,
        report,
    })
}

/// `ℒ(β) = ℒ₀ + Σ_j β_j z(τ_j)` for scalar equations, with `β = C α`.
#[derive(Clone, Debug)]
pub struct ScalarForm {
    pub delays: Vec<f64>,
    /// Column `m` holds `(A^m_0, ..., A^m_{c-1})`.
    pub change_matrix: CMat,
    pub directions: Vec<DirectionOperator>,
    pub decision: RankDecision,
}

impl ScalarForm {
    pub fn beta(&self, alpha: &CVec) -> CVec {
        &self.change_matrix * alpha
    }
}

pub fn simplify_scalar(family: &UnfoldingFamily) -> Result<ScalarForm> {
    let n = family.base.n();
    if n != 1 {
        return Err(Error::NotScalar(n));
    }
    let delta = family.delta();
    let q = family.delays.len();
    if q != delta {
        return Err(Error::Internal(format!("scalar family has {q} delays but δ = {delta}")));
    }
    let change_matrix = CMat::from_fn(q, delta, |j, m| family.operators[m].coefficients[j][(0, 0)]);
    let decision = rank(&change_matrix, family.report.rank_tol, 0.0, "change matrix");
    if decision.rank != delta {
        return Err(Error::Internal(format!("change matrix is singular: {}", decision.summary())));
    }
    let directions = family
        .delays
        .iter()
        .map(|&t| DirectionOperator::new(vec![DelayAtom::new(-t, CMat::from_element(1, 1, c64(1.0, 0.0)))], vec![]))
        .collect();
    Ok(ScalarForm { delays: family.delays.clone(), change_matrix, directions, decision })
}

#[derive(Clone, Debug)]
pub struct RealOperator {
    pub label: String,
    pub coefficients: Vec<DMatrix<f64>>,
}

/// Real-parameter family `ℒ₀ + Σ α_p L_p + Σ (β_s Re L_s + β'_s Im L_s)`.
#[derive(Clone, Debug)]
pub struct RealUnfoldingFamily {
    pub base: LinearRfde,
    pub bases: SpectralBases,
    pub delays: Vec<f64>,
    pub operators: Vec<RealOperator>,
    pub delta0: usize,
    pub delta_h: usize,
}

impl RealUnfoldingFamily {
    pub fn directions(&self) -> Vec<DirectionOperator> {
        self.operators
            .iter()
            .map(|o| {
                let atoms = self
                    .delays
                    .iter()
                    .zip(&o.coefficients)
                    .map(|(&t, a)| DelayAtom::new(-t, crate::linalg::to_complex(a)))
                    .collect();
                DirectionOperator::new(atoms, vec![])
            })
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        (1..=self.operators.len()).map(|m| format!("alpha_{m}")).collect()
    }

    /// The complexified family, checkable with the versality test.
    pub fn as_family(&self) -> Result<ParametrizedFamily> {
        ParametrizedFamily::new(self.base.clone(), self.directions(), true)?.with_names(self.param_names())
    }
}

/// Splits a family synthesized in the layout `B = diag(B⁰, Bʰ, conj Bʰ)`
/// into real operators.
pub fn decomplexify(family: &UnfoldingFamily) -> Result<RealUnfoldingFamily> {
    if !family.base.is_real() {
        return Err(Error::Conjugation("base equation is not real".into()));
    }
    let spec = &family.bases.spec;
    let eig = &spec.eigenvalues;
    let r0 = eig.iter().take_while(|l| l.im == 0.0).count();
    let rest = eig.len() - r0;
    if rest % 2 != 0 {
        return Err(Error::Conjugation("complex roots do not come in pairs".into()));
    }
    let h = rest / 2;
    for i in 0..h {
        let (u, l) = (r0 + i, r0 + h + i);
        if !(eig[u].im > 0.0) || eig[l] != eig[u].conj() || spec.block_sizes[u] != spec.block_sizes[l] {
            return Err(Error::Conjugation(
                "roots must be ordered real, upper half plane, then matching conjugates".into(),
            ));
        }
    }
    let per_eig: Vec<usize> = spec.block_sizes.iter().map(|s| s.iter().enumerate().map(|(l, &n)| (2 * l + 1) * n).sum()).collect();
    let delta0: usize = per_eig[..r0].iter().sum();
    let delta_h: usize = per_eig[r0..r0 + h].iter().sum();
    let ops = &family.operators;
    let scale = |a: &CMat| max_abs(a).max(1.0);
    let mut out = vec![];
    for op in &ops[..delta0] {
        let mut coefficients = vec![];
        for a in &op.coefficients {
            let im = a.map(|z| z.im).abs().max();
            if im > REALNESS_TOL * scale(a) {
                return Err(Error::Conjugation(format!("{} has imaginary part {im:.3e}", op.label)));
            }
            coefficients.push(a.map(|z| z.re));
        }
        out.push(RealOperator { label: op.label.clone(), coefficients });
    }
    let mut pairs = vec![];
    for s in delta0..delta0 + delta_h {
        let (up, down) = (&ops[s], &ops[s + delta_h]);
        for (a, b) in up.coefficients.iter().zip(&down.coefficients) {
            let err = max_abs(&(b - a.map(|z| z.conj())));
            if err > 1e-8 * scale(a) {
                return Err(Error::Conjugation(format!("{} is not the conjugate of {} ({err:.3e})", down.label, up.label)));
            }
        }
        pairs.push(RealOperator { label: format!("Re {}", up.label), coefficients: up.coefficients.iter().map(|a| a.map(|z| z.re)).collect() });
        pairs.push(RealOperator { label: format!("Im {}", up.label), coefficients: up.coefficients.iter().map(|a| a.map(|z| z.im)).collect() });
    }
    out.extend(pairs);
    Ok(RealUnfoldingFamily {
        base: family.base.clone(),
        bases: family.bases.clone(),
        delays: family.delays.clone(),
        operators: out,
        delta0,
        delta_h,
    })
}

/// Orders the roots for decomplexification, synthesizes and splits.
pub fn synthesize_real(
    rfde: &LinearRfde,
    lambdas: &[crate::linalg::C64],
    opts: &SynthesisOptions,
) -> Result<(UnfoldingFamily, RealUnfoldingFamily)> {
    if !rfde.is_real() {
        return Err(Error::Conjugation("base equation is not real".into()));
    }
    let ordered = real_ordering(lambdas)?;
    let family = synthesize_for_roots(rfde, &ordered, opts)?;
    let real = decomplexify(&family)?;
    Ok((family, real))
}

/// Orthonormal basis of `span{Ψ(0) L_m(Φ)}` flattened, for comparisons.
pub fn projected_span(family: &UnfoldingFamily, rank_tol: f64) -> CMat {
    range_basis(&crate::linalg::stack_flattened(&family.projected()), rank_tol, 0.0, "projected span").0
}
