//! Independent oracles: dense Sylvester-map subspaces, the first-order
//! motion of characteristic roots under an unfolding, location of double
//! Hopf points of a two-delay scalar equation, and root multiplicities by
//! contour integration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, eigenvalues, largest_angle_sin, nullspace, range_basis, CMat, RankDecision, C64};
use crate::model::{DelayAtom, DirectionOperator, LinearRfde, PerturbedRfde};
use crate::spectral::SpectralBases;

#[derive(Clone, Debug)]
pub struct SylvesterSpaces {
    /// Orthonormal basis of `range(M ↦ [B, M])`.
    pub range: Vec<CMat>,
    /// Orthonormal basis of `ker(M ↦ [B*, M])`.
    pub kernel_adj: Vec<CMat>,
    pub range_decision: RankDecision,
    pub kernel_decision: RankDecision,
}

fn unflatten(v: &CMat, col: usize, c: usize) -> CMat {
    CMat::from_fn(c, c, |i, j| v[(i * c + j, col)])
}

/// Dense `c² x c²` matrix of `M ↦ BM - MB` in row-major coordinates.
pub fn sylvester_matrix(b: &CMat) -> CMat {
    let c = b.nrows();
    let id = CMat::identity(c, c);
    b.kronecker(&id) - id.kronecker(&b.transpose())
}

pub fn sylvester_spaces(b: &CMat, rank_tol: f64) -> Result<SylvesterSpaces> {
    let c = b.nrows();
    if b.ncols() != c {
        return Err(Error::Dimension("B must be square".into()));
    }
    if c > 12 {
        return Err(Error::Dimension(format!("dense oracle limited to c <= 12, got {c}")));
    }
    let scale = crate::linalg::max_abs(b);
    let t = sylvester_matrix(b);
    let (rq, range_decision) = range_basis(&t, rank_tol, scale, "range of [B, .]");
    let t_adj = sylvester_matrix(&b.adjoint());
    let (kq, kernel_decision) = nullspace(&t_adj, rank_tol, scale, "kernel of [B*, .]");
    Ok(SylvesterSpaces {
        range: (0..rq.ncols()).map(|k| unflatten(&rq, k, c)).collect(),
        kernel_adj: (0..kq.ncols()).map(|k| unflatten(&kq, k, c)).collect(),
        range_decision,
        kernel_decision,
    })
}

/// Sine of the largest principal angle between two spans of matrices.
pub fn matrix_span_angle(a: &[CMat], b: &[CMat], rank_tol: f64) -> f64 {
    largest_angle_sin(&crate::linalg::stack_flattened(a), &crate::linalg::stack_flattened(b), rank_tol)
}

/// Winding number `(1/2πi) ∮ tr(Δ⁻¹Δ') dz` over a circle, i.e. the number of
/// characteristic roots (with multiplicity) inside it.
pub fn root_multiplicity(rfde: &LinearRfde, center: C64, radius: f64, samples: usize) -> f64 {
    let mut acc = c64(0.0, 0.0);
    for k in 0..samples {
        let t = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
        let w = c64(t.cos(), t.sin());
        let z = center + w * radius;
        let inv = rfde.char_matrix(z, 0).try_inverse().expect("contour passes through a root");
        let f = (inv * rfde.char_matrix(z, 1)).trace();
        // dz = i r w dt
        acc += f * w * c64(0.0, radius);
    }
    (acc * (2.0 * std::f64::consts::PI / samples as f64) / c64(0.0, 2.0 * std::f64::consts::PI)).re
}

fn newton_root(p: &PerturbedRfde, start: C64) -> Result<C64> {
    let mut l = start;
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let (d0, d1) = p.char_pair(l);
        let inv = match d0.try_inverse() {
            Some(i) => i,
            None => return Ok(l),
        };
        let tr = (inv * d1).trace();
        if !tr.re.is_finite() || !tr.im.is_finite() || tr.norm() == 0.0 {
            return Err(Error::Newton(format!("degenerate step from {start}")));
        }
        let step = c64(1.0, 0.0) / tr;
        l -= step;
        let size = step.norm();
        let tiny = 1e-15 * (1.0 + l.norm());
        // rounding-level stagnation near clustered roots
        if size <= tiny || (size <= 1e-9 * (1.0 + l.norm()) && size > 0.5 * prev) {
            return Ok(l);
        }
        prev = size;
    }
    Err(Error::Newton(format!("no convergence from {start}")))
}

/// Elementary symmetric functions of `roots - center`, highest degree first.
fn cluster_coefficients(roots: &[C64], center: C64) -> Vec<C64> {
    let mut coeffs = vec![c64(1.0, 0.0)];
    for &r in roots {
        let z = r - center;
        let mut next = vec![c64(0.0, 0.0); coeffs.len() + 1];
        for (k, &a) in coeffs.iter().enumerate() {
            next[k] += a;
            next[k + 1] -= a * z;
        }
        coeffs = next;
    }
    coeffs
}

#[derive(Clone, Debug, Serialize)]
pub struct RootMismatch {
    /// Largest difference between symmetric functions of matched root clusters.
    pub cluster: f64,
    /// Largest distance between a predicted root and the root Newton reaches from it.
    pub per_root: f64,
}

/// Compares the characteristic roots of `ℒ₀ + ε Σ α_m L_m` near the reduced
/// spectrum with the eigenvalues of `B + ε Σ α_m Ψ(0) L_m(Φ)`.
pub fn spectrum_mismatch(
    base: &LinearRfde,
    bases: &SpectralBases,
    directions: &[DirectionOperator],
    alpha: &[C64],
    eps: f64,
) -> Result<RootMismatch> {
    let mut m = bases.b.clone();
    for (d, &a) in directions.iter().zip(alpha) {
        m += &bases.psi0 * d.apply_with_generator(&bases.phi0, &bases.b)? * (a * eps);
    }
    let predicted = eigenvalues(&m);
    let scaled: Vec<C64> = alpha.iter().map(|&a| a * eps).collect();
    let pert = base.perturbed(directions, &scaled)?;
    let eig = &bases.spec.eigenvalues;
    let mut per_root: f64 = 0.0;
    let mut clusters: Vec<(Vec<C64>, Vec<C64>)> = vec![(vec![], vec![]); eig.len()];
    for &mu in &predicted {
        let nu = newton_root(&pert, mu)?;
        per_root = per_root.max((nu - mu).norm());
        let j = (0..eig.len())
            .min_by(|&a, &b| (mu - eig[a]).norm().partial_cmp(&(mu - eig[b]).norm()).unwrap())
            .expect("at least one eigenvalue");
        clusters[j].0.push(mu);
        clusters[j].1.push(nu);
    }
    let mut cluster: f64 = 0.0;
    for (j, (mus, nus)) in clusters.iter().enumerate() {
        for a in 0..nus.len() {
            for b in 0..a {
                let sep = (mus[a] - mus[b]).norm();
                if sep > 0.0 && (nus[a] - nus[b]).norm() < 1e-3 * sep {
                    return Err(Error::Newton(format!("two predicted roots near {} reached the same root", eig[j])));
                }
            }
        }
        let pa = cluster_coefficients(mus, eig[j]);
        let pb = cluster_coefficients(nus, eig[j]);
        for (x, y) in pa.iter().zip(&pb) {
            cluster = cluster.max((x - y).norm());
        }
    }
    Ok(RootMismatch { cluster, per_root })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumTrial {
    pub eps: f64,
    pub mismatch: RootMismatch,
    pub mismatch_half: RootMismatch,
    /// `log2` of the cluster mismatch ratio between `eps` and `eps/2`.
    pub slope: f64,
    pub per_root_slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub trials: Vec<SpectrumTrial>,
    pub min_slope: f64,
    pub min_per_root_slope: f64,
    pub max_mismatch: f64,
}

impl SpectrumReport {
    pub fn passes(&self, slope: f64) -> bool {
        self.min_slope >= slope
    }
}

fn slope_of(a: f64, b: f64) -> f64 {
    // both at rounding level: the prediction is exact
    if a < 1e-14 && b < 1e-14 {
        return f64::INFINITY;
    }
    (a / b).log2()
}

/// Random unit directions `α` (real when `real_params`); each trial measures
/// the mismatch at `eps` and `eps/2`. `eps` is halved (up to 4 times) when
/// Newton fails.
pub fn first_order_spectrum_check(
    base: &LinearRfde,
    bases: &SpectralBases,
    directions: &[DirectionOperator],
    real_params: bool,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![];
    for _ in 0..trials {
        let mut alpha: Vec<C64> = (0..directions.len())
            .map(|_| {
                let re = rng.gen_range(-1.0..1.0);
                let im = if real_params { 0.0 } else { rng.gen_range(-1.0..1.0) };
                c64(re, im)
            })
            .collect();
        let norm = alpha.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            alpha.iter_mut().for_each(|a| *a /= norm);
        }
        let mut e = eps;
        let mut last_err = None;
        let mut done = None;
        for _ in 0..5 {
            let r = spectrum_mismatch(base, bases, directions, &alpha, e)
                .and_then(|m1| spectrum_mismatch(base, bases, directions, &alpha, e / 2.0).map(|m2| (m1, m2)));
            match r {
                Ok(pair) => {
                    done = Some(pair);
                    break;
                }
                Err(err) => {
                    last_err = Some(err);
                    e /= 2.0;
                }
            }
        }
        let (m1, m2) = match done {
            Some(p) => p,
            None => return Err(last_err.expect("at least one attempt")),
        };
        out.push(SpectrumTrial {
            eps: e,
            slope: slope_of(m1.cluster, m2.cluster),
            per_root_slope: slope_of(m1.per_root, m2.per_root),
            mismatch: m1,
            mismatch_half: m2,
        });
    }
    Ok(SpectrumReport {
        min_slope: out.iter().map(|t| t.slope).fold(f64::INFINITY, f64::min),
        min_per_root_slope: out.iter().map(|t| t.per_root_slope).fold(f64::INFINITY, f64::min),
        max_mismatch: out.iter().map(|t| t.mismatch.cluster).fold(0.0, f64::max),
        trials: out,
    })
}

/// `x'(t) = A₁ x(t - τ₁) + A₂ x(t - τ₂)` with roots `±iω₁, ±iω₂`.
#[derive(Clone, Debug, Serialize)]
pub struct DoubleHopfPoint {
    pub a1: f64,
    pub a2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// `|Δ(iω₁)|`, `|Δ(iω₂)|`.
    pub residuals: [f64; 2],
    pub iterations: usize,
}

impl DoubleHopfPoint {
    pub fn rfde(&self) -> Result<LinearRfde> {
        LinearRfde::new(
            vec![DelayAtom::real(self.tau1, 1, &[self.a1]), DelayAtom::real(self.tau2, 1, &[self.a2])],
            None,
        )
    }

    pub fn roots(&self) -> Vec<C64> {
        vec![c64(0.0, self.omega1), c64(0.0, self.omega2), c64(0.0, -self.omega1), c64(0.0, -self.omega2)]
    }
}

/// Smallest `|p ω₁ - q ω₂|` allowed for `1 <= p, q <= RESONANCE_ORDER`, relative to `max ω`.
pub const RESONANCE_GAP: f64 = 1e-3;
pub const RESONANCE_ORDER: i32 = 5;

pub fn resonance_guard(omega1: f64, omega2: f64) -> Result<()> {
    if !(omega1 > 0.0 && omega2 > 0.0) {
        return Err(Error::InvalidModel("frequencies must be positive".into()));
    }
    let scale = omega1.max(omega2);
    for p in 1..=RESONANCE_ORDER {
        for q in 1..=RESONANCE_ORDER {
            let gap = (p as f64 * omega1 - q as f64 * omega2).abs();
            if gap < RESONANCE_GAP * scale {
                return Err(Error::Resonance { p, q, gap });
            }
        }
    }
    Ok(())
}

fn hopf_residual(x: &[f64; 4], w: [f64; 2]) -> DVector<f64> {
    let [a1, a2, t1, t2] = *x;
    let mut f = DVector::zeros(4);
    for (k, &om) in w.iter().enumerate() {
        let d = c64(0.0, om) - c64(0.0, -om * t1).exp() * a1 - c64(0.0, -om * t2).exp() * a2;
        f[2 * k] = d.re;
        f[2 * k + 1] = d.im;
    }
    f
}

fn hopf_jacobian(x: &[f64; 4], w: [f64; 2]) -> DMatrix<f64> {
    let [a1, a2, t1, t2] = *x;
    let mut j = DMatrix::zeros(4, 4);
    for (k, &om) in w.iter().enumerate() {
        let e1 = c64(0.0, -om * t1).exp();
        let e2 = c64(0.0, -om * t2).exp();
        let cols = [-e1, -e2, e1 * c64(0.0, om) * a1, e2 * c64(0.0, om) * a2];
        for (c, v) in cols.iter().enumerate() {
            j[(2 * k, c)] = v.re;
            j[(2 * k + 1, c)] = v.im;
        }
    }
    j
}

/// Damped Newton on `Re/Im Δ(iω₁) = Re/Im Δ(iω₂) = 0` for `(A₁, A₂, τ₁, τ₂)`
/// at prescribed frequencies.
pub fn find_double_hopf(omega1: f64, omega2: f64, guess: [f64; 4]) -> Result<DoubleHopfPoint> {
    resonance_guard(omega1, omega2)?;
    let w = [omega1, omega2];
    let mut x = guess;
    let mut f = hopf_residual(&x, w);
    let mut iterations = 0;
    while f.norm() > 1e-14 && iterations < 100 {
        iterations += 1;
        let j = hopf_jacobian(&x, w);
        let dx = j
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| Error::Newton("singular Jacobian in the double Hopf system".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [x[0] + t * dx[0], x[1] + t * dx[1], x[2] + t * dx[2], x[3] + t * dx[3]];
            let ft = hopf_residual(&trial, w);
            if ft.norm() < f.norm() {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            t /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    let residuals = [
        c64(f[0], f[1]).norm(),
        c64(f[2], f[3]).norm(),
    ];
    if residuals.iter().any(|&r| !(r < 1e-10)) {
        return Err(Error::Newton(format!("double Hopf residuals {residuals:?} after {iterations} steps")));
    }
    if !(x[2] > 0.0 && x[3] > 0.0) || (x[2] - x[3]).abs() < 1e-6 {
        return Err(Error::Newton(format!("delays {} and {} are not positive and distinct", x[2], x[3])));
    }
    Ok(DoubleHopfPoint { a1: x[0], a2: x[1], tau1: x[2], tau2: x[3], omega1, omega2, residuals, iterations })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<OracleCheck>,
    pub pass: bool,
}

/// Slope required of the first-order spectral check.
pub const SLOPE_THRESHOLD: f64 = 1.8;

/// Cross-checks the matrix-algebra bases against the dense Sylvester map,
/// synthesizes an unfolding and tests the first-order root motion; when a
/// family is given its versality is checked too.
pub fn run_suite(
    rfde: &LinearRfde,
    lambdas: &[C64],
    family: Option<&crate::model::ParametrizedFamily>,
    opts: &crate::synthesis::SynthesisOptions,
    seed: u64,
) -> Result<SuiteReport> {
    use crate::matalg::{build_kertstar_basis, build_range_t_basis, build_w_basis};
    let mut checks = vec![];
    let mut push = |name: &str, pass: bool, detail: String| checks.push(OracleCheck { name: name.into(), pass, detail });

    let unfolding = crate::synthesis::synthesize_for_roots(rfde, lambdas, opts)?;
    let spec = &unfolding.bases.spec;
    let (w, ks, rt) = (build_w_basis(spec), build_kertstar_basis(spec), build_range_t_basis(spec));
    let c = spec.c();
    if c <= 12 {
        let syl = sylvester_spaces(&spec.jordan_matrix(), opts.rank_tol)?;
        let dims = [w.len(), ks.len(), spec.delta(), syl.kernel_adj.len(), c * c - syl.range.len()];
        push("dimension", dims.iter().all(|&d| d == dims[0]), format!("|W|, |kerT*|, delta, oracle kernel, oracle corank = {dims:?}"));
        let angle = matrix_span_angle(&rt.elements, &syl.range, opts.rank_tol);
        push("range", angle < 1e-8, format!("largest principal angle sine {angle:.3e}"));
    }
    let mut ortho: f64 = 0.0;
    for s in &rt.elements {
        for m in &ks.elements {
            ortho = ortho.max((s.adjoint() * m).trace().norm());
        }
    }
    push("orthogonality", ortho < 1e-12, format!("max |tr(S* M)| = {ortho:.3e}"));
    push(
        "synthesis",
        unfolding.report.miniversal,
        format!("delta = {}, delays = {:?}, {}", unfolding.delta(), unfolding.delays, unfolding.report.verdict()),
    );
    let spectrum = first_order_spectrum_check(rfde, &unfolding.bases, &unfolding.directions(), false, 1e-3, 3, seed)?;
    push(
        "first-order spectrum",
        spectrum.passes(SLOPE_THRESHOLD),
        format!("min cluster slope {:.3}, min per-root slope {:.3}", spectrum.min_slope, spectrum.min_per_root_slope),
    );
    if let Some(f) = family {
        let report = crate::versality::check_family(f, &unfolding.bases, opts.rank_tol)?;
        push("family", report.versal, format!("rank S = {} of {}, {}", report.rank_s, c * c, report.verdict()));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport { checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sylvester_dimensions_for_small_cases() {
        let d = CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![c64(1.0, 0.0), c64(2.0, 0.0)]));
        let s = sylvester_spaces(&d, 1e-8).unwrap();
        assert_eq!((s.range.len(), s.kernel_adj.len()), (2, 2));
        let z = sylvester_spaces(&CMat::zeros(3, 3), 1e-8).unwrap();
        assert_eq!((z.range.len(), z.kernel_adj.len()), (0, 9));
    }

    #[test]
    fn cluster_coefficients_of_pair() {
        let c = cluster_coefficients(&[c64(1.0, 0.0), c64(2.0, 0.0)], c64(0.0, 0.0));
        assert_eq!(c, vec![c64(1.0, 0.0), c64(-3.0, 0.0), c64(2.0, 0.0)]);
    }

    #[test]
    fn resonant_frequencies_are_rejected() {
        assert!(matches!(resonance_guard(1.0, 1.0), Err(Error::Resonance { .. })));
        assert!(matches!(resonance_guard(1.0, 2.0), Err(Error::Resonance { p: 2, q: 1, .. })));
        assert!(resonance_guard(1.0, 2f64.sqrt() + 0.3).is_ok());
    }

    #[test]
    fn hopf_jacobian_matches_finite_differences() {
        let x = [-1.6, -0.8, 1.2, 3.9];
        let w = [1.0, 1.7];
        let j = hopf_jacobian(&x, w);
        let h = 1e-7;
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (hopf_residual(&xp, w) - hopf_residual(&xm, w)) / (2.0 * h);
            for r in 0..4 {
                assert!((fd[r] - j[(r, c)]).abs() < 1e-6);
            }
        }
    }
}
