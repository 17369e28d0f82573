#![allow(dead_code)]

use std::f64::consts::PI;

use rfde_unfold::linalg::{c64, CMat, C64};
use rfde_unfold::{DelayAtom, DirectionOperator, LinearRfde, ParametrizedFamily};

pub fn re(x: f64) -> C64 {
    c64(x, 0.0)
}

pub fn mat(rows: usize, cols: usize, v: &[C64]) -> CMat {
    CMat::from_row_slice(rows, cols, v)
}

/// x'(t) = x(t) - x(t-1)
pub fn example1() -> LinearRfde {
    LinearRfde::new(vec![DelayAtom::real(0.0, 1, &[1.0]), DelayAtom::real(1.0, 1, &[-1.0])], None).unwrap()
}

/// First-order form of x'' + αx' + βx = A x(t-τ) at (α, β, τ, A) = (0, 5/2, π, -3/2).
pub fn example3() -> LinearRfde {
    LinearRfde::new(
        vec![
            DelayAtom::real(0.0, 2, &[0.0, 1.0, -2.5, 0.0]),
            DelayAtom::real(PI, 2, &[0.0, 0.0, -1.5, 0.0]),
        ],
        None,
    )
    .unwrap()
}

pub fn example3_roots() -> Vec<C64> {
    vec![c64(0.0, 1.0), c64(0.0, 2.0), c64(0.0, -1.0), c64(0.0, -2.0)]
}

/// Derivatives with respect to (α, β, τ, A); the τ direction acts on x₁'(t-τ)
/// with coefficient -A.
pub fn example3_family() -> ParametrizedFamily {
    let dirs = vec![
        DirectionOperator::new(vec![DelayAtom::real(0.0, 2, &[0.0, 0.0, 0.0, -1.0])], vec![]),
        DirectionOperator::new(vec![DelayAtom::real(0.0, 2, &[0.0, 0.0, -1.0, 0.0])], vec![]),
        DirectionOperator::new(vec![], vec![DelayAtom::real(PI, 2, &[0.0, 0.0, 1.5, 0.0])]),
        DirectionOperator::new(vec![DelayAtom::real(PI, 2, &[0.0, 0.0, 1.0, 0.0])], vec![]),
    ];
    ParametrizedFamily::new(example3(), dirs, true)
        .unwrap()
        .with_names(vec!["alpha".into(), "beta".into(), "tau".into(), "A".into()])
        .unwrap()
}

/// κ·M as displayed for Example 3.
pub fn example3_displayed_psi0() -> CMat {
    let i = c64(0.0, 1.0);
    let p = re(PI);
    let kappa = 1.0 / (9.0 * PI.powi(4) - 32.0 * PI.powi(2) - 256.0);
    let sq = |z: C64| z * z;
    let m = vec![
        -2.0 * i * (3.0 * p + 4.0 * i) * sq(-3.0 * p + 4.0 * i),
        -32.0 * p + 128.0 * i + 6.0 * p * p * p - 8.0 * i * p * p,
        -i * (-3.0 * p + 8.0 * i) * sq(3.0 * p + 8.0 * i),
        64.0 * p - 16.0 * i * p * p + 64.0 * i - 6.0 * p * p * p,
        2.0 * i * (3.0 * p - 4.0 * i) * sq(-3.0 * p - 4.0 * i),
        -32.0 * p - 128.0 * i + 6.0 * p * p * p + 8.0 * i * p * p,
        i * (-3.0 * p - 8.0 * i) * sq(3.0 * p - 8.0 * i),
        64.0 * p + 16.0 * i * p * p - 64.0 * i - 6.0 * p * p * p,
    ];
    mat(4, 2, &m) * re(kappa)
}

/// Normalized Ψ(0) for Example 3 worked by hand: the left null vector at λ
/// is (λ, 1), and pairing it with (1, λ) gives 2λ - (3π/2)e^{-λπ}, so the row
/// for λ is (λ, 1)/(2λ - (3π/2)e^{-λπ}).
pub fn example3_true_psi0() -> CMat {
    let i = c64(0.0, 1.0);
    let p = re(PI);
    mat(
        4,
        2,
        &[
            2.0 * i / (3.0 * p + 4.0 * i),
            re(2.0) / (3.0 * p + 4.0 * i),
            -4.0 * i / (3.0 * p - 8.0 * i),
            re(-2.0) / (3.0 * p - 8.0 * i),
            -2.0 * i / (3.0 * p - 4.0 * i),
            re(2.0) / (3.0 * p - 4.0 * i),
            4.0 * i / (3.0 * p + 8.0 * i),
            re(-2.0) / (3.0 * p + 8.0 * i),
        ],
    )
}

/// `v_j = (1, (1 - ψ_j1)/ψ_j2)`, the choice behind the displayed `R_1..R_4`.
pub fn example3_display_v(psi0: &CMat) -> Vec<Vec<rfde_unfold::CVec>> {
    (0..4)
        .map(|j| vec![rfde_unfold::CVec::from_vec(vec![re(1.0), (re(1.0) - psi0[(j, 0)]) / psi0[(j, 1)]])])
        .collect()
}

/// Displayed `L_1..L_4` as coefficient pairs at `z(0)` and `z(-π)`, with
/// `β_j + iγ_j = (1 - ψ_j1)/ψ_j2` taken from `psi0`.
pub fn example3_displayed_operators(psi0: &CMat) -> Vec<[CMat; 2]> {
    let i = c64(0.0, 1.0);
    let w1 = (re(1.0) - psi0[(0, 0)]) / psi0[(0, 1)];
    let w2 = (re(1.0) - psi0[(1, 0)]) / psi0[(1, 1)];
    // γ - iβ = -i(β + iγ)
    let a1 = mat(2, 2, &[re(1.0), -i, w1, -i * w1]) * re(0.25);
    let a2 = mat(2, 2, &[re(2.0), -i, 2.0 * w2, -2.0 * i * w2]) * re(0.125);
    let l1 = [a1.clone(), -a1];
    let l2 = [a2.clone(), a2];
    let conj = |l: &[CMat; 2]| [l[0].map(|z| z.conj()), l[1].map(|z| z.conj())];
    let (l3, l4) = (conj(&l1), conj(&l2));
    vec![l1, l2, l3, l4]
}

/// `∫_{-τ}^0 f(ξ) dξ` by composite Simpson with `2k` panels.
pub fn simpson(tau: f64, k: usize, f: impl Fn(f64) -> CMat) -> CMat {
    let m = 2 * k;
    let h = tau / m as f64;
    let mut acc = f(-tau) + f(0.0);
    for s in 1..m {
        let w = if s % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(-tau + s as f64 * h) * re(w);
    }
    acc * re(h / 3.0)
}

pub const EIGEN_POOL: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 1.0), (-2.0, 0.0), (0.5, -1.5)];

/// Jordan structure from raw block sizes: sizes sorted nonincreasing, at
/// most `max_c` in total (later blocks dropped).
pub fn spec_from_sizes(raw: &[Vec<usize>], max_c: usize) -> rfde_unfold::JordanSpec {
    let mut left = max_c;
    let mut eig = vec![];
    let mut sizes = vec![];
    for (j, blocks) in raw.iter().enumerate().take(EIGEN_POOL.len()) {
        let mut kept: Vec<usize> = vec![];
        for &s in blocks {
            if s <= left {
                kept.push(s);
                left -= s;
            }
        }
        if kept.is_empty() {
            continue;
        }
        kept.sort_unstable_by(|a, b| b.cmp(a));
        eig.push(c64(EIGEN_POOL[j].0, EIGEN_POOL[j].1));
        sizes.push(kept);
    }
    if eig.is_empty() {
        eig.push(re(0.0));
        sizes.push(vec![1]);
    }
    rfde_unfold::JordanSpec::new(eig, sizes).unwrap()
}

pub fn random_spec(rng: &mut impl rand::Rng, max_c: usize) -> rfde_unfold::JordanSpec {
    let r = rng.gen_range(1..=3);
    let raw: Vec<Vec<usize>> = (0..r)
        .map(|_| (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=4)).collect())
        .collect();
    spec_from_sizes(&raw, max_c)
}

pub fn random_complex_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Random `Ψ(0)` (`c x n`, `n` between the largest block count and `c`).
pub fn random_psi0(rng: &mut impl rand::Rng, spec: &rfde_unfold::JordanSpec) -> CMat {
    let kmax = (0..spec.r()).map(|j| spec.k(j)).max().unwrap();
    let n = rng.gen_range(kmax..=spec.c().max(kmax));
    random_complex_matrix(rng, spec.c(), n)
}

/// `I + 0.5 X`, well conditioned for small `c`.
pub fn random_invertible(rng: &mut impl rand::Rng, c: usize) -> CMat {
    CMat::identity(c, c) + random_complex_matrix(rng, c, c) * re(0.5 / (c as f64).sqrt())
}

/// Re-solves every operator of `family` in the bases `ΦU`, `U⁻¹Ψ` with
/// targets transported by `M ↦ U⁻¹MU`; returns the largest coefficient change
/// and the largest residual of the transported invariant.
pub fn basis_change_gap(family: &rfde_unfold::synthesis::UnfoldingFamily, u: &CMat, rank_tol: f64) -> (f64, f64) {
    use rfde_unfold::linalg::{expm, max_abs};
    let b = &family.bases;
    let uinv = u.clone().try_inverse().expect("U invertible");
    let b_new = &uinv * &b.b * u;
    let phi0_new = &b.phi0 * u;
    let psi0_new = &uinv * &b.psi0;
    let phis: Vec<CMat> = family.delays.iter().map(|&t| &phi0_new * expm(&(&b_new * re(t)))).collect();
    let mut coeff_gap: f64 = 0.0;
    let mut invariant: f64 = 0.0;
    for (m, op) in family.operators.iter().enumerate() {
        let target = &family.emap.r_list[m] * u;
        let a = rfde_unfold::synthesis::solve_coefficients(&target, &phis, rank_tol).unwrap();
        for (x, y) in a.iter().zip(&op.coefficients) {
            coeff_gap = coeff_gap.max(max_abs(&(x - y)));
        }
        let l = a.iter().zip(&phis).fold(CMat::zeros(phi0_new.nrows(), u.ncols()), |acc, (x, p)| acc + x * p);
        let moved = &uinv * &family.emap.w_hat.elements[m] * u;
        invariant = invariant.max(max_abs(&(&psi0_new * l - moved)));
    }
    (coeff_gap, invariant)
}
