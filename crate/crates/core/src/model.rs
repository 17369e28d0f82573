//! Linear delay operators built from point-delay atoms.
//!
//! The base equation is `x'(t) = Σ_k A_k x(t - tau_k)`. A direction operator
//! may additionally act on the derivative of the history, which is how a
//! delay that is itself a parameter gets differentiated.

use crate::error::{Error, Result};
use crate::linalg::{c64, expm, CMat, C64};

/// One term `A x(t - tau)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayAtom {
    pub tau: f64,
    pub coeff: CMat,
}

impl DelayAtom {
    pub fn new(tau: f64, coeff: CMat) -> Self {
        // no signed zero delays in output
        Self { tau: tau + 0.0, coeff }
    }

    pub fn real(tau: f64, n: usize, values: &[f64]) -> Self {
        Self::new(tau, CMat::from_fn(n, n, |i, j| c64(values[i * n + j], 0.0)))
    }
}

fn check_atoms(atoms: &[DelayAtom], n: usize, what: &str) -> Result<()> {
    for (k, a) in atoms.iter().enumerate() {
        if a.coeff.nrows() != n || a.coeff.ncols() != n {
            return Err(Error::Dimension(format!(
                "{what}[{k}] is {}x{}, expected {n}x{n}",
                a.coeff.nrows(),
                a.coeff.ncols()
            )));
        }
        if !(a.tau >= 0.0) || !a.tau.is_finite() {
            return Err(Error::InvalidModel(format!("{what}[{k}] has delay {}", a.tau)));
        }
    }
    Ok(())
}

/// Evaluates `Σ A Φ(0) e^{-G tau} + Σ Ã Φ(0) e^{-G tau} G`, the action of a
/// delay operator on `Φ(θ) = Φ(0) e^{Gθ}`.
pub fn apply_with_generator(
    atoms: &[DelayAtom],
    derivative_atoms: &[DelayAtom],
    phi0: &CMat,
    generator: &CMat,
) -> CMat {
    let phi_at = |tau: f64| -> CMat {
        if tau == 0.0 {
            phi0.clone()
        } else {
            phi0 * expm(&(generator * c64(-tau, 0.0)))
        }
    };
    let mut out = CMat::zeros(phi0.nrows(), phi0.ncols());
    for a in atoms {
        out += &a.coeff * phi_at(a.tau);
    }
    for a in derivative_atoms {
        out += &a.coeff * phi_at(a.tau) * generator;
    }
    out
}

/// `x'(t) = Σ_k A_k x(t - tau_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRfde {
    n: usize,
    tau_max: f64,
    atoms: Vec<DelayAtom>,
}

impl LinearRfde {
    /// `tau_max = None` uses the largest atom delay (or 1 for an ODE).
    pub fn new(atoms: Vec<DelayAtom>, tau_max: Option<f64>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidModel("an equation needs at least one atom".into()))?;
        let n = first.coeff.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("state dimension must be positive".into()));
        }
        check_atoms(&atoms, n, "atoms")?;
        let largest = atoms.iter().map(|a| a.tau).fold(0.0, f64::max);
        let tau_max = match tau_max {
            Some(t) => {
                if !(t > 0.0) || t < largest {
                    return Err(Error::InvalidModel(format!(
                        "horizon {t} must be positive and cover the largest delay {largest}"
                    )));
                }
                t
            }
            None if largest > 0.0 => largest,
            None => 1.0,
        };
        Ok(Self { n, tau_max, atoms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn atoms(&self) -> &[DelayAtom] {
        &self.atoms
    }

    pub fn is_real(&self) -> bool {
        self.atoms.iter().all(|a| crate::linalg::is_real(&a.coeff))
    }

    /// `d^order/dλ^order` of `Δ(λ) = λI - Σ A_k e^{-λ tau_k}`.
    pub fn char_matrix(&self, lambda: C64, order: usize) -> CMat {
        let mut d = CMat::zeros(self.n, self.n);
        if order == 0 {
            for i in 0..self.n {
                d[(i, i)] = lambda;
            }
        } else if order == 1 {
            for i in 0..self.n {
                d[(i, i)] = c64(1.0, 0.0);
            }
        }
        let sign = if order % 2 == 0 { -1.0 } else { 1.0 };
        for a in &self.atoms {
            let w = (-lambda * a.tau).exp() * (sign * a.tau.powi(order as i32));
            if w != c64(0.0, 0.0) {
                d += &a.coeff * w;
            }
        }
        d
    }

    /// Magnitude used to judge whether `Δ(λ)` is numerically singular.
    pub fn scale_at(&self, lambda: C64) -> f64 {
        1.0 + lambda.norm()
            + self
                .atoms
                .iter()
                .map(|a| crate::linalg::singular_values(&a.coeff)[0] * (-lambda.re * a.tau).exp())
                .sum::<f64>()
    }

    /// `ℒ₀(Φ)` for `Φ(θ) = Φ(0) e^{Gθ}`.
    pub fn apply_with_generator(&self, phi0: &CMat, generator: &CMat) -> Result<CMat> {
        if phi0.nrows() != self.n || generator.nrows() != phi0.ncols() {
            return Err(Error::Dimension("basis does not match the equation".into()));
        }
        Ok(apply_with_generator(&self.atoms, &[], phi0, generator))
    }

    /// Adds `Σ α_m L_m` to the base operator, producing a new atom list.
    pub fn perturbed(&self, directions: &[DirectionOperator], alpha: &[C64]) -> Result<PerturbedRfde> {
        if directions.len() != alpha.len() {
            return Err(Error::Dimension("one coefficient per direction expected".into()));
        }
        let mut atoms = self.atoms.clone();
        let mut derivative_atoms = vec![];
        for (d, &a) in directions.iter().zip(alpha) {
            d.check_dim(self.n)?;
            atoms.extend(d.atoms.iter().map(|x| DelayAtom::new(x.tau, &x.coeff * a)));
            derivative_atoms.extend(d.derivative_atoms.iter().map(|x| DelayAtom::new(x.tau, &x.coeff * a)));
        }
        Ok(PerturbedRfde { n: self.n, atoms, derivative_atoms })
    }
}

/// A first-order perturbation of an equation, possibly with derivative terms
/// `Ã x'(t - tau)`; only the characteristic matrix and its first derivative
/// are needed downstream.
#[derive(Clone, Debug)]
pub struct PerturbedRfde {
    pub n: usize,
    pub atoms: Vec<DelayAtom>,
    pub derivative_atoms: Vec<DelayAtom>,
}

impl PerturbedRfde {
    /// `(Δ(λ), Δ'(λ))` where `Δ(λ) = λI - Σ A e^{-λτ} - Σ Ã λ e^{-λτ}`.
    pub fn char_pair(&self, lambda: C64) -> (CMat, CMat) {
        let mut d0 = CMat::identity(self.n, self.n) * lambda;
        let mut d1 = CMat::identity(self.n, self.n);
        for a in &self.atoms {
            let e = (-lambda * a.tau).exp();
            d0 -= &a.coeff * e;
            d1 += &a.coeff * (e * a.tau);
        }
        for a in &self.derivative_atoms {
            let e = (-lambda * a.tau).exp();
            d0 -= &a.coeff * (e * lambda);
            d1 -= &a.coeff * (e * (c64(1.0, 0.0) - lambda * a.tau));
        }
        (d0, d1)
    }
}

/// Derivative of a family with respect to one parameter at the base point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DirectionOperator {
    pub atoms: Vec<DelayAtom>,
    pub derivative_atoms: Vec<DelayAtom>,
}

impl DirectionOperator {
    pub fn new(atoms: Vec<DelayAtom>, derivative_atoms: Vec<DelayAtom>) -> Self {
        Self { atoms, derivative_atoms }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        check_atoms(&self.atoms, n, "atoms")?;
        check_atoms(&self.derivative_atoms, n, "derivative_atoms")
    }

    pub fn apply_with_generator(&self, phi0: &CMat, generator: &CMat) -> Result<CMat> {
        self.check_dim(phi0.nrows())?;
        Ok(apply_with_generator(&self.atoms, &self.derivative_atoms, phi0, generator))
    }

    pub fn scaled(&self, s: C64) -> Self {
        let sc = |v: &[DelayAtom]| v.iter().map(|a| DelayAtom::new(a.tau, &a.coeff * s)).collect();
        Self::new(sc(&self.atoms), sc(&self.derivative_atoms))
    }

    pub fn largest_delay(&self) -> f64 {
        self.atoms
            .iter()
            .chain(&self.derivative_atoms)
            .map(|a| a.tau)
            .fold(0.0, f64::max)
    }
}

/// First-order jet of `ℒ(α)` at `α = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametrizedFamily {
    pub base: LinearRfde,
    pub directions: Vec<DirectionOperator>,
    pub names: Vec<String>,
    pub real: bool,
}

impl ParametrizedFamily {
    pub fn new(base: LinearRfde, directions: Vec<DirectionOperator>, real: bool) -> Result<Self> {
        for d in &directions {
            d.check_dim(base.n())?;
        }
        let names = (1..=directions.len()).map(|i| format!("alpha_{i}")).collect();
        Ok(Self { base, directions, names, real })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.directions.len() {
            return Err(Error::Dimension("one name per direction expected".into()));
        }
        self.names = names;
        Ok(self)
    }
}
