//! Analytic count approximation, the parametric metamodel built on it, the
//! fit of its parameters to simulation observations, and the bound-constrained
//! quadratic solver.
//!
//! For a demand vector `x` the metamodel is
//!
//! ```text
//! m(x; β) = β₀ · (1/|I|) Σᵢ (yᵢ − λᵢ)²  +  β₁  +  Σ_z β_{z+2} x_z  +  (δ/|Z|) Σ_z (x_z − x̃_z)²
//! λ = P̃ x
//! ```
//!
//! where `P̃` is the analytic assignment matrix. With `β = (1, 0, …, 0)` it is
//! the analytic stand-in for the simulation-based objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::AssignmentMatrix;

mod fit;
mod solver;

pub use fit::{fit_beta, FitSettings};
pub use solver::{solve_metamodel, SolveOutcome, SolverSettings};

/// Metamodel parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beta {
    /// Weight of the analytic count term, β₀.
    pub scale: f64,
    /// β₁.
    pub intercept: f64,
    /// One coefficient per OD pair, β_{z+2}.
    pub linear: Vec<f64>,
}

impl Beta {
    /// `(1, 0, …, 0)`: the analytic approximation alone.
    pub fn physical(num_ods: usize) -> Self {
        Beta {
            scale: 1.0,
            intercept: 0.0,
            linear: vec![0.0; num_ods],
        }
    }

    /// Flattened `(β₀, β₁, β₂, …)`, length `|Z| + 2`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.linear.len() + 2);
        v.push(self.scale);
        v.push(self.intercept);
        v.extend_from_slice(&self.linear);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::invalid("beta needs at least 2 entries"));
        }
        Ok(Beta {
            scale: v[0],
            intercept: v[1],
            linear: v[2..].to_vec(),
        })
    }

    fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.intercept.is_finite() && self.linear.iter().all(|b| b.is_finite())
    }
}

/// A simulated point and its objective estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: Vec<f64>,
    pub objective_estimate: f64,
}

/// Per-OD box `lower ≤ x ≤ upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Bounds { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[0, 3·max_z x̃_z]` for every OD.
    pub fn around_prior(prior: &[f64]) -> Self {
        let top = 3.0 * prior.iter().copied().fold(0.0, f64::max);
        Bounds {
            lower: vec![0.0; prior.len()],
            upper: vec![top; prior.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::invalid("bounds have mismatched lengths"));
        }
        for (z, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(format!(
                    "bounds of OD {} are [{lo}, {hi}]; need 0 <= lower <= upper",
                    z + 1
                )));
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn projected(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.project(&mut out);
        out
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((&v, &lo), &hi)| v >= lo - tol && v <= hi + tol)
    }
}

/// One metamodel subproblem `min_{x ∈ Ω} m(x; β)`.
#[derive(Clone, Debug)]
pub struct MetamodelProblem {
    pub assignment: AssignmentMatrix,
    pub field_counts: Vec<f64>,
    pub prior: Vec<f64>,
    pub delta: f64,
    pub bounds: Bounds,
    pub beta: Beta,
}

impl MetamodelProblem {
    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = (self.assignment.nrows(), self.assignment.ncols());
        if self.field_counts.len() != rows {
            return Err(Error::invalid(format!(
                "{} field counts for {rows} measured edges",
                self.field_counts.len()
            )));
        }
        if self.prior.len() != cols || self.bounds.len() != cols || self.beta.linear.len() != cols {
            return Err(Error::invalid(format!(
                "prior ({}), bounds ({}) and beta ({}) must all have |Z| = {cols} entries",
                self.prior.len(),
                self.bounds.len(),
                self.beta.linear.len()
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("delta {} must be >= 0", self.delta)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Numeric("beta has non-finite entries".into()));
        }
        self.bounds.validate()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.assignment.ncols() {
            return Err(Error::invalid(format!(
                "point has length {}, expected {}",
                x.len(),
                self.assignment.ncols()
            )));
        }
        Ok(())
    }
}

/// `(δ/|Z|) Σ_z (x_z − x̃_z)²`.
pub fn regularization(x: &[f64], prior: &[f64], delta: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let ss: f64 = x.iter().zip(prior).map(|(a, b)| (a - b).powi(2)).sum();
    delta * ss / x.len() as f64
}

fn mean_squared_gap(y: &[f64], lambda: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(lambda).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Analytic count mismatch `(1/|I|) Σᵢ (yᵢ − λᵢ)²` with `λ = P̃ x`.
pub fn f_analytic(x: &[f64], assignment: &AssignmentMatrix, field_counts: &[f64]) -> Result<f64> {
    if x.len() != assignment.ncols() || field_counts.len() != assignment.nrows() {
        return Err(Error::invalid(format!(
            "x has {} entries and y has {}, matrix is {}x{}",
            x.len(),
            field_counts.len(),
            assignment.nrows(),
            assignment.ncols()
        )));
    }
    Ok(mean_squared_gap(field_counts, &assignment.mul_vec(x)))
}

pub fn metamodel_value(x: &[f64], problem: &MetamodelProblem) -> Result<f64> {
    problem.check_point(x)?;
    let fa = f_analytic(x, &problem.assignment, &problem.field_counts)?;
    Ok(value_parts(x, problem, fa))
}

fn value_parts(x: &[f64], problem: &MetamodelProblem, fa: f64) -> f64 {
    let beta = &problem.beta;
    let linear: f64 = beta.linear.iter().zip(x).map(|(b, v)| b * v).sum();
    beta.scale * fa + beta.intercept + linear + regularization(x, &problem.prior, problem.delta)
}

/// Value and gradient of the metamodel in one pass.
pub fn metamodel_value_and_gradient(x: &[f64], problem: &MetamodelProblem) -> Result<(f64, Vec<f64>)> {
    problem.check_point(x)?;
    let lambda = problem.assignment.mul_vec(x);
    let rows = problem.field_counts.len().max(1) as f64;
    let residual: Vec<f64> = problem
        .field_counts
        .iter()
        .zip(&lambda)
        .map(|(y, l)| y - l)
        .collect();
    let fa = mean_squared_gap(&problem.field_counts, &lambda);
    let value = value_parts(x, problem, fa);

    let back = problem.assignment.mul_transpose_vec(&residual);
    let cols = x.len().max(1) as f64;
    let gradient = (0..x.len())
        .map(|z| {
            -2.0 * problem.beta.scale / rows * back[z]
                + problem.beta.linear[z]
                + 2.0 * problem.delta / cols * (x[z] - problem.prior[z])
        })
        .collect();
    Ok((value, gradient))
}

pub fn metamodel_gradient(x: &[f64], problem: &MetamodelProblem) -> Result<Vec<f64>> {
    metamodel_value_and_gradient(x, problem).map(|(_, g)| g)
}
