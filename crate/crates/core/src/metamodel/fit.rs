use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{f_analytic, regularization, Beta, MetamodelProblem, Observation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    /// Ridge weight pulling β towards `(1, 0, …, 0)`.
    pub ridge: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings { ridge: 1e-3 }
    }
}

/// Fits β to the observations by distance-weighted ridge least squares.
///
/// Minimises `Σ_j w_j (f̂_j − m(x_j; β))² + γ ‖β − (1, 0, …, 0)‖²` with
/// `w_j = 1 / (1 + ‖x_j − current‖₂)`. The metamodel is linear in β, so this
/// is a linear least-squares problem. When there are fewer observations than
/// parameters (the usual case) it is solved in its dual `n × n` form, which
/// keeps the cost independent of the number of OD pairs.
///
/// `problem.beta` is ignored; the rest of `problem` supplies `P̃`, `y`, `x̃`
/// and `δ`.
pub fn fit_beta(
    observations: &[Observation],
    current: &[f64],
    problem: &MetamodelProblem,
    settings: &FitSettings,
) -> Result<Beta> {
    if observations.is_empty() {
        return Err(Error::invalid("fit_beta needs at least one observation"));
    }
    if !(settings.ridge > 0.0 && settings.ridge.is_finite()) {
        return Err(Error::invalid(format!("ridge weight {} must be > 0", settings.ridge)));
    }
    let nz = problem.assignment.ncols();
    if current.len() != nz {
        return Err(Error::invalid("current point has the wrong length"));
    }
    let p = nz + 2;

    // Weighted design rows ã_j = √w_j (fA(x_j), 1, x_j) and targets
    // ẽ_j = √w_j (f̂_j − reg(x_j) − fA(x_j)), i.e. residuals of the default β.
    let mut rows = Vec::with_capacity(observations.len());
    let mut targets = Vec::with_capacity(observations.len());
    for obs in observations {
        if obs.point.len() != nz {
            return Err(Error::invalid("observation point has the wrong length"));
        }
        let fa = f_analytic(&obs.point, &problem.assignment, &problem.field_counts)?;
        let dist = obs
            .point
            .iter()
            .zip(current)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let sw = (1.0 / (1.0 + dist)).sqrt();
        let mut row = Vec::with_capacity(p);
        row.push(sw * fa);
        row.push(sw);
        row.extend(obs.point.iter().map(|v| sw * v));
        let reg = regularization(&obs.point, &problem.prior, problem.delta);
        targets.push(sw * (obs.objective_estimate - reg - fa));
        rows.push(row);
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric("non-finite observation in fit".into()));
    }

    let n = rows.len();
    let gamma = settings.ridge;
    let shift = if n >= p {
        // (ÃᵀÃ + γI) d = Ãᵀẽ
        let mut gram = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        for (row, &t) in rows.iter().zip(&targets) {
            for a in 0..p {
                rhs[a] += row[a] * t;
                for b in 0..=a {
                    gram[a * p + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            gram[a * p + a] += gamma;
            for b in 0..a {
                gram[b * p + a] = gram[a * p + b];
            }
        }
        solve_spd(gram, rhs, p)?
    } else {
        // d = Ãᵀ (ÃÃᵀ + γI)⁻¹ ẽ
        let mut kernel = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..=a {
                let k: f64 = rows[a].iter().zip(&rows[b]).map(|(u, v)| u * v).sum();
                kernel[a * n + b] = k;
                kernel[b * n + a] = k;
            }
            kernel[a * n + a] += gamma;
        }
        let coef = solve_spd(kernel, targets, n)?;
        let mut d = vec![0.0; p];
        for (row, c) in rows.iter().zip(coef) {
            for (dk, rk) in d.iter_mut().zip(row) {
                *dk += c * rk;
            }
        }
        d
    };

    let mut beta = Beta::physical(nz).to_vec();
    for (b, d) in beta.iter_mut().zip(shift) {
        *b += d;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("fitted beta is not finite".into()));
    }
    Beta::from_slice(&beta)
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n × n`)
/// by Cholesky factorisation.
fn solve_spd(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Numeric(format!(
                "normal equations are not positive definite (pivot {d} at {j})"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::{metamodel_value, Bounds};
    use crate::network::AssignmentMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(delta: f64) -> MetamodelProblem {
        MetamodelProblem {
            assignment: AssignmentMatrix::from_triplets(
                2,
                3,
                vec![(0, 0, 0.6), (0, 1, 0.3), (1, 1, 0.7), (1, 2, 1.0)],
            )
            .unwrap(),
            field_counts: vec![120.0, 200.0],
            prior: vec![80.0, 100.0, 90.0],
            delta,
            bounds: Bounds::around_prior(&[80.0, 100.0, 90.0]),
            beta: Beta::physical(3),
        }
    }

    #[test]
    fn rejects_empty_observations() {
        let p = problem(0.0);
        assert!(fit_beta(&[], &[0.0; 3], &p, &FitSettings::default()).is_err());
    }

    #[test]
    fn consistent_observation_keeps_default() {
        let p = problem(0.0);
        let x = vec![70.0, 110.0, 95.0];
        let f = f_analytic(&x, &p.assignment, &p.field_counts).unwrap();
        let obs = [Observation {
            point: x.clone(),
            objective_estimate: f,
        }];
        let beta = fit_beta(&obs, &x, &p, &FitSettings::default()).unwrap();
        assert!((beta.scale - 1.0).abs() < 1e-12);
        assert!(beta.intercept.abs() < 1e-12);
        assert!(beta.linear.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn recovers_generating_beta() {
        let mut p = problem(0.5);
        let truth = Beta::from_slice(&[1.7, -30.0, 0.4, -1.2, 2.5]).unwrap();
        p.beta = truth.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs: Vec<Observation> = (0..12)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..300.0)).collect();
                let f = metamodel_value(&x, &p).unwrap();
                Observation {
                    point: x,
                    objective_estimate: f,
                }
            })
            .collect();
        let fitted = fit_beta(&obs, &obs[0].point, &p, &FitSettings { ridge: 1e-12 }).unwrap();
        for (a, b) in fitted.to_vec().iter().zip(truth.to_vec()) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn repeated_point_gives_finite_beta() {
        let p = problem(1.0);
        let x = vec![50.0, 60.0, 70.0];
        let obs: Vec<Observation> = [900.0, 1100.0, 1000.0]
            .iter()
            .map(|&f| Observation {
                point: x.clone(),
                objective_estimate: f,
            })
            .collect();
        let beta = fit_beta(&obs, &x, &p, &FitSettings::default()).unwrap();
        assert!(beta.to_vec().iter().all(|b| b.is_finite()));
    }

    #[test]
    fn order_invariant() {
        let p = problem(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut obs: Vec<Observation> = (0..4)
            .map(|_| Observation {
                point: (0..3).map(|_| rng.random_range(10.0..200.0)).collect(),
                objective_estimate: rng.random_range(100.0..5000.0),
            })
            .collect();
        let cur = vec![100.0, 100.0, 100.0];
        let a = fit_beta(&obs, &cur, &p, &FitSettings::default()).unwrap();
        obs.reverse();
        obs.swap(0, 2);
        let b = fit_beta(&obs, &cur, &p, &FitSettings::default()).unwrap();
        for (u, v) in a.to_vec().iter().zip(b.to_vec()) {
            assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn cholesky_solves_small_system() {
        let x = solve_spd(vec![4.0, 2.0, 2.0, 3.0], vec![6.0, 5.0], 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!(solve_spd(vec![0.0], vec![1.0], 1).is_err());
    }
}
