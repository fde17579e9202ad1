use crate::error::{Error, Result};
use crate::route_choice::RouteProbabilities;

use super::Network;

/// Sparse measured-edges × OD-pairs matrix in compressed-row form.
///
/// Column indices within a row are strictly increasing and no explicit zeros
/// are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl AssignmentMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are summed; entries that sum to zero are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, z, v) in &entries {
            if i >= rows || z >= cols {
                return Err(Error::invalid(format!(
                    "entry ({i}, {z}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite entry at ({i}, {z})")));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, z, v) in entries {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (i, z) => last.2 += v,
                _ => merged.push((i, z, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);

        let mut row_ptr = vec![0; rows + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = merged.iter().map(|e| e.1).collect();
        let values = merged.iter().map(|e| e.2).collect();
        Ok(AssignmentMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        AssignmentMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Stored entries of one row as `(col, value)`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(z, v)| (i, z, v)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for (i, z, v) in self.iter() {
            dense[i][z] = v;
        }
        dense
    }

    /// `A x`. Panics if `x.len() != ncols()`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in mul_vec");
        (0..self.rows)
            .map(|i| self.row(i).map(|(z, v)| v * x[z]).sum())
            .collect()
    }

    /// `Aᵀ v`. Panics if `v.len() != nrows()`.
    pub fn mul_transpose_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "dimension mismatch in mul_transpose_vec");
        let mut out = vec![0.0; self.cols];
        for (i, z, a) in self.iter() {
            out[z] += a * v[i];
        }
        out
    }

    /// `a·self + b·other`, merging sparsity patterns.
    pub fn linear_combination(&self, a: f64, other: &AssignmentMatrix, b: f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid(format!(
                "cannot combine {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let left = self.iter().map(|(i, z, v)| (i, z, a * v));
        let right = other.iter().map(|(i, z, v)| (i, z, b * v));
        AssignmentMatrix::from_triplets(self.rows, self.cols, left.chain(right))
    }
}

/// Analytic assignment matrix: entry `(i, z)` is the summed choice probability
/// of the routes of OD `z` that traverse measured edge `i`.
pub fn build_assignment_matrix(
    network: &Network,
    probabilities: &RouteProbabilities,
) -> Result<AssignmentMatrix> {
    let p = probabilities.as_slice();
    if p.len() != network.num_routes() {
        return Err(Error::invalid(format!(
            "probabilities cover {} routes, network has {}",
            p.len(),
            network.num_routes()
        )));
    }
    for (r, &pr) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&pr) {
            return Err(Error::invalid(format!(
                "route {} has probability {pr} outside [0, 1]",
                network.routes()[r].route_id
            )));
        }
    }
    for z in 0..network.num_ods() {
        let sum: f64 = network.routes_of_od(z).iter().map(|&r| p[r]).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Normalization {
                od_id: z as u32 + 1,
                sum,
            });
        }
    }
    let triplets = (0..network.num_routes()).flat_map(|r| {
        let z = network.od_of_route(r);
        network
            .route_measured_rows(r)
            .iter()
            .map(move |&i| (i, z, p[r]))
    });
    AssignmentMatrix::from_triplets(network.num_measured(), network.num_ods(), triplets)
}

/// Expected counts on measured edges, `λ = P̃ x`.
pub fn predict_counts(matrix: &AssignmentMatrix, demand: &[f64]) -> Result<Vec<f64>> {
    if demand.len() != matrix.ncols() {
        return Err(Error::invalid(format!(
            "demand has length {}, matrix has {} OD columns",
            demand.len(),
            matrix.ncols()
        )));
    }
    if let Some(z) = demand.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid(format!(
            "demand of OD {} is {} (must be finite and >= 0)",
            z + 1,
            demand[z]
        )));
    }
    Ok(matrix.mul_vec(demand))
}
