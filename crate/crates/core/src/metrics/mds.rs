use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Symmetric matrix of pairwise discrepancies with a zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyMatrix {
    pub labels: Vec<String>,
    /// Row-major, `labels.len()²` entries.
    pub values: Vec<f64>,
}

impl DiscrepancyMatrix {
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * n {
            return Err(invalid(format!(
                "{n} labels need {} matrix entries, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(invalid(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !(a >= 0.0) || (a - b).abs() > 1e-10 {
                    return Err(invalid(format!("entries ({i}, {j}) are negative or asymmetric")));
                }
            }
        }
        Ok(Self { labels, values })
    }

    /// Fills the upper triangle with `f(i, j)` and mirrors it.
    pub fn from_fn(labels: Vec<String>, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::new(labels, values)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdsEmbedding {
    /// `coords[i]` has one entry per retained dimension.
    pub coords: Vec<Vec<f64>>,
    /// All eigenvalues of the double-centred matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of eigenvalue mass lost to negative eigenvalues:
    /// `Σ|λ⁻| / Σ|λ|`, zero for Euclidean inputs.
    pub distortion: f64,
}

/// Classical multidimensional scaling into at most `dim` dimensions.
pub fn mds_embed(matrix: &DiscrepancyMatrix, dim: usize) -> Result<MdsEmbedding> {
    let n = matrix.len();
    if n == 0 || dim == 0 {
        return Err(invalid("MDS needs a non-empty matrix and a positive dimension"));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| matrix.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| d2.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let scale = eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let positive = eigenvalues.iter().filter(|&&l| l > 1e-12 * scale).count();
    let kept = dim.min(positive);
    if kept < dim {
        log::warn!("only {positive} positive eigenvalue(s); embedding in {kept} dimension(s)");
    }
    let coords = (0..n)
        .map(|i| {
            order[..kept]
                .iter()
                .map(|&k| eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt())
                .collect()
        })
        .collect();
    let total: f64 = eigenvalues.iter().map(|l| l.abs()).sum();
    let negative = eigenvalues.iter().filter(|&&l| l < 0.0).fold(0.0, |acc, l| acc - l);
    let distortion = if total > 0.0 { negative / total } else { 0.0 };
    Ok(MdsEmbedding {
        coords,
        eigenvalues,
        distortion,
    })
}
