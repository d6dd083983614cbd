use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::RefineryError;

/// Output of [`rolling_normalize`]. Rows before `warmup` are zero and must
/// not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: DMatrix<f64>,
    pub warmup: usize,
}

/// Trailing-window z-score: `(x[t] - mean) / (std + epsilon)` over rows
/// `t - window + 1 ..= t`, with the population standard deviation. A window
/// whose values are all equal maps to exactly 0.
pub fn rolling_normalize(x: &DMatrix<f64>, window: usize, epsilon: f64) -> Result<Normalized, RefineryError> {
    if window < 2 {
        return Err(RefineryError::BadConfig(format!("normalization window {window} < 2")));
    }
    let (rows, cols) = x.shape();
    let mut out = DMatrix::zeros(rows, cols);
    let w = window as f64;
    for c in 0..cols {
        let col = x.column(c);
        for t in window.saturating_sub(1)..rows {
            let win = col.rows(t + 1 - window, window);
            let first = win[0];
            if win.iter().all(|v| *v == first) {
                continue;
            }
            let mean = win.sum() / w;
            let var = win.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
            out[(t, c)] = (col[t] - mean) / (var.sqrt() + epsilon);
        }
    }
    Ok(Normalized { values: out, warmup: window - 1 })
}

/// Per-row principal-component features.
///
/// `components` is T x C_max (C_max = input column count); on row t only the
/// first `component_count[t]` entries are meaningful, the rest are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedFeatureFrame {
    pub timestamps: Vec<i64>,
    pub components: DMatrix<f64>,
    pub component_count: Vec<usize>,
    /// Cumulative explained-variance fraction of the retained components
    /// (0 on invalid rows).
    pub explained_variance: Vec<f64>,
    pub valid: Vec<bool>,
    /// Window covariance had fewer than C_max non-negligible eigenvalues.
    pub rank_deficient: Vec<bool>,
    /// First row that can be valid given the warm-ups.
    pub first_valid: usize,
}

impl RefinedFeatureFrame {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn c_max(&self) -> usize {
        self.components.ncols()
    }

    /// Component `j` of row `t` if it is inside the validity mask, else 0.
    pub fn feature(&self, t: usize, j: usize) -> f64 {
        if self.valid[t] && j < self.component_count[t] {
            self.components[(t, j)]
        } else {
            0.0
        }
    }

    /// `ts,valid,explained_variance,components,pc1..pcC`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "ts,valid,explained_variance,components")?;
        for j in 0..self.c_max() {
            write!(w, ",pc{}", j + 1)?;
        }
        writeln!(w)?;
        for t in 0..self.len() {
            write!(
                w,
                "{},{},{},{}",
                self.timestamps[t], self.valid[t] as u8, self.explained_variance[t], self.component_count[t]
            )?;
            for j in 0..self.c_max() {
                write!(w, ",{}", self.feature(t, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Eigen-decomposition of one window, sorted by descending eigenvalue with
/// each eigenvector's largest-magnitude loading made positive.
#[derive(Debug, Clone)]
pub struct WindowPca {
    pub mean: DVector<f64>,
    pub eigenvalues: Vec<f64>,
    /// Columns are unit eigenvectors, aligned with `eigenvalues`.
    pub vectors: DMatrix<f64>,
}

impl WindowPca {
    pub fn fit(window: &DMatrix<f64>) -> Self {
        let (n, k) = window.shape();
        let mean = window.row_mean().transpose();
        let mut centered = window.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut vectors = DMatrix::zeros(k, k);
        let mut eigenvalues = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(src).into_owned();
            let mut pivot = 0;
            for i in 1..k {
                if v[i].abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            if v[pivot] < 0.0 {
                v = -v;
            }
            vectors.set_column(dst, &v);
            eigenvalues.push(eig.eigenvalues[src].max(0.0));
        }
        Self { mean, eigenvalues, vectors }
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Smallest component count reaching `target` explained variance, and
    /// the fraction it achieves. `None` if the window has no variance.
    pub fn retain(&self, target: f64) -> Option<(usize, f64)> {
        let total = self.total_variance();
        if !(total > 0.0) {
            return None;
        }
        let mut cum = 0.0;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            cum += l;
            // relative slack absorbs rounding in exactly-tied spectra
            if cum / total >= target - 1e-12 {
                return Some((i + 1, (cum / total).min(1.0)));
            }
        }
        Some((self.eigenvalues.len(), 1.0))
    }

    pub fn project(&self, row: &DVector<f64>, count: usize) -> Vec<f64> {
        let centered = row - &self.mean;
        (0..count).map(|j| self.vectors.column(j).dot(&centered)).collect()
    }

    pub fn numerical_rank(&self) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues.iter().filter(|l| **l > top * 1e-10 && **l > 0.0).count()
    }
}

/// Refits PCA on the trailing `window` valid rows at every row and projects
/// the current row onto the fewest components explaining at least
/// `variance_target` of the window variance.
pub fn rolling_pca(
    normalized: &Normalized,
    timestamps: &[i64],
    window: usize,
    variance_target: f64,
) -> Result<RefinedFeatureFrame, RefineryError> {
    let (rows, k) = normalized.values.shape();
    if timestamps.len() != rows {
        return Err(RefineryError::LengthMismatch(timestamps.len(), rows));
    }
    if k == 0 {
        return Err(RefineryError::NoMetrics);
    }
    if window < k + 1 {
        return Err(RefineryError::BadConfig(format!("PCA window {window} must be at least K + 1 = {}", k + 1)));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(RefineryError::BadConfig(format!("variance target {variance_target} outside (0, 1]")));
    }
    let first_valid = normalized.warmup + window - 1;
    let mut out = RefinedFeatureFrame {
        timestamps: timestamps.to_vec(),
        components: DMatrix::zeros(rows, k),
        component_count: vec![0; rows],
        explained_variance: vec![0.0; rows],
        valid: vec![false; rows],
        rank_deficient: vec![false; rows],
        first_valid,
    };
    for t in first_valid..rows {
        let win = normalized.values.rows(t + 1 - window, window).into_owned();
        let pca = WindowPca::fit(&win);
        out.rank_deficient[t] = pca.numerical_rank() < k;
        let Some((count, achieved)) = pca.retain(variance_target) else {
            continue;
        };
        let row = normalized.values.row(t).transpose();
        for (j, v) in pca.project(&row, count).into_iter().enumerate() {
            out.components[(t, j)] = v;
        }
        out.component_count[t] = count;
        out.explained_variance[t] = achieved;
        out.valid[t] = true;
    }
    Ok(out)
}
