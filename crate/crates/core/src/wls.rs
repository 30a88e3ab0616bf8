//! Weighted least squares and weighted lasso on small dense designs.

use nalgebra::{DMatrix, DVector};

/// Row-major dense design with per-row weights.
#[derive(Debug, Clone)]
pub struct Design {
    pub n_rows: usize,
    pub n_cols: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl Design {
    pub fn new(n_cols: usize) -> Self {
        Design {
            n_rows: 0,
            n_cols,
            x: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], y: f64, w: f64) {
        debug_assert_eq!(row.len(), self.n_cols);
        self.x.extend_from_slice(row);
        self.y.push(y);
        self.w.push(w);
        self.n_rows += 1;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.n_cols..(r + 1) * self.n_cols]
    }

    /// Keep only the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Design {
        let mut out = Design::new(cols.len());
        let mut buf = vec![0.0; cols.len()];
        for r in 0..self.n_rows {
            let row = self.row(r);
            for (b, &c) in buf.iter_mut().zip(cols) {
                *b = row[c];
            }
            out.push(&buf, self.y[r], self.w[r]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankDeficient {
    pub rank: usize,
    pub needed: usize,
}

/// Relative singular-value cutoff used for rank decisions.
const RANK_RTOL: f64 = 1e-10;

/// Minimize `Σ w_r (y_r − x_r·β)²` through an SVD of the `√w`-scaled design.
pub fn weighted_lstsq(design: &Design) -> Result<Vec<f64>, RankDeficient> {
    let p = design.n_cols;
    if p == 0 {
        return Ok(Vec::new());
    }
    if design.n_rows < p {
        return Err(RankDeficient {
            rank: design.n_rows,
            needed: p,
        });
    }
    let sw: Vec<f64> = design.w.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(design.n_rows, p, |r, c| sw[r] * design.x[r * p + c]);
    let b = DVector::from_iterator(design.n_rows, design.y.iter().zip(&sw).map(|(y, s)| y * s));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * RANK_RTOL;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if smax <= 0.0 || rank < p {
        return Err(RankDeficient { rank, needed: p });
    }
    let beta = svd.solve(&b, cutoff).expect("U and V were computed");
    Ok(beta.iter().copied().collect())
}

/// Numerical rank of the `√w`-scaled design.
pub fn rank(design: &Design) -> usize {
    if design.n_rows == 0 || design.n_cols == 0 {
        return 0;
    }
    let p = design.n_cols;
    let a = DMatrix::from_fn(design.n_rows, p, |r, c| design.w[r].sqrt() * design.x[r * p + c]);
    let sv = a.singular_values();
    let cutoff = sv.max() * RANK_RTOL;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Weighted lasso by cyclic coordinate descent:
/// `½ Σ ŵ_r (y_r − x_r·β)² + λ ‖β‖₁` with `ŵ` normalized to sum to one.
///
/// Works on the weighted Gram matrix, so a sweep costs `O(p²)` whatever the row count.
pub fn weighted_lasso(design: &Design, lambda: f64, warm_start: Option<&[f64]>) -> Vec<f64> {
    let p = design.n_cols;
    let n = design.n_rows;
    let total: f64 = design.w.iter().sum();
    if p == 0 || n == 0 || total <= 0.0 {
        return vec![0.0; p];
    }
    let mut gram = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for r in 0..n {
        let w = design.w[r] / total;
        let row = design.row(r);
        for j in 0..p {
            let wx = w * row[j];
            if wx == 0.0 {
                continue;
            }
            xty[j] += wx * design.y[r];
            for k in j..p {
                gram[j * p + k] += wx * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[j * p + k] = gram[k * p + j];
        }
    }
    let mut beta = warm_start.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    // grad_j = (Xᵀŵy)_j − (Gβ)_j
    let mut grad: Vec<f64> = (0..p)
        .map(|j| xty[j] - dot(&gram[j * p..(j + 1) * p], &beta))
        .collect();
    let scale = (0..p).map(|j| gram[j * p + j]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    for _sweep in 0..10_000 {
        let mut max_step = 0.0f64;
        for j in 0..p {
            let gjj = gram[j * p + j];
            if gjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(grad[j] + gjj * old, lambda) / gjj;
            if new != old {
                let delta = new - old;
                for (g, gk) in grad.iter_mut().zip(&gram[j * p..(j + 1) * p]) {
                    *g -= gk * delta;
                }
                beta[j] = new;
                max_step = max_step.max(delta.abs() * gjj.sqrt());
            }
        }
        if max_step <= 1e-12 * scale.sqrt() {
            break;
        }
    }
    beta
}

/// Smallest `λ` at which the lasso solution is identically zero.
pub fn lambda_max(design: &Design) -> f64 {
    let total: f64 = design.w.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    (0..design.n_cols)
        .map(|j| {
            (0..design.n_rows)
                .map(|r| design.w[r] / total * design.x[r * design.n_cols + j] * design.y[r])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: &[(&[f64], f64, f64)]) -> Design {
        let mut d = Design::new(rows[0].0.len());
        for (x, y, w) in rows {
            d.push(x, *y, *w);
        }
        d
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let d = design(&[
            (&[1.0, 0.0], 2.0, 1.0),
            (&[0.0, 1.0], -1.0, 3.0),
            (&[1.0, 1.0], 1.0, 0.5),
        ]);
        let b = weighted_lstsq(&d).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_matter_for_inconsistent_rows() {
        // Two observations of one coefficient: weighted mean.
        let d = design(&[(&[1.0], 0.0, 1.0), (&[1.0], 4.0, 3.0)]);
        let b = weighted_lstsq(&d).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let d = design(&[(&[1.0, 1.0], 1.0, 1.0), (&[2.0, 2.0], 2.0, 1.0)]);
        assert_eq!(weighted_lstsq(&d).unwrap_err(), RankDeficient { rank: 1, needed: 2 });
        let d = design(&[(&[1.0, 1.0], 1.0, 1.0)]);
        assert!(weighted_lstsq(&d).is_err());
    }

    #[test]
    fn lasso_limits() {
        let d = design(&[
            (&[1.0, 0.0], 2.0, 1.0),
            (&[0.0, 1.0], 0.1, 1.0),
            (&[1.0, 1.0], 2.1, 1.0),
            (&[0.0, 0.0], 0.0, 1.0),
        ]);
        let lmax = lambda_max(&d);
        assert!(weighted_lasso(&d, lmax * 1.0001, None).iter().all(|&b| b == 0.0));
        let ols = weighted_lstsq(&d).unwrap();
        let tiny = weighted_lasso(&d, 0.0, None);
        for (a, b) in ols.iter().zip(&tiny) {
            assert!((a - b).abs() < 1e-8);
        }
        // Moderate penalty drops the weak coefficient first.
        let mid = weighted_lasso(&d, 0.1, None);
        assert!(mid[0] > 0.0 && mid[1] == 0.0);
    }
}
