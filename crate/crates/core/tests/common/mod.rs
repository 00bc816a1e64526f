//! Independent reference implementations used by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use islnet::mlsim::{LinearModel, TabularDataset};

/// Least squares via the normal equations `(XᵀX) β = Xᵀy` with the bias as
/// the last column, solved by Gauss-Jordan elimination with partial
/// pivoting. Returns `(weights, bias)`.
pub fn normal_equations(d: &TabularDataset) -> (Vec<f64>, f64) {
    let p = d.feature_names().len();
    let k = p + 1;
    let mut m = vec![vec![0.0f64; k + 1]; k];
    for (x, y) in d.rows() {
        let row: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
        for i in 0..k {
            for j in 0..k {
                m[i][j] += row[i] * row[j];
            }
            m[i][k] += row[i] * y;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let div = m[col][col];
        for v in m[col].iter_mut() {
            *v /= div;
        }
        for r in 0..k {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..=k {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    let beta: Vec<f64> = m.iter().map(|r| r[k]).collect();
    (beta[..p].to_vec(), beta[p])
}

/// `(MAE, MSE)` by an explicit loop over rows.
pub fn row_loop_metrics(m: &LinearModel, d: &TabularDataset) -> (f64, f64) {
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (x, y) in d.rows() {
        let mut pred = m.bias;
        for i in 0..x.len() {
            pred += m.weights[i] * x[i];
        }
        let r = pred - y;
        abs += r.abs();
        sq += r * r;
    }
    let n = d.rows().len() as f64;
    (abs / n, sq / n)
}

/// Central finite-difference gradient of the row-loop MSE with respect to
/// `(weights, bias)`.
pub fn central_difference_gradient(m: &LinearModel, d: &TabularDataset, h: f64) -> (Vec<f64>, f64) {
    let loss = |m: &LinearModel| row_loop_metrics(m, d).1;
    let mut gw = Vec::with_capacity(m.weights.len());
    for i in 0..m.weights.len() {
        let mut plus = m.clone();
        let mut minus = m.clone();
        plus.weights[i] += h;
        minus.weights[i] -= h;
        gw.push((loss(&plus) - loss(&minus)) / (2.0 * h));
    }
    let mut plus = m.clone();
    let mut minus = m.clone();
    plus.bias += h;
    minus.bias -= h;
    (gw, (loss(&plus) - loss(&minus)) / (2.0 * h))
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
