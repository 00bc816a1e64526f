//! Small deterministic ML layer: linear models over tabular sensor data.
//!
//! Training solves ordinary least squares with a Householder QR factorization
//! of the bias-augmented design matrix. Fine-tuning runs full-batch gradient
//! descent on the mean squared error, starting from a base model. All assets
//! serialize to byte-stable text so their content addresses are reproducible.

use std::fmt::Write as _;

/// Significant digits used by every serialized number.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Header line of the model file format.
pub const MODEL_HEADER: &str = "islmodel v1";

/// Name of the target column in dataset files.
pub const TARGET_COLUMN: &str = "target";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MlError {
    #[error("RankDeficient: design matrix does not have full column rank")]
    RankDeficient,
    #[error("TooFewRows: need at least {needed} rows, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("FeatureMismatch: expected {expected:?}, found {found:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("EmptyDataset")]
    EmptyDataset,
    #[error("DimensionMismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("ParseError: {0}")]
    Parse(String),
}

/// Formats `x` with [`SIGNIFICANT_DIGITS`] significant digits in positional
/// notation, trailing zeros trimmed. `-0` prints as `0`.
pub fn format_number(x: f64) -> String {
    assert!(x.is_finite(), "cannot serialize non-finite value {x}");
    if x == 0.0 {
        return "0".to_owned();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let n = digits.len() as i32;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    // point sits after `exp + 1` digits
    let point = exp + 1;
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits);
    } else if point >= n {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', (point - n) as usize));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    out
}

/// Rounds `x` to the value its serialized form parses back to.
pub fn quantize(x: f64) -> f64 {
    format_number(x).parse().expect("formatted number parses")
}

fn parse_number(s: &str) -> Result<f64, MlError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| MlError::Parse(format!("not a number: {s:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MlError::Parse(format!("non-finite number: {s:?}")))
    }
}

/// Rows of features with a real-valued target.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    feature_names: Vec<String>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl TabularDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<(Vec<f64>, f64)>) -> Result<Self, MlError> {
        if feature_names.is_empty() {
            return Err(MlError::InvalidParameter("dataset needs at least one feature".into()));
        }
        for name in &feature_names {
            if name.is_empty() || name == TARGET_COLUMN || name.contains([',', '\n', '\r']) {
                return Err(MlError::InvalidParameter(format!("bad feature name {name:?}")));
            }
        }
        for (x, y) in &rows {
            if x.len() != feature_names.len() {
                return Err(MlError::DimensionMismatch {
                    expected: feature_names.len(),
                    got: x.len(),
                });
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(MlError::InvalidParameter("non-finite value in dataset".into()));
            }
        }
        Ok(Self { feature_names, rows })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[(Vec<f64>, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// First `n` rows as a new dataset.
    pub fn head(&self, n: usize) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            rows: self.rows.iter().take(n).cloned().collect(),
        }
    }

    /// Canonical CSV: header of feature names plus `target`, one row per line.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = self.feature_names.join(",");
        out.push(',');
        out.push_str(TARGET_COLUMN);
        out.push('\n');
        for (x, y) in &self.rows {
            for v in x {
                out.push_str(&format_number(*v));
                out.push(',');
            }
            out.push_str(&format_number(*y));
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self, MlError> {
        let text = std::str::from_utf8(bytes).map_err(|e| MlError::Parse(e.to_string()))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| MlError::Parse("missing header".into()))?;
        let mut columns: Vec<String> = header.split(',').map(str::to_owned).collect();
        if columns.pop().as_deref() != Some(TARGET_COLUMN) {
            return Err(MlError::Parse("last column must be `target`".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let values = line
                .split(',')
                .map(parse_number)
                .collect::<Result<Vec<f64>, _>>()?;
            if values.len() != columns.len() + 1 {
                return Err(MlError::Parse(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    values.len(),
                    columns.len() + 1
                )));
            }
            let (x, y) = values.split_at(columns.len());
            rows.push((x.to_vec(), y[0]));
        }
        Self::new(columns, rows)
    }
}

/// `y = weights . x + bias` over named input features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub input_features: Vec<String>,
}

impl LinearModel {
    pub fn new(input_features: Vec<String>, weights: Vec<f64>, bias: f64) -> Result<Self, MlError> {
        if weights.len() != input_features.len() {
            return Err(MlError::DimensionMismatch {
                expected: input_features.len(),
                got: weights.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            input_features,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, MlError> {
        if x.len() != self.weights.len() {
            return Err(MlError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// `islmodel v1`, then `feature,weight` lines, then `bias,<value>`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::from(MODEL_HEADER);
        out.push('\n');
        for (name, w) in self.input_features.iter().zip(&self.weights) {
            let _ = writeln!(out, "{name},{}", format_number(*w));
        }
        let _ = writeln!(out, "bias,{}", format_number(self.bias));
        out.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MlError> {
        let text = std::str::from_utf8(bytes).map_err(|e| MlError::Parse(e.to_string()))?;
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_HEADER) {
            return Err(MlError::Parse(format!("missing `{MODEL_HEADER}` header")));
        }
        let mut features = Vec::new();
        let mut weights = Vec::new();
        let mut bias = None;
        for line in lines {
            let (name, value) = line
                .split_once(',')
                .ok_or_else(|| MlError::Parse(format!("bad model line {line:?}")))?;
            if bias.is_some() {
                return Err(MlError::Parse("content after bias line".into()));
            }
            let value = parse_number(value)?;
            if name == "bias" {
                bias = Some(value);
            } else {
                features.push(name.to_owned());
                weights.push(value);
            }
        }
        let bias = bias.ok_or_else(|| MlError::Parse("missing bias line".into()))?;
        Self::new(features, weights, bias)
    }

    /// The model after a serialize/parse round trip.
    pub fn quantized(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| quantize(*w)).collect(),
            bias: quantize(self.bias),
            input_features: self.input_features.clone(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_features(expected: &[String], found: &[String]) -> Result<(), MlError> {
    if expected == found {
        Ok(())
    } else {
        Err(MlError::FeatureMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        })
    }
}

/// Ordinary least squares fit with an intercept.
pub fn train(d: &TabularDataset) -> Result<LinearModel, MlError> {
    let p = d.feature_names.len();
    let cols = p + 1;
    if d.rows.len() < cols {
        return Err(MlError::TooFewRows {
            needed: cols,
            have: d.rows.len(),
        });
    }
    // Column-major design matrix [x | 1] and right-hand side.
    let m = d.rows.len();
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            d.rows
                .iter()
                .map(|(x, _)| if j < p { x[j] } else { 1.0 })
                .collect()
        })
        .collect();
    let mut b: Vec<f64> = d.rows.iter().map(|(_, y)| *y).collect();

    let scale = a
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let tol = scale * (m as f64) * f64::EPSILON * 16.0;

    // Householder QR, applying each reflector to the remaining columns and b.
    let mut r_diag = vec![0.0; cols];
    for k in 0..cols {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= tol {
            return Err(MlError::RankDeficient);
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        r_diag[k] = alpha;
        for col in a.iter_mut().skip(k + 1) {
            let s = 2.0 * dot(&v, &col[k..]) / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        let s = 2.0 * dot(&v, &b[k..]) / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(&v) {
            *c -= s * vi;
        }
    }
    let max_diag = r_diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if r_diag.iter().any(|d| d.abs() <= max_diag * 1e-10) {
        return Err(MlError::RankDeficient);
    }

    // Back substitution on R (upper triangle stored in columns above the diagonal).
    let mut coef = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = b[i];
        for (j, c) in coef.iter().enumerate().skip(i + 1) {
            s -= a[j][i] * c;
        }
        coef[i] = s / r_diag[i];
    }
    let bias = coef.pop().expect("bias coefficient");
    LinearModel::new(d.feature_names.clone(), coef, bias)
}

/// Gradient of the mean squared error with respect to (weights, bias).
pub fn mse_gradient(m: &LinearModel, d: &TabularDataset) -> Result<(Vec<f64>, f64), MlError> {
    check_features(&m.input_features, &d.feature_names)?;
    if d.rows.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let n = d.rows.len() as f64;
    let mut gw = vec![0.0; m.weights.len()];
    let mut gb = 0.0;
    for (x, y) in &d.rows {
        let r = dot(&m.weights, x) + m.bias - y;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += 2.0 * r * xi;
        }
        gb += 2.0 * r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    Ok((gw, gb / n))
}

/// `steps` full-batch gradient-descent updates on MSE starting from `base`.
pub fn fine_tune(
    base: &LinearModel,
    d: &TabularDataset,
    steps: usize,
    learning_rate: f64,
) -> Result<LinearModel, MlError> {
    check_features(&base.input_features, &d.feature_names)?;
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(MlError::InvalidParameter(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    let mut model = base.clone();
    if steps == 0 {
        return Ok(model);
    }
    if d.rows.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    for _ in 0..steps {
        let (gw, gb) = mse_gradient(&model, d)?;
        for (w, g) in model.weights.iter_mut().zip(gw) {
            *w -= learning_rate * g;
        }
        model.bias -= learning_rate * gb;
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
}

pub fn evaluate(m: &LinearModel, d: &TabularDataset) -> Result<Metrics, MlError> {
    check_features(&m.input_features, &d.feature_names)?;
    if d.rows.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let n = d.rows.len() as f64;
    let (abs, sq) = d.rows.iter().fold((0.0, 0.0), |(abs, sq), (x, y)| {
        let r = dot(&m.weights, x) + m.bias - y;
        (abs + r.abs(), sq + r * r)
    });
    Ok(Metrics {
        mae: abs / n,
        mse: sq / n,
    })
}

/// 64-bit linear congruential generator (Knuth's MMIX constants).
///
/// `state <- state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`.
/// Uniform reals take the top 53 bits of the state.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
    pub const INCREMENT: u64 = 1_442_695_040_888_963_407;

    pub fn new(seed: u64) -> Self {
        let mut lcg = Self { state: seed };
        // Decorrelate small consecutive seeds.
        lcg.next_u64();
        lcg
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (one draw per call, second discarded).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Linear relation between a room's CO2 reading and its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomProfile {
    pub slope: f64,
    pub intercept: f64,
    /// Standard deviation of Gaussian target noise.
    pub noise_scale: f64,
}

/// Synthetic single-feature room dataset.
///
/// The `co2` feature is a centred, scaled reading drawn uniformly from
/// [-1, 1); the target is `slope * co2 + intercept + noise_scale * N(0, 1)`.
/// Values are quantized to their serialized precision so the dataset equals
/// its own parsed CSV.
pub fn make_synthetic_room(
    seed: u64,
    profile: RoomProfile,
    n_rows: usize,
) -> Result<TabularDataset, MlError> {
    if n_rows == 0 {
        return Err(MlError::InvalidParameter("n_rows must be at least 1".into()));
    }
    if profile.noise_scale.is_nan() || profile.noise_scale < 0.0 {
        return Err(MlError::InvalidParameter("noise_scale must be non-negative".into()));
    }
    let mut rng = Lcg64::new(seed);
    let rows = (0..n_rows)
        .map(|_| {
            let x = quantize(2.0 * rng.next_f64() - 1.0);
            let noise = if profile.noise_scale > 0.0 {
                profile.noise_scale * rng.next_gaussian()
            } else {
                0.0
            };
            (vec![x], quantize(profile.slope * x + profile.intercept + noise))
        })
        .collect();
    TabularDataset::new(vec!["co2".to_owned()], rows)
}
