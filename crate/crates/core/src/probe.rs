//! Standardize-then-classify linear probes.
//!
//! The probe minimizes
//!
//! ```text
//! J(w, b) = C * sum_i log(1 + exp(-z_i * (w . x~_i + b))) + 0.5 * |w|^2
//! ```
//!
//! over standardized features `x~`, with `z_i = 2 y_i - 1` and an
//! unregularized bias. `C` scales the data term, so small `C` means strong
//! regularization. The solver is damped Newton with an Armijo backtracking
//! line search; when the Hessian cannot be factored it takes a
//! steepest-descent step instead. Every accepted step is non-increasing in
//! `J` and the whole fit is deterministic.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

pub const DEFAULT_REG_C: f64 = 0.01;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Logistic function, evaluated without overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Inverse of [`sigmoid`]. Inputs are clamped to `[1e-12, 1 - 1e-12]` first,
/// so the result is always finite.
pub fn logit(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("logit of {p}: not a probability")));
    }
    let p = clamp_probability(p);
    Ok(p.ln() - (-p).ln_1p())
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Per-column population std; zero-variance columns get 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("cannot standardize zero rows".into()));
        }
        let p = rows[0].as_ref().len();
        check_rows(rows, p)?;

        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut var = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n as f64).sqrt();
                // rounding residue on a constant column counts as zero variance
                if sd <= 1e-12 * (1.0 + m.abs()) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    /// Pass-through standardizer of width `p`.
    pub fn identity(p: usize) -> Self {
        Standardizer {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.transform_into(x, &mut out)?;
        Ok(out)
    }

    pub fn transform_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.len() || out.len() != self.len() {
            return Err(Error::Dimension(format!(
                "standardizer width {} vs input {}",
                self.len(),
                x.len()
            )));
        }
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
        Ok(())
    }
}

fn check_rows<R: AsRef<[f64]>>(rows: &[R], p: usize) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != p {
            return Err(Error::Dimension(format!(
                "row {i} has {} features, expected {p}",
                r.len()
            )));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub reg_c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            reg_c: DEFAULT_REG_C,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_c > 0.0 && self.reg_c.is_finite()) {
            return Err(Error::Config(format!("reg_c must be > 0, got {}", self.reg_c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start and after every accepted step.
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg_c: f64,
}

impl ProbeModel {
    /// All-zero model of width `p`; predicts 0.5 everywhere.
    pub fn zero(p: usize, reg_c: f64) -> Self {
        ProbeModel {
            standardizer: Standardizer::identity(p),
            weights: vec![0.0; p],
            bias: 0.0,
            reg_c,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    /// Linear score `w . standardize(x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "probe expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut z = self.bias;
        for ((v, m), (s, w)) in x
            .iter()
            .zip(&self.standardizer.mean)
            .zip(self.standardizer.scale.iter().zip(&self.weights))
        {
            z += w * ((v - m) / s);
        }
        Ok(z)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: j });
        }
        Ok(clamp_probability(sigmoid(self.decision(x)?)))
    }
}

/// The probe objective over already-standardized rows, exposed so callers
/// can check the solver against independent derivatives.
pub struct LogisticObjective<'a> {
    x: &'a [f64],
    y: &'a [bool],
    p: usize,
    reg_c: f64,
}

impl<'a> LogisticObjective<'a> {
    /// `x` is row-major `n x p`.
    pub fn new(x: &'a [f64], y: &'a [bool], p: usize, reg_c: f64) -> Result<Self> {
        if x.len() != y.len() * p {
            return Err(Error::Dimension(format!(
                "{} values for {} rows of width {p}",
                x.len(),
                y.len()
            )));
        }
        Ok(LogisticObjective { x, y, p, reg_c })
    }

    pub fn dim(&self) -> usize {
        self.p + 1
    }

    fn margin(&self, i: usize, theta: &[f64]) -> f64 {
        let row = &self.x[i * self.p..(i + 1) * self.p];
        row.iter().zip(&theta[..self.p]).map(|(a, b)| a * b).sum::<f64>() + theta[self.p]
    }

    /// `theta = [w; b]`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        let data: f64 = (0..self.y.len())
            .map(|i| {
                let m = self.margin(i, theta);
                softplus(if self.y[i] { -m } else { m })
            })
            .sum();
        let reg: f64 = theta[..self.p].iter().map(|w| w * w).sum();
        self.reg_c * data + 0.5 * reg
    }

    /// `value(to) - value(from)`, evaluated per row as
    /// `log1p(sigmoid(z) * expm1(z' - z))` so that changes far below the
    /// rounding unit of the objective keep their sign.
    pub fn change(&self, from: &[f64], to: &[f64]) -> f64 {
        let step: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
        let data: f64 = (0..self.y.len())
            .map(|i| {
                let sign = if self.y[i] { -1.0 } else { 1.0 };
                let z = sign * self.margin(i, from);
                let dz = sign * self.margin(i, &step);
                (sigmoid(z) * dz.exp_m1()).ln_1p()
            })
            .sum();
        let reg: f64 = (0..self.p)
            .map(|j| step[j] * (to[j] + from[j]))
            .sum();
        self.reg_c * data + 0.5 * reg
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; p + 1];
        for i in 0..self.y.len() {
            let r = sigmoid(self.margin(i, theta)) - if self.y[i] { 1.0 } else { 0.0 };
            let row = &self.x[i * p..(i + 1) * p];
            for (gj, xj) in g[..p].iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[p] += r;
        }
        for (gj, w) in g.iter_mut().zip(theta) {
            *gj *= self.reg_c;
            *gj += w;
        }
        g[p] -= theta[p]; // bias is unregularized
        g
    }

    /// Row-major `(p+1) x (p+1)` Hessian.
    pub fn hessian(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p;
        let k = p + 1;
        let mut h = vec![0.0; k * k];
        let mut aug = vec![1.0; k];
        for i in 0..self.y.len() {
            let s = sigmoid(self.margin(i, theta));
            let wgt = self.reg_c * s * (1.0 - s);
            aug[..p].copy_from_slice(&self.x[i * p..(i + 1) * p]);
            for a in 0..k {
                let wa = wgt * aug[a];
                for b in 0..=a {
                    h[a * k + b] += wa * aug[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[b * k + a] = h[a * k + b];
            }
        }
        for j in 0..p {
            h[j * k + j] += 1.0;
        }
        h
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `A x = b` for symmetric positive-definite `A` (row-major, k x k).
/// Returns `None` when a pivot is not safely positive.
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let max_diag = (0..k).map(|i| a[i * k + i].abs()).fold(0.0, f64::max);
    let floor = 1e-13 * max_diag.max(1e-300);
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for t in 0..j {
                s -= l[i * k + t] * l[j * k + t];
            }
            if i == j {
                if !(s > floor) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for t in 0..i {
            s -= l[i * k + t] * z[t];
        }
        z[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = z[i];
        for t in i + 1..k {
            s -= l[t * k + i] * x[t];
        }
        x[i] = s / l[i * k + i];
    }
    Some(x)
}

/// Fit standardizer and probe on `rows` with labels `y` (`true` = correct).
pub fn fit_probe<R: AsRef<[f64]>>(
    rows: &[R],
    y: &[bool],
    cfg: &ProbeConfig,
) -> Result<(ProbeModel, FitReport)> {
    check_training_set(rows, y)?;
    let standardizer = Standardizer::fit(rows)?;
    fit_probe_with_standardizer(standardizer, rows, y, cfg)
}

fn check_training_set<R: AsRef<[f64]>>(rows: &[R], y: &[bool]) -> Result<()> {
    if rows.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows vs {} labels",
            rows.len(),
            y.len()
        )));
    }
    if rows.len() < 2 {
        return Err(Error::Empty(format!(
            "probe needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass("training set".into()));
    }
    Ok(())
}

/// Fit a probe using a caller-supplied standardizer.
pub fn fit_probe_with_standardizer<R: AsRef<[f64]>>(
    standardizer: Standardizer,
    rows: &[R],
    y: &[bool],
    cfg: &ProbeConfig,
) -> Result<(ProbeModel, FitReport)> {
    cfg.validate()?;
    check_training_set(rows, y)?;
    let p = standardizer.len();
    check_rows(rows, p)?;

    let mut xs = vec![0.0; rows.len() * p];
    for (r, out) in rows.iter().zip(xs.chunks_mut(p.max(1))) {
        standardizer.transform_into(r.as_ref(), &mut out[..p])?;
    }
    let obj = LogisticObjective::new(&xs, y, p, cfg.reg_c)?;
    let (theta, report) = minimize(&obj, cfg);

    let model = ProbeModel {
        standardizer,
        weights: theta[..p].to_vec(),
        bias: theta[p],
        reg_c: cfg.reg_c,
    };
    Ok((model, report))
}

fn minimize(obj: &LogisticObjective<'_>, cfg: &ProbeConfig) -> (Vec<f64>, FitReport) {
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: usize = 60;

    let k = obj.dim();
    let mut theta = vec![0.0; k];
    let mut loss = obj.value(&theta);
    let mut grad = obj.gradient(&theta);
    let mut history = vec![loss];
    let mut iterations = 0;

    while iterations < cfg.max_iter && norm(&grad) > cfg.tol {
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let newton = cholesky_solve(&obj.hessian(&theta), &neg_grad, k);
        let dir = match newton {
            Some(d) if d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() < 0.0 => d,
            _ => neg_grad,
        };
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let delta = obj.change(&theta, &cand);
            if delta <= ARMIJO * step * slope {
                accepted = Some((cand, delta));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, delta)) = accepted else {
            break;
        };
        theta = cand;
        loss += delta;
        grad = obj.gradient(&theta);
        history.push(loss);
        iterations += 1;
    }

    let grad_norm = norm(&grad);
    let report = FitReport {
        final_loss: loss,
        grad_norm,
        iterations,
        converged: grad_norm <= cfg.tol,
        loss_history: history,
    };
    (theta, report)
}
