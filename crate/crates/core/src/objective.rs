//! Soft modularity, the balance regularizer and the training loss.
//!
//! `Q(U) = tr(Uᵀ B U) / ‖A‖₁` is the positive-modularity quantity; the
//! associative loss minimizes `−Q + λR`, the disassociative one `Q + λR`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Matrix, Mode};

/// Row sums of a soft assignment may deviate from 1 by at most this much.
pub const STOCHASTIC_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    /// Cluster masses are divided by `N` before comparing with `1/C`.
    #[default]
    Normalized,
    /// Raw cluster masses `Σ_n U_nc` are compared with `1/C`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub clusters: usize,
    #[serde(default)]
    pub reg_mode: RegMode,
}

impl LossConfig {
    pub fn new(mode: Mode, clusters: usize) -> Self {
        LossConfig { mode, lambda: 0.5, clusters, reg_mode: RegMode::Normalized }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.clusters == 0 {
            return Err(Error::InvalidParameter("clusters must be positive".into()));
        }
        Ok(())
    }
}

fn check_shape(g: &Graph, u: &Matrix) -> Result<()> {
    if u.nrows() != g.n() {
        return Err(Error::dims(format!("{} rows", g.n()), format!("{} rows", u.nrows())));
    }
    Ok(())
}

pub fn check_stochastic(u: &Matrix) -> Result<()> {
    for (i, row) in u.row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&x| x < -STOCHASTIC_TOL) {
            return Err(Error::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}

/// `tr(Uᵀ B U) / ‖A‖₁`, via the matrix-free modularity operator.
pub fn soft_modularity(g: &Graph, u: &Matrix) -> Result<f64> {
    check_shape(g, u)?;
    check_stochastic(u)?;
    if g.a1_norm() == 0.0 {
        return Err(Error::EmptyGraph);
    }
    trace_form(g, u)
}

fn trace_form(g: &Graph, u: &Matrix) -> Result<f64> {
    let bu = g.modularity_matrix_apply(u)?;
    Ok(u.dot(&bu) / g.a1_norm())
}

fn masses(u: &Matrix, reg_mode: RegMode) -> Vec<f64> {
    let scale = match reg_mode {
        RegMode::Normalized => 1.0 / u.nrows() as f64,
        RegMode::Literal => 1.0,
    };
    u.column_iter().map(|c| c.sum() * scale).collect()
}

/// `Σ_c (m_c − 1/C)²` with `m_c` the (normalized) mass of cluster `c`.
pub fn balance_regularizer(u: &Matrix, clusters: usize, reg_mode: RegMode) -> Result<f64> {
    if u.ncols() != clusters {
        return Err(Error::dims(format!("{clusters} columns"), format!("{} columns", u.ncols())));
    }
    let target = 1.0 / clusters as f64;
    Ok(masses(u, reg_mode).iter().map(|m| (m - target).powi(2)).sum())
}

/// Mode-signed soft modularity plus `λR`.
pub fn loss(g: &Graph, u: &Matrix, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let q = soft_modularity(g, u)?;
    let r = balance_regularizer(u, cfg.clusters, cfg.reg_mode)?;
    Ok(-cfg.mode.sign() * q + cfg.lambda * r)
}

/// Components of the loss, useful for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub modularity: f64,
    pub regularizer: f64,
    pub loss: f64,
}

/// Loss value and its gradient with respect to `U` in one pass.
///
/// Does not check row-stochasticity so that finite-difference probes may
/// perturb single entries.
pub fn loss_and_grad(g: &Graph, u: &Matrix, cfg: &LossConfig) -> Result<(LossParts, Matrix)> {
    check_shape(g, u)?;
    if u.ncols() != cfg.clusters {
        return Err(Error::dims(format!("{} columns", cfg.clusters), format!("{} columns", u.ncols())));
    }
    if g.a1_norm() == 0.0 {
        return Err(Error::EmptyGraph);
    }
    let n = u.nrows() as f64;
    let bu = g.modularity_matrix_apply(u)?;
    let q = u.dot(&bu) / g.a1_norm();
    let m = masses(u, cfg.reg_mode);
    let target = 1.0 / cfg.clusters as f64;
    let r: f64 = m.iter().map(|mc| (mc - target).powi(2)).sum();

    let sign = -cfg.mode.sign();
    let mut grad = bu * (2.0 * sign / g.a1_norm());
    let mass_scale = match cfg.reg_mode {
        RegMode::Normalized => 1.0 / n,
        RegMode::Literal => 1.0,
    };
    for (c, mc) in m.iter().enumerate() {
        let dr = cfg.lambda * 2.0 * (mc - target) * mass_scale;
        grad.column_mut(c).add_scalar_mut(dr);
    }
    let parts = LossParts { modularity: q, regularizer: r, loss: sign * q + cfg.lambda * r };
    Ok((parts, grad))
}

/// `∂loss/∂U`.
pub fn loss_grad_u(g: &Graph, u: &Matrix, cfg: &LossConfig) -> Result<Matrix> {
    cfg.validate()?;
    Ok(loss_and_grad(g, u, cfg)?.1)
}
