//! Closed-form variance predictors for the estimator.
//!
//! Every pair `(k1, k2)` contributes two SNR-like quantities,
//! `phi_x = P1 P2 / s^4` and `phi_plus = (P1 + P2) / s^2` with
//! `P = |X|^2 |H|^2` and `s^2` the noise variance. They combine into the
//! per-block, per-region figure of merit `F_{l,q}`, which feeds the general
//! variance expressions. Flat fading, constant modulus and full pair sets
//! collapse those into the `*_a1a2a3` closed forms.

use std::f64::consts::PI;

use crate::estimator::{Basis, RegionPlan, WeightMode};
use crate::modem::{BlockGrid, SystemConfig};
use crate::{Error, Result};

/// SNR-like ratios of one tone pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSnr {
    pub phi_x: f64,
    pub phi_plus: f64,
}

impl ToneSnr {
    pub fn from_powers(p1: f64, p2: f64, noise_var: f64) -> Self {
        ToneSnr {
            phi_x: p1 * p2 / (noise_var * noise_var),
            phi_plus: (p1 + p2) / noise_var,
        }
    }
}

/// Pair ratios for every `(l, q)` cell, indexed `cells[l][q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneTable {
    pub cells: Vec<Vec<Vec<ToneSnr>>>,
}

impl ToneTable {
    /// Build from transmitted symbols, channel and noise variance.
    pub fn from_grids(
        symbols: &BlockGrid,
        ctf: &BlockGrid,
        plan: &RegionPlan,
        noise_var: f64,
    ) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::NoiseVariance(noise_var));
        }
        let cells = (0..symbols.rows())
            .map(|l| {
                plan.pair_sets
                    .iter()
                    .map(|pairs| {
                        let p = |k: usize| symbols.get(l, k).norm_sqr() * ctf.get(l, k).norm_sqr();
                        pairs
                            .iter()
                            .map(|&(k1, k2)| ToneSnr::from_powers(p(k1), p(k2), noise_var))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(ToneTable { cells })
    }

    /// Every cell holds `pairs` copies of the same ratios.
    pub fn uniform(m: usize, q: usize, pairs: usize, tone: ToneSnr) -> Self {
        ToneTable { cells: vec![vec![vec![tone; pairs]; q]; m] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumptions {
    General,
    A1A2A3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePrediction {
    pub var_eta: f64,
    pub var_eps: f64,
    pub mode: WeightMode,
    pub assumptions: Assumptions,
    pub basis: Basis,
}

/// Figure of merit `F_{l,q}` of one cell.
///
/// Weighted: `sum phi_x / (phi_plus + 1)`.
/// Simplified: `(sum phi_x)^2 / sum phi_x (phi_plus + 1)`.
pub fn f_lq(tones: &[ToneSnr], mode: WeightMode) -> Result<f64> {
    if tones.is_empty() {
        return Err(Error::TooFew { what: "tone pairs", needed: 1, got: 0 });
    }
    Ok(match mode {
        WeightMode::Weighted => tones.iter().map(|t| t.phi_x / (t.phi_plus + 1.0)).sum(),
        WeightMode::Simplified => {
            let s: f64 = tones.iter().map(|t| t.phi_x).sum();
            let d: f64 = tones.iter().map(|t| t.phi_x * (t.phi_plus + 1.0)).sum();
            s * s / d
        }
    })
}

/// `U_q = 16 N^2 (2q - Q - 1)^2` for `q` in `1..=Q`.
pub fn u_q(cfg: &SystemConfig, q: usize) -> f64 {
    let n = cfg.n as f64;
    16.0 * n * n * (2.0 * q as f64 - cfg.q as f64 - 1.0).powi(2)
}

/// `Y_q = 4 N^4 (2q - 1 - (4Q^2 - 1)/(3Q))^2` for `q` in `1..=Q`.
pub fn y_q(cfg: &SystemConfig, q: usize) -> f64 {
    let (n, qq) = (cfg.n as f64, cfg.q as f64);
    4.0 * n.powi(4) * (2.0 * q as f64 - 1.0 - (4.0 * qq * qq - 1.0) / (3.0 * qq)).powi(2)
}

/// General variances from a full tone table.
pub fn var_general(tones: &ToneTable, cfg: &SystemConfig, mode: WeightMode) -> Result<VariancePrediction> {
    let (m, q_count) = (cfg.m, cfg.q);
    if m < 2 {
        return Err(Error::TooFew { what: "blocks", needed: 2, got: m });
    }
    if q_count < 2 {
        return Err(Error::TooFew { what: "regions", needed: 2, got: q_count });
    }
    if tones.cells.len() != m || tones.cells.iter().any(|row| row.len() != q_count) {
        return Err(Error::Config(format!("tone table is not {m}x{q_count}")));
    }
    let (n, qq, mm, g) = (cfg.n as f64, q_count as f64, m as f64, cfg.g());
    let (mut num_eta, mut num_eps) = (0.0, 0.0);
    for q in 0..q_count {
        let mut inner = 0.0;
        for l in 0..m {
            let f = f_lq(&tones.cells[l][q], mode)?;
            if !(f > 0.0) {
                return Err(Error::Degenerate(format!("F = {f} in block {l}, region {}", q + 1)));
            }
            inner += (2.0 * l as f64 - mm + 1.0).powi(2) / f;
        }
        num_eta += u_q(cfg, q + 1) * inner;
        num_eps += y_q(cfg, q + 1) * inner;
    }
    let denom = 32.0
        * n.powi(4)
        * (qq * qq - 1.0).powi(2)
        * PI
        * PI
        * (1.0 + g).powi(2)
        * mm
        * mm
        * (mm * mm - 1.0).powi(2);
    Ok(VariancePrediction {
        var_eta: 81.0 * num_eta / denom,
        var_eps: 81.0 * num_eps / denom,
        mode,
        assumptions: Assumptions::General,
        basis: Basis::Slope,
    })
}

/// Closed forms under flat fading, constant modulus and full pair sets.
/// The two weight modes coincide there.
pub fn var_a1a2a3(cfg: &SystemConfig, snr: f64) -> Result<VariancePrediction> {
    if !(snr > 0.0) {
        return Err(Error::Config(format!("snr = {snr} must be positive")));
    }
    if cfg.m < 2 {
        return Err(Error::TooFew { what: "blocks", needed: 2, got: cfg.m });
    }
    if cfg.q < 2 {
        return Err(Error::TooFew { what: "regions", needed: 2, got: cfg.q });
    }
    let (n, q, m, g) = (cfg.n as f64, cfg.q as f64, cfg.m as f64, cfg.g());
    let common = PI * PI * (1.0 + g).powi(2) * m * (m + 1.0) * (m - 1.0) * (q * q - 1.0) * snr;
    Ok(VariancePrediction {
        var_eta: 18.0 * q * q / (common * n.powi(3)),
        var_eps: 6.0 * (4.0 * q * q - 1.0) / (4.0 * common * n),
        mode: WeightMode::Weighted,
        assumptions: Assumptions::A1A2A3,
        basis: Basis::Slope,
    })
}

/// Inflation `(8M - 4)(M - 1)(1 + g)^2 / (1 + 2g)^2` quoted for the
/// intercept-based stage-one coefficient.
pub fn intercept_factor(cfg: &SystemConfig) -> f64 {
    let (m, g) = (cfg.m as f64, cfg.g());
    (8.0 * m - 4.0) * (m - 1.0) * (1.0 + g).powi(2) / (1.0 + 2.0 * g).powi(2)
}

/// Rescale a slope-based prediction by [`intercept_factor`].
pub fn var_intercept(cfg: &SystemConfig, base: &VariancePrediction) -> VariancePrediction {
    let f = intercept_factor(cfg);
    VariancePrediction {
        var_eta: base.var_eta * f,
        var_eps: base.var_eps * f,
        basis: Basis::Intercept,
        ..*base
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingReport {
    pub f_weighted: f64,
    pub f_simplified: f64,
    /// `f_weighted - f_simplified`, evaluated as a sum of nonnegative
    /// pairwise terms so that it carries no cancellation error.
    pub gap: f64,
    /// Whether `phi_plus` is the same for every pair (to 1e-12 relative).
    pub phi_plus_constant: bool,
}

impl OrderingReport {
    /// Gap relative to the weighted figure.
    pub fn relative_gap(&self) -> f64 {
        self.gap / self.f_weighted
    }
}

/// Compare both figures of merit on one tone set.
pub fn check_cs_ordering(tones: &[ToneSnr]) -> Result<OrderingReport> {
    let f_weighted = f_lq(tones, WeightMode::Weighted)?;
    let f_simplified = f_lq(tones, WeightMode::Simplified)?;
    let first = tones[0].phi_plus;
    let phi_plus_constant =
        tones.iter().all(|t| (t.phi_plus - first).abs() <= 1e-12 * first.abs().max(1.0));
    // sum_{i<j} a_i a_j (c_i - c_j)^2 / (c_i c_j) / sum a c, a = phi_x, c = phi_plus + 1
    let c: Vec<f64> = tones.iter().map(|t| t.phi_plus + 1.0).collect();
    let mut spread = 0.0;
    for i in 0..tones.len() {
        for j in i + 1..tones.len() {
            let d = c[i] - c[j];
            spread += tones[i].phi_x * tones[j].phi_x * d * d / (c[i] * c[j]);
        }
    }
    let denom: f64 = tones.iter().zip(&c).map(|(t, c)| t.phi_x * c).sum();
    Ok(OrderingReport {
        f_weighted,
        f_simplified,
        gap: spread / denom,
        phi_plus_constant,
    })
}
