//! Pairwise-correlation estimator for residual carrier and sampling offsets.
//!
//! Subcarriers are split into `Q` contiguous regions. Inside region `q` the
//! tones `k1` (left half) and `k2` (right half) with `k1 + k2 = N_q` are
//! multiplied; their offset-induced phases add up to
//! `c_q [2 pi l (1+g) + 2 pi g + pi (N-1)/N]` with `c_q = 2 eps + eta N_q`,
//! independent of the tone indices. Stacking the products over the pair set
//! gives one phase per block and region. A line fit over the blocks yields
//! `c_q`, and a second line fit of `c_q` against `N_q` yields `(eta, eps)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Deserialize;

use crate::modem::{BlockGrid, SystemConfig};
use crate::{Error, Result};

/// Combining rule for the pairwise products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// SNR-aware weights; needs the noise variance.
    Weighted,
    /// Unit weights.
    Simplified,
}

impl WeightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightMode::Weighted => "weighted",
            WeightMode::Simplified => "simplified",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(WeightMode::Weighted),
            "simplified" => Ok(WeightMode::Simplified),
            other => Err(Error::Config(format!("unknown weight mode `{other}`"))),
        }
    }
}

/// Which stage-one coefficient feeds stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Basis {
    /// Block-to-block slope of the region phase.
    #[default]
    Slope,
    /// Phase at block zero.
    Intercept,
}

/// Region partition and mirrored pair sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPlan {
    pub q_count: usize,
    /// Half-open tone ranges, region `q` at index `q - 1`.
    pub regions: Vec<std::ops::Range<usize>>,
    /// Usable `(k1, k2)` pairs per region.
    pub pair_sets: Vec<Vec<(usize, usize)>>,
    /// `N_q = (2q - 1) N / Q`.
    pub n_q: Vec<usize>,
}

pub fn plan_regions(cfg: &SystemConfig) -> Result<RegionPlan> {
    let (n, q_count) = (cfg.n, cfg.q);
    if q_count < 2 || q_count % 2 != 0 || n % q_count != 0 {
        return Err(Error::Config(format!("q = {q_count} must be even and divide n = {n}")));
    }
    let width = n / q_count;
    let mut plan = RegionPlan {
        q_count,
        regions: Vec::with_capacity(q_count),
        pair_sets: Vec::with_capacity(q_count),
        n_q: Vec::with_capacity(q_count),
    };
    for q in 1..=q_count {
        let start = (q - 1) * width;
        let mid = start + width / 2;
        let end = q * width;
        let n_q = (n + 2 * n * (q - 1)) / q_count;
        let pairs: Vec<_> = (start..mid)
            .filter_map(|k1| {
                let k2 = n_q.checked_sub(k1)?;
                (mid <= k2 && k2 < end && !cfg.is_null(k1) && !cfg.is_null(k2))
                    .then_some((k1, k2))
            })
            .collect();
        if pairs.is_empty() {
            return Err(Error::EmptyPairSet { q });
        }
        plan.regions.push(start..end);
        plan.pair_sets.push(pairs);
        plan.n_q.push(n_q);
    }
    Ok(plan)
}

/// Plain product of two received tones; phases add.
#[inline]
pub fn pair_correlation(r1: Complex64, r2: Complex64) -> Complex64 {
    r1 * r2
}

/// Combining weight for one pair.
///
/// Weighted: `1 / (s2 * (x1_pow*h1_pow + x2_pow*h2_pow + s2))` with `s2` the
/// noise variance. Simplified: `1`.
pub fn weight(
    mode: WeightMode,
    x1_pow: f64,
    h1_pow: f64,
    x2_pow: f64,
    h2_pow: f64,
    noise_var: f64,
) -> Result<f64> {
    match mode {
        WeightMode::Simplified => Ok(1.0),
        WeightMode::Weighted => {
            if !(noise_var > 0.0) {
                return Err(Error::NoiseVariance(noise_var));
            }
            Ok(1.0 / (noise_var * ((x1_pow * h1_pow + x2_pow * h2_pow) + noise_var)))
        }
    }
}

/// Coherent sum `Z_l^q = sum V Gamma conj(lambda_hat)` over the pair set.
///
/// `lambda_hat = Xr(k1) Xr(k2) Hc(k1) Hc(k2)` uses the reference symbols
/// and the channel state handed in. Pairs with a zero `lambda_hat` are
/// skipped. Weights are divided by their maximum before summing, which
/// leaves the phase unchanged and makes equal weights exactly equivalent to
/// unit weights.
#[allow(clippy::too_many_arguments)]
pub fn stack_region(
    grid: &BlockGrid,
    csi: &BlockGrid,
    ref_symbols: &BlockGrid,
    plan: &RegionPlan,
    mode: WeightMode,
    noise_var: f64,
    symbol_power: Option<f64>,
    l: usize,
    q: usize,
) -> Result<Complex64> {
    let pairs = plan.pair_sets.get(q).ok_or(Error::EmptyPairSet { q: q + 1 })?;
    let (r, h, x) = (grid.row(l), csi.row(l), ref_symbols.row(l));
    let mut terms = Vec::with_capacity(pairs.len());
    let mut w_max = 0.0f64;
    for &(k1, k2) in pairs {
        let lam = x[k1] * x[k2] * h[k1] * h[k2];
        if lam == Complex64::default() {
            continue;
        }
        let xp = |k: usize| symbol_power.unwrap_or_else(|| x[k].norm_sqr());
        let w = weight(mode, xp(k1), h[k1].norm_sqr(), xp(k2), h[k2].norm_sqr(), noise_var)?;
        w_max = w_max.max(w);
        terms.push((pair_correlation(r[k1], r[k2]) * lam.conj(), w));
    }
    if w_max == 0.0 {
        return Ok(Complex64::default());
    }
    Ok(terms.iter().map(|&(t, w)| t * (w / w_max)).sum())
}

/// Principal arguments of `z[l][q]`, unwrapped along `l` per region so that
/// every successive difference lies in `(-pi, pi]`. Returns the phases and the
/// number of `2 pi` turns added to each entry.
pub fn extract_phases(z: &[Vec<Complex64>]) -> (Vec<Vec<f64>>, Vec<Vec<i64>>) {
    let m = z.len();
    let q_count = z.first().map_or(0, Vec::len);
    let mut theta = vec![vec![0.0; q_count]; m];
    let mut shifts = vec![vec![0i64; q_count]; m];
    for q in 0..q_count {
        for l in 0..m {
            let principal = z[l][q].arg();
            if l == 0 {
                theta[l][q] = principal;
                continue;
            }
            let diff = principal - theta[l - 1][q];
            let turns = ((diff - PI) / (2.0 * PI)).ceil() as i64;
            theta[l][q] = principal - 2.0 * PI * turns as f64;
            shifts[l][q] = -turns;
        }
    }
    (theta, shifts)
}

/// Ordinary least-squares line `y = slope * x + intercept`.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (sxy, sxx) = x.iter().zip(y).fold((0.0, 0.0), |(sxy, sxx), (&xi, &yi)| {
        (sxy + (xi - xm) * (yi - ym), sxx + (xi - xm) * (xi - xm))
    });
    let slope = sxy / sxx;
    (slope, ym - slope * xm)
}

/// Stage-one fit for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionFit {
    /// Phase increment per block.
    pub slope: f64,
    /// Phase at block zero.
    pub intercept: f64,
    /// `slope / (2 pi (1+g))`.
    pub c_slope: f64,
    /// `intercept / (2 pi g + pi (N-1)/N)`.
    pub c_intercept: f64,
}

impl RegionFit {
    pub fn c(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Slope => self.c_slope,
            Basis::Intercept => self.c_intercept,
        }
    }
}

/// Slope coefficient `2 pi (1 + g)` of the region phase model.
pub fn slope_coefficient(cfg: &SystemConfig) -> f64 {
    2.0 * PI * (1.0 + cfg.g())
}

/// Intercept coefficient `2 pi g + pi (N-1)/N` of the region phase model.
pub fn intercept_coefficient(cfg: &SystemConfig) -> f64 {
    let n = cfg.n as f64;
    2.0 * PI * cfg.g() + PI * (n - 1.0) / n
}

/// Fit `theta_l = a l + d` over the blocks of one region.
pub fn ls_stage1(theta_col: &[f64], cfg: &SystemConfig) -> Result<RegionFit> {
    if theta_col.len() < 2 {
        return Err(Error::TooFew { what: "blocks", needed: 2, got: theta_col.len() });
    }
    let blocks: Vec<f64> = (0..theta_col.len()).map(|l| l as f64).collect();
    let (slope, intercept) = fit_line(&blocks, theta_col);
    Ok(RegionFit {
        slope,
        intercept,
        c_slope: slope / slope_coefficient(cfg),
        c_intercept: intercept / intercept_coefficient(cfg),
    })
}

/// Least squares of `c_q = eta N_q + 2 eps`; returns `(eta, eps)`.
pub fn ls_stage2(c_hat: &[f64], plan: &RegionPlan) -> Result<(f64, f64)> {
    if c_hat.len() < 2 || plan.n_q.len() != c_hat.len() {
        return Err(Error::TooFew { what: "regions", needed: 2, got: c_hat.len() });
    }
    let n_q: Vec<f64> = plan.n_q.iter().map(|&v| v as f64).collect();
    let (eta, offset) = fit_line(&n_q, c_hat);
    Ok((eta, offset / 2.0))
}

/// Output of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub eps_hat: f64,
    pub eta_hat: f64,
    /// Stage-one coefficients that fed stage two, one per region.
    pub c_hat: Vec<f64>,
    /// Full stage-one fits, one per region.
    pub fits: Vec<RegionFit>,
    /// Unwrapped region phases, `theta_hat[l][q]`.
    pub theta_hat: Vec<Vec<f64>>,
    pub unwrap_shifts: Vec<Vec<i64>>,
    pub mode: WeightMode,
    pub used_intercept: bool,
    /// Least-squares fits performed (`Q` + 1).
    pub ls_fits: usize,
}

/// Full pipeline with the slope-based stage-one coefficient.
///
/// `csi` is the channel state the receiver believes (true, perturbed or
/// stale); `ref_symbols` holds pilot values, decided data, or zeros on null
/// tones.
pub fn estimate(
    grid: &BlockGrid,
    csi: &BlockGrid,
    ref_symbols: &BlockGrid,
    cfg: &SystemConfig,
    mode: WeightMode,
    noise_var: f64,
) -> Result<EstimateReport> {
    estimate_with_basis(grid, csi, ref_symbols, cfg, mode, noise_var, Basis::Slope)
}

pub fn estimate_with_basis(
    grid: &BlockGrid,
    csi: &BlockGrid,
    ref_symbols: &BlockGrid,
    cfg: &SystemConfig,
    mode: WeightMode,
    noise_var: f64,
    basis: Basis,
) -> Result<EstimateReport> {
    for g in [grid, csi, ref_symbols] {
        g.check_dims(cfg.m, cfg.n)?;
    }
    if cfg.m < 2 {
        return Err(Error::TooFew { what: "blocks", needed: 2, got: cfg.m });
    }
    let plan = plan_regions(cfg)?;
    // constant-modulus alphabets use the nominal symbol power in the weights
    let symbol_power =
        cfg.constellation.is_constant_modulus().then(|| cfg.constellation.average_power());
    let z = (0..cfg.m)
        .map(|l| {
            (0..cfg.q)
                .map(|q| {
                    stack_region(grid, csi, ref_symbols, &plan, mode, noise_var, symbol_power, l, q)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (theta_hat, unwrap_shifts) = extract_phases(&z);
    let fits = (0..cfg.q)
        .map(|q| {
            let col: Vec<f64> = theta_hat.iter().map(|row| row[q]).collect();
            ls_stage1(&col, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let c_hat: Vec<f64> = fits.iter().map(|f| f.c(basis)).collect();
    let (eta_hat, eps_hat) = ls_stage2(&c_hat, &plan)?;
    Ok(EstimateReport {
        eps_hat,
        eta_hat,
        c_hat,
        fits,
        theta_hat,
        unwrap_shifts,
        mode,
        used_intercept: basis == Basis::Intercept,
        ls_fits: cfg.q + 1,
    })
}
