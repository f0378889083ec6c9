//! Seeded Monte-Carlo runs producing MSE-versus-SNR (or versus a swept
//! parameter) tables.
//!
//! Every trial draws its symbols, channel, noise and CSI error from seeds
//! derived from `(master seed, trial index, stream)`. The SNR point and the
//! swept value do not enter the derivation, so all points of a sweep see the
//! same underlying draws and differ only in the quantity being varied.

mod csv;
mod scenario;

pub use csv::{emit_csv, read_csv, to_csv_string, CSV_HEADER};
pub use scenario::parse_scenario;

use crate::channel::{self, ChannelRealization, ImpairmentParams};
use crate::estimator::{self, WeightMode};
use crate::modem::{self, BlockGrid, SystemConfig};
use crate::seed::{self, stream};
use crate::variance::{self, ToneTable};
use crate::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    /// Unit gain on every tone.
    Flat,
    /// Static Rayleigh taps with the exponential profile.
    Multipath { taps: usize },
    /// Time-varying Rayleigh taps for a terminal moving at `speed_kmh`.
    Mobility { taps: usize, speed_kmh: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsiKind {
    Genie,
    /// Receiver CSI `sqrt(1-k^2) H + k J`.
    Perturbed(f64),
    /// Block-0 transfer function reused for the whole frame.
    Stale,
}

/// Synthesis path for the received grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Freq,
    Time,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Freq => "freq",
            Model::Time => "time",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freq" => Ok(Model::Freq),
            "time" => Ok(Model::Time),
            other => Err(Error::Scenario(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub epsilon: f64,
    pub eta: f64,
    /// Sorted SNR points in dB; `inf` means noiseless.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub channel: ChannelKind,
    pub csi: CsiKind,
    pub mode: WeightMode,
    pub model: Model,
    pub seed: u64,
}

impl Default for Scenario {
    /// Reference experiment: 32-tap multipath, genie CSI, weighted combining,
    /// `eps = 0.02`, `eta = 5e-5`, SNR 0..30 dB in 5 dB steps, 2000 trials.
    fn default() -> Self {
        Scenario {
            cfg: SystemConfig::default(),
            epsilon: 0.02,
            eta: 5e-5,
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            trials: 2000,
            channel: ChannelKind::Multipath { taps: 32 },
            csi: CsiKind::Genie,
            mode: WeightMode::Weighted,
            model: Model::Freq,
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.trials == 0 {
            return Err(Error::Scenario("trials must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Scenario("no SNR points".into()));
        }
        if self.snr_db.iter().any(|v| v.is_nan()) || self.snr_db.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Scenario("SNR points must be sorted ascending".into()));
        }
        if let CsiKind::Perturbed(k) = self.csi {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::Scenario(format!("kappa = {k} outside [0, 1]")));
            }
        }
        if let ChannelKind::Mobility { speed_kmh, .. } = self.channel {
            if !(speed_kmh >= 0.0 && speed_kmh.is_finite()) {
                return Err(Error::Scenario(format!("speed {speed_kmh} km/h is invalid")));
            }
        }
        ImpairmentParams::new(self.epsilon, self.eta, 0.0, 0).validate(&self.cfg)
    }

    /// Ensemble per-tone channel power.
    pub fn channel_power(&self) -> f64 {
        match self.channel {
            ChannelKind::Flat => 1.0,
            ChannelKind::Multipath { taps } | ChannelKind::Mobility { taps, .. } => {
                channel::profile_power(taps)
            }
        }
    }

    /// Noise variance giving `SNR = sigma_S^2 sigma_H^2 / sigma_W^2`.
    pub fn noise_var(&self, snr_db: f64) -> f64 {
        let snr = 10f64.powf(snr_db / 10.0);
        self.cfg.constellation.average_power() * self.channel_power() / snr
    }
}

/// Aggregate over the trials of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub snr_db: f64,
    pub mse_eta: f64,
    pub mse_eps: f64,
    pub bias_eta: f64,
    pub bias_eps: f64,
    pub var_eta_pred: f64,
    pub var_eps_pred: f64,
    /// Trials that produced an estimate.
    pub trials: usize,
    /// Trials the estimator rejected; excluded from the statistics.
    /// Not stored in the CSV.
    pub rejected: usize,
    pub mode: WeightMode,
    /// Swept parameter name and value, if any.
    pub key: Option<(String, f64)>,
}

struct Trial {
    err_eta: f64,
    err_eps: f64,
    pred: Option<(f64, f64)>,
}

fn draw_symbols(cfg: &SystemConfig, seed: u64) -> Result<BlockGrid> {
    let mut rng = seed::rng(seed);
    let order = cfg.constellation.order();
    let mut grid = BlockGrid::zeros(cfg.m, cfg.n);
    for l in 0..cfg.m {
        for k in 0..cfg.n {
            if !cfg.is_null(k) {
                grid.set(l, k, cfg.constellation.point(rng.random_range(0..order))?);
            }
        }
    }
    Ok(grid)
}

fn draw_channel(s: &Scenario, seed: u64) -> Result<ChannelRealization> {
    match s.channel {
        ChannelKind::Flat => Ok(ChannelRealization::flat(&s.cfg)),
        ChannelKind::Multipath { taps } => channel::generate_taps(&s.cfg, taps, 0.0, seed),
        ChannelKind::Mobility { taps, speed_kmh } => channel::generate_taps(
            &s.cfg,
            taps,
            channel::doppler_hz(speed_kmh, s.cfg.f_c),
            seed,
        ),
    }
}

fn predicts_closed_form(s: &Scenario) -> bool {
    s.channel == ChannelKind::Flat && s.cfg.constellation.is_constant_modulus()
}

/// One trial; `Ok(None)` when the estimator rejects the draw.
fn run_trial(s: &Scenario, trial: u64, noise_var: f64) -> Result<Option<Trial>> {
    let cfg = &s.cfg;
    let sub = |tag| seed::derive(s.seed, &[trial, tag]);
    let symbols = draw_symbols(cfg, sub(stream::SYMBOLS))?;
    let chan = draw_channel(s, sub(stream::CHANNEL))?;
    let imp = ImpairmentParams::new(s.epsilon, s.eta, noise_var, sub(stream::NOISE));
    let grid = match s.model {
        Model::Freq => channel::apply_impairments_freq(&symbols, &chan, &imp, cfg)?,
        Model::Time => {
            let tx = modem::modulate_frame(&symbols, cfg)?;
            let mut rx = channel::apply_impairments_time(&tx, &chan, &imp, cfg)?;
            channel::add_awgn(rx.samples_mut(), noise_var, imp.seed);
            modem::demodulate_frame(&rx, cfg)?
        }
    };
    let csi = match s.csi {
        CsiKind::Genie => chan.ctf.clone(),
        CsiKind::Perturbed(kappa) => channel::perturb_csi(&chan, kappa, sub(stream::CSI))?,
        CsiKind::Stale => chan.stale_ctf(),
    };
    let report = match estimator::estimate(&grid, &csi, &symbols, cfg, s.mode, noise_var) {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };
    let pred = if noise_var > 0.0 && !predicts_closed_form(s) {
        let plan = estimator::plan_regions(cfg)?;
        ToneTable::from_grids(&symbols, &chan.ctf, &plan, noise_var)
            .and_then(|t| variance::var_general(&t, cfg, s.mode))
            .ok()
            .map(|v| (v.var_eta, v.var_eps))
    } else {
        None
    };
    Ok(Some(Trial {
        err_eta: report.eta_hat - s.eta,
        err_eps: report.eps_hat - s.epsilon,
        pred,
    }))
}

fn run_point(s: &Scenario, snr_db: f64) -> Result<MseRow> {
    let noise_var = s.noise_var(snr_db);
    let (mut se_eta, mut se_eps, mut sum_eta, mut sum_eps) = (0.0, 0.0, 0.0, 0.0);
    let (mut pred_eta, mut pred_eps, mut pred_count) = (0.0, 0.0, 0usize);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    for trial in 0..s.trials as u64 {
        match run_trial(s, trial, noise_var)? {
            Some(t) => {
                accepted += 1;
                sum_eta += t.err_eta;
                sum_eps += t.err_eps;
                se_eta += t.err_eta * t.err_eta;
                se_eps += t.err_eps * t.err_eps;
                if let Some((a, b)) = t.pred {
                    pred_eta += a;
                    pred_eps += b;
                    pred_count += 1;
                }
            }
            None => rejected += 1,
        }
    }
    let (var_eta_pred, var_eps_pred) = if noise_var == 0.0 {
        (0.0, 0.0)
    } else if predicts_closed_form(s) {
        let v = variance::var_a1a2a3(&s.cfg, 10f64.powf(snr_db / 10.0))?;
        (v.var_eta, v.var_eps)
    } else if pred_count > 0 {
        (pred_eta / pred_count as f64, pred_eps / pred_count as f64)
    } else {
        (f64::NAN, f64::NAN)
    };
    let n = accepted as f64;
    Ok(MseRow {
        snr_db,
        mse_eta: se_eta / n,
        mse_eps: se_eps / n,
        bias_eta: sum_eta / n,
        bias_eps: sum_eps / n,
        var_eta_pred,
        var_eps_pred,
        trials: accepted,
        rejected,
        mode: s.mode,
        key: None,
    })
}

/// One row per SNR point, in SNR order.
pub fn run_scenario(s: &Scenario) -> Result<Vec<MseRow>> {
    s.validate()?;
    s.snr_db.iter().map(|&snr| run_point(s, snr)).collect()
}

fn sweep(
    base: &Scenario,
    name: &str,
    values: &[f64],
    apply: impl Fn(&mut Scenario, f64),
) -> Result<Vec<MseRow>> {
    if values.is_empty() {
        return Err(Error::Scenario(format!("empty {name} sweep")));
    }
    let mut rows = Vec::new();
    for &v in values {
        let mut s = base.clone();
        apply(&mut s, v);
        for mut row in run_scenario(&s)? {
            row.key = Some((name.to_string(), v));
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn sweep_eta(s: &Scenario, etas: &[f64]) -> Result<Vec<MseRow>> {
    sweep(s, "eta", etas, |s, v| s.eta = v)
}

pub fn sweep_eps(s: &Scenario, epsilons: &[f64]) -> Result<Vec<MseRow>> {
    sweep(s, "eps", epsilons, |s, v| s.epsilon = v)
}

/// Perturbed CSI at each accuracy level.
pub fn sweep_kappa(s: &Scenario, kappas: &[f64]) -> Result<Vec<MseRow>> {
    sweep(s, "kappa", kappas, |s, v| s.csi = CsiKind::Perturbed(v))
}

/// Time-varying channel with block-0 CSI reused for the frame.
pub fn sweep_mobility(s: &Scenario, speeds_kmh: &[f64]) -> Result<Vec<MseRow>> {
    let taps = match s.channel {
        ChannelKind::Multipath { taps } | ChannelKind::Mobility { taps, .. } => taps,
        ChannelKind::Flat => {
            return Err(Error::Scenario("mobility sweep needs a multipath channel".into()))
        }
    };
    sweep(s, "speed_kmh", speeds_kmh, |s, v| {
        s.channel = ChannelKind::Mobility { taps, speed_kmh: v };
        s.csi = CsiKind::Stale;
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            cfg: SystemConfig::new(64, 8, 4, 2).unwrap(),
            snr_db: vec![10.0, 20.0],
            trials: 50,
            channel: ChannelKind::Multipath { taps: 8 },
            ..Scenario::default()
        }
    }

    #[test]
    fn validation() {
        assert!(Scenario::default().validate().is_ok());
        let mut s = small();
        s.trials = 0;
        assert!(s.validate().is_err());
        let mut s = small();
        s.snr_db = vec![20.0, 10.0];
        assert!(s.validate().is_err());
        let mut s = small();
        s.snr_db.clear();
        assert!(s.validate().is_err());
        let mut s = small();
        s.epsilon = 0.3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn noise_variance_uses_ensemble_channel_power() {
        let s = Scenario::default();
        let nv = s.noise_var(20.0);
        assert!((nv - channel::profile_power(32) / 100.0).abs() < 1e-15);
        let flat = Scenario { channel: ChannelKind::Flat, ..Scenario::default() };
        assert!((flat.noise_var(20.0) - 0.01).abs() < 1e-15);
        assert_eq!(flat.noise_var(f64::INFINITY), 0.0);
    }

    #[test]
    fn noiseless_is_exact() {
        let s = Scenario {
            snr_db: vec![f64::INFINITY],
            mode: WeightMode::Simplified,
            trials: 20,
            ..small()
        };
        let rows = run_scenario(&s).unwrap();
        assert_eq!(rows[0].trials, 20);
        assert!(rows[0].mse_eta < 1e-18 && rows[0].mse_eps < 1e-18);
    }

    #[test]
    fn weighted_without_noise_is_rejected_and_counted() {
        let s = Scenario { snr_db: vec![f64::INFINITY], trials: 5, ..small() };
        let rows = run_scenario(&s).unwrap();
        assert_eq!((rows[0].trials, rows[0].rejected), (0, 5));
    }

    #[test]
    fn rows_are_reproducible() {
        let s = small();
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
        let other = Scenario { seed: 2, ..small() };
        assert_ne!(run_scenario(&s).unwrap(), run_scenario(&other).unwrap());
    }

    #[test]
    fn mse_covers_squared_bias() {
        for row in run_scenario(&small()).unwrap() {
            assert!(row.mse_eta >= row.bias_eta * row.bias_eta);
            assert!(row.mse_eps >= row.bias_eps * row.bias_eps);
            assert!(row.var_eta_pred.is_finite() && row.var_eta_pred > 0.0);
        }
    }

    #[test]
    fn zero_kappa_matches_genie() {
        let s = small();
        let genie = run_scenario(&s).unwrap();
        let swept = sweep_kappa(&s, &[0.0]).unwrap();
        for (a, b) in genie.iter().zip(&swept) {
            assert_eq!(b.key, Some(("kappa".to_string(), 0.0)));
            assert_eq!((a.mse_eta, a.mse_eps), (b.mse_eta, b.mse_eps));
        }
    }

    #[test]
    fn zero_speed_matches_static() {
        let s = small();
        let fixed = run_scenario(&s).unwrap();
        let swept = sweep_mobility(&s, &[0.0]).unwrap();
        for (a, b) in fixed.iter().zip(&swept) {
            assert_eq!((a.mse_eta, a.mse_eps), (b.mse_eta, b.mse_eps));
        }
        let flat = Scenario { channel: ChannelKind::Flat, ..small() };
        assert!(sweep_mobility(&flat, &[0.0]).is_err());
    }

    #[test]
    fn eta_sweep_zero_point_is_finite() {
        let s = Scenario { snr_db: vec![20.0], ..small() };
        let rows = sweep_eta(&s, &[-1e-4, 0.0, 1e-4]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.mse_eta.is_finite() && r.rejected == 0));
        assert_eq!(rows, sweep_eta(&s, &[-1e-4, 0.0, 1e-4]).unwrap());
        let rows = sweep_eps(&s, &[0.0]).unwrap();
        assert!(rows[0].mse_eps.is_finite());
        assert!(sweep_eps(&s, &[]).is_err());
    }

    #[test]
    fn time_model_runs() {
        let s = Scenario { model: Model::Time, trials: 5, snr_db: vec![20.0], ..small() };
        let rows = run_scenario(&s).unwrap();
        assert_eq!(rows[0].trials, 5);
        assert!(rows[0].mse_eta.is_finite());
    }

    #[test]
    fn standard_error_shrinks_with_trials() {
        // spread of the MSE estimate over independent runs
        let base = Scenario {
            channel: ChannelKind::Flat,
            snr_db: vec![10.0],
            mode: WeightMode::Simplified,
            ..small()
        };
        let spread = |trials: usize| {
            let vals: Vec<f64> = (0..300)
                .map(|seed| {
                    let s = Scenario { trials, seed, ..base.clone() };
                    run_scenario(&s).unwrap()[0].mse_eta
                })
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let ratio = spread(40) / spread(20);
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.2 * std::f64::consts::FRAC_1_SQRT_2, "{ratio}");
    }
}
