//! TOML scenario files. Every key is optional and falls back to the
//! reference experiment; unknown keys are rejected.
//!
//! ```toml
//! channel = "flat"
//! csi = "genie"
//! snr_db = [0.0, 10.0, 20.0, inf]
//! trials = 500
//! mode = "simplified"
//! ```

use serde::Deserialize;

use super::{ChannelKind, CsiKind, Scenario};
use crate::modem::SystemConfig;
use crate::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n: Option<usize>,
    n_g: Option<usize>,
    m: Option<usize>,
    q: Option<usize>,
    t_s: Option<f64>,
    f_c: Option<f64>,
    constellation: Option<String>,
    #[serde(default)]
    nulls: Vec<usize>,
    #[serde(default)]
    data: Vec<usize>,
    epsilon: Option<f64>,
    eta: Option<f64>,
    snr_db: Option<Vec<f64>>,
    trials: Option<usize>,
    channel: Option<String>,
    taps: Option<usize>,
    speed_kmh: Option<f64>,
    csi: Option<String>,
    kappa: Option<f64>,
    mode: Option<String>,
    model: Option<String>,
    seed: Option<u64>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
    let base = Scenario::default();
    let d = &base.cfg;
    let mut cfg = SystemConfig::new(
        f.n.unwrap_or(d.n),
        f.n_g.unwrap_or(d.n_g),
        f.m.unwrap_or(d.m),
        f.q.unwrap_or(d.q),
    )?
    .with_nulls(&f.nulls)?
    .with_data(&f.data)?;
    cfg.t_s = f.t_s.unwrap_or(d.t_s);
    cfg.f_c = f.f_c.unwrap_or(d.f_c);
    if let Some(c) = &f.constellation {
        cfg.constellation = c.parse()?;
    }
    cfg.validate()?;

    let taps = f.taps.unwrap_or(32);
    let channel = match f.channel.as_deref() {
        None | Some("multipath") => match f.speed_kmh {
            Some(speed_kmh) => ChannelKind::Mobility { taps, speed_kmh },
            None => ChannelKind::Multipath { taps },
        },
        Some("flat") => ChannelKind::Flat,
        Some(other) => return Err(Error::Scenario(format!("unknown channel `{other}`"))),
    };
    let csi = match f.csi.as_deref() {
        None | Some("genie") => CsiKind::Genie,
        Some("perturbed") => CsiKind::Perturbed(
            f.kappa
                .ok_or_else(|| Error::Scenario("csi = \"perturbed\" needs kappa".into()))?,
        ),
        Some("stale") => CsiKind::Stale,
        Some(other) => return Err(Error::Scenario(format!("unknown csi `{other}`"))),
    };
    let s = Scenario {
        cfg,
        epsilon: f.epsilon.unwrap_or(base.epsilon),
        eta: f.eta.unwrap_or(base.eta),
        snr_db: f.snr_db.unwrap_or(base.snr_db),
        trials: f.trials.unwrap_or(base.trials),
        channel,
        csi,
        mode: match &f.mode {
            Some(m) => m.parse()?,
            None => base.mode,
        },
        model: match &f.model {
            Some(m) => m.parse()?,
            None => base.model,
        },
        seed: f.seed.unwrap_or(base.seed),
    };
    s.validate()?;
    Ok(s)
}
