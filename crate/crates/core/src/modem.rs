//! OFDM modem: constellation mapping, unitary DFT pair, cyclic prefix framing.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Deserialize;

use crate::{Error, Result};

/// Modulation alphabet. PSK points sit on the unit circle in natural angular
/// order; QAM is square with unit average power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Psk(usize),
    Qam(usize),
}

impl Constellation {
    pub fn order(&self) -> usize {
        match *self {
            Constellation::Psk(m) | Constellation::Qam(m) => m,
        }
    }

    pub fn is_constant_modulus(&self) -> bool {
        match *self {
            Constellation::Psk(_) => true,
            Constellation::Qam(m) => m == 4,
        }
    }

    /// Average symbol energy; every supported alphabet is normalized to one.
    pub fn average_power(&self) -> f64 {
        1.0
    }

    fn qam_side(m: usize) -> Option<usize> {
        let side = (m as f64).sqrt().round() as usize;
        (side >= 2 && side * side == m).then_some(side)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Constellation::Psk(m) if m >= 2 => Ok(()),
            Constellation::Qam(m) if Self::qam_side(m).is_some() => Ok(()),
            other => Err(Error::Config(format!("unsupported constellation {other:?}"))),
        }
    }

    pub fn point(&self, index: usize) -> Result<Complex64> {
        let order = self.order();
        if index >= order {
            return Err(Error::SymbolIndex { index, order });
        }
        Ok(match *self {
            Constellation::Psk(m) => match (4 * index).checked_rem(m) {
                // exact axis points for quarter turns
                Some(0) => {
                    let quarter = 4 * index / m;
                    [
                        Complex64::new(1.0, 0.0),
                        Complex64::new(0.0, 1.0),
                        Complex64::new(-1.0, 0.0),
                        Complex64::new(0.0, -1.0),
                    ][quarter % 4]
                }
                _ => Complex64::from_polar(1.0, 2.0 * PI * index as f64 / m as f64),
            },
            Constellation::Qam(m) => {
                let side = Self::qam_side(m).ok_or_else(|| {
                    Error::Config(format!("QAM order {m} is not a square"))
                })?;
                let scale = (2.0 * ((side * side) as f64 - 1.0) / 3.0).sqrt();
                let level = |i: usize| (2 * i) as f64 - (side - 1) as f64;
                Complex64::new(level(index % side), level(index / side)) / scale
            }
        })
    }
}

impl std::str::FromStr for Constellation {
    type Err = Error;

    /// Parses `psk<M>` or `qam<M>`, e.g. `psk16`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown constellation `{s}`"));
        let c = if let Some(m) = s.strip_prefix("psk") {
            Constellation::Psk(m.parse().map_err(|_| bad())?)
        } else if let Some(m) = s.strip_prefix("qam") {
            Constellation::Qam(m.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        c.validate()?;
        Ok(c)
    }
}

/// Map symbol indices onto constellation points.
pub fn map_symbols(indices: &[usize], constellation: Constellation) -> Result<Vec<Complex64>> {
    constellation.validate()?;
    indices.iter().map(|&i| constellation.point(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubcarrierRole {
    Pilot,
    Data,
    Null,
}

/// Static OFDM dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Subcarrier count (power of two).
    pub n: usize,
    /// Cyclic prefix length in samples.
    pub n_g: usize,
    /// Blocks per frame.
    pub m: usize,
    /// Region count.
    pub q: usize,
    /// Nominal sample interval in seconds.
    pub t_s: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    pub constellation: Constellation,
    /// Role of every subcarrier index `0..n`.
    pub roles: Vec<SubcarrierRole>,
}

impl Default for SystemConfig {
    /// 512 tones, 64-sample prefix, 10 blocks, 4 regions, 100 ns sampling at
    /// 5 GHz, 16-PSK on every tone.
    fn default() -> Self {
        SystemConfig::new(512, 64, 10, 4).expect("reference dimensions are valid")
    }
}

impl SystemConfig {
    /// All-pilot configuration with 16-PSK, 100 ns sampling and a 5 GHz carrier.
    pub fn new(n: usize, n_g: usize, m: usize, q: usize) -> Result<Self> {
        let cfg = SystemConfig {
            n,
            n_g,
            m,
            q,
            t_s: 100e-9,
            f_c: 5e9,
            constellation: Constellation::Psk(16),
            roles: vec![SubcarrierRole::Pilot; n],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_nulls(mut self, nulls: &[usize]) -> Result<Self> {
        for &k in nulls {
            *self.roles.get_mut(k).ok_or_else(|| {
                Error::Config(format!("null subcarrier {k} outside 0..{}", self.n))
            })? = SubcarrierRole::Null;
        }
        Ok(self)
    }

    pub fn with_data(mut self, data: &[usize]) -> Result<Self> {
        for &k in data {
            let role = self.roles.get_mut(k).ok_or_else(|| {
                Error::Config(format!("data subcarrier {k} outside 0..{}", self.n))
            })?;
            if *role == SubcarrierRole::Null {
                return Err(Error::Config(format!("subcarrier {k} is both null and data")));
            }
            *role = SubcarrierRole::Data;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::Config(format!("n = {} is not a power of two >= 2", self.n)));
        }
        if self.q < 2 || self.q % 2 != 0 || self.n % self.q != 0 {
            return Err(Error::Config(format!(
                "q = {} must be even and divide n = {}",
                self.q, self.n
            )));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.roles.len() != self.n {
            return Err(Error::Config(format!(
                "{} subcarrier roles for n = {}",
                self.roles.len(),
                self.n
            )));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(Error::Config(format!("t_s = {} must be positive", self.t_s)));
        }
        self.constellation.validate()
    }

    /// Total block length `n + n_g`.
    pub fn n_b(&self) -> usize {
        self.n + self.n_g
    }

    /// Guard ratio `n_g / n`.
    pub fn g(&self) -> f64 {
        self.n_g as f64 / self.n as f64
    }

    pub fn frame_len(&self) -> usize {
        self.m * self.n_b()
    }

    pub fn is_null(&self, k: usize) -> bool {
        self.roles[k] == SubcarrierRole::Null
    }

    /// Block duration `n_b * t_s` in seconds.
    pub fn block_duration(&self) -> f64 {
        self.n_b() as f64 * self.t_s
    }
}

/// Row-major `rows x cols` complex matrix; rows are OFDM blocks, columns tones.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl BlockGrid {
    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        BlockGrid { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Length { expected: cols, actual: bad.len() });
        }
        Ok(BlockGrid { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.cols..(l + 1) * self.cols]
    }

    pub fn row_mut(&mut self, l: usize) -> &mut [Complex64] {
        &mut self.data[l * self.cols..(l + 1) * self.cols]
    }

    pub fn get(&self, l: usize, k: usize) -> Complex64 {
        self.data[l * self.cols + k]
    }

    pub fn set(&mut self, l: usize, k: usize, value: Complex64) {
        self.data[l * self.cols + k] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub(crate) fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::Config(format!(
                "grid is {}x{}, expected {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// One block of frequency-domain symbols `X_{l,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqBlock {
    pub index: usize,
    values: Vec<Complex64>,
}

impl FreqBlock {
    /// Fails if the length is not `n`, the index is outside the frame, or a
    /// null subcarrier carries energy.
    pub fn new(index: usize, values: Vec<Complex64>, cfg: &SystemConfig) -> Result<Self> {
        if values.len() != cfg.n {
            return Err(Error::Length { expected: cfg.n, actual: values.len() });
        }
        if index >= cfg.m {
            return Err(Error::Config(format!("block index {index} outside 0..{}", cfg.m)));
        }
        if let Some(k) = (0..cfg.n).find(|&k| cfg.is_null(k) && values[k] != Complex64::default())
        {
            return Err(Error::Config(format!("null subcarrier {k} is not zero")));
        }
        Ok(FreqBlock { index, values })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Nominal-rate samples of a whole frame, `m * (n + n_g)` long.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    samples: Vec<Complex64>,
}

impl TimeFrame {
    pub fn new(samples: Vec<Complex64>, cfg: &SystemConfig) -> Result<Self> {
        if samples.len() != cfg.frame_len() {
            return Err(Error::Length { expected: cfg.frame_len(), actual: samples.len() });
        }
        Ok(TimeFrame { samples })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT scaled by `1/sqrt(n)`.
pub fn dft_unitary(buf: &mut [Complex64]) {
    let n = buf.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n)).process(buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// In-place inverse DFT scaled by `1/sqrt(n)`.
pub fn idft_unitary(buf: &mut [Complex64]) {
    let n = buf.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n)).process(buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// Unnormalized forward DFT of `input` zero-padded to `n` points.
pub fn dft_padded(input: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); n];
    buf[..input.len()].copy_from_slice(input);
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n)).process(&mut buf);
    buf
}

/// IDFT of one block followed by its cyclic prefix; `n + n_g` samples.
pub fn modulate_block(freq: &FreqBlock, cfg: &SystemConfig) -> Vec<Complex64> {
    let mut body = freq.values.clone();
    idft_unitary(&mut body);
    let mut out = Vec::with_capacity(cfg.n_b());
    out.extend_from_slice(&body[cfg.n - cfg.n_g..]);
    out.extend_from_slice(&body);
    out
}

/// Drop the cyclic prefix and return the unitary DFT of the block body.
pub fn demodulate_block(samples: &[Complex64], cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    if samples.len() != cfg.n_b() {
        return Err(Error::Length { expected: cfg.n_b(), actual: samples.len() });
    }
    let mut body = samples[cfg.n_g..].to_vec();
    dft_unitary(&mut body);
    Ok(body)
}

/// Concatenate the modulated blocks of an `m x n` symbol grid.
pub fn modulate_frame(grid: &BlockGrid, cfg: &SystemConfig) -> Result<TimeFrame> {
    grid.check_dims(cfg.m, cfg.n)?;
    let mut samples = Vec::with_capacity(cfg.frame_len());
    for l in 0..cfg.m {
        let block = FreqBlock::new(l, grid.row(l).to_vec(), cfg)?;
        samples.extend(modulate_block(&block, cfg));
    }
    TimeFrame::new(samples, cfg)
}

pub fn demodulate_frame(frame: &TimeFrame, cfg: &SystemConfig) -> Result<BlockGrid> {
    let rows = frame
        .samples
        .chunks_exact(cfg.n_b())
        .map(|block| demodulate_block(block, cfg))
        .collect::<Result<Vec<_>>>()?;
    BlockGrid::from_rows(rows)
}
