//! Rayleigh multipath channel, carrier/sampling offsets, and AWGN.
//!
//! Two synthesis paths produce the post-DFT grid `R_{l,k}`:
//!
//! * [`apply_impairments_freq`] writes the per-tone model directly: every tone
//!   is scaled by the channel and rotated by `pi*T(N-1)/N + 2*pi*(l*N_B+N_g)*T/N`
//!   with `T = eps + eta*k`. No inter-carrier interference.
//! * [`apply_impairments_time`] evaluates the continuous-time transmit
//!   waveform at the receiver's drifted sampling instants and applies the
//!   carrier offset there, so inter-carrier interference arises physically.
//!
//! `eps` is normalized to the subcarrier spacing `1/(N*T_s)` and `eta` is the
//! relative sampling-period error `(T_s' - T_s)/T_s`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::modem::{self, BlockGrid, SystemConfig, TimeFrame};
use crate::{seed, Error, Result};

/// Speed of light used for Doppler conversion, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Truth values injected into one scenario draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentParams {
    /// Residual carrier offset normalized to the subcarrier spacing.
    pub epsilon: f64,
    /// Relative sampling offset.
    pub eta: f64,
    /// Complex noise variance per sample (and per tone).
    pub noise_var: f64,
    pub seed: u64,
}

impl ImpairmentParams {
    pub fn new(epsilon: f64, eta: f64, noise_var: f64, seed: u64) -> Self {
        ImpairmentParams { epsilon, eta, noise_var, seed }
    }

    /// Carrier offset in Hz for this configuration.
    pub fn cfo_hz(&self, cfg: &SystemConfig) -> f64 {
        self.epsilon / (cfg.n as f64 * cfg.t_s)
    }

    /// Check the noise variance and that every region's block-to-block phase
    /// step stays below pi, i.e. `|2 eps + eta N_q| < 1/(2(1+g))`.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!("noise variance {} is invalid", self.noise_var)));
        }
        let limit = 1.0 / (2.0 * (1.0 + cfg.g()));
        for q in 1..=cfg.q {
            let n_q = ((2 * q - 1) * cfg.n / cfg.q) as f64;
            let c = 2.0 * self.epsilon + self.eta * n_q;
            if !(c.abs() < limit) {
                return Err(Error::Config(format!(
                    "offsets outside the unambiguous range in region {q}: \
                     |2eps + eta*N_q| = {} >= {limit}",
                    c.abs()
                )));
            }
        }
        Ok(())
    }
}

/// Per-block channel taps and the matching transfer function.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub l_taps: usize,
    /// `taps[l][ell]`: gain of path `ell` (delay `ell * T_s`) during block `l`.
    pub taps: Vec<Vec<Complex64>>,
    /// `ctf[l][k]`: unnormalized `n`-point DFT of `taps[l]`.
    pub ctf: BlockGrid,
}

impl ChannelRealization {
    /// Unit-gain single-tap channel (`H == 1` on every tone).
    pub fn flat(cfg: &SystemConfig) -> Self {
        ChannelRealization {
            l_taps: 1,
            taps: vec![vec![Complex64::new(1.0, 0.0)]; cfg.m],
            ctf: BlockGrid::filled(cfg.m, cfg.n, Complex64::new(1.0, 0.0)),
        }
    }

    pub fn from_taps(taps: Vec<Vec<Complex64>>, cfg: &SystemConfig) -> Result<Self> {
        if taps.len() != cfg.m {
            return Err(Error::Config(format!("{} tap rows for m = {}", taps.len(), cfg.m)));
        }
        let l_taps = taps[0].len();
        if l_taps == 0 || l_taps > cfg.n || taps.iter().any(|r| r.len() != l_taps) {
            return Err(Error::Config("tap rows must share a length in 1..=n".into()));
        }
        let rows = taps.iter().map(|r| modem::dft_padded(r, cfg.n)).collect();
        Ok(ChannelRealization { l_taps, taps, ctf: BlockGrid::from_rows(rows)? })
    }

    /// Transfer function as seen by a receiver that only knows block 0.
    pub fn stale_ctf(&self) -> BlockGrid {
        let mut out = self.ctf.clone();
        let first = self.ctf.row(0).to_vec();
        for l in 1..out.rows() {
            out.row_mut(l).copy_from_slice(&first);
        }
        out
    }
}

/// Mean tap powers `exp(-ell/L) / sum_ell exp(-2 ell/L)`.
///
/// The denominator squares the decaying terms, so the total power is not one
/// (about 1.44 for `L = 32`); SNR bookkeeping uses [`profile_power`].
pub fn exponential_profile(l_taps: usize) -> Vec<f64> {
    let l = l_taps as f64;
    let denom: f64 = (0..l_taps).map(|i| (-(i as f64) / l).exp().powi(2)).sum();
    (0..l_taps).map(|i| (-(i as f64) / l).exp() / denom).collect()
}

/// Expected per-tone CTF power of the exponential profile.
pub fn profile_power(l_taps: usize) -> f64 {
    exponential_profile(l_taps).iter().sum()
}

/// Maximum Doppler shift for a terminal speed in km/h.
pub fn doppler_hz(speed_kmh: f64, f_c: f64) -> f64 {
    speed_kmh / 3.6 * f_c / SPEED_OF_LIGHT
}

fn cn<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Draw independent Rayleigh taps with the exponential profile.
///
/// With `doppler_hz > 0` every tap is a Gaussian process over the blocks with
/// Jakes autocorrelation `J0(2 pi f_d k N_B T_s)` at lag `k`; otherwise the
/// taps are held for the whole frame.
pub fn generate_taps(
    cfg: &SystemConfig,
    l_taps: usize,
    doppler_hz: f64,
    seed: u64,
) -> Result<ChannelRealization> {
    if l_taps == 0 || l_taps > cfg.n_g {
        return Err(Error::Model(format!(
            "{l_taps} taps do not fit in a {}-sample guard interval",
            cfg.n_g
        )));
    }
    if !(doppler_hz >= 0.0 && doppler_hz.is_finite()) {
        return Err(Error::Config(format!("Doppler frequency {doppler_hz} is invalid")));
    }
    let profile = exponential_profile(l_taps);
    let mut rng = seed::rng(seed);
    let first: Vec<Complex64> = profile.iter().map(|&p| cn(&mut rng, p)).collect();
    let mut taps = vec![first];
    if doppler_hz > 0.0 {
        let lower = jakes_factor(cfg.m, 2.0 * PI * doppler_hz * cfg.block_duration());
        // innovations z[j][i] for blocks j >= 1; block 0 reuses `first`
        let mut z = vec![taps[0].clone()];
        for _ in 1..cfg.m {
            z.push(profile.iter().map(|&p| cn(&mut rng, p)).collect());
        }
        for l in 1..cfg.m {
            let row = (0..l_taps)
                .map(|i| (0..=l).map(|j| z[j][i] * lower[l][j]).sum())
                .collect();
            taps.push(row);
        }
    } else {
        taps.resize(cfg.m, taps[0].clone());
    }
    ChannelRealization::from_taps(taps, cfg)
}

/// Lower Cholesky factor of the `m x m` Toeplitz matrix `J0(step |i - j|)`.
/// Pivots that round to zero or below (the matrix is close to singular for
/// slow fading) drop their column.
fn jakes_factor(m: usize, step: f64) -> Vec<Vec<f64>> {
    let mut lower = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let c = libm::j0(step * (i - j) as f64);
            let s = c - (0..j).map(|k| lower[i][k] * lower[j][k]).sum::<f64>();
            if i == j {
                lower[i][i] = s.max(0.0).sqrt();
            } else if lower[j][j] > 1e-9 {
                lower[i][j] = s / lower[j][j];
            }
        }
    }
    lower
}

/// Add circular complex Gaussian noise of total variance `noise_var`.
pub fn add_awgn(samples: &mut [Complex64], noise_var: f64, seed: u64) {
    if noise_var == 0.0 {
        return;
    }
    let mut rng = seed::rng(seed);
    for v in samples {
        *v += cn(&mut rng, noise_var);
    }
}

/// `sqrt(1-kappa^2) H + kappa J` with `J ~ CN(0, 1)` drawn independently.
pub fn perturb_csi(chan: &ChannelRealization, kappa: f64, seed: u64) -> Result<BlockGrid> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Config(format!("kappa = {kappa} outside [0, 1]")));
    }
    let keep = (1.0 - kappa * kappa).sqrt();
    let mut rng = seed::rng(seed);
    let mut out = chan.ctf.clone();
    for h in out.as_mut_slice() {
        *h = *h * keep + cn(&mut rng, 1.0) * kappa;
    }
    Ok(out)
}

/// Per-tone model: `R = X H exp(j pi T (N-1)/N) exp(j 2 pi (l N_B + N_g) T / N) + W`.
pub fn apply_impairments_freq(
    grid_x: &BlockGrid,
    chan: &ChannelRealization,
    imp: &ImpairmentParams,
    cfg: &SystemConfig,
) -> Result<BlockGrid> {
    grid_x.check_dims(cfg.m, cfg.n)?;
    chan.ctf.check_dims(cfg.m, cfg.n)?;
    let n = cfg.n as f64;
    let mut out = BlockGrid::zeros(cfg.m, cfg.n);
    for l in 0..cfg.m {
        let lead = 2.0 * PI * (l * cfg.n_b() + cfg.n_g) as f64 / n + PI * (n - 1.0) / n;
        let (x, h) = (grid_x.row(l), chan.ctf.row(l));
        for (k, r) in out.row_mut(l).iter_mut().enumerate() {
            let theta = imp.epsilon + imp.eta * k as f64;
            *r = x[k] * h[k] * Complex64::from_polar(1.0, lead * theta);
        }
    }
    add_awgn(out.as_mut_slice(), imp.noise_var, imp.seed);
    Ok(out)
}

/// Evaluates `sum_k coeffs[k] exp(j 2 pi k u / n)` by Horner's rule.
fn trig_poly(coeffs: &[Complex64], u: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, 2.0 * PI * u / coeffs.len() as f64);
    if coeffs.len() % 2 != 0 {
        return coeffs.iter().rev().fold(Complex64::default(), |acc, &c| acc * z + c);
    }
    // even and odd powers as two independent Horner chains in z^2
    let z2 = z * z;
    let (mut even, mut odd) = (Complex64::default(), Complex64::default());
    for pair in coeffs.chunks_exact(2).rev() {
        even = even * z2 + pair[0];
        odd = odd * z2 + pair[1];
    }
    even + z * odd
}

/// Time-domain channel, carrier offset and sampling drift. Noise is not added.
///
/// Each block of the frame is the trigonometric polynomial
/// `(1/sqrt N) sum_k X_k exp(j 2 pi k (t - N_g - b N_B) / N)` over its
/// rectangular window. Output sample `p` is the multipath sum of that
/// waveform at `t = p (1 + eta)` (in units of `T_s`), rotated by
/// `exp(j 2 pi eps t / N)`. Tap gains follow the nominal block of `p`.
pub fn apply_impairments_time(
    frame: &TimeFrame,
    chan: &ChannelRealization,
    imp: &ImpairmentParams,
    cfg: &SystemConfig,
) -> Result<TimeFrame> {
    if frame.samples().len() != cfg.frame_len() {
        return Err(Error::Length { expected: cfg.frame_len(), actual: frame.samples().len() });
    }
    chan.ctf.check_dims(cfg.m, cfg.n)?;
    if chan.taps.len() != cfg.m {
        return Err(Error::Config(format!("{} tap rows for m = {}", chan.taps.len(), cfg.m)));
    }
    if chan.l_taps > cfg.n_g + 1 {
        return Err(Error::Model(format!(
            "channel memory of {} taps exceeds the {}-sample guard",
            chan.l_taps, cfg.n_g
        )));
    }
    let (n, n_b, m) = (cfg.n, cfg.n_b(), cfg.m);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let tx = modem::demodulate_frame(frame, cfg)?;
    let roots: Vec<Complex64> =
        (0..n).map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / n as f64)).collect();

    // Partial transfer function over taps 0..=j of one tap row, grown lazily.
    struct Prefix {
        row: usize,
        upto: usize,
        ctf: Vec<Complex64>,
    }
    let mut prefix: Option<Prefix> = None;
    let mut prefix_for = |row: usize, j: usize| -> Vec<Complex64> {
        let stale = match &prefix {
            Some(p) => p.row != row || p.upto > j,
            None => true,
        };
        if stale {
            prefix = Some(Prefix { row, upto: 0, ctf: vec![chan.taps[row][0]; n] });
        }
        let p = prefix.as_mut().expect("prefix initialised above");
        while p.upto < j {
            p.upto += 1;
            let h = chan.taps[row][p.upto];
            for (k, g) in p.ctf.iter_mut().enumerate() {
                *g += h * roots[(k * p.upto) % n];
            }
        }
        p.ctf.clone()
    };

    let mut full_key = None;
    let mut full_coeffs = vec![Complex64::default(); n];
    let mut out = Vec::with_capacity(cfg.frame_len());
    for p in 0..cfg.frame_len() {
        let row = (p / n_b).min(m - 1);
        let t = p as f64 * (1.0 + imp.eta);
        let whole = t.floor();
        let b0 = (whole / n_b as f64).floor() as i64;
        let j = (whole as i64 - b0 * n_b as i64) as usize;
        let in_frame = |b: i64| b >= 0 && (b as usize) < m;
        let offset = |b: i64| t - cfg.n_g as f64 - (b * n_b as i64) as f64;

        let mut acc = Complex64::default();
        if j + 1 >= chan.l_taps {
            if in_frame(b0) {
                if full_key != Some((b0, row)) {
                    let (x, h) = (tx.row(b0 as usize), chan.ctf.row(row));
                    for k in 0..n {
                        full_coeffs[k] = x[k] * h[k];
                    }
                    full_key = Some((b0, row));
                }
                acc += trig_poly(&full_coeffs, offset(b0));
            }
        } else {
            // taps 0..=j still read block b0, the rest reach back into b0 - 1
            let near = prefix_for(row, j);
            if in_frame(b0) {
                let x = tx.row(b0 as usize);
                let c: Vec<_> = near.iter().zip(x).map(|(g, x)| g * x).collect();
                acc += trig_poly(&c, offset(b0));
            }
            if in_frame(b0 - 1) {
                let x = tx.row(b0 as usize - 1);
                let h = chan.ctf.row(row);
                let c: Vec<_> =
                    (0..n).map(|k| (h[k] - near[k]) * x[k]).collect();
                acc += trig_poly(&c, offset(b0 - 1));
            }
        }
        let rot = Complex64::from_polar(1.0, 2.0 * PI * imp.epsilon * t / n as f64);
        out.push(acc * inv_sqrt_n * rot);
    }
    TimeFrame::new(out, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{demodulate_frame, modulate_frame, Constellation};

    fn psk_grid(cfg: &SystemConfig, seed: u64) -> BlockGrid {
        let mut rng = seed::rng(seed);
        let mut g = BlockGrid::zeros(cfg.m, cfg.n);
        for v in g.as_mut_slice() {
            *v = Constellation::Psk(16).point(rng.random_range(0..16)).unwrap();
        }
        g
    }

    fn j0_series(x: f64) -> f64 {
        // sum_k (-1)^k (x/2)^{2k} / (k!)^2
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= -(x * x / 4.0) / (k as f64 * k as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn single_tap_profile_is_unit() {
        assert_eq!(exponential_profile(1), vec![1.0]);
        let cfg = SystemConfig::new(8, 2, 4, 2).unwrap();
        let c = generate_taps(&cfg, 1, 0.0, 3).unwrap();
        assert_eq!(c.l_taps, 1);
        // flat Rayleigh: every tone equals the single tap
        assert!(c.ctf.row(0).iter().all(|&h| h == c.taps[0][0]));
    }

    #[test]
    fn too_many_taps_rejected() {
        let cfg = SystemConfig::new(64, 8, 2, 2).unwrap();
        assert!(matches!(generate_taps(&cfg, 9, 0.0, 0), Err(Error::Model(_))));
        assert!(generate_taps(&cfg, 8, 0.0, 0).is_ok());
    }

    #[test]
    fn profile_ensemble_power() {
        let cfg = SystemConfig::new(64, 32, 1, 2).unwrap();
        let draws = 100_000;
        let expected = exponential_profile(32);
        // independent evaluation of the profile formula
        let denom: f64 = (0..32).map(|i| (-2.0 * i as f64 / 32.0).exp()).sum();
        for (i, &e) in expected.iter().enumerate() {
            assert!((e - (-(i as f64) / 32.0).exp() / denom).abs() < 1e-15);
        }
        assert!((profile_power(32) - 1.43962).abs() < 1e-5);
        let mut acc = vec![0.0; 32];
        let mut tone_pow = 0.0;
        for s in 0..draws {
            let c = generate_taps(&cfg, 32, 0.0, s).unwrap();
            for (a, h) in acc.iter_mut().zip(&c.taps[0]) {
                *a += h.norm_sqr();
            }
            tone_pow += c.ctf.get(0, (s % 64) as usize).norm_sqr();
        }
        for (a, e) in acc.iter().zip(&expected) {
            let est = a / draws as f64;
            assert!((est - e).abs() / e < 0.03, "{est} vs {e}");
        }
        let est = tone_pow / draws as f64;
        assert!((est - profile_power(32)).abs() / profile_power(32) < 0.02, "{est}");
    }

    #[test]
    fn doppler_block_correlation() {
        let cfg = SystemConfig::new(512, 64, 2, 4).unwrap();
        let dt = cfg.block_duration();
        assert!((dt - 57.6e-6).abs() < 1e-12);
        let fd = 463.0;
        let target = j0_series(2.0 * PI * fd * dt);
        assert!((target - libm::j0(2.0 * PI * fd * dt)).abs() < 1e-12);
        let (mut cross, mut p0, mut p1) = (Complex64::default(), 0.0, 0.0);
        for s in 0..100_000 {
            let c = generate_taps(&cfg, 1, fd, s).unwrap();
            let (a, b) = (c.taps[0][0], c.taps[1][0]);
            cross += b * a.conj();
            p0 += a.norm_sqr();
            p1 += b.norm_sqr();
        }
        let rho = cross.re / (p0 * p1).sqrt();
        assert!((rho - target).abs() / target < 0.05, "{rho} vs {target}");
    }

    #[test]
    fn doppler_correlation_at_every_lag() {
        let cfg = SystemConfig::new(64, 8, 10, 2).unwrap();
        let fd = 927.0;
        let step = 2.0 * PI * fd * cfg.block_duration();
        let draws = 50_000;
        let mut cross = vec![Complex64::default(); cfg.m];
        let mut power = vec![0.0; cfg.m];
        for s in 0..draws {
            let c = generate_taps(&cfg, 1, fd, s).unwrap();
            for l in 0..cfg.m {
                cross[l] += c.taps[l][0] * c.taps[0][0].conj();
                power[l] += c.taps[l][0].norm_sqr();
            }
        }
        for l in 0..cfg.m {
            let rho = cross[l].re / (power[0] * power[l]).sqrt();
            let target = j0_series(step * l as f64);
            assert!((rho - target).abs() < 0.02, "lag {l}: {rho} vs {target}");
            assert!((power[l] / draws as f64 - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn static_channel_repeats_first_block() {
        let cfg = SystemConfig::new(64, 16, 5, 2).unwrap();
        let a = generate_taps(&cfg, 8, 0.0, 9).unwrap();
        assert!(a.taps.iter().all(|r| *r == a.taps[0]));
        let b = generate_taps(&cfg, 8, 100.0, 9).unwrap();
        assert_eq!(a.taps[0], b.taps[0]);
        assert_ne!(a.taps[1], b.taps[1]);
        assert_eq!(b.stale_ctf().row(4), b.ctf.row(0));
    }

    #[test]
    fn doppler_from_speed() {
        let fd = doppler_hz(100.0, 5e9);
        assert!((fd - 463.0).abs() / 463.0 < 0.005, "{fd}");
        for (v, f) in [(50.0, 232.0), (150.0, 695.0), (200.0, 927.0)] {
            assert!((doppler_hz(v, 5e9) - f).abs() / f < 0.005);
        }
    }

    #[test]
    fn awgn_statistics_and_determinism() {
        let mut z = vec![Complex64::default(); 1_000_000];
        add_awgn(&mut z, 1.0, 42);
        let n = z.len() as f64;
        let re = z.iter().map(|v| v.re * v.re).sum::<f64>() / n;
        let im = z.iter().map(|v| v.im * v.im).sum::<f64>() / n;
        assert!((re + im - 1.0).abs() < 0.005);
        assert!((re - 0.5).abs() < 0.005 && (im - 0.5).abs() < 0.005);
        let mut again = vec![Complex64::default(); 1_000_000];
        add_awgn(&mut again, 1.0, 42);
        assert_eq!(z, again);
        let mut quiet = vec![Complex64::new(1.0, 2.0); 4];
        add_awgn(&mut quiet, 0.0, 42);
        assert_eq!(quiet, vec![Complex64::new(1.0, 2.0); 4]);
    }

    #[test]
    fn csi_perturbation() {
        let cfg = SystemConfig::new(512, 64, 200, 4).unwrap();
        let chan = generate_taps(&cfg, 32, 0.0, 5).unwrap();
        assert_eq!(perturb_csi(&chan, 0.0, 1).unwrap(), chan.ctf);
        assert!(perturb_csi(&chan, 1.5, 1).is_err());

        let noise = perturb_csi(&chan, 1.0, 2).unwrap();
        let (mut c, mut pa, mut pb) = (Complex64::default(), 0.0, 0.0);
        for (a, b) in noise.as_slice().iter().zip(chan.ctf.as_slice()) {
            c += a * b.conj();
            pa += a.norm_sqr();
            pb += b.norm_sqr();
        }
        assert!(c.norm() / (pa * pb).sqrt() < 0.01);

        let kappa: f64 = 0.3;
        let pert = perturb_csi(&chan, kappa, 3).unwrap();
        let count = pert.as_slice().len() as f64;
        let p_true = pb / count;
        let p_pert = pert.as_slice().iter().map(|h| h.norm_sqr()).sum::<f64>() / count;
        let expected = (1.0 - kappa * kappa) * p_true + kappa * kappa;
        assert!((p_pert - expected).abs() / expected < 0.01, "{p_pert} vs {expected}");
    }

    #[test]
    fn freq_model_identity_and_phase() {
        let cfg = SystemConfig::default();
        let x = psk_grid(&cfg, 1);
        let chan = ChannelRealization::flat(&cfg);
        let r = apply_impairments_freq(&x, &chan, &ImpairmentParams::new(0.0, 0.0, 0.0, 0), &cfg)
            .unwrap();
        assert_eq!(r, x);

        let ones = BlockGrid::filled(cfg.m, cfg.n, Complex64::new(1.0, 0.0));
        let r = apply_impairments_freq(&ones, &chan, &ImpairmentParams::new(0.02, 0.0, 0.0, 0), &cfg)
            .unwrap();
        let expected = PI * 0.02 * 511.0 / 512.0 + 2.0 * PI * (64.0 / 512.0) * 0.02;
        for k in [0, 17, 300, 511] {
            assert!((r.get(0, k).arg() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn time_model_identity() {
        let cfg = SystemConfig::new(64, 16, 3, 2).unwrap();
        let frame = modulate_frame(&psk_grid(&cfg, 2), &cfg).unwrap();
        let out = apply_impairments_time(
            &frame,
            &ChannelRealization::flat(&cfg),
            &ImpairmentParams::new(0.0, 0.0, 0.0, 0),
            &cfg,
        )
        .unwrap();
        for (a, b) in out.samples().iter().zip(frame.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn time_and_freq_models_agree_without_offsets() {
        let cfg = SystemConfig::new(128, 16, 4, 2).unwrap();
        let x = psk_grid(&cfg, 3);
        let chan = generate_taps(&cfg, 16, 300.0, 4).unwrap();
        let imp = ImpairmentParams::new(0.0, 0.0, 0.0, 0);
        let rx_t = apply_impairments_time(&modulate_frame(&x, &cfg).unwrap(), &chan, &imp, &cfg)
            .unwrap();
        let grid_t = demodulate_frame(&rx_t, &cfg).unwrap();
        let grid_f = apply_impairments_freq(&x, &chan, &imp, &cfg).unwrap();
        for (a, b) in grid_t.as_slice().iter().zip(grid_f.as_slice()) {
            assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0));
        }

        // direct convolution oracle on the nominal-rate samples
        let tx = modulate_frame(&x, &cfg).unwrap();
        let s = tx.samples();
        for p in (0..cfg.frame_len()).step_by(37) {
            let row = p / cfg.n_b();
            let y: Complex64 = (0..chan.l_taps)
                .filter(|&i| i <= p)
                .map(|i| chan.taps[row][i] * s[p - i])
                .sum();
            assert!((y - rx_t.samples()[p]).norm() < 1e-9);
        }
    }

    fn single_tone_phase(cfg: &SystemConfig, k: usize, imp: &ImpairmentParams, l: usize) -> f64 {
        let mut x = BlockGrid::zeros(cfg.m, cfg.n);
        for b in 0..cfg.m {
            x.set(b, k, Complex64::new(1.0, 0.0));
        }
        let rx = apply_impairments_time(
            &modulate_frame(&x, cfg).unwrap(),
            &ChannelRealization::flat(cfg),
            imp,
            cfg,
        )
        .unwrap();
        demodulate_frame(&rx, cfg).unwrap().get(l, k).arg()
    }

    fn wrap(x: f64) -> f64 {
        (x + PI).rem_euclid(2.0 * PI) - PI
    }

    #[test]
    fn time_model_carrier_phase() {
        let cfg = SystemConfig::default();
        let imp = ImpairmentParams::new(0.02, 0.0, 0.0, 0);
        let n = cfg.n as f64;
        for (k, l) in [(5, 0), (200, 3), (400, 9)] {
            let got = single_tone_phase(&cfg, k, &imp, l);
            let expected =
                2.0 * PI * ((l * cfg.n_b() + cfg.n_g) as f64 / n) * 0.02 + PI * 0.02 * (n - 1.0) / n;
            assert!(wrap(got - expected).abs() < 1e-3, "k={k} l={l}: {got} vs {expected}");
        }
    }

    #[test]
    fn time_model_sampling_phase() {
        let cfg = SystemConfig::default();
        let eta = 5e-5;
        let imp = ImpairmentParams::new(0.0, eta, 0.0, 0);
        let n = cfg.n as f64;
        for k in [1, 128, 300, 511] {
            let theta = eta * k as f64;
            let got = single_tone_phase(&cfg, k, &imp, 0);
            let expected = PI * theta * (n - 1.0) / n + 2.0 * PI * (cfg.n_g as f64 / n) * theta;
            assert!(wrap(got - expected).abs() < 5e-3, "k={k}: {got} vs {expected}");
        }
    }

    #[test]
    fn time_model_disagreement_is_the_ici_floor() {
        let cfg = SystemConfig::default();
        let x = psk_grid(&cfg, 8);
        let chan = ChannelRealization::flat(&cfg);
        let (eps, eta) = (0.02, 5e-5);
        let imp = ImpairmentParams::new(eps, eta, 0.0, 0);
        let rx = apply_impairments_time(&modulate_frame(&x, &cfg).unwrap(), &chan, &imp, &cfg)
            .unwrap();
        let grid_t = demodulate_frame(&rx, &cfg).unwrap();
        let grid_f = apply_impairments_freq(&x, &chan, &imp, &cfg).unwrap();
        let err: f64 =
            grid_t.as_slice().iter().zip(grid_f.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let sig: f64 = grid_f.as_slice().iter().map(|b| b.norm_sqr()).sum();
        let measured_db = 10.0 * (err / sig).log10();
        // small-offset ICI power is (pi^2/3) T^2 per tone
        let mean_t2 = (0..cfg.n).map(|k| (eps + eta * k as f64).powi(2)).sum::<f64>() / cfg.n as f64;
        let predicted_db = 10.0 * (PI * PI / 3.0 * mean_t2).log10();
        assert!(measured_db < -23.0, "{measured_db}");
        assert!((measured_db - predicted_db).abs() < 1.0, "{measured_db} vs {predicted_db}");
    }

    #[test]
    fn estimability_range() {
        let cfg = SystemConfig::default();
        assert!(ImpairmentParams::new(0.02, 5e-5, 0.0, 0).validate(&cfg).is_ok());
        assert!(ImpairmentParams::new(0.1, 1e-4, 1.0, 0).validate(&cfg).is_ok());
        assert!(ImpairmentParams::new(0.3, 0.0, 0.0, 0).validate(&cfg).is_err());
        assert!(ImpairmentParams::new(0.0, 0.0, -1.0, 0).validate(&cfg).is_err());
    }
}
