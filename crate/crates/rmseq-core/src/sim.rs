//! Monte Carlo link-level harness: traffic generation, channel models,
//! signal superposition, collision analytics and per-trial scoring.
//!
//! Trials are embarrassingly parallel: each trial derives its own generator
//! from `(seed, trial index)`, so aggregated results do not depend on
//! scheduling order and a threaded runner reproduces the sequential one
//! bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::{Codebook, RmParams};
use crate::detector::{sic_detect, DetectedUser, DetectorConfig};
use crate::Error;

/// Abstracted narrowband channel: a one-tap gain per user plus white noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Unit gains, noise only.
    Awgn,
    /// Unit-variance circular complex Gaussian gains.
    FlatRayleigh,
}

/// Channel model and operating point.
///
/// SNR convention: `snr_db = 10·log10(E[|h|²] · 2^(−m) / σ²)` — the average
/// per-sample power of one user's sequence over the per-complex-sample noise
/// variance. `snr_db = +∞` is accepted and means exactly zero noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub snr_db: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), Error> {
        if self.snr_db.is_nan() {
            return Err(Error::InvalidParams("snr_db must not be NaN"));
        }
        Ok(())
    }

    /// Per-complex-sample noise variance σ² for sequences of length 2^m.
    pub fn noise_variance(&self, m: usize) -> f64 {
        let n = (1usize << m) as f64;
        libm::pow(10.0, -self.snr_db / 10.0) / n
    }
}

/// Per-trial outcome counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    /// Active users whose id was chosen by at least one other active user.
    pub collided_users: usize,
    /// Non-collided active users absent from the detected set.
    pub missed_users: usize,
    /// Detected ids that no active user chose.
    pub false_alarms: usize,
    /// collided + missed.
    pub total_failures: usize,
}

/// Full configuration of one experiment point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub r: usize,
    pub c: u64,
    pub k: usize,
    pub channel: ChannelModel,
    pub trials: usize,
    pub seed: u64,
    pub detector: DetectorConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        RmParams::new(self.m, self.r, self.c)?;
        self.channel.validate()?;
        self.detector.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be >= 1"));
        }
        Ok(())
    }
}

/// Aggregated per-user rates with standard errors over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentMetrics {
    pub trials: usize,
    pub k: usize,
    pub collision_rate: f64,
    pub collision_se: f64,
    pub miss_rate: f64,
    pub miss_se: f64,
    pub false_alarm_rate: f64,
    pub false_alarm_se: f64,
    pub failure_rate: f64,
    pub failure_se: f64,
}

/// Eq.-style closed form for the per-user collision probability:
/// `p = (C/k)·Σ_{i=2}^{k} i·binom(k,i)·(1/C)^i·((C−1)/C)^(k−i)`.
/// Evaluated term-by-term in log space so large spaces cannot overflow.
pub fn collision_rate_formula(k: u64, c: u64) -> f64 {
    assert!(k >= 1 && c >= 1, "need k >= 1 and c >= 1");
    if k == 1 {
        return 0.0;
    }
    if c == 1 {
        return 1.0;
    }
    let kf = k as f64;
    let cf = c as f64;
    let ln_inv_c = -libm::log(cf);
    let ln_ratio = libm::log((cf - 1.0) / cf);
    let mut ln_binom = libm::log(kf * (kf - 1.0) / 2.0); // binom(k, 2)
    let mut sum = 0.0;
    for i in 2..=k {
        let fi = i as f64;
        if i > 2 {
            // binom(k, i) = binom(k, i-1) · (k-i+1)/i
            ln_binom += libm::log((kf - fi + 1.0) / fi);
        }
        let ln_term = libm::log(fi) + ln_binom + fi * ln_inv_c + (kf - fi) * ln_ratio;
        sum += libm::exp(ln_term);
    }
    (cf / kf) * sum
}

/// `k` independent uniform draws from `[0, C)`, with replacement — collisions
/// are possible by design.
pub fn draw_active_set<R: Rng + ?Sized>(k: usize, c: u64, rng: &mut R) -> Vec<u64> {
    (0..k).map(|_| rng.gen_range(0..c)).collect()
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // Box-Muller; u1 in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let theta = core::f64::consts::TAU * u2;
    (r * libm::cos(theta), r * libm::sin(theta))
}

/// Superpose the chosen users over the channel: `y = Σ h_l·s_l + n`.
/// Gains are drawn per user (all before the noise), then one noise sample
/// per entry; the draw order is part of the reproducibility contract.
pub fn build_received_signal<R: Rng + ?Sized>(
    ids: &[u64],
    cb: &Codebook,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<(Vec<Complex64>, Vec<Complex64>), Error> {
    channel.validate()?;
    let n = cb.seq_len();
    let gains: Vec<Complex64> = (0..ids.len())
        .map(|_| match channel.kind {
            ChannelKind::Awgn => Complex64::new(1.0, 0.0),
            ChannelKind::FlatRayleigh => {
                let (re, im) = standard_normal(rng);
                Complex64::new(re, im) / libm::sqrt(2.0)
            }
        })
        .collect();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (id, h) in ids.iter().zip(&gains) {
        let s = cb.sequence(*id)?;
        for (yv, sv) in y.iter_mut().zip(s.values()) {
            *yv += h * sv;
        }
    }
    let sigma2 = channel.noise_variance(cb.params().m);
    if sigma2 > 0.0 {
        let scale = libm::sqrt(sigma2 / 2.0);
        for yv in y.iter_mut() {
            let (re, im) = standard_normal(rng);
            *yv += Complex64::new(re * scale, im * scale);
        }
    }
    Ok((y, gains))
}

/// Score one trial. Collided users count as failures regardless of what the
/// detector returned; misses are counted only among non-collided users.
pub fn score_trial(active: &[u64], detected: &[DetectedUser]) -> TrialOutcome {
    let mut collided_users = 0;
    let mut missed_users = 0;
    for (i, id) in active.iter().enumerate() {
        let dup = active
            .iter()
            .enumerate()
            .any(|(j, other)| j != i && other == id);
        if dup {
            collided_users += 1;
        } else if !detected.iter().any(|u| u.id == *id) {
            missed_users += 1;
        }
    }
    // detected ids are unique by the detector's contract
    let false_alarms = detected
        .iter()
        .filter(|u| !active.contains(&u.id))
        .count();
    TrialOutcome {
        collided_users,
        missed_users,
        false_alarms,
        total_failures: collided_users + missed_users,
    }
}

/// Child generator for one trial, independent of every other trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&trial.to_le_bytes());
    bytes[16] = 0x52; // domain tag
    ChaCha8Rng::from_seed(bytes)
}

/// Run a single trial: draw the active set, build the signal, detect, score.
pub fn run_trial(cb: &Codebook, cfg: &ExperimentConfig, trial: u64) -> Result<TrialOutcome, Error> {
    let mut rng = trial_rng(cfg.seed, trial);
    let active = draw_active_set(cfg.k, cfg.c, &mut rng);
    let (y, _gains) = build_received_signal(&active, cb, &cfg.channel, &mut rng)?;
    let detection = sic_detect(&y, cb, &cfg.detector, &mut rng)?;
    Ok(score_trial(&active, &detection.users))
}

/// Mean and standard error of per-trial per-user rates.
pub fn aggregate_outcomes(outcomes: &[TrialOutcome], k: usize) -> ExperimentMetrics {
    let trials = outcomes.len();
    let kf = k as f64;
    let stats = |f: &dyn Fn(&TrialOutcome) -> usize| -> (f64, f64) {
        let xs: Vec<f64> = outcomes.iter().map(|o| f(o) as f64 / kf).collect();
        let mean = xs.iter().sum::<f64>() / trials as f64;
        if trials < 2 {
            return (mean, 0.0);
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64;
        (mean, libm::sqrt(var / trials as f64))
    };
    let (collision_rate, collision_se) = stats(&|o| o.collided_users);
    let (miss_rate, miss_se) = stats(&|o| o.missed_users);
    let (false_alarm_rate, false_alarm_se) = stats(&|o| o.false_alarms);
    let (failure_rate, failure_se) = stats(&|o| o.total_failures);
    ExperimentMetrics {
        trials,
        k,
        collision_rate,
        collision_se,
        miss_rate,
        miss_se,
        false_alarm_rate,
        false_alarm_se,
        failure_rate,
        failure_se,
    }
}

/// Run all trials sequentially and aggregate. Deterministic given the
/// config, including the seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentMetrics, Error> {
    cfg.validate()?;
    let cb = Codebook::new(RmParams::new(cfg.m, cfg.r, cfg.c)?)?;
    let outcomes: Result<Vec<TrialOutcome>, Error> = (0..cfg.trials)
        .map(|t| run_trial(&cb, cfg, t as u64))
        .collect();
    Ok(aggregate_outcomes(&outcomes?, cfg.k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorConfig;
    use crate::gf2::{BitMatrix, BitVec};

    #[test]
    fn formula_trivial_and_paper_cells() {
        assert_eq!(collision_rate_formula(1, 52), 0.0);
        // closed-form identity: p = 1 − (1 − 1/C)^(k−1)
        for (k, c) in [(2u64, 52u64), (4, 52), (6, 52), (2, 16000), (6, 16000)] {
            let direct = 1.0 - libm::pow(1.0 - 1.0 / c as f64, (k - 1) as f64);
            let got = collision_rate_formula(k, c);
            assert!((got - direct).abs() < 1e-12, "k={k} c={c}");
        }
        assert!((collision_rate_formula(2, 52) - 0.0192).abs() < 1e-4);
        assert!((collision_rate_formula(4, 52) - 0.0566).abs() < 1e-4);
        assert!((collision_rate_formula(6, 52) - 0.0925).abs() < 1e-4);
    }

    #[test]
    fn formula_degenerate_space() {
        assert_eq!(collision_rate_formula(3, 1), 1.0);
        assert_eq!(collision_rate_formula(1, 1), 0.0);
    }

    #[test]
    fn draws_are_seeded_and_in_range() {
        let mut r1 = trial_rng(9, 4);
        let mut r2 = trial_rng(9, 4);
        let a = draw_active_set(6, 16000, &mut r1);
        let b = draw_active_set(6, 16000, &mut r2);
        assert_eq!(a, b);
        assert!(a.iter().all(|&id| id < 16000));

        let mut r3 = trial_rng(9, 5);
        assert_ne!(a, draw_active_set(6, 16000, &mut r3));

        let mut r = trial_rng(0, 0);
        assert_eq!(draw_active_set(3, 1, &mut r), alloc::vec![0, 0, 0]);
    }

    #[test]
    fn empirical_collision_rate_matches_formula() {
        // modest trial count here; the acceptance suite runs the full 1e7
        let (k, c) = (6usize, 52u64);
        let trials = 20_000u64;
        let mut collided = 0usize;
        for t in 0..trials {
            let mut rng = trial_rng(77, t);
            let ids = draw_active_set(k, c, &mut rng);
            collided += score_trial(&ids, &[]).collided_users;
        }
        let p_hat = collided as f64 / (k as f64 * trials as f64);
        let p = collision_rate_formula(k as u64, c);
        let se = libm::sqrt(p * (1.0 - p) / (k as f64 * trials as f64));
        assert!((p_hat - p).abs() < 4.0 * se, "p_hat={p_hat} p={p}");
    }

    #[test]
    fn signal_noiseless_single_user_exact() {
        let cb = Codebook::new(RmParams::new(5, 0, 32).unwrap()).unwrap();
        let channel = ChannelModel {
            kind: ChannelKind::Awgn,
            snr_db: f64::INFINITY,
        };
        let mut rng = trial_rng(1, 0);
        let (y, gains) = build_received_signal(&[7], &cb, &channel, &mut rng).unwrap();
        assert_eq!(gains[0], Complex64::new(1.0, 0.0));
        let s = cb.sequence(7).unwrap();
        for (yv, sv) in y.iter().zip(s.values()) {
            assert_eq!(yv, sv);
        }
    }

    #[test]
    fn signal_collision_superposes_linearly() {
        let cb = Codebook::new(RmParams::new(5, 0, 32).unwrap()).unwrap();
        let channel = ChannelModel {
            kind: ChannelKind::FlatRayleigh,
            snr_db: f64::INFINITY,
        };
        let mut rng = trial_rng(2, 0);
        let (y, gains) = build_received_signal(&[5, 5], &cb, &channel, &mut rng).unwrap();
        let s = cb.sequence(5).unwrap();
        let h = gains[0] + gains[1];
        for (yv, sv) in y.iter().zip(s.values()) {
            assert!((yv - h * sv).norm() < 1e-15);
        }
    }

    #[test]
    fn measured_snr_matches_configured() {
        let cb = Codebook::new(RmParams::new(5, 0, 32).unwrap()).unwrap();
        let snr_db = 7.0;
        let channel = ChannelModel {
            kind: ChannelKind::Awgn,
            snr_db,
        };
        let expected_sigma2 = channel.noise_variance(5);
        let mut noise_power = 0.0;
        let mut samples = 0usize;
        for t in 0..10_000u64 {
            let mut rng = trial_rng(55, t);
            let (y, _) = build_received_signal(&[0], &cb, &channel, &mut rng).unwrap();
            let s = cb.sequence(0).unwrap();
            for (yv, sv) in y.iter().zip(s.values()) {
                noise_power += (yv - sv).norm_sqr();
                samples += 1;
            }
        }
        let sigma2_hat = noise_power / samples as f64;
        let measured_snr = 10.0 * libm::log10(1.0 / 32.0 / sigma2_hat);
        assert!(
            (measured_snr - snr_db).abs() < 0.2,
            "measured {measured_snr} dB, sigma2 {sigma2_hat} vs {expected_sigma2}"
        );
    }

    #[test]
    fn rayleigh_gain_power_is_unit_on_average() {
        let cb = Codebook::new(RmParams::new(3, 0, 8).unwrap()).unwrap();
        let channel = ChannelModel {
            kind: ChannelKind::FlatRayleigh,
            snr_db: f64::INFINITY,
        };
        let mut acc = 0.0;
        let trials = 20_000u64;
        for t in 0..trials {
            let mut rng = trial_rng(3, t);
            let (_, gains) = build_received_signal(&[0], &cb, &channel, &mut rng).unwrap();
            acc += gains[0].norm_sqr();
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.03, "E|h|^2 = {mean}");
    }

    fn fake_user(id: u64) -> DetectedUser {
        DetectedUser {
            id,
            p: BitMatrix::zeros(3),
            b: BitVec::zero(3),
            gain: Complex64::new(1.0, 0.0),
            score: 0.0,
            iteration: 1,
        }
    }

    #[test]
    fn score_trial_definitions() {
        let out = score_trial(&[3, 3], &[fake_user(3)]);
        assert_eq!(out.collided_users, 2);
        assert_eq!(out.missed_users, 0);
        assert_eq!(out.total_failures, 2);

        let out = score_trial(&[1, 2], &[fake_user(1), fake_user(2)]);
        assert_eq!(out, TrialOutcome::default());

        let out = score_trial(&[1, 2], &[fake_user(1), fake_user(7)]);
        assert_eq!(out.missed_users, 1);
        assert_eq!(out.false_alarms, 1);
        assert_eq!(out.total_failures, 1);
    }

    #[test]
    fn per_trial_accounting_is_conserved() {
        // collided + missed + correctly detected non-collided == k
        let cfg = ExperimentConfig {
            m: 5,
            r: 0,
            c: 32,
            k: 4,
            channel: ChannelModel {
                kind: ChannelKind::Awgn,
                snr_db: 10.0,
            },
            trials: 50,
            seed: 11,
            detector: DetectorConfig::known_k(4),
        };
        let cb = Codebook::new(RmParams::new(5, 0, 32).unwrap()).unwrap();
        for t in 0..cfg.trials as u64 {
            let mut rng = trial_rng(cfg.seed, t);
            let active = draw_active_set(cfg.k, cfg.c, &mut rng);
            let (y, _) = build_received_signal(&active, &cb, &cfg.channel, &mut rng).unwrap();
            let det = sic_detect(&y, &cb, &cfg.detector, &mut rng).unwrap();
            let out = score_trial(&active, &det.users);
            let correct = active
                .iter()
                .enumerate()
                .filter(|(i, id)| {
                    let dup = active
                        .iter()
                        .enumerate()
                        .any(|(j, o)| j != *i && o == *id);
                    !dup && det.users.iter().any(|u| u.id == **id)
                })
                .count();
            assert_eq!(out.collided_users + out.missed_users + correct, cfg.k);
        }
    }

    #[test]
    fn level1_noiseless_misses_only_on_collisions() {
        let cfg = ExperimentConfig {
            m: 5,
            r: 0,
            c: 32,
            k: 2,
            channel: ChannelModel {
                kind: ChannelKind::Awgn,
                snr_db: f64::INFINITY,
            },
            trials: 300,
            seed: 21,
            detector: DetectorConfig::known_k(2),
        };
        let metrics = run_experiment(&cfg).unwrap();
        assert_eq!(metrics.miss_rate, 0.0, "{metrics:?}");
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = ExperimentConfig {
            m: 5,
            r: 1,
            c: 1024,
            k: 3,
            channel: ChannelModel {
                kind: ChannelKind::FlatRayleigh,
                snr_db: 7.0,
            },
            trials: 40,
            seed: 5,
            detector: DetectorConfig::known_k(3),
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_collision_matches_formula_independent_of_detector() {
        let k = 6usize;
        let c = 52u64;
        let outcomes: Vec<TrialOutcome> = (0..30_000u64)
            .map(|t| {
                let mut rng = trial_rng(1234, t);
                let ids = draw_active_set(k, c, &mut rng);
                score_trial(&ids, &[])
            })
            .collect();
        let metrics = aggregate_outcomes(&outcomes, k);
        let p = collision_rate_formula(k as u64, c);
        assert!((metrics.collision_rate - p).abs() < 4.0 * metrics.collision_se.max(1e-4));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig {
            m: 5,
            r: 1,
            c: 1024,
            k: 3,
            channel: ChannelModel {
                kind: ChannelKind::Awgn,
                snr_db: 7.0,
            },
            trials: 1,
            seed: 0,
            detector: DetectorConfig::known_k(3),
        };
        assert!(cfg.validate().is_ok());
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        cfg.trials = 1;
        cfg.channel.snr_db = f64::NAN;
        assert!(cfg.validate().is_err());
        cfg.channel.snr_db = 7.0;
        cfg.c = 1 << 20;
        assert!(cfg.validate().is_err());
    }
}
