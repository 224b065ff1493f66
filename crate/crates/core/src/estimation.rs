//! Monte-Carlo experiments with the self-projection measurement and
//! maximum-likelihood estimation of `alpha` from click counts.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::channel::PhaseDistribution;
use crate::error::{Error, Result};
use crate::fisher::{self_projection_cfi, DerivativeOptions};
use crate::measurement::{apply_dark_noise, FidelityRoute, FixedAlpha, SelfProjection};
use crate::states::StateSpec;

/// Upper end of the estimator's search interval (`p0 ~ e^{-9}` there for
/// coherent probes).
pub const DEFAULT_ALPHA_MAX: f64 = 3.0;
/// Log-likelihood gap under which two local maxima count as equally good
/// (half the 95% quantile of chi^2 with one degree of freedom).
pub const AMBIGUITY_LOGLIK_GAP: f64 = 1.92;
/// Random words reserved per shot.
const SHOT_STRIDE: u128 = 1 << 20;
const INVERSION_GRID: usize = 600;

/// Generator for shot `shot` of trial `trial`: the trial selects the
/// ChaCha stream and the shot a fixed window of it, so any subset of shots
/// can be replayed independently of the others.
pub fn shot_rng(seed: u64, trial: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng.set_word_pos(shot as u128 * SHOT_STRIDE);
    rng
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentConfig {
    pub probe: StateSpec,
    pub phases: PhaseDistribution,
    pub alpha_true: f64,
    pub repetitions: u64,
    pub seed: u64,
    pub dark_noise: f64,
    /// Draw an extra uniform rotation before every shot.
    pub randomize_rotation: bool,
    pub route: FidelityRoute,
    pub keep_phases: bool,
}

impl ExperimentConfig {
    pub fn new(probe: StateSpec, phases: PhaseDistribution, alpha_true: f64, repetitions: u64, seed: u64) -> Self {
        ExperimentConfig {
            probe,
            phases,
            alpha_true,
            repetitions,
            seed,
            dark_noise: 0.0,
            randomize_rotation: false,
            route: FidelityRoute::Auto,
            keep_phases: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Domain("need at least one repetition".into()));
        }
        if !(self.alpha_true >= 0.0) || !self.alpha_true.is_finite() {
            return Err(Error::Domain(format!("alpha must be finite and >= 0, got {}", self.alpha_true)));
        }
        apply_dark_noise(0.5, self.dark_noise)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentResult {
    pub m0: u64,
    pub m1: u64,
    pub alpha_hat: f64,
    /// `1 / sqrt(M F_C(alpha_true))`.
    pub crb_sigma: f64,
    pub ambiguous: bool,
    pub boundary: bool,
    pub phases: Option<Vec<f64>>,
}

/// Shot sampler bound to one configuration.
pub struct Simulator {
    config: ExperimentConfig,
    fidelity: FixedAlpha,
}

impl Simulator {
    pub fn new(config: ExperimentConfig, sp: &SelfProjection) -> Result<Self> {
        config.validate()?;
        let fidelity = sp.at_alpha(config.alpha_true, config.route)?;
        Ok(Simulator { config, fidelity })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Click counts `(m0, m1)` of one experiment and, if requested, the
    /// phases drawn.
    pub fn run(&self, trial: u64) -> (u64, u64, Option<Vec<f64>>) {
        let c = &self.config;
        let mut m0 = 0;
        let mut kept = c.keep_phases.then(Vec::new);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(trial);
        for shot in 0..c.repetitions {
            rng.set_word_pos(shot as u128 * SHOT_STRIDE);
            let mut phi = c.phases.sample(&mut rng);
            if c.randomize_rotation {
                phi = (phi + TAU * rng.random::<f64>()).rem_euclid(TAU);
            }
            let p0 = if c.alpha_true == 0.0 { 1.0 } else { self.fidelity.fidelity(phi) };
            let q0 = (1.0 - c.dark_noise) * p0 + 0.5 * c.dark_noise;
            if rng.random::<f64>() < q0 {
                m0 += 1;
            }
            if let Some(k) = kept.as_mut() {
                k.push(phi);
            }
        }
        (m0, c.repetitions - m0, kept)
    }
}

/// One experiment: sample, estimate, and attach the Cramer-Rao scale.
pub fn simulate(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let sp = SelfProjection::auto(config.probe, DEFAULT_ALPHA_MAX.max(config.alpha_true))?;
    let sim = Simulator::new(config.clone(), &sp)?;
    let (m0, m1, phases) = sim.run(0);
    let inv = Inverter::new(&sp, &config.phases, config.dark_noise, config.route, DEFAULT_ALPHA_MAX)?;
    let est = inv.estimate(m0, m1)?;
    let crb_sigma = crb(&sp, config, config.alpha_true)?;
    Ok(ExperimentResult {
        m0,
        m1,
        alpha_hat: est.alpha_hat,
        crb_sigma,
        ambiguous: est.ambiguous,
        boundary: est.boundary,
        phases,
    })
}

fn crb(sp: &SelfProjection, config: &ExperimentConfig, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(f64::INFINITY);
    }
    let f = self_projection_cfi(sp, alpha, &config.phases, config.dark_noise, config.route, DerivativeOptions::default())?;
    Ok(1.0 / (config.repetitions as f64 * f.value).sqrt())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub alpha_hat: f64,
    /// Several well-separated values of `alpha` explain the counts about
    /// equally well; `alpha_hat` is the smallest of them.
    pub ambiguous: bool,
    /// The observed frequency is outside the curve's range; `alpha_hat` is
    /// the nearest end of the search interval.
    pub boundary: bool,
    pub candidates: Vec<f64>,
}

/// Maximum-likelihood inversion of `q(alpha) = (1 - eps) p0(alpha) + eps/2`.
pub struct Inverter<'a> {
    curve: Box<dyn Fn(f64) -> Result<f64> + 'a>,
    grid: Vec<(f64, f64)>,
    monotone: bool,
    alpha_max: f64,
}

impl<'a> Inverter<'a> {
    pub fn new(
        sp: &'a SelfProjection,
        phases: &'a PhaseDistribution,
        eps: f64,
        route: FidelityRoute,
        alpha_max: f64,
    ) -> Result<Self> {
        apply_dark_noise(0.5, eps)?;
        let curve = move |a: f64| Ok(apply_dark_noise(sp.p0_routed(a, phases, route)?.value.clamp(0.0, 1.0), eps)?.0);
        Self::from_curve(curve, alpha_max)
    }

    pub fn from_curve<F>(curve: F, alpha_max: f64) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64> + 'a,
    {
        if !(alpha_max > 0.0) {
            return Err(Error::Domain(format!("alpha_max must be positive, got {alpha_max}")));
        }
        let grid = (0..=INVERSION_GRID)
            .map(|i| {
                let a = alpha_max * i as f64 / INVERSION_GRID as f64;
                curve(a).map(|q| (a, q))
            })
            .collect::<Result<Vec<_>>>()?;
        let monotone = grid.windows(2).all(|w| w[1].1 < w[0].1);
        Ok(Inverter { curve: Box::new(curve), grid, monotone, alpha_max })
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn estimate(&self, m0: u64, m1: u64) -> Result<Estimate> {
        let total = m0 + m1;
        if total == 0 {
            return Err(Error::Domain("no shots to estimate from".into()));
        }
        if m1 == 0 {
            let boundary = self.grid[0].1 < 1.0;
            return Ok(Estimate { alpha_hat: 0.0, ambiguous: false, boundary, candidates: vec![0.0] });
        }
        if self.monotone {
            self.invert(m0 as f64 / total as f64)
        } else {
            self.scan(m0, m1)
        }
    }

    fn invert(&self, target: f64) -> Result<Estimate> {
        let single = |alpha_hat: f64, boundary: bool| Estimate { alpha_hat, ambiguous: false, boundary, candidates: vec![alpha_hat] };
        if target >= self.grid[0].1 {
            return Ok(single(0.0, target > self.grid[0].1));
        }
        let last = self.grid[self.grid.len() - 1];
        if target <= last.1 {
            return Ok(single(self.alpha_max, target < last.1));
        }
        let i = self.grid.partition_point(|(_, q)| *q > target);
        let (mut lo, mut hi) = (self.grid[i - 1].0, self.grid[i].0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if (self.curve)(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        Ok(single(0.5 * (lo + hi), false))
    }

    fn scan(&self, m0: u64, m1: u64) -> Result<Estimate> {
        let loglik = |q: f64| {
            let q = q.clamp(1e-300, 1.0 - 1e-16);
            m0 as f64 * q.ln() + m1 as f64 * (1.0 - q).ln()
        };
        let values: Vec<f64> = self.grid.iter().map(|(_, q)| loglik(*q)).collect();
        let n = values.len();
        let mut peaks = Vec::new();
        for i in 0..n {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == n || values[i] > values[i + 1];
            if left && right {
                let lo = self.grid[i.saturating_sub(1)].0;
                let hi = self.grid[(i + 1).min(n - 1)].0;
                peaks.push(self.refine(lo, hi, &loglik)?);
            }
        }
        let best = peaks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mut near: Vec<f64> = peaks.iter().filter(|p| best - p.1 < AMBIGUITY_LOGLIK_GAP).map(|p| p.0).collect();
        near.sort_by(|a, b| a.total_cmp(b));
        near.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let alpha_hat = near[0];
        let boundary = peaks.iter().any(|p| p.0 >= self.alpha_max - 1e-12 && best - p.1 < AMBIGUITY_LOGLIK_GAP);
        Ok(Estimate { alpha_hat, ambiguous: near.len() > 1, boundary, candidates: near })
    }

    /// Golden-section search for the likelihood maximum in `[lo, hi]`.
    fn refine(&self, mut lo: f64, mut hi: f64, loglik: &dyn Fn(f64) -> f64) -> Result<(f64, f64)> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - g * (hi - lo);
        let mut b = lo + g * (hi - lo);
        let mut fa = loglik((self.curve)(a)?);
        let mut fb = loglik((self.curve)(b)?);
        for _ in 0..100 {
            if hi - lo < 1e-12 {
                break;
            }
            if fa >= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - g * (hi - lo);
                fa = loglik((self.curve)(a)?);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + g * (hi - lo);
                fb = loglik((self.curve)(b)?);
            }
        }
        let x = 0.5 * (lo + hi);
        // keep the interval ends in play: the maximum may sit on one
        let candidates = [(x, loglik((self.curve)(x)?)), (lo, loglik((self.curve)(lo)?)), (hi, loglik((self.curve)(hi)?))];
        Ok(candidates.into_iter().fold((x, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc }))
    }
}

/// Estimate `alpha` from counts with default search range.
pub fn mle_from_counts(
    m0: u64,
    m1: u64,
    probe: &StateSpec,
    phases: &PhaseDistribution,
    eps: f64,
) -> Result<Estimate> {
    let sp = SelfProjection::auto(*probe, DEFAULT_ALPHA_MAX)?;
    let inv = Inverter::new(&sp, phases, eps, FidelityRoute::Auto, DEFAULT_ALPHA_MAX)?;
    inv.estimate(m0, m1)
}

/// One row of an RMSE sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RmseRow {
    pub probe: StateSpec,
    pub alpha: f64,
    pub repetitions: u64,
    pub trials: u64,
    pub rmse: f64,
    pub crb: f64,
    pub ratio: f64,
    pub ambiguous_trials: u64,
    pub seed: u64,
    #[serde(skip)]
    pub squared_errors: Vec<f64>,
}

/// Seed of sweep row `row`; rows draw from unrelated streams.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub const MIN_TRIALS: u64 = 100;

/// Empirical RMSE of the estimator against the Cramer-Rao scale, one row
/// per configuration (each with its own derived seed).
pub fn rmse_sweep(configs: &[ExperimentConfig], trials: u64) -> Result<Vec<RmseRow>> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    configs
        .iter()
        .enumerate()
        .map(|(row, base)| {
            let mut config = base.clone();
            config.seed = row_seed(base.seed, row);
            config.keep_phases = false;
            let sp = SelfProjection::auto(config.probe, DEFAULT_ALPHA_MAX.max(config.alpha_true))?;
            let sim = Simulator::new(config.clone(), &sp)?;
            let inv = Inverter::new(&sp, &config.phases, config.dark_noise, config.route, DEFAULT_ALPHA_MAX)?;
            let mut squared_errors = Vec::with_capacity(trials as usize);
            let mut ambiguous = 0;
            for t in 0..trials {
                let (m0, m1, _) = sim.run(t);
                let est = inv.estimate(m0, m1)?;
                ambiguous += est.ambiguous as u64;
                squared_errors.push((est.alpha_hat - config.alpha_true).powi(2));
            }
            let rmse = (squared_errors.iter().sum::<f64>() / trials as f64).sqrt();
            let crb = crb(&sp, &config, config.alpha_true)?;
            Ok(RmseRow {
                probe: config.probe,
                alpha: config.alpha_true,
                repetitions: config.repetitions,
                trials,
                rmse,
                crb,
                ratio: rmse / crb,
                ambiguous_trials: ambiguous,
                seed: config.seed,
                squared_errors,
            })
        })
        .collect()
}

/// Welch's two-sample t-test; returns the two-sided p-value.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain("each sample needs at least two values".into()));
    }
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McMean {
    pub mean: f64,
    pub std_err: f64,
    pub draws: u64,
}

/// `p0` estimated by drawing a uniform rotation `theta` on top of every
/// phase drawn from `phases`.
pub fn randomized_rotation_statistics(
    sp: &SelfProjection,
    alpha: f64,
    phases: &PhaseDistribution,
    draws: u64,
    seed: u64,
    route: FidelityRoute,
) -> Result<McMean> {
    if draws < 2 {
        return Err(Error::Domain("need at least two draws".into()));
    }
    let fixed = sp.at_alpha(alpha, route)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..draws)
        .map(|i| {
            rng.set_word_pos(i as u128 * SHOT_STRIDE);
            let theta = TAU * rng.random::<f64>();
            let phi = phases.sample(&mut rng);
            fixed.fidelity(theta + phi)
        })
        .collect();
    let (mean, var) = shifted_mean_var(&values);
    let n = draws as f64;
    Ok(McMean { mean, std_err: (var * n / (n - 1.0) / n).sqrt(), draws })
}

/// Mean and population variance accumulated as deviations from the first
/// value, so constant data come out exactly constant.
fn shifted_mean_var(values: &[f64]) -> (f64, f64) {
    let shift = values[0];
    let n = values.len() as f64;
    let d_mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let d_sq = values.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / n;
    (shift + d_mean, (d_sq - d_mean * d_mean).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OverlapRow {
    pub alpha: f64,
    pub mean: f64,
    pub rms: f64,
}

/// Mean and RMS fluctuation of `|<psi|D(alpha, phi_i)|psi>|` over `m`
/// uniformly drawn phases per `alpha`.
pub fn overlap_fluctuations(
    sp: &SelfProjection,
    alphas: &[f64],
    m: u64,
    seed: u64,
    route: FidelityRoute,
) -> Result<Vec<OverlapRow>> {
    if m < 2 {
        return Err(Error::Domain("need at least two phase draws".into()));
    }
    alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let fixed = sp.at_alpha(alpha, route)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let overlaps: Vec<f64> = (0..m)
                .map(|i| {
                    rng.set_word_pos(i as u128 * SHOT_STRIDE);
                    fixed.fidelity(TAU * rng.random::<f64>()).sqrt()
                })
                .collect();
            let (mean, var) = shifted_mean_var(&overlaps);
            Ok(OverlapRow { alpha, mean, rms: var.sqrt() })
        })
        .collect()
}

/// `p0` tabulated against `x = alpha^2 N` for several energies `N`;
/// `spread` is the largest disagreement across energies at equal `x`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalingDiagnostic {
    pub rows: Vec<(f64, f64, f64)>,
    pub spread: f64,
}

pub fn energy_scaling<F>(family: F, energies: &[f64], xs: &[f64], phases: &PhaseDistribution) -> Result<ScalingDiagnostic>
where
    F: Fn(f64) -> StateSpec,
{
    let mut rows = Vec::new();
    let mut spread: f64 = 0.0;
    for &x in xs {
        let mut vals = Vec::new();
        for &n in energies {
            if !(n > 0.0) {
                return Err(Error::Domain("energies must be positive".into()));
            }
            let alpha = (x / n).sqrt();
            let spec = family(n);
            let sp = SelfProjection::auto(spec, alpha)?;
            let p = sp.p0_routed(alpha, phases, FidelityRoute::Auto)?.value;
            rows.push((n, x, p));
            vals.push(p);
        }
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(hi - lo);
    }
    Ok(ScalingDiagnostic { rows, spread })
}
