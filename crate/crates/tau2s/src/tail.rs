//! Remedies for insufficient follow-up: the restricted estimator, parametric
//! tail imputation, and bootstrap variance under both grouping designs.
//!
//! When the largest observations are censored the plain IPCW estimator
//! cannot see concordance information in the tail. The restricted estimator
//! rescales to the observable window; the imputation estimator splits tau-b
//! at a cutoff `t*` into an IPCW part on `[0, t*]` and a model-based part on
//! `(t*, inf)` computed from per-group maximum-likelihood fits.
//!
//! "Logistic" fits default to the log-logistic distribution (support on
//! `t > 0`); a plain logistic on the real line is available for sensitivity
//! comparisons.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::censored::{IpcwKernel, IpcwOptions};
use crate::data::{GroupingDesign, Observation, TauEstimate, TauKind, TwoSampleData};
use crate::error::{Error, Result};
use crate::quad;

/// Parametric families for the tail fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ParamFamily {
    Exponential,
    Weibull,
    LogNormal,
    /// Default reading of "logistic" for survival data.
    LogLogistic,
    /// Plain logistic on the real line; sensitivity option.
    Logistic,
}

impl ParamFamily {
    pub fn label(self) -> &'static str {
        match self {
            ParamFamily::Exponential => "exponential",
            ParamFamily::Weibull => "weibull",
            ParamFamily::LogNormal => "lognormal",
            ParamFamily::LogLogistic => "loglogistic",
            ParamFamily::Logistic => "logistic",
        }
    }

    fn requires_positive_times(self) -> bool {
        matches!(
            self,
            ParamFamily::Weibull | ParamFamily::LogNormal | ParamFamily::LogLogistic
        )
    }
}

/// A fitted parametric survival model.
///
/// Parameter layout: Exponential `[rate]`; Weibull `[shape, scale]`;
/// LogNormal `[log_mean, log_sd]`; LogLogistic `[shape, scale]`;
/// Logistic `[location, scale]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricModel {
    pub family: ParamFamily,
    pub params: Vec<f64>,
    pub loglik: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

impl ParametricModel {
    pub fn survival(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 0.0;
        }
        match self.family {
            ParamFamily::Exponential => (-self.params[0] * t).exp(),
            ParamFamily::Weibull => {
                let (k, lam) = (self.params[0], self.params[1]);
                (-(t / lam).powf(k)).exp()
            }
            ParamFamily::LogNormal => {
                if t <= 0.0 {
                    return 1.0;
                }
                let (mu, sd) = (self.params[0], self.params[1]);
                std_normal().sf((t.ln() - mu) / sd)
            }
            ParamFamily::LogLogistic => {
                let (a, b) = (self.params[0], self.params[1]);
                1.0 / (1.0 + (t / b).powf(a))
            }
            ParamFamily::Logistic => {
                let (m, s) = (self.params[0], self.params[1]);
                1.0 / (1.0 + ((t - m) / s).exp())
            }
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 0.0;
        }
        match self.family {
            ParamFamily::Exponential => {
                let rate = self.params[0];
                rate * (-rate * t).exp()
            }
            ParamFamily::Weibull => {
                let (k, lam) = (self.params[0], self.params[1]);
                (k / lam) * (t / lam).powf(k - 1.0) * (-(t / lam).powf(k)).exp()
            }
            ParamFamily::LogNormal => {
                if t <= 0.0 {
                    return 0.0;
                }
                let (mu, sd) = (self.params[0], self.params[1]);
                std_normal().pdf((t.ln() - mu) / sd) / (t * sd)
            }
            ParamFamily::LogLogistic => {
                let (a, b) = (self.params[0], self.params[1]);
                let z = (t / b).powf(a);
                (a / b) * (t / b).powf(a - 1.0) / (1.0 + z).powi(2)
            }
            ParamFamily::Logistic => {
                let (m, s) = (self.params[0], self.params[1]);
                let e = ((t - m) / s).exp();
                e / (s * (1.0 + e).powi(2))
            }
        }
    }

    /// Inverse CDF, used to integrate tail expectations on the unit interval.
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u));
        match self.family {
            ParamFamily::Exponential => -(-u).ln_1p() / self.params[0],
            ParamFamily::Weibull => {
                let (k, lam) = (self.params[0], self.params[1]);
                lam * (-(-u).ln_1p()).powf(1.0 / k)
            }
            ParamFamily::LogNormal => {
                let (mu, sd) = (self.params[0], self.params[1]);
                if u >= 1.0 {
                    return f64::INFINITY;
                }
                (mu + sd * std_normal().inverse_cdf(u)).exp()
            }
            ParamFamily::LogLogistic => {
                let (a, b) = (self.params[0], self.params[1]);
                if u >= 1.0 {
                    return f64::INFINITY;
                }
                b * (u / (1.0 - u)).powf(1.0 / a)
            }
            ParamFamily::Logistic => {
                let (m, s) = (self.params[0], self.params[1]);
                if u >= 1.0 {
                    return f64::INFINITY;
                }
                m + s * (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }
}

fn log_density(family: ParamFamily, p: &[f64], t: f64) -> f64 {
    match family {
        ParamFamily::Exponential => p[0].ln() - p[0] * t,
        ParamFamily::Weibull => {
            let (k, lam) = (p[0], p[1]);
            let z = t / lam;
            (k / lam).ln() + (k - 1.0) * z.ln() - z.powf(k)
        }
        ParamFamily::LogNormal => {
            let (mu, sd) = (p[0], p[1]);
            let z = (t.ln() - mu) / sd;
            -0.5 * z * z - (sd * t).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }
        ParamFamily::LogLogistic => {
            let (a, b) = (p[0], p[1]);
            let lz = a * (t / b).ln();
            (a / b).ln() + (a - 1.0) * (t / b).ln() - 2.0 * ln_1p_exp(lz)
        }
        ParamFamily::Logistic => {
            let (m, s) = (p[0], p[1]);
            let z = (t - m) / s;
            z - s.ln() - 2.0 * ln_1p_exp(z)
        }
    }
}

fn log_survival(family: ParamFamily, p: &[f64], t: f64) -> f64 {
    match family {
        ParamFamily::Exponential => -p[0] * t,
        ParamFamily::Weibull => -(t / p[1]).powf(p[0]),
        ParamFamily::LogNormal => {
            let z = (t.ln() - p[0]) / p[1];
            std_normal().sf(z).max(f64::MIN_POSITIVE).ln()
        }
        ParamFamily::LogLogistic => -ln_1p_exp(p[0] * (t / p[1]).ln()),
        ParamFamily::Logistic => -ln_1p_exp((t - p[0]) / p[1]),
    }
}

/// `ln(1 + e^x)` without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

const MAX_MLE_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-10;

/// Maximum-likelihood fit of `family` to right-censored observations.
///
/// Exponential has the closed form `rate = events / sum(times)`. The
/// two-parameter families use Newton steps with halving on an unconstrained
/// reparameterisation (positive parameters on the log scale); the log
/// likelihood never decreases across accepted steps.
pub fn fit_parametric(obs: &[(f64, bool)], family: ParamFamily) -> Result<ParametricModel> {
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let events = obs.iter().filter(|&&(_, d)| d).count();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    if family.requires_positive_times() {
        if let Some(&(t, _)) = obs.iter().find(|&&(t, _)| t <= 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
    }

    if family == ParamFamily::Exponential {
        let total: f64 = obs.iter().map(|&(t, _)| t).sum();
        let rate = events as f64 / total;
        let ll = loglik(family, &[rate], obs);
        return Ok(ParametricModel { family, params: vec![rate], loglik: ll });
    }

    // unconstrained parameterisation: theta -> params
    let to_params = |theta: &[f64; 2]| -> [f64; 2] {
        match family {
            ParamFamily::Weibull | ParamFamily::LogLogistic => {
                [theta[0].exp(), theta[1].exp()]
            }
            ParamFamily::LogNormal | ParamFamily::Logistic => [theta[0], theta[1].exp()],
            ParamFamily::Exponential => unreachable!(),
        }
    };

    let mean = obs.iter().map(|&(t, _)| t).sum::<f64>() / obs.len() as f64;
    let mut theta: [f64; 2] = match family {
        ParamFamily::Weibull | ParamFamily::LogLogistic => [0.0, mean.max(1e-12).ln()],
        ParamFamily::LogNormal => {
            let logs: Vec<f64> = obs.iter().map(|&(t, _)| t.ln()).collect();
            let m = logs.iter().sum::<f64>() / logs.len() as f64;
            let v = logs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / logs.len() as f64;
            [m, v.sqrt().max(0.1).ln()]
        }
        ParamFamily::Logistic => {
            let v = obs.iter().map(|&(t, _)| (t - mean).powi(2)).sum::<f64>()
                / obs.len() as f64;
            [mean, (v.sqrt().max(1e-6) * 0.5513).ln()]
        }
        ParamFamily::Exponential => unreachable!(),
    };

    let ll_of = |theta: &[f64; 2]| -> f64 {
        let p = to_params(theta);
        loglik(family, &p, obs)
    };

    let mut ll = ll_of(&theta);
    for _iter in 0..MAX_MLE_ITER {
        let (grad, hess) = grad_hess(&ll_of, &theta);
        if grad[0].abs().max(grad[1].abs()) < GRAD_TOL {
            let p = to_params(&theta);
            return Ok(ParametricModel { family, params: p.to_vec(), loglik: ll });
        }
        // Newton direction on the negative log likelihood
        let det = hess[0] * hess[3] - hess[1] * hess[2];
        let mut step = if det.abs() > 1e-300 {
            [
                -(hess[3] * grad[0] - hess[1] * grad[1]) / det,
                -(hess[0] * grad[1] - hess[2] * grad[0]) / det,
            ]
        } else {
            [grad[0], grad[1]]
        };
        // ascent safeguard: fall back to the gradient if Newton points downhill
        if step[0] * grad[0] + step[1] * grad[1] <= 0.0 {
            step = [grad[0], grad[1]];
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = [theta[0] + scale * step[0], theta[1] + scale * step[1]];
            let cand_ll = ll_of(&cand);
            if cand_ll.is_finite() && cand_ll > ll {
                theta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
            if (scale * step[0]).abs().max((scale * step[1]).abs()) < STEP_TOL {
                break;
            }
        }
        if !accepted {
            // no uphill move larger than the step tolerance remains
            let p = to_params(&theta);
            return Ok(ParametricModel { family, params: p.to_vec(), loglik: ll });
        }
    }
    Err(Error::NonConvergence(MAX_MLE_ITER))
}

fn loglik(family: ParamFamily, params: &[f64], obs: &[(f64, bool)]) -> f64 {
    obs.iter()
        .map(|&(t, d)| {
            if d {
                log_density(family, params, t)
            } else {
                log_survival(family, params, t)
            }
        })
        .sum()
}

/// Central-difference gradient and Hessian of a 2-argument function.
fn grad_hess(f: &impl Fn(&[f64; 2]) -> f64, x: &[f64; 2]) -> ([f64; 2], [f64; 4]) {
    let h = [
        1e-5 * x[0].abs().max(1.0),
        1e-5 * x[1].abs().max(1.0),
    ];
    let eval = |dx: f64, dy: f64| f(&[x[0] + dx, x[1] + dy]);
    let f00 = eval(0.0, 0.0);
    let fp0 = eval(h[0], 0.0);
    let fm0 = eval(-h[0], 0.0);
    let f0p = eval(0.0, h[1]);
    let f0m = eval(0.0, -h[1]);
    let fpp = eval(h[0], h[1]);
    let fpm = eval(h[0], -h[1]);
    let fmp = eval(-h[0], h[1]);
    let fmm = eval(-h[0], -h[1]);
    let grad = [(fp0 - fm0) / (2.0 * h[0]), (f0p - f0m) / (2.0 * h[1])];
    let hxx = (fp0 - 2.0 * f00 + fm0) / (h[0] * h[0]);
    let hyy = (f0p - 2.0 * f00 + f0m) / (h[1] * h[1]);
    let hxy = (fpp - fpm - fmp + fmm) / (4.0 * h[0] * h[1]);
    (grad, [hxx, hxy, hxy, hyy])
}

/// Restricted tau-b: the IPCW estimate rescaled to the observable window,
/// `tau_b / (1 - S0(Y_max) S1(Y_max))` with per-group event Kaplan-Meier
/// curves. Orderable pairs with vanishing censoring weight are excluded from
/// the numerator (the restricted estimand conditions on the window).
pub fn tau_b_restricted(data: &TwoSampleData, options: IpcwOptions) -> Result<f64> {
    let kernel = IpcwKernel::build(data, options.excluding_zero_weights())?;
    let y_max = data.max_time();
    let s0 = kernel.event_km(0).value_at(y_max);
    let s1 = kernel.event_km(1).value_at(y_max);
    let denom = 1.0 - s0 * s1;
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(kernel.tau_b() / denom)
}

fn check_t_star(data: &TwoSampleData, t_star: f64) -> Result<()> {
    let y_max = data.max_time();
    if t_star > y_max {
        // beyond the window the split is still well defined as long as the
        // empirical P(Y > t*) plateau is positive, i.e. the largest
        // observation is censored
        let max_is_event = data
            .observations()
            .iter()
            .any(|o| o.time == y_max && o.status);
        if max_is_event {
            return Err(Error::TStarTooLarge { tstar: t_star, ymax: y_max });
        }
    }
    Ok(())
}

/// IPCW part of the split estimator: pairs with minimum at or below `t*`.
///
/// `normalized` replaces the raw sum by the weighted concordance fraction
/// rescaled to the window mass `1 - S0(t*) S1(t*)`, keeping the part inside
/// `[-(1 - S0 S1), +(1 - S0 S1)]`.
pub fn tau_star_part1(
    data: &TwoSampleData,
    t_star: f64,
    options: IpcwOptions,
    normalized: bool,
) -> Result<f64> {
    check_t_star(data, t_star)?;
    let kernel = IpcwKernel::build(data, options.excluding_zero_weights())?;
    if let Some(t) = kernel.zero_weight_min_time {
        if t <= t_star {
            return Err(Error::ZeroCensoringWeight { time: t, product: 0.0 });
        }
    }
    let num = kernel.zeta_sum_up_to(t_star);
    if !normalized {
        return Ok(num / (data.n0() as f64 * data.n1() as f64));
    }
    let mass = kernel.weight_sum_up_to(t_star);
    if mass <= 0.0 {
        return Ok(0.0);
    }
    let s0 = kernel.event_km(0).value_at(t_star);
    let s1 = kernel.event_km(1).value_at(t_star);
    Ok(num / mass * (1.0 - s0 * s1))
}

/// Model-based tail part:
/// `int_{t*}^inf S1* dF0* - int_{t*}^inf S0* dF1*` for two fitted models.
///
/// Each integral is evaluated on the probability scale as
/// `int_{F(t*)}^1 S_other(Q(u)) du` (exactly when both models are
/// exponential, by the closed form).
pub fn tau_star_part2(
    model0: &ParametricModel,
    model1: &ParametricModel,
    t_star: f64,
) -> Result<f64> {
    if model0.family == ParamFamily::Exponential && model1.family == ParamFamily::Exponential {
        let (l0, l1) = (model0.params[0], model1.params[0]);
        return Ok((-(l0 + l1) * t_star).exp() * (l0 - l1) / (l0 + l1));
    }
    let first = quad::integrate(
        |u| model1.survival(model0.quantile(u)),
        model0.cdf(t_star),
        1.0,
        1e-9,
    )?;
    let second = quad::integrate(
        |u| model0.survival(model1.quantile(u)),
        model1.cdf(t_star),
        1.0,
        1e-9,
    )?;
    Ok(first - second)
}

/// The split estimator with its ingredients.
#[derive(Debug, Clone)]
pub struct TauStar {
    pub value: f64,
    pub part1: f64,
    pub part2: f64,
    pub model0: ParametricModel,
    pub model1: ParametricModel,
}

/// Split tau-b estimator: IPCW on `[0, t*]` plus parametric imputation
/// beyond, with per-group fits of `family` to the observed `(Y, delta)`.
pub fn tau_star(
    data: &TwoSampleData,
    t_star: f64,
    family: ParamFamily,
    options: IpcwOptions,
    normalized: bool,
) -> Result<TauStar> {
    let part1 = tau_star_part1(data, t_star, options, normalized)?;
    let model0 = fit_parametric(&data.group_obs(0), family)?;
    let model1 = fit_parametric(&data.group_obs(1), family)?;
    let part2 = tau_star_part2(&model0, &model1, t_star)?;
    Ok(TauStar { value: part1 + part2, part1, part2, model0, model1 })
}

/// Bootstrap variance and percentile interval of an arbitrary estimator.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub successes: usize,
    pub failures: usize,
}

/// Nonparametric bootstrap respecting the grouping design: under `Random`
/// the pooled sample is resampled; under `Fixed` each group is resampled
/// separately with its size held fixed.
///
/// Replicates draw from independent, scheduling-invariant RNG streams keyed
/// by `(seed, replicate)`. Estimator failures on resamples are counted and
/// tolerated up to 5% of `b`.
pub fn bootstrap_variance<F>(
    data: &TwoSampleData,
    estimator: F,
    design: GroupingDesign,
    b: usize,
    seed: u64,
) -> Result<BootstrapSummary>
where
    F: Fn(&TwoSampleData) -> Result<f64> + Sync,
{
    bootstrap_variance_level(data, estimator, design, b, seed, 0.95)
}

pub fn bootstrap_variance_level<F>(
    data: &TwoSampleData,
    estimator: F,
    design: GroupingDesign,
    b: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapSummary>
where
    F: Fn(&TwoSampleData) -> Result<f64> + Sync,
{
    assert!(b >= 2, "bootstrap needs at least 2 resamples");
    let obs = data.observations();
    let idx0: Vec<usize> = (0..obs.len()).filter(|&i| obs[i].group == 0).collect();
    let idx1: Vec<usize> = (0..obs.len()).filter(|&i| obs[i].group == 1).collect();

    let results: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let mut sample: Vec<Observation> = Vec::with_capacity(obs.len());
            match design {
                GroupingDesign::Random => {
                    for _ in 0..obs.len() {
                        sample.push(obs[rng.random_range(0..obs.len())]);
                    }
                }
                GroupingDesign::Fixed => {
                    for _ in 0..idx0.len() {
                        sample.push(obs[idx0[rng.random_range(0..idx0.len())]]);
                    }
                    for _ in 0..idx1.len() {
                        sample.push(obs[idx1[rng.random_range(0..idx1.len())]]);
                    }
                }
            }
            TwoSampleData::new(sample)
                .ok()
                .and_then(|d| estimator(&d).ok())
                .filter(|v| v.is_finite())
        })
        .collect();

    let mut values: Vec<f64> = results.iter().copied().flatten().collect();
    let failures = b - values.len();
    if failures * 20 > b {
        return Err(Error::TooManyResampleFailures { failed: failures, total: b });
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapSummary {
        variance,
        ci_lower: percentile(&values, alpha),
        ci_upper: percentile(&values, 1.0 - alpha),
        level,
        successes: values.len(),
        failures,
    })
}

/// Independent RNG stream for one replicate of a seeded procedure.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Linear-interpolation sample quantile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n as f64 - 1.0) * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Restricted estimator packaged with a bootstrap variance.
pub fn tau_b_restricted_estimate(
    data: &TwoSampleData,
    options: IpcwOptions,
    design: GroupingDesign,
    b: usize,
    seed: u64,
) -> Result<TauEstimate> {
    let value = tau_b_restricted(data, options)?;
    let boot = bootstrap_variance(data, |d| tau_b_restricted(d, options), design, b, seed)?;
    Ok(TauEstimate {
        value,
        variance: boot.variance,
        design,
        n0: data.n0(),
        n1: data.n1(),
        kind: TauKind::RestrictedTauB,
        components: None,
    })
}

/// Split estimator packaged with a bootstrap variance.
pub fn tau_star_estimate(
    data: &TwoSampleData,
    t_star: f64,
    family: ParamFamily,
    options: IpcwOptions,
    normalized: bool,
    design: GroupingDesign,
    b: usize,
    seed: u64,
) -> Result<(TauEstimate, BootstrapSummary, TauStar)> {
    let star = tau_star(data, t_star, family, options, normalized)?;
    let boot = bootstrap_variance(
        data,
        |d| tau_star(d, t_star, family, options, normalized).map(|s| s.value),
        design,
        b,
        seed,
    )?;
    Ok((
        TauEstimate {
            value: star.value,
            variance: boot.variance,
            design,
            n0: data.n0(),
            n1: data.n1(),
            kind: TauKind::ImputedTauB,
            components: None,
        },
        boot,
        star,
    ))
}
