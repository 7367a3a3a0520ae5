//! The weighted-log-rank family in its three equivalent representations,
//! plus the delayed-effect restriction of the pairwise form.
//!
//! All three statistics are sums over distinct event times `u` of
//! `W(u) { dN0(u) - R0(u) dN(u)/R(u) }` and differ only in the weight:
//! log-rank `W = 1`, Gehan `W = R`, proposed `W = R/(G0 G1)`. Orientation is
//! fixed so a positive statistic means group-1 times tend to be larger
//! (matching the sign of tau-b); the pairwise form shares this orientation.
//!
//! With tied data the integral and pairwise forms follow their own tie
//! conventions and can differ; on tie-free data they agree exactly.

use crate::censored::{IpcwKernel, IpcwOptions};
use crate::data::{GroupingDesign, TauEstimate, TauKind, TwoSampleData};
use crate::error::{Error, Result};
use crate::stepfun::{self, StepFunction};
use crate::tail;

/// Weight family of a weighted-log-rank statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WeightFamily {
    LogRank,
    Gehan,
    Proposed,
}

impl WeightFamily {
    pub fn label(self) -> &'static str {
        match self {
            WeightFamily::LogRank => "logrank",
            WeightFamily::Gehan => "gehan",
            WeightFamily::Proposed => "proposed",
        }
    }
}

/// A weighted-log-rank statistic standardised against its null variance.
#[derive(Debug, Clone)]
pub struct WlrResult {
    /// Unnormalised statistic `U(inf)`.
    pub statistic: f64,
    pub weight_family: WeightFamily,
    /// Estimated null variance of `statistic`.
    pub variance: f64,
    pub z: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
}

fn normal_two_sided_p(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    2.0 * normal.sf(z.abs())
}

/// Pooled event-time sweep: distinct event times with group risk/event counts.
struct EventSweep {
    /// (time, r0, r1, d0, d1)
    rows: Vec<(f64, f64, f64, f64, f64)>,
}

impl EventSweep {
    fn new(data: &TwoSampleData) -> Self {
        let mut obs: Vec<(f64, bool, u8)> = data
            .observations()
            .iter()
            .map(|o| (o.time, o.status, o.group))
            .collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = obs.len();
        let mut rows = Vec::new();
        let mut r0 = data.n0() as f64;
        let mut r1 = data.n1() as f64;
        let mut idx = 0;
        while idx < n {
            let t = obs[idx].0;
            let mut d0 = 0.0;
            let mut d1 = 0.0;
            let mut removed0 = 0.0;
            let mut removed1 = 0.0;
            let mut j = idx;
            while j < n && obs[j].0 == t {
                let (_, status, group) = obs[j];
                if group == 0 {
                    removed0 += 1.0;
                    d0 += f64::from(status);
                } else {
                    removed1 += 1.0;
                    d1 += f64::from(status);
                }
                j += 1;
            }
            if d0 + d1 > 0.0 {
                rows.push((t, r0, r1, d0, d1));
            }
            r0 -= removed0;
            r1 -= removed1;
            idx = j;
        }
        Self { rows }
    }
}

const MIN_G_PRODUCT: f64 = 1e-12;

fn g_product_at(
    g0: &StepFunction,
    g1: &StepFunction,
    options: IpcwOptions,
    t: f64,
) -> Result<f64> {
    let p = match options.g_evaluation {
        crate::censored::GEvaluation::LeftLimit => g0.left_limit(t) * g1.left_limit(t),
        crate::censored::GEvaluation::RightContinuous => g0.value_at(t) * g1.value_at(t),
    };
    if p < MIN_G_PRODUCT {
        return Err(Error::ZeroCensoringWeight { time: t, product: p });
    }
    Ok(p)
}

/// Weighted-log-rank statistic in the integral (event-time sweep) form,
/// without standardisation.
pub fn integral_form(
    data: &TwoSampleData,
    family: WeightFamily,
    options: IpcwOptions,
) -> Result<f64> {
    let (statistic, _) = sweep_statistic(data, family, options)?;
    Ok(statistic)
}

fn sweep_statistic(
    data: &TwoSampleData,
    family: WeightFamily,
    options: IpcwOptions,
) -> Result<(f64, f64)> {
    let sweep = EventSweep::new(data);
    if sweep.rows.is_empty() {
        return Err(Error::NoEvents);
    }
    let gs = match family {
        WeightFamily::Proposed => Some(stepfun::censoring_survival(data, options.pooled_censoring)?),
        _ => None,
    };
    let mut statistic = 0.0;
    let mut hyper_var = 0.0;
    for &(t, r0, r1, d0, d1) in &sweep.rows {
        let r = r0 + r1;
        let d = d0 + d1;
        let weight = match family {
            WeightFamily::LogRank => 1.0,
            WeightFamily::Gehan => r,
            WeightFamily::Proposed => {
                let (g0, g1) = gs.as_ref().unwrap();
                if r0 * r1 == 0.0 {
                    0.0 // weight multiplies a zero increment anyway
                } else {
                    r / g_product_at(g0, g1, options, t)?
                }
            }
        };
        statistic += weight * (d0 - r0 * d / r);
        if r > 1.0 {
            hyper_var += weight * weight * (r0 * r1 * d * (r - d)) / (r * r * (r - 1.0));
        }
    }
    Ok((statistic, hyper_var))
}

/// Weighted-log-rank test: the integral-form statistic standardised against
/// its null variance.
///
/// Null variances: log-rank and Gehan use the standard hypergeometric
/// martingale variance; the proposed statistic uses the null-specialised
/// IPCW variance scaled back to the statistic.
pub fn wlr_statistic(
    data: &TwoSampleData,
    family: WeightFamily,
    options: IpcwOptions,
) -> Result<WlrResult> {
    let (statistic, hyper_var) = sweep_statistic(data, family, options)?;
    let variance = match family {
        WeightFamily::Proposed => {
            let null =
                crate::censored::variance_null_censored(data, GroupingDesign::Fixed, options)?;
            (data.n0() as f64 * data.n1() as f64).powi(2) * null
        }
        _ => hyper_var,
    };
    if variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let z = statistic / variance.sqrt();
    Ok(WlrResult { statistic, weight_family: family, variance, z, p_value: normal_two_sided_p(z) })
}

/// Per-subject linear-rank scores `V_i(inf)`, in input order.
///
/// The scores sum to zero, and `sum_i X_i V_i(inf)` reproduces the
/// corresponding [`wlr_statistic`] exactly.
pub fn wlr_scores(
    data: &TwoSampleData,
    family: WeightFamily,
    options: IpcwOptions,
) -> Result<Vec<f64>> {
    let sweep = EventSweep::new(data);
    let gs = match family {
        WeightFamily::Proposed => Some(stepfun::censoring_survival(data, options.pooled_censoring)?),
        _ => None,
    };
    // cumulative weighted hazard-type sums over event times <= t
    let mut times = Vec::with_capacity(sweep.rows.len());
    let mut cum = Vec::with_capacity(sweep.rows.len());
    let mut weight_at = Vec::with_capacity(sweep.rows.len());
    let mut acc = 0.0;
    for &(t, r0, r1, d0, d1) in &sweep.rows {
        let r = r0 + r1;
        let d = d0 + d1;
        let w = match family {
            WeightFamily::LogRank => 1.0 / r,
            WeightFamily::Gehan => 1.0,
            WeightFamily::Proposed => {
                // once either group leaves the risk set the integral
                // increment is identically zero but the per-subject weight
                // 1/(G0 G1) may no longer exist; drop the time from both
                // score integrals (net contribution zero either way)
                if r0 * r1 == 0.0 {
                    continue;
                }
                let (g0, g1) = gs.as_ref().unwrap();
                1.0 / g_product_at(g0, g1, options, t)?
            }
        };
        acc += w * d;
        times.push(t);
        cum.push(acc);
        weight_at.push(w);
    }

    let mut sorted_times: Vec<f64> = data.observations().iter().map(|o| o.time).collect();
    sorted_times.sort_by(f64::total_cmp);
    let risk_at = |t: f64| (sorted_times.len() - sorted_times.partition_point(|&x| x < t)) as f64;

    let score = |y: f64, event: bool| -> f64 {
        let k = times.partition_point(|&t| t <= y);
        let integral = if k == 0 { 0.0 } else { cum[k - 1] };
        if !event {
            return integral;
        }
        // subtract the dN_i term evaluated at the subject's own event time
        let idx = times.partition_point(|&t| t < y);
        if idx >= times.len() || times[idx] != y {
            // event time dropped above (one-group risk set)
            return integral;
        }
        let own = match family {
            WeightFamily::LogRank => 1.0,
            WeightFamily::Gehan => risk_at(y),
            WeightFamily::Proposed => weight_at[idx] * risk_at(y),
        };
        integral - own
    };

    Ok(data.observations().iter().map(|o| score(o.time, o.status)).collect())
}

/// Pairwise (U-statistic) form: `sum_{i<j} gamma_ij O_ij sign{(X_i-X_j)(Y_i-Y_j)}`.
///
/// For the proposed family this is exactly the IPCW numerator of tau-b.
pub fn ustat_form(
    data: &TwoSampleData,
    family: WeightFamily,
    options: IpcwOptions,
) -> Result<f64> {
    match family {
        WeightFamily::Proposed => {
            let kernel = IpcwKernel::build(data, options)?;
            Ok(kernel.u_hat)
        }
        _ => {
            let obs = data.observations();
            let mut sorted_times: Vec<f64> = obs.iter().map(|o| o.time).collect();
            sorted_times.sort_by(f64::total_cmp);
            let risk_at =
                |t: f64| (sorted_times.len() - sorted_times.partition_point(|&x| x < t)) as f64;
            let mut total = 0.0;
            for i in 0..obs.len() {
                for j in (i + 1)..obs.len() {
                    let (a, b) = (&obs[i], &obs[j]);
                    if a.group == b.group || a.time == b.time {
                        continue;
                    }
                    let orderable = if a.time < b.time { a.status } else { b.status };
                    if !orderable {
                        continue;
                    }
                    let sign = ((a.group as f64 - b.group as f64)
                        * (a.time - b.time))
                        .signum();
                    let gamma = match family {
                        WeightFamily::LogRank => 1.0 / risk_at(a.time.min(b.time)),
                        WeightFamily::Gehan => 1.0,
                        WeightFamily::Proposed => unreachable!(),
                    };
                    total += gamma * sign;
                }
            }
            Ok(total)
        }
    }
}

/// Delayed-effect statistic: the pairwise sum restricted to pairs whose
/// minimum exceeds `t0`, and its normalised version in `[-1, 1]`.
///
/// The variance of the normalised statistic is estimated by bootstrap with
/// `bootstrap_b` resamples (no analytic formula is implemented).
pub fn delayed_u(
    data: &TwoSampleData,
    t0: f64,
    options: IpcwOptions,
    design: GroupingDesign,
    bootstrap_b: usize,
    seed: u64,
) -> Result<(f64, TauEstimate)> {
    let (u_d, tau_d) = delayed_point(data, t0, options)?;
    let boot = tail::bootstrap_variance(
        data,
        |resample| delayed_point(resample, t0, options).map(|(_, tau)| tau),
        design,
        bootstrap_b,
        seed,
    )?;
    Ok((
        u_d,
        TauEstimate {
            value: tau_d,
            variance: boot.variance,
            design,
            n0: data.n0(),
            n1: data.n1(),
            kind: TauKind::DelayedTauB,
            components: None,
        },
    ))
}

/// Point values of the delayed statistic: `(U_D, tau_D)`.
pub fn delayed_point(data: &TwoSampleData, t0: f64, options: IpcwOptions) -> Result<(f64, f64)> {
    let kernel = IpcwKernel::build(data, options)?;
    let u_d = kernel.zeta_sum_beyond(t0);
    let mass = kernel.weight_sum_beyond(t0);
    if mass <= 0.0 {
        return Err(Error::NoPairsBeyondT0(t0));
    }
    Ok((u_d, u_d / mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complete;
    use crate::data::Observation;
    use approx::assert_relative_eq;

    fn data(spec: &[(f64, bool, u8)]) -> TwoSampleData {
        TwoSampleData::new(spec.iter().map(|&(t, s, g)| Observation::new(t, s, g)).collect())
            .unwrap()
    }

    fn random_censored(n: usize, state: &mut u64) -> TwoSampleData {
        let mut next = move |state: &mut u64| {
            *state ^= *state << 13;
            *state ^= *state >> 7;
            *state ^= *state << 17;
            *state
        };
        loop {
            let mut obs = Vec::new();
            for _ in 0..n {
                let t = ((next(state) % 100_000) as f64 + 1.0) / 10_000.0;
                let s = next(state) % 3 != 0;
                let g = (next(state) % 2) as u8;
                obs.push((t, s, g));
            }
            obs[0].2 = 0;
            obs[1].2 = 1;
            obs[0].1 = true;
            let d = data(&obs);
            if IpcwKernel::build(&d, IpcwOptions::default()).is_ok() {
                return d;
            }
        }
    }

    #[test]
    fn single_event_logrank() {
        // one event total: statistic = d0 - R0/R at that time
        let d = data(&[(1.0, true, 0), (2.0, false, 1)]);
        let res = wlr_statistic(&d, WeightFamily::LogRank, IpcwOptions::default()).unwrap();
        assert_relative_eq!(res.statistic, 1.0 - 0.5);
    }

    #[test]
    fn lr_two_subjects_pairwise() {
        let d = data(&[(1.0, true, 0), (2.0, true, 1)]);
        let u = ustat_form(&d, WeightFamily::LogRank, IpcwOptions::default()).unwrap();
        assert_relative_eq!(u, 0.5);
    }

    #[test]
    fn gehan_hand_example() {
        // G0 = {(1,e),(4,e)}, G1 = {(2,e),(3,c)}: +1 +1 -1 + 0
        let d = data(&[(1.0, true, 0), (4.0, true, 0), (2.0, true, 1), (3.0, false, 1)]);
        let u = ustat_form(&d, WeightFamily::Gehan, IpcwOptions::default()).unwrap();
        assert_relative_eq!(u, 1.0);
    }

    #[test]
    fn gehan_uncensored_equals_wmw() {
        let d = data(&[
            (0.3, true, 0),
            (2.7, true, 0),
            (1.9, true, 1),
            (0.8, true, 1),
            (3.4, true, 1),
        ]);
        let u = ustat_form(&d, WeightFamily::Gehan, IpcwOptions::default()).unwrap();
        assert_relative_eq!(u, complete::wmw_u_statistic(&d).unwrap());
    }

    #[test]
    fn representations_agree_on_tiefree_data() {
        let mut state = 0x5deece66du64;
        for _ in 0..40 {
            let d = random_censored(30, &mut state);
            for family in [WeightFamily::LogRank, WeightFamily::Gehan, WeightFamily::Proposed] {
                let integral = integral_form(&d, family, IpcwOptions::default()).unwrap();
                let pairwise = ustat_form(&d, family, IpcwOptions::default()).unwrap();
                assert_relative_eq!(integral, pairwise, max_relative = 1e-10, epsilon = 1e-10);
                let scores = wlr_scores(&d, family, IpcwOptions::default()).unwrap();
                let total: f64 = scores.iter().sum();
                assert!(total.abs() < 1e-10, "score sum {total}");
                let grouped: f64 = scores
                    .iter()
                    .zip(data_groups(&d))
                    .map(|(v, g)| v * g as f64)
                    .sum();
                assert_relative_eq!(grouped, integral, max_relative = 1e-10, epsilon = 1e-10);
            }
        }
    }

    fn data_groups(d: &TwoSampleData) -> Vec<u8> {
        d.observations().iter().map(|o| o.group).collect()
    }

    #[test]
    fn proposed_pairwise_is_ipcw_numerator() {
        let d = data(&[
            (0.7, true, 0),
            (1.1, false, 0),
            (2.0, true, 0),
            (0.9, true, 1),
            (1.6, false, 1),
            (2.8, true, 1),
        ]);
        let u = ustat_form(&d, WeightFamily::Proposed, IpcwOptions::default()).unwrap();
        let tau = crate::censored::ipcw_tau_b(&d, IpcwOptions::default(), GroupingDesign::Fixed)
            .unwrap()
            .value;
        assert_relative_eq!(u, tau * (d.n0() as f64 * d.n1() as f64), epsilon = 1e-12);
    }

    #[test]
    fn delayed_t0_zero_equals_full_u() {
        let mut state = 0xfeedbeefu64;
        for _ in 0..20 {
            let d = random_censored(20, &mut state);
            let kernel = IpcwKernel::build(&d, IpcwOptions::default()).unwrap();
            let (u_d, tau_d) = delayed_point(&d, 0.0, IpcwOptions::default()).unwrap();
            assert_eq!(u_d, kernel.u_hat);
            assert!(tau_d.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn delayed_beyond_max_is_error() {
        let d = data(&[(1.0, true, 0), (2.0, true, 1)]);
        let err = delayed_point(&d, 10.0, IpcwOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoPairsBeyondT0(_)));
    }

    #[test]
    fn no_events_is_error() {
        let d = data(&[(1.0, false, 0), (2.0, false, 1)]);
        let err = wlr_statistic(&d, WeightFamily::LogRank, IpcwOptions::default()).unwrap_err();
        assert_eq!(err, Error::NoEvents);
    }
}
