//! Nonparametric survival machinery: right-continuous step functions,
//! Kaplan-Meier, Nelson-Aalen and empirical survival estimates.
//!
//! Conventions:
//! - all estimates are right-continuous with left limits; `value_at(t)` is
//!   the right-continuous value, `left_limit(t)` the value just before `t`;
//! - at tied times, events are processed before censorings: everyone with
//!   `Y >= t` is at risk for the events at `t`;
//! - beyond the largest observation the last value is held constant.

use crate::data::TwoSampleData;
use crate::error::{Error, Result};

/// Sparse right-continuous step function; evaluation is a binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    initial_value: f64,
}

impl StepFunction {
    /// Build from strictly increasing jump times and per-jump values.
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, initial_value: f64) -> Self {
        debug_assert_eq!(jump_times.len(), values.len());
        debug_assert!(jump_times.windows(2).all(|w| w[0] < w[1]));
        Self { jump_times, values, initial_value }
    }

    /// Constant function.
    pub fn constant(value: f64) -> Self {
        Self { jump_times: Vec::new(), values: Vec::new(), initial_value: value }
    }

    /// Right-continuous value `f(t)`.
    pub fn value_at(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&x| x <= t) {
            0 => self.initial_value,
            i => self.values[i - 1],
        }
    }

    /// Left limit `f(t-)`; equals `f(t)` unless `t` is a jump time.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&x| x < t) {
            0 => self.initial_value,
            i => self.values[i - 1],
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    /// Jump heights `f(t) - f(t-)` paired with their times.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jump_times.iter().enumerate().map(|(i, &t)| {
            let prev = if i == 0 { self.initial_value } else { self.values[i - 1] };
            (t, self.values[i] - prev)
        })
    }
}

/// Group observations by distinct time, counting events and removals.
/// Input need not be sorted. Returns (time, n_events, n_total) ascending.
fn tally(obs: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<(f64, bool)> = obs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for &(t, flag) in &sorted {
        match out.last_mut() {
            Some(last) if last.0 == t => {
                last.1 += usize::from(flag);
                last.2 += 1;
            }
            _ => out.push((t, usize::from(flag), 1)),
        }
    }
    out
}

/// Empirical survival `S(t) = #{T_i > t} / n` of a complete sample.
pub fn empirical_survival(times: &[f64]) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::EmptyInput);
    }
    let obs: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
    kaplan_meier(&obs)
}

/// Kaplan-Meier product-limit estimator from `(time, event)` pairs.
///
/// Drops only at event times; censorings shrink the risk set. The curve is
/// held constant after the largest observation (reaching 0 only when the
/// largest observation is an event).
pub fn kaplan_meier(obs: &[(f64, bool)]) -> Result<StepFunction> {
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let groups = tally(obs);
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let mut jumps = Vec::new();
    let mut values = Vec::new();
    for (t, d, total) in groups {
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            jumps.push(t);
            values.push(s);
        }
        at_risk -= total;
    }
    Ok(StepFunction::new(jumps, values, 1.0))
}

/// Nelson-Aalen cumulative-hazard estimator from `(time, event)` pairs.
///
/// Increment at each event time is `d(t) / R(t)`.
pub fn nelson_aalen(obs: &[(f64, bool)]) -> Result<StepFunction> {
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let groups = tally(obs);
    let mut at_risk = obs.len();
    let mut h = 0.0;
    let mut jumps = Vec::new();
    let mut values = Vec::new();
    for (t, d, total) in groups {
        if d > 0 {
            h += d as f64 / at_risk as f64;
            jumps.push(t);
            values.push(h);
        }
        at_risk -= total;
    }
    Ok(StepFunction::new(jumps, values, 0.0))
}

/// Kaplan-Meier estimates of the censoring survival functions `G_0`, `G_1`.
///
/// Flags are flipped (`1 - delta`): censorings are the "events" here. With
/// `pooled = true` both returned functions are the same pooled-sample
/// estimate, appropriate when the two censoring distributions are equal.
pub fn censoring_survival(
    data: &TwoSampleData,
    pooled: bool,
) -> Result<(StepFunction, StepFunction)> {
    let flip = |v: Vec<(f64, bool)>| -> Vec<(f64, bool)> {
        v.into_iter().map(|(t, s)| (t, !s)).collect()
    };
    if pooled {
        let all: Vec<(f64, bool)> = data
            .observations()
            .iter()
            .map(|o| (o.time, !o.status))
            .collect();
        let g = kaplan_meier(&all)?;
        Ok((g.clone(), g))
    } else {
        let g0 = kaplan_meier(&flip(data.group_obs(0)))?;
        let g1 = kaplan_meier(&flip(data.group_obs(1)))?;
        Ok((g0, g1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use approx::assert_relative_eq;

    #[test]
    fn empirical_survival_counts() {
        let s = empirical_survival(&[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(s.value_at(2.0), 1.0 / 3.0);
        assert_relative_eq!(s.value_at(0.5), 1.0);
        let tied = empirical_survival(&[1.0, 1.0, 2.0]).unwrap();
        // strict inequality: both ties drop out at t = 1
        assert_relative_eq!(tied.value_at(1.0), 1.0 / 3.0);
    }

    #[test]
    fn km_no_censoring_equals_empirical() {
        let times = [0.3, 1.1, 1.1, 2.4, 5.0, 0.3, 9.9];
        let km = kaplan_meier(&times.map(|t| (t, true))).unwrap();
        let emp = empirical_survival(&times).unwrap();
        for t in [0.0, 0.3, 0.7, 1.1, 2.4, 4.9, 5.0, 9.9, 12.0] {
            assert_relative_eq!(km.value_at(t), emp.value_at(t));
            assert_relative_eq!(km.left_limit(t), emp.left_limit(t));
        }
    }

    #[test]
    fn km_hand_product_limit() {
        // censored obs never drops the curve
        let s = kaplan_meier(&[(1.0, true), (2.0, false)]).unwrap();
        assert_relative_eq!(s.value_at(1.0), 0.5);
        assert_relative_eq!(s.value_at(10.0), 0.5);
        // at t=3 the risk set is {3}, factor (1 - 1/1) = 0
        let s = kaplan_meier(&[(2.0, false), (3.0, true)]).unwrap();
        assert_relative_eq!(s.value_at(2.9), 1.0);
        assert_relative_eq!(s.value_at(3.0), 0.0);
    }

    #[test]
    fn km_full_events_drops_to_zero() {
        let s = kaplan_meier(&[(1.0, true), (2.0, true), (3.0, true)]).unwrap();
        assert_relative_eq!(s.value_at(1.0), 2.0 / 3.0);
        assert_relative_eq!(s.value_at(2.0), 1.0 / 3.0);
        assert_relative_eq!(s.value_at(3.0), 0.0);
    }

    #[test]
    fn na_hand_sums() {
        let h = nelson_aalen(&[(1.0, true), (2.0, true)]).unwrap();
        assert_relative_eq!(h.value_at(1.0), 0.5);
        assert_relative_eq!(h.value_at(2.0), 1.5);
        // tied events share the risk set
        let h = nelson_aalen(&[(1.0, true), (1.0, true)]).unwrap();
        assert_relative_eq!(h.value_at(1.0), 1.0);
        // all censored: identically zero
        let h = nelson_aalen(&[(1.0, false), (2.0, false)]).unwrap();
        assert_eq!(h.jump_times().len(), 0);
        assert_relative_eq!(h.value_at(5.0), 0.0);
    }

    #[test]
    fn left_limit_contract() {
        let s = kaplan_meier(&[(1.0, true), (2.0, true), (3.0, true)]).unwrap();
        assert_relative_eq!(s.left_limit(1.0), 1.0);
        assert_relative_eq!(s.left_limit(2.0), 2.0 / 3.0);
        assert_relative_eq!(s.left_limit(2.5), s.value_at(2.5));
        // monotone nonincreasing, values in [0,1]
        for w in s.values().windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn censoring_survival_modes() {
        let data = TwoSampleData::new(vec![
            Observation::new(1.0, true, 0),
            Observation::new(2.0, true, 0),
            Observation::new(2.0, true, 1),
            Observation::new(3.0, false, 1),
        ])
        .unwrap();
        let (g0, g1) = censoring_survival(&data, false).unwrap();
        // group 0 fully uncensored: G0 identically 1
        assert_eq!(g0.jump_times().len(), 0);
        assert_relative_eq!(g0.value_at(100.0), 1.0);
        // group 1: censoring "event" at 3 with risk set {3}
        assert_relative_eq!(g1.value_at(2.9), 1.0);
        assert_relative_eq!(g1.value_at(3.0), 0.0);

        let (p0, p1) = censoring_survival(&data, true).unwrap();
        assert_eq!(p0, p1);
    }

    #[test]
    fn km_and_na_share_jump_locations() {
        let obs = [
            (0.5, true),
            (1.0, false),
            (1.5, true),
            (1.5, true),
            (2.0, false),
            (3.0, true),
        ];
        let km = kaplan_meier(&obs).unwrap();
        let na = nelson_aalen(&obs).unwrap();
        assert_eq!(km.jump_times(), na.jump_times());
        for w in na.values().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}
