//! Core domain types shared by all estimators.
//!
//! An [`Observation`] is a `(time, status, group)` triple: `status = true`
//! means the event was observed, `false` means right-censored; `group` is a
//! binary label. Complete data is the special case `status == true`
//! everywhere. Group labels must be exactly 0/1 here; mapping arbitrary
//! labels onto {0, 1} is the front end's job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-valued sign; `f64::signum` maps 0 to 1, which is wrong for tied
/// comparisons.
pub(crate) fn sign3(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One subject: observed time, event indicator and group label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    /// `true` = event observed, `false` = right-censored.
    pub status: bool,
    /// Group label, 0 or 1.
    pub group: u8,
}

impl Observation {
    pub fn new(time: f64, status: bool, group: u8) -> Self {
        Self { time, status, group }
    }

    /// Complete-data observation (event observed).
    pub fn exact(time: f64, group: u8) -> Self {
        Self { time, status: true, group }
    }
}

/// Whether the group sizes were fixed by design or arose from random labels.
///
/// The point estimators do not depend on this; the asymptotic variances do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupingDesign {
    Fixed,
    Random,
}

/// A validated two-sample dataset with cached group sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    observations: Vec<Observation>,
    n0: usize,
    n1: usize,
}

impl TwoSampleData {
    /// Validate and wrap a set of observations.
    ///
    /// Recomputes the group counts from the labels; both groups must be
    /// non-empty, times finite and nonnegative, labels in {0, 1}.
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let mut n0 = 0;
        let mut n1 = 0;
        for (index, obs) in observations.iter().enumerate() {
            if !obs.time.is_finite() || obs.time < 0.0 {
                return Err(Error::NegativeTime { index, time: obs.time });
            }
            match obs.group {
                0 => n0 += 1,
                1 => n1 += 1,
                g => {
                    return Err(Error::NonBinaryGroup { index, label: g as i64 });
                }
            }
        }
        if n0 == 0 {
            return Err(Error::EmptyGroup(0));
        }
        if n1 == 0 {
            return Err(Error::EmptyGroup(1));
        }
        Ok(Self { observations, n0, n1 })
    }

    /// Build from parallel slices of times and groups, all events.
    pub fn complete(times: &[f64], groups: &[u8]) -> Result<Self> {
        assert_eq!(times.len(), groups.len());
        Self::new(
            times
                .iter()
                .zip(groups)
                .map(|(&t, &g)| Observation::exact(t, g))
                .collect(),
        )
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Size of group `g` (0 or 1).
    pub fn group_size(&self, g: u8) -> usize {
        if g == 0 {
            self.n0
        } else {
            self.n1
        }
    }

    /// Empirical group-1 proportion `N_1 / n`.
    pub fn p1_hat(&self) -> f64 {
        self.n1 as f64 / self.n() as f64
    }

    /// Partition into the two groups, preserving within-group input order.
    pub fn split_by_group(&self) -> (Vec<Observation>, Vec<Observation>) {
        let mut g0 = Vec::with_capacity(self.n0);
        let mut g1 = Vec::with_capacity(self.n1);
        for obs in &self.observations {
            if obs.group == 0 {
                g0.push(*obs);
            } else {
                g1.push(*obs);
            }
        }
        (g0, g1)
    }

    /// Times of group `g`, in input order.
    pub fn group_times(&self, g: u8) -> Vec<f64> {
        self.observations
            .iter()
            .filter(|o| o.group == g)
            .map(|o| o.time)
            .collect()
    }

    /// `(time, status)` pairs of group `g`, in input order.
    pub fn group_obs(&self, g: u8) -> Vec<(f64, bool)> {
        self.observations
            .iter()
            .filter(|o| o.group == g)
            .map(|o| (o.time, o.status))
            .collect()
    }

    /// True when every observation is an event.
    pub fn is_complete(&self) -> bool {
        self.observations.iter().all(|o| o.status)
    }

    /// Largest observed time `Y_(n)` over the pooled sample.
    pub fn max_time(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| o.time)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fraction of censored observations in group `g`.
    pub fn censoring_rate(&self, g: u8) -> f64 {
        let (total, censored) = self
            .observations
            .iter()
            .filter(|o| o.group == g)
            .fold((0usize, 0usize), |(t, c), o| {
                (t + 1, c + usize::from(!o.status))
            });
        censored as f64 / total as f64
    }

    /// Copy with the group labels swapped.
    pub fn with_swapped_labels(&self) -> Self {
        let obs = self
            .observations
            .iter()
            .map(|o| Observation::new(o.time, o.status, 1 - o.group))
            .collect();
        Self::new(obs).expect("label swap preserves validity")
    }
}

/// Which estimator produced a [`TauEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauKind {
    CompleteTauA,
    CompleteTauB,
    CensoredTauB,
    RestrictedTauB,
    ImputedTauB,
    DelayedTauB,
}

/// A tau point estimate with the variance of the estimator itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub value: f64,
    /// Variance of the estimate (already divided by n; not the `n sigma^2`
    /// quantity of the limit theorems).
    pub variance: f64,
    pub design: GroupingDesign,
    pub n0: usize,
    pub n1: usize,
    pub kind: TauKind,
    pub components: Option<VarianceComponents>,
}

impl TauEstimate {
    pub fn std_err(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Intermediate quantities of the variance formulas, exposed for reporting
/// and cross-checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarianceComponents {
    /// Between-row component of the two-sample U-statistic (fixed design).
    pub sigma01_sq: Option<f64>,
    /// Between-column component of the two-sample U-statistic (fixed design).
    pub sigma10_sq: Option<f64>,
    /// One-sample projection variance (random design, complete data).
    pub sigma1_sq: Option<f64>,
    /// Pooled symmetric-kernel projection second moment (random design,
    /// censored data).
    pub theta1_sq: Option<f64>,
    /// Censoring-martingale correction, group 0 integral.
    pub censoring_integral0: Option<f64>,
    /// Censoring-martingale correction, group 1 integral.
    pub censoring_integral1: Option<f64>,
    /// Pair-average kernel tail mass, tabulated at the censoring-event times
    /// entering the correction integrals.
    pub eta_hat: Option<Vec<(f64, f64)>>,
    /// Pooled-sample analogue of `eta_hat` (V-statistic normalisation).
    pub kappa_hat: Option<Vec<(f64, f64)>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(spec: &[(f64, u8)]) -> Vec<Observation> {
        spec.iter().map(|&(t, g)| Observation::exact(t, g)).collect()
    }

    #[test]
    fn counts_recomputed() {
        let d = TwoSampleData::new(obs(&[(1.0, 0), (2.0, 1), (3.0, 0), (4.0, 1)])).unwrap();
        assert_eq!(d.n0(), 2);
        assert_eq!(d.n1(), 2);
        assert_eq!(d.n(), 4);
    }

    #[test]
    fn empty_group_rejected() {
        let err = TwoSampleData::new(obs(&[(1.0, 1), (2.0, 1)])).unwrap_err();
        assert_eq!(err, Error::EmptyGroup(0));
    }

    #[test]
    fn negative_time_rejected() {
        let err = TwoSampleData::new(obs(&[(-1.0, 0), (2.0, 1)])).unwrap_err();
        assert!(matches!(err, Error::NegativeTime { index: 0, .. }));
    }

    #[test]
    fn non_binary_group_rejected() {
        let err = TwoSampleData::new(vec![Observation::exact(1.0, 2)]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryGroup { label: 2, .. }));
    }

    #[test]
    fn split_preserves_order_and_content() {
        let d = TwoSampleData::new(obs(&[(1.0, 0), (2.0, 1), (3.0, 0)])).unwrap();
        let (g0, g1) = d.split_by_group();
        assert_eq!(g0.iter().map(|o| o.time).collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert_eq!(g1.iter().map(|o| o.time).collect::<Vec<_>>(), vec![2.0]);
        assert_eq!(g0.len() + g1.len(), d.n());
    }

    #[test]
    fn validation_is_idempotent() {
        let d = TwoSampleData::new(obs(&[(1.0, 0), (2.0, 1)])).unwrap();
        let d2 = TwoSampleData::new(d.observations().to_vec()).unwrap();
        assert_eq!(d, d2);
    }
}
