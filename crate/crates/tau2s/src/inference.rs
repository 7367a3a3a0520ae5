//! Wald tests and confidence intervals for tau estimates, plus the
//! follow-up-sufficiency diagnostic that decides between the plain and
//! tail-adjusted estimators.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{TauEstimate, TwoSampleData};
use crate::error::{Error, Result};
use crate::stepfun;

/// Which variance entered a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceSource {
    AnalyticFixed,
    AnalyticRandom,
    NullSpecialized,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `tau_b < tau_0`
    Less,
    /// `tau_b > tau_0`
    Greater,
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub tau0: f64,
    pub z: f64,
    pub p_value: f64,
    pub variance_used: VarianceSource,
    pub alternative: Alternative,
}

#[derive(Debug, Clone, Copy)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Whether the interval lies inside `[-1, 1]`; reported, never clipped.
    pub in_range: bool,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Wald test of `tau_b = tau0`.
///
/// `null_variance` substitutes a null-specialised variance (appropriate for
/// `tau0 = 0`) for the estimate's own; pass the output of
/// `variance_null_complete` / `variance_null_censored`.
pub fn test_tau(
    estimate: &TauEstimate,
    tau0: f64,
    null_variance: Option<f64>,
    alternative: Alternative,
) -> Result<TestResult> {
    let (variance, source) = match null_variance {
        Some(v) => (v, VarianceSource::NullSpecialized),
        None => (
            estimate.variance,
            match estimate.design {
                crate::data::GroupingDesign::Fixed => VarianceSource::AnalyticFixed,
                crate::data::GroupingDesign::Random => VarianceSource::AnalyticRandom,
            },
        ),
    };
    if variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let z = (estimate.value - tau0) / variance.sqrt();
    let normal = std_normal();
    let p_value = match alternative {
        Alternative::TwoSided => 2.0 * normal.sf(z.abs()),
        Alternative::Less => normal.cdf(z),
        Alternative::Greater => normal.sf(z),
    };
    Ok(TestResult { tau0, z, p_value, variance_used: source, alternative })
}

/// Wald interval `value +- z_{(1+level)/2} * std_err`, reported unclipped.
pub fn confidence_interval(estimate: &TauEstimate, level: f64) -> ConfidenceInterval {
    assert!(level > 0.0 && level < 1.0);
    let half = std_normal().inverse_cdf(0.5 + level / 2.0) * estimate.variance.sqrt();
    let lower = estimate.value - half;
    let upper = estimate.value + half;
    ConfidenceInterval { lower, upper, level, in_range: lower >= -1.0 && upper <= 1.0 }
}

/// Empirical follow-up diagnostic at the largest pooled observation.
#[derive(Debug, Clone)]
pub struct FollowupDiagnostic {
    pub y_max: f64,
    pub s0_at_max: f64,
    pub s1_at_max: f64,
    /// `S0(Y_max) * S1(Y_max)`: estimated probability that both members of a
    /// cross pair outlive the observable window.
    pub tail_mass: f64,
    pub largest_is_censored: bool,
    /// True when either survival curve plateaus above zero, so the plain
    /// estimator misses tail concordance and the tail-adjusted estimators
    /// should be consulted.
    pub recommend_tail_adjust: bool,
}

/// Inspect whether follow-up suffices for the plain IPCW estimator.
pub fn followup_sufficiency(data: &TwoSampleData) -> FollowupDiagnostic {
    let y_max = data.max_time();
    let s0 = stepfun::kaplan_meier(&data.group_obs(0))
        .expect("validated data has non-empty groups")
        .value_at(y_max);
    let s1 = stepfun::kaplan_meier(&data.group_obs(1))
        .expect("validated data has non-empty groups")
        .value_at(y_max);
    let largest_is_censored = data
        .observations()
        .iter()
        .filter(|o| o.time == y_max)
        .all(|o| !o.status);
    FollowupDiagnostic {
        y_max,
        s0_at_max: s0,
        s1_at_max: s1,
        tail_mass: s0 * s1,
        largest_is_censored,
        recommend_tail_adjust: s0 > 0.0 || s1 > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complete;
    use crate::data::{GroupingDesign, Observation, TauKind};
    use approx::assert_relative_eq;

    fn estimate(value: f64, variance: f64) -> TauEstimate {
        TauEstimate {
            value,
            variance,
            design: GroupingDesign::Fixed,
            n0: 10,
            n1: 10,
            kind: TauKind::CompleteTauB,
            components: None,
        }
    }

    #[test]
    fn value_equal_to_tau0_gives_p_one() {
        let t = test_tau(&estimate(0.3, 0.01), 0.3, None, Alternative::TwoSided).unwrap();
        assert_relative_eq!(t.z, 0.0);
        assert_relative_eq!(t.p_value, 1.0);
    }

    #[test]
    fn zero_variance_is_error() {
        let err = test_tau(&estimate(0.3, 0.0), 0.0, None, Alternative::TwoSided).unwrap_err();
        assert_eq!(err, Error::ZeroVariance);
    }

    #[test]
    fn null_variance_substitution() {
        let t = test_tau(&estimate(0.19, 0.0097), 0.0, Some(0.0088), Alternative::TwoSided)
            .unwrap();
        assert_eq!(t.variance_used, VarianceSource::NullSpecialized);
        assert_relative_eq!(t.z, 0.19 / 0.0088f64.sqrt());
    }

    #[test]
    fn interval_basics() {
        let degenerate = confidence_interval(&estimate(0.4, 0.0), 0.95);
        assert_relative_eq!(degenerate.lower, 0.4);
        assert_relative_eq!(degenerate.upper, 0.4);
        // standard 95% multiplier
        let ci = confidence_interval(&estimate(0.0, 1.0), 0.95);
        assert_relative_eq!(ci.upper, 1.959964, epsilon = 1e-6);
        // level monotonicity
        let wide = confidence_interval(&estimate(0.1, 0.01), 0.99);
        let narrow = confidence_interval(&estimate(0.1, 0.01), 0.90);
        assert!(wide.upper - wide.lower > narrow.upper - narrow.lower);
    }

    #[test]
    fn duality_between_test_and_interval() {
        let e = estimate(0.27, 0.004);
        let ci = confidence_interval(&e, 0.95);
        for tau0 in [-0.2, 0.0, 0.1, 0.2, 0.27, 0.35, 0.5] {
            let p = test_tau(&e, tau0, None, Alternative::TwoSided).unwrap().p_value;
            let inside = tau0 > ci.lower && tau0 < ci.upper;
            assert_eq!(p > 0.05, inside, "tau0 = {tau0}");
        }
    }

    #[test]
    fn followup_recommendations() {
        // all events: both curves hit zero, plain estimator suffices
        let complete_data = TwoSampleData::new(vec![
            Observation::exact(1.0, 0),
            Observation::exact(2.0, 1),
            Observation::exact(3.0, 0),
        ])
        .unwrap();
        let diag = followup_sufficiency(&complete_data);
        assert_relative_eq!(diag.tail_mass, 0.0);
        assert!(!diag.recommend_tail_adjust);

        // censored maximum leaves a plateau above zero
        let censored_max = TwoSampleData::new(vec![
            Observation::new(1.0, true, 0),
            Observation::new(2.0, true, 1),
            Observation::new(3.0, false, 0),
        ])
        .unwrap();
        let diag = followup_sufficiency(&censored_max);
        assert!(diag.largest_is_censored);
        assert!(diag.s0_at_max > 0.0);
        assert!(diag.recommend_tail_adjust);
    }

    #[test]
    fn soil_style_null_p_value() {
        // null variance test on a complete dataset reproduces z = tau/sqrt(n/(3 n0 n1))
        let times: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let groups = [0u8, 1, 0, 1, 0, 1, 0, 1];
        let d = TwoSampleData::complete(&times, &groups).unwrap();
        let est = complete::tau_b(&d, GroupingDesign::Fixed).unwrap();
        let null = complete::variance_null_complete(d.n0(), d.n1());
        let t = test_tau(&est, 0.0, Some(null), Alternative::TwoSided).unwrap();
        assert_relative_eq!(t.z, est.value / null.sqrt());
    }
}
