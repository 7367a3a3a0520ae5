//! Complete-data estimators: the two-sample U statistic, Kendall's tau-a and
//! tau-b, and their asymptotic variances under fixed and random group sizes.
//!
//! Conventions:
//! - `U = sum over cross pairs of sign(T1 - T0)`: positive U means group-1
//!   times tend to be larger;
//! - ties contribute 0 to U but tied pairs are not excluded from the
//!   `N0 * N1` normalisation;
//! - survival/CDF plug-ins use `S(t) = #{T > t}/n`, `F(t) = #{T <= t}/n`;
//! - the fixed-design variance is the exact finite-n U-statistic formula,
//!   the random-design variance the plug-in of the limit formula.

use crate::data::{GroupingDesign, TauEstimate, TauKind, TwoSampleData, VarianceComponents};
use crate::error::{Error, Result};

/// Per-group sorted times, so rank counts are binary searches.
struct SortedGroups {
    g0: Vec<f64>,
    g1: Vec<f64>,
}

impl SortedGroups {
    fn new(data: &TwoSampleData) -> Self {
        let mut g0 = data.group_times(0);
        let mut g1 = data.group_times(1);
        g0.sort_by(f64::total_cmp);
        g1.sort_by(f64::total_cmp);
        Self { g0, g1 }
    }
}

fn count_gt(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&x| x <= t)
}

fn count_lt(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&x| x < t)
}

/// `S(t) - F(t) = (#{T > t} - #{T <= t}) / n` over a sorted sample.
fn s_minus_f(sorted: &[f64], t: f64) -> f64 {
    let gt = count_gt(sorted, t) as f64;
    (2.0 * gt - sorted.len() as f64) / sorted.len() as f64
}

/// The two-sample rank statistic
/// `U = sum_{i in G0} sum_{j in G1} { I(T0 < T1) - I(T0 > T1) }`.
pub fn wmw_u_statistic(data: &TwoSampleData) -> Result<f64> {
    let s = SortedGroups::new(data);
    Ok(u_from_sorted(&s))
}

fn u_from_sorted(s: &SortedGroups) -> f64 {
    let mut u = 0i64;
    for &t in &s.g0 {
        u += count_gt(&s.g1, t) as i64 - count_lt(&s.g1, t) as i64;
    }
    u as f64
}

/// Tau-a: `U / C(n, 2)`, with the one-sample U-statistic variance.
pub fn tau_a(data: &TwoSampleData, design: GroupingDesign) -> Result<TauEstimate> {
    let n = data.n() as f64;
    if data.n() < 2 {
        return Err(Error::GroupTooSmall { group: 0, n: data.n(), min: 2 });
    }
    let s = SortedGroups::new(data);
    let u = u_from_sorted(&s);
    let value = u / (n * (n - 1.0) / 2.0);
    let sigma1_sq = projection_sigma1_sq(data, &s, value);
    Ok(TauEstimate {
        value,
        variance: 4.0 * sigma1_sq / n,
        design,
        n0: data.n0(),
        n1: data.n1(),
        kind: TauKind::CompleteTauA,
        components: Some(VarianceComponents { sigma1_sq: Some(sigma1_sq), ..Default::default() }),
    })
}

/// Tau-b: `U / (N0 N1)`, with the design-matched variance.
pub fn tau_b(data: &TwoSampleData, design: GroupingDesign) -> Result<TauEstimate> {
    let s = SortedGroups::new(data);
    let u = u_from_sorted(&s);
    let value = u / (data.n0() as f64 * data.n1() as f64);
    let (variance, components) = match design {
        GroupingDesign::Fixed => variance_fixed_complete(data)?,
        GroupingDesign::Random => variance_random_complete(data)?,
    };
    Ok(TauEstimate {
        value,
        variance,
        design,
        n0: data.n0(),
        n1: data.n1(),
        kind: TauKind::CompleteTauB,
        components: Some(components),
    })
}

/// Exact finite-n variance of tau-b under fixed group sizes:
/// `(1/(n0 n1)) { (n1-1) s01 + (n0-1) s10 + s11 }`, with the moments taken
/// against the empirical survival/CDF of the opposite group and `s11 = 1 - tau_b^2`.
pub fn variance_fixed_complete(data: &TwoSampleData) -> Result<(f64, VarianceComponents)> {
    let n0 = data.n0();
    let n1 = data.n1();
    if n0 < 2 {
        return Err(Error::GroupTooSmall { group: 0, n: n0, min: 2 });
    }
    if n1 < 2 {
        return Err(Error::GroupTooSmall { group: 1, n: n1, min: 2 });
    }
    let s = SortedGroups::new(data);
    let tau_b = u_from_sorted(&s) / (n0 as f64 * n1 as f64);

    // s01: second moment of S1 - F1 over group-0 points, centred at tau_b
    let m01 = s.g0.iter().map(|&t| s_minus_f(&s.g1, t).powi(2)).sum::<f64>() / n0 as f64;
    let sigma01_sq = m01 - tau_b * tau_b;
    // s10: second moment of F0 - S0 over group-1 points
    let m10 = s.g1.iter().map(|&t| s_minus_f(&s.g0, t).powi(2)).sum::<f64>() / n1 as f64;
    let sigma10_sq = m10 - tau_b * tau_b;
    let sigma11_sq = 1.0 - tau_b * tau_b;

    let variance = ((n1 as f64 - 1.0) * sigma01_sq
        + (n0 as f64 - 1.0) * sigma10_sq
        + sigma11_sq)
        / (n0 as f64 * n1 as f64);
    let components = VarianceComponents {
        sigma01_sq: Some(sigma01_sq),
        sigma10_sq: Some(sigma10_sq),
        ..Default::default()
    };
    Ok((variance.max(0.0), components))
}

/// Plug-in projection variance `sigma1^2` shared by the tau-a variance and
/// the random-design tau-b variance.
fn projection_sigma1_sq(data: &TwoSampleData, s: &SortedGroups, tau_a: f64) -> f64 {
    let n = data.n() as f64;
    let p1 = data.p1_hat();
    let p0 = 1.0 - p1;
    let mut sum_sq = 0.0;
    for obs in data.observations() {
        // p1 * V0 for group-0 subjects, p0 * V1 for group-1 subjects
        let v = if obs.group == 0 {
            p1 * s_minus_f(&s.g1, obs.time)
        } else {
            -p0 * s_minus_f(&s.g0, obs.time)
        };
        sum_sq += v * v;
    }
    sum_sq / n - tau_a * tau_a
}

/// Random-design variance of tau-b:
/// `n var = sigma1^2/(p0 p1)^2 - (p1-p0)^2 tau_b^2/(p0 p1)` with empirical
/// group proportions.
pub fn variance_random_complete(data: &TwoSampleData) -> Result<(f64, VarianceComponents)> {
    let n = data.n() as f64;
    let s = SortedGroups::new(data);
    let u = u_from_sorted(&s);
    let tau_b = u / (data.n0() as f64 * data.n1() as f64);
    let tau_a = u / (n * (n - 1.0) / 2.0);
    let p1 = data.p1_hat();
    let p0 = 1.0 - p1;
    let sigma1_sq = projection_sigma1_sq(data, &s, tau_a);
    let nvar = sigma1_sq / (p0 * p1).powi(2) - (p1 - p0).powi(2) * tau_b * tau_b / (p0 * p1);
    let components = VarianceComponents { sigma1_sq: Some(sigma1_sq), ..Default::default() };
    Ok(((nvar / n).max(0.0), components))
}

/// Null variance of tau-b under `S0 = S1`: `n/(3 n0 n1)`.
pub fn variance_null_complete(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    n / (3.0 * n0 as f64 * n1 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dataset(g0: &[f64], g1: &[f64]) -> TwoSampleData {
        let times: Vec<f64> = g0.iter().chain(g1).copied().collect();
        let groups: Vec<u8> = std::iter::repeat(0u8)
            .take(g0.len())
            .chain(std::iter::repeat(1u8).take(g1.len()))
            .collect();
        TwoSampleData::complete(&times, &groups).unwrap()
    }

    /// Brute-force oracle over all cross pairs.
    fn u_brute(data: &TwoSampleData) -> f64 {
        let g0 = data.group_times(0);
        let g1 = data.group_times(1);
        let mut u = 0.0;
        for &a in &g0 {
            for &b in &g1 {
                u += crate::data::sign3(b - a);
            }
        }
        u
    }

    /// Pooled pairwise form of U (the i < j sum over all subjects).
    fn u_pooled(data: &TwoSampleData) -> f64 {
        let obs = data.observations();
        let mut u = 0.0;
        for i in 0..obs.len() {
            for j in (i + 1)..obs.len() {
                let dx = obs[i].group as f64 - obs[j].group as f64;
                let dt = obs[i].time - obs[j].time;
                u += crate::data::sign3(dx) * crate::data::sign3(dt);
            }
        }
        u
    }

    #[test]
    fn u_examples() {
        assert_relative_eq!(wmw_u_statistic(&dataset(&[1.0, 2.0], &[3.0, 4.0])).unwrap(), 4.0);
        // pairs: (1,2)+, (1,4)+, (3,2)-, (3,4)+
        assert_relative_eq!(wmw_u_statistic(&dataset(&[1.0, 3.0], &[2.0, 4.0])).unwrap(), 2.0);
        assert_relative_eq!(wmw_u_statistic(&dataset(&[1.0], &[1.0])).unwrap(), 0.0);
    }

    #[test]
    fn grouped_and_pooled_forms_agree_exhaustively() {
        // oracle equivalence over random small datasets, n <= 8
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..300 {
            let n = 2 + (next() % 7) as usize;
            let mut times = Vec::new();
            let mut groups = Vec::new();
            for _ in 0..n {
                times.push((next() % 5) as f64 * 0.5);
                groups.push((next() % 2) as u8);
            }
            if !groups.contains(&0) || !groups.contains(&1) {
                continue;
            }
            let d = TwoSampleData::complete(&times, &groups).unwrap();
            let u = wmw_u_statistic(&d).unwrap();
            assert_relative_eq!(u, u_brute(&d));
            assert_relative_eq!(u, u_pooled(&d));
        }
    }

    #[test]
    fn tau_a_examples() {
        let d = dataset(&[1.0, 2.0], &[3.0, 4.0]);
        let est = tau_a(&d, GroupingDesign::Random).unwrap();
        assert_relative_eq!(est.value, 4.0 / 6.0);
        let single = dataset(&[1.0], &[2.0]);
        assert_relative_eq!(tau_a(&single, GroupingDesign::Random).unwrap().value, 1.0);
    }

    #[test]
    fn tau_a_tau_b_relation() {
        let d = dataset(&[0.4, 1.9, 0.2, 3.3], &[2.2, 0.9, 5.1]);
        let n = d.n() as f64;
        let ta = tau_a(&d, GroupingDesign::Random).unwrap().value;
        let tb = tau_b(&d, GroupingDesign::Random).unwrap().value;
        let factor = 2.0 * d.n0() as f64 * d.n1() as f64 / (n * (n - 1.0));
        assert_relative_eq!(ta, tb * factor, epsilon = 1e-12);
    }

    #[test]
    fn tau_b_examples() {
        assert_relative_eq!(
            tau_b(&dataset(&[1.0, 2.0], &[3.0, 4.0]), GroupingDesign::Fixed).unwrap().value,
            1.0
        );
        assert_relative_eq!(
            tau_b(&dataset(&[1.0, 3.0], &[2.0, 4.0]), GroupingDesign::Fixed).unwrap().value,
            0.5
        );
    }

    #[test]
    fn perfectly_separated_groups_have_zero_variance() {
        let d = dataset(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        let (var, _) = variance_fixed_complete(&d).unwrap();
        assert_relative_eq!(var, 0.0, epsilon = 1e-14);
        assert_relative_eq!(tau_b(&d, GroupingDesign::Fixed).unwrap().value, 1.0);
    }

    #[test]
    fn null_variance_values() {
        assert_relative_eq!(variance_null_complete(80, 72), 152.0 / (3.0 * 80.0 * 72.0));
        assert_relative_eq!(variance_null_complete(1, 1), 2.0 / 3.0);
        let n = 100usize;
        assert_relative_eq!(variance_null_complete(n / 2, n / 2), 4.0 / (3.0 * n as f64));
    }

    #[test]
    fn label_swap_antisymmetry() {
        let d = dataset(&[0.4, 1.9, 0.2, 3.3, 0.8], &[2.2, 0.9, 5.1, 0.8]);
        let sw = d.with_swapped_labels();
        for design in [GroupingDesign::Fixed, GroupingDesign::Random] {
            let a = tau_b(&d, design).unwrap();
            let b = tau_b(&sw, design).unwrap();
            assert_relative_eq!(a.value, -b.value, epsilon = 1e-12);
            assert_relative_eq!(a.variance, b.variance, epsilon = 1e-12);
        }
        let a = tau_a(&d, GroupingDesign::Random).unwrap();
        let b = tau_a(&sw, GroupingDesign::Random).unwrap();
        assert_relative_eq!(a.value, -b.value, epsilon = 1e-12);
        assert_relative_eq!(a.variance, b.variance, epsilon = 1e-12);
    }

    #[test]
    fn monotone_transform_invariance() {
        let d = dataset(&[0.4, 1.9, 0.2, 3.3, 0.8], &[2.2, 0.9, 5.1, 0.8]);
        let transformed = TwoSampleData::new(
            d.observations()
                .iter()
                .map(|o| {
                    crate::data::Observation::new((o.time + 1.0).ln().exp2(), o.status, o.group)
                })
                .collect(),
        )
        .unwrap();
        for design in [GroupingDesign::Fixed, GroupingDesign::Random] {
            let a = tau_b(&d, design).unwrap();
            let b = tau_b(&transformed, design).unwrap();
            assert_relative_eq!(a.value, b.value, epsilon = 1e-12);
            assert_relative_eq!(a.variance, b.variance, epsilon = 1e-12);
        }
    }
}
