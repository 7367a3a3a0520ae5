//! IPCW estimator of tau-b for right-censored data and its asymptotic
//! variances under fixed and random grouping designs, including the
//! null-hypothesis specialisation.
//!
//! A cross-group pair is *orderable* when the strictly smaller observed time
//! carries an event: the order of the underlying event times is then known.
//! Orderable pairs are reweighted by `1 / (G0(Ymin) G1(Ymin))`, the inverse
//! probability that neither pair member is censored before the minimum, with
//! `G_l` the Kaplan-Meier estimate of the censoring survival.
//!
//! `G` evaluation at the pair minimum defaults to the left limit
//! `G(Ymin-)`: an event at `t` requires `C >= t`, whose probability is the
//! left limit. Right-continuous evaluation is available as an option.

use crate::data::{
    GroupingDesign, TauEstimate, TauKind, TwoSampleData, VarianceComponents,
};
use crate::error::{Error, Result};
use crate::stepfun::{self, StepFunction};

/// How to evaluate the censoring-survival estimates at a pair minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GEvaluation {
    /// `G(t-)` (default).
    #[default]
    LeftLimit,
    /// `G(t)`.
    RightContinuous,
}

/// What to do when an orderable pair's censoring weight vanishes.
///
/// The plain estimator must fail loudly (the estimand is not identified);
/// the restricted estimator conditions the estimand on the observable window
/// and drops such pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroWeightPolicy {
    #[default]
    Error,
    Exclude,
}

/// Options shared by all censored-data estimators.
#[derive(Debug, Clone, Copy, Default)]
pub struct IpcwOptions {
    /// Estimate one pooled censoring distribution instead of per-group ones.
    pub pooled_censoring: bool,
    pub g_evaluation: GEvaluation,
    pub zero_weight: ZeroWeightPolicy,
}

impl IpcwOptions {
    pub fn pooled(mut self, yes: bool) -> Self {
        self.pooled_censoring = yes;
        self
    }

    pub fn excluding_zero_weights(mut self) -> Self {
        self.zero_weight = ZeroWeightPolicy::Exclude;
        self
    }
}

/// One cross-group pair, as used by the pairwise sums.
#[derive(Debug, Clone, Copy)]
pub struct OrderablePair {
    /// Index into group 0 / group 1 (input order within group).
    pub i: usize,
    pub j: usize,
    pub orderable: bool,
    /// `sign{(X_i - X_j)(Y_i - Y_j)}`: +1 when the group-1 time is larger.
    pub sign: i8,
    /// Pair minimum of the observed times.
    pub min_time: f64,
    /// `1 / (G0 G1)` at the minimum; meaningful when orderable.
    pub weight: f64,
}

const MIN_G_PRODUCT: f64 = 1e-12;

/// Shared pairwise computation behind the censored estimators.
pub(crate) struct IpcwKernel {
    pub n0: usize,
    pub n1: usize,
    pub u_hat: f64,
    /// Per group-0 subject: sum of kernel values over its pairs.
    pub row_sums: Vec<f64>,
    /// Per group-1 subject: same, by column.
    pub col_sums: Vec<f64>,
    /// `(min_time, zeta, weight)` of strictly orderable pairs, ascending by
    /// min_time; `zeta = sign * weight`.
    pairs: Vec<(f64, f64, f64)>,
    /// Suffix sums of zeta / weight over `pairs`.
    zeta_suffix: Vec<f64>,
    weight_suffix: Vec<f64>,
    g0: StepFunction,
    g1: StepFunction,
    g_eval: GEvaluation,
    /// Group observations sorted by time, with event flags.
    pub sorted0: Vec<(f64, bool)>,
    pub sorted1: Vec<(f64, bool)>,
    /// Smallest pair minimum among orderable pairs dropped for a vanishing
    /// weight (Exclude policy only).
    pub zero_weight_min_time: Option<f64>,
}

impl IpcwKernel {
    pub fn build(data: &TwoSampleData, options: IpcwOptions) -> Result<Self> {
        let (g0, g1) = stepfun::censoring_survival(data, options.pooled_censoring)?;
        let obs0 = data.group_obs(0);
        let obs1 = data.group_obs(1);
        let n0 = obs0.len();
        let n1 = obs1.len();

        let eval = |g: &StepFunction, t: f64| match options.g_evaluation {
            GEvaluation::LeftLimit => g.left_limit(t),
            GEvaluation::RightContinuous => g.value_at(t),
        };

        let mut u_hat = 0.0;
        let mut row_sums = vec![0.0; n0];
        let mut col_sums = vec![0.0; n1];
        let mut pairs: Vec<(f64, f64, f64)> = Vec::new();
        let mut zero_weight_min_time: Option<f64> = None;
        for (i, &(y_i, d_i)) in obs0.iter().enumerate() {
            for (j, &(y_j, d_j)) in obs1.iter().enumerate() {
                let (ymin, orderable, sign) = if y_i < y_j {
                    (y_i, d_i, 1.0)
                } else if y_j < y_i {
                    (y_j, d_j, -1.0)
                } else {
                    continue; // tie: O = 0 and sign = 0
                };
                if !orderable {
                    continue;
                }
                let product = eval(&g0, ymin) * eval(&g1, ymin);
                if product < MIN_G_PRODUCT {
                    match options.zero_weight {
                        ZeroWeightPolicy::Error => {
                            return Err(Error::ZeroCensoringWeight { time: ymin, product });
                        }
                        ZeroWeightPolicy::Exclude => {
                            zero_weight_min_time = Some(match zero_weight_min_time {
                                Some(t) => t.min(ymin),
                                None => ymin,
                            });
                            continue;
                        }
                    }
                }
                let weight = 1.0 / product;
                let zeta = sign * weight;
                u_hat += zeta;
                row_sums[i] += zeta;
                col_sums[j] += zeta;
                pairs.push((ymin, zeta, weight));
            }
        }
        if pairs.is_empty() {
            return Err(Error::NoOrderablePairs);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut zeta_suffix = vec![0.0; pairs.len() + 1];
        let mut weight_suffix = vec![0.0; pairs.len() + 1];
        for k in (0..pairs.len()).rev() {
            zeta_suffix[k] = zeta_suffix[k + 1] + pairs[k].1;
            weight_suffix[k] = weight_suffix[k + 1] + pairs[k].2;
        }
        // canonical summation order: ascending pair minima, so restricted
        // sums at any cutoff are bitwise consistent with the full statistic
        u_hat = zeta_suffix[0];

        let mut sorted0 = obs0;
        let mut sorted1 = obs1;
        sorted0.sort_by(|a, b| a.0.total_cmp(&b.0));
        sorted1.sort_by(|a, b| a.0.total_cmp(&b.0));

        Ok(Self {
            n0,
            n1,
            u_hat,
            row_sums,
            col_sums,
            pairs,
            zeta_suffix,
            weight_suffix,
            g0,
            g1,
            g_eval: options.g_evaluation,
            sorted0,
            sorted1,
            zero_weight_min_time,
        })
    }

    /// Event-time Kaplan-Meier survival of group `l`.
    pub fn event_km(&self, group: u8) -> StepFunction {
        let sorted = if group == 0 { &self.sorted0 } else { &self.sorted1 };
        stepfun::kaplan_meier(sorted).expect("group is non-empty")
    }

    pub fn n(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn tau_b(&self) -> f64 {
        self.u_hat / (self.n0 as f64 * self.n1 as f64)
    }

    /// Sum of `zeta` over orderable pairs with `min_time > t0` (unnormalised).
    pub fn zeta_sum_beyond(&self, t0: f64) -> f64 {
        let k = self.pairs.partition_point(|p| p.0 <= t0);
        self.zeta_suffix[k]
    }

    /// Sum of `zeta` over orderable pairs with `min_time <= t0`.
    pub fn zeta_sum_up_to(&self, t0: f64) -> f64 {
        self.u_hat - self.zeta_sum_beyond(t0)
    }

    /// Sum of weights over orderable pairs with `min_time > t0`.
    pub fn weight_sum_beyond(&self, t0: f64) -> f64 {
        let k = self.pairs.partition_point(|p| p.0 <= t0);
        self.weight_suffix[k]
    }

    pub fn weight_sum_up_to(&self, t0: f64) -> f64 {
        self.weight_suffix[0] - self.weight_sum_beyond(t0)
    }

    /// `eta(u) = (1/(n0 n1)) sum_pairs zeta I(min_time >= u)`.
    pub fn eta_at(&self, u: f64) -> f64 {
        let k = self.pairs.partition_point(|p| p.0 < u);
        self.zeta_suffix[k] / (self.n0 as f64 * self.n1 as f64)
    }

    /// `kappa(u) = (2/n^2) sum_pairs zeta I(min_time >= u)`; equals
    /// `2 p0_hat p1_hat eta(u)` identically.
    pub fn kappa_at(&self, u: f64) -> f64 {
        let k = self.pairs.partition_point(|p| p.0 < u);
        let n = self.n() as f64;
        2.0 * self.zeta_suffix[k] / (n * n)
    }

    fn g_at(&self, g: &StepFunction, t: f64) -> f64 {
        match self.g_eval {
            GEvaluation::LeftLimit => g.left_limit(t),
            GEvaluation::RightContinuous => g.value_at(t),
        }
    }

    /// Distinct times in group `l` with the given flag, as
    /// `(time, count_with_flag, at_risk)` where `at_risk = #{Y >= time}`.
    fn marked_times(&self, group: u8, flag: bool) -> Vec<(f64, usize, usize)> {
        let sorted = if group == 0 { &self.sorted0 } else { &self.sorted1 };
        let n = sorted.len();
        let mut out = Vec::new();
        let mut idx = 0;
        while idx < n {
            let t = sorted[idx].0;
            let at_risk = n - idx;
            let mut count = 0;
            let mut j = idx;
            while j < n && sorted[j].0 == t {
                count += usize::from(sorted[j].1 == flag);
                j += 1;
            }
            if count > 0 {
                out.push((t, count, at_risk));
            }
            idx = j;
        }
        out
    }

    /// `int eta^2(u) / Phat(Y^(l) >= u) dLambda_l^C(u)` as a finite sum over
    /// the censoring times of group `l`.
    fn eta_censoring_integral(&self, group: u8) -> (f64, Vec<(f64, f64)>) {
        let n_l = if group == 0 { self.n0 } else { self.n1 } as f64;
        let mut total = 0.0;
        let mut table = Vec::new();
        for (t, c, r) in self.marked_times(group, false) {
            let eta = self.eta_at(t);
            table.push((t, eta));
            let r = r as f64;
            // P(Y >= u) = r / n_l ; dLambda^C = c / r
            total += eta * eta * (n_l / r) * (c as f64 / r);
        }
        (total, table)
    }

    /// Same with `kappa` and the pooled at-risk probability `Phat(Y>=u, X=l)`.
    fn kappa_censoring_integral(&self, group: u8) -> (f64, Vec<(f64, f64)>) {
        let n = self.n() as f64;
        let mut total = 0.0;
        let mut table = Vec::new();
        for (t, c, r) in self.marked_times(group, false) {
            let kappa = self.kappa_at(t);
            table.push((t, kappa));
            let r = r as f64;
            total += kappa * kappa * (n / r) * (c as f64 / r);
        }
        (total, table)
    }

    /// Fixed-design plug-in variance of tau-b-hat (estimator scale).
    pub fn variance_fixed(&self) -> (f64, VarianceComponents) {
        let n0 = self.n0 as f64;
        let n1 = self.n1 as f64;
        let n = self.n() as f64;
        let p0 = n0 / n;
        let p1 = n1 / n;
        let tb = self.tau_b();
        let sigma01_sq =
            self.row_sums.iter().map(|s| (s / n1).powi(2)).sum::<f64>() / n0 - tb * tb;
        let sigma10_sq =
            self.col_sums.iter().map(|s| (s / n0).powi(2)).sum::<f64>() / n1 - tb * tb;
        let (i0, eta_table0) = self.eta_censoring_integral(0);
        let (i1, eta_table1) = self.eta_censoring_integral(1);
        let nvar = sigma01_sq / p0 + sigma10_sq / p1 - i0 / p0 - i1 / p1;
        let mut eta = eta_table0;
        eta.extend(eta_table1);
        eta.sort_by(|a, b| a.0.total_cmp(&b.0));
        let components = VarianceComponents {
            sigma01_sq: Some(sigma01_sq),
            sigma10_sq: Some(sigma10_sq),
            censoring_integral0: Some(i0),
            censoring_integral1: Some(i1),
            eta_hat: Some(eta),
            ..Default::default()
        };
        ((nvar / n).max(0.0), components)
    }

    /// Random-design plug-in variance of tau-b-hat (estimator scale).
    pub fn variance_random(&self) -> (f64, VarianceComponents) {
        let n = self.n() as f64;
        let p0 = self.n0 as f64 / n;
        let p1 = 1.0 - p0;
        let tb = self.tau_b();
        // theta1^2 = n^-3 sum_k (sum_m zeta_km)^2 - (2 p0 p1 tau_b)^2,
        // row/col sums are the per-subject kernel sums of the symmetric kernel
        let sum_sq: f64 = self
            .row_sums
            .iter()
            .chain(self.col_sums.iter())
            .map(|s| s * s)
            .sum();
        let theta1_sq = sum_sq / n.powi(3) - (2.0 * p0 * p1 * tb).powi(2);
        let (j0, kappa_table0) = self.kappa_censoring_integral(0);
        let (j1, kappa_table1) = self.kappa_censoring_integral(1);
        let nvar = theta1_sq / (p0 * p1).powi(2)
            - (j0 + j1) / (4.0 * p0 * p0 * p1 * p1)
            - tb * tb * (p1 - p0).powi(2) / (p0 * p1);
        let mut kappa = kappa_table0;
        kappa.extend(kappa_table1);
        kappa.sort_by(|a, b| a.0.total_cmp(&b.0));
        let components = VarianceComponents {
            theta1_sq: Some(theta1_sq),
            censoring_integral0: Some(j0),
            censoring_integral1: Some(j1),
            kappa_hat: Some(kappa),
            ..Default::default()
        };
        ((nvar / n).max(0.0), components)
    }

    /// Null-specialised variance (tau_b = 0): the U-statistic leading term is
    /// replaced by its martingale form driven by the event hazards.
    pub fn variance_null(&self, design: GroupingDesign) -> f64 {
        let n = self.n() as f64;
        let n0 = self.n0 as f64;
        let n1 = self.n1 as f64;
        let p0 = n0 / n;
        let p1 = n1 / n;

        // at-risk counts in the *other* group at a given time
        let risk0 = |t: f64| self.sorted0.len() - self.sorted0.partition_point(|p| p.0 < t);
        let risk1 = |t: f64| self.sorted1.len() - self.sorted1.partition_point(|p| p.0 < t);

        let mut lead = 0.0;
        for group in [0u8, 1u8] {
            for (t, d, r) in self.marked_times(group, true) {
                let g_prod = self.g_at(&self.g0, t) * self.g_at(&self.g1, t);
                let (r_own, r_other) = if group == 0 {
                    (r as f64, risk1(t) as f64)
                } else {
                    (r as f64, risk0(t) as f64)
                };
                let d_lambda = d as f64 / r_own;
                lead += match design {
                    GroupingDesign::Fixed => {
                        let (n_own, n_other, p_own) =
                            if group == 0 { (n0, n1, p0) } else { (n1, n0, p1) };
                        let term = (r_other / n_other / g_prod).powi(2) * (r_own / n_own);
                        term * d_lambda / p_own
                    }
                    GroupingDesign::Random => {
                        let term = (r_other / n / g_prod).powi(2) * (r_own / n);
                        term * d_lambda / (p0 * p1).powi(2)
                    }
                };
            }
        }

        let correction = match design {
            GroupingDesign::Fixed => {
                let (i0, _) = self.eta_censoring_integral(0);
                let (i1, _) = self.eta_censoring_integral(1);
                i0 / p0 + i1 / p1
            }
            GroupingDesign::Random => {
                let (j0, _) = self.kappa_censoring_integral(0);
                let (j1, _) = self.kappa_censoring_integral(1);
                (j0 + j1) / (4.0 * p0 * p0 * p1 * p1)
            }
        };
        ((lead - correction) / n).max(0.0)
    }

    /// Materialise the pair table, including non-orderable pairs.
    pub fn pair_table(&self, data: &TwoSampleData) -> Vec<OrderablePair> {
        let obs0 = data.group_obs(0);
        let obs1 = data.group_obs(1);
        let mut out = Vec::with_capacity(self.n0 * self.n1);
        for (i, &(y_i, d_i)) in obs0.iter().enumerate() {
            for (j, &(y_j, d_j)) in obs1.iter().enumerate() {
                let ymin = y_i.min(y_j);
                let (orderable, sign) = if y_i < y_j {
                    (d_i, 1i8)
                } else if y_j < y_i {
                    (d_j, -1i8)
                } else {
                    // tied pair: contributes nothing, orderable bookkeeping
                    // records whether an event occurred at the tied minimum
                    (d_i || d_j, 0i8)
                };
                let weight = 1.0 / (self.g_at(&self.g0, ymin) * self.g_at(&self.g1, ymin));
                out.push(OrderablePair { i, j, orderable, sign, min_time: ymin, weight });
            }
        }
        out
    }
}

/// The full cross-group pair table (orderability, sign, minimum, weight).
pub fn pair_table(data: &TwoSampleData, options: IpcwOptions) -> Result<Vec<OrderablePair>> {
    let kernel = IpcwKernel::build(data, options)?;
    Ok(kernel.pair_table(data))
}

/// IPCW estimate of tau-b with the design-matched analytic variance.
pub fn ipcw_tau_b(
    data: &TwoSampleData,
    options: IpcwOptions,
    design: GroupingDesign,
) -> Result<TauEstimate> {
    let kernel = IpcwKernel::build(data, options)?;
    let (variance, components) = match design {
        GroupingDesign::Fixed => kernel.variance_fixed(),
        GroupingDesign::Random => kernel.variance_random(),
    };
    Ok(TauEstimate {
        value: kernel.tau_b(),
        variance,
        design,
        n0: data.n0(),
        n1: data.n1(),
        kind: TauKind::CensoredTauB,
        components: Some(components),
    })
}

/// Fixed-design variance of the IPCW estimator.
pub fn variance_fixed_censored(
    data: &TwoSampleData,
    options: IpcwOptions,
) -> Result<(f64, VarianceComponents)> {
    if data.n0() < 2 {
        return Err(Error::GroupTooSmall { group: 0, n: data.n0(), min: 2 });
    }
    if data.n1() < 2 {
        return Err(Error::GroupTooSmall { group: 1, n: data.n1(), min: 2 });
    }
    Ok(IpcwKernel::build(data, options)?.variance_fixed())
}

/// Random-design variance of the IPCW estimator.
pub fn variance_random_censored(
    data: &TwoSampleData,
    options: IpcwOptions,
) -> Result<(f64, VarianceComponents)> {
    Ok(IpcwKernel::build(data, options)?.variance_random())
}

/// Variance of the IPCW estimator specialised to the null `tau_b = 0`.
pub fn variance_null_censored(
    data: &TwoSampleData,
    design: GroupingDesign,
    options: IpcwOptions,
) -> Result<f64> {
    Ok(IpcwKernel::build(data, options)?.variance_null(design))
}
