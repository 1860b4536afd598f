//! Monte Carlo Laplace functionals, invariance tests, the Bernoulli
//! concentration check and the tightness table.
//!
//! Replicates are generated in parallel, each from its own stream
//! `seed.with_stream(i)`; statistics are reduced in replicate order, so
//! results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, DiscreteCDF, Poisson};

use crate::analytic::{gaussian_tail, NeumaierSum, TestFunction};
use crate::decomposition::{HybridOptions, HybridSampler};
use crate::dynamics::{observed_evolution, SimulationPlan};
use crate::error::{Error, Result};
use crate::pointproc::{intensity_mass, sample_cox, IntensityModel, PointConfiguration, WindowSpec};
use crate::randomness::SeedSpec;

/// Expected bin count below which neighbouring bins are merged.
const MIN_EXPECTED: f64 = 5.0;

/// `Q(3)`: one-sided level of a 3-standard-error margin.
pub const THREE_SE_LEVEL: f64 = 1.349_898_031_630_094_5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub f: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    LaplaceZ,
    ChiSquare,
    Concentration,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::LaplaceZ => "laplace_z",
            TestKind::ChiSquare => "chi_square",
            TestKind::Concentration => "concentration",
        }
    }
}

/// Result of one hypothesis test. `pass ⇔ p_value ≥ significance`, where
/// `significance` is the threshold actually applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub significance: f64,
    pub pass: bool,
    /// Controls are inputs known not to satisfy the null.
    pub control: bool,
    pub t: Option<f64>,
    pub f: Option<String>,
    pub window: Option<WindowSpec>,
    pub replicates: u64,
    pub seed: u64,
}

impl TestOutcome {
    pub fn csv_header() -> &'static str {
        "name,kind,control,t,f,window_lo,window_hi,replicates,seed,statistic,p_value,significance,result"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(crate::fmt_real).unwrap_or_default();
        [
            self.name.clone(),
            self.kind.label().to_string(),
            self.control.to_string(),
            opt(self.t),
            self.f.clone().map(|s| format!("\"{s}\"")).unwrap_or_default(),
            opt(self.window.map(|w| w.lo)),
            opt(self.window.map(|w| w.hi)),
            self.replicates.to_string(),
            self.seed.to_string(),
            crate::fmt_real(self.statistic),
            crate::fmt_real(self.p_value),
            crate::fmt_real(self.significance),
            if self.pass { "PASS" } else { "FAIL" }.to_string(),
        ]
        .join(",")
    }

    fn set_threshold(&mut self, significance: f64) {
        self.significance = significance;
        self.pass = self.p_value >= significance;
    }
}

/// Re-evaluates every outcome at `significance / (number of non-control
/// tests)`.
pub fn apply_bonferroni(outcomes: &mut [TestOutcome], significance: f64) -> usize {
    let family = outcomes.iter().filter(|o| !o.control).count().max(1);
    for o in outcomes.iter_mut() {
        o.set_threshold(significance / family as f64);
    }
    family
}

/// Anything that produces independent configurations on a fixed window.
pub trait ConfigurationSource: Sync {
    /// Window on which samples are exact.
    fn window(&self) -> WindowSpec;
    fn sample(&self, seed: SeedSpec) -> Result<PointConfiguration>;
}

/// Two-stage Cox sample of a model on a window.
#[derive(Debug, Clone)]
pub struct CoxSource {
    pub model: IntensityModel,
    pub window: WindowSpec,
}

impl ConfigurationSource for CoxSource {
    fn window(&self) -> WindowSpec {
        self.window
    }

    fn sample(&self, seed: SeedSpec) -> Result<PointConfiguration> {
        Ok(sample_cox(&self.model, &self.window, &mut seed.stream())?.0)
    }
}

/// The time-`t` configuration on the plan's observation window.
#[derive(Debug, Clone)]
pub struct EvolvedSource {
    pub model: IntensityModel,
    pub plan: SimulationPlan,
}

impl ConfigurationSource for EvolvedSource {
    fn window(&self) -> WindowSpec {
        self.plan.observation_window
    }

    fn sample(&self, seed: SeedSpec) -> Result<PointConfiguration> {
        Ok(observed_evolution(&self.model, &self.plan, seed)?.evolved)
    }
}

/// The same configuration every time.
#[derive(Debug, Clone)]
pub struct FixedSource(pub PointConfiguration);

impl ConfigurationSource for FixedSource {
    fn window(&self) -> WindowSpec {
        self.0.window()
    }

    fn sample(&self, _seed: SeedSpec) -> Result<PointConfiguration> {
        Ok(self.0.clone())
    }
}

fn check_support(f: &TestFunction, w: &WindowSpec) -> Result<()> {
    if let Some((lo, hi)) = f.support() {
        if lo < w.lo || hi > w.hi {
            return Err(Error::SupportViolation {
                lo,
                hi,
                window_lo: w.lo,
                window_hi: w.hi,
            });
        }
    }
    Ok(())
}

/// `exp(−Σ_i f(x_i))`.
pub fn laplace_value(c: &PointConfiguration, f: &TestFunction) -> f64 {
    let s: NeumaierSum = c.atoms().iter().map(|&x| f.eval(x)).collect();
    (-s.total()).exp()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean: NeumaierSum = values.iter().copied().collect();
    let mean = mean.total() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: NeumaierSum = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (ss.total() / (n - 1.0) / n).sqrt())
}

fn estimate(values: &[f64], f: &TestFunction) -> LaplaceEstimate {
    let (mean, std_error) = mean_and_se(values);
    LaplaceEstimate {
        mean,
        std_error,
        replicates: values.len() as u64,
        f: f.descriptor(),
    }
}

/// Monte Carlo estimate of `E[exp(−⟨f, θ⟩)]`.
pub fn laplace_mc<S: ConfigurationSource>(
    source: &S,
    f: &TestFunction,
    replicates: u64,
    seed: SeedSpec,
) -> Result<LaplaceEstimate> {
    f.validate()?;
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be ≥ 1".into()));
    }
    check_support(f, &source.window())?;
    let values = (0..replicates)
        .into_par_iter()
        .map(|i| source.sample(seed.with_stream(i)).map(|c| laplace_value(&c, f)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(estimate(&values, f))
}

/// Two-sided z-test on the difference of two independent means.
pub fn two_sample_z(a: &LaplaceEstimate, b: &LaplaceEstimate) -> (f64, f64) {
    let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
    let diff = b.mean - a.mean;
    if se == 0.0 {
        return if diff == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
    }
    let z = diff / se;
    (z, (2.0 * gaussian_tail(z.abs())).min(1.0))
}

/// Chi-square statistic of observed totals against expected totals, merging
/// neighbouring bins until each expected total is at least 5. Totals are
/// independent Poisson under the null, so the degrees of freedom equal the
/// number of merged bins. Returns `(statistic, p_value, bins)`.
pub fn chi_square_poisson(observed: &[f64], expected: &[f64]) -> Result<(f64, f64, usize)> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidParameter("chi-square needs matching nonempty bins".into()));
    }
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (oi, ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= MIN_EXPECTED {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    if groups.iter().all(|g| g.1 == 0.0) {
        let stat = if groups.iter().all(|g| g.0 == 0.0) { 0.0 } else { f64::INFINITY };
        return Ok((stat, if stat == 0.0 { 1.0 } else { 0.0 }, groups.len()));
    }
    let stat: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new(groups.len() as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((stat, dist.sf(stat), groups.len()))
}

/// Bin-mean of the observed window under the realized mixing.
fn bin_masses(m: &IntensityModel, mixing: (f64, f64), bins: &[WindowSpec]) -> Vec<f64> {
    let r = m.resolved(mixing.0, mixing.1);
    bins.iter().map(|b| intensity_mass(&r, b)).collect()
}

struct ReplicateSummary {
    initial: Vec<f64>,
    evolved: Vec<f64>,
    counts: Vec<u64>,
    initial_counts: Vec<u64>,
    expected: Vec<f64>,
}

const INITIAL_LABEL: u64 = 1;
const EVOLVED_LABEL: u64 = 2;

/// Options of [`invariance_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceOptions {
    pub replicates: u64,
    pub significance: f64,
    pub bins: usize,
    /// Marks every outcome as a control.
    pub control: bool,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        InvarianceOptions {
            replicates: 10_000,
            significance: 0.01,
            bins: 10,
            control: false,
        }
    }
}

/// Compares `θ` and `θ_t` on the observation window: one Laplace z-test per
/// test function and one chi-square test of the evolved bin counts against
/// the initial intensity's bin means (conditional on the realized mixing).
///
/// The initial and evolved arms use independent replicates. At `t = 0` the
/// evolved arm is the initial arm itself.
pub fn invariance_test(
    m: &IntensityModel,
    plan: &SimulationPlan,
    f_suite: &[TestFunction],
    options: InvarianceOptions,
    seed: SeedSpec,
) -> Result<Vec<TestOutcome>> {
    m.validate()?;
    let obs = plan.observation_window;
    for f in f_suite {
        f.validate()?;
        check_support(f, &obs)?;
    }
    if options.replicates < 2 {
        return Err(Error::InvalidParameter("invariance_test needs ≥ 2 replicates".into()));
    }
    if options.bins == 0 {
        return Err(Error::InvalidParameter("invariance_test needs ≥ 1 bin".into()));
    }
    let identity = plan.t == 0.0;
    let plan = if identity || plan.padded_window.is_some() {
        plan.clone()
    } else {
        plan.clone().with_padding(m)?
    };
    let bins = obs.bins(options.bins);
    let count = |c: &PointConfiguration| bins.iter().map(|b| c.count_between(b.lo, b.hi)).collect::<Vec<u64>>();
    let summaries = (0..options.replicates)
        .into_par_iter()
        .map(|i| -> Result<ReplicateSummary> {
            let (initial, mixing) = {
                let (c, z, y) = sample_cox(m, &obs, &mut seed.derive(INITIAL_LABEL).with_stream(i).stream())?;
                (c, (z, y))
            };
            let (evolved, ev_mixing) = if identity {
                (initial.clone(), mixing)
            } else {
                let o = observed_evolution(m, &plan, seed.derive(EVOLVED_LABEL).with_stream(i))?;
                (o.evolved, o.mixing)
            };
            Ok(ReplicateSummary {
                initial: f_suite.iter().map(|f| laplace_value(&initial, f)).collect(),
                evolved: f_suite.iter().map(|f| laplace_value(&evolved, f)).collect(),
                counts: count(&evolved),
                initial_counts: count(&initial),
                expected: bin_masses(m, ev_mixing, &bins),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let base = |name: String, kind, statistic, p_value, f: Option<String>| TestOutcome {
        name,
        kind,
        statistic,
        p_value,
        significance: options.significance,
        pass: p_value >= options.significance,
        control: options.control,
        t: Some(plan.t),
        f,
        window: Some(obs),
        replicates: options.replicates,
        seed: seed.master_seed,
    };
    let mut out = Vec::with_capacity(f_suite.len() + 1);
    for (j, f) in f_suite.iter().enumerate() {
        let a: Vec<f64> = summaries.iter().map(|s| s.initial[j]).collect();
        let b: Vec<f64> = summaries.iter().map(|s| s.evolved[j]).collect();
        let (z, p) = two_sample_z(&estimate(&a, f), &estimate(&b, f));
        out.push(base(format!("laplace[{j}]"), TestKind::LaplaceZ, z, p, Some(f.descriptor())));
    }
    let mut observed = vec![0.0; bins.len()];
    let mut expected = vec![NeumaierSum::default(); bins.len()];
    for s in &summaries {
        for k in 0..bins.len() {
            observed[k] += s.counts[k] as f64;
            if identity {
                expected[k].add(s.initial_counts[k] as f64);
            } else {
                expected[k].add(s.expected[k]);
            }
        }
    }
    let expected: Vec<f64> = expected.iter().map(NeumaierSum::total).collect();
    let (stat, p, _) = if identity {
        // the sample compared with itself
        (0.0, 1.0, bins.len())
    } else {
        chi_square_poisson(&observed, &expected)?
    };
    out.push(base(format!("bins[{}]", bins.len()), TestKind::ChiSquare, stat, p, None));
    apply_bonferroni(&mut out, options.significance);
    Ok(out)
}

/// Checks `P(|X − E[X]| ≥ E[X]/2) ≤ 4/E[X]` for `X` a sum of independent
/// Bernoulli variables with the given success probabilities.
///
/// Passes iff the empirical frequency is at most the bound plus three
/// binomial standard errors (evaluated at the bound); the reported p-value is
/// the matching one-sided normal tail and the threshold is `Q(3)`.
pub fn concentration_check(p_list: &[f64], trials: u64, seed: SeedSpec) -> Result<TestOutcome> {
    if p_list.is_empty() {
        return Err(Error::InvalidParameter("concentration_check needs at least one probability".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be ≥ 1".into()));
    }
    if let Some(bad) = p_list.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidParameter(format!("probability {bad} not in (0, 1]")));
    }
    let mut sorted = p_list.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<(u64, f64)> = Vec::new();
    for p in sorted {
        match groups.last_mut() {
            Some((n, q)) if *q == p => *n += 1,
            _ => groups.push((1, p)),
        }
    }
    let mean: NeumaierSum = p_list.iter().copied().collect();
    let mean = mean.total();
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut s = seed.with_stream(i).stream();
            let mut x = 0u64;
            for &(n, p) in &groups {
                x += s.binomial(n, p)?;
            }
            Ok(u64::from((x as f64 - mean).abs() >= 0.5 * mean))
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let freq = hits as f64 / trials as f64;
    let bound = 4.0 / mean;
    let b = bound.min(1.0);
    let se = (b * (1.0 - b) / trials as f64).sqrt();
    let p_value = if freq <= bound {
        if se > 0.0 { gaussian_tail((freq - bound) / se) } else { 1.0 }
    } else if se > 0.0 {
        gaussian_tail((freq - bound) / se)
    } else {
        0.0
    };
    Ok(TestOutcome {
        name: format!("concentration[E={}]", crate::fmt_real(mean)),
        kind: TestKind::Concentration,
        statistic: freq,
        p_value,
        significance: THREE_SE_LEVEL,
        pass: p_value >= THREE_SE_LEVEL,
        control: false,
        t: None,
        f: None,
        window: None,
        replicates: trials,
        seed: seed.master_seed,
    })
}

/// Default probability lists for [`concentration_check`].
pub fn default_p_lists() -> Vec<Vec<f64>> {
    vec![
        vec![0.01; 10_000],
        vec![1.0],
        vec![0.01; 400],
        vec![0.2; 50],
        (1..=1000).map(|i| 1.0 / i as f64).collect(),
        (0..200).map(|i| 0.05 + 0.9 * i as f64 / 199.0).collect(),
    ]
}

/// One row of [`tightness_diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub t: f64,
    pub k: f64,
    /// Empirical `P(Z_t ≥ K)`.
    pub p_z: f64,
    /// Empirical `P(Y_t ≥ K)`.
    pub p_y: f64,
    /// `4/K + P(θ([−1, 0]) ≥ K/2)`.
    pub bound: f64,
    pub replicates: u64,
}

/// `P(N ≥ k)` for `N ~ Poisson(mean)`.
pub fn poisson_upper_tail(mean: f64, k: f64) -> Result<f64> {
    if mean == 0.0 {
        return Ok(if k <= 0.0 { 1.0 } else { 0.0 });
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let kk = k.ceil();
    if kk <= 0.0 {
        return Ok(1.0);
    }
    Ok(d.sf(kk as u64 - 1))
}

/// Exceedance frequencies of `Z_t` and `Y_t` against the tightness bound.
pub fn tightness_diagnostic(
    m: &IntensityModel,
    lambda: f64,
    t_grid: &[f64],
    replicates: u64,
    k_grid: &[f64],
    seed: SeedSpec,
) -> Result<Vec<TightnessRow>> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be ≥ 1".into()));
    }
    let near_zero = intensity_mass(m, &WindowSpec::new(-1.0, 0.0)?);
    let mut rows = Vec::new();
    for (ti, &t) in t_grid.iter().enumerate() {
        let sampler = HybridSampler::new(m, t, lambda, &TestFunction::zero(), &[], HybridOptions::default())?;
        let arm = seed.derive(ti as u64);
        let weights = (0..replicates)
            .into_par_iter()
            .map(|i| sampler.sample(arm.with_stream(i)).map(|s| (s.report.z_weight, s.report.y_weight)))
            .collect::<Result<Vec<(f64, f64)>>>()?;
        for &k in k_grid {
            let n = replicates as f64;
            let p_z = weights.iter().filter(|w| w.0 >= k).count() as f64 / n;
            let p_y = weights.iter().filter(|w| w.1 >= k).count() as f64 / n;
            rows.push(TightnessRow {
                t,
                k,
                p_z,
                p_y,
                bound: 4.0 / k + poisson_upper_tail(near_zero, 0.5 * k)?,
                replicates,
            });
        }
    }
    Ok(rows)
}

/// Five test functions supported in `[−3, 3]`.
pub fn default_test_functions() -> Vec<TestFunction> {
    vec![
        TestFunction::Step {
            lo: 0.0,
            hi: 1.0,
            height: std::f64::consts::LN_2,
        },
        TestFunction::Step {
            lo: -1.0,
            hi: 0.0,
            height: 1.0,
        },
        TestFunction::Step {
            lo: -3.0,
            hi: -2.0,
            height: 0.5,
        },
        TestFunction::SmoothBump {
            center: 0.0,
            halfwidth: 1.0,
            height: 1.0,
        },
        TestFunction::SmoothBump {
            center: 1.5,
            halfwidth: 1.0,
            height: 2.0,
        },
    ]
}

/// Non-invariant inputs run alongside the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// `Z e^{−λx}`: half the invariant exponent.
    WrongExponent,
    /// `Z e^{−λx/2}`: a quarter of the invariant exponent.
    QuarterExponent,
}

impl Control {
    pub fn model(self, z: f64, lambda: f64) -> Result<IntensityModel> {
        let ratio = match self {
            Control::WrongExponent => 0.5,
            Control::QuarterExponent => 0.25,
        };
        IntensityModel::new(z, 0.0, ratio * lambda)
    }

    pub fn label(self) -> &'static str {
        match self {
            Control::WrongExponent => "wrong-exponent",
            Control::QuarterExponent => "quarter-exponent",
        }
    }
}

/// Fixed-point suite over a `t` grid plus optional controls at the largest
/// `t`; Bonferroni over all non-control tests.
#[allow(clippy::too_many_arguments)]
pub fn invariance_suite(
    m: &IntensityModel,
    window: WindowSpec,
    t_grid: &[f64],
    f_suite: &[TestFunction],
    options: InvarianceOptions,
    controls: &[Control],
    epsilon: f64,
    seed: SeedSpec,
) -> Result<Vec<TestOutcome>> {
    let mut all = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let plan = SimulationPlan::new(window, t, m.lambda, epsilon, seed.master_seed)?;
        let mut o = invariance_test(m, &plan, f_suite, options, seed.derive(100 + i as u64))?;
        for x in &mut o {
            x.name = format!("fixed_point:{}", x.name);
        }
        all.extend(o);
    }
    if let Some(&t) = t_grid.iter().max_by(|a, b| a.total_cmp(b)) {
        for (j, c) in controls.iter().enumerate() {
            let cm = c.model(m.z.max(1.0), m.lambda)?;
            let plan = SimulationPlan::new(window, t, m.lambda, epsilon, seed.master_seed)?;
            let opts = InvarianceOptions {
                control: true,
                ..options
            };
            let mut o = invariance_test(&cm, &plan, f_suite, opts, seed.derive(200 + j as u64))?;
            for x in &mut o {
                x.name = format!("{}:{}", c.label(), x.name);
            }
            all.extend(o);
        }
    }
    apply_bonferroni(&mut all, options.significance);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_trivial_cases() {
        let w = WindowSpec::new(-1.0, 1.0).unwrap();
        let m = IntensityModel::new(1.0, 1.0, 1.0).unwrap();
        let src = CoxSource { model: m, window: w };
        let e = laplace_mc(&src, &TestFunction::zero(), 50, SeedSpec::new(1, 0)).unwrap();
        assert_eq!((e.mean, e.std_error), (1.0, 0.0));
        let one = FixedSource(PointConfiguration::new(vec![0.0], w).unwrap());
        let f = TestFunction::step(-1.0, 1.0, std::f64::consts::LN_2).unwrap();
        let e = laplace_mc(&one, &f, 10, SeedSpec::new(1, 0)).unwrap();
        assert!((e.mean - 0.5).abs() < 1e-15);
        let wide = TestFunction::step(-2.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            laplace_mc(&one, &wide, 10, SeedSpec::new(1, 0)),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn chi_square_merging() {
        let (stat, p, k) = chi_square_poisson(&[3.0, 2.0, 10.0], &[2.5, 2.5, 10.0]).unwrap();
        assert_eq!(k, 2);
        assert!(stat.abs() < 1e-12 && (p - 1.0).abs() < 1e-12);
        let (_, p, _) = chi_square_poisson(&[100.0, 0.0], &[50.0, 50.0]).unwrap();
        assert!(p < 1e-10);
        assert!(chi_square_poisson(&[1.0], &[]).is_err());
    }

    #[test]
    fn z_test_degenerate() {
        let a = LaplaceEstimate { mean: 0.5, std_error: 0.0, replicates: 1, f: String::new() };
        assert_eq!(two_sample_z(&a, &a), (0.0, 1.0));
    }

    #[test]
    fn concentration_trivial_cases() {
        let o = concentration_check(&[1.0], 1000, SeedSpec::new(2, 0)).unwrap();
        assert_eq!(o.statistic, 0.0);
        assert!(o.pass);
        let o = concentration_check(&vec![0.01; 400], 1000, SeedSpec::new(2, 0)).unwrap();
        assert!(o.pass);
        assert!(concentration_check(&[], 10, SeedSpec::new(2, 0)).is_err());
        assert!(concentration_check(&[0.0], 10, SeedSpec::new(2, 0)).is_err());
    }

    #[test]
    fn bonferroni_counts_non_controls() {
        let mk = |control| TestOutcome {
            name: String::new(),
            kind: TestKind::LaplaceZ,
            statistic: 0.0,
            p_value: 0.004,
            significance: 0.01,
            pass: true,
            control,
            t: None,
            f: None,
            window: None,
            replicates: 1,
            seed: 0,
        };
        let mut v = vec![mk(false), mk(false), mk(true)];
        assert_eq!(apply_bonferroni(&mut v, 0.01), 2);
        assert!(v.iter().all(|o| !o.pass && o.significance == 0.005));
    }

    #[test]
    fn poisson_tail_values() {
        assert!((poisson_upper_tail(2.0, 1.0).unwrap() - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        assert_eq!(poisson_upper_tail(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(poisson_upper_tail(1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn tightness_zero_intensity() {
        let m = IntensityModel::new(0.0, 0.0, 1.0).unwrap();
        let rows = tightness_diagnostic(&m, 1.0, &[100.0], 20, &[1.0, 40.0], SeedSpec::new(1, 0)).unwrap();
        assert!(rows.iter().all(|r| r.p_z == 0.0 && r.p_y == 0.0));
        assert!((rows[1].bound - 0.1).abs() < 1e-15);
    }

    #[test]
    fn identity_at_time_zero() {
        let m = IntensityModel::new(1.0, 1.0, 1.0).unwrap();
        let plan = SimulationPlan::new(WindowSpec::new(-3.0, 3.0).unwrap(), 0.0, 1.0, 1e-6, 3).unwrap();
        let opts = InvarianceOptions { replicates: 50, ..Default::default() };
        let out = invariance_test(&m, &plan, &default_test_functions(), opts, SeedSpec::new(3, 0)).unwrap();
        assert!(out.iter().all(|o| o.pass && o.p_value == 1.0));
    }
}
