//! Split of the evolved Laplace exponent `Θ_t(f)` over five regions of the
//! initial positions, with the Gaussian-kernel weights `Z_t`, `Y_t`, the
//! hit-probability bounds `L⁺`, `C⁺`, `R⁺`, and the smoothed density `M_t`.
//!
//! Region boundaries sit at `∓λt ∓ t^α`; an atom on a boundary belongs to
//! the region on its left.

use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::analytic::special::ln_normal_interval_probability;
use crate::analytic::{
    expected_one_minus_exp, heat_kernel, ln_add_exp, ln_heat_kernel, ln_integrate_exp, ln_smoothed_expectation,
    ratio_lemma_bound, require_positive_drift, weighted_integral, NeumaierSum, QuadratureSpec, TestFunction,
    Transform,
};
use crate::dynamics::relevance_windows;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::pointproc::{sample_ppp, IntensityModel, PointConfiguration, WindowSpec};
use crate::randomness::SeedSpec;

/// Default region exponent.
pub const DEFAULT_ALPHA: f64 = 2.0 / 3.0;

/// Mass-density cutoff in standard deviations for [`mt_density`].
const MT_CUTOFF_SDS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Left,
    ZWindow,
    Center,
    YWindow,
    Right,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::Left, Region::ZWindow, Region::Center, Region::YWindow, Region::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The five intervals `(−∞, −λt−w]`, `[−λt−w, −λt+w]`, `[−λt+w, λt−w]`,
/// `[λt−w, λt+w]`, `[λt+w, ∞)` with `w = t^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub t: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl RegionSpec {
    pub fn new(t: f64, lambda: f64) -> Result<Self> {
        Self::with_alpha(t, lambda, DEFAULT_ALPHA)
    }

    pub fn with_alpha(t: f64, lambda: f64, alpha: f64) -> Result<Self> {
        let r = RegionSpec { t, lambda, alpha };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive_drift(self.lambda)?;
        ensure_positive("t", self.t)?;
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "region exponent must lie in (1/2, 1) (got {})",
                self.alpha
            )));
        }
        if self.lambda * self.t <= self.half_width() {
            return Err(Error::DegenerateRegions {
                t: self.t,
                threshold: self.threshold(),
            });
        }
        Ok(())
    }

    /// Time above which the center region is nonempty: `λ^{1/(α−1)}`.
    pub fn threshold(&self) -> f64 {
        self.lambda.powf(1.0 / (self.alpha - 1.0))
    }

    pub fn half_width(&self) -> f64 {
        self.t.powf(self.alpha)
    }

    /// The four finite boundaries in increasing order.
    pub fn bounds(&self) -> [f64; 4] {
        let c = self.lambda * self.t;
        let w = self.half_width();
        [-c - w, -c + w, c - w, c + w]
    }

    pub fn region_of(&self, x: f64) -> Region {
        let b = self.bounds();
        if x <= b[0] {
            Region::Left
        } else if x <= b[1] {
            Region::ZWindow
        } else if x <= b[2] {
            Region::Center
        } else if x <= b[3] {
            Region::YWindow
        } else {
            Region::Right
        }
    }

    /// `(lo, hi)` of a region, with infinite ends for the outer two.
    pub fn interval(&self, r: Region) -> (f64, f64) {
        let b = self.bounds();
        match r {
            Region::Left => (f64::NEG_INFINITY, b[0]),
            Region::ZWindow => (b[0], b[1]),
            Region::Center => (b[1], b[2]),
            Region::YWindow => (b[2], b[3]),
            Region::Right => (b[3], f64::INFINITY),
        }
    }
}

/// All decomposition outputs for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecompositionReport {
    #[serde(rename = "theta")]
    pub theta_t_f: f64,
    #[serde(rename = "Z_part")]
    pub z_part: f64,
    #[serde(rename = "Y_part")]
    pub y_part: f64,
    #[serde(rename = "E_part")]
    pub e_part: f64,
    #[serde(rename = "L_plus")]
    pub l_plus: f64,
    #[serde(rename = "C_plus")]
    pub c_plus: f64,
    #[serde(rename = "R_plus")]
    pub r_plus: f64,
    #[serde(rename = "Z_weight")]
    pub z_weight: f64,
    #[serde(rename = "Y_weight")]
    pub y_weight: f64,
    /// Atoms per region, in [`Region::ALL`] order.
    pub atoms_per_region: [u64; 5],
}

impl DecompositionReport {
    pub const CSV_FIELDS: [&'static str; 9] = [
        "theta", "Z_part", "Y_part", "E_part", "L_plus", "C_plus", "R_plus", "Z_weight", "Y_weight",
    ];

    /// `|Θ − (Z + Y + E)|`.
    pub fn additivity_residual(&self) -> f64 {
        (self.theta_t_f - (self.z_part + self.y_part + self.e_part)).abs()
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.theta_t_f,
            self.z_part,
            self.y_part,
            self.e_part,
            self.l_plus,
            self.c_plus,
            self.r_plus,
            self.z_weight,
            self.y_weight,
        ]
    }

    pub fn lcr_total(&self) -> f64 {
        self.l_plus + self.c_plus + self.r_plus
    }

    pub fn csv_header() -> String {
        let mut cols: Vec<&str> = Self::CSV_FIELDS.to_vec();
        cols.extend(["atoms_L", "atoms_Z", "atoms_C", "atoms_Y", "atoms_R", "additivity"]);
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.values().iter().map(|v| crate::fmt_real(*v)).collect();
        cols.extend(self.atoms_per_region.iter().map(|n| n.to_string()));
        cols.push(crate::fmt_real(self.additivity_residual()));
        cols.join(",")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

impl Add for DecompositionReport {
    type Output = DecompositionReport;

    fn add(self, o: DecompositionReport) -> DecompositionReport {
        let mut atoms = self.atoms_per_region;
        for (a, b) in atoms.iter_mut().zip(o.atoms_per_region) {
            *a += b;
        }
        DecompositionReport {
            theta_t_f: self.theta_t_f + o.theta_t_f,
            z_part: self.z_part + o.z_part,
            y_part: self.y_part + o.y_part,
            e_part: self.e_part + o.e_part,
            l_plus: self.l_plus + o.l_plus,
            c_plus: self.c_plus + o.c_plus,
            r_plus: self.r_plus + o.r_plus,
            z_weight: self.z_weight + o.z_weight,
            y_weight: self.y_weight + o.y_weight,
            atoms_per_region: atoms,
        }
    }
}

/// `Θ_t(f) = Σ_i E[1 − e^{−f(x_i + B_t − λt)}]`.
pub fn theta_functional(c: &PointConfiguration, t: f64, lambda: f64, f: &TestFunction, q: &QuadratureSpec) -> Result<f64> {
    ensure_positive("t", t)?;
    ensure_finite("lambda", lambda)?;
    let mut sum = NeumaierSum::default();
    for &x in c.atoms() {
        sum.add(expected_one_minus_exp(x, t, lambda, f, q)?);
    }
    Ok(sum.total())
}

fn hit(x: f64, t: f64, lambda: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    let s = t.sqrt();
    let shift = lambda * t - x;
    crate::analytic::normal_interval_probability((-k + shift) / s, (k + shift) / s)
}

fn ln_hit(x: f64, t: f64, lambda: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let s = t.sqrt();
    let shift = lambda * t - x;
    ln_normal_interval_probability((-k + shift) / s, (k + shift) / s)
}

/// [`decompose`] with the regions given explicitly.
pub fn decompose_in(
    c: &PointConfiguration,
    regions: &RegionSpec,
    f: &TestFunction,
    q: &QuadratureSpec,
) -> Result<DecompositionReport> {
    regions.validate()?;
    let (t, lambda) = (regions.t, regions.lambda);
    let k_f = f.support_bound();
    let mut theta = [NeumaierSum::default(); 5];
    let mut plus = [NeumaierSum::default(); 5];
    let mut weight = [NeumaierSum::default(); 5];
    let mut atoms = [0u64; 5];
    for &x in c.atoms() {
        let r = regions.region_of(x).index();
        atoms[r] += 1;
        theta[r].add(expected_one_minus_exp(x, t, lambda, f, q)?);
        match regions.region_of(x) {
            Region::ZWindow | Region::YWindow => weight[r].add(heat_kernel(lambda * t - x, t)),
            _ => plus[r].add(hit(x, t, lambda, k_f)),
        }
    }
    let part = |r: Region| theta[r.index()].total();
    Ok(DecompositionReport {
        theta_t_f: theta_functional(c, t, lambda, f, q)?,
        z_part: part(Region::ZWindow),
        y_part: part(Region::YWindow),
        e_part: part(Region::Left) + part(Region::Center) + part(Region::Right),
        l_plus: plus[Region::Left.index()].total(),
        c_plus: plus[Region::Center.index()].total(),
        r_plus: plus[Region::Right.index()].total(),
        z_weight: weight[Region::ZWindow.index()].total(),
        y_weight: weight[Region::YWindow.index()].total(),
        atoms_per_region: atoms,
    })
}

/// Full decomposition with the default region exponent.
pub fn decompose(
    c: &PointConfiguration,
    t: f64,
    lambda: f64,
    f: &TestFunction,
    q: &QuadratureSpec,
) -> Result<DecompositionReport> {
    decompose_in(c, &RegionSpec::new(t, lambda)?, f, q)
}

/// `ratio_z = Z_part / (Z_t ∫(1−e^{−f})e^{−2λy}dy)` and
/// `ratio_y = Y_part / (Y_t ∫(1−e^{−f})dy)`; `None` where the weight is zero.
pub fn asymptotic_split_check(
    report: &DecompositionReport,
    f: &TestFunction,
    lambda: f64,
    q: &QuadratureSpec,
) -> Result<(Option<f64>, Option<f64>)> {
    require_positive_drift(lambda)?;
    let iz = weighted_integral(f, 2.0 * lambda, Transform::OneMinusExp, q)?;
    let iy = weighted_integral(f, 0.0, Transform::OneMinusExp, q)?;
    let ratio = |part: f64, w: f64, i: f64| (w > 0.0 && i > 0.0).then(|| part / (w * i));
    Ok((ratio(report.z_part, report.z_weight, iz), ratio(report.y_part, report.y_weight, iy)))
}

/// `(L⁺, C⁺, R⁺)`: per-region sums of `P(|x + B_t − λt| ≤ K_f)`.
pub fn lcr_plus(c: &PointConfiguration, t: f64, lambda: f64, k_f: f64) -> Result<(f64, f64, f64)> {
    let regions = RegionSpec::new(t, lambda)?;
    crate::error::ensure_nonnegative("K_f", k_f)?;
    let mut sums = [NeumaierSum::default(); 5];
    for &x in c.atoms() {
        sums[regions.region_of(x).index()].add(hit(x, t, lambda, k_f));
    }
    Ok((
        sums[Region::Left.index()].total(),
        sums[Region::Center.index()].total(),
        sums[Region::Right.index()].total(),
    ))
}

/// `(E L⁺, E C⁺, E R⁺)` for `θ ~ PPP(m)` with deterministic `m`: integrals of
/// the intensity against the hit probability over each region.
pub fn expected_lcr_plus(m: &IntensityModel, t: f64, lambda: f64, k_f: f64) -> Result<(f64, f64, f64)> {
    m.validate()?;
    if !m.is_deterministic() {
        return Err(Error::InvalidParameter("expected_lcr_plus needs a deterministic intensity".into()));
    }
    let regions = RegionSpec::new(t, lambda)?;
    ensure_positive("K_f", k_f)?;
    let s = t.sqrt();
    let peaks = [lambda * t - 2.0 * m.lambda * t, lambda * t];
    let reach = MT_CUTOFF_SDS * 1.5 * s + k_f;
    let (lo_all, hi_all) = (peaks[0].min(peaks[1]) - reach, peaks[0].max(peaks[1]) + reach);
    let mut out = [0.0; 3];
    for (slot, r) in [Region::Left, Region::Center, Region::Right].into_iter().enumerate() {
        let (a, b) = regions.interval(r);
        let (lo, hi) = (a.max(lo_all), b.min(hi_all));
        if hi <= lo {
            continue;
        }
        let mut total = NeumaierSum::default();
        for exponential in [true, false] {
            if (exponential && m.z == 0.0) || (!exponential && m.y == 0.0) {
                continue;
            }
            let ln_m = |x: f64| if exponential { m.ln_exponential_density(x) } else { m.y.ln() };
            let hints: Vec<f64> = peaks.iter().flat_map(|p| [p - 3.0 * s, *p, p + 3.0 * s]).collect();
            let v = ln_integrate_exp(|x| ln_m(x) + ln_hit(x, t, lambda, k_f), lo, hi, &[], &hints, 1e-10)?;
            total.add(v.exp());
        }
        out[slot] = total.total();
    }
    Ok((out[0], out[1], out[2]))
}

/// Both sides of the left-region transfer inequality, kept in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferBound {
    /// `ln L⁺_s(f, t)` with `s = t + √t`.
    pub ln_lhs: f64,
    /// `ln (½e^{(λ/4)t^{1/6}} · L⁺_t(f))`.
    pub ln_rhs: f64,
}

impl TransferBound {
    pub fn lhs(&self) -> f64 {
        self.ln_lhs.exp()
    }

    pub fn rhs(&self) -> f64 {
        self.ln_rhs.exp()
    }

    /// `lhs ≥ rhs`, with both empty sums counting as equal.
    pub fn holds(&self) -> bool {
        self.ln_lhs >= self.ln_rhs
    }
}

/// Evaluates `L⁺_s(f, t)` and the lemma-scaled `L⁺_t(f)` on `c`.
pub fn ratio_transfer_bound(c: &PointConfiguration, t: f64, lambda: f64, k_f: f64) -> Result<TransferBound> {
    let regions = RegionSpec::new(t, lambda)?;
    ensure_positive("K_f", k_f)?;
    let s = t + t.sqrt();
    let (_, left_edge) = regions.interval(Region::Left);
    let mut ln_s = f64::NEG_INFINITY;
    let mut ln_t = f64::NEG_INFINITY;
    for &x in c.atoms_between(f64::NEG_INFINITY, left_edge) {
        ln_s = ln_add_exp(ln_s, ln_hit(x, s, lambda, k_f));
        ln_t = ln_add_exp(ln_t, ln_hit(x, t, lambda, k_f));
    }
    Ok(TransferBound {
        ln_lhs: ln_s,
        ln_rhs: ratio_lemma_bound(t, lambda)?.ln() + ln_t,
    })
}

/// `ln` of the hit-probability ratio `P(|x+B_s−λs| ≤ K)/P(|x+B_t−λt| ≤ K)`.
pub fn ln_hit_ratio(x: f64, t: f64, s: f64, lambda: f64, k: f64) -> Result<f64> {
    ensure_positive("t", t)?;
    ensure_positive("s", s)?;
    ensure_positive("K", k)?;
    Ok(ln_hit(x, s, lambda, k) - ln_hit(x, t, lambda, k))
}

/// `Σ_i φ_t(y + λt − x_i)`, skipping atoms beyond 40 standard deviations.
pub fn mt_density(c: &PointConfiguration, t: f64, lambda: f64, y: f64) -> f64 {
    let center = y + lambda * t;
    let r = MT_CUTOFF_SDS * t.sqrt();
    let mut sum = NeumaierSum::default();
    for &x in c.atoms_between(center - r, center + r) {
        sum.add(heat_kernel(center - x, t));
    }
    sum.total()
}

/// Tuning of [`HybridSampler`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridOptions {
    /// Expected atoms reaching the kernel window from outside the sampled
    /// windows.
    pub epsilon: f64,
    /// Initial expected number of explicit exponential-component atoms.
    pub budget: f64,
    /// Largest allowed standard deviation of any functional's dense part.
    pub tolerance: f64,
    pub alpha: f64,
}

impl Default for HybridOptions {
    fn default() -> Self {
        HybridOptions {
            epsilon: 1e-9,
            budget: 200.0,
            tolerance: 1e-8,
            alpha: DEFAULT_ALPHA,
        }
    }
}

const MAX_BUDGET: f64 = 1e7;

/// Means of every linear functional over the dense stretch, plus the largest
/// standard deviation among them.
#[derive(Debug, Clone, PartialEq)]
struct DenseMeans {
    report: DecompositionReport,
    mt: Vec<f64>,
    max_sd: f64,
}

/// One hybrid replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSample {
    pub report: DecompositionReport,
    /// `M_t` density at the sampler's points.
    pub mt: Vec<f64>,
    pub explicit_atoms: usize,
}

/// Samples decompositions of `θ ~ PPP((Z e^{−2λ'x} + Y)dx)` at large `t`.
///
/// Only atoms that can reach the kernel window `[−K, K]`, `K = max(K_f, 1) + 1`,
/// are sampled. Where the exponential component is so dense that explicit
/// sampling is impossible (left of a cut chosen from the budget), its
/// contribution to every functional is replaced by the exact mean, computed by
/// log-space quadrature. The replacement is accepted only if every such
/// functional's standard deviation over the dense stretch is below
/// `tolerance`; otherwise the budget grows tenfold.
#[derive(Debug, Clone)]
pub struct HybridSampler {
    model: IntensityModel,
    regions: RegionSpec,
    f: TestFunction,
    q: QuadratureSpec,
    mt_points: Vec<f64>,
    exp_explicit: Option<WindowSpec>,
    flat_explicit: Option<WindowSpec>,
    dense: DenseMeans,
    dense_window: Option<WindowSpec>,
}

impl HybridSampler {
    pub fn new(
        model: &IntensityModel,
        t: f64,
        lambda: f64,
        f: &TestFunction,
        mt_points: &[f64],
        options: HybridOptions,
    ) -> Result<Self> {
        model.validate()?;
        if !model.is_deterministic() {
            return Err(Error::InvalidParameter("hybrid sampling needs a deterministic intensity".into()));
        }
        f.validate()?;
        let regions = RegionSpec::with_alpha(t, lambda, options.alpha)?;
        let q = QuadratureSpec::default();
        let k = f.support_bound().max(1.0) + 1.0;
        let target = WindowSpec::new(-k, k)?;
        let (exp_w, flat_w) = relevance_windows(model, &target, t, lambda, options.epsilon)?;

        let mut budget = options.budget;
        loop {
            let (dense_window, exp_explicit) = split_exponential(model, exp_w, budget)?;
            let dense = match dense_window {
                Some(w) => dense_means(model, &regions, f, &q, mt_points, &w)?,
                None => DenseMeans {
                    report: DecompositionReport::default(),
                    mt: vec![0.0; mt_points.len()],
                    max_sd: 0.0,
                },
            };
            if dense.max_sd <= options.tolerance {
                return Ok(HybridSampler {
                    model: model.clone(),
                    regions,
                    f: f.clone(),
                    q,
                    mt_points: mt_points.to_vec(),
                    exp_explicit,
                    flat_explicit: flat_w,
                    dense,
                    dense_window,
                });
            }
            if budget >= MAX_BUDGET {
                return Err(Error::DenseCertificate {
                    bound: dense.max_sd,
                    tolerance: options.tolerance,
                });
            }
            budget = (budget * 10.0).min(MAX_BUDGET);
        }
    }

    pub fn regions(&self) -> RegionSpec {
        self.regions
    }

    /// Stretch of the exponential component represented by its mean.
    pub fn dense_window(&self) -> Option<WindowSpec> {
        self.dense_window
    }

    /// Largest standard deviation dropped by the dense replacement.
    pub fn dense_sd_bound(&self) -> f64 {
        self.dense.max_sd
    }

    /// The explicitly sampled atoms of one replicate.
    pub fn sample_explicit(&self, seed: SeedSpec) -> Result<PointConfiguration> {
        let mut stream = seed.stream();
        let mut atoms = Vec::new();
        let mut hull: Option<WindowSpec> = None;
        if let Some(w) = self.exp_explicit {
            atoms.extend_from_slice(sample_ppp(&self.model.exponential_part(), &w, &mut stream)?.atoms());
            hull = Some(w);
        }
        if let Some(w) = self.flat_explicit {
            atoms.extend_from_slice(sample_ppp(&self.model.flat_part(), &w, &mut stream)?.atoms());
            hull = Some(match hull {
                None => w,
                Some(h) => WindowSpec::new(h.lo.min(w.lo), h.hi.max(w.hi))?,
            });
        }
        let window = hull.unwrap_or(WindowSpec { lo: -1.0, hi: 1.0 });
        PointConfiguration::new(atoms, window)
    }

    pub fn sample(&self, seed: SeedSpec) -> Result<HybridSample> {
        let c = self.sample_explicit(seed)?;
        let explicit = decompose_in(&c, &self.regions, &self.f, &self.q)?;
        let (t, lambda) = (self.regions.t, self.regions.lambda);
        let mt = self
            .mt_points
            .iter()
            .zip(&self.dense.mt)
            .map(|(&y, d)| mt_density(&c, t, lambda, y) + d)
            .collect();
        Ok(HybridSample {
            report: explicit + self.dense.report,
            mt,
            explicit_atoms: c.len(),
        })
    }
}

/// Splits the exponential component's window at the cut where the expected
/// explicit count to its right equals `budget`. Returns `(dense, explicit)`.
fn split_exponential(
    m: &IntensityModel,
    w: Option<WindowSpec>,
    budget: f64,
) -> Result<(Option<WindowSpec>, Option<WindowSpec>)> {
    let Some(w) = w else {
        return Ok((None, None));
    };
    let c = 2.0 * m.lambda;
    if c <= 0.0 {
        let mass = crate::pointproc::intensity_mass(&m.exponential_part(), &w);
        if mass > MAX_BUDGET {
            return Err(Error::InvalidParameter(format!(
                "exponential component carries {mass} expected atoms on [{}, {}]",
                w.lo, w.hi
            )));
        }
        return Ok((None, Some(w)));
    }
    // Z/c·(e^{−c·x_c} − e^{−c·hi}) = budget
    let cut = -ln_add_exp((c * budget / m.z).ln(), -c * w.hi) / c;
    if cut <= w.lo {
        Ok((None, Some(w)))
    } else if cut >= w.hi {
        Ok((Some(w), None))
    } else {
        Ok((Some(WindowSpec::new(w.lo, cut)?), Some(WindowSpec::new(cut, w.hi)?)))
    }
}

/// `(ln ∫ m·k, ln ∫ m·k²)` over `[lo, hi]` for a log-kernel `ln_k`.
fn ln_moments<K: FnMut(f64) -> Result<f64>>(
    ln_m: impl Fn(f64) -> f64,
    mut ln_k: K,
    lo: f64,
    hi: f64,
    hints: &[f64],
) -> Result<(f64, f64)> {
    if hi <= lo {
        return Ok((f64::NEG_INFINITY, f64::NEG_INFINITY));
    }
    // tabulate the kernel once per evaluation point for both moments
    let mut failure: Option<Error> = None;
    let mut eval = |x: f64, power: f64| match ln_k(x) {
        Ok(v) => ln_m(x) + power * v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NEG_INFINITY
        }
    };
    let mean = ln_integrate_exp(|x| eval(x, 1.0), lo, hi, &[], hints, 1e-11)?;
    let second = ln_integrate_exp(|x| eval(x, 2.0), lo, hi, &[], hints, 1e-6)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((mean, second))
}

fn dense_means(
    m: &IntensityModel,
    regions: &RegionSpec,
    f: &TestFunction,
    q: &QuadratureSpec,
    mt_points: &[f64],
    w: &WindowSpec,
) -> Result<DenseMeans> {
    let (t, lambda) = (regions.t, regions.lambda);
    let k_f = f.support_bound();
    let ln_z = m.z.ln();
    let c = 2.0 * m.lambda;
    let ln_m = |x: f64| ln_z - c * x;
    // sources reaching y at time t from this component concentrate near y + λt − ct
    let shift = lambda * t - c * t;
    let mut hints: Vec<f64> = [-k_f, 0.0, k_f].iter().map(|y| y + shift).collect();
    let s = t.sqrt();
    hints.extend([shift - 3.0 * s, shift + 3.0 * s]);

    let mut max_var: f64 = 0.0;
    let mut mean_of = |lo: f64, hi: f64, kernel: &mut dyn FnMut(f64) -> Result<f64>, extra: &[f64]| -> Result<f64> {
        let mut h = hints.clone();
        h.extend_from_slice(extra);
        let (mean, second) = ln_moments(ln_m, kernel, lo, hi, &h)?;
        max_var = max_var.max(second.exp());
        Ok(mean.exp())
    };

    let mut report = DecompositionReport::default();
    let mut theta_parts = [0.0; 5];
    for r in Region::ALL {
        let (a, b) = regions.interval(r);
        let (lo, hi) = (a.max(w.lo), b.min(w.hi));
        if hi <= lo {
            continue;
        }
        theta_parts[r.index()] = if f.is_zero() {
            0.0
        } else {
            mean_of(
                lo,
                hi,
                &mut |x| ln_smoothed_expectation(x, t, lambda, f, Transform::OneMinusExp, q),
                &[],
            )?
        };
        match r {
            Region::ZWindow | Region::YWindow => {
                let v = mean_of(lo, hi, &mut |x| Ok(ln_heat_kernel(lambda * t - x, t)), &[lambda * t - c * t])?;
                if r == Region::ZWindow {
                    report.z_weight = v;
                } else {
                    report.y_weight = v;
                }
            }
            _ => {
                let v = if k_f > 0.0 {
                    mean_of(lo, hi, &mut |x| Ok(ln_hit(x, t, lambda, k_f)), &[])?
                } else {
                    0.0
                };
                match r {
                    Region::Left => report.l_plus = v,
                    Region::Center => report.c_plus = v,
                    _ => report.r_plus = v,
                }
            }
        }
    }
    report.z_part = theta_parts[Region::ZWindow.index()];
    report.y_part = theta_parts[Region::YWindow.index()];
    report.e_part =
        theta_parts[Region::Left.index()] + theta_parts[Region::Center.index()] + theta_parts[Region::Right.index()];
    report.theta_t_f = report.z_part + report.y_part + report.e_part;

    let mut mt = Vec::with_capacity(mt_points.len());
    for &y in mt_points {
        mt.push(mean_of(w.lo, w.hi, &mut |x| Ok(ln_heat_kernel(y + lambda * t - x, t)), &[y + shift])?);
    }
    Ok(DenseMeans {
        report,
        mt,
        max_sd: max_var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{hit_window_probability, normal_cdf};

    fn ln2_step() -> TestFunction {
        TestFunction::step(0.0, 1.0, 2f64.ln()).unwrap()
    }

    fn big_window() -> WindowSpec {
        WindowSpec::new(-1e6, 1e6).unwrap()
    }

    #[test]
    fn region_layout() {
        let r = RegionSpec::new(1000.0, 1.0).unwrap();
        let b = r.bounds();
        assert!(b.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(r.region_of(b[0]), Region::Left);
        assert_eq!(r.region_of(b[0] + 1e-9), Region::ZWindow);
        assert_eq!(r.region_of(0.0), Region::Center);
        assert_eq!(r.region_of(b[3] + 1.0), Region::Right);
        assert!(matches!(RegionSpec::new(0.5, 1.0), Err(Error::DegenerateRegions { .. })));
        assert_eq!(RegionSpec::new(1.0, 0.0), Err(Error::ZeroDrift));
        assert!((r.threshold() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_configuration() {
        let q = QuadratureSpec::default();
        let c = PointConfiguration::empty(big_window());
        let rep = decompose(&c, 100.0, 1.0, &ln2_step(), &q).unwrap();
        assert_eq!(rep, DecompositionReport::default());
        assert_eq!(theta_functional(&c, 1.0, 1.0, &ln2_step(), &q).unwrap(), 0.0);
        assert_eq!(mt_density(&c, 1.0, 1.0, 0.0), 0.0);
        let tb = ratio_transfer_bound(&c, 1e4, 1.0, 1.0).unwrap();
        assert_eq!((tb.lhs(), tb.rhs()), (0.0, 0.0));
        assert!(tb.holds());
        assert_eq!(lcr_plus(&c, 100.0, 1.0, 1.0).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_atom_at_z_center() {
        let q = QuadratureSpec::default();
        let (t, lambda) = (100.0, 1.0);
        let x = -lambda * t;
        let c = PointConfiguration::new(vec![x], big_window()).unwrap();
        let rep = decompose(&c, t, lambda, &ln2_step(), &q).unwrap();
        let e = expected_one_minus_exp(x, t, lambda, &ln2_step(), &q).unwrap();
        assert_eq!(rep.z_part, e);
        assert_eq!((rep.y_part, rep.e_part), (0.0, 0.0));
        let expected_weight = crate::analytic::special::normal_pdf(2.0 * lambda * t.sqrt()) / t.sqrt();
        assert!(((rep.z_weight - expected_weight) / expected_weight).abs() < 1e-12);
        assert_eq!(rep.atoms_per_region, [0, 1, 0, 0, 0]);
        let (rz, ry) = asymptotic_split_check(&rep, &ln2_step(), lambda, &q).unwrap();
        let rz = rz.unwrap();
        assert!(rz > 0.9 && rz < 1.1, "{rz}");
        assert!(ry.is_none());
    }

    #[test]
    fn single_atom_at_y_center() {
        let q = QuadratureSpec::default();
        let (t, lambda) = (100.0, 1.0);
        let c = PointConfiguration::new(vec![lambda * t], big_window()).unwrap();
        let rep = decompose(&c, t, lambda, &ln2_step(), &q).unwrap();
        let (_, ry) = asymptotic_split_check(&rep, &ln2_step(), lambda, &q).unwrap();
        let ry = ry.unwrap();
        assert!(ry > 0.9 && ry < 1.1, "{ry}");
    }

    #[test]
    fn lcr_single_atom() {
        let (t, lambda): (f64, f64) = (1e4, 1.0);
        let x = -lambda * t - 2.0 * t.powf(2.0 / 3.0);
        let c = PointConfiguration::new(vec![x], big_window()).unwrap();
        let (l, cc, r) = lcr_plus(&c, t, lambda, 1.0).unwrap();
        assert_eq!(l, hit_window_probability(x, t, lambda, 1.0).unwrap());
        assert_eq!((cc, r), (0.0, 0.0));
    }

    #[test]
    fn transfer_bound_at_region_edge() {
        let (t, lambda): (f64, f64) = (1e4, 1.0);
        let x = -lambda * t - t.powf(2.0 / 3.0);
        let c = PointConfiguration::new(vec![x], big_window()).unwrap();
        let tb = ratio_transfer_bound(&c, t, lambda, 1.0).unwrap();
        assert!(tb.holds(), "{} < {}", tb.ln_lhs, tb.ln_rhs);
    }

    #[test]
    fn mt_peak() {
        let c = PointConfiguration::new(vec![0.3], big_window()).unwrap();
        let v = mt_density(&c, 1.0, 2.0, 0.3 - 2.0);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn additivity_and_domination_on_grid() {
        let q = QuadratureSpec::default();
        let f = ln2_step();
        let (t, lambda) = (100.0, 1.0);
        let atoms: Vec<f64> = (-300..=300).map(|i| i as f64 * 0.7).collect();
        let c = PointConfiguration::new(atoms.clone(), big_window()).unwrap();
        let rep = decompose(&c, t, lambda, &f, &q).unwrap();
        assert!(rep.additivity_residual() < 1e-10);
        assert!(rep.e_part <= rep.lcr_total() + 1e-15);
        for x in atoms {
            let e = expected_one_minus_exp(x, t, lambda, &f, &q).unwrap();
            assert!(e <= hit_window_probability(x, t, lambda, 1.0).unwrap());
        }
    }

    #[test]
    fn csv_and_json_names() {
        let rep = DecompositionReport::default();
        assert!(DecompositionReport::csv_header().starts_with("theta,Z_part,Y_part,E_part,L_plus"));
        assert_eq!(rep.csv_row().split(',').count(), DecompositionReport::csv_header().split(',').count());
        let j = rep.to_json();
        assert!(j.contains("\"Z_weight\""));
        let back: DecompositionReport = serde_json::from_str(&j).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn hybrid_dense_weight_matches_gaussian_mass() {
        let m = IntensityModel::new(1.0, 0.0, 1.0).unwrap();
        let t = 100.0;
        let h = HybridSampler::new(&m, t, 1.0, &ln2_step(), &[], HybridOptions::default()).unwrap();
        let s = h.sample(SeedSpec::new(1, 0)).unwrap();
        let expected = 2.0 * normal_cdf(t.powf(1.0 / 6.0)) - 1.0;
        assert!((s.report.z_weight - expected).abs() < 1e-9, "{} vs {expected}", s.report.z_weight);
        assert!(h.dense_sd_bound() < 1e-8);
    }
}
