//! Globally adaptive 21-point Gauss–Kronrod quadrature.
//!
//! The integration range is first cut at caller-supplied breakpoints (kinks
//! and jumps of the integrand), then the interval with the largest error
//! estimate is bisected until the summed estimate meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_616_806,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Weights of the embedded 10-point Gauss rule at `XGK[1], XGK[3], …, XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of interval bisections.
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerances must be positive (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidParameter("max_subdivisions must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Copy with the absolute tolerance replaced.
    pub fn with_abs_tol(self, abs_tol: f64) -> Self {
        Self { abs_tol, ..self }
    }
}

/// Integral estimate and its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let resasc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let resabs: f64 = {
        let mut s = WGK[10] * fc.abs();
        for j in 0..10 {
            s += WGK[j] * (fv1[j].abs() + fv2[j].abs());
        }
        s * half.abs()
    };
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over `[a, b]`, splitting first at every breakpoint strictly
/// inside the range.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    spec.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration limits must be finite (got [{a}, {b}])"
        )));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let mut left = lo;
    for right in cuts.into_iter().chain(std::iter::once(hi)) {
        if right > left {
            heap.push(kronrod21(&mut f, left, right));
        }
        left = right;
    }
    let mut evaluations = 21 * heap.len();
    let mut subdivisions = 0;
    loop {
        let (value, error) = totals(&heap);
        let tolerance = spec.abs_tol.max(spec.rel_tol * value.abs());
        if error <= tolerance {
            return Ok(QuadratureResult {
                value: sign * value,
                error,
                evaluations,
            });
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: sign * value,
                error,
                tolerance,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at double precision; keep what we have
            let (value, error) = totals_with(&heap, worst);
            if error <= tolerance * 10.0 {
                return Ok(QuadratureResult {
                    value: sign * value,
                    error,
                    evaluations,
                });
            }
            return Err(Error::Quadrature {
                estimate: sign * value,
                error,
                tolerance,
            });
        }
        heap.push(kronrod21(&mut f, worst.a, mid));
        heap.push(kronrod21(&mut f, mid, worst.b));
        evaluations += 42;
        subdivisions += 1;
    }
}

fn totals(heap: &BinaryHeap<Segment>) -> (f64, f64) {
    let mut value = NeumaierSum::default();
    let mut error = 0.0;
    for s in heap.iter() {
        value.add(s.value);
        error += s.error;
    }
    (value.total(), error)
}

fn totals_with(heap: &BinaryHeap<Segment>, extra: Segment) -> (f64, f64) {
    let (v, e) = totals(heap);
    (v + extra.value, e + extra.error)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().total()
}

/// `ln ∫_a^b e^{g(x)} dx` for a log-integrand `g` whose exponentials would
/// overflow or underflow.
///
/// The integrand is rescaled by the largest value of `g` found on a grid
/// that includes `hints` and `breakpoints`; `rel_tol` applies to the
/// rescaled integral. Returns `−∞` when `g` is `−∞` everywhere sampled and
/// the integral vanishes.
pub fn ln_integrate_exp<G: FnMut(f64) -> f64>(
    mut g: G,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    hints: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidParameter(format!(
            "log-space integration needs finite a ≤ b (got [{a}, {b}])"
        )));
    }
    if a == b {
        return Ok(f64::NEG_INFINITY);
    }
    const GRID: usize = 64;
    let mut peak = f64::NEG_INFINITY;
    let probes = (0..=GRID)
        .map(|i| a + (b - a) * i as f64 / GRID as f64)
        .chain(breakpoints.iter().chain(hints).map(|p| p.clamp(a, b)));
    for x in probes {
        let v = g(x);
        if v > peak {
            peak = v;
        }
    }
    if peak == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut cuts: Vec<f64> = breakpoints.to_vec();
    cuts.extend_from_slice(hints);
    let spec = QuadratureSpec {
        abs_tol: 1e-300,
        rel_tol,
        max_subdivisions: 4000,
    };
    let r = integrate(|x| (g(x) - peak).exp(), a, b, &cuts, &spec)?;
    Ok(peak + r.value.ln())
}
