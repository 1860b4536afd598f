//! Independent Brownian motions with drift `−λ`, and windowed observation of
//! the evolved configuration.
//!
//! Two observation schemes are provided. `Forward` samples the initial
//! configuration on the whole padded window and moves every atom. `Arrivals`
//! samples the initial configuration only on the observation window and
//! draws the atoms entering it from outside directly: by the marking theorem,
//! sources `x` with intensity `C e^{−μx}` and displacements `z ~ N(0, t)` form
//! a Poisson process in `(y, z) = (x + z − λt, z)` with intensity
//! `C e^{μt(μ/2−λ)} e^{−μy} · φ_t(z − μt)`. Both schemes sample the same law;
//! `Arrivals` stays cheap when the padded window carries astronomically many
//! atoms.

use serde::{Deserialize, Deserializer, Serialize};

use crate::analytic::{ln_add_exp, ln_integrate_exp};
use crate::analytic::special::ln_normal_interval_probability;
use crate::error::{ensure_finite, ensure_nonnegative, ensure_positive, Error, Result};
use crate::pointproc::{draw_mixing, sample_ppp, IntensityModel, PointConfiguration, WindowSpec};
use crate::randomness::{RandomStream, SeedSpec};

/// Evolved windows are widened by this many standard deviations.
const RETENTION_SDS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Arrivals,
    Forward,
}

/// Parameters of one windowed evolution experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PlanDocument", into = "PlanDocument")]
pub struct SimulationPlan {
    pub observation_window: WindowSpec,
    pub t: f64,
    pub lambda: f64,
    /// Allowed expected number of atoms reaching the observation window
    /// from outside the padded window. `+∞` disables the check.
    pub epsilon: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Filled in by [`SimulationPlan::with_padding`].
    pub padded_window: Option<WindowSpec>,
}

#[derive(Serialize, Deserialize)]
struct PlanDocument {
    window: [f64; 2],
    t: f64,
    lambda: f64,
    #[serde(default = "default_epsilon", deserialize_with = "null_as_infinity")]
    epsilon: f64,
    seed: u64,
    #[serde(default)]
    scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padded_window: Option<[f64; 2]>,
}

pub(crate) fn default_epsilon() -> f64 {
    1e-6
}

pub(crate) fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl From<PlanDocument> for SimulationPlan {
    fn from(d: PlanDocument) -> Self {
        SimulationPlan {
            observation_window: WindowSpec {
                lo: d.window[0],
                hi: d.window[1],
            },
            t: d.t,
            lambda: d.lambda,
            epsilon: d.epsilon,
            seed: d.seed,
            scheme: d.scheme,
            padded_window: d.padded_window.map(|[lo, hi]| WindowSpec { lo, hi }),
        }
    }
}

impl From<SimulationPlan> for PlanDocument {
    fn from(p: SimulationPlan) -> Self {
        PlanDocument {
            window: [p.observation_window.lo, p.observation_window.hi],
            t: p.t,
            lambda: p.lambda,
            epsilon: p.epsilon,
            seed: p.seed,
            scheme: p.scheme,
            padded_window: p.padded_window.map(|w| [w.lo, w.hi]),
        }
    }
}

impl SimulationPlan {
    pub fn new(observation_window: WindowSpec, t: f64, lambda: f64, epsilon: f64, seed: u64) -> Result<Self> {
        let p = SimulationPlan {
            observation_window,
            t,
            lambda,
            epsilon,
            seed,
            scheme: Scheme::Arrivals,
            padded_window: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.observation_window.validate()?;
        ensure_nonnegative("t", self.t)?;
        ensure_finite("lambda", self.lambda)?;
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0 (got {})", self.epsilon)));
        }
        if let Some(p) = &self.padded_window {
            p.validate()?;
            if !p.contains_window(&self.observation_window) {
                return Err(Error::WindowNotContained {
                    lo: self.observation_window.lo,
                    hi: self.observation_window.hi,
                    outer_lo: p.lo,
                    outer_hi: p.hi,
                });
            }
        }
        Ok(())
    }

    /// Certifies a padded window for `m` (its 0.999 envelope under mixing).
    pub fn with_padding(mut self, m: &IntensityModel) -> Result<Self> {
        self.validate()?;
        if self.t == 0.0 {
            self.padded_window = Some(self.observation_window);
            return Ok(self);
        }
        let pad = plan_padding(&self.observation_window, self.t, self.lambda, &m.upper_envelope(), self.epsilon)?;
        self.padded_window = Some(pad);
        Ok(self)
    }

    pub fn seed_spec(&self) -> SeedSpec {
        SeedSpec::new(self.seed, 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: SimulationPlan = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

fn evolved_window(c: &PointConfiguration, t: f64, lambda: f64, atoms: &[f64]) -> WindowSpec {
    let mut w = c.window().shifted(-lambda * t).widened(RETENTION_SDS * t.sqrt());
    if let (Some(first), Some(last)) = (atoms.first(), atoms.last()) {
        w.lo = w.lo.min(*first);
        w.hi = w.hi.max(*last);
    }
    w
}

/// Moves every atom to `x + √t·G − λt` with independent standard normals.
///
/// The result keeps every atom; its window is the input window shifted by
/// `−λt` and widened by 40 standard deviations.
pub fn evolve(c: &PointConfiguration, t: f64, lambda: f64, stream: &mut RandomStream) -> Result<PointConfiguration> {
    ensure_positive("t", t)?;
    ensure_finite("lambda", lambda)?;
    let noise: Vec<f64> = (0..c.len()).map(|_| stream.standard_normal()).collect();
    evolve_with_noise(c, t, lambda, &noise)
}

/// [`evolve`] with the standard normals supplied by the caller, one per atom
/// in sorted order.
pub fn evolve_with_noise(c: &PointConfiguration, t: f64, lambda: f64, noise: &[f64]) -> Result<PointConfiguration> {
    ensure_positive("t", t)?;
    ensure_finite("lambda", lambda)?;
    if noise.len() != c.len() {
        return Err(Error::InvalidParameter(format!(
            "{} noise values for {} atoms",
            noise.len(),
            c.len()
        )));
    }
    let s = t.sqrt();
    let mut atoms: Vec<f64> = c.atoms().iter().zip(noise).map(|(x, g)| x + s * g - lambda * t).collect();
    atoms.sort_by(f64::total_cmp);
    let w = evolved_window(c, t, lambda, &atoms);
    PointConfiguration::new(atoms, w)
}

/// One additive piece `coef·e^{−rate·x}` of an intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    ln_coef: f64,
    rate: f64,
}

fn components(m: &IntensityModel) -> Vec<Component> {
    let mut out = Vec::with_capacity(2);
    if m.z > 0.0 {
        out.push(Component {
            ln_coef: m.z.ln(),
            rate: 2.0 * m.lambda,
        });
    }
    if m.y > 0.0 {
        out.push(Component {
            ln_coef: m.y.ln(),
            rate: 0.0,
        });
    }
    out
}

/// Everything needed to integrate `intensity(x)·P(x + B_t − λt ∈ target)`.
struct LeakIntegrand<'a> {
    parts: &'a [Component],
    target: WindowSpec,
    t: f64,
    lambda: f64,
}

impl LeakIntegrand<'_> {
    fn ln_landing(&self, x: f64) -> f64 {
        let s = self.t.sqrt();
        let shift = self.lambda * self.t - x;
        ln_normal_interval_probability((self.target.lo + shift) / s, (self.target.hi + shift) / s)
    }

    /// Sources of `c` reaching the target concentrate on this interval.
    fn source_centers(&self, c: &Component) -> (f64, f64) {
        let d = self.lambda * self.t - c.rate * self.t;
        (self.target.lo + d, self.target.hi + d)
    }

    fn margin(&self) -> f64 {
        RETENTION_SDS * self.t.sqrt() + self.target.width()
    }

    fn hints(&self, c: &Component) -> Vec<f64> {
        let (ca, cb) = self.source_centers(c);
        let s = self.t.sqrt();
        let mut h = vec![ca, cb];
        for k in [1.0, 3.0, 10.0] {
            h.extend([ca - k * s, cb + k * s]);
        }
        h
    }

    fn ln_component(&self, c: &Component, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(f64::NEG_INFINITY);
        }
        ln_integrate_exp(
            |x| c.ln_coef - c.rate * x + self.ln_landing(x),
            lo,
            hi,
            &[],
            &self.hints(c),
            1e-6,
        )
    }

    /// `ln ∫_{−∞}^{l}`.
    fn ln_left(&self, l: f64) -> Result<f64> {
        let mut acc = f64::NEG_INFINITY;
        for c in self.parts {
            let (ca, _) = self.source_centers(c);
            let lo = l.min(ca) - self.margin();
            acc = ln_add_exp(acc, self.ln_component(c, lo, l)?);
        }
        Ok(acc)
    }

    /// `ln ∫_{h}^{∞}`.
    fn ln_right(&self, h: f64) -> Result<f64> {
        let mut acc = f64::NEG_INFINITY;
        for c in self.parts {
            let (_, cb) = self.source_centers(c);
            let hi = h.max(cb) + self.margin();
            acc = ln_add_exp(acc, self.ln_component(c, h, hi)?);
        }
        Ok(acc)
    }
}

fn max_padding_radius(t: f64, lambda: f64) -> f64 {
    20.0 * (lambda.abs() * t + 40.0 * t.sqrt())
}

/// Expected number of atoms of `m` starting outside `pad` that are in
/// `target` at time `t`.
pub fn padding_leak(m: &IntensityModel, target: &WindowSpec, pad: &WindowSpec, t: f64, lambda: f64) -> Result<f64> {
    ensure_positive("t", t)?;
    let parts = components(m);
    let leak = LeakIntegrand {
        parts: &parts,
        target: *target,
        t,
        lambda,
    };
    Ok(ln_add_exp(leak.ln_left(pad.lo)?, leak.ln_right(pad.hi)?).exp())
}

/// Pushes `base` outward until each tail integral is below `eps_side`.
fn grow_until_certified(leak: &LeakIntegrand, base: WindowSpec, eps_side: f64) -> Result<WindowSpec> {
    let r_max = max_padding_radius(leak.t, leak.lambda);
    let ln_eps = eps_side.ln();
    let fail = |l: f64, r: f64| Error::Padding {
        leak: l,
        epsilon: 2.0 * eps_side,
        radius: r,
    };

    let lo = if leak.ln_left(base.lo)? < ln_eps {
        base.lo
    } else {
        let far = leak.ln_left(base.lo - r_max)?;
        if far >= ln_eps {
            return Err(fail(far.exp(), r_max));
        }
        // ln_left(inner) ≥ ln_eps > ln_left(outer)
        let (mut inner, mut outer) = (base.lo, base.lo - r_max);
        while inner - outer > 1e-6 * (1.0 + base.lo.abs()) {
            let mid = 0.5 * (inner + outer);
            if leak.ln_left(mid)? < ln_eps {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        outer
    };
    let hi = if leak.ln_right(base.hi)? < ln_eps {
        base.hi
    } else {
        let far = leak.ln_right(base.hi + r_max)?;
        if far >= ln_eps {
            return Err(fail(far.exp(), r_max));
        }
        let (mut inner, mut outer) = (base.hi, base.hi + r_max);
        while outer - inner > 1e-6 * (1.0 + base.hi.abs()) {
            let mid = 0.5 * (inner + outer);
            if leak.ln_right(mid)? < ln_eps {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        outer
    };
    WindowSpec::new(lo, hi)
}

/// Smallest window, grown outward from the hull of `obs` and `obs + λt`,
/// whose complement sends fewer than `ε` expected atoms into `obs` by time
/// `t`. The model must be deterministic; pass the mixing envelope for Cox
/// runs.
pub fn plan_padding(obs: &WindowSpec, t: f64, lambda: f64, m: &IntensityModel, epsilon: f64) -> Result<WindowSpec> {
    obs.validate()?;
    ensure_positive("t", t)?;
    ensure_finite("lambda", lambda)?;
    m.validate()?;
    if !m.is_deterministic() {
        return Err(Error::InvalidParameter(
            "plan_padding needs a deterministic intensity".into(),
        ));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0 (got {epsilon})")));
    }
    let shifted = obs.shifted(lambda * t);
    let base = WindowSpec::new(obs.lo.min(shifted.lo), obs.hi.max(shifted.hi))?;
    if epsilon.is_infinite() {
        return Ok(base);
    }
    let parts = components(m);
    let leak = LeakIntegrand {
        parts: &parts,
        target: *obs,
        t,
        lambda,
    };
    grow_until_certified(&leak, base, 0.5 * epsilon)
}

/// Window outside which each component of `m` sends fewer than `ε/4`
/// expected atoms into `target` per side, or `None` when the component's
/// total contribution is already below `ε`. Returned per component as
/// `(exponential, flat)`.
pub fn relevance_windows(
    m: &IntensityModel,
    target: &WindowSpec,
    t: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<(Option<WindowSpec>, Option<WindowSpec>)> {
    target.validate()?;
    ensure_positive("t", t)?;
    ensure_positive("epsilon", epsilon)?;
    let one = |part: Option<Component>| -> Result<Option<WindowSpec>> {
        let Some(c) = part else {
            return Ok(None);
        };
        let parts = [c];
        let leak = LeakIntegrand {
            parts: &parts,
            target: *target,
            t,
            lambda,
        };
        let (ca, cb) = leak.source_centers(&c);
        let total = ln_add_exp(leak.ln_left(ca)?, leak.ln_right(ca)?);
        if total < epsilon.ln() {
            return Ok(None);
        }
        grow_until_certified(&leak, WindowSpec::new(ca, cb)?, 0.25 * epsilon).map(Some)
    };
    let exp_part = (m.z > 0.0).then(|| Component {
        ln_coef: m.z.ln(),
        rate: 2.0 * m.lambda,
    });
    let flat_part = (m.y > 0.0).then(|| Component {
        ln_coef: m.y.ln(),
        rate: 0.0,
    });
    Ok((one(exp_part)?, one(flat_part)?))
}

/// One replicate of [`observed_evolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// The initial configuration on the observation window.
    pub initial: PointConfiguration,
    /// The time-`t` configuration on the observation window.
    pub evolved: PointConfiguration,
    /// Realized `(Z_∞, Y_∞)`.
    pub mixing: (f64, f64),
    /// Padded window used for this replicate.
    pub padded_window: WindowSpec,
}

/// Samples `θ`, evolves it to time `t`, and observes both on the plan's
/// observation window.
///
/// Cox mixing is drawn first; when the draw exceeds the envelope the plan
/// was certified for, the padding is recomputed for this replicate.
pub fn observed_evolution(m: &IntensityModel, plan: &SimulationPlan, seed: SeedSpec) -> Result<Observation> {
    plan.validate()?;
    m.validate()?;
    let mut stream = seed.stream();
    let (z, y) = draw_mixing(m, &mut stream);
    let realized = m.resolved(z, y);
    if plan.t == 0.0 {
        let initial = sample_ppp(&realized, &plan.observation_window, &mut stream)?;
        return Ok(Observation {
            evolved: initial.clone(),
            initial,
            mixing: (z, y),
            padded_window: plan.observation_window,
        });
    }
    let envelope = m.upper_envelope();
    let pad = match plan.padded_window {
        Some(p) if z <= envelope.z && y <= envelope.y => p,
        Some(_) => plan_padding(&plan.observation_window, plan.t, plan.lambda, &realized, plan.epsilon)?,
        None => {
            let fit = if z <= envelope.z && y <= envelope.y { &envelope } else { &realized };
            plan_padding(&plan.observation_window, plan.t, plan.lambda, fit, plan.epsilon)?
        }
    };
    let (initial, evolved) = match plan.scheme {
        Scheme::Forward => forward(&realized, plan, &pad, &mut stream)?,
        Scheme::Arrivals => arrivals(&realized, plan, &pad, &mut stream)?,
    };
    Ok(Observation {
        initial,
        evolved,
        mixing: (z, y),
        padded_window: pad,
    })
}

fn forward(
    m: &IntensityModel,
    plan: &SimulationPlan,
    pad: &WindowSpec,
    stream: &mut RandomStream,
) -> Result<(PointConfiguration, PointConfiguration)> {
    let obs = plan.observation_window;
    let start = sample_ppp(m, pad, stream)?;
    let moved = evolve(&start, plan.t, plan.lambda, stream)?;
    let kept = moved.atoms_between(obs.lo, obs.hi).to_vec();
    Ok((start.restrict(obs)?, PointConfiguration::new(kept, obs)?))
}

fn arrivals(
    m: &IntensityModel,
    plan: &SimulationPlan,
    pad: &WindowSpec,
    stream: &mut RandomStream,
) -> Result<(PointConfiguration, PointConfiguration)> {
    let obs = plan.observation_window;
    let (t, lambda) = (plan.t, plan.lambda);
    let s = t.sqrt();
    let initial = sample_ppp(m, &obs, stream)?;
    let mut evolved: Vec<f64> = Vec::new();
    for x in initial.atoms() {
        let y = x + s * stream.standard_normal() - lambda * t;
        if obs.contains(y) {
            evolved.push(y);
        }
    }
    for c in components(m) {
        // arrival intensity C·e^{μt(μ/2−λ)}·e^{−μy} on obs, displacement N(μt, t)
        let ln_coef = c.ln_coef + c.rate * t * (0.5 * c.rate - lambda);
        let coef = ln_coef.exp();
        if !coef.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "arrival intensity overflows (ln coefficient {ln_coef})"
            )));
        }
        let arrival_model = IntensityModel {
            z: coef,
            y: 0.0,
            lambda: 0.5 * c.rate,
            mixing: None,
        };
        let landed = sample_ppp(&arrival_model, &obs, stream)?;
        for &y in landed.atoms() {
            let z = c.rate * t + s * stream.standard_normal();
            let x = y + lambda * t - z;
            if !obs.contains(x) && pad.contains(x) {
                evolved.push(y);
            }
        }
    }
    evolved.sort_by(f64::total_cmp);
    Ok((initial, PointConfiguration::new(evolved, obs)?))
}
