//! Point configurations and Poisson/Cox samplers for the intensity family
//! `(Z e^{−2λx} + Y) dx` on finite windows.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonnegative, ensure_positive, Error, Result};
use crate::randomness::RandomStream;

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lo: f64,
    pub hi: f64,
}

impl WindowSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let w = Self { lo, hi };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("window lo", self.lo)?;
        ensure_finite("window hi", self.hi)?;
        if self.hi <= self.lo {
            return Err(Error::InvalidParameter(format!(
                "window needs lo < hi (got [{}, {}])",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// `[−k, k]`.
    pub fn symmetric(k: f64) -> Result<Self> {
        Self::new(-k, k)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn contains_window(&self, other: &WindowSpec) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }

    pub fn shifted(&self, by: f64) -> WindowSpec {
        WindowSpec {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }

    pub fn widened(&self, by: f64) -> WindowSpec {
        WindowSpec {
            lo: self.lo - by,
            hi: self.hi + by,
        }
    }

    pub fn reflect(&self) -> WindowSpec {
        WindowSpec {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    /// `n` equal bins covering the window.
    pub fn bins(&self, n: usize) -> Vec<WindowSpec> {
        let w = self.width() / n as f64;
        (0..n)
            .map(|i| WindowSpec {
                lo: self.lo + w * i as f64,
                hi: if i + 1 == n { self.hi } else { self.lo + w * (i + 1) as f64 },
            })
            .collect()
    }
}

/// Finite sorted multiset of atom positions observed on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    atoms: Vec<f64>,
    window: WindowSpec,
}

impl PointConfiguration {
    /// Sorts `atoms`; every atom must lie in `window`.
    pub fn new(mut atoms: Vec<f64>, window: WindowSpec) -> Result<Self> {
        window.validate()?;
        if let Some(bad) = atoms.iter().find(|x| !window.contains(**x)) {
            return Err(Error::InvalidParameter(format!(
                "atom {bad} outside window [{}, {}]",
                window.lo, window.hi
            )));
        }
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms, window })
    }

    pub fn empty(window: WindowSpec) -> Self {
        Self {
            atoms: Vec::new(),
            window,
        }
    }

    pub(crate) fn from_sorted_unchecked(atoms: Vec<f64>, window: WindowSpec) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0] <= w[1]));
        Self { atoms, window }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn window(&self) -> WindowSpec {
        self.window
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Number of atoms in `[lo, hi]`, by binary search.
    pub fn count_between(&self, lo: f64, hi: f64) -> u64 {
        if hi < lo {
            return 0;
        }
        let start = self.atoms.partition_point(|&x| x < lo);
        let end = self.atoms.partition_point(|&x| x <= hi);
        (end - start) as u64
    }

    /// Atoms in `[lo, hi]` as a slice.
    pub fn atoms_between(&self, lo: f64, hi: f64) -> &[f64] {
        let start = self.atoms.partition_point(|&x| x < lo);
        let end = self.atoms.partition_point(|&x| x <= hi).max(start);
        &self.atoms[start..end]
    }

    /// Restriction to a subwindow.
    pub fn restrict(&self, w: WindowSpec) -> Result<PointConfiguration> {
        self.check_contains(&w)?;
        Ok(PointConfiguration {
            atoms: self.atoms_between(w.lo, w.hi).to_vec(),
            window: w,
        })
    }

    fn check_contains(&self, w: &WindowSpec) -> Result<()> {
        if !self.window.contains_window(w) {
            return Err(Error::WindowNotContained {
                lo: w.lo,
                hi: w.hi,
                outer_lo: self.window.lo,
                outer_hi: self.window.hi,
            });
        }
        Ok(())
    }

    /// `x ↦ −x`.
    pub fn reflect(&self) -> PointConfiguration {
        PointConfiguration {
            atoms: self.atoms.iter().rev().map(|x| -x).collect(),
            window: self.window.reflect(),
        }
    }

    /// One position per line under a `# window lo hi seed` header.
    pub fn to_text(&self, seed: u64) -> String {
        let mut out = format!(
            "# window {} {} {}\n",
            crate::fmt_real(self.window.lo),
            crate::fmt_real(self.window.hi),
            seed
        );
        for x in &self.atoms {
            out.push_str(&crate::fmt_real(*x));
            out.push('\n');
        }
        out
    }

    /// Inverse of [`to_text`](Self::to_text); returns the configuration and the seed.
    pub fn from_text(text: &str) -> Result<(PointConfiguration, u64)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "#" || fields[1] != "window" {
            return Err(Error::Parse(format!("bad header line: {header:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let window = WindowSpec::new(num(fields[2])?, num(fields[3])?)?;
        let seed = fields[4]
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("seed {:?}: {e}", fields[4])))?;
        let atoms = lines
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {l:?}: {e}", i + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((PointConfiguration::new(atoms, window)?, seed))
    }
}

/// Windowed atom count; the window must lie inside the configuration's window.
pub fn count_in(c: &PointConfiguration, w: &WindowSpec) -> Result<u64> {
    c.check_contains(w)?;
    Ok(c.count_between(w.lo, w.hi))
}

/// Law of the random pair `(Z_∞, Y_∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingLaw {
    /// Finitely many `(z, y)` outcomes with probabilities proportional to `weight`.
    Discrete { outcomes: Vec<MixingOutcome> },
    /// `Z = exp(μ_Z + σ_Z G₁)`, `Y = exp(μ_Y + σ_Y G₂)`; `G₂ = G₁` when
    /// comonotone, independent otherwise. A missing marginal keeps the
    /// model's fixed value.
    LogNormal {
        z: Option<LogNormalParams>,
        y: Option<LogNormalParams>,
        comonotone: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingOutcome {
    pub z: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

/// `Φ^{-1}(0.999)`.
const Z_999: f64 = 3.090_232_306_167_813_5;

impl MixingLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingLaw::Discrete { outcomes } => {
                if outcomes.is_empty() {
                    return Err(Error::InvalidParameter("discrete mixing law needs outcomes".into()));
                }
                for o in outcomes {
                    ensure_nonnegative("mixing z", o.z)?;
                    ensure_nonnegative("mixing y", o.y)?;
                    ensure_nonnegative("mixing weight", o.weight)?;
                }
                if outcomes.iter().map(|o| o.weight).sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidParameter("mixing weights sum to zero".into()));
                }
                Ok(())
            }
            MixingLaw::LogNormal { z, y, .. } => {
                for p in [z, y].into_iter().flatten() {
                    ensure_finite("log-normal mu", p.mu)?;
                    ensure_nonnegative("log-normal sigma", p.sigma)?;
                }
                Ok(())
            }
        }
    }

    fn draw(&self, fixed_z: f64, fixed_y: f64, stream: &mut RandomStream) -> (f64, f64) {
        match self {
            MixingLaw::Discrete { outcomes } => {
                let total: f64 = outcomes.iter().map(|o| o.weight).sum();
                let mut u = stream.uniform() * total;
                for o in outcomes {
                    if u < o.weight {
                        return (o.z, o.y);
                    }
                    u -= o.weight;
                }
                let last = outcomes.iter().rev().find(|o| o.weight > 0.0).unwrap_or(&outcomes[0]);
                (last.z, last.y)
            }
            MixingLaw::LogNormal { z, y, comonotone } => {
                let g1 = stream.standard_normal();
                let g2 = if *comonotone { g1 } else { stream.standard_normal() };
                let zv = z.map_or(fixed_z, |p| (p.mu + p.sigma * g1).exp());
                let yv = y.map_or(fixed_y, |p| (p.mu + p.sigma * g2).exp());
                (zv, yv)
            }
        }
    }

    /// Marginal 0.999-quantiles of `(Z_∞, Y_∞)`.
    pub fn upper_quantiles(&self, fixed_z: f64, fixed_y: f64) -> (f64, f64) {
        match self {
            MixingLaw::Discrete { outcomes } => {
                let total: f64 = outcomes.iter().map(|o| o.weight).sum();
                let q = |key: fn(&MixingOutcome) -> f64| {
                    let mut vals: Vec<(f64, f64)> =
                        outcomes.iter().filter(|o| o.weight > 0.0).map(|o| (key(o), o.weight)).collect();
                    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut acc = 0.0;
                    for (v, w) in &vals {
                        acc += w / total;
                        if acc >= 0.999 {
                            return *v;
                        }
                    }
                    vals.last().map_or(0.0, |p| p.0)
                };
                (q(|o| o.z), q(|o| o.y))
            }
            MixingLaw::LogNormal { z, y, .. } => (
                z.map_or(fixed_z, |p| (p.mu + p.sigma * Z_999).exp()),
                y.map_or(fixed_y, |p| (p.mu + p.sigma * Z_999).exp()),
            ),
        }
    }

    /// Outcomes with probabilities, when the law is discrete.
    pub fn discrete_outcomes(&self) -> Option<Vec<(f64, f64, f64)>> {
        match self {
            MixingLaw::Discrete { outcomes } => {
                let total: f64 = outcomes.iter().map(|o| o.weight).sum();
                Some(outcomes.iter().map(|o| (o.z, o.y, o.weight / total)).collect())
            }
            MixingLaw::LogNormal { .. } => None,
        }
    }
}

/// Parameters of the density `Z e^{−2λx} + Y`, with an optional law for
/// random `(Z_∞, Y_∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingLaw>,
}

impl IntensityModel {
    pub fn new(z: f64, y: f64, lambda: f64) -> Result<Self> {
        let m = Self {
            z,
            y,
            lambda,
            mixing: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_mixing(mut self, mixing: MixingLaw) -> Result<Self> {
        mixing.validate()?;
        self.mixing = Some(mixing);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonnegative("Z", self.z)?;
        ensure_nonnegative("Y", self.y)?;
        ensure_finite("lambda", self.lambda)?;
        if let Some(m) = &self.mixing {
            m.validate()?;
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.mixing.is_none()
    }

    /// Model with `(Z, Y)` fixed and mixing dropped.
    pub fn resolved(&self, z: f64, y: f64) -> IntensityModel {
        IntensityModel {
            z,
            y,
            lambda: self.lambda,
            mixing: None,
        }
    }

    /// Only the exponential part.
    pub fn exponential_part(&self) -> IntensityModel {
        self.resolved(self.z, 0.0)
    }

    /// Only the flat part.
    pub fn flat_part(&self) -> IntensityModel {
        self.resolved(0.0, self.y)
    }

    /// Deterministic model at the 0.999 mixing quantiles (itself when deterministic).
    pub fn upper_envelope(&self) -> IntensityModel {
        match &self.mixing {
            None => self.clone(),
            Some(m) => {
                let (z, y) = m.upper_quantiles(self.z, self.y);
                self.resolved(z, y)
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.z * (-2.0 * self.lambda * x).exp() + self.y
    }

    /// `ln` of the exponential component's density at `x`.
    pub fn ln_exponential_density(&self, x: f64) -> f64 {
        self.z.ln() - 2.0 * self.lambda * x
    }

    /// `x ↦ −x`: `Z e^{−2λx}` becomes `Z e^{2λx}`.
    pub fn reflect(&self) -> IntensityModel {
        IntensityModel {
            lambda: -self.lambda,
            ..self.clone()
        }
    }

    fn exponential_mass(&self, w: &WindowSpec) -> f64 {
        if self.z == 0.0 {
            return 0.0;
        }
        let c = 2.0 * self.lambda;
        if c == 0.0 {
            return self.z * w.width();
        }
        // Z·e^{−c·lo}·(1 − e^{−c·width})/c
        self.z * (-c * w.lo).exp() * (-(-c * w.width()).exp_m1()) / c
    }
}

/// `∫_w (Z e^{−2λx} + Y) dx` in closed form.
pub fn intensity_mass(m: &IntensityModel, w: &WindowSpec) -> f64 {
    m.exponential_mass(w) + m.y * w.width()
}

/// Draws one position from the `e^{−cx}` law truncated to `w`.
fn sample_truncated_exponential(c: f64, w: &WindowSpec, u: f64) -> f64 {
    if c == 0.0 {
        return w.lo + u * w.width();
    }
    let x = w.lo - (u * (-c * w.width()).exp_m1()).ln_1p() / c;
    x.clamp(w.lo, w.hi)
}

/// Largest expected atom count [`sample_ppp`] will draw.
pub const MAX_EXPECTED_ATOMS: f64 = 1e9;

/// Poisson process with deterministic intensity `Z e^{−2λx} + Y` on `w`.
///
/// Each atom consumes exactly two uniforms: one picks the component in
/// proportion to its mass, one inverts that component's CDF.
pub fn sample_ppp(m: &IntensityModel, w: &WindowSpec, stream: &mut RandomStream) -> Result<PointConfiguration> {
    w.validate()?;
    m.validate()?;
    let exp_mass = m.exponential_mass(w);
    let flat_mass = m.y * w.width();
    let total = exp_mass + flat_mass;
    if !total.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "intensity mass on [{}, {}] is not finite",
            w.lo, w.hi
        )));
    }
    if total > MAX_EXPECTED_ATOMS {
        return Err(Error::InvalidParameter(format!(
            "intensity mass {total:e} on [{}, {}] exceeds the sampling limit {MAX_EXPECTED_ATOMS:e}",
            w.lo, w.hi
        )));
    }
    let n = stream.poisson(total)?;
    let p_exp = if total > 0.0 { exp_mass / total } else { 0.0 };
    let c = 2.0 * m.lambda;
    let mut atoms = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let pick = stream.uniform();
        let u = stream.uniform();
        let x = if pick < p_exp {
            sample_truncated_exponential(c, w, u)
        } else {
            w.lo + u * w.width()
        };
        atoms.push(x.clamp(w.lo, w.hi));
    }
    atoms.sort_by(f64::total_cmp);
    Ok(PointConfiguration::from_sorted_unchecked(atoms, *w))
}

/// Two-stage Cox sample: draw `(Z_∞, Y_∞)` from the mixing law (or take the
/// fixed values), then a Poisson process given them.
pub fn sample_cox(
    m: &IntensityModel,
    w: &WindowSpec,
    stream: &mut RandomStream,
) -> Result<(PointConfiguration, f64, f64)> {
    let (z, y) = draw_mixing(m, stream);
    let c = sample_ppp(&m.resolved(z, y), w, stream)?;
    Ok((c, z, y))
}

/// Realized `(Z_∞, Y_∞)`.
pub fn draw_mixing(m: &IntensityModel, stream: &mut RandomStream) -> (f64, f64) {
    match &m.mixing {
        None => (m.z, m.y),
        Some(law) => law.draw(m.z, m.y, stream),
    }
}

/// Checks `w` is a usable window and the model's mass over it is finite.
pub fn check_finite_mass(m: &IntensityModel, w: &WindowSpec) -> Result<f64> {
    let mass = intensity_mass(m, w);
    ensure_positive("window width", w.width())?;
    if mass.is_finite() {
        Ok(mass)
    } else {
        Err(Error::InvalidParameter(format!(
            "intensity mass on [{}, {}] overflows",
            w.lo, w.hi
        )))
    }
}
