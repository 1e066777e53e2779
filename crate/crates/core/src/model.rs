//! Signal model: sampling schemes, damped 2D exponential components, synthesis
//! and noise.
//!
//! A component contributes `g * exp((i*w1 - b1) * t1) * exp((i*w2 - b2) * t2)`
//! at every sampling point. Times are in sample units (`dt = 1` by default), so
//! frequencies are in rad/sample and dampings in 1/sample.

use std::collections::HashSet;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Frequency range the Monte-Carlo scenes are drawn from (rad/sample).
pub const DEFAULT_FREQ_RANGE: (f64, f64) = (0.1, 0.97);
/// Damping range the Monte-Carlo scenes are drawn from (1/sample).
pub const DEFAULT_DAMP_RANGE: (f64, f64) = (0.019, 0.035);
/// Noise FWHM relative to the strongest band amplitude.
pub const DEFAULT_NOISE_FWHM_RATIO: f64 = 0.01;

/// `FWHM = 2 sqrt(2 ln 2) sigma` for a Gaussian density.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// The single generator behind every random draw in the crate.
///
/// ChaCha8 seeded through `SeedableRng::seed_from_u64`, which is stable across
/// platforms and releases of `rand_chacha`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Maps an angular frequency onto its alias in `[-pi/dt, pi/dt)`; samples
/// spaced by `dt` cannot tell frequencies apart modulo `2 pi / dt`.
pub fn wrap_frequency(omega: f64, dt: f64) -> f64 {
    let period = 2.0 * std::f64::consts::PI / dt;
    let w = (omega + period / 2.0).rem_euclid(period) - period / 2.0;
    if w >= period / 2.0 {
        w - period
    } else {
        w
    }
}

/// `exp((i*omega - beta) * t)`
#[inline]
pub fn damped_exp(omega: f64, beta: f64, t: f64) -> Complex64 {
    let mag = (-beta * t).exp();
    let (s, c) = (omega * t).sin_cos();
    Complex64::new(mag * c, mag * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPoint {
    pub i1: usize,
    pub i2: usize,
    pub t1: f64,
    pub t2: f64,
}

/// A set of distinct 2D sample positions inside an enclosing uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingScheme {
    points: Vec<SamplingPoint>,
    grid_shape: (usize, usize),
    dt: (f64, f64),
}

impl SamplingScheme {
    pub fn new(
        points: Vec<SamplingPoint>,
        grid_shape: (usize, usize),
        dt: (f64, f64),
    ) -> Result<Self> {
        if grid_shape.0 == 0 || grid_shape.1 == 0 {
            return Err(Error::invalid("grid dimensions must be at least 1"));
        }
        if !(dt.0 > 0.0 && dt.1 > 0.0) {
            return Err(Error::invalid("grid spacings must be positive"));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.i1 >= grid_shape.0 || p.i2 >= grid_shape.1 {
                return Err(Error::invalid(format!(
                    "point ({}, {}) lies outside the {}x{} grid",
                    p.i1, p.i2, grid_shape.0, grid_shape.1
                )));
            }
            if !seen.insert((p.i1, p.i2)) {
                return Err(Error::invalid(format!(
                    "duplicate sampling point ({}, {})",
                    p.i1, p.i2
                )));
            }
        }
        Ok(SamplingScheme {
            points,
            grid_shape,
            dt,
        })
    }

    pub fn points(&self) -> &[SamplingPoint] {
        &self.points
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid_shape
    }

    pub fn dt(&self) -> (f64, f64) {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when every point sits at `(i1*dt1, i2*dt2)`.
    pub fn is_grid_aligned(&self) -> bool {
        self.points.iter().all(|p| {
            p.t1 == p.i1 as f64 * self.dt.0 && p.t2 == p.i2 as f64 * self.dt.1
        })
    }
}

/// Row-major `n1 x n2` grid with `t = (i1*dt1, i2*dt2)`.
pub fn make_uniform_grid(n1: usize, n2: usize, dt1: f64, dt2: f64) -> Result<SamplingScheme> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("grid dimensions must be at least 1"));
    }
    let points = (0..n1)
        .flat_map(|i1| {
            (0..n2).map(move |i2| SamplingPoint {
                i1,
                i2,
                t1: i1 as f64 * dt1,
                t2: i2 as f64 * dt2,
            })
        })
        .collect();
    SamplingScheme::new(points, (n1, n2), (dt1, dt2))
}

/// Draws `count` distinct points uniformly without replacement. With a corner
/// `(c1, c2)` only points with `i1 < c1` and `i2 < c2` are eligible. The
/// selected points keep the parent's ordering.
pub fn subsample_random(
    grid: &SamplingScheme,
    count: usize,
    corner: Option<(usize, usize)>,
    seed: u64,
) -> Result<SamplingScheme> {
    let eligible: Vec<usize> = match corner {
        Some((c1, c2)) => {
            let (n1, n2) = grid.grid_shape;
            if c1 > n1 || c2 > n2 {
                return Err(Error::invalid(format!(
                    "corner {c1}x{c2} exceeds the {n1}x{n2} grid"
                )));
            }
            grid.points
                .iter()
                .enumerate()
                .filter(|(_, p)| p.i1 < c1 && p.i2 < c2)
                .map(|(i, _)| i)
                .collect()
        }
        None => (0..grid.len()).collect(),
    };
    if count > eligible.len() {
        return Err(Error::invalid(format!(
            "cannot draw {count} points from {} eligible",
            eligible.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|j| eligible[j])
        .collect();
    picked.sort_unstable();
    let points = picked.into_iter().map(|i| grid.points[i]).collect();
    Ok(SamplingScheme {
        points,
        grid_shape: grid.grid_shape,
        dt: grid.dt,
    })
}

/// One 2D spectral band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub omega1: f64,
    pub omega2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub amplitude: Complex64,
}

impl Component {
    pub fn new(omega1: f64, omega2: f64, beta1: f64, beta2: f64, amplitude: Complex64) -> Self {
        Component {
            omega1,
            omega2,
            beta1,
            beta2,
            amplitude,
        }
    }

    /// Value of the unit-amplitude mode at `(t1, t2)`.
    #[inline]
    pub fn mode_at(&self, t1: f64, t2: f64) -> Complex64 {
        damped_exp(self.omega1, self.beta1, t1) * damped_exp(self.omega2, self.beta2, t2)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComponentSet(Vec<Component>);

impl ComponentSet {
    pub fn new(components: Vec<Component>) -> Self {
        ComponentSet(components)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Component> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<Component> {
        self.0
    }

    /// Largest `|g_k|`, or 0 for an empty set.
    pub fn max_amplitude(&self) -> f64 {
        self.0.iter().map(|c| c.amplitude.norm()).fold(0.0, f64::max)
    }
}

impl From<Vec<Component>> for ComponentSet {
    fn from(v: Vec<Component>) -> Self {
        ComponentSet(v)
    }
}

impl<'a> IntoIterator for &'a ComponentSet {
    type Item = &'a Component;
    type IntoIter = std::slice::Iter<'a, Component>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Complex measurements attached to a sampling scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub scheme: SamplingScheme,
    pub values: Vec<Complex64>,
    /// Per-quadrature standard deviation of the noise that was added.
    pub noise_sigma: f64,
}

impl SampledSignal {
    pub fn new(scheme: SamplingScheme, values: Vec<Complex64>) -> Result<Self> {
        if scheme.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} values for {} sampling points",
                values.len(),
                scheme.len()
            )));
        }
        Ok(SampledSignal {
            scheme,
            values,
            noise_sigma: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Keeps only the points of `subset`, which must all be present here.
    pub fn restrict(&self, subset: &SamplingScheme) -> Result<SampledSignal> {
        let lookup: std::collections::HashMap<(usize, usize), usize> = self
            .scheme
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.i1, p.i2), i))
            .collect();
        let values = subset
            .points()
            .iter()
            .map(|p| {
                lookup.get(&(p.i1, p.i2)).map(|&i| self.values[i]).ok_or_else(|| {
                    Error::invalid(format!("point ({}, {}) not in signal", p.i1, p.i2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampledSignal {
            scheme: subset.clone(),
            values,
            noise_sigma: self.noise_sigma,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Noise FWHM divided by the reference amplitude.
    pub fwhm_ratio: f64,
    pub seed: u64,
}

/// Noiseless evaluation of the component sum at every point of `scheme`.
pub fn synthesize(components: &ComponentSet, scheme: &SamplingScheme) -> SampledSignal {
    let values = scheme
        .points()
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|c| c.amplitude * c.mode_at(p.t1, p.t2))
                .sum()
        })
        .collect();
    SampledSignal {
        scheme: scheme.clone(),
        values,
        noise_sigma: 0.0,
    }
}

/// Adds independent Gaussian noise to both quadratures with
/// `sigma = fwhm_ratio * max_amp / (2 sqrt(2 ln 2))`.
pub fn add_noise(signal: &SampledSignal, spec: &NoiseSpec, max_amp: f64) -> Result<SampledSignal> {
    if !(spec.fwhm_ratio >= 0.0) {
        return Err(Error::invalid("noise fwhm_ratio must be non-negative"));
    }
    if spec.fwhm_ratio == 0.0 {
        return Ok(signal.clone());
    }
    if !(max_amp > 0.0) {
        return Err(Error::invalid("reference amplitude must be positive"));
    }
    let sigma = fwhm_to_sigma(spec.fwhm_ratio * max_amp);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng_from_seed(spec.seed);
    let values = signal
        .values
        .iter()
        .map(|v| {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            v + Complex64::new(re, im)
        })
        .collect();
    Ok(SampledSignal {
        scheme: signal.scheme.clone(),
        values,
        noise_sigma: (signal.noise_sigma.powi(2) + sigma * sigma).sqrt(),
    })
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} range [{lo}, {hi}] is not valid")))
    }
}

/// `k` unit-amplitude components with every frequency and damping drawn
/// i.i.d. uniformly. Draw order per component: `w1, w2, b1, b2`.
pub fn draw_random_scene(
    k: usize,
    freq_range: (f64, f64),
    damp_range: (f64, f64),
    seed: u64,
) -> Result<ComponentSet> {
    if k == 0 {
        return Err(Error::invalid("scene needs at least one component"));
    }
    check_range("frequency", freq_range)?;
    check_range("damping", damp_range)?;
    if damp_range.0 < 0.0 {
        return Err(Error::invalid("dampings must be non-negative"));
    }
    let mut rng = rng_from_seed(seed);
    let comps = (0..k)
        .map(|_| {
            let omega1 = rng.random_range(freq_range.0..freq_range.1);
            let omega2 = rng.random_range(freq_range.0..freq_range.1);
            let beta1 = rng.random_range(damp_range.0..damp_range.1);
            let beta2 = rng.random_range(damp_range.0..damp_range.1);
            Component::new(omega1, omega2, beta1, beta2, Complex64::new(1.0, 0.0))
        })
        .collect();
    Ok(ComponentSet(comps))
}
