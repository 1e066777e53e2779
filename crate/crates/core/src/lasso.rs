//! l1-penalized fit over an undamped frequency dictionary and the two-stage
//! LASSO estimator built on it.
//!
//! The objective is `||x - A g||_2^2 + lambda * sum_m |g_m|` with unit-norm
//! atoms, so a coordinate update is `g_m = soft(<a_m, r_m>, lambda / 2)` and
//! the optimality conditions read
//!
//! * inactive atoms: `|<a_m, r>| <= lambda / 2`
//! * active atoms:   `<a_m, r> = (lambda / 2) * g_m / |g_m|`
//!
//! Data are scaled to unit maximum modulus before solving; `lambda` refers to
//! that scaled problem and reported amplitudes are mapped back to data units
//! on the raw (unnormalized) atoms.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dictionary::{DictionaryGrid, FrequencyDictionary};
use crate::error::{Error, Result};
use crate::fourier::{climb_to_peak, fft2_padded, fwhm, local_maxima, SpectrumGrid};
use crate::linalg::{inner, least_squares, norm_sqr};
use crate::model::{
    damped_exp, make_uniform_grid, Component, ComponentSet, SampledSignal,
};

pub const DEFAULT_LAMBDA: f64 = 0.4;
/// Zero-padded FFT length per axis used for half-maximum widths.
pub const DEFAULT_PAD: usize = 1024;

/// The solver keeps sweeping until the full-dictionary KKT violation is at
/// most this fraction of lambda (or the sweep budget runs out).
const KKT_TARGET: f64 = 1e-7;
const FRESH_BASE: usize = 16;
const NEWTON_STEPS: usize = 50;
const NEWTON_GRAD_TOL: f64 = 1e-12;
const LINE_SEARCH_STEPS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub lambda: f64,
    /// Budget of coordinate-descent sweeps.
    pub max_iterations: usize,
    /// Stop a run of sweeps once the relative objective decrease drops below this.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda: DEFAULT_LAMBDA,
            max_iterations: 20_000,
            tolerance: 1e-12,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Output of [`coordinate_descent`], in unit-atom coordinates.
#[derive(Debug, Clone)]
pub struct DescentResult {
    /// One coefficient per dictionary atom.
    pub coefficients: Vec<Complex64>,
    pub residual: Vec<Complex64>,
    pub objective: f64,
    pub sweeps: usize,
    pub kkt_violation: f64,
    /// Objective after every sweep, starting with the all-zero point.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SparseSolution {
    /// Amplitude per atom, in data units on the raw undamped atom.
    pub amplitudes: Vec<Complex64>,
    pub grid: DictionaryGrid,
    /// Objective of the scaled problem at the returned point.
    pub objective: f64,
    pub iterations: usize,
    /// Largest KKT violation of the scaled problem.
    pub kkt_violation: f64,
    /// Factor the data were divided by before solving.
    pub data_scale: f64,
    pub objective_history: Vec<f64>,
}

#[inline]
fn soft_threshold(z: Complex64, tau: f64) -> Complex64 {
    let mag = z.norm();
    if mag <= tau {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((mag - tau) / mag)
    }
}

fn objective(residual: &[Complex64], coefficients: &[Complex64], active: &[usize], lambda: f64) -> f64 {
    norm_sqr(residual) + lambda * active.iter().map(|&m| coefficients[m].norm()).sum::<f64>()
}

/// Largest violation of the optimality conditions, given the correlations
/// `<a_m, r>` of every atom with the residual.
pub fn kkt_violation(correlations: &[Complex64], coefficients: &[Complex64], lambda: f64) -> f64 {
    let half = lambda / 2.0;
    correlations
        .iter()
        .zip(coefficients)
        .map(|(&c, &g)| {
            if g == Complex64::new(0.0, 0.0) {
                (c.norm() - half).max(0.0)
            } else {
                (c - g * (half / g.norm())).norm()
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent with complex soft-thresholding on a growing
/// working set.
///
/// Each round correlates the residual with the whole dictionary, adds every
/// atom that violates `|<a_m, r>| <= lambda / 2` to the working set, then
/// sweeps the working set cyclically (ascending atom index), each sweep
/// followed by damped Newton steps on the current support, until the relative
/// objective decrease falls below `tolerance`. Rounds repeat until the
/// dictionary-wide KKT check passes or `max_sweeps` is spent.
pub fn coordinate_descent(
    dict: &FrequencyDictionary,
    data: &[Complex64],
    lambda: f64,
    max_sweeps: usize,
    tolerance: f64,
) -> DescentResult {
    let half = lambda / 2.0;
    let zero = Complex64::new(0.0, 0.0);
    let mut g = vec![zero; dict.len()];
    let mut r = data.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut atoms: Vec<Vec<Complex64>> = Vec::new();
    let mut history = vec![norm_sqr(&r)];
    let mut sweeps = 0;
    let mut gram: Vec<Complex64> = Vec::new();
    let mut gram_atoms: Vec<usize> = Vec::new();

    let kkt = loop {
        let corr = dict.correlate(&r);
        let violation = kkt_violation(&corr, &g, lambda);
        let fresh = pick_violators(&corr, &g, &active, half, dict.shape(), FRESH_BASE + active.len());
        if sweeps >= max_sweeps || (fresh.is_empty() && violation <= KKT_TARGET * lambda) {
            break violation;
        }
        for m in fresh {
            let pos = active.binary_search(&m).unwrap_err();
            active.insert(pos, m);
            atoms.insert(pos, dict.atom_values(m));
        }

        gram = extend_gram(&gram_atoms, &gram, &active, &atoms);
        gram_atoms.clone_from(&active);
        let mut prev = *history.last().unwrap();
        while sweeps < max_sweeps {
            for (&m, a) in active.iter().zip(&atoms) {
                let z = inner(a, &r) + g[m];
                let updated = soft_threshold(z, half);
                let delta = updated - g[m];
                if delta != zero {
                    for (rv, av) in r.iter_mut().zip(a) {
                        *rv -= av * delta;
                    }
                    g[m] = updated;
                }
            }
            sweeps += 1;
            let obj = objective(&r, &g, &active, lambda);
            let obj = newton_polish(&active, &atoms, &gram, &mut g, &mut r, lambda, obj);

            history.push(obj);
            let decrease = (prev - obj) / prev.max(f64::MIN_POSITIVE);
            prev = obj;
            if decrease < tolerance {
                break;
            }
            // the working set only needs to be solved about as well as the
            // dictionary-wide conditions currently hold
            let inner_target = (0.1 * violation).max(0.1 * KKT_TARGET * lambda);
            let ws_corr: Vec<Complex64> = atoms.iter().map(|a| inner(a, &r)).collect();
            let ws_g: Vec<Complex64> = active.iter().map(|&m| g[m]).collect();
            if kkt_violation(&ws_corr, &ws_g, lambda) <= inner_target {
                break;
            }
        }

        // forget atoms that settled at zero so the working set stays small
        let mut keep = 0;
        for i in 0..active.len() {
            if g[active[i]] != zero {
                active.swap(keep, i);
                atoms.swap(keep, i);
                keep += 1;
            }
        }
        active.truncate(keep);
        atoms.truncate(keep);
    };

    DescentResult {
        objective: objective(&r, &g, &active, lambda),
        coefficients: g,
        residual: r,
        sweeps,
        kkt_violation: kkt,
        history,
    }
}

/// Gram matrix of the sorted working set `active`, reusing the entries of
/// `prev` (built for the sorted set `prev_active`) where both atoms carry over.
fn extend_gram(prev_active: &[usize], prev: &[Complex64], active: &[usize], atoms: &[Vec<Complex64>]) -> Vec<Complex64> {
    let (pw, w) = (prev_active.len(), active.len());
    let old: Vec<Option<usize>> = active.iter().map(|m| prev_active.binary_search(m).ok()).collect();
    let mut gram = vec![Complex64::new(0.0, 0.0); w * w];
    for i in 0..w {
        for j in i..w {
            let v = match (old[i], old[j]) {
                (Some(a), Some(b)) => prev[a * pw + b],
                _ => inner(&atoms[i], &atoms[j]),
            };
            gram[i * w + j] = v;
            gram[j * w + i] = v.conj();
        }
    }
    gram
}

/// Atoms outside the working set whose correlation exceeds `half`, at most
/// `limit` of them. Local maxima of the correlation magnitude come first,
/// each followed by its violating neighbours, so that every cluster of
/// violators is represented before any one of them fills the quota.
fn pick_violators(
    corr: &[Complex64],
    g: &[Complex64],
    active: &[usize],
    half: f64,
    shape: (usize, usize),
    limit: usize,
) -> Vec<usize> {
    let (p1, p2) = shape;
    let zero = Complex64::new(0.0, 0.0);
    let eligible = |m: usize| g[m] == zero && corr[m].norm() > half && active.binary_search(&m).is_err();
    let mag: Vec<f64> = corr.iter().map(|c| c.norm()).collect();
    let mut out = Vec::new();
    let mut taken = vec![false; corr.len()];
    for (i, j) in local_maxima(&mag, p1, p2) {
        if mag[i * p2 + j] <= half {
            break;
        }
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a >= p1 as i64 || b >= p2 as i64 {
                    continue;
                }
                let m = a as usize * p2 + b as usize;
                if !taken[m] && eligible(m) {
                    taken[m] = true;
                    out.push(m);
                }
            }
        }
        if out.len() >= limit {
            break;
        }
    }
    if out.len() < limit {
        let mut rest: Vec<usize> = (0..corr.len()).filter(|&m| !taken[m] && eligible(m)).collect();
        rest.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
        rest.truncate(limit - out.len());
        out.extend(rest);
    }
    out.truncate(limit);
    out.sort_unstable();
    out
}

/// Newton iterations on the nonzero coefficients of the working set, where
/// the objective is smooth. A coefficient whose step would carry it across
/// the origin is set to zero instead. Steps are backtracked and only taken
/// when they lower the objective; returns the objective at the final point.
fn newton_polish(
    active: &[usize],
    atoms: &[Vec<Complex64>],
    gram: &[Complex64],
    g: &mut [Complex64],
    r: &mut Vec<Complex64>,
    lambda: f64,
    mut obj: f64,
) -> f64 {
    let w = active.len();
    let zero = Complex64::new(0.0, 0.0);
    for _ in 0..NEWTON_STEPS {
        let support: Vec<usize> = (0..w).filter(|&i| g[active[i]] != zero).collect();
        let s = support.len();
        if s == 0 {
            break;
        }
        let dim = 2 * s;
        let mut corr = Vec::with_capacity(s);
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for (j, &i) in support.iter().enumerate() {
            let gj = g[active[i]];
            let mag = gj.norm();
            let c = inner(&atoms[i], r);
            corr.push(c);
            let u = gj / mag;
            grad[2 * j] = -2.0 * c.re + lambda * u.re;
            grad[2 * j + 1] = -2.0 * c.im + lambda * u.im;
            for (k, &l) in support.iter().enumerate() {
                let m = gram[i * w + l] * 2.0;
                hess[(2 * j, 2 * k)] = m.re;
                hess[(2 * j, 2 * k + 1)] = -m.im;
                hess[(2 * j + 1, 2 * k)] = m.im;
                hess[(2 * j + 1, 2 * k + 1)] = m.re;
            }
            let curv = lambda / mag;
            hess[(2 * j, 2 * j)] += curv * (1.0 - u.re * u.re);
            hess[(2 * j, 2 * j + 1)] -= curv * u.re * u.im;
            hess[(2 * j + 1, 2 * j)] -= curv * u.re * u.im;
            hess[(2 * j + 1, 2 * j + 1)] += curv * (1.0 - u.im * u.im);
        }
        if grad.amax() <= NEWTON_GRAD_TOL * lambda {
            break;
        }
        let ridge = hess.diagonal().max() * 1e-14;
        for d in 0..dim {
            hess[(d, d)] += ridge;
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&(-grad));

        let pen: f64 = obj_penalty(g, active);
        let fit = obj - lambda * pen;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..LINE_SEARCH_STEPS {
            let mut delta = vec![zero; s];
            let mut cand = vec![zero; s];
            let mut pen_change = 0.0;
            for (j, &i) in support.iter().enumerate() {
                let old = g[active[i]];
                let mut v = old + Complex64::new(step[2 * j], step[2 * j + 1]) * t;
                if (old.conj() * v).re <= 0.0 {
                    v = zero;
                }
                delta[j] = v - old;
                cand[j] = v;
                pen_change += v.norm() - old.norm();
            }
            // ||r - A d||^2 through the Gram matrix, checked exactly below
            let mut quad = fit;
            for (j, &i) in support.iter().enumerate() {
                quad -= 2.0 * (delta[j].conj() * corr[j]).re;
                let mut row = zero;
                for (k, &l) in support.iter().enumerate() {
                    row += gram[i * w + l] * delta[k];
                }
                quad += (delta[j].conj() * row).re;
            }
            if quad + lambda * (pen + pen_change) < obj {
                let mut rc = r.clone();
                for (j, &i) in support.iter().enumerate() {
                    if delta[j] != zero {
                        for (rv, av) in rc.iter_mut().zip(&atoms[i]) {
                            *rv -= av * delta[j];
                        }
                    }
                }
                let exact = norm_sqr(&rc) + lambda * (pen + pen_change);
                if exact < obj {
                    for (&i, v) in support.iter().zip(cand) {
                        g[active[i]] = v;
                    }
                    *r = rc;
                    obj = exact;
                    accepted = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    obj
}

fn obj_penalty(g: &[Complex64], active: &[usize]) -> f64 {
    active.iter().map(|&m| g[m].norm()).sum()
}

/// Fits the penalized problem on the undamped `grid` at the signal's sampling
/// points.
pub fn solve(signal: &SampledSignal, grid: &DictionaryGrid, opts: &SolverOptions) -> Result<SparseSolution> {
    opts.validate()?;
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    if !grid.is_undamped() {
        return Err(Error::invalid(
            "the LASSO dictionary must be undamped (single damping value 0)",
        ));
    }
    let dict = FrequencyDictionary::new(grid, &signal.scheme)?;
    let scale = signal.max_modulus();
    if scale == 0.0 {
        return Ok(SparseSolution {
            amplitudes: vec![Complex64::new(0.0, 0.0); dict.len()],
            grid: grid.clone(),
            objective: 0.0,
            iterations: 0,
            kkt_violation: 0.0,
            data_scale: 1.0,
            objective_history: vec![0.0],
        });
    }
    let data: Vec<Complex64> = signal.values.iter().map(|v| v / scale).collect();
    let res = coordinate_descent(&dict, &data, opts.lambda, opts.max_iterations, opts.tolerance);
    let to_data = scale / dict.atom_scale();
    Ok(SparseSolution {
        amplitudes: res.coefficients.iter().map(|g| g * to_data).collect(),
        grid: grid.clone(),
        objective: res.objective,
        iterations: res.sweeps,
        kkt_violation: res.kkt_violation,
        data_scale: scale,
        objective_history: res.history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedComponent {
    pub omega1: f64,
    pub omega2: f64,
    pub amplitude: Complex64,
}

/// The `k` strongest 2D local maxima of `|g|` over the frequency grid,
/// strongest first; equal magnitudes go to the lower `(omega1, omega2)`.
pub fn select_components(solution: &SparseSolution, k: usize) -> Result<Vec<SelectedComponent>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let p2 = solution.grid.p2();
    let maxima = sparse_maxima(&solution.amplitudes, p2, 1);
    if maxima.len() < k {
        return Err(Error::InsufficientPeaks {
            wanted: k,
            found: maxima.len(),
            deficit: k - maxima.len(),
        });
    }
    Ok(maxima
        .into_iter()
        .take(k)
        .map(|(i, j)| SelectedComponent {
            omega1: solution.grid.omega1_vals[i],
            omega2: solution.grid.omega2_vals[j],
            amplitude: solution.amplitudes[i * p2 + j],
        })
        .collect())
}

/// Nonzero cells that are at least as large as every cell within `radius`
/// (Chebyshev distance), with equal cells earlier in row-major order winning.
/// Sorted by descending magnitude, ties by ascending index.
fn sparse_maxima(values: &[Complex64], p2: usize, radius: usize) -> Vec<(usize, usize)> {
    let mut nz: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 0.0)
        .map(|(m, v)| (m, v.norm()))
        .collect();
    nz.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let near = |a: usize, b: usize| {
        let (i, j) = (a / p2, a % p2);
        let (u, v) = (b / p2, b % p2);
        i.abs_diff(u) <= radius && j.abs_diff(v) <= radius
    };
    nz.iter()
        .enumerate()
        .filter(|&(idx, &(m, _))| !nz[..idx].iter().any(|&(o, _)| near(o, m)))
        .map(|(_, &(m, _))| (m / p2, m % p2))
        .collect()
}

fn undamped_column(signal: &SampledSignal, (w1, w2): (f64, f64)) -> Vec<Complex64> {
    signal
        .scheme
        .points()
        .iter()
        .map(|p| damped_exp(w1, 0.0, p.t1) * damped_exp(w2, 0.0, p.t2))
        .collect()
}

/// Least-squares amplitudes of the undamped atoms at `selected` frequencies.
pub fn debias_amplitudes(signal: &SampledSignal, selected: &[(f64, f64)]) -> Result<Vec<Complex64>> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let columns: Vec<Vec<Complex64>> = selected.iter().map(|&f| undamped_column(signal, f)).collect();
    least_squares(&columns, &signal.values)
}

/// Synthesizes the selected undamped components on the full uniform grid.
pub fn reconstruct_uniform(
    selected: &[((f64, f64), Complex64)],
    grid_shape: (usize, usize),
    dt: (f64, f64),
) -> Result<SampledSignal> {
    let grid = make_uniform_grid(grid_shape.0, grid_shape.1, dt.0, dt.1)?;
    let comps = ComponentSet::new(
        selected
            .iter()
            .map(|&((w1, w2), g)| Component::new(w1, w2, 0.0, 0.0, g))
            .collect(),
    );
    Ok(crate::model::synthesize(&comps, &grid))
}

/// Dampings from half-power widths of the zero-padded spectrum of a
/// reconstructed uniform grid, one `(beta1, beta2)` per peak.
///
/// Each peak is first moved to the nearest local maximum of the padded power
/// spectrum, at most one resolution cell away.
pub fn estimate_damping(
    reconstructed: &SampledSignal,
    peaks: &[(f64, f64)],
    pad: usize,
) -> Result<Vec<(f64, f64)>> {
    let (n1, n2) = reconstructed.scheme.grid_shape();
    if pad < n1 || pad < n2 {
        return Err(Error::invalid(format!(
            "padding {pad} is smaller than the {n1}x{n2} grid"
        )));
    }
    let spectrum = fft2_padded(reconstructed, pad, pad)?;
    dampings_at(&spectrum, peaks, pad / n1.min(n2).max(1))
}

/// Half-maximum dampings at `peaks`; a selected frequency may sit on the
/// flank of its lobe, so each is first moved up to `reach` cells uphill.
fn dampings_at(spectrum: &SpectrumGrid, peaks: &[(f64, f64)], reach: usize) -> Result<Vec<(f64, f64)>> {
    peaks
        .iter()
        .map(|&peak| {
            let top = climb_to_peak(spectrum, peak, reach)?;
            Ok(fwhm(spectrum, top)?.dampings())
        })
        .collect()
}

/// Uniform-grid reconstruction from every nonzero atom of `solution` and its
/// zero-padded spectrum.
pub fn reconstruct_spectrum(
    signal: &SampledSignal,
    solution: &SparseSolution,
    pad: usize,
) -> Result<(SampledSignal, SpectrumGrid)> {
    let (n1, n2) = signal.scheme.grid_shape();
    if pad < n1 || pad < n2 {
        return Err(Error::invalid(format!(
            "padding {pad} is smaller than the {n1}x{n2} grid"
        )));
    }
    let atoms: Vec<((f64, f64), Complex64)> = solution
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(_, g)| g.norm() > 0.0)
        .map(|(m, &g)| (solution.grid.frequencies_of(m), g))
        .collect();
    if atoms.is_empty() {
        return Err(Error::InsufficientPeaks { wanted: 1, found: 0, deficit: 1 });
    }
    let reconstructed = reconstruct_uniform(&atoms, (n1, n2), signal.scheme.dt())?;
    let spectrum = fft2_padded(&reconstructed, pad, pad)?;
    Ok((reconstructed, spectrum))
}

/// Result of the two-stage LASSO estimator.
#[derive(Debug, Clone)]
pub struct LassoEstimate {
    pub components: ComponentSet,
    pub solution: SparseSolution,
    pub reconstructed: SampledSignal,
}

/// Sparse fit, band selection, least-squares debiasing, uniform-grid
/// reconstruction and half-maximum damping estimates.
pub fn estimate(
    signal: &SampledSignal,
    grid: &DictionaryGrid,
    k: usize,
    opts: &SolverOptions,
    pad: usize,
) -> Result<LassoEstimate> {
    let solution = solve(signal, grid, opts)?;
    estimate_from_solution(signal, solution, k, pad)
}

/// One group of nonzero atoms from [`select_bands`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    /// `|g|`-weighted mean frequency of the group.
    pub omega1: f64,
    pub omega2: f64,
    /// Sum of `|g|` over the group.
    pub weight: f64,
}

/// Grouping radius, in dictionary cells per axis: 3/8 of the resolution cell
/// `2 pi / (n dt)` of the enclosing grid.
pub fn band_radius(signal: &SampledSignal, grid: &DictionaryGrid) -> (usize, usize) {
    let (n1, n2) = signal.scheme.grid_shape();
    let (dt1, dt2) = signal.scheme.dt();
    let (s1, s2) = grid.frequency_spacing();
    let cells = |n: usize, dt: f64, s: f64| (0.375 * TAU / (n as f64 * dt) / s).round().max(1.0) as usize;
    (cells(n1, dt1, s1), cells(n2, dt2, s2))
}

/// The `k` heaviest groups of nonzero atoms. Atoms are visited in order of
/// decreasing `|g|`; each joins the nearest group peak within `radius` cells
/// on both axes, or starts a new group. A damped line is represented by
/// several atoms around it, so a group stands for one spectral band.
pub fn select_bands(solution: &SparseSolution, k: usize, radius: (usize, usize)) -> Result<Vec<Band>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let p2 = solution.grid.p2();
    let mut nz: Vec<(usize, f64)> = solution
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 0.0)
        .map(|(m, v)| (m, v.norm()))
        .collect();
    nz.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    // (peak atom, sum |g|, sum |g| w1, sum |g| w2)
    let mut groups: Vec<(usize, f64, f64, f64)> = Vec::new();
    for &(m, g) in &nz {
        let (i, j) = (m / p2, m % p2);
        let host = groups
            .iter()
            .enumerate()
            .filter_map(|(idx, grp)| {
                let (di, dj) = (i.abs_diff(grp.0 / p2), j.abs_diff(grp.0 % p2));
                (di <= radius.0 && dj <= radius.1).then_some((di * di + dj * dj, idx))
            })
            .min()
            .map(|(_, idx)| idx);
        let (w1, w2) = solution.grid.frequencies_of(m);
        match host {
            Some(h) => {
                let grp = &mut groups[h];
                grp.1 += g;
                grp.2 += g * w1;
                grp.3 += g * w2;
            }
            None => groups.push((m, g, g * w1, g * w2)),
        }
    }
    if groups.len() < k {
        return Err(Error::InsufficientPeaks {
            wanted: k,
            found: groups.len(),
            deficit: k - groups.len(),
        });
    }
    // stable: equal weights keep the order of their peaks
    groups.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(groups
        .into_iter()
        .take(k)
        .map(|(_, w, s1, s2)| Band {
            omega1: s1 / w,
            omega2: s2 / w,
            weight: w,
        })
        .collect())
}

/// The stages of [`estimate`] that follow the sparse fit.
pub fn estimate_from_solution(
    signal: &SampledSignal,
    solution: SparseSolution,
    k: usize,
    pad: usize,
) -> Result<LassoEstimate> {
    let bands = select_bands(&solution, k, band_radius(signal, &solution.grid))?;
    let freqs: Vec<(f64, f64)> = bands.iter().map(|b| (b.omega1, b.omega2)).collect();
    let (reconstructed, spectrum) = reconstruct_spectrum(signal, &solution, pad)?;
    let (n1, n2) = signal.scheme.grid_shape();
    let dampings = dampings_at(&spectrum, &freqs, pad / n1.min(n2).max(1))?;
    let mut components: Vec<Component> = freqs
        .iter()
        .zip(&dampings)
        .map(|(&(w1, w2), &(b1, b2))| Component::new(w1, w2, b1, b2, Complex64::new(0.0, 0.0)))
        .collect();
    if let Ok(amps) = debias_amplitudes(signal, &freqs) {
        for (c, g) in components.iter_mut().zip(amps) {
            c.amplitude = g;
        }
    }
    Ok(LassoEstimate {
        components: ComponentSet::new(components),
        solution,
        reconstructed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::build_grid;
    use crate::model::{make_uniform_grid, subsample_random, synthesize};

    fn unit(w1: f64, w2: f64, b1: f64, b2: f64) -> Component {
        Component::new(w1, w2, b1, b2, Complex64::new(1.0, 0.0))
    }

    #[test]
    fn soft_threshold_shrinks_modulus() {
        let z = Complex64::new(3.0, 4.0);
        let s = soft_threshold(z, 1.0);
        assert!((s.norm() - 4.0).abs() < 1e-15);
        assert!((s.arg() - z.arg()).abs() < 1e-15);
        assert_eq!(soft_threshold(z, 5.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn large_lambda_gives_zero_solution() {
        let grid = build_grid(16, 16, (0.1, 0.97), None).unwrap();
        let scheme = make_uniform_grid(10, 10, 1.0, 1.0).unwrap();
        let x = synthesize(&ComponentSet::new(vec![unit(0.3, 0.6, 0.02, 0.03)]), &scheme);
        let dict = FrequencyDictionary::new(&grid, &scheme).unwrap();
        let scaled: Vec<_> = x.values.iter().map(|v| v / x.max_modulus()).collect();
        let cmax = dict.correlate(&scaled).iter().map(|c| c.norm()).fold(0.0, f64::max);
        let opts = SolverOptions { lambda: 2.0 * cmax, ..Default::default() };
        let sol = solve(&x, &grid, &opts).unwrap();
        assert!(sol.amplitudes.iter().all(|g| g.norm() == 0.0));
        assert_eq!(sol.kkt_violation, 0.0);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let grid = build_grid(8, 8, (0.1, 0.97), None).unwrap();
        let scheme = make_uniform_grid(6, 6, 1.0, 1.0).unwrap();
        let x = synthesize(&ComponentSet::default(), &scheme);
        let sol = solve(&x, &grid, &SolverOptions::default()).unwrap();
        assert!(sol.amplitudes.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = build_grid(8, 8, (0.1, 0.97), None).unwrap();
        let scheme = make_uniform_grid(6, 6, 1.0, 1.0).unwrap();
        let x = synthesize(&ComponentSet::default(), &scheme);
        let bad = SolverOptions { lambda: 0.0, ..Default::default() };
        assert!(solve(&x, &grid, &bad).is_err());
        let empty = subsample_random(&scheme, 0, None, 0).unwrap();
        let e = SampledSignal::new(empty, vec![]).unwrap();
        assert!(matches!(solve(&e, &grid, &SolverOptions::default()), Err(Error::Empty(_))));
        let damped = build_grid(8, 8, (0.1, 0.97), Some(vec![0.0, 0.1])).unwrap();
        assert!(solve(&x, &damped, &SolverOptions::default()).is_err());
    }

    #[test]
    fn select_single_and_tie_break() {
        let grid = build_grid(4, 4, (0.0, 3.0), None).unwrap();
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 16];
        amplitudes[2 * 4 + 1] = Complex64::new(0.0, 2.0);
        let mut sol = SparseSolution {
            amplitudes,
            grid,
            objective: 0.0,
            iterations: 0,
            kkt_violation: 0.0,
            data_scale: 1.0,
            objective_history: vec![],
        };
        let s = select_components(&sol, 1).unwrap();
        assert_eq!((s[0].omega1, s[0].omega2), (2.0, 1.0));

        sol.amplitudes[3] = Complex64::new(2.0, 0.0);
        let s = select_components(&sol, 1).unwrap();
        assert_eq!((s[0].omega1, s[0].omega2), (0.0, 3.0));
        assert!(matches!(
            select_components(&sol, 3),
            Err(Error::InsufficientPeaks { wanted: 3, found: 2, deficit: 1 })
        ));
    }

    #[test]
    fn bands_group_split_atoms() {
        let grid = build_grid(20, 20, (0.0, 19.0), None).unwrap();
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 400];
        let mut put = |i: usize, j: usize, g: f64| amplitudes[i * 20 + j] = Complex64::new(0.0, g);
        // one line split over three atoms, a weaker compact one far away
        put(5, 5, 1.0);
        put(5, 7, 1.0);
        put(6, 6, 0.5);
        put(15, 12, 1.5);
        let sol = SparseSolution {
            amplitudes,
            grid,
            objective: 0.0,
            iterations: 0,
            kkt_violation: 0.0,
            data_scale: 1.0,
            objective_history: vec![],
        };
        let bands = select_bands(&sol, 2, (2, 2)).unwrap();
        assert_eq!(bands[0].weight, 2.5);
        assert!((bands[0].omega1 - 5.2).abs() < 1e-12 && (bands[0].omega2 - 6.0).abs() < 1e-12);
        assert_eq!((bands[1].omega1, bands[1].omega2, bands[1].weight), (15.0, 12.0, 1.5));

        // with radius 1 the split atoms stay apart and the top-2 changes
        let narrow = select_bands(&sol, 2, (1, 1)).unwrap();
        assert_eq!((narrow[0].omega1, narrow[0].omega2), (15.0, 12.0));
        assert!(matches!(select_bands(&sol, 3, (2, 2)), Err(Error::InsufficientPeaks { found: 2, .. })));
    }

    #[test]
    fn band_radius_is_three_eighths_of_a_resolution_cell() {
        let grid = build_grid(256, 256, (0.1, 0.97), None).unwrap();
        let full = make_uniform_grid(40, 20, 1.0, 1.0).unwrap();
        let signal = synthesize(&ComponentSet::new(vec![unit(0.5, 0.5, 0.0, 0.0)]), &full);
        let spacing = 0.87 / 255.0;
        let expect = |n: f64| (0.375 * TAU / n / spacing).round() as usize;
        assert_eq!(band_radius(&signal, &grid), (expect(40.0), expect(20.0)));
        assert_eq!(band_radius(&signal, &grid).0, 17);
    }

    #[test]
    fn debias_single_and_orthogonal_atoms() {
        let n = 8;
        let scheme = make_uniform_grid(n, n, 1.0, 1.0).unwrap();
        let bin = std::f64::consts::TAU / n as f64;
        let g = [Complex64::new(0.7, -0.2), Complex64::new(-0.1, 1.3)];
        let comps = ComponentSet::new(vec![
            Component::new(bin, 2.0 * bin, 0.0, 0.0, g[0]),
            Component::new(3.0 * bin, bin, 0.0, 0.0, g[1]),
        ]);
        let x = synthesize(&comps, &scheme);
        let amps = debias_amplitudes(&x, &[(bin, 2.0 * bin), (3.0 * bin, bin)]).unwrap();
        // orthogonal atoms: each amplitude is the atom's own projection coefficient
        for (j, &(w1, w2)) in [(bin, 2.0 * bin), (3.0 * bin, bin)].iter().enumerate() {
            let col = undamped_column(&x, (w1, w2));
            let proj = inner(&col, &x.values) / norm_sqr(&col);
            assert!((amps[j] - proj).norm() < 1e-12);
            assert!((amps[j] - g[j]).norm() < 1e-12);
        }
        let one = debias_amplitudes(&x, &[(bin, 2.0 * bin)]).unwrap();
        let col = undamped_column(&x, (bin, 2.0 * bin));
        assert!((one[0] - inner(&col, &x.values) / norm_sqr(&col)).norm() < 1e-12);
        assert!(matches!(
            debias_amplitudes(&x, &[(bin, bin), (bin, bin)]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn reconstruction_shapes_and_values() {
        let r = reconstruct_uniform(&[((0.0, 0.0), Complex64::new(1.0, 0.0))], (5, 4), (1.0, 1.0)).unwrap();
        assert!(r.values.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let r = reconstruct_uniform(&[((0.3, 0.2), Complex64::new(1.0, 0.5))], (40, 40), (1.0, 1.0)).unwrap();
        assert_eq!(r.len(), 1600);
    }

    #[test]
    fn reconstruction_agrees_with_model_at_sampled_points() {
        let full = make_uniform_grid(12, 12, 1.0, 1.0).unwrap();
        let scheme = subsample_random(&full, 50, None, 5).unwrap();
        let truth = ComponentSet::new(vec![unit(0.5, 0.8, 0.0, 0.0), unit(1.7, 0.3, 0.0, 0.0)]);
        let x = synthesize(&truth, &scheme);
        let freqs = [(0.5, 0.8), (1.7, 0.3)];
        let amps = debias_amplitudes(&x, &freqs).unwrap();
        let pairs: Vec<_> = freqs.iter().copied().zip(amps.iter().copied()).collect();
        let recon = reconstruct_uniform(&pairs, (12, 12), (1.0, 1.0)).unwrap();
        let at_samples = recon.restrict(&scheme).unwrap();
        let model: Vec<Complex64> = scheme
            .points()
            .iter()
            .map(|p| {
                pairs
                    .iter()
                    .map(|&((w1, w2), g)| g * damped_exp(w1, 0.0, p.t1) * damped_exp(w2, 0.0, p.t2))
                    .sum()
            })
            .collect();
        for (a, b) in at_samples.values.iter().zip(&model) {
            assert!((a - b).norm() < 1e-13);
        }
        for (a, b) in amps.iter().zip(truth.iter()) {
            assert!((a - b.amplitude).norm() < 1e-8);
        }
    }

    #[test]
    fn undamped_width_hits_window_floor() {
        // half-power half-width of the 40-point Dirichlet kernel, by bisection
        let n = 40.0_f64;
        let dirichlet = |d: f64| ((n * d / 2.0).sin() / (d / 2.0).sin()).powi(2);
        let (mut lo, mut hi) = (1e-6, 2.0 * std::f64::consts::PI / n);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dirichlet(mid) > n * n / 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let floor = lo;
        let r = reconstruct_uniform(&[((0.5, 0.7), Complex64::new(1.0, 0.0))], (40, 40), (1.0, 1.0)).unwrap();
        let b = estimate_damping(&r, &[(0.5, 0.7)], 4096).unwrap();
        assert!((b[0].0 - floor).abs() / floor < 1e-3, "{} vs {floor}", b[0].0);
        assert!((b[0].1 - floor).abs() / floor < 1e-3);
        assert!(estimate_damping(&r, &[(0.5, 0.7)], 32).is_err());
    }
}
