//! Sparse exponential mode analysis.
//!
//! Frequencies and dampings are estimated directly from the available samples:
//! an undamped sparse fit picks the initial frequencies, then every component
//! is refined in turn against the data with the other components subtracted,
//! first its damping (golden-section line search per axis) and then its
//! frequency (a zooming local grid). Amplitudes are re-fit jointly by least
//! squares after each pass. Every step only accepts moves that lower the
//! residual, so the residual norm never increases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dictionary::DictionaryGrid;
use crate::error::{Error, Result};
use crate::lasso::{self, SolverOptions, SparseSolution};
use crate::linalg::{inner, least_squares, norm_sqr};
use crate::model::{damped_exp, wrap_frequency, Component, ComponentSet, SampledSignal, SamplingScheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemaOptions {
    pub lambda: f64,
    pub outer_iterations: usize,
    pub zoom_levels: usize,
    /// Candidates per axis on each zoom level; odd so the centre is kept.
    pub local_points: usize,
    /// Damping search interval `(lo, hi)`.
    pub beta_bracket: (f64, f64),
    /// Stop once the relative residual decrease of a pass is below this.
    pub residual_tolerance: f64,
}

impl Default for SemaOptions {
    fn default() -> Self {
        SemaOptions {
            lambda: lasso::DEFAULT_LAMBDA,
            outer_iterations: 60,
            zoom_levels: 6,
            local_points: 5,
            beta_bracket: (0.0, 0.2),
            residual_tolerance: 1e-9,
        }
    }
}

impl SemaOptions {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if self.local_points < 3 || self.local_points.is_multiple_of(2) {
            return Err(Error::invalid("local_points must be odd and at least 3"));
        }
        let (lo, hi) = self.beta_bracket;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::invalid(format!("invalid damping bracket ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// Per-pass diagnostics. Entry 0 is the state right after initialization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemaTrace {
    pub residual_norms: Vec<f64>,
    pub components: Vec<ComponentSet>,
}

const POLISH_STEPS: usize = 50;

/// Absolute tolerance of the damping line search.
const BETA_TOL: f64 = 1e-8;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Evaluates single damped modes on a fixed scheme using per-axis tables of
/// the distinct sample times.
struct ModeEvaluator {
    t1: Vec<f64>,
    t2: Vec<f64>,
    idx1: Vec<usize>,
    idx2: Vec<usize>,
}

impl ModeEvaluator {
    fn new(scheme: &SamplingScheme) -> Self {
        fn distinct(values: impl Iterator<Item = f64>) -> (Vec<f64>, Vec<f64>) {
            let all: Vec<f64> = values.collect();
            let mut uniq = all.clone();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            (uniq, all)
        }
        let (t1, all1) = distinct(scheme.points().iter().map(|p| p.t1));
        let (t2, all2) = distinct(scheme.points().iter().map(|p| p.t2));
        let lookup = |uniq: &[f64], v: f64| uniq.binary_search_by(|x| x.total_cmp(&v)).unwrap();
        let idx1 = all1.iter().map(|&v| lookup(&t1, v)).collect();
        let idx2 = all2.iter().map(|&v| lookup(&t2, v)).collect();
        ModeEvaluator { t1, t2, idx1, idx2 }
    }

    fn mode(&self, w1: f64, w2: f64, b1: f64, b2: f64) -> Vec<Complex64> {
        let e1: Vec<Complex64> = self.t1.iter().map(|&t| damped_exp(w1, b1, t)).collect();
        let e2: Vec<Complex64> = self.t2.iter().map(|&t| damped_exp(w2, b2, t)).collect();
        self.idx1
            .iter()
            .zip(&self.idx2)
            .map(|(&a, &b)| e1[a] * e2[b])
            .collect()
    }

    fn component(&self, c: &Component) -> Vec<Complex64> {
        self.mode(c.omega1, c.omega2, c.beta1, c.beta2)
    }
}

/// Best single-mode fit of `target`: least-squares amplitude and the squared
/// residual it leaves.
fn single_fit(target: &[Complex64], target_energy: f64, mode: &[Complex64]) -> (Complex64, f64) {
    let energy = norm_sqr(mode);
    if energy == 0.0 {
        return (Complex64::new(0.0, 0.0), target_energy);
    }
    let proj = inner(mode, target);
    let amp = proj / energy;
    (amp, (target_energy - proj.norm_sqr() / energy).max(0.0))
}

fn residual_sqr(target: &[Complex64], mode: &[Complex64], amp: Complex64) -> f64 {
    target.iter().zip(mode).map(|(y, a)| (y - amp * a).norm_sqr()).sum()
}

/// Data minus every component in `others`.
fn subtract(signal: &SampledSignal, eval: &ModeEvaluator, others: &ComponentSet) -> Vec<Complex64> {
    let mut target = signal.values.clone();
    for c in others {
        for (y, a) in target.iter_mut().zip(eval.component(c)) {
            *y -= c.amplitude * a;
        }
    }
    target
}

/// Golden-section minimum of `f` on `[lo, hi]`, compared against both ends.
/// An end wins when it is within `tie` of the interior optimum.
fn golden_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64, tie: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let (mut x, mut fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    for edge in [lo, hi] {
        let fe = f(edge);
        if fe <= fx + tie {
            x = edge;
            fx = fe;
        }
    }
    (x, fx)
}

/// Alternating per-axis damping search for one component against `target`.
/// Returns the refined component and its squared residual; the input is
/// returned when nothing better is found.
fn fit_damping(
    c: &Component,
    target: &[Complex64],
    target_energy: f64,
    eval: &ModeEvaluator,
    bracket: (f64, f64),
    rounds: usize,
) -> (Component, f64) {
    let start_mode = eval.component(c);
    let start_res = residual_sqr(target, &start_mode, c.amplitude);
    let tie = 1e-13 * target_energy;
    let (mut b1, mut b2) = (c.beta1, c.beta2);
    for _ in 0..rounds {
        let (prev1, prev2) = (b1, b2);
        let (x, _) = golden_min(
            |b| single_fit(target, target_energy, &eval.mode(c.omega1, c.omega2, b, b2)).1,
            bracket.0,
            bracket.1,
            BETA_TOL,
            tie,
        );
        b1 = x;
        let (x, _) = golden_min(
            |b| single_fit(target, target_energy, &eval.mode(c.omega1, c.omega2, b1, b)).1,
            bracket.0,
            bracket.1,
            BETA_TOL,
            tie,
        );
        b2 = x;
        if (b1 - prev1).abs() < 1e-10 && (b2 - prev2).abs() < 1e-10 {
            break;
        }
    }
    let mode = eval.mode(c.omega1, c.omega2, b1, b2);
    let (amp, _) = single_fit(target, target_energy, &mode);
    let res = residual_sqr(target, &mode, amp);
    if res < start_res {
        (Component::new(c.omega1, c.omega2, b1, b2, amp), res)
    } else {
        (*c, start_res)
    }
}

/// Least-squares damping for `component` against the data with `others`
/// subtracted, searched per axis over `opts.beta_bracket`. The amplitude is
/// re-fit; the residual never increases.
pub fn refine_damping(
    component: &Component,
    signal: &SampledSignal,
    others: &ComponentSet,
    opts: &SemaOptions,
) -> Result<Component> {
    opts.validate()?;
    let eval = ModeEvaluator::new(&signal.scheme);
    let target = subtract(signal, &eval, others);
    let energy = norm_sqr(&target);
    Ok(fit_damping(component, &target, energy, &eval, opts.beta_bracket, 10).0)
}

/// Zooming local-grid frequency search for `component` against the data with
/// `others` subtracted.
///
/// Each level evaluates `local_points` offsets per axis across `[-span, span]`
/// around the current frequencies, moves to the best candidate if it lowers
/// the residual (re-fitting damping and amplitude there), then halves the span.
pub fn refine_frequency(
    component: &Component,
    signal: &SampledSignal,
    others: &ComponentSet,
    span: (f64, f64),
    opts: &SemaOptions,
) -> Result<Component> {
    opts.validate()?;
    if !(span.0 > 0.0 && span.1 > 0.0) {
        return Err(Error::invalid("frequency span must be positive on both axes"));
    }
    let eval = ModeEvaluator::new(&signal.scheme);
    let target = subtract(signal, &eval, others);
    let energy = norm_sqr(&target);
    Ok(zoom_frequency(component, &target, energy, &eval, span, opts))
}

fn zoom_frequency(
    component: &Component,
    target: &[Complex64],
    energy: f64,
    eval: &ModeEvaluator,
    span: (f64, f64),
    opts: &SemaOptions,
) -> Component {
    let mut current = *component;
    let mut current_res = residual_sqr(target, &eval.component(&current), current.amplitude);
    let (mut s1, mut s2) = span;
    let half = (opts.local_points / 2) as f64;
    for _ in 0..opts.zoom_levels {
        let mut best: Option<(f64, f64, Complex64, f64)> = None;
        for a in 0..opts.local_points {
            let w1 = current.omega1 + s1 * (a as f64 - half) / half;
            for b in 0..opts.local_points {
                let w2 = current.omega2 + s2 * (b as f64 - half) / half;
                let mode = eval.mode(w1, w2, current.beta1, current.beta2);
                let (amp, res) = single_fit(target, energy, &mode);
                if best.is_none_or(|(_, _, _, r)| res < r) {
                    best = Some((w1, w2, amp, res));
                }
            }
        }
        if let Some((w1, w2, amp, _)) = best {
            let moved = Component::new(w1, w2, current.beta1, current.beta2, amp);
            let exact = residual_sqr(target, &eval.component(&moved), amp);
            if exact < current_res {
                let (refit, refit_res) =
                    fit_damping(&moved, target, energy, eval, opts.beta_bracket, 2);
                current = refit;
                current_res = refit_res.min(exact);
            }
        }
        s1 /= 2.0;
        s2 /= 2.0;
    }
    current
}

fn total_residual(signal: &SampledSignal, eval: &ModeEvaluator, comps: &ComponentSet) -> f64 {
    norm_sqr(&subtract(signal, eval, comps)).sqrt()
}

/// Joint least-squares amplitudes for the current damped modes; `None` when
/// the modes are linearly dependent on the scheme.
fn refit_amplitudes(signal: &SampledSignal, eval: &ModeEvaluator, comps: &[Component]) -> Option<Vec<Complex64>> {
    let columns: Vec<Vec<Complex64>> = comps.iter().map(|c| eval.component(c)).collect();
    least_squares(&columns, &signal.values).ok()
}

/// Damped Gauss-Newton on all frequencies, dampings and amplitudes at once.
/// Dampings stay inside `bracket`. Returns `None` unless the residual drops.
fn joint_polish(
    signal: &SampledSignal,
    eval: &ModeEvaluator,
    comps: &[Component],
    bracket: (f64, f64),
) -> Option<Vec<Component>> {
    let k = comps.len();
    let dim = 6 * k;
    let times: Vec<(f64, f64)> = signal.scheme.points().iter().map(|p| (p.t1, p.t2)).collect();
    let residual_of = |cs: &[Component]| -> Vec<Complex64> {
        let mut r = signal.values.clone();
        for c in cs {
            for (y, a) in r.iter_mut().zip(eval.component(c)) {
                *y -= c.amplitude * a;
            }
        }
        r
    };
    let mut current = comps.to_vec();
    let mut r = residual_of(&current);
    let mut cost = norm_sqr(&r);
    let start = cost;
    let mut mu = 1e-3;
    let i = Complex64::new(0.0, 1.0);
    for _ in 0..POLISH_STEPS {
        // columns are derivatives of the model, so the step solves J d = r
        let mut jac: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
        for c in &current {
            let m = eval.component(c);
            let gm: Vec<Complex64> = m.iter().map(|v| c.amplitude * v).collect();
            jac.push(gm.iter().zip(&times).map(|(v, t)| i * t.0 * v).collect());
            jac.push(gm.iter().zip(&times).map(|(v, t)| i * t.1 * v).collect());
            jac.push(gm.iter().zip(&times).map(|(v, t)| -t.0 * v).collect());
            jac.push(gm.iter().zip(&times).map(|(v, t)| -t.1 * v).collect());
            jac.push(m.clone());
            jac.push(m.iter().map(|v| i * v).collect());
        }
        let mut normal = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for a in 0..dim {
            rhs[a] = inner(&jac[a], &r).re;
            for b in a..dim {
                let v = inner(&jac[a], &jac[b]).re;
                normal[(a, b)] = v;
                normal[(b, a)] = v;
            }
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut sys = normal.clone();
            for a in 0..dim {
                sys[(a, a)] += mu * normal[(a, a)].max(1e-300);
            }
            let Some(chol) = sys.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let d = chol.solve(&rhs);
            let trial: Vec<Component> = current
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let o = 6 * j;
                    Component::new(
                        c.omega1 + d[o],
                        c.omega2 + d[o + 1],
                        (c.beta1 + d[o + 2]).clamp(bracket.0, bracket.1),
                        (c.beta2 + d[o + 3]).clamp(bracket.0, bracket.1),
                        c.amplitude + Complex64::new(d[o + 4], d[o + 5]),
                    )
                })
                .collect();
            let tr = residual_of(&trial);
            let tc = norm_sqr(&tr);
            if tc < cost {
                let gain = (cost - tc) / cost.max(f64::MIN_POSITIVE);
                current = trial;
                r = tr;
                cost = tc;
                mu = (mu / 10.0).max(1e-12);
                improved = gain > 1e-15;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (cost < start).then_some(current)
}

/// Estimates `k` damped components from `signal`.
pub fn estimate(
    signal: &SampledSignal,
    grid: &DictionaryGrid,
    k: usize,
    opts: &SemaOptions,
) -> Result<(ComponentSet, SemaTrace)> {
    opts.validate()?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let solver = SolverOptions {
        lambda: opts.lambda,
        ..SolverOptions::default()
    };
    let solution = lasso::solve(signal, grid, &solver)?;
    estimate_from_solution(signal, &solution, k, opts)
}

/// Refinement stages of [`estimate`] started from an existing sparse fit.
pub fn estimate_from_solution(
    signal: &SampledSignal,
    solution: &SparseSolution,
    k: usize,
    opts: &SemaOptions,
) -> Result<(ComponentSet, SemaTrace)> {
    opts.validate()?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    // Two starts: the strongest local maxima of |g| (exact when the fit is
    // sparse) and the heaviest atom groups (robust when lines are split).
    let mut starts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(2);
    let mut last_err = None;
    match lasso::select_components(solution, k) {
        Ok(sel) => starts.push(sel.iter().map(|c| (c.omega1, c.omega2)).collect()),
        Err(e) => last_err = Some(e),
    }
    match lasso::select_bands(solution, k, lasso::band_radius(signal, &solution.grid)) {
        Ok(bands) => {
            let f: Vec<(f64, f64)> = bands.iter().map(|b| (b.omega1, b.omega2)).collect();
            if starts.first() != Some(&f) {
                starts.push(f);
            }
        }
        Err(e) => last_err = Some(e),
    }
    let mut best: Option<(ComponentSet, SemaTrace)> = None;
    for freqs in starts {
        let run = lasso::debias_amplitudes(signal, &freqs).and_then(|amps| {
            let comps: Vec<Component> = freqs
                .iter()
                .zip(&amps)
                .map(|(&(w1, w2), &g)| Component::new(w1, w2, 0.0, 0.0, g))
                .collect();
            refine_all(signal, solution.grid.frequency_spacing(), comps, opts)
        });
        match run {
            // a later start has to fit clearly better to replace an earlier one
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| final_residual(&fit.1) < final_residual(&b.1) * (1.0 - 1e-9)) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Empty("starting frequencies")))
}

fn final_residual(trace: &SemaTrace) -> f64 {
    trace.residual_norms.last().copied().unwrap_or(f64::INFINITY)
}

/// Alternating refinement starting from `initial`; the frequency search on the
/// first pass spans one dictionary spacing, `spacing`.
pub fn refine_all(
    signal: &SampledSignal,
    spacing: (f64, f64),
    initial: Vec<Component>,
    opts: &SemaOptions,
) -> Result<(ComponentSet, SemaTrace)> {
    opts.validate()?;
    let eval = ModeEvaluator::new(&signal.scheme);
    let mut comps = initial;
    let data_norm = norm_sqr(&signal.values).sqrt();
    let mut residual = total_residual(signal, &eval, &ComponentSet::new(comps.clone()));
    let mut trace = SemaTrace {
        residual_norms: vec![residual],
        components: vec![ComponentSet::new(comps.clone())],
    };
    let mut last_move: Vec<(f64, f64)> = vec![spacing; comps.len()];
    let shrink = 0.5f64.powi(opts.zoom_levels as i32);

    for pass in 0..opts.outer_iterations {
        // strongest first
        let mut order: Vec<usize> = (0..comps.len()).collect();
        order.sort_by(|&a, &b| {
            comps[b]
                .amplitude
                .norm()
                .total_cmp(&comps[a].amplitude.norm())
                .then(a.cmp(&b))
        });
        let floor = shrink.powi(pass as i32);
        for &i in &order {
            let others = ComponentSet::new(
                comps
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, c)| *c)
                    .collect(),
            );
            let target = subtract(signal, &eval, &others);
            let energy = norm_sqr(&target);
            let (damped, _) = fit_damping(&comps[i], &target, energy, &eval, opts.beta_bracket, 10);
            let span = if pass == 0 {
                spacing
            } else {
                (
                    (2.0 * last_move[i].0).max(spacing.0 * floor).min(spacing.0),
                    (2.0 * last_move[i].1).max(spacing.1 * floor).min(spacing.1),
                )
            };
            let refined = zoom_frequency(&damped, &target, energy, &eval, span, opts);
            last_move[i] = (
                (refined.omega1 - comps[i].omega1).abs(),
                (refined.omega2 - comps[i].omega2).abs(),
            );
            comps[i] = refined;
        }

        if let Some(amps) = refit_amplitudes(signal, &eval, &comps) {
            let candidate: Vec<Component> = comps
                .iter()
                .zip(&amps)
                .map(|(c, &g)| Component { amplitude: g, ..*c })
                .collect();
            let res = total_residual(signal, &eval, &ComponentSet::new(candidate.clone()));
            let current = total_residual(signal, &eval, &ComponentSet::new(comps.clone()));
            if res <= current {
                comps = candidate;
            }
        }

        if let Some(polished) = joint_polish(signal, &eval, &comps, opts.beta_bracket) {
            comps = polished;
        }

        let next = total_residual(signal, &eval, &ComponentSet::new(comps.clone()));
        trace.residual_norms.push(next);
        trace.components.push(ComponentSet::new(comps.clone()));
        let decrease = (residual - next) / residual.max(f64::MIN_POSITIVE);
        residual = next;
        if decrease < opts.residual_tolerance || residual <= 1e-14 * data_norm {
            break;
        }
    }
    let (dt1, dt2) = signal.scheme.dt();
    for c in &mut comps {
        c.omega1 = wrap_frequency(c.omega1, dt1);
        c.omega2 = wrap_frequency(c.omega2, dt2);
    }
    Ok((ComponentSet::new(comps), trace))
}
