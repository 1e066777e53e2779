//! Monte-Carlo campaign: RMSE of frequency and damping estimates versus the
//! fraction of retained samples, for each estimator.
//!
//! Seeds: trial `p` draws its scene from `base_seed ^ p`; noise and the
//! sampling pattern for each fraction use [`sub_seed`] of that scene seed, so
//! every method sees the same data and a trial is reproducible on its own.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{build_grid, DictionaryGrid};
use crate::error::{Error, Result};
use crate::fourier;
use crate::lasso::{self, SolverOptions};
use crate::metrics::{damping_summary, frequency_summary, RmseSummary, TrialOutcome};
use crate::model::{
    add_noise, draw_random_scene, make_uniform_grid, subsample_random, synthesize, ComponentSet, NoiseSpec,
    SampledSignal, DEFAULT_DAMP_RANGE, DEFAULT_FREQ_RANGE, DEFAULT_NOISE_FWHM_RATIO,
};
use crate::sema::{self, SemaOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fourier,
    Lasso,
    Sema,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fourier, Method::Lasso, Method::Sema];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fourier => "fourier",
            Method::Lasso => "lasso",
            Method::Sema => "sema",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(Method::Fourier),
            "lasso" => Ok(Method::Lasso),
            "sema" => Ok(Method::Sema),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected fourier, lasso or sema)"
            ))),
        }
    }
}

/// Campaign settings. Serialized as a flat JSON object with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub trials: usize,
    pub k: usize,
    pub grid_shape: (usize, usize),
    pub freq_range: (f64, f64),
    pub damp_range: (f64, f64),
    pub noise_fwhm_ratio: f64,
    pub dictionary_size: (usize, usize),
    pub lambda: f64,
    pub sampling_fractions: Vec<f64>,
    pub methods: Vec<Method>,
    pub base_seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            trials: 200,
            k: 4,
            grid_shape: (40, 40),
            freq_range: DEFAULT_FREQ_RANGE,
            damp_range: DEFAULT_DAMP_RANGE,
            noise_fwhm_ratio: DEFAULT_NOISE_FWHM_RATIO,
            dictionary_size: (256, 256),
            lambda: lasso::DEFAULT_LAMBDA,
            sampling_fractions: vec![0.05, 0.1, 0.2, 0.4],
            methods: Method::ALL.to_vec(),
            base_seed: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.grid_shape.0 == 0 || self.grid_shape.1 == 0 {
            return Err(Error::invalid("grid_shape must be positive"));
        }
        if self.dictionary_size.0 < 2 || self.dictionary_size.1 < 2 {
            return Err(Error::invalid("dictionary_size must be at least 2 per axis"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(self.noise_fwhm_ratio >= 0.0) {
            return Err(Error::invalid("noise_fwhm_ratio must be non-negative"));
        }
        if self.sampling_fractions.is_empty() {
            return Err(Error::invalid("sampling_fractions is empty"));
        }
        if self.sampling_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::invalid("sampling fractions must lie in (0, 1]"));
        }
        if self.sampling_fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sampling fractions must be strictly ascending"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods is empty"));
        }
        Ok(())
    }

    /// Number of retained samples for `fraction`, never fewer than one.
    pub fn sample_count(&self, fraction: f64) -> usize {
        let total = self.grid_shape.0 * self.grid_shape.1;
        ((fraction * total as f64).round() as usize).clamp(1, total)
    }

    pub fn dictionary(&self) -> Result<DictionaryGrid> {
        build_grid(self.dictionary_size.0, self.dictionary_size.1, self.freq_range, None)
    }
}

/// splitmix64 finalizer of `seed ^ tag`, for independent per-purpose streams.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const NOISE_TAG: u64 = 0x6e_6f_69_73_65;
pub const SAMPLING_TAG: u64 = 0x73_61_6d_70_6c_65;

/// Truth and sub-sampled noisy data for one trial at one fraction.
pub struct TrialData {
    pub truth: ComponentSet,
    pub signal: SampledSignal,
}

pub fn trial_data(config: &CampaignConfig, trial_index: usize, fraction: f64) -> Result<TrialData> {
    let seed = config.base_seed ^ trial_index as u64;
    let truth = draw_random_scene(config.k, config.freq_range, config.damp_range, seed)?;
    let (n1, n2) = config.grid_shape;
    let grid = make_uniform_grid(n1, n2, 1.0, 1.0)?;
    let clean = synthesize(&truth, &grid);
    let noisy = add_noise(
        &clean,
        &NoiseSpec {
            fwhm_ratio: config.noise_fwhm_ratio,
            seed: sub_seed(seed, NOISE_TAG),
        },
        truth.max_amplitude(),
    )?;
    let scheme = subsample_random(
        &grid,
        config.sample_count(fraction),
        None,
        sub_seed(seed, SAMPLING_TAG ^ fraction.to_bits()),
    )?;
    Ok(TrialData {
        truth,
        signal: noisy.restrict(&scheme)?,
    })
}

fn sema_options(config: &CampaignConfig) -> SemaOptions {
    SemaOptions {
        lambda: config.lambda,
        ..SemaOptions::default()
    }
}

fn solver_options(config: &CampaignConfig) -> SolverOptions {
    SolverOptions {
        lambda: config.lambda,
        ..SolverOptions::default()
    }
}

/// One estimate for one trial, matched against the truth.
pub fn run_trial(config: &CampaignConfig, trial_index: usize, fraction: f64, method: Method) -> Result<TrialOutcome> {
    config.validate()?;
    let data = trial_data(config, trial_index, fraction)?;
    let dict = config.dictionary()?;
    let estimate = match method {
        Method::Fourier => fourier::estimate(&data.signal, config.k, fourier::DEFAULT_AXIS_POINTS)?,
        Method::Lasso => {
            lasso::estimate(&data.signal, &dict, config.k, &solver_options(config), lasso::DEFAULT_PAD)?.components
        }
        Method::Sema => sema::estimate(&data.signal, &dict, config.k, &sema_options(config))?.0,
    };
    TrialOutcome::new(data.truth, estimate)
}

/// Outcome of every requested method on one (trial, fraction) pair; the
/// sparse fit is shared between the two methods that start from it.
fn run_cell(
    config: &CampaignConfig,
    dict: &DictionaryGrid,
    trial_index: usize,
    fraction: f64,
) -> Vec<(Method, Option<TrialOutcome>, f64)> {
    let data = match trial_data(config, trial_index, fraction) {
        Ok(d) => d,
        Err(_) => return config.methods.iter().map(|&m| (m, None, 0.0)).collect(),
    };
    let mut shared: Option<(Result<lasso::SparseSolution>, f64)> = None;
    let mut out = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let start = Instant::now();
        let estimate = match method {
            Method::Fourier => fourier::estimate(&data.signal, config.k, fourier::DEFAULT_AXIS_POINTS),
            Method::Lasso | Method::Sema => {
                let (solution, solve_secs) = shared.get_or_insert_with(|| {
                    let t = Instant::now();
                    let sol = lasso::solve(&data.signal, dict, &solver_options(config));
                    (sol, t.elapsed().as_secs_f64())
                });
                let start_secs = *solve_secs;
                let est = match solution {
                    Ok(sol) if method == Method::Lasso => {
                        lasso::estimate_from_solution(&data.signal, sol.clone(), config.k, lasso::DEFAULT_PAD)
                            .map(|e| e.components)
                    }
                    Ok(sol) => sema::estimate_from_solution(&data.signal, sol, config.k, &sema_options(config))
                        .map(|e| e.0),
                    Err(_) => Err(Error::Empty("sparse solution")),
                };
                // both methods are charged for the shared fit
                let secs = start.elapsed().as_secs_f64() + start_secs;
                out.push((method, est.and_then(|e| TrialOutcome::new(data.truth.clone(), e)).ok(), secs));
                continue;
            }
        };
        let secs = start.elapsed().as_secs_f64();
        out.push((method, estimate.and_then(|e| TrialOutcome::new(data.truth.clone(), e)).ok(), secs));
    }
    out
}

/// Aggregate over the trials of one method at one fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: Method,
    pub fraction: f64,
    /// Trials that produced an estimate.
    pub trials: usize,
    /// Trials where the estimator failed; excluded from the RMSE.
    pub failures: usize,
    pub frequency: Option<RmseSummary>,
    pub damping: Option<RmseSummary>,
    /// Summed wall time of the estimates.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    /// Ordered by method as listed in the config, then by fraction.
    pub cells: Vec<CellResult>,
}

impl CampaignResult {
    pub fn cell(&self, method: Method, fraction: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.fraction == fraction)
    }

    /// Whether `method`'s frequency RMSE never rises from one fraction to a
    /// larger one by more than two combined standard errors.
    pub fn frequency_monotone(&self, method: Method) -> bool {
        let series: Vec<RmseSummary> = self
            .config
            .sampling_fractions
            .iter()
            .filter_map(|&f| self.cell(method, f).and_then(|c| c.frequency))
            .collect();
        series.iter().enumerate().all(|(i, a)| {
            series[i + 1..].iter().all(|b| {
                let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
                b.rmse <= a.rmse + 2.0 * se
            })
        })
    }
}

/// Runs every (method, fraction, trial) combination. Trials run in parallel on
/// the current rayon pool; aggregation follows trial order, so results do not
/// depend on the number of workers (wall times aside).
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    let dict = config.dictionary()?;
    let jobs: Vec<(usize, usize)> = (0..config.trials)
        .flat_map(|p| (0..config.sampling_fractions.len()).map(move |f| (p, f)))
        .collect();
    let results: Vec<Vec<(Method, Option<TrialOutcome>, f64)>> = jobs
        .par_iter()
        .map(|&(p, f)| run_cell(config, &dict, p, config.sampling_fractions[f]))
        .collect();

    let mut cells = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        for (fi, &fraction) in config.sampling_fractions.iter().enumerate() {
            let mut outcomes = Vec::new();
            let mut failures = 0;
            let mut seconds = 0.0;
            for (job, res) in jobs.iter().zip(&results) {
                if job.1 != fi {
                    continue;
                }
                let (m, outcome, secs) = &res[mi];
                debug_assert_eq!(*m, method);
                seconds += secs;
                match outcome {
                    Some(o) => outcomes.push(o.clone()),
                    None => failures += 1,
                }
            }
            cells.push(CellResult {
                method,
                fraction,
                trials: outcomes.len(),
                failures,
                frequency: frequency_summary(&outcomes).ok(),
                damping: damping_summary(&outcomes).ok(),
                seconds,
            });
        }
    }
    Ok(CampaignResult {
        config: config.clone(),
        cells,
    })
}
