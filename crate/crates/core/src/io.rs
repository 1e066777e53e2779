//! CSV formats and experimental-series ingestion.
//!
//! Samples: `i1,i2,t1,t2,re,im`, one row per sampled grid point. The grid
//! shape is the smallest one holding every index and the spacing per axis is
//! read from the first row with a nonzero index (1 when there is none).
//! Reals are written with 17 significant digits so files round-trip exactly.
//!
//! A series manifest is a CSV `population_time,file` with paths relative to
//! the manifest; slices must be listed in strictly increasing time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::bench::CampaignResult;
use crate::error::{Error, Result};
use crate::fourier::SpectrumGrid;
use crate::metrics::TrialOutcome;
use crate::model::{Component, ComponentSet, SampledSignal, SamplingPoint, SamplingScheme};

pub const SAMPLES_HEADER: [&str; 6] = ["i1", "i2", "t1", "t2", "re", "im"];
pub const COMPONENTS_HEADER: [&str; 6] = ["omega1", "omega2", "beta1", "beta2", "amp_re", "amp_im"];
pub const SPECTRUM_HEADER: [&str; 4] = ["omega1", "omega2", "re", "im"];
pub const TRIALS_HEADER: [&str; 10] = [
    "trial", "k", "true_w1", "true_w2", "est_w1", "est_w2", "true_b1", "true_b2", "est_b1", "est_b2",
];
pub const RESULTS_HEADER: [&str; 7] = ["method", "fraction", "trials", "failures", "rmse_freq", "rmse_damp", "seconds"];
pub const MANIFEST_HEADER: [&str; 2] = ["population_time", "file"];

/// Shortest decimal that parses back to the same `f64`, in exponent form
/// with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::format(path, format!("{other:?}")),
    }
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    inner.flush().map_err(io_err(path))
}

/// Reads `path` as CSV, checks the header and returns the data records with
/// their 1-based line numbers (the header is line 1).
fn read_table(path: &Path, expected: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut text = String::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_string(&mut text)
        .map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            path,
            format!(
                "header is '{}', expected '{}'",
                header.iter().collect::<Vec<_>>().join(","),
                expected.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::format(path, format!("row {line}: {e}")))?;
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse::<T>()
        .map_err(|_| Error::format(path, format!("row {line}: field '{name}' has invalid value '{raw}'")))
}

fn real(path: &Path, line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64> {
    let v: f64 = field(path, line, rec, col, name)?;
    if !v.is_finite() {
        return Err(Error::format(path, format!("row {line}: field '{name}' is not finite")));
    }
    Ok(v)
}

pub fn write_samples(path: &Path, signal: &SampledSignal) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SAMPLES_HEADER).map_err(|e| csv_err(path, e))?;
    for (p, v) in signal.scheme.points().iter().zip(&signal.values) {
        w.write_record([
            p.i1.to_string(),
            p.i2.to_string(),
            fmt_real(p.t1),
            fmt_real(p.t2),
            fmt_real(v.re),
            fmt_real(v.im),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn read_samples(path: &Path) -> Result<SampledSignal> {
    let rows = read_table(path, &SAMPLES_HEADER)?;
    if rows.is_empty() {
        return Err(Error::format(path, "no sample rows"));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    let mut first_row: HashMap<(usize, usize), usize> = HashMap::with_capacity(rows.len());
    for (line, rec) in &rows {
        let i1: usize = field(path, *line, rec, 0, "i1")?;
        let i2: usize = field(path, *line, rec, 1, "i2")?;
        let t1 = real(path, *line, rec, 2, "t1")?;
        let t2 = real(path, *line, rec, 3, "t2")?;
        let re = real(path, *line, rec, 4, "re")?;
        let im = real(path, *line, rec, 5, "im")?;
        if let Some(prev) = first_row.insert((i1, i2), *line) {
            return Err(Error::format(
                path,
                format!("rows {prev} and {line} both hold grid point ({i1}, {i2})"),
            ));
        }
        points.push(SamplingPoint { i1, i2, t1, t2 });
        values.push(Complex64::new(re, im));
    }
    let n1 = points.iter().map(|p| p.i1).max().unwrap_or(0) + 1;
    let n2 = points.iter().map(|p| p.i2).max().unwrap_or(0) + 1;
    let spacing = |idx: fn(&SamplingPoint) -> (usize, f64)| {
        points
            .iter()
            .map(idx)
            .find(|&(i, _)| i > 0)
            .map_or(1.0, |(i, t)| t / i as f64)
    };
    let dt = (spacing(|p| (p.i1, p.t1)), spacing(|p| (p.i2, p.t2)));
    if !(dt.0 > 0.0 && dt.1 > 0.0) {
        return Err(Error::format(path, "sample times must grow with the grid index"));
    }
    let scheme = SamplingScheme::new(points, (n1, n2), dt).map_err(|e| Error::format(path, e.to_string()))?;
    SampledSignal::new(scheme, values)
}

/// Same as [`read_samples`], but placed inside the given enclosing grid.
pub fn read_samples_on_grid(path: &Path, grid_shape: (usize, usize)) -> Result<SampledSignal> {
    let s = read_samples(path)?;
    let (n1, n2) = s.scheme.grid_shape();
    if n1 > grid_shape.0 || n2 > grid_shape.1 {
        return Err(Error::format(
            path,
            format!(
                "samples span {n1}x{n2}, larger than the {}x{} grid",
                grid_shape.0, grid_shape.1
            ),
        ));
    }
    let scheme = SamplingScheme::new(s.scheme.points().to_vec(), grid_shape, s.scheme.dt())?;
    SampledSignal::new(scheme, s.values)
}

pub fn write_components(path: &Path, comps: &ComponentSet) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(COMPONENTS_HEADER).map_err(|e| csv_err(path, e))?;
    for c in comps.iter() {
        w.write_record([
            fmt_real(c.omega1),
            fmt_real(c.omega2),
            fmt_real(c.beta1),
            fmt_real(c.beta2),
            fmt_real(c.amplitude.re),
            fmt_real(c.amplitude.im),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn read_components(path: &Path) -> Result<ComponentSet> {
    let rows = read_table(path, &COMPONENTS_HEADER)?;
    let mut comps = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let v: Vec<f64> = COMPONENTS_HEADER
            .iter()
            .enumerate()
            .map(|(col, name)| real(path, *line, rec, col, name))
            .collect::<Result<_>>()?;
        comps.push(Component::new(v[0], v[1], v[2], v[3], Complex64::new(v[4], v[5])));
    }
    Ok(ComponentSet::new(comps))
}

pub fn write_spectrum(path: &Path, spectrum: &SpectrumGrid) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SPECTRUM_HEADER).map_err(|e| csv_err(path, e))?;
    let (n1, n2) = spectrum.shape();
    for i in 0..n1 {
        for j in 0..n2 {
            let v = spectrum.at(i, j);
            w.write_record([
                fmt_real(spectrum.omega1_axis[i]),
                fmt_real(spectrum.omega2_axis[j]),
                fmt_real(v.re),
                fmt_real(v.im),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

/// Reads a spectrum written row-major by [`write_spectrum`].
pub fn read_spectrum(path: &Path) -> Result<SpectrumGrid> {
    let rows = read_table(path, &SPECTRUM_HEADER)?;
    let mut axis1: Vec<f64> = Vec::new();
    let mut axis2: Vec<f64> = Vec::new();
    let mut values = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let w1 = real(path, *line, rec, 0, "omega1")?;
        let w2 = real(path, *line, rec, 1, "omega2")?;
        if axis1.last() != Some(&w1) {
            axis1.push(w1);
        }
        if axis1.len() == 1 {
            axis2.push(w2);
        }
        values.push(Complex64::new(real(path, *line, rec, 2, "re")?, real(path, *line, rec, 3, "im")?));
    }
    if axis1.len() * axis2.len() != values.len() {
        return Err(Error::format(path, "rows do not form a complete row-major grid"));
    }
    SpectrumGrid::new(axis1, axis2, values).map_err(|e| Error::format(path, e.to_string()))
}

/// Per-trial matched parameters, one row per truth/estimate pair.
pub fn write_trials(path: &Path, outcomes: &[TrialOutcome]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(TRIALS_HEADER).map_err(|e| csv_err(path, e))?;
    for (trial, o) in outcomes.iter().enumerate() {
        for (k, &(ti, ei)) in o.pairing.pairs.iter().enumerate() {
            let t = &o.truth.components()[ti];
            let e = &o.estimate.components()[ei];
            w.write_record([
                trial.to_string(),
                k.to_string(),
                fmt_real(t.omega1),
                fmt_real(t.omega2),
                fmt_real(e.omega1),
                fmt_real(e.omega2),
                fmt_real(t.beta1),
                fmt_real(t.beta2),
                fmt_real(e.beta1),
                fmt_real(e.beta2),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt_real)
}

pub fn write_results(path: &Path, result: &CampaignResult) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(RESULTS_HEADER).map_err(|e| csv_err(path, e))?;
    for c in &result.cells {
        w.write_record([
            c.method.name().to_string(),
            c.fraction.to_string(),
            c.trials.to_string(),
            c.failures.to_string(),
            optional(c.frequency.as_ref().map(|s| s.rmse)),
            optional(c.damping.as_ref().map(|s| s.rmse)),
            format!("{:.3}", c.seconds),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Slices of one measurement, indexed by population time.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSeries {
    pub slices: Vec<(f64, SampledSignal)>,
}

impl DatasetSeries {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

/// Loads every slice listed in a manifest, or in `manifest.csv` when `path`
/// is a directory.
pub fn read_series(path: &Path) -> Result<DatasetSeries> {
    let manifest: PathBuf = if path.is_dir() {
        path.join("manifest.csv")
    } else {
        path.to_path_buf()
    };
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let rows = read_table(&manifest, &MANIFEST_HEADER)?;
    if rows.is_empty() {
        return Err(Error::format(&manifest, "manifest lists no slices"));
    }
    let mut slices: Vec<(f64, SampledSignal)> = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let t = real(&manifest, *line, rec, 0, "population_time")?;
        if let Some((prev, _)) = slices.last() {
            if t <= *prev {
                return Err(Error::format(
                    &manifest,
                    format!("row {line}: population time {t} does not increase (previous {prev})"),
                ));
            }
        }
        let file = rec.get(1).unwrap_or("");
        let signal = read_samples(&base.join(file))?;
        if let Some((_, first)) = slices.first() {
            if first.scheme.grid_shape() != signal.scheme.grid_shape() {
                let (a, b) = first.scheme.grid_shape();
                let (c, d) = signal.scheme.grid_shape();
                return Err(Error::format(
                    &manifest,
                    format!("row {line}: slice '{file}' spans a {c}x{d} grid, earlier slices {a}x{b}"),
                ));
            }
        }
        slices.push((t, signal));
    }
    Ok(DatasetSeries { slices })
}

/// Writes each slice next to the manifest as `slice_<n>.csv`.
pub fn write_series(dir: &Path, series: &DatasetSeries) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = dir.join("manifest.csv");
    let mut w = create(&manifest)?;
    w.write_record(MANIFEST_HEADER).map_err(|e| csv_err(&manifest, e))?;
    for (n, (t, signal)) in series.slices.iter().enumerate() {
        let name = format!("slice_{n:03}.csv");
        write_samples(&dir.join(&name), signal)?;
        w.write_record([fmt_real(*t), name]).map_err(|e| csv_err(&manifest, e))?;
    }
    finish(&manifest, w)
}
