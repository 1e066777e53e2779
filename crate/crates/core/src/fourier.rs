//! Fourier baseline: direct 2D transform of (possibly non-uniform) samples,
//! peak picking and half-maximum widths.
//!
//! Missing samples are simply absent from the sum, which is the same as
//! zero-filling them on the enclosing grid.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{damped_exp, wrap_frequency, Component, ComponentSet, SampledSignal};

/// Default number of evaluation frequencies (and FFT length) per axis.
pub const DEFAULT_AXIS_POINTS: usize = 1024;

/// Complex spectrum on a rectangular frequency grid, row-major over
/// `omega1_axis` then `omega2_axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub omega1_axis: Vec<f64>,
    pub omega2_axis: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl SpectrumGrid {
    pub fn new(omega1_axis: Vec<f64>, omega2_axis: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        for (name, axis) in [("omega1", &omega1_axis), ("omega2", &omega2_axis)] {
            if axis.is_empty() || !axis.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::invalid(format!(
                    "{name} axis must be non-empty and strictly increasing"
                )));
            }
        }
        if values.len() != omega1_axis.len() * omega2_axis.len() {
            return Err(Error::invalid(format!(
                "{} spectrum values for a {}x{} grid",
                values.len(),
                omega1_axis.len(),
                omega2_axis.len()
            )));
        }
        Ok(SpectrumGrid {
            omega1_axis,
            omega2_axis,
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.omega1_axis.len(), self.omega2_axis.len())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.omega2_axis.len() + j]
    }

    #[inline]
    pub fn power(&self, i: usize, j: usize) -> f64 {
        self.at(i, j).norm_sqr()
    }

    /// Indices of the axis cells closest to `(omega1, omega2)`.
    pub fn nearest_cell(&self, omega1: f64, omega2: f64) -> (usize, usize) {
        (nearest(&self.omega1_axis, omega1), nearest(&self.omega2_axis, omega2))
    }
}

fn nearest(axis: &[f64], w: f64) -> usize {
    let idx = axis.partition_point(|&a| a < w);
    if idx == 0 {
        0
    } else if idx == axis.len() {
        axis.len() - 1
    } else if (axis[idx] - w).abs() < (w - axis[idx - 1]).abs() {
        idx
    } else {
        idx - 1
    }
}

/// `n` equispaced frequencies over `[0, 2*pi/dt)`, the FFT bin frequencies.
pub fn bin_axis(n: usize, dt: f64) -> Vec<f64> {
    let step = TAU / (n as f64 * dt);
    (0..n).map(|i| i as f64 * step).collect()
}

/// `X(w1, w2) = sum_s x(s) exp(-i w1 t1 - i w2 t2)` over the available samples.
pub fn dtft2(signal: &SampledSignal, omega1_axis: &[f64], omega2_axis: &[f64]) -> Result<SpectrumGrid> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    if omega1_axis.is_empty() || omega2_axis.is_empty() {
        return Err(Error::Empty("frequency axis"));
    }
    let points = signal.scheme.points();
    let mut t1_vals: Vec<f64> = points.iter().map(|p| p.t1).collect();
    t1_vals.sort_by(f64::total_cmp);
    t1_vals.dedup();

    let a2 = omega2_axis.len();
    // inner transform over t2, one row per distinct t1
    let mut partial = vec![Complex64::new(0.0, 0.0); t1_vals.len() * a2];
    for (p, &x) in points.iter().zip(&signal.values) {
        let u = t1_vals.binary_search_by(|v| v.total_cmp(&p.t1)).unwrap();
        let row = &mut partial[u * a2..][..a2];
        for (acc, &w) in row.iter_mut().zip(omega2_axis) {
            *acc += x * damped_exp(-w, 0.0, p.t2);
        }
    }
    let mut values = vec![Complex64::new(0.0, 0.0); omega1_axis.len() * a2];
    values
        .par_chunks_mut(a2)
        .zip(omega1_axis.par_iter())
        .for_each(|(dst, &w1)| {
            for (u, &t1) in t1_vals.iter().enumerate() {
                let e = damped_exp(-w1, 0.0, t1);
                for (acc, &v) in dst.iter_mut().zip(&partial[u * a2..][..a2]) {
                    *acc += e * v;
                }
            }
        });
    SpectrumGrid::new(omega1_axis.to_vec(), omega2_axis.to_vec(), values)
}

/// Zero-filled, zero-padded 2D FFT of a grid-aligned signal. Equal to
/// [`dtft2`] evaluated on [`bin_axis`] frequencies of length `pad1`, `pad2`.
pub fn fft2_padded(signal: &SampledSignal, pad1: usize, pad2: usize) -> Result<SpectrumGrid> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let scheme = &signal.scheme;
    if !scheme.is_grid_aligned() {
        return Err(Error::invalid("FFT path needs samples on the uniform grid"));
    }
    let (n1, n2) = scheme.grid_shape();
    if pad1 < n1 || pad2 < n2 {
        return Err(Error::invalid(format!(
            "padding {pad1}x{pad2} is smaller than the {n1}x{n2} grid"
        )));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); pad1 * pad2];
    let mut used_rows = vec![false; n1];
    for (p, &x) in scheme.points().iter().zip(&signal.values) {
        data[p.i1 * pad2 + p.i2] = x;
        used_rows[p.i1] = true;
    }
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(pad2);
    for (i1, used) in used_rows.iter().enumerate() {
        if *used {
            row_fft.process(&mut data[i1 * pad2..][..pad2]);
        }
    }
    let col_fft = planner.plan_fft_forward(pad1);
    let mut columns = vec![Complex64::new(0.0, 0.0); pad1 * pad2];
    columns.par_chunks_mut(pad1).enumerate().for_each(|(j, col)| {
        for i in 0..n1 {
            col[i] = data[i * pad2 + j];
        }
        col_fft.process(col);
    });
    for j in 0..pad2 {
        for i in 0..pad1 {
            data[i * pad2 + j] = columns[j * pad1 + i];
        }
    }
    let (dt1, dt2) = scheme.dt();
    SpectrumGrid::new(bin_axis(pad1, dt1), bin_axis(pad2, dt2), data)
}

fn neighbours(i: usize, j: usize, n1: usize, n2: usize) -> impl Iterator<Item = (usize, usize)> {
    let i_lo = i.saturating_sub(1);
    let j_lo = j.saturating_sub(1);
    let i_hi = (i + 1).min(n1 - 1);
    let j_hi = (j + 1).min(n2 - 1);
    (i_lo..=i_hi)
        .flat_map(move |a| (j_lo..=j_hi).map(move |b| (a, b)))
        .filter(move |&(a, b)| (a, b) != (i, j))
}

/// Local maxima of `mag` on an `n1 x n2` grid with 8-neighbourhoods.
///
/// A cell qualifies when it is `>=` every neighbour and strictly greater than
/// at least one; among equal neighbours only the first in row-major order
/// counts. Returned as `(i, j)` sorted by descending magnitude, ties by
/// ascending index.
pub(crate) fn local_maxima(mag: &[f64], n1: usize, n2: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let v = mag[i * n2 + j];
            if v <= 0.0 {
                continue;
            }
            let mut higher_than_some = n1 * n2 == 1;
            let mut ok = true;
            for (a, b) in neighbours(i, j, n1, n2) {
                let w = mag[a * n2 + b];
                if w > v || (w == v && (a, b) < (i, j)) {
                    ok = false;
                    break;
                }
                if w < v {
                    higher_than_some = true;
                }
            }
            if ok && higher_than_some {
                out.push((i, j));
            }
        }
    }
    out.sort_by(|&(a, b), &(c, d)| {
        mag[c * n2 + d]
            .total_cmp(&mag[a * n2 + b])
            .then((a, b).cmp(&(c, d)))
    });
    out
}

/// The `k` largest local maxima of `|X|`, as `(omega1, omega2)`.
pub fn pick_peaks(spectrum: &SpectrumGrid, k: usize) -> Result<Vec<(f64, f64)>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let (n1, n2) = spectrum.shape();
    let mag: Vec<f64> = spectrum.values.iter().map(|v| v.norm()).collect();
    let maxima = local_maxima(&mag, n1, n2);
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
        .map(|(i, j)| (spectrum.omega1_axis[i], spectrum.omega2_axis[j]))
        .collect())
}

/// Per-axis full widths at half of the power maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakWidth {
    pub width1: f64,
    pub width2: f64,
    /// A half-maximum crossing fell outside the axis and the width was
    /// clamped to the axis end.
    pub clamped: bool,
}

impl PeakWidth {
    /// Damping estimates `width / 2` under the power-spectrum convention.
    pub fn dampings(&self) -> (f64, f64) {
        (self.width1 / 2.0, self.width2 / 2.0)
    }
}

/// Width of the half-power crossing around index `c` of a 1D profile.
fn slice_width(axis: &[f64], power: &[f64], c: usize) -> (f64, bool) {
    let half = power[c] / 2.0;
    let mut clamped = false;

    let mut left = axis[0];
    let mut i = c;
    loop {
        if i == 0 {
            clamped = true;
            break;
        }
        if power[i - 1] < half {
            let frac = (power[i] - half) / (power[i] - power[i - 1]);
            left = axis[i] - frac * (axis[i] - axis[i - 1]);
            break;
        }
        i -= 1;
    }

    let mut right = axis[axis.len() - 1];
    let mut i = c;
    loop {
        if i + 1 == axis.len() {
            clamped = true;
            break;
        }
        if power[i + 1] < half {
            let frac = (power[i] - half) / (power[i] - power[i + 1]);
            right = axis[i] + frac * (axis[i + 1] - axis[i]);
            break;
        }
        i += 1;
    }
    (right - left, clamped)
}

/// Full width at half power along both axis-aligned slices through `peak`.
pub fn fwhm(spectrum: &SpectrumGrid, peak: (f64, f64)) -> Result<PeakWidth> {
    let (n1, n2) = spectrum.shape();
    let (i, j) = spectrum.nearest_cell(peak.0, peak.1);
    let p = spectrum.power(i, j);
    if p <= 0.0 || neighbours(i, j, n1, n2).any(|(a, b)| spectrum.power(a, b) > p) {
        return Err(Error::NotAPeak {
            omega1: peak.0,
            omega2: peak.1,
        });
    }
    let slice1: Vec<f64> = (0..n1).map(|a| spectrum.power(a, j)).collect();
    let slice2: Vec<f64> = (0..n2).map(|b| spectrum.power(i, b)).collect();
    let (width1, c1) = slice_width(&spectrum.omega1_axis, &slice1, i);
    let (width2, c2) = slice_width(&spectrum.omega2_axis, &slice2, j);
    Ok(PeakWidth {
        width1,
        width2,
        clamped: c1 || c2,
    })
}

/// Moves from the cell nearest `start` uphill in power until reaching a local
/// maximum, giving up after `max_steps` moves.
pub(crate) fn climb_to_peak(
    spectrum: &SpectrumGrid,
    start: (f64, f64),
    max_steps: usize,
) -> Result<(f64, f64)> {
    let (n1, n2) = spectrum.shape();
    let (mut i, mut j) = spectrum.nearest_cell(start.0, start.1);
    for _ in 0..=max_steps {
        let best = neighbours(i, j, n1, n2)
            .max_by(|&(a, b), &(c, d)| spectrum.power(a, b).total_cmp(&spectrum.power(c, d)));
        match best {
            Some((a, b)) if spectrum.power(a, b) > spectrum.power(i, j) => {
                i = a;
                j = b;
            }
            _ => return Ok((spectrum.omega1_axis[i], spectrum.omega2_axis[j])),
        }
    }
    Err(Error::NotAPeak {
        omega1: start.0,
        omega2: start.1,
    })
}

/// Spectrum used by the Fourier estimator: the padded FFT when samples sit on
/// the grid, the direct transform on the default axes otherwise.
pub fn baseline_spectrum(signal: &SampledSignal, pad: usize) -> Result<SpectrumGrid> {
    if signal.scheme.is_grid_aligned() {
        let (n1, n2) = signal.scheme.grid_shape();
        fft2_padded(signal, pad.max(n1), pad.max(n2))
    } else {
        let (dt1, dt2) = signal.scheme.dt();
        dtft2(signal, &bin_axis(pad, dt1), &bin_axis(pad, dt2))
    }
}

/// Fourier-method estimate: the `k` strongest spectral peaks, with dampings
/// taken as half the half-power widths.
pub fn estimate(signal: &SampledSignal, k: usize, pad: usize) -> Result<ComponentSet> {
    let spectrum = baseline_spectrum(signal, pad)?;
    let peaks = pick_peaks(&spectrum, k)?;
    let n = signal.len() as f64;
    let (dt1, dt2) = signal.scheme.dt();
    peaks
        .into_iter()
        .map(|peak| {
            let (b1, b2) = fwhm(&spectrum, peak)?.dampings();
            let (i, j) = spectrum.nearest_cell(peak.0, peak.1);
            let (w1, w2) = (wrap_frequency(peak.0, dt1), wrap_frequency(peak.1, dt2));
            Ok(Component::new(w1, w2, b1, b2, spectrum.at(i, j) / n))
        })
        .collect::<Result<Vec<_>>>()
        .map(ComponentSet::new)
}
