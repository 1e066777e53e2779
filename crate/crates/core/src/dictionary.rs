//! Candidate parameter grids and dictionary atoms.
//!
//! An atom is the outer product `exp((i*w1 - b1) t1) o exp((i*w2 - b2) t2)`
//! vectorized over a sampling scheme. The full four-parameter dictionary is
//! never materialized: [`FrequencyDictionary`] covers the undamped
//! frequency grid used by the sparse solver, and damped atoms are evaluated
//! one at a time with [`atom`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{damped_exp, SamplingScheme};

/// Candidate values per parameter axis. Every list is strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryGrid {
    pub omega1_vals: Vec<f64>,
    pub omega2_vals: Vec<f64>,
    pub beta1_vals: Vec<f64>,
    pub beta2_vals: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

impl DictionaryGrid {
    pub fn new(
        omega1_vals: Vec<f64>,
        omega2_vals: Vec<f64>,
        beta1_vals: Vec<f64>,
        beta2_vals: Vec<f64>,
    ) -> Result<Self> {
        for (name, v) in [
            ("omega1", &omega1_vals),
            ("omega2", &omega2_vals),
            ("beta1", &beta1_vals),
            ("beta2", &beta2_vals),
        ] {
            if !strictly_increasing(v) {
                return Err(Error::invalid(format!(
                    "{name} candidates must be non-empty and strictly increasing"
                )));
            }
        }
        if beta1_vals[0] < 0.0 || beta2_vals[0] < 0.0 {
            return Err(Error::invalid("damping candidates must be non-negative"));
        }
        Ok(DictionaryGrid {
            omega1_vals,
            omega2_vals,
            beta1_vals,
            beta2_vals,
        })
    }

    pub fn p1(&self) -> usize {
        self.omega1_vals.len()
    }

    pub fn p2(&self) -> usize {
        self.omega2_vals.len()
    }

    /// Total number of atoms, `P1 * P2 * J1 * J2`.
    pub fn len(&self) -> usize {
        self.p1() * self.p2() * self.beta1_vals.len() * self.beta2_vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The single-damping-value-zero dictionary used by the LASSO path.
    pub fn is_undamped(&self) -> bool {
        self.beta1_vals == [0.0] && self.beta2_vals == [0.0]
    }

    /// Smallest spacing between neighbouring frequency candidates on each axis.
    pub fn frequency_spacing(&self) -> (f64, f64) {
        fn min_gap(v: &[f64]) -> f64 {
            v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
        }
        (min_gap(&self.omega1_vals), min_gap(&self.omega2_vals))
    }

    /// Frequencies of undamped atom `m` (row-major over `omega1`, `omega2`).
    pub fn frequencies_of(&self, m: usize) -> (f64, f64) {
        let p2 = self.p2();
        (self.omega1_vals[m / p2], self.omega2_vals[m % p2])
    }
}

/// Equispaced frequency candidates (endpoints included) on both axes.
/// Damping candidates default to the single value 0.
pub fn build_grid(
    p1: usize,
    p2: usize,
    freq_range: (f64, f64),
    beta_vals: Option<Vec<f64>>,
) -> Result<DictionaryGrid> {
    if p1 < 2 || p2 < 2 {
        return Err(Error::invalid("need at least two frequency candidates per axis"));
    }
    let (lo, hi) = freq_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!("degenerate frequency range [{lo}, {hi}]")));
    }
    let betas = beta_vals.unwrap_or_else(|| vec![0.0]);
    DictionaryGrid::new(
        linspace(lo, hi, p1),
        linspace(lo, hi, p2),
        betas.clone(),
        betas,
    )
}

/// Atom parameters `(omega1, omega2, beta1, beta2)`.
pub type AtomParams = (f64, f64, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub params: AtomParams,
    pub values: Vec<Complex64>,
    /// Euclidean norm before normalization (1 when not normalized).
    pub scale: f64,
}

/// Evaluates one atom on `scheme`.
pub fn atom(params: AtomParams, scheme: &SamplingScheme, normalize: bool) -> Result<Atom> {
    if scheme.is_empty() {
        return Err(Error::Empty("sampling scheme"));
    }
    let (w1, w2, b1, b2) = params;
    if !(b1 >= 0.0 && b2 >= 0.0) {
        return Err(Error::invalid("atom dampings must be non-negative"));
    }
    let mut values: Vec<Complex64> = scheme
        .points()
        .iter()
        .map(|p| damped_exp(w1, b1, p.t1) * damped_exp(w2, b2, p.t2))
        .collect();
    let mut scale = 1.0;
    if normalize {
        scale = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if scale > 0.0 {
            let inv = 1.0 / scale;
            values.iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok(Atom {
        params,
        values,
        scale,
    })
}

/// All undamped atoms of a frequency grid on one sampling scheme, in
/// unit-norm form, with a fast correlation against arbitrary data.
///
/// Correlations are computed separably: samples are grouped by their distinct
/// `t1` values, so the cost is `n*P2 + U*P1*P2` instead of `n*P1*P2`.
#[derive(Debug, Clone)]
pub struct FrequencyDictionary {
    p1: usize,
    p2: usize,
    n: usize,
    /// Group index (distinct t1 value) for each sample.
    group: Vec<usize>,
    groups: usize,
    /// `exp(-i w1_p t1_u)`, laid out `[u][p1]`.
    conj1: Vec<Complex64>,
    /// `exp(-i w2_p t2_s)`, laid out `[s][p2]`.
    conj2: Vec<Complex64>,
    inv_norm: f64,
}

impl FrequencyDictionary {
    pub fn new(grid: &DictionaryGrid, scheme: &SamplingScheme) -> Result<Self> {
        if scheme.is_empty() {
            return Err(Error::Empty("sampling scheme"));
        }
        if !grid.is_undamped() {
            return Err(Error::invalid(
                "frequency dictionary requires an undamped grid (single damping value 0)",
            ));
        }
        let n = scheme.len();
        let (p1, p2) = (grid.p1(), grid.p2());

        let mut t1_vals: Vec<f64> = scheme.points().iter().map(|p| p.t1).collect();
        t1_vals.sort_by(f64::total_cmp);
        t1_vals.dedup();
        let group = scheme
            .points()
            .iter()
            .map(|p| t1_vals.binary_search_by(|v| v.total_cmp(&p.t1)).unwrap())
            .collect();

        let conj1 = t1_vals
            .iter()
            .flat_map(|&t| grid.omega1_vals.iter().map(move |&w| damped_exp(-w, 0.0, t)))
            .collect();
        let conj2 = scheme
            .points()
            .iter()
            .flat_map(|p| grid.omega2_vals.iter().map(move |&w| damped_exp(-w, 0.0, p.t2)))
            .collect();

        Ok(FrequencyDictionary {
            p1,
            p2,
            n,
            group,
            groups: t1_vals.len(),
            conj1,
            conj2,
            inv_norm: 1.0 / (n as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.p1 * self.p2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    /// Norm of every raw (unnormalized) undamped atom: `sqrt(n)`.
    pub fn atom_scale(&self) -> f64 {
        1.0 / self.inv_norm
    }

    /// `<a_m, r>` for every unit-norm atom `m`, row-major over `(p1, p2)`.
    pub fn correlate(&self, r: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(r.len(), self.n);
        let (p1, p2) = (self.p1, self.p2);
        let mut partial = vec![Complex64::new(0.0, 0.0); self.groups * p2];
        for (s, &rs) in r.iter().enumerate() {
            let row = &mut partial[self.group[s] * p2..][..p2];
            let phase = &self.conj2[s * p2..][..p2];
            for (acc, &e) in row.iter_mut().zip(phase) {
                *acc += rs * e;
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); p1 * p2];
        for u in 0..self.groups {
            let row = &partial[u * p2..][..p2];
            for q in 0..p1 {
                let e = self.conj1[u * p1 + q] * self.inv_norm;
                let dst = &mut out[q * p2..][..p2];
                for (acc, &v) in dst.iter_mut().zip(row) {
                    *acc += e * v;
                }
            }
        }
        out
    }

    /// Unit-norm values of atom `m` on the scheme.
    pub fn atom_values(&self, m: usize) -> Vec<Complex64> {
        let (q1, q2) = (m / self.p2, m % self.p2);
        (0..self.n)
            .map(|s| {
                (self.conj1[self.group[s] * self.p1 + q1] * self.conj2[s * self.p2 + q2]).conj()
                    * self.inv_norm
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_uniform_grid, subsample_random};

    fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn grid_endpoints_and_defaults() {
        let g = build_grid(256, 256, (0.1, 0.97), None).unwrap();
        assert_eq!(g.p1(), 256);
        assert_eq!(g.omega1_vals[0], 0.1);
        assert_eq!(g.omega1_vals[255], 0.97);
        assert_eq!(g.beta1_vals, vec![0.0]);
        assert!(g.is_undamped());
        let spacing = (0.97 - 0.1) / 255.0;
        assert!((g.frequency_spacing().0 - spacing).abs() < 1e-12);

        let g = build_grid(2, 2, (0.0, 1.0), None).unwrap();
        assert_eq!(g.omega1_vals, vec![0.0, 1.0]);
        assert!(build_grid(2, 2, (1.0, 1.0), None).is_err());
        assert!(build_grid(1, 2, (0.0, 1.0), None).is_err());
    }

    #[test]
    fn identity_atom_and_normalization() {
        let scheme = make_uniform_grid(3, 4, 1.0, 1.0).unwrap();
        let a = atom((0.0, 0.0, 0.0, 0.0), &scheme, false).unwrap();
        assert!(a.values.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let a = atom((0.7, 0.2, 0.03, 0.01), &scheme, true).unwrap();
        let norm: f64 = a.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(a.scale > 1.0);
    }

    #[test]
    fn damped_atom_scalar_value() {
        let scheme = make_uniform_grid(3, 1, 1.0, 1.0).unwrap();
        let a = atom((0.5, 0.0, 0.02, 0.0), &scheme, false).unwrap();
        let v = a.values[2];
        assert!((v.re - 0.519_116_749_427_757).abs() < 1e-12, "{v}");
        assert!((v.im - 0.808_476_435_556_531_9).abs() < 1e-12, "{v}");
    }

    #[test]
    fn empty_scheme_rejected() {
        let grid = make_uniform_grid(2, 2, 1.0, 1.0).unwrap();
        let empty = subsample_random(&grid, 0, None, 0).unwrap();
        assert!(atom((0.0, 0.0, 0.0, 0.0), &empty, true).is_err());
    }

    #[test]
    fn undamped_atoms_have_unit_modulus() {
        let scheme = make_uniform_grid(5, 7, 1.0, 1.0).unwrap();
        let a = atom((0.3, 0.9, 0.0, 0.0), &scheme, false).unwrap();
        assert!(a.values.iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn bin_aligned_atoms_are_orthogonal() {
        let n = 8;
        let scheme = make_uniform_grid(n, n, 1.0, 1.0).unwrap();
        let bin = 2.0 * std::f64::consts::PI / n as f64;
        let a = atom((bin, 2.0 * bin, 0.0, 0.0), &scheme, true).unwrap();
        let b = atom((3.0 * bin, 2.0 * bin, 0.0, 0.0), &scheme, true).unwrap();
        assert!(inner(&a.values, &b.values).norm() < 1e-12);
    }

    #[test]
    fn batch_correlation_matches_direct_atoms() {
        let full = make_uniform_grid(12, 10, 1.0, 1.0).unwrap();
        let scheme = subsample_random(&full, 37, None, 4).unwrap();
        let grid = build_grid(9, 7, (0.1, 2.0), None).unwrap();
        let dict = FrequencyDictionary::new(&grid, &scheme).unwrap();
        let r: Vec<Complex64> = (0..scheme.len())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let c = dict.correlate(&r);
        for m in 0..grid.len() {
            let (w1, w2) = grid.frequencies_of(m);
            let a = atom((w1, w2, 0.0, 0.0), &scheme, true).unwrap();
            assert!((c[m] - inner(&a.values, &r)).norm() < 1e-12);
            let v = dict.atom_values(m);
            for (x, y) in v.iter().zip(&a.values) {
                assert!((x - y).norm() < 1e-14);
            }
        }
    }
}
