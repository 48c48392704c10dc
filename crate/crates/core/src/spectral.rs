//! Fourier representation of real scalar fields on the periodic torus `[0, 2π)^d`.
//!
//! Coefficients follow the unnormalized-volume convention
//! `f(x) = Σ_k f̂(k) e^{ik·x}`, so the constant field `c` has `f̂(0) = c`.
//! Wavenumbers per axis run over `{-M/2+1, …, M/2}`; storage uses FFT order
//! (index `i` maps to `i` for `i ≤ M/2`, otherwise `i - M`).

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Tolerance on Hermitian defects accepted by [`SpectralField::inverse_transform`],
/// relative to `max(1, max |f̂|)`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error(
        "Hermitian symmetry violated: defect {defect:.3e} between wavenumbers {k:?} and {partner:?}"
    )]
    NotHermitian {
        k: Vec<i64>,
        partner: Vec<i64>,
        defect: f64,
    },
    #[error("projection order {n} exceeds the representable band M/2 = {max}")]
    ProjectionTooFine { n: usize, max: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct Lattice {
    /// Flattened wavevectors, `dimension` entries per grid index.
    wavevectors: Vec<i64>,
    k_squared: Vec<f64>,
    k_max_abs: Vec<i64>,
    /// Index of `-k` for every `k` (modulo the grid).
    partner: Vec<usize>,
}

/// Uniform periodic grid with `points` samples per axis.
#[derive(Clone)]
pub struct TorusGrid {
    dimension: usize,
    points: usize,
    plans: Arc<Plans>,
    lattice: Arc<Lattice>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dimension", &self.dimension)
            .field("points", &self.points)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.points == other.points
    }
}

impl TorusGrid {
    pub fn new(dimension: usize, points: usize) -> Result<Self, SpectralError> {
        if dimension == 0 {
            return Err(SpectralError::InvalidGrid("dimension must be positive".into()));
        }
        if points < 4 || !points.is_multiple_of(2) {
            return Err(SpectralError::InvalidGrid(format!(
                "points per dimension must be even and >= 4, got {points}"
            )));
        }
        let len = points
            .checked_pow(dimension as u32)
            .ok_or_else(|| SpectralError::InvalidGrid("grid too large".into()))?;

        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        };

        let mut wavevectors = Vec::with_capacity(len * dimension);
        let mut k_squared = Vec::with_capacity(len);
        let mut k_max_abs = Vec::with_capacity(len);
        let mut partner = Vec::with_capacity(len);
        let mut digits = vec![0usize; dimension];
        for _ in 0..len {
            let mut k2 = 0.0;
            let mut kmax = 0;
            let mut p = 0usize;
            for &i in &digits {
                let k = wavenumber(i, points);
                wavevectors.push(k);
                k2 += (k * k) as f64;
                kmax = kmax.max(k.abs());
                p = p * points + (points - i) % points;
            }
            k_squared.push(k2);
            k_max_abs.push(kmax);
            partner.push(p);
            increment(&mut digits, points);
        }

        Ok(Self {
            dimension,
            points,
            plans: Arc::new(plans),
            lattice: Arc::new(Lattice {
                wavevectors,
                k_squared,
                k_max_abs,
                partner,
            }),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of grid points, `M^d`.
    pub fn len(&self) -> usize {
        self.lattice.k_squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.points as f64
    }

    /// Largest retained wavenumber under the 2/3 rule, `floor(M/3)`.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.points / 3) as i64
    }

    pub fn nyquist(&self) -> i64 {
        (self.points / 2) as i64
    }

    pub fn wavevector(&self, index: usize) -> &[i64] {
        let d = self.dimension;
        &self.lattice.wavevectors[index * d..(index + 1) * d]
    }

    pub fn k_squared(&self, index: usize) -> f64 {
        self.lattice.k_squared[index]
    }

    pub fn k_max_abs(&self, index: usize) -> i64 {
        self.lattice.k_max_abs[index]
    }

    /// Flat index of the wavevector `-k`.
    pub fn partner(&self, index: usize) -> usize {
        self.lattice.partner[index]
    }

    /// Flat index of a wavevector, if it lies in the grid's band.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dimension {
            return None;
        }
        let m = self.points as i64;
        let mut idx = 0usize;
        for &kj in k {
            if kj <= -m / 2 || kj > m / 2 {
                return None;
            }
            idx = idx * self.points + kj.rem_euclid(m) as usize;
        }
        Some(idx)
    }

    /// Physical coordinates of grid point `index`.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut x = vec![0.0; self.dimension];
        let mut rest = index;
        for j in (0..self.dimension).rev() {
            x[j] = (rest % self.points) as f64 * h;
            rest /= self.points;
        }
        x
    }

    /// Cell volume times the number of points, i.e. `(2π)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * std::f64::consts::PI).powi(self.dimension as i32)
    }

    fn transform_axes(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.points;
        let fft = if inverse {
            &self.plans.inverse
        } else {
            &self.plans.forward
        };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); m];
        for axis in 0..self.dimension {
            let stride = m.pow((self.dimension - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * m;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = data[start + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, value) in line.iter().enumerate() {
                        data[start + i * stride] = *value;
                    }
                }
            }
        }
    }
}

fn wavenumber(i: usize, points: usize) -> i64 {
    if i <= points / 2 {
        i as i64
    } else {
        i as i64 - points as i64
    }
}

fn increment(digits: &mut [usize], base: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return;
        }
        *d = 0;
    }
}

/// A real field held by its Fourier coefficients.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Wraps raw coefficients in FFT order. Symmetry is not enforced here;
    /// [`SpectralField::inverse_transform`] audits it.
    pub fn from_coeffs(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    /// Forward transform of real samples (row-major, last axis fastest).
    pub fn forward_transform(grid: &TorusGrid, values: &[f64]) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SpectralError::NonFinite { index, value });
        }
        Ok(Self::from_values_unchecked(grid, values))
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self, SpectralError> {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.coordinates(i))).collect();
        Self::forward_transform(grid, &values)
    }

    pub(crate) fn from_values_unchecked(grid: &TorusGrid, values: &[f64]) -> Self {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.transform_axes(&mut data, false);
        let scale = 1.0 / grid.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        let mut field = Self { grid: grid.clone(), coeffs: data };
        field.symmetrize();
        field
    }

    /// Projects onto the Hermitian (real-data) subspace in place.
    pub fn symmetrize(&mut self) {
        for i in 0..self.coeffs.len() {
            let p = self.grid.partner(i);
            if p < i {
                continue;
            }
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[p].conj());
            self.coeffs[i] = avg;
            self.coeffs[p] = avg.conj();
        }
    }

    /// Largest `|f̂(k) - conj f̂(-k)|` and the index where it occurs.
    pub fn hermitian_defect(&self) -> (f64, usize) {
        let mut worst = (0.0, 0);
        for (i, c) in self.coeffs.iter().enumerate() {
            let defect = (c - self.coeffs[self.grid.partner(i)].conj()).norm();
            if defect > worst.0 {
                worst = (defect, i);
            }
        }
        worst
    }

    /// Real samples of the field, after auditing Hermitian symmetry.
    pub fn inverse_transform(&self) -> Result<Vec<f64>, SpectralError> {
        let scale = self.max_abs_coeff().max(1.0);
        let (defect, index) = self.hermitian_defect();
        if defect > HERMITIAN_TOLERANCE * scale {
            return Err(SpectralError::NotHermitian {
                k: self.grid.wavevector(index).to_vec(),
                partner: self.grid.wavevector(self.grid.partner(index)).to_vec(),
                defect,
            });
        }
        Ok(self.to_values())
    }

    /// Real part of the inverse transform without the symmetry audit.
    pub(crate) fn to_values(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        self.grid.transform_axes(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient at wavevector `k`, zero when `k` is outside the band.
    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.grid
            .index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    /// Spatial mean, `f̂(0)`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn map_multiplier(&self, mut m: impl FnMut(usize) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * m(i))
            .collect();
        Self {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    fn masked(&self, keep: impl Fn(usize) -> bool) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| if keep(i) { c } else { Complex64::default() })
            .collect();
        Self {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Bessel potential `(1 - Δ)^{exponent/2}`.
    pub fn bessel_multiplier(&self, exponent: f64) -> Self {
        let half = 0.5 * exponent;
        self.map_multiplier(|i| Complex64::new((1.0 + self.grid.k_squared(i)).powf(half), 0.0))
    }

    /// Partial derivative along `axis`. The unmatched Nyquist mode gets a zero multiplier.
    pub fn partial(&self, axis: usize) -> Self {
        let d = self.grid.dimension;
        let nyquist = self.grid.nyquist();
        self.map_multiplier(|i| {
            let k = self.grid.lattice.wavevectors[i * d + axis];
            if k == nyquist {
                Complex64::default()
            } else {
                Complex64::new(0.0, k as f64)
            }
        })
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.grid.dimension).map(|j| self.partial(j)).collect()
    }

    /// Spectral divergence of a vector field given by its components.
    pub fn divergence(components: &[Self]) -> Result<Self, SpectralError> {
        let first = components.first().ok_or(SpectralError::GridMismatch)?;
        if components.len() != first.grid.dimension
            || components.iter().any(|c| c.grid != first.grid)
        {
            return Err(SpectralError::GridMismatch);
        }
        let mut out = Self::zeros(&first.grid);
        for (axis, c) in components.iter().enumerate() {
            out.add_scaled(&c.partial(axis), 1.0)?;
        }
        Ok(out)
    }

    /// `Σ_k (1+|k|²)^s |f̂(k)|²`.
    pub fn sobolev_norm_squared(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (1.0 + self.grid.k_squared(i)).powf(s) * c.norm_sqr())
            .sum()
    }

    /// `(Σ_k (1+|k|²)^s |f̂(k)|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_squared(s).sqrt()
    }

    /// Real part of `Σ_k (1+|k|²)^s f̂(k) conj(ĝ(k))`, the pairing that induces [`Self::sobolev_norm`].
    pub fn sobolev_inner(&self, other: &Self, s: f64) -> Result<f64, SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| (1.0 + self.grid.k_squared(i)).powf(s) * (a * b.conj()).re)
            .sum())
    }

    /// `max_x |u| + max_j max_x |∂_j u|`, maxima over grid points.
    pub fn w1inf_norm(&self) -> f64 {
        let sup = |v: Vec<f64>| v.into_iter().map(f64::abs).fold(0.0, f64::max);
        let value = sup(self.to_values());
        let grad = self
            .gradient()
            .into_iter()
            .map(|g| sup(g.to_values()))
            .fold(0.0, f64::max);
        value + grad
    }

    /// Orthogonal projection onto modes with `|k|_∞ ≤ n`.
    pub fn galerkin_project(&self, n: usize) -> Result<Self, SpectralError> {
        let max = self.grid.points / 2;
        if n > max {
            return Err(SpectralError::ProjectionTooFine { n, max });
        }
        if n == max {
            return Ok(self.clone());
        }
        Ok(self.masked(|i| self.grid.k_max_abs(i) <= n as i64))
    }

    /// 2/3 rule: zeroes every mode with some `|k_j| > floor(M/3)`.
    pub fn dealias(&self) -> Self {
        let cut = self.grid.dealias_cutoff();
        self.masked(|i| self.grid.k_max_abs(i) <= cut)
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map_multiplier(|_| Complex64::new(a, 0.0))
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, other: &Self, a: f64) -> Result<(), SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
        Ok(())
    }

    /// Largest coefficient-wise difference.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Same field on another grid of equal dimension (zero padding or truncation).
    pub fn resample(&self, target: &TorusGrid) -> Result<Self, SpectralError> {
        if target.dimension != self.grid.dimension {
            return Err(SpectralError::GridMismatch);
        }
        let d = self.grid.dimension;
        let src_nyq = self.grid.nyquist();
        let tgt_nyq = target.nyquist();
        let mut out = Self::zeros(target);
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = self.grid.wavevector(i);
            if k.iter().any(|kj| kj.abs() > tgt_nyq) {
                continue;
            }
            // A source Nyquist mode spreads evenly over ±M/2 on a finer grid.
            let split: Vec<usize> = (0..d)
                .filter(|&j| k[j] == src_nyq && src_nyq < tgt_nyq)
                .collect();
            let weight = 0.5f64.powi(split.len() as i32);
            for mask in 0..(1usize << split.len()) {
                let mut kk = k.to_vec();
                for (bit, &j) in split.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        kk[j] = -kk[j];
                    }
                }
                let kk: Vec<i64> = kk
                    .iter()
                    .map(|&kj| if kj == -tgt_nyq { tgt_nyq } else { kj })
                    .collect();
                if let Some(t) = target.index_of(&kk) {
                    out.coeffs[t] += c * weight;
                }
            }
        }
        out.symmetrize();
        Ok(out)
    }

    /// Debug dump: one row per mode with the wavevector, real and imaginary parts.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.dimension;
        let header: Vec<String> = (0..d).map(|j| format!("k{j}")).collect();
        writeln!(w, "{},re,im", header.join(","))?;
        for (i, c) in self.coeffs.iter().enumerate() {
            let k: Vec<String> = self.grid.wavevector(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{}", k.join(","), c.re, c.im)?;
        }
        Ok(())
    }
}

/// Pointwise product of two real sample vectors, returned as a dealiased field.
pub(crate) fn dealiased_product(grid: &TorusGrid, a: &[f64], b: &[f64]) -> SpectralField {
    let values: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    SpectralField::from_values_unchecked(grid, &values).dealias()
}
