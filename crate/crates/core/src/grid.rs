//! Uniform periodic grids on `[-L, L)^d`, scaled discrete Fourier transforms,
//! rectangle-rule quadrature and spectral differentiation.
//!
//! Fields are stored row-major (last axis fastest). The forward transform
//! approximates `f̂(ξ) = ∫ f(x) e^{-iξ·x} dx` and the inverse recovers grid
//! values from those coefficients, so that
//! `∫|f|² = (2π)^{-d} Σ|f̂|² (Δk)^d` holds exactly on the grid.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use num_traits::{Float, FloatConst};
use rustfft::{Fft, FftNum, FftPlanner};

use crate::error::GridError;

/// Floating-point scalar usable by the spectral core (`f32` or `f64`).
pub trait Scalar: FftNum + Float + FloatConst + Default {}

impl<T: FftNum + Float + FloatConst + Default> Scalar for T {}

pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from(x).expect("finite value representable in scalar type")
}

/// One periodic axis `[-L, L)` sampled at `N` points.
#[derive(Clone, Debug)]
pub struct Axis<T> {
    half_extent: T,
    points: usize,
    spacing: T,
    coords: Vec<T>,
    wavenumbers: Vec<T>,
    deriv_wavenumbers: Vec<T>,
}

impl<T: Scalar> Axis<T> {
    fn new(half_extent: T, points: usize) -> Self {
        let n = T::from(points).unwrap();
        let two = cast::<T>(2.0);
        let spacing = two * half_extent / n;
        let coords = (0..points)
            .map(|j| -half_extent + T::from(j).unwrap() * spacing)
            .collect();
        let base = T::PI() / half_extent;
        let wavenumbers: Vec<T> = (0..points)
            .map(|j| base * T::from(signed_index(j, points)).unwrap())
            .collect();
        let mut deriv_wavenumbers = wavenumbers.clone();
        deriv_wavenumbers[points / 2] = T::zero();
        Self {
            half_extent,
            points,
            spacing,
            coords,
            wavenumbers,
            deriv_wavenumbers,
        }
    }

    pub fn half_extent(&self) -> T {
        self.half_extent
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Node coordinates `x_j = -L + j h`.
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    /// Wavenumbers `π j / L` in DFT ordering (the Nyquist entry is `-π N / 2L`).
    pub fn wavenumbers(&self) -> &[T] {
        &self.wavenumbers
    }

    /// Wavenumbers with the Nyquist entry set to zero, used for odd multipliers.
    pub fn deriv_wavenumbers(&self) -> &[T] {
        &self.deriv_wavenumbers
    }

    /// Spacing of the wavenumber lattice, `π / L`.
    pub fn dual_spacing(&self) -> T {
        T::PI() / self.half_extent
    }

    /// Index of the Nyquist mode in DFT ordering.
    pub fn nyquist_index(&self) -> usize {
        self.points / 2
    }
}

/// DFT-order index to signed frequency index.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Transform direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Uniform periodic tensor grid in one to three dimensions.
#[derive(Clone)]
pub struct Grid<T: Scalar> {
    axes: Vec<Axis<T>>,
    shape: Vec<usize>,
    len: usize,
    forward_plans: Vec<Arc<dyn Fft<T>>>,
    inverse_plans: Vec<Arc<dyn Fft<T>>>,
    /// `(-1)^{Σ j_a}` per node, the phase linking the DFT to `[-L, L)`.
    checkerboard: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("shape", &self.shape)
            .field(
                "half_extents",
                &self.axes.iter().map(|a| a.half_extent).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl<T: Scalar> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.half_extent == b.half_extent)
    }
}

/// Build a grid of dimension `dim`; `extents` and `points` hold one entry per axis
/// or a single entry broadcast to all axes.
pub fn make_grid<T: Scalar>(dim: usize, extents: &[T], points: &[usize]) -> Result<Grid<T>, GridError> {
    if !(1..=3).contains(&dim) {
        return Err(GridError::Dimension(dim));
    }
    let pick = |v: usize, name: &'static str, len: usize| -> Result<usize, GridError> {
        match len {
            1 => Ok(0),
            l if l == dim => Ok(v),
            l => Err(GridError::AxisCount { name, expected: dim, found: l }),
        }
    };
    let mut ext = Vec::with_capacity(dim);
    let mut pts = Vec::with_capacity(dim);
    for a in 0..dim {
        ext.push(extents[pick(a, "extents", extents.len())?]);
        pts.push(points[pick(a, "points", points.len())?]);
    }
    Grid::new(&ext, &pts)
}

impl<T: Scalar> Grid<T> {
    /// Grid with `extents[a] = L_a` and `points[a] = N_a`.
    pub fn new(extents: &[T], points: &[usize]) -> Result<Self, GridError> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if points.len() != dim {
            return Err(GridError::AxisCount { name: "points", expected: dim, found: points.len() });
        }
        for (a, (&l, &n)) in extents.iter().zip(points).enumerate() {
            if !(l > T::zero()) || !l.is_finite() {
                return Err(GridError::Extent { axis: a, value: l.to_f64().unwrap_or(f64::NAN) });
            }
            if n < 8 || n % 2 != 0 {
                return Err(GridError::Points { axis: a, value: n });
            }
        }
        let axes: Vec<Axis<T>> = extents.iter().zip(points).map(|(&l, &n)| Axis::new(l, n)).collect();
        let shape = points.to_vec();
        let len = shape.iter().product();
        let mut planner = FftPlanner::new();
        let forward_plans = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse_plans = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let mut grid = Self {
            axes,
            shape,
            len,
            forward_plans,
            inverse_plans,
            checkerboard: Vec::new(),
        };
        grid.checkerboard = (0..len)
            .map(|i| {
                let idx = grid.unravel(i);
                if idx.iter().sum::<usize>() % 2 == 0 {
                    T::one()
                } else {
                    -T::one()
                }
            })
            .collect();
        Ok(grid)
    }

    /// Same extent and point count on every axis.
    pub fn cubic(dim: usize, half_extent: T, points: usize) -> Result<Self, GridError> {
        make_grid(dim, &[half_extent], &[points])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, a: usize) -> &Axis<T> {
        &self.axes[a]
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn min_spacing(&self) -> T {
        self.axes.iter().map(|a| a.spacing).fold(T::infinity(), T::min)
    }

    /// `h^d`, the rectangle-rule weight.
    pub fn cell_volume(&self) -> T {
        self.axes.iter().map(|a| a.spacing).fold(T::one(), |p, h| p * h)
    }

    /// `(Δk / 2π)^d = Π 1/(2 L_a)`, the weight turning coefficient sums into integrals.
    pub fn spectral_weight(&self) -> T {
        let two = cast::<T>(2.0);
        self.axes.iter().fold(T::one(), |p, a| p / (two * a.half_extent))
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.shape[a + 1];
        }
        s
    }

    /// Multi-index of a flat node index (unused axes are zero).
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    /// Physical coordinates of a node, zero-padded to three components.
    pub fn node_coords(&self, flat: usize) -> [T; 3] {
        let idx = self.unravel(flat);
        let mut x = [T::zero(); 3];
        for (a, axis) in self.axes.iter().enumerate() {
            x[a] = axis.coords[idx[a]];
        }
        x
    }

    /// Wavevector of a node in DFT ordering, zero-padded to three components.
    pub fn node_wavevector(&self, flat: usize) -> [T; 3] {
        let idx = self.unravel(flat);
        let mut k = [T::zero(); 3];
        for (a, axis) in self.axes.iter().enumerate() {
            k[a] = axis.wavenumbers[idx[a]];
        }
        k
    }

    /// Wavevector with Nyquist components zeroed. Every symbol table is evaluated
    /// here so that real fields stay real under any multiplier.
    pub fn node_symmetric_wavevector(&self, flat: usize) -> [T; 3] {
        let idx = self.unravel(flat);
        let mut k = [T::zero(); 3];
        for (a, axis) in self.axes.iter().enumerate() {
            k[a] = axis.deriv_wavenumbers[idx[a]];
        }
        k
    }

    /// Table of `|ξ|²` (full wavenumbers) per node.
    pub fn k2_table(&self) -> Vec<T> {
        (0..self.len)
            .map(|i| {
                let k = self.node_wavevector(i);
                k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
            })
            .collect()
    }

    /// Fraction of spectral mass beyond two thirds of the largest wavenumber
    /// on any axis.
    pub fn spectral_tail_fraction(&self, spec: &[Complex<T>]) -> f64 {
        let cut: Vec<T> = self
            .axes
            .iter()
            .map(|a| a.wavenumbers[a.nyquist_index()].abs() * cast(2.0 / 3.0))
            .collect();
        let (mut total, mut tail) = (0.0, 0.0);
        for (i, c) in spec.iter().enumerate() {
            let w = c.norm_sqr().to_f64().unwrap_or(f64::NAN);
            total += w;
            let k = self.node_wavevector(i);
            if (0..self.dim()).any(|a| k[a].abs() > cut[a]) {
                tail += w;
            }
        }
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }

    /// Table of a coordinate-dependent function.
    pub fn tabulate<F: FnMut([T; 3]) -> T>(&self, f: F) -> Vec<T> {
        self.node_coords_iter().map(f).collect()
    }

    /// Node coordinates in storage order; cheaper than repeated `node_coords`.
    pub fn node_coords_iter(&self) -> impl Iterator<Item = [T; 3]> + '_ {
        let d = self.dim();
        let mut idx = [0usize; 3];
        (0..self.len).map(move |_| {
            let mut x = [T::zero(); 3];
            for a in 0..d {
                x[a] = self.axes[a].coords[idx[a]];
            }
            // Odometer increment, last axis fastest.
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < self.shape[a] {
                    break;
                }
                idx[a] = 0;
            }
            x
        })
    }

    /// Table of `|x|²` per node.
    pub fn radius2_table(&self) -> Vec<T> {
        self.tabulate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    }

    fn check_len(&self, n: usize) -> Result<(), GridError> {
        if n == self.len {
            Ok(())
        } else {
            Err(GridError::SizeMismatch { expected: self.len, found: n })
        }
    }

    /// Unnormalized DFT along every axis, in place.
    pub fn dft_in_place(&self, data: &mut [Complex<T>], direction: Direction) {
        assert_eq!(data.len(), self.len, "field length does not match grid");
        let plans = match direction {
            Direction::Forward => &self.forward_plans,
            Direction::Inverse => &self.inverse_plans,
        };
        let strides = self.strides();
        for a in 0..self.dim() {
            fft_along_axis(data, self.shape[a], strides[a], plans[a].as_ref());
        }
    }

    /// Scaled forward transform in place: values become `f̂(ξ_k)`.
    pub fn forward_in_place(&self, data: &mut [Complex<T>]) {
        self.dft_in_place(data, Direction::Forward);
        let h = self.cell_volume();
        for (c, &s) in data.iter_mut().zip(&self.checkerboard) {
            *c = *c * (s * h);
        }
    }

    /// Scaled inverse transform in place: coefficients become grid values.
    pub fn inverse_in_place(&self, data: &mut [Complex<T>]) {
        let w = self.spectral_weight();
        for (c, &s) in data.iter_mut().zip(&self.checkerboard) {
            *c = *c * (s * w);
        }
        self.dft_in_place(data, Direction::Inverse);
    }

    pub fn forward(&self, field: &[Complex<T>]) -> Result<Vec<Complex<T>>, GridError> {
        self.check_len(field.len())?;
        let mut out = field.to_vec();
        self.forward_in_place(&mut out);
        Ok(out)
    }

    pub fn inverse(&self, coeffs: &[Complex<T>]) -> Result<Vec<Complex<T>>, GridError> {
        self.check_len(coeffs.len())?;
        let mut out = coeffs.to_vec();
        self.inverse_in_place(&mut out);
        Ok(out)
    }

    /// Forward transform of a real field.
    pub fn forward_real(&self, field: &[T]) -> Result<Vec<Complex<T>>, GridError> {
        self.check_len(field.len())?;
        let mut out: Vec<Complex<T>> = field.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward_in_place(&mut out);
        Ok(out)
    }

    /// Rectangle rule `h^d Σ f`.
    pub fn integrate(&self, field: &[T]) -> Result<T, GridError> {
        self.check_len(field.len())?;
        Ok(self.integrate_unchecked(field))
    }

    pub(crate) fn integrate_unchecked(&self, field: &[T]) -> T {
        field.iter().fold(T::zero(), |s, &v| s + v) * self.cell_volume()
    }

    pub fn integrate_complex(&self, field: &[Complex<T>]) -> Result<Complex<T>, GridError> {
        self.check_len(field.len())?;
        let s = field.iter().fold(Complex::new(T::zero(), T::zero()), |s, &v| s + v);
        Ok(s * self.cell_volume())
    }

    /// `∫|f|²`.
    pub fn norm2(&self, field: &[Complex<T>]) -> T {
        field.iter().fold(T::zero(), |s, v| s + v.norm_sqr()) * self.cell_volume()
    }

    /// `(2π)^{-d} Σ |f̂|² (Δk)^d`.
    pub fn spectral_norm2(&self, coeffs: &[Complex<T>]) -> T {
        coeffs.iter().fold(T::zero(), |s, v| s + v.norm_sqr()) * self.spectral_weight()
    }

    /// Multiply coefficients of `field` by `m(node)` and transform back.
    pub fn apply_multiplier<F>(&self, field: &[Complex<T>], mut m: F) -> Result<Vec<Complex<T>>, GridError>
    where
        F: FnMut(usize) -> Complex<T>,
    {
        let mut spec = self.forward(field)?;
        for (i, c) in spec.iter_mut().enumerate() {
            *c = *c * m(i);
        }
        self.inverse_in_place(&mut spec);
        Ok(spec)
    }

    /// Spectral partial derivatives, one field per axis (Nyquist multiplier zero).
    pub fn gradient(&self, field: &[Complex<T>]) -> Result<Vec<Vec<Complex<T>>>, GridError> {
        let spec = self.forward(field)?;
        Ok((0..self.dim()).map(|a| self.derivative_from_spectrum(&spec, a)).collect())
    }

    /// `∂_a f` given `f̂`.
    pub fn derivative_from_spectrum(&self, spec: &[Complex<T>], axis: usize) -> Vec<Complex<T>> {
        let stride = self.strides()[axis];
        let n = self.shape[axis];
        let ks = &self.axes[axis].deriv_wavenumbers;
        let mut d: Vec<Complex<T>> = spec
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let k = ks[(i / stride) % n];
                Complex::new(-c.im * k, c.re * k)
            })
            .collect();
        self.inverse_in_place(&mut d);
        d
    }

    /// Real-valued gradient of a real field.
    pub fn gradient_real(&self, field: &[T]) -> Result<Vec<Vec<T>>, GridError> {
        let spec = self.forward_real(field)?;
        Ok((0..self.dim())
            .map(|a| self.derivative_from_spectrum(&spec, a).into_iter().map(|c| c.re).collect())
            .collect())
    }
}

/// Apply a length-`n` transform to every lane along an axis of stride `stride`.
pub(crate) fn fft_along_axis<T: Scalar>(data: &mut [Complex<T>], n: usize, stride: usize, plan: &dyn Fft<T>) {
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
    if stride == 1 {
        plan.process_with_scratch(data, &mut scratch);
        return;
    }
    // Gather a few columns at a time so reads stay contiguous.
    const BATCH: usize = 16;
    let block = n * stride;
    let mut lanes = vec![Complex::new(T::zero(), T::zero()); n * BATCH.min(stride)];
    for chunk in data.chunks_mut(block) {
        let mut s0 = 0;
        while s0 < stride {
            let b = BATCH.min(stride - s0);
            for j in 0..n {
                let row = &chunk[j * stride + s0..j * stride + s0 + b];
                for (s, v) in row.iter().enumerate() {
                    lanes[s * n + j] = *v;
                }
            }
            plan.process_with_scratch(&mut lanes[..b * n], &mut scratch);
            for j in 0..n {
                let row = &mut chunk[j * stride + s0..j * stride + s0 + b];
                for (s, v) in row.iter_mut().enumerate() {
                    *v = lanes[s * n + j];
                }
            }
            s0 += b;
        }
    }
}

/// Complex field on a grid.
#[derive(Clone, Debug)]
pub struct Wavefunction<T: Scalar> {
    grid: Arc<Grid<T>>,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> Wavefunction<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<Complex<T>>) -> Result<Self, GridError> {
        grid.check_len(values.len())?;
        Ok(Self { grid, values })
    }

    /// Sample a function of the node coordinates.
    pub fn from_fn<F: FnMut([T; 3]) -> Complex<T>>(grid: Arc<Grid<T>>, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    /// `∫|ψ|²`.
    pub fn mass(&self) -> T {
        self.grid.norm2(&self.values)
    }

    /// `|ψ|²` per node.
    pub fn density(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Rescale to unit mass; returns the mass before rescaling.
    pub fn normalize(&mut self) -> T {
        let m = self.mass();
        let s = T::one() / m.sqrt();
        for v in &mut self.values {
            *v = *v * s;
        }
        m
    }

    /// Spectral interpolation onto another lattice over the same box.
    pub fn resample(&self, target: &Arc<Grid<T>>) -> Result<Wavefunction<T>, GridError> {
        Ok(self.spectrum().resample(target)?.to_wavefunction())
    }

    pub fn spectrum(&self) -> SpectralField<T> {
        let mut coeffs = self.values.clone();
        self.grid.forward_in_place(&mut coeffs);
        SpectralField { grid: Arc::clone(&self.grid), coeffs }
    }
}

/// Transform coefficients `f̂(ξ_k)` on a grid's wavenumber lattice.
#[derive(Clone, Debug)]
pub struct SpectralField<T: Scalar> {
    grid: Arc<Grid<T>>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Scalar> SpectralField<T> {
    pub fn new(grid: Arc<Grid<T>>, coeffs: Vec<Complex<T>>) -> Result<Self, GridError> {
        grid.check_len(coeffs.len())?;
        Ok(Self { grid, coeffs })
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn to_wavefunction(&self) -> Wavefunction<T> {
        let mut values = self.coeffs.clone();
        self.grid.inverse_in_place(&mut values);
        Wavefunction { grid: Arc::clone(&self.grid), values }
    }

    /// Moves the coefficients onto another lattice over the same box,
    /// zero-padding or truncating. Nyquist modes of the source are dropped.
    pub fn resample(&self, target: &Arc<Grid<T>>) -> Result<SpectralField<T>, GridError> {
        let src = &self.grid;
        if src.dim() != target.dim() {
            return Err(GridError::Incompatible);
        }
        for (a, b) in src.axes().iter().zip(target.axes()) {
            let (la, lb) = (a.half_extent().to_f64().unwrap(), b.half_extent().to_f64().unwrap());
            if (la - lb).abs() > 1e-12 * la {
                return Err(GridError::Incompatible);
            }
        }
        let strides = target.strides();
        let mut out = vec![Complex::new(T::zero(), T::zero()); target.len()];
        'nodes: for (flat, c) in self.coeffs.iter().enumerate() {
            let idx = src.unravel(flat);
            let mut dest = 0;
            for a in 0..src.dim() {
                let (n_src, n_dst) = (src.shape()[a], target.shape()[a]);
                let s = signed_index(idx[a], n_src);
                if 2 * s.unsigned_abs() as usize >= n_src.min(n_dst) {
                    continue 'nodes;
                }
                dest += s.rem_euclid(n_dst as i64) as usize * strides[a];
            }
            out[dest] = *c;
        }
        Ok(SpectralField { grid: Arc::clone(target), coeffs: out })
    }
}
