//! Dimension-reduction harness.
//!
//! Solves the rescaled 3D dipolar equation under strong confinement, projects
//! it on the transverse ground mode and compares with the ε-independent cubic
//! limit equation. Free axes are Fourier, confined axes carry an exact
//! harmonic-oscillator rotation in a discrete Hermite basis, and the dipolar
//! term is a free-space convolution along the confined axes so that the thin
//! ε-dependent structure of its symbol is resolved.
//!
//! This module works in `f64` only.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::Propagator;
use crate::error::ReductionError;
use crate::grid::{fft_along_axis, signed_index, Grid, Wavefunction};
use crate::kernels::{self, DipoleAxis};
use crate::models::{Model, ModelKind, ModelParams, PotentialSpec};
use crate::special::{hermite_functions, linear_fit};

type C64 = Complex<f64>;

/// Which direction is strongly confined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReductionCase {
    /// Confined along z; the limit lives in the (x, y) plane.
    Pancake,
    /// Confined along x and y; the limit lives on the z line.
    Cigar,
}

impl ReductionCase {
    pub fn confined_axes(self) -> &'static [usize] {
        match self {
            ReductionCase::Pancake => &[2],
            ReductionCase::Cigar => &[0, 1],
        }
    }

    pub fn free_axes(self) -> &'static [usize] {
        match self {
            ReductionCase::Pancake => &[0, 1],
            ReductionCase::Cigar => &[2],
        }
    }

    pub fn limit_kind(self) -> ModelKind {
        match self {
            ReductionCase::Pancake => ModelKind::Limit2D,
            ReductionCase::Cigar => ModelKind::Limit1D,
        }
    }

    pub fn mode(self) -> TransverseMode {
        TransverseMode::new(self)
    }
}

/// Ground state of the transverse oscillator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransverseMode {
    pub case: ReductionCase,
    /// `μ₀`: ½ per confined axis.
    pub eigenvalue: f64,
}

impl TransverseMode {
    pub fn new(case: ReductionCase) -> Self {
        Self { case, eigenvalue: 0.5 * case.confined_axes().len() as f64 }
    }

    /// `w₀` at the given confined coordinates.
    pub fn value(&self, coords: &[f64]) -> f64 {
        coords.iter().map(|&z| PI.powf(-0.25) * (-0.5 * z * z).exp()).product()
    }

    /// `w₀` tabulated on a grid spanning the confined coordinates only.
    pub fn tabulate(&self, grid: &Grid<f64>) -> Vec<f64> {
        let d = grid.dim();
        grid.tabulate(|x| self.value(&x[..d]))
    }

    /// Largest nodal value of `|(−½Δ + ½|z|²)w₀ − μ₀w₀|`, Laplacian taken spectrally.
    pub fn eigen_residual(&self, grid: &Grid<f64>) -> Result<f64, ReductionError> {
        if grid.dim() != self.case.confined_axes().len() {
            return Err(ReductionError::TransverseGrid(grid.dim()));
        }
        let w = self.tabulate(grid);
        let wc: Vec<C64> = w.iter().map(|&v| C64::new(v, 0.0)).collect();
        let k2 = grid.k2_table();
        let lap = grid.apply_multiplier(&wc, |i| C64::new(-k2[i], 0.0))?;
        let r2 = grid.radius2_table();
        Ok((0..grid.len())
            .map(|i| (-0.5 * lap[i].re + 0.5 * r2[i] * w[i] - self.eigenvalue * w[i]).abs())
            .fold(0.0, f64::max))
    }
}

/// `|n⊥·ξ⊥ + ε n₃ ξ₃|² / (|ξ⊥|² + ε²ξ₃²)`, the cigar analogue of
/// [`kernels::symbol_rescaled_dip3d`]. Zero at the origin.
pub fn symbol_rescaled_cigar(xi: [f64; 3], n: &DipoleAxis, eps: f64) -> Result<f64, ReductionError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ReductionError::Epsilon(eps));
    }
    let z = eps * xi[2];
    let den = xi[0] * xi[0] + xi[1] * xi[1] + z * z;
    if den == 0.0 {
        return Ok(0.0);
    }
    let d = n.dot([xi[0], xi[1], z]);
    Ok(d * d / den)
}

/// Full nonlocal symbol of the rescaled equation, `3λ` times the case multiplier.
pub fn rescaled_nonlocal_symbol(
    case: ReductionCase,
    xi: [f64; 3],
    n: &DipoleAxis,
    lambda: f64,
    eps: f64,
) -> Result<f64, ReductionError> {
    let m = match case {
        ReductionCase::Pancake => {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(ReductionError::Epsilon(eps));
            }
            kernels::symbol_rescaled_dip3d(xi, n, eps).map_err(|_| ReductionError::Epsilon(eps))?
        }
        ReductionCase::Cigar => symbol_rescaled_cigar(xi, n, eps)?,
    };
    Ok(3.0 * lambda * m)
}

/// Physical and numerical description of a reduction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSetup {
    pub case: ReductionCase,
    pub beta: f64,
    pub lambda: f64,
    pub axis: DipoleAxis,
    /// Trap on the free axes.
    pub potential: PotentialSpec,
    pub free_half_extent: f64,
    pub free_points: usize,
    pub confined_half_extent: f64,
    pub confined_points: usize,
    pub hermite_modes: usize,
    /// Auxiliary-lattice refinement used to tabulate the convolution kernels.
    pub kernel_oversampling: usize,
}

impl ReductionSetup {
    /// Laptop-sized defaults with β = 1, λ = ½ and n along z.
    pub fn desk(case: ReductionCase) -> Self {
        let (confined_half_extent, confined_points, hermite_modes) = match case {
            ReductionCase::Pancake => (8.0, 64, 32),
            ReductionCase::Cigar => (6.0, 32, 16),
        };
        Self {
            case,
            beta: 1.0,
            lambda: 0.5,
            axis: DipoleAxis::Z,
            potential: PotentialSpec::harmonic(),
            free_half_extent: 8.0,
            free_points: 64,
            confined_half_extent,
            confined_points,
            hermite_modes,
            kernel_oversampling: 16,
        }
    }

    pub fn mode(&self) -> TransverseMode {
        self.case.mode()
    }

    /// Grid of the limit equation.
    pub fn free_grid(&self) -> Result<Arc<Grid<f64>>, ReductionError> {
        let d = self.case.free_axes().len();
        Ok(Arc::new(Grid::new(&vec![self.free_half_extent; d], &vec![self.free_points; d])?))
    }

    /// Grid of the rescaled 3D equation, axes in physical order.
    pub fn full_grid(&self) -> Result<Arc<Grid<f64>>, ReductionError> {
        let mut extents = [self.free_half_extent; 3];
        let mut points = [self.free_points; 3];
        for &a in self.case.confined_axes() {
            extents[a] = self.confined_half_extent;
            points[a] = self.confined_points;
        }
        Ok(Arc::new(Grid::new(&extents, &points)?))
    }

    pub fn limit_params(&self) -> ModelParams {
        ModelParams::new(self.case.limit_kind(), self.beta, self.lambda)
            .with_axis(self.axis)
            .with_potential(self.potential.clone())
    }

    /// Cubic coefficient of the limit equation.
    pub fn limit_coefficient(&self) -> Result<f64, ReductionError> {
        Ok(self.limit_params().local_coefficient()?)
    }

    fn validate(&self) -> Result<(), ReductionError> {
        let n = self.confined_points;
        if n < 4 || !n.is_multiple_of(2) {
            return Err(ReductionError::TransverseGrid(n));
        }
        if self.hermite_modes == 0 || self.hermite_modes > n {
            return Err(ReductionError::HermiteModes(self.hermite_modes));
        }
        if self.kernel_oversampling == 0 {
            return Err(ReductionError::TransverseGrid(self.kernel_oversampling));
        }
        self.limit_params().validate()?;
        Ok(())
    }
}

/// Flat offsets of every multi-index over `axes`, last axis fastest.
fn axis_offsets(shape: &[usize], strides: &[usize], axes: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &a in axes {
        out = out.iter().flat_map(|&o| (0..shape[a]).map(move |i| o + i * strides[a])).collect();
    }
    out
}

/// Hermite functions sampled on a uniform line and orthonormalized in the
/// discrete inner product, so the oscillator rotation is exactly unitary.
#[derive(Clone, Debug)]
struct HermiteBasis {
    points: usize,
    modes: usize,
    /// Row-major `points × modes`.
    q: Vec<f64>,
}

impl HermiteBasis {
    fn new(coords: &[f64], spacing: f64, modes: usize) -> Self {
        let points = coords.len();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(points); modes];
        for &z in coords {
            for (k, v) in hermite_functions(modes, z).into_iter().enumerate() {
                cols[k].push(spacing.sqrt() * v);
            }
        }
        // Modified Gram–Schmidt, two passes.
        for k in 0..modes {
            for _ in 0..2 {
                for j in 0..k {
                    let proj: f64 = cols[k].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let (head, tail) = cols.split_at_mut(k);
                    for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                        *a -= proj * b;
                    }
                }
            }
            let norm = cols[k].iter().map(|a| a * a).sum::<f64>().sqrt();
            cols[k].iter_mut().for_each(|a| *a /= norm);
        }
        let mut q = vec![0.0; points * modes];
        for (k, col) in cols.iter().enumerate() {
            for (l, &v) in col.iter().enumerate() {
                q[l * modes + k] = v;
            }
        }
        Self { points, modes, q }
    }

    fn column(&self, k: usize) -> Vec<f64> {
        (0..self.points).map(|l| self.q[l * self.modes + k]).collect()
    }

    /// `line ← line + Q(D − I)Qᵀ line`.
    fn rotate(&self, line: &mut [C64], phase_minus_one: &[C64], coeff: &mut [C64]) {
        coeff.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        for (l, v) in line.iter().enumerate() {
            let row = &self.q[l * self.modes..(l + 1) * self.modes];
            for (c, &q) in coeff.iter_mut().zip(row) {
                *c += v * q;
            }
        }
        for (c, p) in coeff.iter_mut().zip(phase_minus_one) {
            *c *= p;
        }
        for (l, v) in line.iter_mut().enumerate() {
            let row = &self.q[l * self.modes..(l + 1) * self.modes];
            let mut acc = C64::new(0.0, 0.0);
            for (c, &q) in coeff.iter().zip(row) {
                acc += c * q;
            }
            *v += acc;
        }
    }
}

/// Free-space convolution along the confined axes, applied per free
/// wavevector on a zero-padded window.
struct ConfinedConvolution {
    /// Padded length per confined axis.
    padded: Vec<usize>,
    padded_len: usize,
    /// Offset of each confined node inside the padded buffer.
    window: Vec<usize>,
    /// `K̂` per free index, each of length `padded_len`.
    kernels: Vec<Vec<C64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

fn fft_nd(data: &mut [C64], dims: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    let mut stride = data.len();
    for (a, &n) in dims.iter().enumerate() {
        stride /= n;
        fft_along_axis(data, n, stride, plans[a].as_ref());
    }
}

impl ConfinedConvolution {
    fn new(
        grid: &Grid<f64>,
        free_grid: &Grid<f64>,
        setup: &ReductionSetup,
        eps: f64,
        planner: &mut FftPlanner<f64>,
    ) -> Result<Self, ReductionError> {
        let case = setup.case;
        let conf = case.confined_axes();
        let n_conf: Vec<usize> = conf.iter().map(|&a| grid.shape()[a]).collect();
        let h_conf: Vec<f64> = conf.iter().map(|&a| grid.axis(a).spacing()).collect();
        let padded: Vec<usize> = n_conf.iter().map(|n| 2 * n).collect();
        let padded_len: usize = padded.iter().product();
        let pad_strides: Vec<usize> =
            (0..padded.len()).map(|a| padded[a + 1..].iter().product()).collect();
        let window = axis_offsets(&padded, &pad_strides, &(0..padded.len()).collect::<Vec<_>>())
            .into_iter()
            .filter(|&o| {
                (0..padded.len()).all(|a| (o / pad_strides[a]) % padded[a] < n_conf[a])
            })
            .collect();

        let aux: Vec<usize> = padded.iter().map(|p| p * setup.kernel_oversampling).collect();
        let aux_len: usize = aux.iter().product();
        let aux_strides: Vec<usize> = (0..aux.len()).map(|a| aux[a + 1..].iter().product()).collect();
        let aux_k: Vec<Vec<f64>> = aux
            .iter()
            .zip(&h_conf)
            .map(|(&m, &h)| (0..m).map(|j| 2.0 * PI * signed_index(j, m) as f64 / (m as f64 * h)).collect())
            .collect();
        let aux_inv: Vec<_> = aux.iter().map(|&m| planner.plan_fft_inverse(m)).collect();
        let forward: Vec<_> = padded.iter().map(|&m| planner.plan_fft_forward(m)).collect();
        let inverse: Vec<_> = padded.iter().map(|&m| planner.plan_fft_inverse(m)).collect();

        // Cell average of the symbol around the origin at zero free wavevector.
        let n3sq = setup.axis.n3_sq();
        let origin_average = match case {
            ReductionCase::Pancake => n3sq,
            ReductionCase::Cigar => 0.5 * (1.0 - n3sq),
        };

        let free = case.free_axes();
        let mut kernels = Vec::with_capacity(free_grid.len());
        let mut table = vec![C64::new(0.0, 0.0); aux_len];
        for f in 0..free_grid.len() {
            let kf = free_grid.node_symmetric_wavevector(f);
            let mut xi = [0.0; 3];
            for (i, &a) in free.iter().enumerate() {
                xi[a] = kf[i];
            }
            let free_zero = kf.iter().all(|&k| k == 0.0);
            for (j, slot) in table.iter_mut().enumerate() {
                for (c, &a) in conf.iter().enumerate() {
                    xi[a] = aux_k[c][(j / aux_strides[c]) % aux[c]];
                }
                let m = if free_zero && j == 0 {
                    origin_average
                } else {
                    rescaled_nonlocal_symbol(case, xi, &setup.axis, 1.0, eps)? / 3.0
                };
                *slot = C64::new(m, 0.0);
            }
            fft_nd(&mut table, &aux, &aux_inv);
            let scale = 1.0 / aux_len as f64;
            let mut kernel = vec![C64::new(0.0, 0.0); padded_len];
            for (p, slot) in kernel.iter_mut().enumerate() {
                let mut j = 0;
                for c in 0..padded.len() {
                    let l = signed_index((p / pad_strides[c]) % padded[c], padded[c]);
                    j += (l.rem_euclid(aux[c] as i64) as usize) * aux_strides[c];
                }
                *slot = table[j] * scale;
            }
            fft_nd(&mut kernel, &padded, &forward);
            kernels.push(kernel);
        }
        Ok(Self { padded, padded_len, window, kernels, forward, inverse })
    }
}

/// The rescaled 3D problem at one value of ε.
pub struct RescaledProblem {
    setup: ReductionSetup,
    epsilon: f64,
    grid: Arc<Grid<f64>>,
    free_grid: Arc<Grid<f64>>,
    free_offsets: Vec<usize>,
    confined_offsets: Vec<usize>,
    basis: HermiteBasis,
    /// Discrete `w₀` over the confined multi-index, unit norm on the grid.
    ground: Vec<f64>,
    potential: Vec<f64>,
    half_k2: Vec<f64>,
    convolution: ConfinedConvolution,
    free_forward: Vec<Arc<dyn Fft<f64>>>,
    free_inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl RescaledProblem {
    pub fn new(setup: &ReductionSetup, epsilon: f64) -> Result<Self, ReductionError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(ReductionError::Epsilon(epsilon));
        }
        setup.validate()?;
        let grid = setup.full_grid()?;
        let free_grid = setup.free_grid()?;
        let strides = grid.strides();
        let free_offsets = axis_offsets(grid.shape(), &strides, setup.case.free_axes());
        let confined_offsets = axis_offsets(grid.shape(), &strides, setup.case.confined_axes());

        let conf_axis = grid.axis(setup.case.confined_axes()[0]);
        let h = conf_axis.spacing();
        let basis = HermiteBasis::new(conf_axis.coords(), h, setup.hermite_modes);
        let g1: Vec<f64> = basis.column(0).into_iter().map(|q| q / h.sqrt()).collect();
        let n = setup.confined_points;
        let ground: Vec<f64> = match setup.case {
            ReductionCase::Pancake => g1,
            ReductionCase::Cigar => (0..n * n).map(|i| g1[i / n] * g1[i % n]).collect(),
        };

        let potential = setup.potential.evaluate(&free_grid)?;
        let half_k2 = free_grid.k2_table().into_iter().map(|k| 0.5 * k).collect();
        let mut planner = FftPlanner::new();
        let convolution = ConfinedConvolution::new(&grid, &free_grid, setup, epsilon, &mut planner)?;
        let free_forward =
            setup.case.free_axes().iter().map(|&a| planner.plan_fft_forward(grid.shape()[a])).collect();
        let free_inverse =
            setup.case.free_axes().iter().map(|&a| planner.plan_fft_inverse(grid.shape()[a])).collect();
        Ok(Self {
            setup: setup.clone(),
            epsilon,
            grid,
            free_grid,
            free_offsets,
            confined_offsets,
            basis,
            ground,
            potential,
            half_k2,
            convolution,
            free_forward,
            free_inverse,
        })
    }

    pub fn setup(&self) -> &ReductionSetup {
        &self.setup
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn grid(&self) -> &Arc<Grid<f64>> {
        &self.grid
    }

    pub fn free_grid(&self) -> &Arc<Grid<f64>> {
        &self.free_grid
    }

    /// Largest admissible step, `ε²/20`.
    pub fn max_time_step(&self) -> f64 {
        self.epsilon * self.epsilon / 20.0
    }

    /// Discrete ground mode on the confined nodes.
    pub fn ground_mode(&self) -> &[f64] {
        &self.ground
    }

    /// `φ ⊗ w₀` on the 3D grid.
    pub fn tensor(&self, phi: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.grid.len()];
        for (f, &fo) in self.free_offsets.iter().enumerate() {
            for (c, &co) in self.confined_offsets.iter().enumerate() {
                out[fo + co] = phi[f] * self.ground[c];
            }
        }
        out
    }

    /// Discrete Hermite mode `k` on one confined axis, unit norm on that axis.
    pub fn axis_mode(&self, k: usize) -> Result<Vec<f64>, ReductionError> {
        if k >= self.basis.modes {
            return Err(ReductionError::HermiteModes(k));
        }
        let h = self.grid.axis(self.setup.case.confined_axes()[0]).spacing();
        Ok(self.basis.column(k).into_iter().map(|q| q / h.sqrt()).collect())
    }

    fn free_fft(&self, psi: &mut [C64], inverse: bool) {
        let plans = if inverse { &self.free_inverse } else { &self.free_forward };
        let strides = self.grid.strides();
        for (i, &a) in self.setup.case.free_axes().iter().enumerate() {
            fft_along_axis(psi, self.grid.shape()[a], strides[a], plans[i].as_ref());
        }
    }

    fn free_scale(&self) -> f64 {
        1.0 / self.free_grid.len() as f64
    }

    /// `(β−λ)ρ + 3λ K∗ρ + V`, the full multiplicative field.
    pub fn field(&self, psi: &[C64]) -> Vec<f64> {
        let rho: Vec<f64> = psi.iter().map(|v| v.norm_sqr()).collect();
        let (beta, lambda) = (self.setup.beta, self.setup.lambda);
        let mut w: Vec<f64> = rho.iter().map(|r| (beta - lambda) * r).collect();
        if lambda != 0.0 {
            let conv = self.convolve(&rho);
            for (wi, c) in w.iter_mut().zip(&conv) {
                *wi += 3.0 * lambda * c;
            }
        }
        for (f, &fo) in self.free_offsets.iter().enumerate() {
            for &co in &self.confined_offsets {
                w[fo + co] += self.potential[f];
            }
        }
        w
    }

    /// Dipolar convolution `F⁻¹[m ρ̂]` (without the `3λ` factor).
    pub fn convolve(&self, rho: &[f64]) -> Vec<f64> {
        let conv = &self.convolution;
        let mut data: Vec<C64> = rho.iter().map(|&r| C64::new(r, 0.0)).collect();
        self.free_fft(&mut data, false);
        let mut pad = vec![C64::new(0.0, 0.0); conv.padded_len];
        let scale = 1.0 / conv.padded_len as f64;
        for (f, &fo) in self.free_offsets.iter().enumerate() {
            pad.iter_mut().for_each(|p| *p = C64::new(0.0, 0.0));
            for (&co, &wo) in self.confined_offsets.iter().zip(&conv.window) {
                pad[wo] = data[fo + co];
            }
            fft_nd(&mut pad, &conv.padded, &conv.forward);
            for (p, k) in pad.iter_mut().zip(&conv.kernels[f]) {
                *p *= k;
            }
            fft_nd(&mut pad, &conv.padded, &conv.inverse);
            for (&co, &wo) in self.confined_offsets.iter().zip(&conv.window) {
                data[fo + co] = pad[wo] * scale;
            }
        }
        self.free_fft(&mut data, true);
        let s = self.free_scale();
        data.into_iter().map(|v| v.re * s).collect()
    }

    /// Exact flow of `−½Δ_free + ε⁻²H_conf` over `dt`.
    fn drift(&self, psi: &mut [C64], free_phase: &[C64], transverse: &[C64]) {
        self.free_fft(psi, false);
        for (f, &fo) in self.free_offsets.iter().enumerate() {
            let p = free_phase[f];
            for &co in &self.confined_offsets {
                psi[fo + co] *= p;
            }
        }
        self.free_fft(psi, true);
        let s = self.free_scale();
        psi.iter_mut().for_each(|v| *v *= s);

        let shape = self.grid.shape();
        let strides = self.grid.strides();
        let mut line = vec![C64::new(0.0, 0.0); self.basis.points];
        let mut coeff = vec![C64::new(0.0, 0.0); self.basis.modes];
        for &a in self.setup.case.confined_axes() {
            let (n, stride) = (shape[a], strides[a]);
            let outer = psi.len() / (n * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    if stride == 1 {
                        self.basis.rotate(&mut psi[base..base + n], transverse, &mut coeff);
                        continue;
                    }
                    for (l, v) in line.iter_mut().enumerate() {
                        *v = psi[base + l * stride];
                    }
                    self.basis.rotate(&mut line, transverse, &mut coeff);
                    for (l, v) in line.iter().enumerate() {
                        psi[base + l * stride] = *v;
                    }
                }
            }
        }
    }

    /// Strang splitting over `steps` steps of length `dt`, starting from the
    /// field at the current state.
    fn advance(&self, psi: &mut [C64], dt: f64, steps: usize, field: &mut Option<Vec<f64>>) {
        if steps == 0 {
            return;
        }
        let free_phase: Vec<C64> = self.half_k2.iter().map(|&k| C64::from_polar(1.0, -k * dt)).collect();
        let eps2 = self.epsilon * self.epsilon;
        let per_axis = |k: usize| C64::from_polar(1.0, -(k as f64 + 0.5) * dt / eps2);
        let transverse: Vec<C64> = (0..self.basis.modes).map(|k| per_axis(k) - 1.0).collect();
        let kick = |psi: &mut [C64], w: &[f64], fraction: f64| {
            for (v, &wi) in psi.iter_mut().zip(w) {
                *v *= C64::from_polar(1.0, -wi * dt * fraction);
            }
        };
        let w = field.take().unwrap_or_else(|| self.field(psi));
        kick(psi, &w, 0.5);
        for s in 0..steps {
            self.drift(psi, &free_phase, &transverse);
            let w = self.field(psi);
            kick(psi, &w, if s + 1 == steps { 0.5 } else { 1.0 });
            *field = Some(w);
        }
    }

    fn norm(&self, psi: &[C64]) -> f64 {
        (psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// `‖∇ψ‖` with spectral derivatives on every axis.
    pub fn gradient_norm(&self, psi: &[C64]) -> Result<f64, ReductionError> {
        let grads = self.grid.gradient(psi)?;
        Ok(grads.iter().map(|g| self.norm(g).powi(2)).sum::<f64>().sqrt())
    }

    /// `Πψ = (∫ψ w₀) w₀`, without phase unwinding.
    fn transverse_projection(&self, psi: &[C64]) -> Vec<C64> {
        let hc: f64 = self.setup.case.confined_axes().iter().map(|&a| self.grid.axis(a).spacing()).product();
        let amp: Vec<C64> = self
            .free_offsets
            .iter()
            .map(|&fo| {
                self.confined_offsets.iter().zip(&self.ground).map(|(&co, &g)| psi[fo + co] * g).sum::<C64>() * hc
            })
            .collect();
        self.tensor(&amp)
    }

    /// `‖∇_conf(ψ − Πψ)‖` with spectral derivatives along the confined axes.
    fn transverse_gradient(&self, diff: &[C64]) -> Result<f64, ReductionError> {
        let spec = self.grid.forward(diff)?;
        let mut total = 0.0;
        for &a in self.setup.case.confined_axes() {
            let d = self.grid.derivative_from_spectrum(&spec, a);
            total += self.norm(&d).powi(2);
        }
        Ok(total.sqrt())
    }
}

/// Samples of the rescaled 3D solution.
pub struct RescaledTrajectory {
    pub epsilon: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub masses: Vec<f64>,
    pub gradient_norms: Vec<f64>,
}

/// Samples of the limit equation on the free grid.
pub struct LimitTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Wavefunction<f64>>,
}

/// Step counts between consecutive sample times, which must be multiples of `dt`.
fn step_schedule(times: &[f64], dt: f64) -> Result<Vec<usize>, ReductionError> {
    let mut prev = 0.0;
    let mut counts = Vec::with_capacity(times.len());
    for &t in times {
        let span = (t - prev) / dt;
        let steps = span.round();
        if !(t >= prev) || (span - steps).abs() > 1e-6 {
            return Err(ReductionError::TimeMismatch);
        }
        counts.push(steps as usize);
        prev = t;
    }
    Ok(counts)
}

/// Solves the rescaled 3D equation from `φ₀ ⊗ w₀`, sampling at `times`.
pub fn solve_rescaled_3d(
    problem: &RescaledProblem,
    phi0: &Wavefunction<f64>,
    times: &[f64],
    dt: f64,
) -> Result<RescaledTrajectory, ReductionError> {
    let limit = problem.max_time_step();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(ReductionError::TimeStep { dt, limit });
    }
    if phi0.values().len() != problem.free_grid.len() {
        return Err(crate::error::GridError::Incompatible.into());
    }
    let schedule = step_schedule(times, dt)?;
    let mut psi = problem.tensor(phi0.values());
    let mut field = None;
    let mut out = RescaledTrajectory {
        epsilon: problem.epsilon,
        dt,
        times: Vec::new(),
        states: Vec::new(),
        masses: Vec::new(),
        gradient_norms: Vec::new(),
    };
    for (&t, &steps) in times.iter().zip(&schedule) {
        problem.advance(&mut psi, dt, steps, &mut field);
        if psi.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ReductionError::Resolution(t));
        }
        let spec = problem.grid.forward(&psi)?;
        if problem.grid.spectral_tail_fraction(&spec) > 1e-8 {
            return Err(ReductionError::Resolution(t));
        }
        out.times.push(t);
        out.masses.push(problem.norm(&psi).powi(2));
        out.gradient_norms.push(problem.gradient_norm(&psi)?);
        out.states.push(psi.clone());
    }
    Ok(out)
}

/// `φ^ε(t) = e^{iμ₀t/ε²} ∫ψ w₀` on the free grid.
pub fn project_ground_mode(
    problem: &RescaledProblem,
    psi: &[C64],
    t: f64,
) -> Result<Wavefunction<f64>, ReductionError> {
    let mu0 = problem.setup.mode().eigenvalue;
    let eps2 = problem.epsilon * problem.epsilon;
    let unwind = C64::from_polar(1.0, mu0 * t / eps2);
    let hc: f64 =
        problem.setup.case.confined_axes().iter().map(|&a| problem.grid.axis(a).spacing()).product();
    let values = problem
        .free_offsets
        .iter()
        .map(|&fo| {
            let s: C64 =
                problem.confined_offsets.iter().zip(&problem.ground).map(|(&co, &g)| psi[fo + co] * g).sum();
            s * hc * unwind
        })
        .collect();
    Ok(Wavefunction::new(problem.free_grid.clone(), values)?)
}

/// Evolves the limit cubic equation on the free grid, sampling at `times`.
/// Uses the same propagator as the dynamics module.
pub fn limit_gpe(
    setup: &ReductionSetup,
    phi0: &Wavefunction<f64>,
    times: &[f64],
    dt: f64,
) -> Result<LimitTrajectory, ReductionError> {
    let model = Model::new(setup.limit_params(), phi0.grid().clone())?;
    let schedule = step_schedule(times, dt)?;
    let mut prop = Propagator::new(&model, dt)?;
    let mut psi = phi0.values().to_vec();
    let mut states = Vec::with_capacity(times.len());
    for &steps in &schedule {
        prop.advance(&mut psi, steps);
        states.push(Wavefunction::new(phi0.grid().clone(), psi.clone())?);
    }
    Ok(LimitTrajectory { times: times.to_vec(), states })
}

/// Error decomposition at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorSample {
    pub time: f64,
    /// `‖ψ − e^{−iμ₀t/ε²} φ w₀‖`.
    pub total: f64,
    /// `‖ψ − Πψ‖`.
    pub transverse: f64,
    /// `‖φ^ε − φ‖`.
    pub projected: f64,
    /// `‖∇_conf(ψ − Πψ)‖`.
    pub transverse_gradient: f64,
    /// `‖∇ψ‖`.
    pub gradient_norm: f64,
    pub mass: f64,
}

/// Compares the 3D trajectory with the limit trajectory sample by sample.
pub fn reduction_error(
    problem: &RescaledProblem,
    full: &RescaledTrajectory,
    limit: &LimitTrajectory,
) -> Result<Vec<ErrorSample>, ReductionError> {
    if full.times.len() != limit.times.len()
        || full.times.iter().zip(&limit.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(ReductionError::TimeMismatch);
    }
    let mu0 = problem.setup.mode().eigenvalue;
    let eps2 = problem.epsilon * problem.epsilon;
    let mut out = Vec::with_capacity(full.times.len());
    for (i, &t) in full.times.iter().enumerate() {
        let psi = &full.states[i];
        let phi = limit.states[i].values();
        let phase = C64::from_polar(1.0, -mu0 * t / eps2);
        let ansatz = problem.tensor(&phi.iter().map(|v| v * phase).collect::<Vec<_>>());
        let diff: Vec<C64> = psi.iter().zip(&ansatz).map(|(a, b)| a - b).collect();
        let proj = problem.transverse_projection(psi);
        let leak: Vec<C64> = psi.iter().zip(&proj).map(|(a, b)| a - b).collect();
        let phi_eps = project_ground_mode(problem, psi, t)?;
        let dphi: Vec<C64> = phi_eps.values().iter().zip(phi).map(|(a, b)| a - b).collect();
        out.push(ErrorSample {
            time: t,
            total: problem.norm(&diff),
            transverse: problem.norm(&leak),
            projected: problem.free_grid.norm2(&dphi).sqrt(),
            transverse_gradient: problem.transverse_gradient(&leak)?,
            gradient_norm: full.gradient_norms[i],
            mass: full.masses[i],
        });
    }
    Ok(out)
}

/// Least-squares power law `error ≈ C εᵖ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// RMS misfit in log space.
    pub residual: f64,
}

pub fn fit_rate(epsilons: &[f64], errors: &[f64]) -> Result<RateFit, ReductionError> {
    if epsilons.len() != errors.len() || epsilons.len() < 3 {
        return Err(ReductionError::DegenerateFit);
    }
    if epsilons.iter().chain(errors).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(ReductionError::DegenerateFit);
    }
    let lo = epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = epsilons.iter().cloned().fold(0.0, f64::max);
    if hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(ReductionError::DegenerateFit);
    }
    let x: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&x, &y);
    Ok(RateFit { epsilons: epsilons.to_vec(), errors: errors.to_vec(), slope, intercept, residual })
}

/// Every measurement of one ε.
#[derive(Clone, Debug, Serialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub dt: f64,
    pub samples: Vec<ErrorSample>,
}

/// Fits at one sample time.
#[derive(Clone, Debug, Serialize)]
pub struct TimeFit {
    pub time: f64,
    pub total: RateFit,
    pub transverse: RateFit,
    pub transverse_gradient: RateFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionStudy {
    pub case: ReductionCase,
    pub runs: Vec<EpsilonRun>,
    pub fits: Vec<TimeFit>,
}

/// Normalized Gaussian `π^{−d/4} e^{−|x|²/2}` on the free grid.
pub fn gaussian_datum(grid: &Arc<Grid<f64>>) -> Wavefunction<f64> {
    let d = grid.dim();
    let mut w = Wavefunction::from_fn(grid.clone(), |x| {
        let r2: f64 = x[..d].iter().map(|v| v * v).sum();
        C64::new((-0.5 * r2).exp(), 0.0)
    });
    w.normalize();
    w
}

fn run_one(
    setup: &ReductionSetup,
    phi0: &Wavefunction<f64>,
    eps: f64,
    times: &[f64],
) -> Result<EpsilonRun, ReductionError> {
    let problem = RescaledProblem::new(setup, eps)?;
    // Largest step below ε²/20 that lands on the first sample time.
    let first = times[0];
    let dt = first / (first / problem.max_time_step()).ceil();
    let full = solve_rescaled_3d(&problem, phi0, times, dt)?;
    let limit = limit_gpe(setup, phi0, times, dt)?;
    Ok(EpsilonRun { epsilon: eps, dt, samples: reduction_error(&problem, &full, &limit)? })
}

/// Runs every ε in parallel and fits the rates at `T/4`, `T/2` and `T`.
pub fn run_study(
    setup: &ReductionSetup,
    phi0: &Wavefunction<f64>,
    epsilons: &[f64],
    t_final: f64,
) -> Result<ReductionStudy, ReductionError> {
    if !(t_final > 0.0) {
        return Err(ReductionError::TimeMismatch);
    }
    let times = [0.25 * t_final, 0.5 * t_final, t_final];
    let runs = crate::parallel::map_ordered(epsilons, |&eps| run_one(setup, phi0, eps, &times))
        .into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut fits = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let pick = |f: fn(&ErrorSample) -> f64| runs.iter().map(|r| f(&r.samples[i])).collect::<Vec<_>>();
        fits.push(TimeFit {
            time: t,
            total: fit_rate(epsilons, &pick(|s| s.total))?,
            transverse: fit_rate(epsilons, &pick(|s| s.transverse))?,
            transverse_gradient: fit_rate(epsilons, &pick(|s| s.transverse_gradient))?,
        });
    }
    Ok(ReductionStudy { case: setup.case, runs, fits })
}
