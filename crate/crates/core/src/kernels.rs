//! Fourier symbols of the nonlocal interaction operators and their application
//! to densities on periodic grids.
//!
//! Symbols are evaluated in double precision and cast to the grid scalar. On a
//! grid they are sampled at the symmetric wavevector (Nyquist components
//! dropped) so that every multiplier is even under `ξ → -ξ` on the discrete
//! lattice and real fields map to real fields.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::grid::{cast, Grid, Scalar};
use crate::special::{erfcx, erfcx_derivative, exp_e1};

/// Unit vector giving the dipole orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct DipoleAxis([f64; 3]);

impl DipoleAxis {
    pub const Z: Self = Self([0.0, 0.0, 1.0]);

    /// Accepts `n` if `| |n| - 1 | ≤ 1e-12`.
    pub fn new(n: [f64; 3]) -> Result<Self, KernelError> {
        let norm = norm3(n);
        if (norm - 1.0).abs() <= 1e-12 {
            Ok(Self(n))
        } else {
            Err(KernelError::AxisNorm(norm))
        }
    }

    /// Rescale a nonzero vector to unit length.
    pub fn normalized(n: [f64; 3]) -> Result<Self, KernelError> {
        let norm = norm3(n);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(KernelError::AxisNorm(norm));
        }
        Ok(Self([n[0] / norm, n[1] / norm, n[2] / norm]))
    }

    /// Axis with polar angle `theta` from the z-axis in the x–z plane.
    pub fn from_polar(theta: f64) -> Self {
        Self([theta.sin(), 0.0, theta.cos()])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn n3(&self) -> f64 {
        self.0[2]
    }

    pub fn n3_sq(&self) -> f64 {
        self.0[2] * self.0[2]
    }

    /// `n · ξ`.
    pub fn dot(&self, xi: [f64; 3]) -> f64 {
        self.0[0] * xi[0] + self.0[1] * xi[1] + self.0[2] * xi[2]
    }

    /// `n₁ξ₁ + n₂ξ₂`.
    pub fn perp_dot(&self, xi: [f64; 2]) -> f64 {
        self.0[0] * xi[0] + self.0[1] * xi[1]
    }
}

impl TryFrom<[f64; 3]> for DipoleAxis {
    type Error = KernelError;
    fn try_from(n: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(n)
    }
}

impl From<DipoleAxis> for [f64; 3] {
    fn from(n: DipoleAxis) -> Self {
        n.0
    }
}

fn norm3(n: [f64; 3]) -> f64 {
    (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

fn check_eps(eps: f64) -> Result<(), KernelError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Epsilon(eps))
    }
}

/// A symbol value together with whether the zero-mode convention supplied it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolValue {
    pub value: f64,
    pub zero_mode: bool,
}

/// `-1 + 3(n·ξ)²/|ξ|²`, zero at `ξ = 0`.
pub fn symbol_dip3d(xi: [f64; 3], n: &DipoleAxis) -> f64 {
    let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if k2 == 0.0 {
        return 0.0;
    }
    let d = n.dot(xi);
    -1.0 + 3.0 * d * d / k2
}

pub(crate) fn u2d(r: f64, eps: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        erfcx(eps * r / SQRT_2) / r
    }
}

/// Transform of the quasi-2D kernel, `(1/r)·e^{ε²r²/2}·erfc(εr/√2)`.
/// The defining integral diverges at `r = 0`; the value 0 is returned there.
pub fn symbol_u2d(r: f64, eps: f64) -> Result<SymbolValue, KernelError> {
    check_eps(eps)?;
    Ok(SymbolValue {
        value: u2d(r.abs(), eps),
        zero_mode: r == 0.0,
    })
}

/// `r · d/dr Û2D(r)`.
pub(crate) fn u2d_log_derivative(r: f64, eps: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let a = eps / SQRT_2;
    -u2d(r, eps) + a * erfcx_derivative(a * r)
}

pub(crate) fn u1d(xi: f64, eps: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let u = 0.5 * eps * eps * xi * xi;
    SQRT_2 * eps / PI.sqrt() * exp_e1(u)
}

/// Transform of the quasi-1D kernel, `(√2ε/√π)·e^{u}E₁(u)` with `u = ε²ξ²/2`.
/// Zero at `ξ = 0`, where it is only ever used multiplied by `ξ²`.
pub fn symbol_u1d(xi: f64, eps: f64) -> Result<SymbolValue, KernelError> {
    check_eps(eps)?;
    Ok(SymbolValue {
        value: u1d(xi, eps),
        zero_mode: xi == 0.0,
    })
}

/// `ξ d/dξ [−ξ² Û1D(ξ)]`, used by the quasi-1D virial.
pub(crate) fn minus_xi2_u1d_log_derivative(xi: f64, eps: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let u = 0.5 * eps * eps * xi * xi;
    let c = SQRT_2 * eps / PI.sqrt();
    // ξ² f(u) with f = e^u E1(u); ξ d/dξ = 2u d/du, f' = f - 1/u.
    let f = exp_e1(u);
    let xi2 = xi * xi;
    -c * (2.0 * xi2 * f + xi2 * 2.0 * u * (f - 1.0 / u))
}

/// `n_ξ(ξ) = (n₁ξ₁ + n₂ξ₂)² − n₃²|ξ|²`.
pub fn symbol_aniso2d(xi: [f64; 2], n: &DipoleAxis) -> f64 {
    let d = n.perp_dot(xi);
    d * d - n.n3_sq() * (xi[0] * xi[0] + xi[1] * xi[1])
}

/// `(n₁ξ₁+n₂ξ₂+n₃ξ₃/ε)² / (ξ₁²+ξ₂²+ξ₃²/ε²)`, zero at `ξ = 0`.
pub fn symbol_rescaled_dip3d(xi: [f64; 3], n: &DipoleAxis, eps: f64) -> Result<f64, KernelError> {
    check_eps(eps)?;
    let z = xi[2] / eps;
    let den = xi[0] * xi[0] + xi[1] * xi[1] + z * z;
    if den == 0.0 {
        return Ok(0.0);
    }
    let d = n.dot([xi[0], xi[1], z]);
    Ok(d * d / den)
}

/// Adaptive quadrature of `(1/π)∫ e^{−ε²s²/2}/(r²+s²) ds` over ℝ.
pub fn u2d_by_quadrature(r: f64, eps: f64) -> Result<f64, KernelError> {
    check_eps(eps)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    // s = r·tanθ turns the integrand into (1/r)e^{-(εr tanθ)²/2} on [0, π/2).
    let a = eps * r;
    let upper = (40.0 / a).atan();
    let half_a2 = 0.5 * a * a;
    let q = quadrature::double_exponential::integrate(
        |t: f64| {
            let tt = t.tan();
            (-half_a2 * tt * tt).exp()
        },
        0.0,
        upper,
        1e-14,
    );
    Ok(2.0 * q.integral / (PI * r))
}

/// Adaptive quadrature of `(√2ε/√π)∫₀^∞ e^{−ε²s/2}/(ξ²+s) ds`.
pub fn u1d_by_quadrature(xi: f64, eps: f64) -> Result<f64, KernelError> {
    check_eps(eps)?;
    if xi == 0.0 {
        return Ok(0.0);
    }
    // s = ξ²(e^y − 1) gives ∫ e^{−u(e^y−1)} dy with u = ε²ξ²/2.
    let u = 0.5 * eps * eps * xi * xi;
    let upper = (1.0 + 60.0 / u).ln();
    let q = quadrature::double_exponential::integrate(
        |y: f64| (-u * y.exp_m1()).exp(),
        0.0,
        upper,
        1e-14,
    );
    Ok(SQRT_2 * eps / PI.sqrt() * q.integral)
}

/// Which base symbol a table samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Dip3D,
    U2dEps,
    FracPoisson2D,
    U1dEps,
    Aniso2D,
    Riesz2D,
    TEpsAlpha,
    RescaledDip3D,
}

/// Even multipliers act as `m(ξ)`, odd ones as `i·m(ξ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// A real multiplier tabulated on a grid's wavenumber lattice.
#[derive(Clone, Debug)]
pub struct KernelSymbol<T: Scalar> {
    grid: Arc<Grid<T>>,
    kind: KernelKind,
    parity: Parity,
    multiplier: Vec<T>,
    epsilon: Option<f64>,
    axis: Option<DipoleAxis>,
    component: Option<usize>,
}

fn require_dim<T: Scalar>(grid: &Grid<T>, dim: usize) -> Result<(), KernelError> {
    if grid.dim() == dim {
        Ok(())
    } else {
        Err(KernelError::Dimension { expected: dim, found: grid.dim() })
    }
}

pub(crate) fn sym_xi<T: Scalar>(grid: &Grid<T>, i: usize) -> [f64; 3] {
    let k = grid.node_symmetric_wavevector(i);
    [
        k[0].to_f64().unwrap(),
        k[1].to_f64().unwrap(),
        k[2].to_f64().unwrap(),
    ]
}

/// Tabulate `f(ξ̃)` over the grid.
pub(crate) fn tabulate_symbol<T: Scalar, F: FnMut([f64; 3]) -> f64>(grid: &Grid<T>, mut f: F) -> Vec<T> {
    (0..grid.len()).map(|i| cast(f(sym_xi(grid, i)))).collect()
}

fn norm_xy(xi: [f64; 3]) -> f64 {
    (xi[0] * xi[0] + xi[1] * xi[1]).sqrt()
}

impl<T: Scalar> KernelSymbol<T> {
    fn build(
        grid: &Arc<Grid<T>>,
        kind: KernelKind,
        parity: Parity,
        multiplier: Vec<T>,
        epsilon: Option<f64>,
        axis: Option<DipoleAxis>,
        component: Option<usize>,
    ) -> Self {
        Self {
            grid: Arc::clone(grid),
            kind,
            parity,
            multiplier,
            epsilon,
            axis,
            component,
        }
    }

    pub fn dip3d(grid: &Arc<Grid<T>>, n: DipoleAxis) -> Result<Self, KernelError> {
        require_dim(grid, 3)?;
        let m = tabulate_symbol(grid, |xi| symbol_dip3d(xi, &n));
        Ok(Self::build(grid, KernelKind::Dip3D, Parity::Even, m, None, Some(n), None))
    }

    pub fn u2d(grid: &Arc<Grid<T>>, eps: f64) -> Result<Self, KernelError> {
        require_dim(grid, 2)?;
        check_eps(eps)?;
        let m = tabulate_symbol(grid, |xi| u2d(norm_xy(xi), eps));
        Ok(Self::build(grid, KernelKind::U2dEps, Parity::Even, m, Some(eps), None, None))
    }

    /// Symbol `1/|ξ|` of `(−Δ)^{−1/2}`.
    pub fn frac_poisson_2d(grid: &Arc<Grid<T>>) -> Result<Self, KernelError> {
        require_dim(grid, 2)?;
        let m = tabulate_symbol(grid, |xi| {
            let r = norm_xy(xi);
            if r == 0.0 {
                0.0
            } else {
                1.0 / r
            }
        });
        Ok(Self::build(grid, KernelKind::FracPoisson2D, Parity::Even, m, None, None, None))
    }

    pub fn u1d(grid: &Arc<Grid<T>>, eps: f64) -> Result<Self, KernelError> {
        require_dim(grid, 1)?;
        check_eps(eps)?;
        let m = tabulate_symbol(grid, |xi| u1d(xi[0], eps));
        Ok(Self::build(grid, KernelKind::U1dEps, Parity::Even, m, Some(eps), None, None))
    }

    pub fn aniso2d(grid: &Arc<Grid<T>>, n: DipoleAxis) -> Result<Self, KernelError> {
        require_dim(grid, 2)?;
        let m = tabulate_symbol(grid, |xi| symbol_aniso2d([xi[0], xi[1]], &n));
        Ok(Self::build(grid, KernelKind::Aniso2D, Parity::Even, m, None, Some(n), None))
    }

    /// Riesz transform `∂_α(−Δ)^{−1/2}`: odd multiplier `i ξ_α/|ξ|`.
    pub fn riesz(grid: &Arc<Grid<T>>, alpha: usize) -> Result<Self, KernelError> {
        require_dim(grid, 2)?;
        check_axis(alpha, 2)?;
        let m = tabulate_symbol(grid, |xi| {
            let r = norm_xy(xi);
            if r == 0.0 {
                0.0
            } else {
                xi[alpha] / r
            }
        });
        Ok(Self::build(grid, KernelKind::Riesz2D, Parity::Odd, m, None, None, Some(alpha)))
    }

    /// `∂_α(U2D ∗ ·)`: odd multiplier `i ξ_α Û2D(|ξ|)`.
    pub fn t_eps(grid: &Arc<Grid<T>>, eps: f64, alpha: usize) -> Result<Self, KernelError> {
        require_dim(grid, 2)?;
        check_eps(eps)?;
        check_axis(alpha, 2)?;
        let m = tabulate_symbol(grid, |xi| xi[alpha] * u2d(norm_xy(xi), eps));
        Ok(Self::build(grid, KernelKind::TEpsAlpha, Parity::Odd, m, Some(eps), None, Some(alpha)))
    }

    /// Nonlocal symbol of the rescaled 3D problem without the `3λ` factor.
    pub fn rescaled_dip3d(grid: &Arc<Grid<T>>, n: DipoleAxis, eps: f64) -> Result<Self, KernelError> {
        require_dim(grid, 3)?;
        check_eps(eps)?;
        let m = tabulate_symbol(grid, |xi| {
            let z = xi[2] / eps;
            let den = xi[0] * xi[0] + xi[1] * xi[1] + z * z;
            if den == 0.0 {
                0.0
            } else {
                let d = n.dot([xi[0], xi[1], z]);
                d * d / den
            }
        });
        Ok(Self::build(grid, KernelKind::RescaledDip3D, Parity::Even, m, Some(eps), Some(n), None))
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn multiplier(&self) -> &[T] {
        &self.multiplier
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn axis(&self) -> Option<DipoleAxis> {
        self.axis
    }

    pub fn component(&self) -> Option<usize> {
        self.component
    }

    /// Apply to a real field and return the real result.
    pub fn apply(&self, field: &[T]) -> Result<Vec<T>, KernelError> {
        let odd = self.parity == Parity::Odd;
        apply_real_multiplier(&self.grid, field, &self.multiplier, odd)
    }
}

fn check_axis(alpha: usize, dim: usize) -> Result<(), KernelError> {
    if alpha < dim {
        Ok(())
    } else {
        Err(KernelError::AxisIndex { axis: alpha, dim })
    }
}

/// Spectral multiplication of a real field, asserting the output is real.
pub fn apply_real_multiplier<T: Scalar>(
    grid: &Grid<T>,
    field: &[T],
    multiplier: &[T],
    odd: bool,
) -> Result<Vec<T>, KernelError> {
    let mut spec = grid.forward_real(field)?;
    if multiplier.len() != spec.len() {
        return Err(crate::error::GridError::SizeMismatch { expected: spec.len(), found: multiplier.len() }.into());
    }
    for (c, &m) in spec.iter_mut().zip(multiplier) {
        *c = if odd {
            Complex::new(-c.im * m, c.re * m)
        } else {
            *c * m
        };
    }
    grid.inverse_in_place(&mut spec);
    let scale = spec.iter().fold(T::zero(), |s, c| s.max(c.re.abs()));
    let imag = spec.iter().fold(T::zero(), |s, c| s.max(c.im.abs()));
    let tol = cast::<T>(1e-10) * scale.max(T::min_positive_value());
    if imag > tol && imag > cast(1e-300) {
        return Err(KernelError::NonReal(imag.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(spec.into_iter().map(|c| c.re).collect())
}

/// Multiplier `−n_ξ(ξ̃)·Û2D(|ξ̃|)` of `(∂_{n⊥n⊥} − n₃²Δ)(U2D ∗ ·)`.
pub fn nonlocal_2di_multiplier<T: Scalar>(grid: &Grid<T>, eps: f64, n: &DipoleAxis) -> Result<Vec<T>, KernelError> {
    require_dim(grid, 2)?;
    check_eps(eps)?;
    Ok(tabulate_symbol(grid, |xi| -symbol_aniso2d([xi[0], xi[1]], n) * u2d(norm_xy(xi), eps)))
}

/// Multiplier `−n_ξ(ξ̃)/|ξ̃|`, zero at the origin.
pub fn nonlocal_2dii_multiplier<T: Scalar>(grid: &Grid<T>, n: &DipoleAxis) -> Result<Vec<T>, KernelError> {
    require_dim(grid, 2)?;
    Ok(tabulate_symbol(grid, |xi| {
        let r = norm_xy(xi);
        if r == 0.0 {
            0.0
        } else {
            -symbol_aniso2d([xi[0], xi[1]], n) / r
        }
    }))
}

/// Multiplier `−ξ̃²·Û1D(ξ̃)` of `∂_zz(U1D ∗ ·)`.
pub fn nonlocal_1d_multiplier<T: Scalar>(grid: &Grid<T>, eps: f64) -> Result<Vec<T>, KernelError> {
    require_dim(grid, 1)?;
    check_eps(eps)?;
    Ok(tabulate_symbol(grid, |xi| -xi[0] * xi[0] * u1d(xi[0], eps)))
}

/// Multiplier `(n·ξ̃)²/|ξ̃|²` of `−∂_nn(−Δ)^{−1}`, zero at the origin.
pub fn dipolar_3d_poisson_multiplier<T: Scalar>(grid: &Grid<T>, n: &DipoleAxis) -> Result<Vec<T>, KernelError> {
    require_dim(grid, 3)?;
    Ok(tabulate_symbol(grid, |xi| {
        let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if k2 == 0.0 {
            0.0
        } else {
            let d = n.dot(xi);
            d * d / k2
        }
    }))
}

/// `(∂_{n⊥n⊥} − n₃²Δ)(U2D ∗ ρ)` on a 2D grid.
pub fn apply_nonlocal_2di<T: Scalar>(grid: &Grid<T>, rho: &[T], eps: f64, n: &DipoleAxis) -> Result<Vec<T>, KernelError> {
    let m = nonlocal_2di_multiplier(grid, eps, n)?;
    apply_real_multiplier(grid, rho, &m, false)
}

/// `(∂_{n⊥n⊥} − n₃²Δ)(−Δ)^{−1/2}ρ` on a 2D grid.
pub fn apply_nonlocal_2dii<T: Scalar>(grid: &Grid<T>, rho: &[T], n: &DipoleAxis) -> Result<Vec<T>, KernelError> {
    let m = nonlocal_2dii_multiplier(grid, n)?;
    apply_real_multiplier(grid, rho, &m, false)
}

/// `∂_zz(U1D ∗ ρ)` on a 1D grid.
pub fn apply_nonlocal_1d<T: Scalar>(grid: &Grid<T>, rho: &[T], eps: f64) -> Result<Vec<T>, KernelError> {
    let m = nonlocal_1d_multiplier(grid, eps)?;
    apply_real_multiplier(grid, rho, &m, false)
}

/// `(β−λ)ρ − 3λ∂_nnφ` with `−Δφ = ρ`, on a 3D grid.
pub fn apply_dipolar_3d<T: Scalar>(
    grid: &Grid<T>,
    rho: &[T],
    n: &DipoleAxis,
    beta: f64,
    lambda: f64,
) -> Result<Vec<T>, KernelError> {
    let poisson = dipolar_3d_poisson_multiplier(grid, n)?;
    let m: Vec<T> = poisson
        .into_iter()
        .map(|p| cast::<T>(beta - lambda) + cast::<T>(3.0 * lambda) * p)
        .collect();
    apply_real_multiplier(grid, rho, &m, false)
}

/// `T^ε_α f = ∂_α(U2D ∗ f)`.
pub fn t_eps_alpha<T: Scalar>(grid: &Arc<Grid<T>>, f: &[T], eps: f64, alpha: usize) -> Result<Vec<T>, KernelError> {
    KernelSymbol::t_eps(grid, eps, alpha)?.apply(f)
}

/// `R_α f = ∂_α(−Δ)^{−1/2} f`.
pub fn riesz_alpha<T: Scalar>(grid: &Arc<Grid<T>>, f: &[T], alpha: usize) -> Result<Vec<T>, KernelError> {
    KernelSymbol::riesz(grid, alpha)?.apply(f)
}

/// `√2/(√π ε)`, the bound on `ξ_αξ_α′ Û2D`.
pub fn u2d_second_derivative_bound(eps: f64) -> f64 {
    SQRT_2 / (PI.sqrt() * eps)
}

/// `2√2/(√π ε)`, the bound on `ξ² Û1D`.
pub fn u1d_second_derivative_bound(eps: f64) -> f64 {
    2.0 * SQRT_2 / (PI.sqrt() * eps)
}

/// Closed form against quadrature of the defining integral at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FidelityPoint {
    pub kernel: KernelKind,
    pub xi: f64,
    pub eps: f64,
    pub closed_form: f64,
    pub quadrature: f64,
    pub relative_error: f64,
}

/// `points` values spaced evenly in `log` between `lo` and `hi`.
pub fn log_lattice(points: usize, lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1).max(1) as f64).exp()).collect()
}

/// Compares both ε-dependent symbols with their defining integrals on the
/// square `(|ξ|, ε)` log lattice.
pub fn fidelity_sweep(points: usize, lo: f64, hi: f64) -> Result<Vec<FidelityPoint>, KernelError> {
    let lattice = log_lattice(points, lo, hi);
    let mut out = Vec::with_capacity(2 * points * points);
    for &xi in &lattice {
        for &eps in &lattice {
            for (kernel, closed_form, quadrature) in [
                (KernelKind::U2dEps, symbol_u2d(xi, eps)?.value, u2d_by_quadrature(xi, eps)?),
                (KernelKind::U1dEps, symbol_u1d(xi, eps)?.value, u1d_by_quadrature(xi, eps)?),
            ] {
                let relative_error = (closed_form - quadrature).abs() / quadrature.abs();
                out.push(FidelityPoint { kernel, xi, eps, closed_form, quadrature, relative_error });
            }
        }
    }
    Ok(out)
}

/// Nodes where a tabulated quasi-2D (2D grid) or quasi-1D (1D grid) symbol
/// breaks its second-derivative bound. One part in 10¹⁴ is allowed for rounding.
pub fn bound_violations(grid: &Arc<Grid<f64>>, eps: f64) -> Result<usize, KernelError> {
    let (table, bound) = match grid.dim() {
        2 => (KernelSymbol::u2d(grid, eps)?, u2d_second_derivative_bound(eps)),
        1 => (KernelSymbol::u1d(grid, eps)?, u1d_second_derivative_bound(eps)),
        d => return Err(KernelError::Dimension { expected: 2, found: d }),
    };
    let limit = bound * (1.0 + 1e-14);
    let d = grid.dim();
    Ok((0..grid.len())
        .filter(|&i| {
            let k = sym_xi(grid, i);
            let m = table.multiplier()[i];
            !m.is_finite() || (0..d).any(|a| (0..d).any(|b| (k[a] * k[b] * m).abs() > limit))
        })
        .count())
}
