//! Model catalog, trapping potentials, Hamiltonian application and energies.
//!
//! Every model has the form `i∂ₜψ = −½Δψ + Vψ + W[ψ]ψ` with
//! `W = g·ρ + c·F⁻¹[m ρ̂]`, `ρ = |ψ|²`. The local coefficient `g`, the
//! nonlocal coefficient `c` and the real multiplier `m` depend on the model.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::grid::{cast, Grid, Scalar};
use crate::kernels::{self, tabulate_symbol, DipoleAxis};

/// Which equation is being solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Gpps3D,
    Quasi2DI,
    Quasi2DII,
    Quasi1D,
    Limit2D,
    Limit1D,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Gpps3D,
        ModelKind::Quasi2DI,
        ModelKind::Quasi2DII,
        ModelKind::Quasi1D,
        ModelKind::Limit2D,
        ModelKind::Limit1D,
    ];

    /// Spatial dimension of the model.
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Gpps3D => 3,
            ModelKind::Quasi2DI | ModelKind::Quasi2DII | ModelKind::Limit2D => 2,
            ModelKind::Quasi1D | ModelKind::Limit1D => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gpps3D => "Gpps3D",
            ModelKind::Quasi2DI => "Quasi2DI",
            ModelKind::Quasi2DII => "Quasi2DII",
            ModelKind::Quasi1D => "Quasi1D",
            ModelKind::Limit2D => "Limit2D",
            ModelKind::Limit1D => "Limit1D",
        }
    }

    /// Whether the equation contains the confinement parameter.
    pub fn uses_epsilon(self) -> bool {
        matches!(self, ModelKind::Quasi2DI | ModelKind::Quasi2DII | ModelKind::Quasi1D)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// External trap `V ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `½ Σ γ_a² x_a²`; a single γ is broadcast to every axis.
    Harmonic { gamma: Vec<f64> },
    /// Harmonic trap plus `A Σ sin²(k_a x_a)`.
    HarmonicPlusLattice {
        gamma: Vec<f64>,
        amplitude: f64,
        wavevector: Vec<f64>,
    },
    Zero,
    /// Values given node by node in grid order.
    Tabulated { values: Vec<f64> },
}

impl PotentialSpec {
    pub fn harmonic() -> Self {
        PotentialSpec::Harmonic { gamma: vec![1.0] }
    }

    fn per_axis(v: &[f64], a: usize) -> f64 {
        match v.len() {
            0 => 0.0,
            1 => v[0],
            _ => v.get(a).copied().unwrap_or(0.0),
        }
    }

    /// `V` at every node.
    pub fn evaluate<T: Scalar>(&self, grid: &Grid<T>) -> Result<Vec<T>, ModelError> {
        let d = grid.dim();
        let values: Vec<T> = match self {
            PotentialSpec::Zero => vec![T::zero(); grid.len()],
            PotentialSpec::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(ModelError::TabulatedSize { expected: grid.len(), found: values.len() });
                }
                values.iter().map(|&v| cast(v)).collect()
            }
            PotentialSpec::Harmonic { gamma } => grid.tabulate(|x| {
                let mut v = 0.0;
                for (a, xa) in x.iter().enumerate().take(d) {
                    let g = Self::per_axis(gamma, a);
                    let xa = xa.to_f64().unwrap();
                    v += 0.5 * g * g * xa * xa;
                }
                cast(v)
            }),
            PotentialSpec::HarmonicPlusLattice { gamma, amplitude, wavevector } => grid.tabulate(|x| {
                let mut v = 0.0;
                for (a, xa) in x.iter().enumerate().take(d) {
                    let g = Self::per_axis(gamma, a);
                    let k = Self::per_axis(wavevector, a);
                    let xa = xa.to_f64().unwrap();
                    v += 0.5 * g * g * xa * xa + amplitude * (k * xa).sin().powi(2);
                }
                cast(v)
            }),
        };
        let min = values.iter().fold(T::infinity(), |m, &v| m.min(v));
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if min < T::zero() {
            return Err(ModelError::NegativePotential(min.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(values)
    }

    /// `x·∇V` at every node (spectral gradient for tabulated data).
    pub fn virial_weight<T: Scalar>(&self, grid: &Grid<T>) -> Result<Vec<T>, ModelError> {
        let d = grid.dim();
        Ok(match self {
            PotentialSpec::Zero => vec![T::zero(); grid.len()],
            PotentialSpec::Harmonic { gamma } => grid.tabulate(|x| {
                let mut v = 0.0;
                for (a, xa) in x.iter().enumerate().take(d) {
                    let g = Self::per_axis(gamma, a);
                    let xa = xa.to_f64().unwrap();
                    v += g * g * xa * xa;
                }
                cast(v)
            }),
            PotentialSpec::HarmonicPlusLattice { gamma, amplitude, wavevector } => grid.tabulate(|x| {
                let mut v = 0.0;
                for (a, xa) in x.iter().enumerate().take(d) {
                    let g = Self::per_axis(gamma, a);
                    let k = Self::per_axis(wavevector, a);
                    let xa = xa.to_f64().unwrap();
                    v += g * g * xa * xa + amplitude * k * xa * (2.0 * k * xa).sin();
                }
                cast(v)
            }),
            PotentialSpec::Tabulated { .. } => {
                let v = self.evaluate(grid)?;
                let grad = grid.gradient_real(&v)?;
                (0..grid.len())
                    .map(|i| {
                        let x = grid.node_coords(i);
                        (0..d).fold(T::zero(), |s, a| s + x[a] * grad[a][i])
                    })
                    .collect()
            }
        })
    }
}

/// Physical parameters of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub beta: f64,
    pub lambda: f64,
    pub epsilon: Option<f64>,
    pub axis: DipoleAxis,
    pub potential: PotentialSpec,
}

impl ModelParams {
    pub fn new(kind: ModelKind, beta: f64, lambda: f64) -> Self {
        Self {
            kind,
            beta,
            lambda,
            epsilon: None,
            axis: DipoleAxis::Z,
            potential: PotentialSpec::harmonic(),
        }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = Some(eps);
        self
    }

    pub fn with_axis(mut self, axis: DipoleAxis) -> Self {
        self.axis = axis;
        self
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    /// Check parameter requirements; returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>, ModelError> {
        let mut warnings = Vec::new();
        if !self.beta.is_finite() || !self.lambda.is_finite() {
            return Err(ModelError::NonFinite);
        }
        match (self.kind.uses_epsilon(), self.epsilon) {
            (true, Some(e)) if e > 0.0 && e.is_finite() => {}
            (true, _) => return Err(ModelError::MissingEpsilon(self.kind.name())),
            (false, Some(_)) => warnings.push(format!("epsilon is ignored by {}", self.kind)),
            (false, None) => {}
        }
        if self.kind.uses_epsilon() && self.epsilon.is_some_and(|e| e > 1.0) {
            warnings.push("epsilon above 1 is outside the confinement regime".to_string());
        }
        Ok(warnings)
    }

    /// Confinement parameter, or an error if the model needs one and it is absent.
    pub fn epsilon_required(&self) -> Result<f64, ModelError> {
        match self.epsilon {
            Some(e) if e > 0.0 && e.is_finite() => Ok(e),
            _ => Err(ModelError::MissingEpsilon(self.kind.name())),
        }
    }

    /// Coefficient of the local cubic term.
    pub fn local_coefficient(&self) -> Result<f64, ModelError> {
        let eps = self.epsilon_for_coefficients()?;
        Ok(self.kind.coefficients().local.evaluate(self.beta, self.lambda, self.axis.n3_sq(), eps))
    }

    /// Coefficient multiplying the nonlocal operator (zero for the limit models).
    pub fn nonlocal_coefficient(&self) -> Result<f64, ModelError> {
        match self.kind.coefficients().nonlocal {
            Some(c) => Ok(c.evaluate(self.beta, self.lambda, self.axis.n3_sq(), self.epsilon_for_coefficients()?)),
            None => Ok(0.0),
        }
    }

    fn epsilon_for_coefficients(&self) -> Result<f64, ModelError> {
        if self.kind.uses_epsilon() {
            self.epsilon_required()
        } else {
            Ok(1.0)
        }
    }
}

/// `(b·β + l·λ + q·λn₃²) · (num/den) · (2π)^{p/2} · ε^e`, stored exactly as printed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prefactor {
    pub beta: f64,
    pub lambda: f64,
    pub lambda_n3sq: f64,
    pub num: i64,
    pub den: i64,
    pub half_power_of_2pi: i32,
    pub eps_power: i32,
}

impl Prefactor {
    const fn new(beta: f64, lambda: f64, lambda_n3sq: f64, num: i64, den: i64, p: i32, e: i32) -> Self {
        Self {
            beta,
            lambda,
            lambda_n3sq,
            num,
            den,
            half_power_of_2pi: p,
            eps_power: e,
        }
    }

    pub fn evaluate(&self, beta: f64, lambda: f64, n3_sq: f64, eps: f64) -> f64 {
        let linear = self.beta * beta + self.lambda * lambda + self.lambda_n3sq * lambda * n3_sq;
        let scale = self.num as f64 / self.den as f64
            * (2.0 * PI).powf(0.5 * self.half_power_of_2pi as f64)
            * eps.powi(self.eps_power);
        linear * scale
    }
}

impl fmt::Display for Prefactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        for (c, name) in [(self.beta, "β"), (self.lambda, "λ"), (self.lambda_n3sq, "λn₃²")] {
            if c != 0.0 {
                terms.push(format!("{c:+}{name}"));
            }
        }
        write!(
            f,
            "({}) · {}/{} · (2π)^({}/2) · ε^({})",
            terms.join(" "),
            self.num,
            self.den,
            self.half_power_of_2pi,
            self.eps_power
        )
    }
}

/// Local and nonlocal prefactors of one model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub local: Prefactor,
    pub nonlocal: Option<Prefactor>,
}

impl ModelKind {
    pub fn coefficients(self) -> Coefficients {
        match self {
            ModelKind::Gpps3D => Coefficients {
                local: Prefactor::new(1.0, -1.0, 0.0, 1, 1, 0, 0),
                nonlocal: Some(Prefactor::new(0.0, 3.0, 0.0, 1, 1, 0, 0)),
            },
            ModelKind::Quasi2DI | ModelKind::Quasi2DII => Coefficients {
                local: Prefactor::new(1.0, -1.0, 3.0, 1, 1, -1, -1),
                nonlocal: Some(Prefactor::new(0.0, -3.0, 0.0, 1, 2, 0, 0)),
            },
            ModelKind::Quasi1D => Coefficients {
                local: Prefactor::new(1.0, 0.5, -1.5, 1, 1, -2, -2),
                // −3λ(3n₃²−1)/(8√(2π)ε)
                nonlocal: Some(Prefactor::new(0.0, 3.0, -9.0, 1, 8, -1, -1)),
            },
            ModelKind::Limit2D => Coefficients {
                local: Prefactor::new(1.0, -1.0, 3.0, 1, 1, -1, 0),
                nonlocal: None,
            },
            ModelKind::Limit1D => Coefficients {
                local: Prefactor::new(1.0, 0.5, -1.5, 1, 1, -2, 0),
                nonlocal: None,
            },
        }
    }
}

/// Printable table of every model's prefactors.
pub fn coefficient_audit() -> String {
    let mut out = String::from("model      local                                           nonlocal\n");
    for kind in ModelKind::ALL {
        let c = kind.coefficients();
        let nl = c.nonlocal.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
        out.push_str(&format!("{:<10} {:<47} {}\n", kind.name(), c.local.to_string(), nl));
    }
    out
}

/// Energy split into its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub contact: f64,
    pub dipolar: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn from_parts(kinetic: f64, potential: f64, contact: f64, dipolar: f64) -> Self {
        Self {
            kinetic,
            potential,
            contact,
            dipolar,
            total: kinetic + potential + contact + dipolar,
        }
    }

    /// `Re⟨Hψ, ψ⟩` implied by the split (quartic terms doubled).
    pub fn hamiltonian_pairing(&self) -> f64 {
        self.kinetic + self.potential + 2.0 * self.contact + 2.0 * self.dipolar
    }
}

/// A model bound to a grid with its tables precomputed.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    params: ModelParams,
    grid: Arc<Grid<T>>,
    potential: Vec<T>,
    half_k2: Vec<T>,
    local: T,
    nonlocal_coefficient: T,
    multiplier: Option<Vec<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn new(params: ModelParams, grid: Arc<Grid<T>>) -> Result<Self, ModelError> {
        params.validate()?;
        let expected = params.kind.dim();
        if grid.dim() != expected {
            return Err(ModelError::Dimension { kind: params.kind.name(), expected, found: grid.dim() });
        }
        let potential = params.potential.evaluate(&grid)?;
        let half = cast::<T>(0.5);
        let half_k2 = grid.k2_table().into_iter().map(|k| k * half).collect();
        let local = cast(params.local_coefficient()?);
        let c = params.nonlocal_coefficient()?;
        let n = params.axis;
        let multiplier = match params.kind {
            ModelKind::Gpps3D => Some(kernels::dipolar_3d_poisson_multiplier(&grid, &n)?),
            ModelKind::Quasi2DI => Some(kernels::nonlocal_2di_multiplier(&grid, params.epsilon_required()?, &n)?),
            ModelKind::Quasi2DII => Some(kernels::nonlocal_2dii_multiplier(&grid, &n)?),
            ModelKind::Quasi1D => Some(kernels::nonlocal_1d_multiplier(&grid, params.epsilon_required()?)?),
            ModelKind::Limit2D | ModelKind::Limit1D => None,
        };
        // A zero coefficient switches the nonlocal term off entirely.
        let multiplier = multiplier.filter(|_| c != 0.0);
        Ok(Self {
            params,
            grid,
            potential,
            half_k2,
            local,
            nonlocal_coefficient: cast(c),
            multiplier,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    /// `|ξ|²/2` per node.
    pub fn half_k2(&self) -> &[T] {
        &self.half_k2
    }

    pub fn local_coefficient(&self) -> T {
        self.local
    }

    pub fn nonlocal_coefficient(&self) -> T {
        self.nonlocal_coefficient
    }

    /// Nonlocal multiplier `m`, absent when the model has no active nonlocal term.
    pub fn nonlocal_multiplier(&self) -> Option<&[T]> {
        self.multiplier.as_deref()
    }

    fn check(&self, psi: &[Complex<T>]) -> Result<(), ModelError> {
        if psi.len() != self.grid.len() {
            return Err(crate::error::GridError::SizeMismatch { expected: self.grid.len(), found: psi.len() }.into());
        }
        if psi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    /// `W` for a given density.
    pub fn interaction_from_density(&self, rho: &[T]) -> Vec<T> {
        let mut w: Vec<T> = rho.iter().map(|&r| r * self.local).collect();
        if let Some(m) = &self.multiplier {
            let mut spec: Vec<Complex<T>> = rho.iter().map(|&r| Complex::new(r, T::zero())).collect();
            self.grid.forward_in_place(&mut spec);
            for (c, &mk) in spec.iter_mut().zip(m) {
                *c = *c * mk;
            }
            self.grid.inverse_in_place(&mut spec);
            let c = self.nonlocal_coefficient;
            for (wi, s) in w.iter_mut().zip(&spec) {
                *wi = *wi + c * s.re;
            }
        }
        w
    }

    /// Local plus nonlocal interaction field `W[ψ]`.
    pub fn effective_potential(&self, psi: &[Complex<T>]) -> Result<Vec<T>, ModelError> {
        self.check(psi)?;
        let rho: Vec<T> = psi.iter().map(|c| c.norm_sqr()).collect();
        Ok(self.interaction_from_density(&rho))
    }

    /// `(−½Δ + V + W[ψ])ψ`.
    pub fn hamiltonian_apply(&self, psi: &[Complex<T>]) -> Result<Vec<Complex<T>>, ModelError> {
        let w = self.effective_potential(psi)?;
        let mut kin = psi.to_vec();
        self.grid.forward_in_place(&mut kin);
        for (c, &k) in kin.iter_mut().zip(&self.half_k2) {
            *c = *c * k;
        }
        self.grid.inverse_in_place(&mut kin);
        Ok(kin
            .iter()
            .zip(psi)
            .zip(self.potential.iter().zip(&w))
            .map(|((&k, &p), (&v, &wi))| k + p * (v + wi))
            .collect())
    }

    /// Energy functional and its parts.
    pub fn energy(&self, psi: &[Complex<T>]) -> Result<EnergyBreakdown, ModelError> {
        self.check(psi)?;
        let grid = &self.grid;
        let weight = grid.spectral_weight();
        let mut spec = psi.to_vec();
        grid.forward_in_place(&mut spec);
        let kinetic = spec
            .iter()
            .zip(&self.half_k2)
            .fold(T::zero(), |s, (c, &k)| s + c.norm_sqr() * k)
            * weight;
        let rho: Vec<T> = psi.iter().map(|c| c.norm_sqr()).collect();
        let potential = grid.integrate_unchecked(&rho.iter().zip(&self.potential).map(|(&r, &v)| r * v).collect::<Vec<_>>());
        let rho2 = grid.integrate_unchecked(&rho.iter().map(|&r| r * r).collect::<Vec<_>>());
        let half = cast::<T>(0.5);
        let contact = half * self.local * rho2;
        let dipolar = match &self.multiplier {
            Some(m) => {
                let rho_hat = grid.forward_real(&rho)?;
                let s = rho_hat.iter().zip(m).fold(T::zero(), |s, (c, &mk)| s + c.norm_sqr() * mk);
                half * self.nonlocal_coefficient * s * weight
            }
            None => T::zero(),
        };
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let e = EnergyBreakdown::from_parts(f(kinetic), f(potential), f(contact), f(dipolar));
        if !e.total.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(e)
    }

    /// Chemical potential `Re⟨Hψ, ψ⟩ / ‖ψ‖²`.
    pub fn chemical_potential(&self, psi: &[Complex<T>]) -> Result<f64, ModelError> {
        let e = self.energy(psi)?;
        let mass = self.grid.norm2(psi).to_f64().unwrap();
        Ok(e.hamiltonian_pairing() / mass)
    }

    /// Table of `d·m + ξ·∇m` for the virial of the nonlocal term.
    pub fn virial_multiplier(&self) -> Result<Option<Vec<T>>, ModelError> {
        if self.multiplier.is_none() {
            return Ok(None);
        }
        let n = self.params.axis;
        let table = match self.params.kind {
            // Degree-zero homogeneous symbol.
            ModelKind::Gpps3D => self.multiplier.as_ref().unwrap().iter().map(|&m| m * cast(3.0)).collect(),
            ModelKind::Quasi2DI => {
                let eps = self.params.epsilon_required()?;
                tabulate_symbol(&self.grid, |xi| {
                    let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
                    let nx = kernels::symbol_aniso2d([xi[0], xi[1]], &n);
                    -nx * (4.0 * kernels::u2d(r, eps) + kernels::u2d_log_derivative(r, eps))
                })
            }
            // Degree-one homogeneous symbol: ξ·∇m = m.
            ModelKind::Quasi2DII => self.multiplier.as_ref().unwrap().iter().map(|&m| m * cast(3.0)).collect(),
            ModelKind::Quasi1D => {
                let eps = self.params.epsilon_required()?;
                tabulate_symbol(&self.grid, |xi| {
                    -xi[0] * xi[0] * kernels::u1d(xi[0], eps) + kernels::minus_xi2_u1d_log_derivative(xi[0], eps)
                })
            }
            ModelKind::Limit2D | ModelKind::Limit1D => return Ok(None),
        };
        Ok(Some(table))
    }
}
