//! Real-time propagation, observables, the virial identity and blow-up
//! verdicts for the quasi-2D models.

use num_complex::Complex;
use num_traits::Zero;
use serde::Serialize;

use crate::error::DynamicsError;
use crate::grid::{cast, Grid, Scalar, Wavefunction};
use crate::ground_state::{classify_regime, Condition};
use crate::kernels::{self, tabulate_symbol};
use crate::models::{EnergyBreakdown, Model, ModelKind};
use crate::special::gauss_legendre_on;

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Integrator

/// Strang splitting `P(dt/2)·K(dt)·P(dt/2)` where `P` multiplies by
/// `e^{−i(V+W[ψ])τ}` and `K` is the exact free flow in Fourier space.
///
/// `P` is exact because `|ψ|²`, and with it `W`, is invariant under phase
/// multiplication. The field behind the closing half step is reused by the
/// next opening half step.
pub struct Propagator<'m, T: Scalar> {
    model: &'m Model<T>,
    dt: T,
    kinetic: Vec<Complex<T>>,
    field: Option<Vec<T>>,
}

impl<'m, T: Scalar> Propagator<'m, T> {
    pub fn new(model: &'m Model<T>, dt: f64) -> Result<Self, DynamicsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::TimeStep(dt));
        }
        let dt_t: T = cast(dt);
        let kinetic = model
            .half_k2()
            .iter()
            .map(|&k| Complex::from_polar(T::one(), -k * dt_t))
            .collect();
        Ok(Self { model, dt: dt_t, kinetic, field: None })
    }

    pub fn dt(&self) -> f64 {
        to_f64(self.dt)
    }

    fn kick(&self, psi: &mut [Complex<T>], w: &[T], fraction: T) {
        let tau = self.dt * fraction;
        for ((p, &v), &wi) in psi.iter_mut().zip(self.model.potential()).zip(w) {
            *p = *p * Complex::from_polar(T::one(), -(v + wi) * tau);
        }
    }

    fn density_field(&self, psi: &[Complex<T>]) -> Vec<T> {
        let rho: Vec<T> = psi.iter().map(|c| c.norm_sqr()).collect();
        self.model.interaction_from_density(&rho)
    }

    /// Advances `psi` by one step in place.
    pub fn step(&mut self, psi: &mut [Complex<T>]) {
        self.advance(psi, 1);
    }

    /// Advances `psi` by `steps` steps, merging the back-to-back half kicks.
    pub fn advance(&mut self, psi: &mut [Complex<T>], steps: usize) {
        if steps == 0 {
            return;
        }
        let half: T = cast(0.5);
        let w = match self.field.take() {
            Some(w) => w,
            None => self.density_field(psi),
        };
        self.kick(psi, &w, half);
        let grid = self.model.grid();
        for i in 0..steps {
            grid.forward_in_place(psi);
            for (c, k) in psi.iter_mut().zip(&self.kinetic) {
                *c = *c * *k;
            }
            grid.inverse_in_place(psi);
            let w = self.density_field(psi);
            if i + 1 == steps {
                self.kick(psi, &w, half);
                self.field = Some(w);
            } else {
                self.kick(psi, &w, T::one());
            }
        }
    }
}

/// One Strang step of size `dt`.
pub fn step_strang<T: Scalar>(model: &Model<T>, psi: &[Complex<T>], dt: f64) -> Result<Vec<Complex<T>>, DynamicsError> {
    if psi.len() != model.grid().len() {
        return Err(crate::error::GridError::SizeMismatch { expected: model.grid().len(), found: psi.len() }.into());
    }
    let mut out = psi.to_vec();
    Propagator::new(model, dt)?.step(&mut out);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Observables

/// Right-hand side of `σ″ = 2‖∇ψ‖² + d·g∫ρ² − 2∫ρ x·∇V + c·Σ(d·m + ξ·∇m)|ρ̂|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VirialTerms {
    pub kinetic: f64,
    pub contact: f64,
    pub trap: f64,
    pub nonlocal: f64,
}

impl VirialTerms {
    pub fn total(&self) -> f64 {
        self.kinetic + self.contact + self.trap + self.nonlocal
    }
}

/// Second moment `∫|x|²ρ` and its rate `2 Im∫ψ̄ x·∇ψ`.
pub fn variance_and_rate<T: Scalar>(grid: &Grid<T>, psi: &[Complex<T>]) -> Result<(f64, f64), DynamicsError> {
    let r2 = grid.radius2_table();
    let sigma = grid.integrate(&psi.iter().zip(&r2).map(|(c, &r)| c.norm_sqr() * r).collect::<Vec<_>>())?;
    let grad = grid.gradient(psi)?;
    let mut acc = T::zero();
    for (i, (p, x)) in psi.iter().zip(grid.node_coords_iter()).enumerate() {
        let mut xg = Complex::<T>::zero();
        for (a, g) in grad.iter().enumerate() {
            xg = xg + g[i] * x[a];
        }
        acc = acc + (p.conj() * xg).im;
    }
    Ok((to_f64(sigma), 2.0 * to_f64(acc * grid.cell_volume())))
}

pub fn virial_terms<T: Scalar>(model: &Model<T>, psi: &[Complex<T>]) -> Result<VirialTerms, DynamicsError> {
    virial_terms_with(model, psi, &model.energy(psi)?)
}

fn virial_terms_with<T: Scalar>(model: &Model<T>, psi: &[Complex<T>], e: &EnergyBreakdown) -> Result<VirialTerms, DynamicsError> {
    let grid = model.grid();
    let d = grid.dim() as f64;
    let rho: Vec<T> = psi.iter().map(|c| c.norm_sqr()).collect();
    let xv = model.params().potential.virial_weight(grid.as_ref())?;
    let trap = -2.0 * to_f64(grid.integrate(&rho.iter().zip(&xv).map(|(&r, &w)| r * w).collect::<Vec<_>>())?);
    let nonlocal = match model.virial_multiplier()? {
        Some(table) => {
            let rho_hat = grid.forward_real(&rho)?;
            let s = rho_hat.iter().zip(&table).fold(T::zero(), |s, (c, &m)| s + c.norm_sqr() * m);
            to_f64(model.nonlocal_coefficient() * s * grid.spectral_weight())
        }
        None => 0.0,
    };
    Ok(VirialTerms { kinetic: 4.0 * e.kinetic, contact: d * 2.0 * e.contact, trap, nonlocal })
}

/// Number of Gauss–Legendre nodes for the `s`-integral of the dipolar virial term.
const VIRIAL_NODES: usize = 64;

/// `I = (1/4π³)∫∫ n_ξ s² e^{−ε²s²/2}|ρ̂|²/(|ξ|²+s²)² ds dξ` for the quasi-2D I
/// model, with the `s`-integral over the whole line done by Gauss–Legendre on
/// `[0, 8/ε]` and doubled. `None` for other kinds.
pub fn dipolar_virial_integral<T: Scalar>(model: &Model<T>, psi: &[Complex<T>]) -> Result<Option<f64>, DynamicsError> {
    match dipolar_virial_table(model)? {
        Some(table) => Ok(Some(contract_virial_table(model.grid(), &table, psi)?)),
        None => Ok(None),
    }
}

/// Fourier weights of the dipolar virial integral; depend only on the grid,
/// `ε` and the axis, so evolutions build them once.
fn dipolar_virial_table<T: Scalar>(model: &Model<T>) -> Result<Option<Vec<T>>, DynamicsError> {
    if model.params().kind != ModelKind::Quasi2DI {
        return Ok(None);
    }
    let eps = model.params().epsilon_required()?;
    let n = model.params().axis;
    let (s, w) = gauss_legendre_on(VIRIAL_NODES, 0.0, 8.0 / eps);
    let damp: Vec<f64> = s.iter().zip(&w).map(|(s, w)| w * s * s * (-0.5 * eps * eps * s * s).exp()).collect();
    Ok(Some(tabulate_symbol(model.grid().as_ref(), |xi| {
        let r2 = xi[0] * xi[0] + xi[1] * xi[1];
        if r2 == 0.0 {
            return 0.0;
        }
        let inner: f64 = s.iter().zip(&damp).map(|(s, d)| d / (r2 + s * s).powi(2)).sum();
        kernels::symbol_aniso2d([xi[0], xi[1]], &n) * 2.0 * inner
    })))
}

fn contract_virial_table<T: Scalar>(grid: &Grid<T>, table: &[T], psi: &[Complex<T>]) -> Result<f64, DynamicsError> {
    let rho: Vec<T> = psi.iter().map(|c| c.norm_sqr()).collect();
    let rho_hat = grid.forward_real(&rho)?;
    let sum = rho_hat.iter().zip(table).fold(T::zero(), |a, (c, &m)| a + c.norm_sqr() * m);
    // ∫dξ = (2π)² × spectral weight × lattice sum.
    let pi = std::f64::consts::PI;
    Ok(to_f64(sum * grid.spectral_weight()) * 4.0 * pi * pi / (4.0 * pi.powi(3)))
}

/// Recorded observables of an evolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<EnergyBreakdown>,
    pub sigma: Vec<f64>,
    pub dsigma: Vec<f64>,
    pub virial_rhs: Vec<f64>,
    /// Dipolar virial integral, quasi-2D I with `λ ≠ 0` only.
    pub virial_integral: Vec<Option<f64>>,
    /// `|σ″ − RHS|` relative to the series scale; `NaN` where undefined.
    pub virial_residual: Vec<f64>,
    pub peak_density: Vec<f64>,
    pub spectral_tail: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record<T: Scalar>(
        &mut self,
        model: &Model<T>,
        integral_table: Option<&[T]>,
        t: f64,
        psi: &[Complex<T>],
    ) -> Result<(), DynamicsError> {
        let grid = model.grid();
        let (sigma, dsigma) = variance_and_rate(grid, psi)?;
        let spec = grid.forward(psi)?;
        self.times.push(t);
        self.mass.push(to_f64(grid.norm2(psi)));
        let energy = model.energy(psi)?;
        self.virial_rhs.push(virial_terms_with(model, psi, &energy)?.total());
        self.energy.push(energy);
        self.sigma.push(sigma);
        self.dsigma.push(dsigma);
        self.virial_integral.push(match integral_table {
            Some(table) => Some(contract_virial_table(grid, table, psi)?),
            None => None,
        });
        self.virial_residual.push(f64::NAN);
        self.peak_density.push(psi.iter().fold(0.0f64, |m, c| m.max(to_f64(c.norm_sqr()))));
        self.spectral_tail.push(grid.spectral_tail_fraction(&spec));
        Ok(())
    }

    /// Largest `|E(t) − E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy.first().map_or(0.0, |e| e.total);
        self.energy.iter().fold(0.0, |m, e| m.max((e.total - e0).abs()))
    }

    /// Largest `|mass(t) − mass(0)|`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        self.mass.iter().fold(0.0, |m, v| m.max((v - m0).abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Spectral mass fraction beyond `(2/3)k_max` that stops the run.
    pub tail_alarm: f64,
    /// Peak-density growth that marks a non-finite state as blow-up.
    pub blowup_growth: f64,
    /// Stop once the recorded peak density exceeds this multiple of its
    /// initial value. Lets callers shrink `dt` as a collapse sharpens.
    pub stop_at_growth: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { t_final: 1.0, dt: 1e-3, record_every: 10, tail_alarm: 1e-8, blowup_growth: 1e4, stop_at_growth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "stop", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// High-frequency content passed the alarm threshold.
    ResolutionAlarm { time: f64, tail: f64 },
    /// Non-finite values after strong peak-density growth.
    BlowupSuspected { time: f64, peak_growth: f64 },
    /// Non-finite values without prior growth.
    NonFinite { time: f64 },
    /// The requested peak-density growth was reached.
    GrowthReached { time: f64, peak_growth: f64 },
}

impl StopReason {
    pub fn is_alarm(&self) -> bool {
        !matches!(self, StopReason::Completed | StopReason::GrowthReached { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Evolution<T: Scalar> {
    pub series: ObservableSeries,
    /// Last state that passed every check.
    pub state: Wavefunction<T>,
    pub stop: StopReason,
    pub steps: usize,
}

/// Propagates `psi0` to `t_final`, recording every `record_every` steps.
/// Alarms end the run early with the partial series kept.
pub fn evolve<T: Scalar>(
    model: &Model<T>,
    psi0: &Wavefunction<T>,
    options: &EvolveOptions,
) -> Result<Evolution<T>, DynamicsError> {
    evolve_observed(model, psi0, options, |_, _| {})
}

/// [`evolve`] that also hands each recorded state to `observe`, together
/// with its step count, before any alarm check on it.
pub fn evolve_observed<T: Scalar>(
    model: &Model<T>,
    psi0: &Wavefunction<T>,
    options: &EvolveOptions,
    mut observe: impl FnMut(usize, &[Complex<T>]),
) -> Result<Evolution<T>, DynamicsError> {
    if options.record_every == 0 {
        return Err(DynamicsError::Cadence);
    }
    if !(options.dt > 0.0 && options.dt.is_finite() && options.t_final >= 0.0) {
        return Err(DynamicsError::TimeStep(options.dt));
    }
    let grid = model.grid();
    if psi0.values().len() != grid.len() {
        return Err(crate::error::GridError::SizeMismatch { expected: grid.len(), found: psi0.values().len() }.into());
    }
    let mass = to_f64(psi0.mass());
    // Unit mass to 1e-8, or to what the scalar type can hold.
    let mass_tol = 1e-8f64.max(64.0 * to_f64(T::epsilon()));
    if !((mass - 1.0).abs() <= mass_tol) {
        return Err(DynamicsError::InitialMass(mass));
    }
    let steps = (options.t_final / options.dt).round() as usize;
    let dt = if steps > 0 { options.t_final / steps as f64 } else { options.dt };
    let mut prop = Propagator::new(model, dt)?;
    let mut psi = psi0.values().to_vec();
    // I(t) only enters the identity through 3λI.
    let integral_table = if model.params().lambda != 0.0 { dipolar_virial_table(model)? } else { None };
    let mut series = ObservableSeries::default();
    series.record(model, integral_table.as_deref(), 0.0, &psi)?;
    observe(0, &psi);
    let peak0 = series.peak_density[0];
    let mut last_good = psi.clone();
    let mut stop = StopReason::Completed;
    let mut done = 0;
    while done < steps {
        let chunk = (options.record_every - done % options.record_every).min(steps - done);
        prop.advance(&mut psi, chunk);
        done += chunk;
        let t = done as f64 * dt;
        let finite = psi.iter().all(|c| to_f64(c.re).is_finite() && to_f64(c.im).is_finite());
        if !finite {
            let growth = series.peak_density.last().copied().unwrap_or(peak0) / peak0;
            stop = if growth > options.blowup_growth {
                StopReason::BlowupSuspected { time: t, peak_growth: growth }
            } else {
                StopReason::NonFinite { time: t }
            };
            break;
        }
        series.record(model, integral_table.as_deref(), t, &psi)?;
        observe(done, &psi);
        let tail = *series.spectral_tail.last().unwrap();
        if tail > options.tail_alarm {
            stop = StopReason::ResolutionAlarm { time: t, tail };
            break;
        }
        last_good.clone_from(&psi);
        let growth = *series.peak_density.last().unwrap() / peak0;
        if options.stop_at_growth.is_some_and(|g| growth >= g) {
            stop = StopReason::GrowthReached { time: t, peak_growth: growth };
            break;
        }
    }
    if series.len() >= 3 {
        if let Ok(res) = variance_diagnostics(&series) {
            series.virial_residual = res;
        }
    }
    let state = Wavefunction::new(std::sync::Arc::clone(grid), last_good)?;
    Ok(Evolution { series, state, stop, steps: done })
}

/// Compares the centred second difference of `σ` with the recorded virial
/// right-hand side. Residuals are scaled by the largest `|RHS|` of the
/// series; end points and non-uniform spacings give `NaN`.
pub fn variance_diagnostics(series: &ObservableSeries) -> Result<Vec<f64>, DynamicsError> {
    let n = series.len();
    if n < 3 {
        return Err(DynamicsError::CadenceTooCoarse);
    }
    let scale = series.virial_rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut second = vec![f64::NAN; n];
    let mut out = vec![f64::NAN; n];
    for k in 1..n - 1 {
        let h0 = series.times[k] - series.times[k - 1];
        let h1 = series.times[k + 1] - series.times[k];
        if (h0 - h1).abs() > 1e-9 * h0 {
            continue;
        }
        let d2 = (series.sigma[k + 1] - 2.0 * series.sigma[k] + series.sigma[k - 1]) / (h0 * h1);
        second[k] = d2;
        out[k] = (d2 - series.virial_rhs[k]).abs() / scale;
    }
    // Truncation check: the σ⁗h²/12 error term must stay small against the signal.
    for k in 2..n.saturating_sub(2) {
        let h = series.times[k] - series.times[k - 1];
        let fourth = (second[k + 1] - 2.0 * second[k] + second[k - 1]) / (h * h);
        if fourth.is_finite() && fourth.abs() * h * h / 12.0 > 1e-2 * scale {
            return Err(DynamicsError::CadenceTooCoarse);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Blow-up criteria

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupCase {
    /// Negative energy.
    NegativeEnergy,
    /// Zero energy with inward-moving variance.
    ZeroEnergy,
    /// Positive energy with a sufficiently negative variance rate.
    PositiveEnergy,
}

impl BlowupCase {
    pub fn roman(self) -> &'static str {
        match self {
            BlowupCase::NegativeEnergy => "i",
            BlowupCase::ZeroEnergy => "ii",
            BlowupCase::PositiveEnergy => "iii",
        }
    }
}

/// Hypothesis set a guarantee rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupAssumption {
    /// Quasi-2D I: `2V + x·∇V ≥ 0`, `λ = 0` or (`λ > 0`, `n₃² ≥ ½`).
    Quasi2dI,
    /// Quasi-2D II: `3V + x·∇V ≥ 0` and a cubic coefficient above `−C_b/‖φ₀‖²`.
    TrapAndCubic,
    /// Quasi-2D II: `2V + x·∇V ≥ 0`, `λ = 0` or (`λ > 0`, `n₃² ≥ ½`).
    TrapAndNonlocal,
}

/// `σ(t) ≤ a t² + b t + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticBound {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticBound {
    pub fn at(&self, t: f64) -> f64 {
        (self.a * t + self.b) * t + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupVerdict {
    /// `None` when inconclusive.
    pub case: Option<BlowupCase>,
    pub assumption: Option<BlowupAssumption>,
    /// Bound of the guarantee, or the plain energy bound `(2E, σ′₀, σ₀)` otherwise.
    pub bound: QuadraticBound,
    pub energy: f64,
    pub notes: Vec<String>,
}

impl BlowupVerdict {
    pub fn guaranteed(&self) -> bool {
        self.case.is_some()
    }
}

/// Energies within this of zero count as zero.
const ZERO_ENERGY: f64 = 1e-12;

fn potential_check<T: Scalar>(model: &Model<T>, factor: f64) -> Result<bool, DynamicsError> {
    let grid = model.grid();
    let xv = model.params().potential.virial_weight(grid.as_ref())?;
    let scale = model.potential().iter().fold(0.0f64, |m, &v| m.max(to_f64(v).abs())).max(1.0);
    Ok(model
        .potential()
        .iter()
        .zip(&xv)
        .all(|(&v, &w)| factor * to_f64(v) + to_f64(w) >= -1e-12 * scale))
}

/// Which of the three cases holds for energy `e`, rate `σ′₀`, and `‖xφ₀‖`
/// with bound factor `k` (the threshold is `−√(k·e)‖xφ₀‖` on `Im∫φ̄ x·∇φ`).
fn match_case(e: f64, im: f64, x_norm: f64, k: f64) -> Option<BlowupCase> {
    if e < -ZERO_ENERGY {
        Some(BlowupCase::NegativeEnergy)
    } else if e.abs() <= ZERO_ENERGY {
        (im < 0.0).then_some(BlowupCase::ZeroEnergy)
    } else {
        (im < -(k * e).sqrt() * x_norm).then_some(BlowupCase::PositiveEnergy)
    }
}

/// Evaluates the finite-time blow-up criteria for the quasi-2D models on
/// `psi0`. Every hypothesis is checked on the grid; anything that fails
/// makes the verdict inconclusive, with the reason in `notes`.
pub fn blowup_criterion<T: Scalar>(model: &Model<T>, psi0: &[Complex<T>], cb: f64) -> Result<BlowupVerdict, DynamicsError> {
    let grid = model.grid();
    let params = model.params();
    let (sigma0, dsigma0) = variance_and_rate(grid, psi0)?;
    if !sigma0.is_finite() || !dsigma0.is_finite() {
        return Err(DynamicsError::InfiniteVariance);
    }
    let mass = to_f64(grid.norm2(psi0));
    let energy = model.energy(psi0)?.total;
    let im = dsigma0 / 2.0;
    let x_norm = sigma0.sqrt();
    let mut notes = Vec::new();
    let plain = QuadraticBound { a: 2.0 * energy, b: dsigma0, c: sigma0 };
    let inconclusive = |notes: Vec<String>| BlowupVerdict { case: None, assumption: None, bound: plain, energy, notes };
    let (l, n3_sq) = (params.lambda, params.axis.n3_sq());
    let nonlocal_sign_ok = l == 0.0 || (l > 0.0 && n3_sq >= 0.5);
    let regime = classify_regime(params, cb / mass);

    match params.kind {
        ModelKind::Quasi2DI => {
            if regime.holds(Condition::A1) || regime.holds(Condition::A2) {
                notes.push("existence condition A1/A2 holds".into());
            }
            if !nonlocal_sign_ok {
                notes.push("needs lambda = 0, or lambda > 0 with n3^2 >= 1/2".into());
            }
            if !potential_check(model, 2.0)? {
                notes.push("2V + x.grad V is negative somewhere".into());
            }
            if !notes.is_empty() {
                return Ok(inconclusive(notes));
            }
            match match_case(energy, im, x_norm, 2.0) {
                Some(case) => Ok(BlowupVerdict { case: Some(case), assumption: Some(BlowupAssumption::Quasi2dI), bound: plain, energy, notes }),
                None => Ok(inconclusive(vec!["no energy case applies".into()])),
            }
        }
        ModelKind::Quasi2DII => {
            if [Condition::B1, Condition::B2, Condition::B3].iter().any(|&c| regime.holds(c)) {
                return Ok(inconclusive(vec!["existence condition B1/B2/B3 holds".into()]));
            }
            let eps = params.epsilon_required()?;
            let cubic = (params.beta - l + 3.0 * l * n3_sq) / ((2.0 * std::f64::consts::PI).sqrt() * eps);
            let mut options = Vec::new();
            if potential_check(model, 3.0)? && cubic >= -cb / mass {
                options.push((BlowupAssumption::TrapAndCubic, 3.0));
            }
            if potential_check(model, 2.0)? && nonlocal_sign_ok {
                options.push((BlowupAssumption::TrapAndNonlocal, 2.0));
            }
            if options.is_empty() {
                return Ok(inconclusive(vec!["neither trap assumption holds".into()]));
            }
            // The tightest bound among the assumptions whose case applies.
            let best = options
                .iter()
                .filter_map(|&(a, k)| match_case(energy, im, x_norm, k).map(|c| (a, k, c)))
                .min_by(|x, y| (x.1 * energy).total_cmp(&(y.1 * energy)));
            match best {
                Some((assumption, k, case)) => Ok(BlowupVerdict {
                    case: Some(case),
                    assumption: Some(assumption),
                    bound: QuadraticBound { a: k * energy, b: dsigma0, c: sigma0 },
                    energy,
                    notes,
                }),
                None => Ok(inconclusive(vec!["no energy case applies".into()])),
            }
        }
        kind => Ok(inconclusive(vec![format!("no blow-up criterion for {kind}")])),
    }
}
