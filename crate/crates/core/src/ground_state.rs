//! Ground states on the unit-mass sphere, existence regimes, the
//! Gagliardo–Nirenberg constant and scaling-family energy probes.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use num_traits::Zero;
use serde::Serialize;

use crate::error::GroundStateError;
use crate::grid::{cast, Grid, Scalar, Wavefunction};
use crate::models::{EnergyBreakdown, Model, ModelKind, ModelParams};
use crate::special::linear_fit;

/// Treats `|n₃|` below this as an in-plane dipole.
const IN_PLANE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Gradient flow

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    /// Initial pseudo-time step; `None` picks `0.1·h_min²`.
    pub tau: Option<f64>,
    /// Upper bound for the adaptively grown step.
    pub tau_max: f64,
    /// Stop once `‖Δφ‖∞` per unit of effective step drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Energies below this are taken as unbounded descent.
    pub energy_floor: f64,
    /// Fraction of spectral mass beyond `(2/3)k_max` that signals collapse.
    pub tail_alarm: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tau: None,
            tau_max: 1.0,
            tol: 1e-8,
            max_iterations: 200_000,
            max_halvings: 5,
            energy_floor: -1e6,
            tail_alarm: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tau: f64,
    pub energy: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FlowOutcome {
    Converged,
    /// The energy kept falling or the state collapsed to grid scale.
    NonexistenceSuspected { iteration: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct GroundState<T: Scalar> {
    pub state: Wavefunction<T>,
    pub energy: EnergyBreakdown,
    pub chemical_potential: f64,
    pub outcome: FlowOutcome,
    pub iterations: Vec<IterationRecord>,
    pub halvings: usize,
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Rotates `ψ` so that its dominant values are real and positive.
pub fn strip_global_phase<T: Scalar>(psi: &mut [Complex<T>]) {
    let anchor = psi
        .iter()
        .fold(Complex::<T>::zero(), |s, c| s + *c * c.norm());
    let r = anchor.norm();
    if r > T::zero() {
        let rot = anchor.conj() / r;
        psi.iter_mut().for_each(|c| *c = *c * rot);
    }
}

struct FlowStep<T: Scalar> {
    next: Vec<Complex<T>>,
    residual: f64,
}

/// One semi-implicit step with the Lagrange multiplier `μ = ⟨Hφ, φ⟩` and a
/// stabilizing shift `α`:
/// `(1 + τ(½|ξ|² + α))φ̃ = (1 + τ(α + μ − V − W))φ`, then renormalize.
/// Eigenstates are exact fixed points for every `τ`.
fn flow_step<T: Scalar>(model: &Model<T>, phi: &[Complex<T>], tau: T) -> Result<FlowStep<T>, GroundStateError> {
    let grid = model.grid();
    let w = model.effective_potential(phi)?;
    let total: Vec<T> = model.potential().iter().zip(&w).map(|(&v, &wi)| v + wi).collect();
    let (lo, hi) = total
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &u| (lo.min(u), hi.max(u)));
    let mut spec = phi.to_vec();
    grid.forward_in_place(&mut spec);
    let kinetic = spec
        .iter()
        .zip(model.half_k2())
        .fold(T::zero(), |s, (c, &k)| s + c.norm_sqr() * k)
        * grid.spectral_weight();
    let interaction = phi
        .iter()
        .zip(&total)
        .fold(T::zero(), |s, (c, &u)| s + c.norm_sqr() * u)
        * grid.cell_volume();
    let mu = (kinetic + interaction) / grid.norm2(phi);
    let alpha = ((lo + hi) * cast(0.5) - mu).max(T::zero());
    let one = T::one();
    let mut next: Vec<Complex<T>> = phi
        .iter()
        .zip(&total)
        .map(|(&p, &u)| p * (one + tau * (alpha + mu - u)))
        .collect();
    grid.forward_in_place(&mut next);
    for (c, &k) in next.iter_mut().zip(model.half_k2()) {
        *c = *c / (one + tau * (k + alpha));
    }
    grid.inverse_in_place(&mut next);
    let norm = grid.norm2(&next).sqrt();
    next.iter_mut().for_each(|c| *c = *c / norm);
    // Low modes see the effective step τ/(1 + τα); the change is measured per unit of it.
    let effective = to_f64(tau / (one + tau * alpha));
    let residual = next
        .iter()
        .zip(phi)
        .fold(0.0f64, |m, (a, b)| m.max(to_f64((*a - *b).norm())))
        / effective;
    Ok(FlowStep { next, residual })
}

/// Normalized gradient flow from `init` towards a minimizer of the model
/// energy on the unit-mass sphere.
///
/// The step grows geometrically while the energy decreases and is halved
/// (with the step retried) when it rises after the first ten iterations.
pub fn minimize_gradient_flow<T: Scalar>(
    model: &Model<T>,
    init: &Wavefunction<T>,
    options: &FlowOptions,
) -> Result<GroundState<T>, GroundStateError> {
    let grid = Arc::clone(model.grid());
    if init.grid().shape() != grid.shape() {
        return Err(crate::error::GridError::SizeMismatch { expected: grid.len(), found: init.values().len() }.into());
    }
    let mass = to_f64(init.mass());
    if !((mass - 1.0).abs() <= 1e-8) {
        return Err(GroundStateError::InitialMass(mass));
    }
    let h = to_f64(grid.min_spacing());
    let mut tau = options.tau.unwrap_or(0.1 * h * h);
    let mut tau_max = options.tau_max.max(tau);
    let mut phi = init.values().to_vec();
    let mut energy = model.energy(&phi)?;
    let mut log = Vec::new();
    let mut halvings = 0;
    let mut outcome = None;
    let mut residual = f64::INFINITY;
    let mut iteration = 0;

    while iteration < options.max_iterations {
        iteration += 1;
        let step = flow_step(model, &phi, cast(tau))?;
        let trial = match model.energy(&step.next) {
            Ok(e) => e,
            Err(_) => {
                outcome = Some(FlowOutcome::NonexistenceSuspected { iteration, reason: "energy became non-finite".into() });
                break;
            }
        };
        let slack = 1e-13 * energy.total.abs().max(1.0);
        if iteration > 10 && trial.total > energy.total + slack {
            halvings += 1;
            if halvings > options.max_halvings {
                return Err(GroundStateError::StepHalving(options.max_halvings));
            }
            tau *= 0.5;
            tau_max = tau;
            iteration -= 1;
            continue;
        }
        phi = step.next;
        energy = trial;
        residual = step.residual;
        log.push(IterationRecord { iteration, tau, energy: energy.total, residual });

        if energy.total < options.energy_floor {
            outcome = Some(FlowOutcome::NonexistenceSuspected { iteration, reason: format!("energy fell to {:e}", energy.total) });
            break;
        }
        if iteration % 50 == 0 {
            let spec = grid.forward(&phi)?;
            let tail = grid.spectral_tail_fraction(&spec);
            if tail > options.tail_alarm {
                outcome = Some(FlowOutcome::NonexistenceSuspected {
                    iteration,
                    reason: format!("spectral tail fraction {tail:e} indicates collapse"),
                });
                break;
            }
        }
        if residual < options.tol {
            outcome = Some(FlowOutcome::Converged);
            break;
        }
        tau = (tau * 1.05).min(tau_max);
    }
    let Some(outcome) = outcome else {
        return Err(GroundStateError::IterationCap { iterations: iteration, residual });
    };
    strip_global_phase(&mut phi);
    let chemical_potential = energy.hamiltonian_pairing();
    let state = Wavefunction::new(grid, phi)?;
    Ok(GroundState { state, energy, chemical_potential, outcome, iterations: log, halvings })
}

/// Smooth, localized, complex starting state with unit mass, reproducible
/// from `seed`.
pub fn random_initial_state(grid: &Arc<Grid<f64>>, seed: u64) -> Wavefunction<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let mut center = [0.0; 3];
    let mut width = [1.0; 3];
    let mut tilt = [0.0; 3];
    for a in 0..d {
        center[a] = rng.random_range(-0.5..0.5);
        width[a] = rng.random_range(0.7..1.4);
        tilt[a] = rng.random_range(-1.0..1.0);
    }
    let bump = rng.random_range(0.0..0.5);
    let mut psi = Wavefunction::from_fn(Arc::clone(grid), |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for a in 0..d {
            r2 += ((x[a] - center[a]) / width[a]).powi(2);
            phase += tilt[a] * x[a];
        }
        let amp = (-0.5 * r2).exp() * (1.0 + bump * (x[0] - center[0]));
        Complex::from_polar(amp, phase)
    });
    psi.normalize();
    psi
}

// ---------------------------------------------------------------------------
// Regime classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    Exists,
    ExistsUniquePositive,
    NotExists,
    Undetermined,
}

impl Verdict {
    fn rank(self) -> u8 {
        match self {
            Verdict::NotExists => 3,
            Verdict::ExistsUniquePositive => 2,
            Verdict::Exists => 1,
            Verdict::Undetermined => 0,
        }
    }
}

/// Named sufficient conditions of the existence theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Condition {
    A1,
    A2,
    A1Prime,
    A2Prime,
    A3,
    B1,
    B2,
    B3,
    B1Prime,
    B2Prime,
    B3Prime,
    B1DoublePrime,
    B2DoublePrime,
    B3DoublePrime,
    CAlways,
    C1,
    C2,
    D3D,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::A1 => "A1",
            Condition::A2 => "A2",
            Condition::A1Prime => "A1′",
            Condition::A2Prime => "A2′",
            Condition::A3 => "A3(iii)",
            Condition::B1 => "B1",
            Condition::B2 => "B2",
            Condition::B3 => "B3",
            Condition::B1Prime => "B1′",
            Condition::B2Prime => "B2′",
            Condition::B3Prime => "B3′",
            Condition::B1DoublePrime => "B1″",
            Condition::B2DoublePrime => "B2″",
            Condition::B3DoublePrime => "B3″",
            Condition::CAlways => "C-always",
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::D3D => "D3D",
        }
    }

    /// Verdict the condition implies when it holds.
    pub fn implies(self) -> Verdict {
        use Condition::*;
        match self {
            A1 | A2 | B1 | B2 | B3 | CAlways => Verdict::Exists,
            A1Prime | A2Prime | B1Prime | B2Prime | B3Prime | C1 | C2 | D3D => Verdict::ExistsUniquePositive,
            A3 | B1DoublePrime | B2DoublePrime | B3DoublePrime => Verdict::NotExists,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for RegimeVerdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RegimeVerdict", 4)?;
        st.serialize_field("verdict", &self.verdict)?;
        st.serialize_field("matched_condition", &self.matched.map(Condition::label))?;
        st.serialize_field("margin", &self.margin)?;
        let all: Vec<_> = self
            .evaluated
            .iter()
            .map(|c| serde_json::json!({"condition": c.condition.label(), "holds": c.holds, "margin": c.margin}))
            .collect();
        st.serialize_field("evaluated", &all)?;
        st.end()
    }
}

/// One condition evaluated on a parameter set. `margin` is the signed
/// distance from the boundary of its governing inequality, positive on the
/// side where the condition holds; for pure sign conditions it is the
/// smallest of the quantities whose signs decide it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub holds: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub matched: Option<Condition>,
    pub margin: f64,
    /// Every condition relevant to the model, whether or not it holds.
    pub evaluated: Vec<ConditionCheck>,
}

impl RegimeVerdict {
    pub fn holds(&self, c: Condition) -> bool {
        self.evaluated.iter().any(|e| e.condition == c && e.holds)
    }
}

/// Sign side-condition of a regime condition, with the distance to its boundary.
#[derive(Clone, Copy)]
struct Gate {
    open: bool,
    distance: f64,
}

impl Gate {
    const OPEN: Gate = Gate { open: true, distance: 0.0 };

    fn new(open: bool, distance: f64) -> Self {
        Self { open, distance: distance.abs() }
    }
}

#[derive(Clone, Copy)]
enum Inequality {
    Strict,
    NonStrict,
}
use Inequality::{NonStrict, Strict};

/// `inequality` is `LHS − RHS`; a closed gate makes the margin minus its distance.
fn gated(condition: Condition, gate: Gate, inequality: f64, kind: Inequality) -> ConditionCheck {
    let ok = match kind {
        Strict => inequality > 0.0,
        NonStrict => inequality >= 0.0,
    };
    let margin = if gate.open { inequality } else { -gate.distance };
    ConditionCheck { condition, holds: gate.open && ok, margin }
}

/// Evaluates the existence, uniqueness and nonexistence conditions for the
/// model kind, with `cb` the Gagliardo–Nirenberg constant. Boundary cases
/// that no strict inequality covers come back `Undetermined`, as do the
/// limit kinds and quasi models without a confinement parameter.
pub fn classify_regime(params: &ModelParams, cb: f64) -> RegimeVerdict {
    let (b, l) = (params.beta, params.lambda);
    let n3_sq = params.axis.n3_sq();
    let eps = params.epsilon.unwrap_or(f64::NAN);
    let threshold = -(2.0 * std::f64::consts::PI).sqrt() * cb * eps;
    let in_plane = params.axis.n3().abs() <= IN_PLANE;
    let evaluated = match params.kind {
        _ if params.kind.uses_epsilon() && !(eps > 0.0) => Vec::new(),
        ModelKind::Quasi2DI => {
            let a2_lhs = b + 0.5 * (1.0 + 3.0 * (2.0 * n3_sq - 1.0).abs()) * l;
            let a3_lhs = b + 0.5 * l * (1.0 - 3.0 * n3_sq);
            let (pos, neg) = (Gate::new(l >= 0.0, l), Gate::new(l < 0.0, l));
            vec![
                gated(Condition::A1, pos, b - l - threshold, Strict),
                gated(Condition::A2, neg, a2_lhs - threshold, Strict),
                gated(Condition::A1Prime, pos, b - l, NonStrict),
                gated(Condition::A2Prime, neg, a2_lhs, NonStrict),
                gated(Condition::A3, Gate::OPEN, threshold - a3_lhs, Strict),
            ]
        }
        ModelKind::Quasi2DII => {
            let b3_lhs = b - (1.0 - 3.0 * n3_sq) * l;
            let n3_abs = params.axis.n3().abs();
            let zero = Gate::new(l == 0.0, l);
            let planar = Gate::new(l > 0.0 && in_plane, if l > 0.0 { n3_abs } else { l });
            let steep = Gate::new(l < 0.0 && n3_sq >= 0.5, if l < 0.0 { n3_sq - 0.5 } else { l });
            vec![
                gated(Condition::B1, zero, b - threshold, Strict),
                gated(Condition::B2, planar, b - l - threshold, Strict),
                gated(Condition::B3, steep, b3_lhs - threshold, Strict),
                gated(Condition::B1Prime, zero, b, NonStrict),
                gated(Condition::B2Prime, planar, b - l, NonStrict),
                gated(Condition::B3Prime, steep, b3_lhs, NonStrict),
                gated(Condition::B1DoublePrime, Gate::new(!in_plane, n3_abs), l, Strict),
                gated(Condition::B2DoublePrime, Gate::OPEN, (-l).min(0.5 - n3_sq), Strict),
                gated(Condition::B3DoublePrime, zero, threshold - b, Strict),
            ]
        }
        ModelKind::Quasi1D => {
            let a = 1.0 - 3.0 * n3_sq;
            let la = l * a;
            vec![
                gated(Condition::CAlways, Gate::OPEN, f64::INFINITY, Strict),
                gated(Condition::C1, Gate::OPEN, la.min(b - a * l), NonStrict),
                gated(Condition::C2, Gate::new(la < 0.0, la), b + 0.5 * la, NonStrict),
            ]
        }
        ModelKind::Gpps3D => vec![gated(Condition::D3D, Gate::OPEN, b.min(l + b / 2.0).min(b - l), NonStrict)],
        ModelKind::Limit2D | ModelKind::Limit1D => Vec::new(),
    };

    let best = evaluated
        .iter()
        .filter(|c| c.holds)
        .max_by_key(|c| c.condition.implies().rank());
    let (verdict, matched, margin) = match (params.kind, best) {
        (_, Some(c)) => (c.condition.implies(), Some(c.condition), c.margin),
        // The 3D statement is an equivalence: outside the window there is no ground state.
        (ModelKind::Gpps3D, None) => {
            let c = evaluated[0];
            (Verdict::NotExists, None, -c.margin)
        }
        (_, None) => {
            let m = evaluated.iter().map(|c| c.margin).fold(f64::NEG_INFINITY, f64::max);
            (Verdict::Undetermined, None, m)
        }
    };
    RegimeVerdict { verdict, matched, margin, evaluated }
}

// ---------------------------------------------------------------------------
// Gagliardo–Nirenberg constant

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CbMethod {
    QuotientDescent,
    RadialShooting,
    /// Shooting value cross-checked against descent.
    CrossValidated,
    UserOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GNConstant {
    pub value: f64,
    pub method: CbMethod,
    /// Relative spread between the estimators.
    pub accuracy: f64,
}

impl GNConstant {
    pub fn user(value: f64) -> Self {
        Self { value, method: CbMethod::UserOverride, accuracy: 0.0 }
    }
}

/// `‖∇f‖²‖f‖²/‖f‖₄⁴` on a 2D grid.
pub fn gn_quotient(grid: &Grid<f64>, f: &[Complex<f64>]) -> Result<f64, GroundStateError> {
    if grid.dim() != 2 {
        return Err(GroundStateError::EstimatorGrid(grid.dim()));
    }
    let spec = grid.forward(f)?;
    let k2 = grid.k2_table();
    let grad = spec.iter().zip(&k2).map(|(c, k)| c.norm_sqr() * k).sum::<f64>() * grid.spectral_weight();
    let mass = grid.norm2(f);
    let quartic = grid.integrate(&f.iter().map(|c| c.norm_sqr().powi(2)).collect::<Vec<_>>())?;
    Ok(grad * mass / quartic)
}

/// Descent on `log J` from a Gaussian: each step solves
/// `(1 + τ(|ξ|²/A + 1/B))f⁺ = f + τ·2f³/C` with `A = ‖∇f‖²`, `B = ‖f‖²`, `C = ‖f‖₄⁴`.
pub fn cb_by_quotient_descent(grid: &Grid<f64>, tol: f64) -> Result<f64, GroundStateError> {
    if grid.dim() != 2 {
        return Err(GroundStateError::EstimatorGrid(grid.dim()));
    }
    let k2 = grid.k2_table();
    let w = grid.spectral_weight();
    let mut f: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.node_coords(i);
            (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()
        })
        .collect();
    let tau = 0.25;
    let mut last = f64::INFINITY;
    let cap = 20_000;
    for it in 0..cap {
        let spec = grid.forward_real(&f)?;
        let a = spec.iter().zip(&k2).map(|(c, k)| c.norm_sqr() * k).sum::<f64>() * w;
        let b = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() * w;
        let c = grid.integrate(&f.iter().map(|v| v.powi(4)).collect::<Vec<_>>())?;
        let j = a * b / c;
        if (last - j).abs() <= tol * 1e-3 * j && it > 10 {
            return Ok(j);
        }
        last = j;
        let mut rhs: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v + tau * 2.0 * v.powi(3) / c, 0.0)).collect();
        grid.forward_in_place(&mut rhs);
        for (z, &k) in rhs.iter_mut().zip(&k2) {
            *z /= 1.0 + tau * (k / a + 1.0 / b);
        }
        grid.inverse_in_place(&mut rhs);
        f = rhs.iter().map(|z| z.re).collect();
    }
    Err(GroundStateError::IterationCap { iterations: cap, residual: last })
}

/// Positive radial solution of `Q″ + Q′/r − Q + Q³ = 0` found by bisection
/// on `Q(0)`; returns `J(Q)` from radial integrals.
pub fn cb_by_radial_shooting() -> f64 {
    let profile = townes_profile(1e-3);
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut grad, mut mass, mut quartic) = (0.0, 0.0, 0.0);
    // Trapezoid on the uniform radial mesh; the integrands vanish at r = 0.
    for (i, &(r, q, dq)) in profile.samples.iter().enumerate() {
        let wgt = if i == 0 || i + 1 == profile.samples.len() { 0.5 } else { 1.0 } * profile.dr * r;
        grad += wgt * dq * dq;
        mass += wgt * q * q;
        quartic += wgt * q.powi(4);
    }
    (two_pi * grad) * (two_pi * mass) / (two_pi * quartic)
}

/// Radial Townes profile on a uniform mesh.
#[derive(Debug, Clone)]
pub struct TownesProfile {
    pub center: f64,
    pub dr: f64,
    /// `(r, Q, Q′)`.
    pub samples: Vec<(f64, f64, f64)>,
}

impl TownesProfile {
    /// Linear interpolation of `Q`; zero beyond the mesh.
    pub fn value(&self, r: f64) -> f64 {
        let x = r / self.dr;
        let i = x.floor() as usize;
        if i + 1 >= self.samples.len() {
            return 0.0;
        }
        let t = x - i as f64;
        // Cubic Hermite on (Q, Q′).
        let (_, q0, d0) = self.samples[i];
        let (_, q1, d1) = self.samples[i + 1];
        let h = self.dr;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * q0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * q1 + (t3 - t2) * h * d1
    }
}

enum ShotFate {
    Crossed,
    TurnedUp,
}

fn shoot(q0: f64, dr: f64, r_max: f64, keep: bool) -> (ShotFate, Vec<(f64, f64, f64)>) {
    // Series start: Q ≈ q0 + (q0 − q0³)r²/4.
    let c = (q0 - q0.powi(3)) / 4.0;
    let mut r = dr;
    let mut y = [q0 + c * r * r, 2.0 * c * r];
    let mut out = Vec::new();
    if keep {
        out.push((0.0, q0, 0.0));
        out.push((r, y[0], y[1]));
    }
    let rhs = |r: f64, y: [f64; 2]| [y[1], -y[1] / r + y[0] - y[0].powi(3)];
    while r < r_max {
        let k1 = rhs(r, y);
        let k2 = rhs(r + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
        let k3 = rhs(r + dr / 2.0, [y[0] + dr / 2.0 * k2[0], y[1] + dr / 2.0 * k2[1]]);
        let k4 = rhs(r + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
        for j in 0..2 {
            y[j] += dr / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        r += dr;
        if y[0] < 0.0 {
            return (ShotFate::Crossed, out);
        }
        if y[1] > 0.0 {
            return (ShotFate::TurnedUp, out);
        }
        if keep {
            out.push((r, y[0], y[1]));
        }
    }
    (ShotFate::TurnedUp, out)
}

/// Shoots for the ground-state Townes profile with radial step `dr`.
pub fn townes_profile(dr: f64) -> TownesProfile {
    let (mut lo, mut hi) = (1.5, 3.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match shoot(mid, dr, 40.0, false).0 {
            ShotFate::Crossed => hi = mid,
            ShotFate::TurnedUp => lo = mid,
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let center = 0.5 * (lo + hi);
    let (_, mut samples) = shoot(center, dr, 40.0, true);
    // Drop the runaway tail where the trajectory departs from decay.
    let cut = samples.iter().position(|s| s.1 < 1e-7).unwrap_or(samples.len());
    samples.truncate(cut);
    TownesProfile { center, dr, samples }
}

/// Runs both estimators and returns the shooting value, which lies inside
/// the bracket they span.
pub fn estimate_cb(grid: &Grid<f64>, tol: f64) -> Result<GNConstant, GroundStateError> {
    let descent = cb_by_quotient_descent(grid, tol)?;
    let shooting = cb_by_radial_shooting();
    let spread = (descent - shooting).abs() / shooting;
    if spread > tol {
        return Err(GroundStateError::EstimatorMismatch { first: descent, second: shooting });
    }
    Ok(GNConstant { value: shooting, method: CbMethod::CrossValidated, accuracy: spread })
}

/// Session-wide `C_b`, estimated once on a 256² grid over `[-16, 16)²`.
pub fn default_cb() -> GNConstant {
    static CB: OnceLock<GNConstant> = OnceLock::new();
    *CB.get_or_init(|| {
        let grid = Grid::cubic(2, 16.0, 256).expect("valid estimator grid");
        estimate_cb(&grid, 1e-3).expect("C_b estimators agree")
    })
}

// ---------------------------------------------------------------------------
// Scaling probes

/// Grid and scale ladder for a probe. The grid is stretched with the
/// scaling so the sampled profile sees the same resolution at every rung.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub half_extents: [f64; 2],
    pub points: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub scale: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub points: Vec<ProbePoint>,
    pub strictly_decreasing: bool,
    /// Strictly decreasing and the last rung at least 10 below the first.
    pub unbounded_descent: bool,
    /// `p` in `|E| ∝ scale^{−p}` from a log-log fit.
    pub divergence_exponent: f64,
    pub fit_residual: f64,
}

fn check_ladder(scales: &[f64]) -> Result<(), GroundStateError> {
    if scales.len() < 2 || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(GroundStateError::Ladder);
    }
    Ok(())
}

fn probe_energy(
    params: &ModelParams,
    base: &ProbeGrid,
    stretch: [f64; 2],
    profile: &dyn Fn([f64; 3]) -> Complex<f64>,
    scale: f64,
) -> Result<EnergyBreakdown, GroundStateError> {
    let grid = Arc::new(Grid::new(
        &[base.half_extents[0] * stretch[0], base.half_extents[1] * stretch[1]],
        &base.points,
    )?);
    let amp = 1.0 / (stretch[0] * stretch[1]).sqrt();
    let psi: Vec<Complex<f64>> = (0..grid.len())
        .map(|i| {
            let x = grid.node_coords(i);
            profile([x[0] / stretch[0], x[1] / stretch[1], 0.0]) * amp
        })
        .collect();
    let leakage = (grid.norm2(&psi) - 1.0).abs();
    if leakage > 1e-8 {
        return Err(GroundStateError::UnderResolved { scale, leakage });
    }
    let model = Model::new(params.clone(), grid)?;
    Ok(model.energy(&psi)?)
}

fn report(points: Vec<ProbePoint>) -> ProbeReport {
    let strictly_decreasing = points.windows(2).all(|w| w[1].energy.total < w[0].energy.total);
    let first = points.first().unwrap().energy.total;
    let last = points.last().unwrap().energy.total;
    let unbounded_descent = strictly_decreasing && last < first - 10.0;
    let (divergence_exponent, fit_residual) = divergence_exponent(
        &points.iter().map(|p| p.scale).collect::<Vec<_>>(),
        &points.iter().map(|p| p.energy.total).collect::<Vec<_>>(),
    );
    ProbeReport { points, strictly_decreasing, unbounded_descent, divergence_exponent, fit_residual }
}

/// `p` and the fit residual in `log|E| = −p·log(scale) + c`.
pub fn divergence_exponent(scales: &[f64], energies: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let y: Vec<f64> = energies.iter().map(|e| e.abs().ln()).collect();
    let (slope, _, rms) = linear_fit(&x, &y);
    (-slope, rms)
}

/// Energies of `Φ_δ(x) = δ^{−1}Φ(x/δ)` for each `δ`. `profile` must have
/// unit mass; it is sampled on a copy of `base` stretched by `δ`.
pub fn scaling_probe_2d_i(
    params: &ModelParams,
    base: &ProbeGrid,
    profile: &dyn Fn([f64; 3]) -> Complex<f64>,
    deltas: &[f64],
) -> Result<ProbeReport, GroundStateError> {
    check_ladder(deltas)?;
    let points = deltas
        .iter()
        .map(|&d| Ok(ProbePoint { scale: d, energy: probe_energy(params, base, [d, d], profile, d)? }))
        .collect::<Result<Vec<_>, GroundStateError>>()?;
    Ok(report(points))
}

/// Energies of the anisotropic family `ε₁^{−1/2}ε₂^{−1/2}Φ(x/ε₁, y/ε₂)` with `ε₂ = κε₁`.
pub fn scaling_probe_2d_ii(
    params: &ModelParams,
    base: &ProbeGrid,
    profile: &dyn Fn([f64; 3]) -> Complex<f64>,
    eps1: &[f64],
    kappa: f64,
) -> Result<ProbeReport, GroundStateError> {
    check_ladder(eps1)?;
    if !(kappa > 0.0) {
        return Err(GroundStateError::Ladder);
    }
    let points = eps1
        .iter()
        .map(|&e| Ok(ProbePoint { scale: e, energy: probe_energy(params, base, [e, kappa * e], profile, e)? }))
        .collect::<Result<Vec<_>, GroundStateError>>()?;
    Ok(report(points))
}

/// Leading `1/δ²` coefficient from `E(δ) = a/δ² + b`.
pub fn leading_inverse_square_coefficient(report: &ProbeReport) -> f64 {
    let x: Vec<f64> = report.points.iter().map(|p| p.scale.powi(-2)).collect();
    let y: Vec<f64> = report.points.iter().map(|p| p.energy.total).collect();
    linear_fit(&x, &y).0
}
