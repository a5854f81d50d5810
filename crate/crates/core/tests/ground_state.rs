use std::f64::consts::PI;
use std::sync::Arc;

use gpps_core::ground_state::{
    cb_by_quotient_descent, cb_by_radial_shooting, classify_regime, default_cb, divergence_exponent, estimate_cb,
    gn_quotient, leading_inverse_square_coefficient, minimize_gradient_flow, random_initial_state,
    scaling_probe_2d_i, scaling_probe_2d_ii, townes_profile, Condition, FlowOptions, FlowOutcome, ProbeGrid, Verdict,
};
use gpps_core::{DipoleAxis, Grid, GroundStateError, Model, ModelKind, ModelParams, PotentialSpec, Wavefunction, C64};
use proptest::prelude::*;

fn gaussian_2d(x: [f64; 3]) -> C64 {
    C64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt(), 0.0)
}

#[test]
fn gaussian_quotient_is_two_pi() {
    // ‖∇f‖² = π, ‖f‖² = π, ‖f‖₄⁴ = π/2 for f = e^{−|x|²/2}.
    let g = Grid::cubic(2, 10.0, 128).unwrap();
    let f: Vec<C64> = (0..g.len()).map(|i| gaussian_2d(g.node_coords(i)) * PI.sqrt()).collect();
    let j = gn_quotient(&g, &f).unwrap();
    assert!((j - 2.0 * PI).abs() < 1e-10);
    assert!(default_cb().value <= j);
}

#[test]
fn cb_estimators_agree() {
    let shoot = cb_by_radial_shooting();
    let g = Grid::cubic(2, 16.0, 256).unwrap();
    let descent = cb_by_quotient_descent(&g, 1e-3).unwrap();
    assert!((shoot - descent).abs() / shoot < 1e-3, "{shoot} {descent}");
    let cb = estimate_cb(&g, 1e-3).unwrap();
    assert!(cb.value >= shoot.min(descent) && cb.value <= shoot.max(descent));

    // Pohozaev: ‖∇Q‖² = ‖Q‖² = ½‖Q‖₄⁴, so J(Q) = ‖Q‖²/2.
    let q = townes_profile(1e-3);
    let mass: f64 = q.samples.iter().map(|s| 2.0 * PI * s.0 * s.1 * s.1 * q.dr).sum();
    assert!((mass / 2.0 - shoot).abs() / shoot < 1e-5);
    // Published Townes amplitude Q(0) = 2.206200864...
    assert!((q.center - 2.206_200_864).abs() < 1e-6);

    assert!(matches!(cb_by_quotient_descent(&Grid::cubic(1, 8.0, 16).unwrap(), 1e-3), Err(GroundStateError::EstimatorGrid(1))));
}

fn quasi2d(kind: ModelKind, beta: f64, lambda: f64, n: DipoleAxis, eps: f64) -> ModelParams {
    ModelParams::new(kind, beta, lambda).with_axis(n).with_epsilon(eps)
}

#[test]
fn regime_examples() {
    let cb = default_cb().value;
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DI, 2.0, 1.0, DipoleAxis::Z, 0.1), cb);
    assert_eq!(v.verdict, Verdict::ExistsUniquePositive);
    assert_eq!(v.matched, Some(Condition::A1Prime));
    assert!(v.holds(Condition::A1));
    assert!((v.margin - 1.0).abs() < 1e-14);

    let n = DipoleAxis::from_polar(0.5f64.acos());
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DII, 0.0, 1.0, n, 0.1), cb);
    assert_eq!((v.verdict, v.matched), (Verdict::NotExists, Some(Condition::B1DoublePrime)));

    let eps = 0.2;
    let edge = -(2.0 * PI).sqrt() * cb * eps;
    let minus = classify_regime(&quasi2d(ModelKind::Quasi2DI, edge * 0.5, 0.0, n, eps), cb);
    assert_eq!((minus.verdict, minus.matched), (Verdict::Exists, Some(Condition::A1)));
    let plus = classify_regime(&quasi2d(ModelKind::Quasi2DI, edge * 1.5, 0.0, n, eps), cb);
    assert_eq!((plus.verdict, plus.matched), (Verdict::NotExists, Some(Condition::A3)));
    assert!(plus.margin > 0.0);
    let tie = classify_regime(&quasi2d(ModelKind::Quasi2DI, edge, 0.0, n, eps), cb);
    assert_eq!(tie.verdict, Verdict::Undetermined);

    // B2 needs an exactly in-plane dipole.
    let planar = DipoleAxis::from_polar(PI / 2.0);
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DII, 3.0, 1.0, planar, 0.1), cb);
    assert_eq!(v.matched, Some(Condition::B2Prime));
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DII, 0.5, 1.0, planar, 0.1), cb);
    assert_eq!(v.matched, Some(Condition::B2));
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DII, 3.0, -1.0, DipoleAxis::from_polar(0.3), 0.1), cb);
    assert_eq!(v.matched, Some(Condition::B3Prime));
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DII, 1.0, -1.0, DipoleAxis::from_polar(0.3), 0.1), cb);
    assert_eq!(v.matched, Some(Condition::B3));
    let v = classify_regime(&quasi2d(ModelKind::Quasi2DII, 1.0, -1.0, DipoleAxis::from_polar(1.2), 0.1), cb);
    assert_eq!(v.matched, Some(Condition::B2DoublePrime));

    let v = classify_regime(&ModelParams::new(ModelKind::Gpps3D, 2.0, -1.0), cb);
    assert_eq!((v.verdict, v.matched), (Verdict::ExistsUniquePositive, Some(Condition::D3D)));
    let v = classify_regime(&ModelParams::new(ModelKind::Gpps3D, 2.0, 2.5), cb);
    assert_eq!(v.verdict, Verdict::NotExists);

    // Quasi-2D without ε cannot be classified.
    let v = classify_regime(&ModelParams::new(ModelKind::Quasi2DI, 1.0, 0.0), cb);
    assert_eq!(v.verdict, Verdict::Undetermined);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quasi1d_always_exists(beta in -50.0f64..50.0, lambda in -50.0f64..50.0, theta in 0.0f64..PI, eps in 0.01f64..2.0) {
        let p = quasi2d(ModelKind::Quasi1D, beta, lambda, DipoleAxis::from_polar(theta), eps);
        let v = classify_regime(&p, 5.85);
        prop_assert!(matches!(v.verdict, Verdict::Exists | Verdict::ExistsUniquePositive));
        let a = 1.0 - 3.0 * p.axis.n3_sq();
        let unique = (lambda * a >= 0.0 && beta - a * lambda >= 0.0) || (lambda * a < 0.0 && beta + 0.5 * lambda * a >= 0.0);
        prop_assert_eq!(v.verdict == Verdict::ExistsUniquePositive, unique);
    }

    #[test]
    fn verdicts_are_scale_consistent_without_the_cb_term(
        kind_ix in 0usize..4, beta in -5.0f64..5.0, lambda in -5.0f64..5.0, theta in 0.0f64..PI, t in 0.1f64..10.0
    ) {
        let kind = [ModelKind::Quasi2DI, ModelKind::Quasi2DII, ModelKind::Quasi1D, ModelKind::Gpps3D][kind_ix];
        let n = DipoleAxis::from_polar(theta);
        let p = |b: f64, l: f64| {
            let p = ModelParams::new(kind, b, l).with_axis(n);
            if kind.uses_epsilon() { p.with_epsilon(0.3) } else { p }
        };
        let a = classify_regime(&p(beta, lambda), 0.0);
        let b = classify_regime(&p(t * beta, t * lambda), 0.0);
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(a.matched, b.matched);
    }

    #[test]
    fn verdict_agrees_with_matched_inequality(
        beta in -5.0f64..5.0, lambda in -5.0f64..5.0, theta in 0.0f64..PI, eps in 0.05f64..1.0
    ) {
        let cb = 5.85;
        let n = DipoleAxis::from_polar(theta);
        let p = quasi2d(ModelKind::Quasi2DI, beta, lambda, n, eps);
        let v = classify_regime(&p, cb);
        let edge = -(2.0 * PI).sqrt() * cb * eps;
        let n3 = n.n3_sq();
        match v.matched {
            Some(Condition::A3) => prop_assert!(beta + 0.5 * lambda * (1.0 - 3.0 * n3) < edge),
            Some(Condition::A1Prime) => prop_assert!(lambda >= 0.0 && beta >= lambda),
            Some(Condition::A1) => prop_assert!(lambda >= 0.0 && beta - lambda > edge && beta < lambda),
            Some(Condition::A2Prime) => prop_assert!(lambda < 0.0 && beta + 0.5 * (1.0 + 3.0 * (2.0 * n3 - 1.0).abs()) * lambda >= 0.0),
            Some(Condition::A2) => prop_assert!(lambda < 0.0),
            None => prop_assert_eq!(v.verdict, Verdict::Undetermined),
            Some(other) => prop_assert!(false, "unexpected {other}"),
        }
    }
}

fn flow_model(kind: ModelKind, params: ModelParams, l: f64, n: usize) -> (Arc<Grid>, Model) {
    let g = Arc::new(Grid::cubic(kind.dim(), l, n).unwrap());
    let m = Model::new(params, Arc::clone(&g)).unwrap();
    (g, m)
}

#[test]
fn harmonic_ground_states() {
    for (kind, expect) in [(ModelKind::Limit2D, 1.0), (ModelKind::Limit1D, 0.5)] {
        let (g, m) = flow_model(kind, ModelParams::new(kind, 0.0, 0.0), 8.0, 128);
        let r = minimize_gradient_flow(&m, &random_initial_state(&g, 1), &FlowOptions::default()).unwrap();
        assert_eq!(r.outcome, FlowOutcome::Converged);
        assert!((r.energy.total - expect).abs() < 1e-6);
        let d = kind.dim() as f64;
        for (i, v) in r.state.values().iter().enumerate() {
            let x = g.node_coords(i);
            let exact = PI.powf(-d / 4.0) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
            assert!((v - exact).norm() < 1e-6);
        }
    }
}

#[test]
fn flow_properties_on_dipolar_model() {
    let n = DipoleAxis::from_polar(0.4);
    let params = quasi2d(ModelKind::Quasi2DI, 6.0, 1.5, n, 0.5);
    let (g, m) = flow_model(ModelKind::Quasi2DI, params, 8.0, 64);
    let tol = 1e-8;
    let opts = FlowOptions { tol, ..FlowOptions::default() };
    let init = random_initial_state(&g, 7);
    let r = minimize_gradient_flow(&m, &init, &opts).unwrap();
    assert_eq!(r.outcome, FlowOutcome::Converged);

    // Energy non-increasing after the first ten steps.
    let tail = &r.iterations[r.iterations.len() / 10..];
    for w in r.iterations[10..].windows(2).chain(tail.windows(2)) {
        assert!(w[1].energy <= w[0].energy + 1e-13 * w[0].energy.abs());
    }

    // Lagrange multiplier consistency.
    let psi = r.state.values();
    let h = m.hamiltonian_apply(psi).unwrap();
    let mu = r.chemical_potential;
    let res: Vec<C64> = h.iter().zip(psi).map(|(a, b)| a - b * mu).collect();
    assert!(g.norm2(&res).sqrt() < 10.0 * tol);

    // Phase stripped and invariant under a rotated start.
    let worst_im = psi.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    let worst_neg = psi.iter().fold(0.0f64, |m, c| m.max(-c.re));
    assert!(worst_im < 10.0 * tol && worst_neg < 10.0 * tol, "{worst_im} {worst_neg}");
    let rotated = Wavefunction::new(Arc::clone(&g), init.values().iter().map(|c| c * C64::from_polar(1.0, 2.1)).collect()).unwrap();
    let r2 = minimize_gradient_flow(&m, &rotated, &opts).unwrap();
    let diff = psi.iter().zip(r2.state.values()).fold(0.0f64, |a, (x, y)| a.max((x.norm() - y.norm()).abs()));
    assert!(diff < 1e-8);
}

#[test]
fn flow_rejects_unnormalized_start() {
    let (g, m) = flow_model(ModelKind::Limit1D, ModelParams::new(ModelKind::Limit1D, 0.0, 0.0), 8.0, 32);
    let mut psi = random_initial_state(&g, 2);
    psi.values_mut().iter_mut().for_each(|c| *c *= 1.1);
    assert!(matches!(minimize_gradient_flow(&m, &psi, &FlowOptions::default()), Err(GroundStateError::InitialMass(_))));
}

#[test]
fn supercritical_attraction_is_flagged() {
    // Limit2D coefficient β/√(2π) below −C_b makes the energy unbounded below.
    let cb = default_cb().value;
    let beta = -3.0 * cb * (2.0 * PI).sqrt();
    let (g, m) = flow_model(ModelKind::Limit2D, ModelParams::new(ModelKind::Limit2D, beta, 0.0), 8.0, 64);
    let r = minimize_gradient_flow(&m, &random_initial_state(&g, 3), &FlowOptions::default()).unwrap();
    assert!(matches!(r.outcome, FlowOutcome::NonexistenceSuspected { .. }), "{:?}", r.outcome);
}

/// Radial ground state of `−½(φ″ + φ′/r) + ½r²φ + gφ³ = μφ` by backward-Euler
/// normalized gradient flow on a cell-centred finite-difference mesh.
fn radial_ground_state(g: f64, r_max: f64, cells: usize) -> (f64, Vec<f64>) {
    let h = r_max / cells as f64;
    let r: Vec<f64> = (0..cells).map(|j| (j as f64 + 0.5) * h).collect();
    let mut phi: Vec<f64> = r.iter().map(|r| (-r * r / 2.0).exp()).collect();
    let tau = 0.5;
    for _ in 0..3000 {
        // Tridiagonal (I + τH) with H = −½Δ_r + ½r² + gφ².
        let mut lower = vec![0.0; cells];
        let mut diag = vec![0.0; cells];
        let mut upper = vec![0.0; cells];
        for j in 0..cells {
            let rp = r[j] + h / 2.0;
            let rm = r[j] - h / 2.0;
            let a = 0.5 * rp / (r[j] * h * h);
            let c = 0.5 * rm / (r[j] * h * h);
            diag[j] = 1.0 + tau * (a + c + 0.5 * r[j] * r[j] + g * phi[j] * phi[j]);
            if j + 1 < cells {
                upper[j] = -tau * a;
            }
            if j > 0 {
                lower[j] = -tau * c;
            }
        }
        // Thomas algorithm.
        let mut cp = vec![0.0; cells];
        let mut dp = vec![0.0; cells];
        cp[0] = upper[0] / diag[0];
        dp[0] = phi[0] / diag[0];
        for j in 1..cells {
            let m = diag[j] - lower[j] * cp[j - 1];
            cp[j] = upper[j] / m;
            dp[j] = (phi[j] - lower[j] * dp[j - 1]) / m;
        }
        let mut next = vec![0.0; cells];
        next[cells - 1] = dp[cells - 1];
        for j in (0..cells - 1).rev() {
            next[j] = dp[j] - cp[j] * next[j + 1];
        }
        let mass: f64 = next.iter().zip(&r).map(|(p, r)| 2.0 * PI * r * p * p * h).sum();
        phi = next.iter().map(|p| p / mass.sqrt()).collect();
    }
    (h, phi)
}

#[test]
fn limit2d_matches_radial_solver() {
    let beta = 8.0;
    let (g, m) = flow_model(ModelKind::Limit2D, ModelParams::new(ModelKind::Limit2D, beta, 0.0), 8.0, 128);
    let opts = FlowOptions { tol: 1e-9, ..FlowOptions::default() };
    let r = minimize_gradient_flow(&m, &random_initial_state(&g, 4), &opts).unwrap();
    let (h, radial) = radial_ground_state(beta / (2.0 * PI).sqrt(), 8.0, 4000);
    let sample = |rr: f64| {
        let x = rr / h - 0.5;
        if x <= 0.0 {
            return radial[0];
        }
        let j = x.floor() as usize;
        if j + 1 >= radial.len() {
            return 0.0;
        }
        let t = x - j as f64;
        radial[j] * (1.0 - t) + radial[j + 1] * t
    };
    let mut worst = 0.0f64;
    for (i, v) in r.state.values().iter().enumerate() {
        let x = g.node_coords(i);
        worst = worst.max((v.norm() - sample((x[0] * x[0] + x[1] * x[1]).sqrt())).abs());
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn uniqueness_under_a1_prime() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let opts = FlowOptions { tol: 1e-10, ..FlowOptions::default() };
    for draw in 0..5 {
        let lambda = rng.random_range(0.0..2.0);
        let beta = lambda + rng.random_range(0.0..4.0);
        let n = DipoleAxis::from_polar(rng.random_range(0.0..PI));
        let params = quasi2d(ModelKind::Quasi2DI, beta, lambda, n, 0.5);
        assert!(classify_regime(&params, default_cb().value).holds(Condition::A1Prime));
        let (g, m) = flow_model(ModelKind::Quasi2DI, params, 8.0, 64);
        let a = minimize_gradient_flow(&m, &random_initial_state(&g, 100 + draw), &opts).unwrap();
        let b = minimize_gradient_flow(&m, &random_initial_state(&g, 200 + draw), &opts).unwrap();
        let diff = a.state.values().iter().zip(b.state.values()).fold(0.0f64, |d, (x, y)| d.max((x.norm() - y.norm()).abs()));
        assert!(diff < 1e-6, "draw {draw}: {diff}");
    }
}

fn probe_grid() -> ProbeGrid {
    ProbeGrid { half_extents: [8.0, 8.0], points: [128, 128] }
}

#[test]
fn delta_probe_below_threshold_descends() {
    let cb = default_cb().value;
    let eps = 0.3;
    let beta = -2.0 * (2.0 * PI).sqrt() * cb * eps;
    let params = quasi2d(ModelKind::Quasi2DI, beta, 0.0, DipoleAxis::Z, eps);
    assert_eq!(classify_regime(&params, cb).verdict, Verdict::NotExists);
    let ladder = [1.0, 0.5, 0.25, 0.125];
    let rep = scaling_probe_2d_i(&params, &probe_grid(), &gaussian_2d, &ladder).unwrap();
    assert!(rep.strictly_decreasing && rep.unbounded_descent);
    // The trap adds an O(δ²) term that masks the power law at δ = 1; without it the fit is clean.
    let free = params.with_potential(PotentialSpec::Zero);
    let rep = scaling_probe_2d_i(&free, &probe_grid(), &gaussian_2d, &ladder).unwrap();
    assert!(rep.strictly_decreasing);
    assert!((rep.divergence_exponent - 2.0).abs() < 0.2, "{}", rep.divergence_exponent);
}

#[test]
fn delta_probe_coefficients() {
    // ‖∇Φ‖² = 1 and ‖Φ‖₄⁴ = 1/(2π) for the unit-mass Gaussian.
    let eps = 0.4;
    for (beta, lambda, theta) in [(0.0, 0.0, 0.0), (-3.0, 0.0, 0.0), (2.0, 0.0, 1.0)] {
        let n = DipoleAxis::from_polar(theta);
        let params = quasi2d(ModelKind::Quasi2DI, beta, lambda, n, eps).with_potential(PotentialSpec::Zero);
        let rep = scaling_probe_2d_i(&params, &probe_grid(), &gaussian_2d, &[1.0, 0.5, 0.25, 0.125]).unwrap();
        let g_eff = (beta + 0.5 * lambda * (1.0 - 3.0 * n.n3_sq())) / ((2.0 * PI).sqrt() * eps);
        let expect = 0.5 * (1.0 + g_eff / (2.0 * PI));
        let fit = leading_inverse_square_coefficient(&rep);
        assert!((fit - expect).abs() < 0.02 * expect.abs(), "{fit} vs {expect}");
        if beta == 0.0 {
            assert!(rep.points.windows(2).all(|w| w[1].energy.total > w[0].energy.total));
        }
    }
}

#[test]
fn anisotropic_probe_dipolar_divergence() {
    let params = quasi2d(ModelKind::Quasi2DII, -100.0, 50.0, DipoleAxis::Z, 0.5);
    assert_eq!(classify_regime(&params, default_cb().value).matched, Some(Condition::B1DoublePrime));
    let base = ProbeGrid { half_extents: [8.0, 8.0], points: [64, 64] };
    let rep = scaling_probe_2d_ii(&params, &base, &gaussian_2d, &[0.25, 0.125, 0.0625], 10.0).unwrap();
    assert!(rep.strictly_decreasing && rep.unbounded_descent);
    assert!((rep.divergence_exponent - 3.0).abs() < 0.2, "{}", rep.divergence_exponent);

    // Without dipoles only the ε₁⁻² kinetic and contact terms remain.
    let params = quasi2d(ModelKind::Quasi2DII, 1.0, 0.0, DipoleAxis::Z, 0.5).with_potential(PotentialSpec::Zero);
    let rep = scaling_probe_2d_ii(&params, &base, &gaussian_2d, &[1.0, 0.5, 0.25], 10.0).unwrap();
    assert!((rep.divergence_exponent - 2.0).abs() < 1e-6, "{}", rep.divergence_exponent);
    // C₁ = ½‖∂ₓΦ‖², C₂ = ½‖∂ᵧΦ‖², contact (β/√(2π)ε)‖Φ‖₄⁴/(2κ).
    let kappa: f64 = 10.0;
    let c = 0.5 * 0.5 + 0.5 * 0.5 / (kappa * kappa) + 0.5 * (1.0 / ((2.0 * PI).sqrt() * 0.5)) / (2.0 * PI * kappa);
    for p in &rep.points {
        assert!((p.energy.total * p.scale * p.scale - c).abs() < 1e-9);
    }
}

#[test]
fn probes_reject_bad_ladders_and_underresolution() {
    let params = quasi2d(ModelKind::Quasi2DI, 1.0, 0.0, DipoleAxis::Z, 0.5);
    assert!(matches!(scaling_probe_2d_i(&params, &probe_grid(), &gaussian_2d, &[1.0]), Err(GroundStateError::Ladder)));
    let coarse = ProbeGrid { half_extents: [8.0, 8.0], points: [16, 16] };
    assert!(matches!(
        scaling_probe_2d_i(&params, &coarse, &gaussian_2d, &[1.0, 0.5]),
        Err(GroundStateError::UnderResolved { .. })
    ));
    let (p, rms) = divergence_exponent(&[1.0, 0.5, 0.25], &[1.0, 8.0, 64.0]);
    assert!((p - 3.0).abs() < 1e-12 && rms < 1e-12);
}
