use std::f64::consts::PI;
use std::sync::Arc;

use gpps_core::kernels::{self, apply_nonlocal_2di, DipoleAxis};
use gpps_core::models::coefficient_audit;
use gpps_core::{Grid, Model, ModelError, ModelKind, ModelParams, PotentialSpec, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_for(kind: ModelKind, l: f64, n: usize) -> Arc<Grid> {
    Arc::new(Grid::cubic(kind.dim(), l, n).unwrap())
}

fn params(kind: ModelKind, beta: f64, lambda: f64, n: DipoleAxis) -> ModelParams {
    let p = ModelParams::new(kind, beta, lambda).with_axis(n);
    if kind.uses_epsilon() {
        p.with_epsilon(0.4)
    } else {
        p
    }
}

fn harmonic_state(grid: &Grid) -> Vec<C64> {
    let d = grid.dim() as f64;
    (0..grid.len())
        .map(|i| {
            let x = grid.node_coords(i);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            C64::new(PI.powf(-d / 4.0) * (-r2 / 2.0).exp(), 0.0)
        })
        .collect()
}

/// Smooth, localized, complex random state with unit mass.
fn random_state(grid: &Grid, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let centers: Vec<([f64; 3], C64, f64)> = (0..4)
        .map(|_| {
            let mut c = [0.0; 3];
            for v in c.iter_mut().take(d) {
                *v = rng.random_range(-1.0..1.0);
            }
            (c, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), rng.random_range(0.7..1.4))
        })
        .collect();
    let mut psi: Vec<C64> = (0..grid.len())
        .map(|i| {
            let x = grid.node_coords(i);
            centers
                .iter()
                .map(|(c, a, w)| {
                    let r2: f64 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum();
                    let phase = C64::from_polar(1.0, 0.3 * x[0] - 0.2 * x[d - 1]);
                    a * phase * (-r2 / (2.0 * w * w)).exp()
                })
                .sum()
        })
        .collect();
    let m = grid.norm2(&psi).sqrt();
    psi.iter_mut().for_each(|v| *v /= m);
    psi
}

fn inner(grid: &Grid, a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<C64>() * grid.cell_volume()
}

#[test]
fn harmonic_energies() {
    for (dim, expect, kind) in [(2, 1.0, ModelKind::Limit2D), (1, 0.5, ModelKind::Limit1D)] {
        let g = Arc::new(Grid::cubic(dim, 8.0, 64).unwrap());
        let model = Model::new(ModelParams::new(kind, 0.0, 0.0), Arc::clone(&g)).unwrap();
        let psi = harmonic_state(&g);
        let e = model.energy(&psi).unwrap();
        assert!((e.total - expect).abs() < 1e-8);
        let h = model.hamiltonian_apply(&psi).unwrap();
        let res: Vec<C64> = h.iter().zip(&psi).map(|(a, b)| a - b * expect).collect();
        assert!(g.norm2(&res).sqrt() < 1e-8);
    }
}

#[test]
fn coefficient_examples() {
    let g = grid_for(ModelKind::Quasi2DI, 8.0, 32);
    let psi = random_state(&g, 1);
    let rho: Vec<f64> = psi.iter().map(|c| c.norm_sqr()).collect();
    let p = ModelParams::new(ModelKind::Quasi2DI, 2.0, 0.0).with_epsilon(0.3);
    let w = Model::new(p, Arc::clone(&g)).unwrap().effective_potential(&psi).unwrap();
    let c = 2.0 / ((2.0 * PI).sqrt() * 0.3);
    for (a, r) in w.iter().zip(&rho) {
        assert!((a - c * r).abs() < 1e-14 * c);
    }

    let g1 = grid_for(ModelKind::Limit1D, 8.0, 32);
    let psi1 = random_state(&g1, 2);
    let magic = DipoleAxis::from_polar((1.0f64 / 3.0).sqrt().acos());
    let p = ModelParams::new(ModelKind::Limit1D, 1.5, 7.0).with_axis(magic);
    let w = Model::new(p, Arc::clone(&g1)).unwrap().effective_potential(&psi1).unwrap();
    for (a, c) in w.iter().zip(&psi1) {
        assert!((a - 1.5 / (2.0 * PI) * c.norm_sqr()).abs() < 1e-14);
    }

    // λ = β in the 2D limit gives 3n₃²β/√(2π).
    let n = DipoleAxis::from_polar(0.5);
    let p = ModelParams::new(ModelKind::Limit2D, 2.0, 2.0).with_axis(n);
    let expect = 3.0 * n.n3_sq() * 2.0 / (2.0 * PI).sqrt();
    assert!((p.local_coefficient().unwrap() - expect).abs() < 1e-14);
}

#[test]
fn coefficient_table_matches_formulas() {
    let (b, l, eps) = (1.3, -0.7, 0.35);
    let n = DipoleAxis::from_polar(0.8);
    let n3 = n.n3_sq();
    let s2 = (2.0 * PI).sqrt();
    let expected: [(ModelKind, f64, f64); 6] = [
        (ModelKind::Gpps3D, b - l, 3.0 * l),
        (ModelKind::Quasi2DI, (b - l + 3.0 * l * n3) / (s2 * eps), -1.5 * l),
        (ModelKind::Quasi2DII, (b - l + 3.0 * l * n3) / (s2 * eps), -1.5 * l),
        (
            ModelKind::Quasi1D,
            (b + 0.5 * l * (1.0 - 3.0 * n3)) / (2.0 * PI * eps * eps),
            -3.0 * l * (3.0 * n3 - 1.0) / (8.0 * s2 * eps),
        ),
        (ModelKind::Limit2D, (b - (1.0 - 3.0 * n3) * l) / s2, 0.0),
        (ModelKind::Limit1D, (b + 0.5 * l * (1.0 - 3.0 * n3)) / (2.0 * PI), 0.0),
    ];
    for (kind, local, nonlocal) in expected {
        let p = ModelParams::new(kind, b, l).with_axis(n);
        let p = if kind.uses_epsilon() { p.with_epsilon(eps) } else { p };
        assert!((p.local_coefficient().unwrap() - local).abs() < 1e-14, "{kind}");
        assert!((p.nonlocal_coefficient().unwrap() - nonlocal).abs() < 1e-14, "{kind}");
    }
    let table = coefficient_audit();
    assert_eq!(table.lines().count(), 7);
    println!("{table}");
}

#[test]
fn validation() {
    let g = grid_for(ModelKind::Quasi2DI, 8.0, 16);
    for kind in [ModelKind::Quasi2DI, ModelKind::Quasi2DII] {
        let r = Model::new(ModelParams::new(kind, 1.0, 1.0), Arc::clone(&g));
        assert!(matches!(r, Err(ModelError::MissingEpsilon(_))));
    }
    let r = Model::new(ModelParams::new(ModelKind::Gpps3D, 1.0, 1.0), Arc::clone(&g));
    assert!(matches!(r, Err(ModelError::Dimension { .. })));
    let warn = ModelParams::new(ModelKind::Limit2D, 1.0, 0.0).with_epsilon(0.1).validate().unwrap();
    assert_eq!(warn.len(), 1);
    let neg = PotentialSpec::Tabulated { values: vec![-1.0; g.len()] };
    let r = Model::new(ModelParams::new(ModelKind::Limit2D, 1.0, 0.0).with_potential(neg), Arc::clone(&g));
    assert!(matches!(r, Err(ModelError::NegativePotential(_))));
    let m = Model::new(ModelParams::new(ModelKind::Limit2D, 1.0, 0.0), Arc::clone(&g)).unwrap();
    let mut bad = vec![C64::new(0.0, 0.0); g.len()];
    bad[3] = C64::new(f64::NAN, 0.0);
    assert!(matches!(m.energy(&bad), Err(ModelError::NonFinite)));
}

#[test]
fn quasi2d_variants_agree_for_small_epsilon() {
    let g = grid_for(ModelKind::Quasi2DI, 8.0, 64);
    let psi = random_state(&g, 5);
    let n = DipoleAxis::from_polar(0.6);
    let w1 = Model::new(ModelParams::new(ModelKind::Quasi2DI, 1.0, 0.8).with_axis(n).with_epsilon(1e-3), Arc::clone(&g))
        .unwrap()
        .effective_potential(&psi)
        .unwrap();
    let w2 = Model::new(ModelParams::new(ModelKind::Quasi2DII, 1.0, 0.8).with_axis(n).with_epsilon(1e-3), Arc::clone(&g))
        .unwrap()
        .effective_potential(&psi)
        .unwrap();
    let d: f64 = w1.iter().zip(&w2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let s: f64 = w2.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(d < 1e-2 * s);
}

#[test]
fn hamiltonian_pairing_and_fourier_pairing_identities() {
    let n = DipoleAxis::normalized([0.4, -0.3, 0.8]).unwrap();
    for kind in ModelKind::ALL {
        let g = grid_for(kind, 7.0, if kind.dim() == 3 { 24 } else { 64 });
        let model = Model::new(params(kind, 1.7, 0.9, n), Arc::clone(&g)).unwrap();
        let psi = random_state(&g, 11);
        let e = model.energy(&psi).unwrap();
        let h = model.hamiltonian_apply(&psi).unwrap();
        let pairing = inner(&g, &h, &psi).re;
        assert!((pairing - e.hamiltonian_pairing()).abs() < 1e-9 * pairing.abs(), "{kind}");
        assert!((e.total - (e.kinetic + e.potential + e.contact + e.dipolar)).abs() <= 1e-12 * e.total.abs());

        // Nonlocal energy in Fourier vs physical-space pairing.
        if let Some(m) = model.nonlocal_multiplier() {
            let rho: Vec<f64> = psi.iter().map(|c| c.norm_sqr()).collect();
            let field = kernels::apply_real_multiplier(&g, &rho, m, false).unwrap();
            let phys: f64 = 0.5
                * model.nonlocal_coefficient()
                * g.integrate(&rho.iter().zip(&field).map(|(a, b)| a * b).collect::<Vec<_>>()).unwrap();
            assert!((phys - e.dipolar).abs() < 1e-10 * e.dipolar.abs(), "{kind}: {phys} {}", e.dipolar);
        }

        // Gauge invariance.
        let rot: Vec<C64> = psi.iter().map(|c| c * C64::from_polar(1.0, 0.77)).collect();
        let e2 = model.energy(&rot).unwrap();
        assert!((e2.total - e.total).abs() < 1e-12 * e.total.abs().max(1.0));
    }
}

#[test]
fn hamiltonian_is_energy_gradient() {
    let n = DipoleAxis::normalized([0.5, 0.1, 0.7]).unwrap();
    for kind in ModelKind::ALL {
        let g = grid_for(kind, 7.0, if kind.dim() == 3 { 20 } else { 48 });
        let model = Model::new(params(kind, 1.1, -0.8, n), Arc::clone(&g)).unwrap();
        let psi = random_state(&g, 21);
        let dir = random_state(&g, 22);
        let h = model.hamiltonian_apply(&psi).unwrap();
        let step = 1e-5;
        let shifted = |s: f64| -> f64 {
            let p: Vec<C64> = psi.iter().zip(&dir).map(|(a, b)| a + b * s).collect();
            model.energy(&p).unwrap().total
        };
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        let exact = 2.0 * inner(&g, &h, &dir).re;
        assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0), "{kind}: {fd} vs {exact}");
    }
}

#[test]
fn gpps3d_energy_matches_poisson_gradient_form() {
    let g = grid_for(ModelKind::Gpps3D, 6.0, 32);
    let n = DipoleAxis::normalized([0.2, 0.5, 0.8]).unwrap();
    let (beta, lambda) = (2.0, 1.3);
    let model = Model::new(params(ModelKind::Gpps3D, beta, lambda, n), Arc::clone(&g)).unwrap();
    let psi = random_state(&g, 3);
    let e = model.energy(&psi).unwrap();
    let rho: Vec<f64> = psi.iter().map(|c| c.norm_sqr()).collect();
    let l4 = g.integrate(&rho.iter().map(|r| r * r).collect::<Vec<_>>()).unwrap();
    // φ̂ = ρ̂/|ξ|²; ∂_j∂_n φ has symbol −ξ_j (n·ξ) φ̂.
    let rho_hat = g.forward_real(&rho).unwrap();
    let mut grad_sq = 0.0;
    for j in 0..3 {
        let mut comp: Vec<C64> = rho_hat
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let xi = g.node_symmetric_wavevector(i);
                let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                if k2 == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    -c * xi[j] * n.dot(xi) / k2
                }
            })
            .collect();
        g.inverse_in_place(&mut comp);
        grad_sq += g.norm2(&comp);
    }
    let expanded = 0.5 * (beta - lambda) * l4 + 1.5 * lambda * grad_sq;
    let ours = e.contact + e.dipolar;
    assert!((ours - expanded).abs() < 1e-9 * expanded.abs());
}

#[test]
fn quasi2d_i_dipolar_energy_double_integral() {
    // ρ = e^{-|x|²}/π has ρ̂ = e^{-|ξ|²/4}.
    let g = grid_for(ModelKind::Quasi2DI, 10.0, 128);
    let eps = 0.5;
    let lambda = 1.2;
    let n = DipoleAxis::from_polar(1.1);
    let psi: Vec<C64> = (0..g.len())
        .map(|i| {
            let x = g.node_coords(i);
            C64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt(), 0.0)
        })
        .collect();
    let model = Model::new(ModelParams::new(ModelKind::Quasi2DI, 0.0, lambda).with_axis(n).with_epsilon(eps), Arc::clone(&g)).unwrap();
    let e = model.energy(&psi).unwrap();
    // Fourier double integral on the lattice; the s-integral by adaptive quadrature.
    let rho: Vec<f64> = psi.iter().map(|c| c.norm_sqr()).collect();
    let rho_hat = g.forward_real(&rho).unwrap();
    let mut sum = 0.0;
    for (i, c) in rho_hat.iter().enumerate() {
        let xi = g.node_symmetric_wavevector(i);
        let r2 = xi[0] * xi[0] + xi[1] * xi[1];
        if r2 == 0.0 {
            continue;
        }
        let n_xi = n.perp_dot([xi[0], xi[1]]).powi(2) - n.n3_sq() * r2;
        let s_int = 2.0
            * quadrature::double_exponential::integrate(|s| (-0.5 * eps * eps * s * s).exp() / (r2 + s * s), 0.0, 40.0 / eps, 1e-14)
                .integral;
        sum += n_xi * s_int * c.norm_sqr();
    }
    // Lattice sum over ξ carries the Parseval weight (2π)²·Π1/(2L).
    let expect = -0.75 * lambda * (-1.0 / (4.0 * PI.powi(3))) * sum * g.spectral_weight() * (2.0 * PI).powi(2);
    assert!((e.dipolar - expect).abs() < 1e-8 * expect.abs(), "{} vs {expect}", e.dipolar);

    // Physical-space path.
    let phi = apply_nonlocal_2di(&g, &rho, eps, &n).unwrap();
    let phys = -0.75 * lambda * g.integrate(&rho.iter().zip(&phi).map(|(a, b)| a * b).collect::<Vec<_>>()).unwrap();
    assert!((phys - e.dipolar).abs() < 1e-10 * e.dipolar.abs());
}

#[test]
fn tabulated_and_lattice_potentials() {
    let g = grid_for(ModelKind::Limit2D, 6.0, 32);
    let spec = PotentialSpec::HarmonicPlusLattice { gamma: vec![1.0, 2.0], amplitude: 0.5, wavevector: vec![1.0] };
    let v = spec.evaluate(&g).unwrap();
    let w = spec.virial_weight(&g).unwrap();
    let tab = PotentialSpec::Tabulated { values: v.clone() };
    assert_eq!(tab.evaluate(&g).unwrap(), v);
    let i = g.len() / 2 + 5;
    let x = g.node_coords(i);
    let expect = 0.5 * x[0] * x[0] + 2.0 * x[1] * x[1] + 0.5 * (x[0].sin().powi(2) + x[1].sin().powi(2));
    assert!((v[i] - expect).abs() < 1e-14);
    let expect_w = x[0] * x[0] + 4.0 * x[1] * x[1] + 0.5 * (x[0] * (2.0 * x[0]).sin() + x[1] * (2.0 * x[1]).sin());
    assert!((w[i] - expect_w).abs() < 1e-14);
}

fn random_density_state(grid: &Grid, seed: u64) -> Vec<C64> {
    random_state(grid, seed).iter().map(|c| C64::new(c.norm(), 0.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quasi2d_ii_attractive_tilted_dipoles_have_nonnegative_dipolar_energy(
        seed in 0u64..10_000, lambda in -3.0f64..-0.01, theta in 0.0f64..(PI / 4.0)
    ) {
        let g = grid_for(ModelKind::Quasi2DII, 8.0, 32);
        let n = DipoleAxis::from_polar(theta);
        prop_assume!(n.n3_sq() >= 0.5);
        let model = Model::new(ModelParams::new(ModelKind::Quasi2DII, 0.0, lambda).with_axis(n).with_epsilon(0.5), Arc::clone(&g)).unwrap();
        let e = model.energy(&random_density_state(&g, seed)).unwrap();
        prop_assert!(e.dipolar >= -1e-12);
    }

    #[test]
    fn quasi1d_convex_part_nonnegative_under_uniqueness_conditions(
        seed in 0u64..10_000, beta in -2.0f64..5.0, lambda in -3.0f64..3.0, theta in 0.0f64..PI, eps in 0.1f64..1.0
    ) {
        let n = DipoleAxis::from_polar(theta);
        let a = 1.0 - 3.0 * n.n3_sq();
        let c1 = lambda * a >= 0.0 && beta - a * lambda >= 0.0;
        let c2 = lambda * a < 0.0 && beta + 0.5 * lambda * a >= 0.0;
        prop_assume!(c1 || c2);
        let g = grid_for(ModelKind::Quasi1D, 8.0, 64);
        let model = Model::new(ModelParams::new(ModelKind::Quasi1D, beta, lambda).with_axis(n).with_epsilon(eps), Arc::clone(&g)).unwrap();
        let e = model.energy(&random_density_state(&g, seed)).unwrap();
        prop_assert!(e.contact + e.dipolar >= -1e-12);
    }
}
