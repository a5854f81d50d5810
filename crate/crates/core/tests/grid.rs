use std::f64::consts::PI;
use std::sync::Arc;

use gpps_core::grid::{make_grid, Wavefunction};
use gpps_core::{Grid, GridError, C64};
use proptest::prelude::*;

fn gaussian(grid: &Grid, width: f64) -> Vec<C64> {
    (0..grid.len())
        .map(|i| {
            let x = grid.node_coords(i);
            C64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * width * width)).exp(), 0.0)
        })
        .collect()
}

#[test]
fn one_dimensional_tables() {
    let g = make_grid::<f64>(1, &[8.0], &[16]).unwrap();
    assert_eq!(g.axis(0).spacing(), 1.0);
    let k = g.axis(0).wavenumbers();
    assert_eq!(k[0], 0.0);
    for j in 1..8 {
        assert!((k[j] - PI / 8.0 * j as f64).abs() < 1e-15);
        assert!((k[16 - j] + PI / 8.0 * j as f64).abs() < 1e-15);
    }
    assert!((k[8] + PI).abs() < 1e-15);
    assert_eq!(k.iter().filter(|&&v| v == 0.0).count(), 1);
}

#[test]
fn node_counts_and_kmax() {
    assert_eq!(make_grid::<f64>(2, &[8.0, 8.0], &[64, 64]).unwrap().len(), 4096);
    let g = make_grid::<f64>(3, &[8.0], &[64]).unwrap();
    for a in 0..3 {
        let kmax = g.axis(a).wavenumbers().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((kmax - 4.0 * PI).abs() < 1e-12);
        assert!((g.axis(a).spacing() * 64.0 - 16.0).abs() < 1e-14);
    }
}

#[test]
fn rejects_bad_grids() {
    assert!(matches!(make_grid::<f64>(1, &[8.0], &[15]), Err(GridError::Points { .. })));
    assert!(matches!(make_grid::<f64>(1, &[8.0], &[6]), Err(GridError::Points { .. })));
    assert!(matches!(make_grid::<f64>(2, &[-1.0], &[16]), Err(GridError::Extent { .. })));
    assert!(matches!(make_grid::<f64>(4, &[1.0], &[16]), Err(GridError::Dimension(4))));
    let g = Grid::cubic(1, 8.0, 16).unwrap();
    assert!(matches!(g.forward(&[C64::new(1.0, 0.0); 5]), Err(GridError::SizeMismatch { .. })));
}

#[test]
fn constant_and_plane_wave_transforms() {
    let g = Grid::cubic(2, 8.0, 16).unwrap();
    let spec = g.forward(&vec![C64::new(1.0, 0.0); g.len()]).unwrap();
    assert!((spec[0].re - 256.0).abs() < 1e-11);
    assert!(spec[1..].iter().all(|c| c.norm() < 1e-11));

    let k1 = g.axis(0).wavenumbers()[3];
    let wave: Vec<C64> = (0..g.len())
        .map(|i| C64::from_polar(1.0, k1 * g.node_coords(i)[0]))
        .collect();
    let spec = g.forward(&wave).unwrap();
    let big = spec.iter().filter(|c| c.norm() > 1e-9).count();
    assert_eq!(big, 1);
}

#[test]
fn gaussian_transform_pair() {
    for dim in 1..=2 {
        let g = Grid::cubic(dim, 10.0, 128).unwrap();
        let spec = g.forward(&gaussian(&g, 1.0)).unwrap();
        for (i, c) in spec.iter().enumerate() {
            let k = g.node_wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let exact = (2.0 * PI).powf(dim as f64 / 2.0) * (-k2 / 2.0).exp();
            assert!((c.re - exact).abs() < 1e-8 && c.im.abs() < 1e-8);
        }
    }
}

#[test]
fn quadrature_examples() {
    let g = Arc::new(Grid::cubic(1, 8.0, 64).unwrap());
    let mut psi = Wavefunction::from_fn(Arc::clone(&g), |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
    psi.normalize();
    assert!((psi.mass() - 1.0).abs() < 1e-10);
    let moment: Vec<f64> = (0..g.len())
        .map(|i| g.node_coords(i)[0].powi(2) * psi.values()[i].norm_sqr())
        .collect();
    assert!((g.integrate(&moment).unwrap() - 0.5).abs() < 1e-10);

    let g2 = Grid::cubic(2, 8.0, 32).unwrap();
    assert!((g2.integrate(&vec![1.0; g2.len()]).unwrap() - 256.0).abs() < 1e-10);
}

#[test]
fn derivative_examples() {
    let g = Grid::cubic(1, 10.0, 128).unwrap();
    let f = gaussian(&g, 1.0);
    let d = &g.gradient(&f).unwrap()[0];
    for i in 0..g.len() {
        let x = g.node_coords(i)[0];
        assert!((d[i].re + x * f[i].re).abs() < 1e-8);
    }
    let zero = &g.gradient(&vec![C64::new(2.0, 0.0); g.len()]).unwrap()[0];
    assert!(zero.iter().all(|c| c.norm() < 1e-13));

    let k = g.axis(0).wavenumbers()[5];
    let wave: Vec<C64> = (0..g.len()).map(|i| C64::from_polar(1.0, k * g.node_coords(i)[0])).collect();
    let d = &g.gradient(&wave).unwrap()[0];
    for i in 0..g.len() {
        assert!((d[i] - C64::new(0.0, k) * wave[i]).norm() < 1e-12);
    }
}

#[test]
fn gradient_energy_matches_spectral_sum() {
    let g = Grid::cubic(2, 8.0, 64).unwrap();
    let f: Vec<C64> = (0..g.len())
        .map(|i| {
            let x = g.node_coords(i);
            C64::new((-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp(), x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp())
        })
        .collect();
    let grad = g.gradient(&f).unwrap();
    let phys: f64 = grad.iter().map(|d| g.norm2(d)).sum();
    let spec = g.forward(&f).unwrap();
    let k2 = g.k2_table();
    let s: f64 = spec.iter().zip(&k2).map(|(c, k)| c.norm_sqr() * k).sum::<f64>() * g.spectral_weight();
    assert!((phys - s).abs() / s < 1e-9);
}

#[test]
fn real_field_has_hermitian_spectrum() {
    let g = Grid::cubic(2, 4.0, 16).unwrap();
    let f: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin() + 0.1 * i as f64 % 1.3).collect();
    let spec = g.forward_real(&f).unwrap();
    for i in 0..g.len() {
        let idx = g.unravel(i);
        let j0 = (16 - idx[0]) % 16;
        let j1 = (16 - idx[1]) % 16;
        let partner = spec[j0 * 16 + j1];
        assert!((spec[i] - partner.conj()).norm() < 1e-12 * 256.0);
    }
}

fn smooth_field(grid: &Grid, coeffs: &[(f64, f64)]) -> Vec<C64> {
    (0..grid.len())
        .map(|i| {
            let x = grid.node_coords(i);
            let mut v = C64::new(0.0, 0.0);
            for (m, &(a, b)) in coeffs.iter().enumerate() {
                let k = grid.axis(0).dual_spacing() * m as f64;
                v += C64::new(a, b) * C64::from_polar(1.0, k * x[0] - 0.5 * k * x[1]);
            }
            v * (-(x[0] * x[0] + x[1] * x[1]) / 8.0).exp()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_round_trip_and_linearity(
        a in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
        b in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
        s in -3.0f64..3.0,
    ) {
        let g = Grid::cubic(2, 8.0, 32).unwrap();
        let f = smooth_field(&g, &a);
        let h = smooth_field(&g, &b);
        let ff = g.forward(&f).unwrap();
        let back = g.inverse(&ff).unwrap();
        let scale = f.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for (x, y) in f.iter().zip(&back) {
            prop_assert!((x - y).norm() <= 1e-12 * scale.max(1e-300));
        }
        let p = g.norm2(&f);
        prop_assert!((p - g.spectral_norm2(&ff)).abs() <= 1e-10 * p);

        let comb: Vec<C64> = f.iter().zip(&h).map(|(x, y)| x * s + y).collect();
        let fc = g.forward(&comb).unwrap();
        let fh = g.forward(&h).unwrap();
        let top = fc.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for i in 0..g.len() {
            prop_assert!((fc[i] - (ff[i] * s + fh[i])).norm() <= 1e-12 * top.max(1.0));
        }
    }
}

#[test]
fn spectral_resampling() {
    let coarse = Arc::new(Grid::new(&[6.0, 5.0], &[48, 40]).unwrap());
    let fine = Arc::new(Grid::new(&[6.0, 5.0], &[96, 128]).unwrap());
    // Off-centre so the odd modes are populated.
    let f = |x: [f64; 3]| C64::from_polar((-((x[0] - 0.4).powi(2) + (x[1] + 0.3).powi(2)) / 0.8).exp(), 0.7 * x[0]);
    let up = Wavefunction::from_fn(Arc::clone(&coarse), f).resample(&fine).unwrap();
    for (i, v) in up.values().iter().enumerate() {
        assert!((v - f(fine.node_coords(i))).norm() < 1e-10, "{i} {v} {}", f(fine.node_coords(i)));
    }
    let down = up.resample(&coarse).unwrap();
    for (i, v) in down.values().iter().enumerate() {
        assert!((v - f(coarse.node_coords(i))).norm() < 1e-10);
    }
    let other = Arc::new(Grid::new(&[7.0, 5.0], &[48, 40]).unwrap());
    assert!(matches!(up.resample(&other), Err(GridError::Incompatible)));
}
