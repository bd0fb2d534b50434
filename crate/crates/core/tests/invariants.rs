use std::sync::Arc;

use proptest::prelude::*;

use holehom::corrector::{compute_bundle, BundleParts};
use holehom::elliptic::{
    solve_spectral, MassiveOperator, Preconditioner, SolverConfig, SpectralOperator,
};
use holehom::field::{rasterize, Grid, GridField, Profile, Support};
use holehom::geometry::{check_admissible, sample, GeometryParams};
use holehom::quantify::hole_filling_ratio;

fn params(kind: u8, l: f64) -> GeometryParams {
    let v = match kind % 3 {
        0 => serde_json::json!({"generator": "lattice_iid", "box_side": l, "dimension": 2,
            "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.3}}),
        1 => serde_json::json!({"generator": "poisson_hardcore", "box_side": l, "dimension": 2,
            "intensity": 1.0, "radius_cap": 0.3}),
        _ => serde_json::json!({"generator": "random_parking", "box_side": l, "dimension": 2,
            "exclusion_radius": 1.0, "rejection_factor": 20.0}),
    };
    serde_json::from_value(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samplers_are_pure_and_admissible(kind in 0u8..3, seed: u64) {
        let p = params(kind, 6.0);
        let a = sample(&p, seed).unwrap();
        let b = sample(&p, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let rep = check_admissible(&a);
        prop_assert!(rep.diameter_ok && rep.separation_ok, "{:?}", rep);
    }

    #[test]
    fn admissibility_is_translation_invariant(kind in 0u8..3, seed: u64, sx in -20.0f64..20.0, sy in -20.0f64..20.0) {
        let set = sample(&params(kind, 6.0), seed).unwrap();
        let moved = set.translated(&[sx, sy]);
        let (r0, r1) = (check_admissible(&set), check_admissible(&moved));
        prop_assert_eq!(r0.diameter_ok, r1.diameter_ok);
        prop_assert_eq!(r0.separation_ok, r1.separation_ok);
        prop_assert!((r0.min_separation_ratio - r1.min_separation_ratio).abs() <= 1e-9 * r0.min_separation_ratio.max(1.0)
            || r0.min_separation_ratio == r1.min_separation_ratio);
    }

    #[test]
    fn rasterized_fields_are_coherent_and_elliptic(kind in 0u8..3, seed: u64, lo in 0.5f64..1.0, spread in 0.0f64..3.0) {
        let set = sample(&params(kind, 4.0), seed).unwrap();
        let profile = Profile::Iid { a_minus: lo, a_plus: lo + spread, seed };
        let f = rasterize(&set, 32, &profile).unwrap();
        for c in 0..f.grid.len() {
            prop_assert_eq!(f.cell_value[c] > 0.0, f.matrix_mask[c]);
            for k in 0..2 {
                let nb = f.grid.forward(c, k);
                let e = f.edge_conductance[k][c];
                if f.matrix_mask[c] && f.matrix_mask[nb] {
                    prop_assert!(e >= f.a_minus && e <= f.a_plus);
                } else {
                    prop_assert_eq!(e, 0.0);
                }
            }
        }
    }

    #[test]
    fn massive_operator_is_positive(seed: u64, t in 0.1f64..1e4, x in proptest::collection::vec(-1.0f64..1.0, 64)) {
        let set = sample(&params(0, 2.0), seed).unwrap();
        let f = rasterize(&set, 16, &Profile::default()).unwrap();
        let op = MassiveOperator::new(&f, t, Preconditioner::Diagonal).unwrap();
        let m = op.matrix_len();
        let v: Vec<f64> = (0..m).map(|i| x[i % x.len()] + 1e-3).collect();
        let mut y = vec![0.0; m];
        op.apply_compressed(&v, &mut y);
        let q: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!(q > 0.0);
    }

    #[test]
    fn periodic_poisson_solution_has_zero_mean(data in proptest::collection::vec(-1.0f64..1.0, 256)) {
        let g = Grid::new(2, 16, 3.0).unwrap();
        let u = solve_spectral(&GridField::scalar(g, Support::Everywhere, data), SpectralOperator::NegLaplacian);
        let mean = u.values().iter().sum::<f64>() / 256.0;
        prop_assert!(mean.abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn hole_filling_energy_grows_with_radius(seed: u64) {
        let set = sample(&params(0, 8.0), seed).unwrap();
        let f = Arc::new(rasterize(&set, 32, &Profile::default()).unwrap());
        let b = compute_bundle(f, 16.0, &SolverConfig::spectral(), BundleParts::FLUX_ONLY, seed).unwrap();
        let hf = hole_filling_ratio(&b, 0, None).unwrap();
        for w in hf.rows.windows(2) {
            prop_assert!(w[1].value >= w[0].value);
        }
    }
}
