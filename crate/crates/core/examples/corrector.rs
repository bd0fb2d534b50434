//! Massive correctors on one lattice realization and the resulting a_hom estimate.

use std::sync::Arc;

use holehom::corrector::{compute_bundle, homogenized_estimate, BundleParts};
use holehom::elliptic::SolverConfig;
use holehom::field::{rasterize, Profile};
use holehom::geometry::{sample, GeometryParams};

fn main() -> holehom::error::Result<()> {
    let params: GeometryParams = serde_json::from_str(
        r#"{"generator": "lattice_iid", "box_side": 16, "dimension": 2,
            "radius_law": {"kind": "uniform", "lo": 0.1, "hi": 0.25}}"#,
    )?;
    let set = sample(&params, 1)?;
    let field = Arc::new(rasterize(&set, 128, &Profile::default())?);
    let t = 16.0 * 16.0;
    let bundle = compute_bundle(field, t, &SolverConfig::spectral(), BundleParts::ALL, 1)?;
    for s in bundle.stats() {
        println!(
            "{:<12} iterations {:>4}  residual {:.1e}",
            s.op, s.iterations, s.residual
        );
    }
    let est = homogenized_estimate(&bundle);
    println!("matrix fraction {:.4}", est.volume_fraction_matrix);
    for row in &est.a_hom {
        println!("a_hom  {:>9.5} {:>9.5}", row[0], row[1]);
    }
    println!("symmetry defect {:.2e}", est.symmetry_defect);
    Ok(())
}
