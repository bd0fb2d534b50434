//! Regularity radius, excess decay and hole filling for one realization.

use std::sync::Arc;

use holehom::corrector::{compute_bundle, BundleParts};
use holehom::elliptic::SolverConfig;
use holehom::field::{rasterize, Profile};
use holehom::geometry::{sample, GeometryParams};
use holehom::quantify::{
    a_harmonic_sample, excess, hole_filling_ratio, regularity_radius, QuantifyConfig,
};

fn main() -> holehom::error::Result<()> {
    let params: GeometryParams = serde_json::from_str(
        r#"{"generator": "lattice_iid", "box_side": 16, "dimension": 2,
            "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.3333333333333333}}"#,
    )?;
    let set = sample(&params, 3)?;
    let field = Arc::new(rasterize(&set, 128, &Profile::default())?);
    let solver = SolverConfig::spectral();
    let bundle = compute_bundle(field.clone(), 64.0, &solver, BundleParts::ALL, 3)?;
    let center = [8.0, 8.0];

    let reg = regularity_radius(&bundle, &QuantifyConfig::default(), &center)?;
    match reg.rstar {
        Some(r) => println!("r* = {r:.3} (C = {:.3})", reg.threshold_c),
        None => println!("r* beyond the largest radius"),
    }

    let u = a_harmonic_sample(&field, &solver, 4, &center)?;
    for r in [0.5, 1.0, 2.0, 4.0] {
        let e = excess(&u.grad, &bundle, r, &center)?;
        println!("excess at r = {r:<4} {:.3e}", e.value);
    }

    let hf = hole_filling_ratio(&bundle, 0, None)?;
    println!("hole filling eps_hat {:.3}", hf.eps_hat);
    Ok(())
}
