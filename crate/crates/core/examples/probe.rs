//! Locality of the massive flux under a resample far from the center, and the oscillation probe.

use std::sync::Arc;

use holehom::corrector::{compute_bundle, BundleParts};
use holehom::elliptic::SolverConfig;
use holehom::field::{rasterize, Profile};
use holehom::geometry::{sample, GeometryParams};
use holehom::quantify::{locality_probe, oscillation_probe, ProbeSetup};

fn main() -> holehom::error::Result<()> {
    let params: GeometryParams = serde_json::from_str(
        r#"{"generator": "lattice_iid", "box_side": 16, "dimension": 2,
            "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.25}}"#,
    )?;
    let set = sample(&params, 5)?;
    let field = Arc::new(rasterize(&set, 64, &Profile::default())?);
    let setup = ProbeSetup {
        params,
        cells_per_side: 64,
        profile: Profile::default(),
        t: 4.0,
        solver: SolverConfig::spectral(),
        kappa: 1.0,
    };
    let bundle = compute_bundle(field, setup.t, &setup.solver, BundleParts::ALL, 5)?;
    let center = [8.0, 8.0];
    let loc = locality_probe(&setup, &set, &bundle, &[2.0, 4.0, 6.0], &center, 6)?;
    for row in &loc.rows {
        println!(
            "resample outside R = {:<4} flux change {:.3e}",
            row.radius, row.value
        );
    }
    println!("fitted rate {:?}", loc.rate);
    let osc = oscillation_probe(&setup, &set, &bundle, &center, 1.0, 2.0, &center, 6)?;
    println!("oscillation {osc:.3e}");
    Ok(())
}
