//! Var(a_hom) against box side; the log-log slope should sit near -d.

use holehom::ensemble::{variance_scaling, EnsembleConfig};

fn main() -> holehom::error::Result<()> {
    let cfg: EnsembleConfig = serde_json::from_str(
        r#"{"geometry": {"generator": "lattice_iid", "box_side": 4, "dimension": 2,
                "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.3333333333333333}},
            "schedule": [{"box_side": 4, "cells_per_side": 16}],
            "sample_count": 100, "master_seed": 2, "observables": ["a_hom"],
            "solver": {"preconditioner": "spectral"}}"#,
    )?;
    let (_, fit) = variance_scaling(
        &cfg,
        &[4.0, 8.0, 16.0, 32.0],
        holehom::ensemble::resolve_workers(None),
    )?;
    for (l, v) in &fit.points {
        println!("L = {l:<4} var {v:.3e}");
    }
    println!(
        "slope {:.3} [{:.3}, {:.3}]",
        fit.slope.value, fit.slope.ci_low, fit.slope.ci_high
    );
    Ok(())
}
