//! Monte Carlo ensemble of a_hom and r* over independent boxes.

use holehom::ensemble::{run_ensemble, EnsembleConfig};

fn main() -> holehom::error::Result<()> {
    let cfg: EnsembleConfig = serde_json::from_str(
        r#"{"geometry": {"generator": "lattice_iid", "box_side": 8, "dimension": 2,
                "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.3333333333333333}},
            "schedule": [{"box_side": 8, "cells_per_side": 32}, {"box_side": 16, "cells_per_side": 64}],
            "sample_count": 20, "master_seed": 9, "observables": ["a_hom", "rstar"],
            "solver": {"preconditioner": "spectral"}}"#,
    )?;
    let report = run_ensemble(&cfg, holehom::ensemble::resolve_workers(None))?;
    for a in &report.aggregates {
        println!(
            "point {} {:<8} mean {:>9.5}  variance {:.3e}  n {}",
            a.point, a.column, a.mean, a.variance, a.count
        );
    }
    println!("{} failures, {:.1}s", report.failures, report.seconds);
    Ok(())
}
