//! Draw one realization from each generator and report admissibility.

use holehom::field::{matrix_components, rasterize, Profile};
use holehom::geometry::{check_admissible, sample, GeometryParams};

fn main() -> holehom::error::Result<()> {
    let configs = [
        r#"{"generator": "lattice_iid", "box_side": 16, "dimension": 2,
            "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.3333333333333333}}"#,
        r#"{"generator": "poisson_hardcore", "box_side": 16, "dimension": 2, "intensity": 1.0, "radius_cap": 0.3}"#,
        r#"{"generator": "random_parking", "box_side": 16, "dimension": 2, "exclusion_radius": 1.0}"#,
    ];
    for text in configs {
        let params: GeometryParams = serde_json::from_str(text)?;
        let set = sample(&params, 7)?;
        let field = rasterize(&set, 128, &Profile::default())?;
        let report = check_admissible(&set);
        println!(
            "{:<18} holes {:>4}  hole volume {:.3}  max diameter {:.3}  separation ratio {:.3}  matrix clusters {}",
            text.split('"').nth(3).unwrap_or(""),
            set.len(),
            set.hole_volume(),
            report.max_diameter,
            report.min_separation_ratio,
            matrix_components(&field).count,
        );
    }
    Ok(())
}
