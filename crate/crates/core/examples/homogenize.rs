//! Laminate check: a striped medium has the arithmetic mean along the stripes and the harmonic mean across.

use std::sync::Arc;

use holehom::corrector::{compute_bundle, homogenized_estimate, BundleParts};
use holehom::elliptic::SolverConfig;
use holehom::field::{rasterize, Profile};
use holehom::geometry::InclusionSet;

fn main() -> holehom::error::Result<()> {
    let n = 128;
    let set = InclusionSet::empty(n as f64, 2);
    let profile = Profile::Stripes {
        axis: 1,
        values: [1.0, 4.0],
        period_cells: 128,
    };
    let field = Arc::new(rasterize(&set, n, &profile)?);
    let bundle = compute_bundle(
        field,
        (n * n) as f64,
        &SolverConfig::spectral(),
        BundleParts::FLUX_ONLY,
        0,
    )?;
    let a = homogenized_estimate(&bundle).a_hom;
    println!("along stripes  {:.4} (arithmetic mean 2.5)", a[0][0]);
    println!("across stripes {:.4} (harmonic mean 1.6)", a[1][1]);
    Ok(())
}
