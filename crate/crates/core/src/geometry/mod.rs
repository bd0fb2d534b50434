//! Random inclusion geometries on the periodic box.
//!
//! Every sampler is a pure function of its parameters and a 64-bit seed. Inclusions
//! are open balls; the box `[0, L)^d` is treated as a torus, so all distances are
//! minimum-image distances.

mod admissible;
mod buckets;
mod json;
mod sample;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use admissible::{check_admissible, extension_domains, AdmissibilityReport};
pub use json::{format_real, inclusion_set_from_json, inclusion_set_to_json};
pub use sample::{
    hardcore_from_points, resample_inside, resample_outside, sample, sample_lattice_iid,
    sample_poisson_hardcore, sample_random_parking, GeometryParams, LatticeParams, PoissonParams,
    RadiusLaw, RsaParams,
};

pub(crate) use buckets::Buckets;

/// Default bound on inclusion diameters.
pub const DEFAULT_DIAMETER_CAP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Inclusion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Inclusion {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorTag {
    LatticeIID,
    PoissonHardcore,
    RandomParking,
    /// Hand-built sets (tests, synthetic probes).
    Manual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InclusionSet {
    pub inclusions: Vec<Inclusion>,
    pub box_side: f64,
    pub dimension: usize,
    pub separation: f64,
    pub diameter_cap: f64,
    pub seed: u64,
    pub generator: GeneratorTag,
    /// Echo of the sampler parameters, including any truncation applied to keep the
    /// output admissible.
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl InclusionSet {
    pub fn manual(
        box_side: f64,
        dimension: usize,
        separation: f64,
        diameter_cap: f64,
        inclusions: Vec<Inclusion>,
    ) -> Self {
        Self {
            inclusions,
            box_side,
            dimension,
            separation,
            diameter_cap,
            seed: 0,
            generator: GeneratorTag::Manual,
            parameters: BTreeMap::new(),
        }
    }

    pub fn empty(box_side: f64, dimension: usize) -> Self {
        Self::manual(box_side, dimension, 1.0, DEFAULT_DIAMETER_CAP, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.inclusions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inclusions.is_empty()
    }

    /// Minimum-image distance between two points of the box.
    pub fn periodic_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        periodic_distance(a, b, self.box_side)
    }

    /// Translate every center by `shift` and reduce modulo the box side.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for inc in &mut out.inclusions {
            for (c, s) in inc.center.iter_mut().zip(shift) {
                *c = (*c + s).rem_euclid(self.box_side);
            }
        }
        out
    }

    /// Volume of the union of the inclusions (they are disjoint by admissibility).
    pub fn hole_volume(&self) -> f64 {
        self.inclusions
            .iter()
            .map(|inc| ball_volume(self.dimension, inc.radius))
            .sum()
    }
}

#[inline]
pub fn wrap_delta(dx: f64, box_side: f64) -> f64 {
    dx - box_side * (dx / box_side).round()
}

pub fn periodic_distance(a: &[f64], b: &[f64], box_side: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = wrap_delta(x - y, box_side);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn ball_volume(dimension: usize, radius: f64) -> f64 {
    match dimension {
        2 => std::f64::consts::PI * radius * radius,
        3 => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        _ => f64::NAN,
    }
}
