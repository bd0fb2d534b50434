use serde::Serialize;

use super::{periodic_distance, Inclusion, InclusionSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub diameter_ok: bool,
    pub separation_ok: bool,
    /// Smallest `gap / min(diam_j, diam_k)` over all pairs; infinite for fewer than two
    /// inclusions (serialized as `null`).
    #[serde(serialize_with = "finite_or_null")]
    pub min_separation_ratio: f64,
    pub max_diameter: f64,
    pub matrix_connected_on_grid: Option<bool>,
}

fn finite_or_null<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn pair_ratio(a: &Inclusion, b: &Inclusion, box_side: f64) -> f64 {
    let gap = periodic_distance(&a.center, &b.center, box_side) - a.radius - b.radius;
    gap / a.diameter().min(b.diameter())
}

/// Minimum separation ratio over all pairs. Exhaustive for small sets; larger sets use
/// buckets and fall back to the exhaustive scan when the bucket reach cannot certify
/// the minimum.
fn min_ratio(set: &InclusionSet) -> f64 {
    let incs = &set.inclusions;
    let exhaustive = || {
        let mut best = f64::INFINITY;
        for (i, a) in incs.iter().enumerate() {
            for b in &incs[i + 1..] {
                best = best.min(pair_ratio(a, b, set.box_side));
            }
        }
        best
    };
    if incs.len() <= 4096 {
        return exhaustive();
    }
    let r_max = incs.iter().map(|i| i.radius).fold(0.0, f64::max);
    let cell = 4.0 * r_max + 1e-12;
    let mut buckets = super::Buckets::new(set.box_side, set.dimension, cell);
    for inc in incs {
        buckets.insert(inc.center.clone());
    }
    let mut best = f64::INFINITY;
    for (i, a) in incs.iter().enumerate() {
        buckets.for_each_within_ring(&a.center, 1, |j| {
            if j > i {
                best = best.min(pair_ratio(a, &incs[j], set.box_side));
            }
        });
    }
    // Pairs not visited have center distance >= cell.
    let unseen_floor = (cell - 2.0 * r_max) / (2.0 * r_max);
    if best <= unseen_floor {
        best
    } else {
        exhaustive()
    }
}

pub fn check_admissible(set: &InclusionSet) -> AdmissibilityReport {
    let max_diameter = set
        .inclusions
        .iter()
        .map(Inclusion::diameter)
        .fold(0.0, f64::max);
    let min_separation_ratio = min_ratio(set);
    AdmissibilityReport {
        diameter_ok: set
            .inclusions
            .iter()
            .all(|i| i.radius > 0.0 && i.diameter() < set.diameter_cap),
        separation_ok: min_separation_ratio > set.separation,
        min_separation_ratio,
        max_diameter,
        matrix_connected_on_grid: None,
    }
}

/// Concentric enlargements of radius `(1 + rho/4) r_k` hosting the local extension
/// of each inclusion. Fails when the enlargements are not pairwise disjoint.
pub fn extension_domains(set: &InclusionSet) -> Result<Vec<(usize, Inclusion)>> {
    let report = check_admissible(set);
    if !(report.diameter_ok && report.separation_ok) {
        return Err(Error::Inadmissible(format!("{report:?}")));
    }
    let factor = 1.0 + set.separation / 4.0;
    let domains: Vec<(usize, Inclusion)> = set
        .inclusions
        .iter()
        .enumerate()
        .map(|(k, inc)| (k, Inclusion::new(inc.center.clone(), factor * inc.radius)))
        .collect();
    for (i, (_, a)) in domains.iter().enumerate() {
        for (_, b) in &domains[i + 1..] {
            if periodic_distance(&a.center, &b.center, set.box_side) <= a.radius + b.radius {
                return Err(Error::Inadmissible(format!(
                    "extension domains around {:?} and {:?} overlap",
                    a.center, b.center
                )));
            }
        }
    }
    Ok(domains)
}
