use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    periodic_distance, Buckets, GeneratorTag, Inclusion, InclusionSet, DEFAULT_DIAMETER_CAP,
};
use crate::error::{Error, Result};

/// Radii stay strictly below half the diameter cap.
const CAP_SHRINK: f64 = 1.0 - 1e-9;
/// Declared separation constants are shaded below the guaranteed bound so that
/// the strict inequality of the admissibility check holds in floating point.
const SEPARATION_SHADE: f64 = 1.0 - 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusLaw {
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl RadiusLaw {
    pub fn max(&self) -> f64 {
        match *self {
            RadiusLaw::PointMass { value } => value,
            RadiusLaw::Uniform { hi, .. } => hi,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RadiusLaw::PointMass { value } => value,
            RadiusLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadiusLaw::PointMass { value } => value >= 0.0 && value.is_finite(),
            RadiusLaw::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid radius law {self:?}")))
        }
    }

    /// Clip the law to `[0, cap)`. Returns the clipped law and whether anything changed.
    fn truncated(&self, cap: f64) -> (RadiusLaw, bool) {
        match *self {
            RadiusLaw::PointMass { value } if value >= cap => (
                RadiusLaw::PointMass {
                    value: cap * CAP_SHRINK,
                },
                true,
            ),
            RadiusLaw::Uniform { lo, hi } if hi >= cap => (
                RadiusLaw::Uniform {
                    lo: lo.min(cap * CAP_SHRINK),
                    hi: cap * CAP_SHRINK,
                },
                true,
            ),
            _ => (self.clone(), false),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            RadiusLaw::PointMass { value } => value,
            RadiusLaw::Uniform { lo, hi } => {
                if hi > lo {
                    rng.gen_range(lo..hi)
                } else {
                    lo
                }
            }
        }
    }
}

fn default_cap() -> f64 {
    DEFAULT_DIAMETER_CAP
}

fn default_point_budget() -> usize {
    1_000_000
}

fn default_slack() -> f64 {
    0.01
}

fn default_rejection_factor() -> f64 {
    1e4
}

/// Parameters of the lattice model: one ball of i.i.d. radius per integer lattice site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeParams {
    pub box_side: f64,
    pub dimension: usize,
    pub radius_law: RadiusLaw,
    #[serde(default = "default_cap")]
    pub diameter_cap: f64,
    /// Separation constant; derived from the lattice spacing when absent.
    #[serde(default)]
    pub separation: Option<f64>,
}

/// Poisson points with the one-third nearest-neighbour radius rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonParams {
    pub box_side: f64,
    pub dimension: usize,
    pub intensity: f64,
    pub radius_cap: f64,
    #[serde(default = "default_cap")]
    pub diameter_cap: f64,
    #[serde(default = "default_point_budget")]
    pub point_budget: usize,
}

/// Random sequential adsorption of centers at mutual distance at least `exclusion_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsaParams {
    pub box_side: f64,
    pub dimension: usize,
    pub exclusion_radius: f64,
    /// Extra margin on the exclusion distance, as a fraction of `exclusion_radius`.
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Stop after `rejection_factor * L^d` consecutive rejections.
    #[serde(default = "default_rejection_factor")]
    pub rejection_factor: f64,
    #[serde(default = "default_cap")]
    pub diameter_cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeometryParams {
    LatticeIid(LatticeParams),
    PoissonHardcore(PoissonParams),
    RandomParking(RsaParams),
}

impl GeometryParams {
    pub fn box_side(&self) -> f64 {
        match self {
            GeometryParams::LatticeIid(p) => p.box_side,
            GeometryParams::PoissonHardcore(p) => p.box_side,
            GeometryParams::RandomParking(p) => p.box_side,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            GeometryParams::LatticeIid(p) => p.dimension,
            GeometryParams::PoissonHardcore(p) => p.dimension,
            GeometryParams::RandomParking(p) => p.dimension,
        }
    }

    pub fn with_box_side(&self, box_side: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            GeometryParams::LatticeIid(p) => p.box_side = box_side,
            GeometryParams::PoissonHardcore(p) => p.box_side = box_side,
            GeometryParams::RandomParking(p) => p.box_side = box_side,
        }
        out
    }

    /// Largest radius the generator can produce.
    pub fn max_radius(&self) -> f64 {
        match self {
            GeometryParams::LatticeIid(p) => p.radius_law.max().min(0.5 * p.diameter_cap),
            GeometryParams::PoissonHardcore(p) => p.radius_cap.min(0.5 * p.diameter_cap),
            GeometryParams::RandomParking(p) => {
                (0.5 * p.exclusion_radius).min(0.5 * p.diameter_cap)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (l, d) = (self.box_side(), self.dimension());
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param(format!("box_side must be positive, got {l}")));
        }
        if d != 2 && d != 3 {
            return Err(Error::param(format!("dimension must be 2 or 3, got {d}")));
        }
        let cap = match self {
            GeometryParams::LatticeIid(p) => {
                p.radius_law.validate()?;
                if l.fract() != 0.0 {
                    return Err(Error::param(format!(
                        "lattice model needs an integer box side, got {l}"
                    )));
                }
                p.diameter_cap
            }
            GeometryParams::PoissonHardcore(p) => {
                if !(p.intensity > 0.0) || !(p.radius_cap > 0.0) {
                    return Err(Error::param("intensity and radius_cap must be positive"));
                }
                p.diameter_cap
            }
            GeometryParams::RandomParking(p) => {
                if !(p.exclusion_radius > 0.0) || p.slack < 0.0 || !(p.rejection_factor > 0.0) {
                    return Err(Error::param(
                        "exclusion_radius and rejection_factor must be positive, slack >= 0",
                    ));
                }
                p.diameter_cap
            }
        };
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(Error::param(format!(
                "diameter_cap must lie in (0, 1], got {cap}"
            )));
        }
        Ok(())
    }
}

/// Dispatch to the matching sampler.
pub fn sample(params: &GeometryParams, seed: u64) -> Result<InclusionSet> {
    match params {
        GeometryParams::LatticeIid(p) => sample_lattice_iid(p, seed),
        GeometryParams::PoissonHardcore(p) => sample_poisson_hardcore(p, seed),
        GeometryParams::RandomParking(p) => sample_random_parking(p, seed),
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn lattice_sites(side: usize, dimension: usize) -> impl Iterator<Item = Vec<f64>> {
    let total = side.pow(dimension as u32);
    (0..total).map(move |mut t| {
        let mut p = Vec::with_capacity(dimension);
        for _ in 0..dimension {
            p.push((t % side) as f64);
            t /= side;
        }
        p
    })
}

pub fn sample_lattice_iid(p: &LatticeParams, seed: u64) -> Result<InclusionSet> {
    GeometryParams::LatticeIid(p.clone()).validate()?;
    let (law, truncated) = p.radius_law.truncated(0.5 * p.diameter_cap);
    let r_max = law.max();
    if r_max >= 0.5 {
        return Err(Error::param(format!(
            "lattice radii up to {r_max} would let neighbouring balls touch"
        )));
    }
    // Worst pair: both at r_max, gap 1 - 2 r_max against min diameter 2 r_max.
    let guaranteed = if r_max > 0.0 {
        (1.0 - 2.0 * r_max) / (2.0 * r_max)
    } else {
        f64::INFINITY
    };
    let separation = match p.separation {
        Some(rho) => {
            if !(rho > 0.0) || rho >= guaranteed {
                return Err(Error::param(format!(
                    "separation {rho} cannot be guaranteed for radii up to {r_max} \
                     (lattice bound {guaranteed:.6})"
                )));
            }
            rho
        }
        None if guaranteed.is_finite() => guaranteed * SEPARATION_SHADE,
        None => 1.0,
    };

    let side = p.box_side as usize;
    let mut rng = rng_for(seed);
    let inclusions = lattice_sites(side, p.dimension)
        .filter_map(|site| {
            let r = law.draw(&mut rng);
            (r > 0.0).then(|| Inclusion::new(site, r))
        })
        .collect();

    let mut parameters = BTreeMap::new();
    parameters.insert("radius_law".into(), serde_json::to_value(&p.radius_law)?);
    if truncated {
        parameters.insert(
            "radius_law_truncated_to".into(),
            serde_json::to_value(&law)?,
        );
    }
    Ok(InclusionSet {
        inclusions,
        box_side: p.box_side,
        dimension: p.dimension,
        separation,
        diameter_cap: p.diameter_cap,
        seed,
        generator: GeneratorTag::LatticeIID,
        parameters,
    })
}

pub fn sample_poisson_hardcore(p: &PoissonParams, seed: u64) -> Result<InclusionSet> {
    GeometryParams::PoissonHardcore(p.clone()).validate()?;
    let volume = p.box_side.powi(p.dimension as i32);
    let expected = p.intensity * volume;
    if expected > p.point_budget as f64 {
        return Err(Error::PointBudgetExceeded {
            expected,
            budget: p.point_budget,
        });
    }
    let mut rng = rng_for(seed);
    let count = Poisson::new(expected)
        .map_err(|e| Error::param(format!("poisson mean {expected}: {e}")))?
        .sample(&mut rng) as usize;
    let points: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            (0..p.dimension)
                .map(|_| rng.gen_range(0.0..p.box_side))
                .collect()
        })
        .collect();
    let mut set = hardcore_from_points(
        &points,
        p.box_side,
        p.dimension,
        p.radius_cap,
        p.diameter_cap,
    );
    set.seed = seed;
    set.parameters
        .insert("intensity".into(), json!(p.intensity));
    set.parameters.insert("point_count".into(), json!(count));
    Ok(set)
}

/// Apply the one-third nearest-neighbour rule `r_k = min{R, |p_k - p_j|_min / 3}` to a
/// fixed point configuration. The torus self-image at distance `L` counts as a neighbour.
pub fn hardcore_from_points(
    points: &[Vec<f64>],
    box_side: f64,
    dimension: usize,
    radius_cap: f64,
    diameter_cap: f64,
) -> InclusionSet {
    let effective_cap = radius_cap.min(0.5 * diameter_cap * CAP_SHRINK);
    let nn = nearest_neighbour_distances(points, box_side, dimension);
    let inclusions = points
        .iter()
        .zip(&nn)
        .map(|(pt, &d)| Inclusion::new(pt.clone(), effective_cap.min(d / 3.0)))
        .collect();
    let mut parameters = BTreeMap::new();
    parameters.insert("radius_cap".into(), json!(radius_cap));
    if effective_cap < radius_cap {
        parameters.insert("radius_cap_truncated_to".into(), json!(effective_cap));
    }
    InclusionSet {
        inclusions,
        box_side,
        dimension,
        // Gap >= d/3 against min diameter <= 2d/3; equality for mutual nearest neighbours.
        separation: 0.5 * SEPARATION_SHADE,
        diameter_cap,
        seed: 0,
        generator: GeneratorTag::PoissonHardcore,
        parameters,
    }
}

fn nearest_neighbour_distances(points: &[Vec<f64>], box_side: f64, dimension: usize) -> Vec<f64> {
    if points.len() <= 256 {
        return points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| periodic_distance(p, q, box_side))
                    .fold(box_side, f64::min)
            })
            .collect();
    }
    let density = points.len() as f64 / box_side.powi(dimension as i32);
    let cell = (2.0 / density).powf(1.0 / dimension as f64);
    let mut buckets = Buckets::new(box_side, dimension, cell);
    for p in points {
        buckets.insert(p.clone());
    }
    (0..points.len())
        .map(|i| {
            buckets
                .nearest(buckets.point(i), Some(i))
                .map_or(box_side, |(_, d)| d.min(box_side))
        })
        .collect()
}

pub fn sample_random_parking(p: &RsaParams, seed: u64) -> Result<InclusionSet> {
    GeometryParams::RandomParking(p.clone()).validate()?;
    let exclusion = p.exclusion_radius * (1.0 + p.slack);
    let radius = (0.5 * p.exclusion_radius).min(0.5 * p.diameter_cap * CAP_SHRINK);
    let volume = p.box_side.powi(p.dimension as i32);
    let rejection_cap = (p.rejection_factor * volume).ceil().max(1.0) as u64;

    let mut rng = rng_for(seed);
    let mut buckets = Buckets::new(p.box_side, p.dimension, exclusion);
    let mut rejections = 0u64;
    let mut candidate = vec![0.0; p.dimension];
    while rejections < rejection_cap {
        for c in candidate.iter_mut() {
            *c = rng.gen_range(0.0..p.box_side);
        }
        if buckets.any_closer_than(&candidate, exclusion) {
            rejections += 1;
        } else {
            buckets.insert(candidate.clone());
            rejections = 0;
        }
    }

    let inclusions: Vec<Inclusion> = (0..buckets.len())
        .map(|i| Inclusion::new(buckets.point(i).to_vec(), radius))
        .collect();
    let mut parameters = BTreeMap::new();
    parameters.insert("exclusion_radius".into(), json!(p.exclusion_radius));
    parameters.insert("slack".into(), json!(p.slack));
    parameters.insert("saturation_proxy_rejections".into(), json!(rejection_cap));
    if radius < 0.5 * p.exclusion_radius {
        parameters.insert("radius_truncated_to".into(), json!(radius));
    }
    Ok(InclusionSet {
        inclusions,
        box_side: p.box_side,
        dimension: p.dimension,
        separation: (exclusion - 2.0 * radius) / (2.0 * radius) * SEPARATION_SHADE,
        diameter_cap: p.diameter_cap,
        seed,
        generator: GeneratorTag::RandomParking,
        parameters,
    })
}

fn meets_ball(inc: &Inclusion, center: &[f64], radius: f64, box_side: f64) -> bool {
    periodic_distance(&inc.center, center, box_side) < radius + inc.radius
}

fn inside_ball(inc: &Inclusion, center: &[f64], radius: f64, box_side: f64) -> bool {
    periodic_distance(&inc.center, center, box_side) + inc.radius <= radius
}

/// Keep every inclusion meeting `B_R(center)` and redraw the geometry outside it from
/// a fresh sample with `seed`. Fresh inclusions that would meet the ball or break
/// admissibility against the kept ones are discarded. For `R >= L/2` nothing changes.
pub fn resample_outside(
    set: &InclusionSet,
    params: &GeometryParams,
    center: &[f64],
    radius: f64,
    seed: u64,
) -> Result<InclusionSet> {
    if radius >= 0.5 * set.box_side {
        return Ok(set.clone());
    }
    let fresh = sample(params, seed)?;
    let kept: Vec<Inclusion> = set
        .inclusions
        .iter()
        .filter(|inc| meets_ball(inc, center, radius, set.box_side))
        .cloned()
        .collect();
    let candidates = fresh
        .inclusions
        .into_iter()
        .filter(|inc| !meets_ball(inc, center, radius, set.box_side));
    Ok(merge(set, kept, candidates))
}

/// Redraw the inclusions lying wholly inside `B_M(x)`; inclusions crossing the sphere
/// and everything outside stay fixed. Resampling with the set's own seed is the identity.
pub fn resample_inside(
    set: &InclusionSet,
    params: &GeometryParams,
    center: &[f64],
    radius: f64,
    seed: u64,
) -> Result<InclusionSet> {
    if seed == set.seed {
        return Ok(set.clone());
    }
    let fresh = sample(params, seed)?;
    let kept: Vec<Inclusion> = set
        .inclusions
        .iter()
        .filter(|inc| !inside_ball(inc, center, radius, set.box_side))
        .cloned()
        .collect();
    let candidates = fresh
        .inclusions
        .into_iter()
        .filter(|inc| inside_ball(inc, center, radius, set.box_side));
    Ok(merge(set, kept, candidates))
}

fn merge(
    base: &InclusionSet,
    mut kept: Vec<Inclusion>,
    candidates: impl Iterator<Item = Inclusion>,
) -> InclusionSet {
    let rho = base.separation;
    let n_kept = kept.len();
    for cand in candidates {
        let clash = kept.iter().any(|other| {
            let gap = periodic_distance(&cand.center, &other.center, base.box_side)
                - cand.radius
                - other.radius;
            gap <= rho * cand.diameter().min(other.diameter())
        });
        if !clash {
            kept.push(cand);
        }
    }
    let mut out = base.clone();
    out.parameters
        .insert("resampled_inclusions".into(), json!(kept.len() - n_kept));
    out.inclusions = kept;
    out
}
