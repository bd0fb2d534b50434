//! Monte-Carlo driver.
//!
//! A run is the cross product of a schedule of `(L, n, T)` points with `sample_count`
//! geometry seeds. Sample `k` at every point uses the geometry seed `split_seed(master, k)`,
//! so points share realizations where their box sides agree. Rows come back in
//! `(point, sample)` order regardless of the worker count.

mod fits;
mod pool;

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use fits::{
    fit_decay_in_t, fit_variance_scaling, rstar_tail_fit, DecayFit, ScalingFit, TailFit,
};
pub use pool::{resolve_workers, run_indexed, split_seed};

use crate::corrector::{compute_bundle, homogenized_estimate, BundleParts, CorrectorBundle};
use crate::elliptic::SolverConfig;
use crate::error::{Error, Result};
use crate::field::{rasterize, Grid, Profile};
use crate::geometry::{sample, GeometryParams};
use crate::quantify::{
    a_harmonic_sample, caccioppoli_check, excess_decay_profile, hole_filling_ratio,
    mean_value_check, regularity_radius, weighted_energy, QuantifyConfig,
};
use crate::stats::{mean, quantile_sorted, variance, DEFAULT_RESAMPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `a_hom_ji` for every pair and the matrix volume fraction.
    AHom,
    /// Regularity radius at a random center (`inf` when the threshold never holds).
    Rstar,
    /// Spatial mean of `(1/T)(φ^ext)² + (1/T)|g|² + |∇g|²`, summed over directions.
    DecayQuantity,
    /// Hole-filling exponent of direction 1 at the worst-case center.
    HoleFilling,
    /// Exponentially weighted energy around a random center.
    WeightedEnergy,
    /// Caccioppoli ratio of direction 1 with `R = L/4`, `ρ = L/16`.
    Caccioppoli,
    /// Excess-decay slope and maximal mean-value ratio of an a-harmonic sample.
    ExcessDecay,
}

impl Observable {
    pub fn columns(self, d: usize) -> Vec<String> {
        match self {
            Observable::AHom => {
                let mut c: Vec<String> = (0..d)
                    .flat_map(|j| (0..d).map(move |i| format!("a_hom_{}{}", j + 1, i + 1)))
                    .collect();
                c.push("volume_fraction".into());
                c
            }
            Observable::Rstar => vec!["rstar".into()],
            Observable::DecayQuantity => vec!["decay_quantity".into()],
            Observable::HoleFilling => vec!["eps_hat".into()],
            Observable::WeightedEnergy => vec!["weighted_energy".into()],
            Observable::Caccioppoli => vec!["caccioppoli".into()],
            Observable::ExcessDecay => vec!["excess_slope".into(), "mean_value_max".into()],
        }
    }

    fn parts(self) -> BundleParts {
        match self {
            Observable::AHom | Observable::HoleFilling | Observable::Caccioppoli => {
                BundleParts::FLUX_ONLY
            }
            Observable::Rstar | Observable::ExcessDecay => BundleParts {
                extension: true,
                sigma: true,
                aux: false,
            },
            Observable::DecayQuantity => BundleParts {
                extension: true,
                sigma: false,
                aux: true,
            },
            Observable::WeightedEnergy => BundleParts {
                extension: false,
                sigma: false,
                aux: true,
            },
        }
    }
}

/// One point of the `(L, n, T)` schedule. `t` defaults to `L²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulePoint {
    pub box_side: f64,
    pub cells_per_side: usize,
    #[serde(default, rename = "T")]
    pub t: Option<f64>,
}

impl SchedulePoint {
    pub fn t(&self) -> f64 {
        self.t.unwrap_or(self.box_side * self.box_side)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitSpec {
    /// `log Var[column]` against `log L` across the schedule.
    VarianceScaling { column: String },
    /// Stretched-exponential tail of `rstar` at one schedule point (default: the last).
    RstarTail {
        #[serde(default)]
        point: Option<usize>,
        #[serde(default = "default_min_finite")]
        min_finite: usize,
    },
    /// `log mean[column]` against `log T` across the schedule.
    DecayInT { column: String },
}

fn default_min_finite() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub geometry: GeometryParams,
    #[serde(default)]
    pub profile: Profile,
    pub schedule: Vec<SchedulePoint>,
    pub sample_count: usize,
    pub master_seed: u64,
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub fits: Vec<FitSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quantify: QuantifyConfig,
    /// Tail exponent hint; echoed into reports, never used to fit.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_failure_budget")]
    pub failure_budget: f64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

fn default_failure_budget() -> f64 {
    0.05
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::param("sample_count must be at least 1"));
        }
        if self.schedule.is_empty() {
            return Err(Error::param("schedule must not be empty"));
        }
        if self.observables.is_empty() {
            return Err(Error::param("at least one observable is required"));
        }
        if !(0.0..1.0).contains(&self.failure_budget) {
            return Err(Error::param("failure_budget must lie in [0, 1)"));
        }
        if self.bootstrap_resamples < 200 {
            return Err(Error::param("bootstrap_resamples must be at least 200"));
        }
        self.solver.validate()?;
        self.quantify.validate()?;
        let d = self.geometry.dimension();
        for (i, p) in self.schedule.iter().enumerate() {
            Grid::new(d, p.cells_per_side, p.box_side)?;
            self.geometry.with_box_side(p.box_side).validate()?;
            if !(p.t() > 0.0) {
                return Err(Error::param(format!("schedule[{i}]: T must be positive")));
            }
            if self.observables.contains(&Observable::HoleFilling)
                && p.t().sqrt() > 0.5 * p.box_side * (1.0 + 1e-12)
            {
                return Err(Error::param(format!(
                    "schedule[{i}]: hole filling needs √T ≤ L/2"
                )));
            }
        }
        self.profile.validate(d)?;
        let cols = self.columns();
        for f in &self.fits {
            match f {
                FitSpec::VarianceScaling { column } | FitSpec::DecayInT { column } => {
                    if !cols.contains(column) {
                        return Err(Error::param(format!(
                            "fit column `{column}` is not produced by the observables"
                        )));
                    }
                }
                FitSpec::RstarTail { point, .. } => {
                    if !self.observables.contains(&Observable::Rstar) {
                        return Err(Error::param("rstar_tail fit needs the rstar observable"));
                    }
                    if point.is_some_and(|p| p >= self.schedule.len()) {
                        return Err(Error::param("rstar_tail point is outside the schedule"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Value columns in row order.
    pub fn columns(&self) -> Vec<String> {
        let d = self.geometry.dimension();
        self.observables.iter().flat_map(|o| o.columns(d)).collect()
    }

    fn parts(&self) -> BundleParts {
        self.observables
            .iter()
            .fold(BundleParts::FLUX_ONLY, |acc, o| {
                let p = o.parts();
                BundleParts {
                    extension: acc.extension || p.extension,
                    sigma: acc.sigma || p.sigma,
                    aux: acc.aux || p.aux,
                }
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub point: usize,
    pub sample: usize,
    pub seed: u64,
    pub box_side: f64,
    pub cells_per_side: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub status: SampleStatus,
    /// One value per configured column; empty for failed samples.
    pub values: Vec<f64>,
}

impl SampleRow {
    pub fn is_ok(&self) -> bool {
        self.status == SampleStatus::Ok
    }
}

/// Aggregates of one column at one schedule point, over successful samples with finite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub point: usize,
    pub column: String,
    pub count: usize,
    pub non_finite: usize,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitResult {
    VarianceScaling { column: String, fit: ScalingFit },
    RstarTail { point: usize, fit: TailFit },
    DecayInT { column: String, fit: DecayFit },
    Failed { spec: FitSpec, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub columns: Vec<String>,
    pub rows: Vec<SampleRow>,
    pub aggregates: Vec<Aggregate>,
    pub fits: Vec<FitResult>,
    pub failures: usize,
    /// Wall time; excluded from every CSV.
    pub seconds: f64,
}

impl EnsembleReport {
    /// Finite values of `column` at `point` over successful rows.
    pub fn column_values(&self, point: usize, column: &str) -> Vec<f64> {
        self.raw_values(point, column)
            .into_iter()
            .filter(|v| v.is_finite())
            .collect()
    }

    /// All values of `column` at `point` over successful rows, including `inf`/`NaN`.
    pub fn raw_values(&self, point: usize, column: &str) -> Vec<f64> {
        let Some(j) = self.columns.iter().position(|c| c == column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| r.point == point && r.is_ok())
            .map(|r| r.values[j])
            .collect()
    }
}

/// Random center for per-sample diagnostics, drawn from a stream independent of the geometry.
pub fn sample_center(seed: u64, d: usize, l: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0));
    (0..d).map(|_| rng.gen::<f64>() * l).collect()
}

fn decay_quantity(bundle: &CorrectorBundle) -> f64 {
    let grid = bundle.grid();
    let h = grid.spacing();
    let t = bundle.t;
    let mut total = 0.0;
    for (i, g) in bundle.g.iter().enumerate() {
        let ext = bundle.phi_ext(i);
        for c in 0..grid.len() {
            let mut s = ext[c] * ext[c] / t;
            for comp in &g.components {
                s += comp[c] * comp[c] / t;
                for k in 0..grid.dimension {
                    s += ((comp[grid.forward(c, k)] - comp[c]) / h).powi(2);
                }
            }
            total += s;
        }
    }
    total / grid.len() as f64
}

fn evaluate(cfg: &EnsembleConfig, point: &SchedulePoint, seed: u64) -> Result<Vec<f64>> {
    let params = cfg.geometry.with_box_side(point.box_side);
    let set = sample(&params, seed)?;
    let field = Arc::new(rasterize(&set, point.cells_per_side, &cfg.profile)?);
    let bundle = compute_bundle(field.clone(), point.t(), &cfg.solver, cfg.parts(), seed)?;
    let d = params.dimension();
    let l = point.box_side;
    let center = sample_center(seed, d, l);
    let mut out = Vec::new();
    for obs in &cfg.observables {
        match obs {
            Observable::AHom => {
                let est = homogenized_estimate(&bundle);
                for row in &est.a_hom {
                    out.extend(row.iter().copied());
                }
                out.push(est.volume_fraction_matrix);
            }
            Observable::Rstar => {
                let r = regularity_radius(&bundle, &cfg.quantify, &center)?;
                out.push(r.rstar.unwrap_or(f64::INFINITY));
            }
            Observable::DecayQuantity => out.push(decay_quantity(&bundle)),
            Observable::HoleFilling => out.push(hole_filling_ratio(&bundle, 0, None)?.eps_hat),
            Observable::WeightedEnergy => {
                out.push(weighted_energy(&bundle, cfg.quantify.kappa, &center)?)
            }
            Observable::Caccioppoli => {
                out.push(caccioppoli_check(&bundle, 0, 0.25 * l, l / 16.0, &center)?)
            }
            Observable::ExcessDecay => {
                let rstar = regularity_radius(&bundle, &cfg.quantify, &center)?
                    .rstar
                    .unwrap_or(f64::INFINITY);
                let u = a_harmonic_sample(&field, &cfg.solver, split_seed(seed, 1), &center)?;
                let outer = 0.25 * l;
                let floor = rstar.min(outer);
                let prof = excess_decay_profile(&u.grad, &bundle, floor, outer, &center)?;
                out.push(prof.slope.unwrap_or(f64::NAN));
                let ratios = mean_value_check(&field, &u.grad, floor, outer, &center)?;
                out.push(ratios.iter().map(|r| r.value).fold(f64::NAN, f64::max));
            }
        }
    }
    Ok(out)
}

/// Aggregates for every `(point, column)` recomputed from the rows.
pub fn aggregate(columns: &[String], rows: &[SampleRow], points: usize) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for p in 0..points {
        for (j, col) in columns.iter().enumerate() {
            let all: Vec<f64> = rows
                .iter()
                .filter(|r| r.point == p && r.is_ok())
                .map(|r| r.values[j])
                .collect();
            let mut v: Vec<f64> = all.iter().copied().filter(|x| x.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            let (mean, var) = if v.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (mean(&v), variance(&v))
            };
            out.push(Aggregate {
                point: p,
                column: col.clone(),
                count: v.len(),
                non_finite: all.len() - v.len(),
                mean,
                variance: var,
                min: v.first().copied().unwrap_or(f64::NAN),
                q05: quantile_sorted(&v, 0.05),
                median: quantile_sorted(&v, 0.5),
                q95: quantile_sorted(&v, 0.95),
                max: v.last().copied().unwrap_or(f64::NAN),
            });
        }
    }
    out
}

fn run_fit(
    cfg: &EnsembleConfig,
    report: &EnsembleReport,
    spec: &FitSpec,
    seed: u64,
) -> Result<FitResult> {
    let b = cfg.bootstrap_resamples;
    match spec {
        FitSpec::VarianceScaling { column } => {
            let groups: Vec<(f64, Vec<f64>)> = (0..cfg.schedule.len())
                .map(|p| (cfg.schedule[p].box_side, report.column_values(p, column)))
                .collect();
            Ok(FitResult::VarianceScaling {
                column: column.clone(),
                fit: fit_variance_scaling(&groups, b, seed)?,
            })
        }
        FitSpec::DecayInT { column } => {
            let groups: Vec<(f64, Vec<f64>)> = (0..cfg.schedule.len())
                .map(|p| (cfg.schedule[p].t(), report.column_values(p, column)))
                .collect();
            Ok(FitResult::DecayInT {
                column: column.clone(),
                fit: fit_decay_in_t(&groups, b, seed)?,
            })
        }
        FitSpec::RstarTail { point, min_finite } => {
            let p = point.unwrap_or(cfg.schedule.len() - 1);
            Ok(FitResult::RstarTail {
                point: p,
                fit: rstar_tail_fit(&report.raw_values(p, "rstar"), *min_finite, b, seed)?,
            })
        }
    }
}

/// Run every `(point, sample)` task on `workers` threads and fit the configured models.
pub fn run_ensemble(cfg: &EnsembleConfig, workers: usize) -> Result<EnsembleReport> {
    cfg.validate()?;
    let start = Instant::now();
    let n = cfg.sample_count;
    let tasks = cfg.schedule.len() * n;
    let results = run_indexed(tasks, workers, |task| {
        let (p, k) = (task / n, task % n);
        let seed = split_seed(cfg.master_seed, k as u64);
        (p, k, seed, evaluate(cfg, &cfg.schedule[p], seed))
    })?;
    let mut rows = Vec::with_capacity(tasks);
    let mut failures = 0;
    for (p, k, seed, res) in results {
        let point = &cfg.schedule[p];
        let (status, values) = match res {
            Ok(v) => (SampleStatus::Ok, v),
            Err(e) if e.is_solver_failure() => {
                failures += 1;
                (SampleStatus::Failed(e.to_string()), Vec::new())
            }
            Err(e) => return Err(e),
        };
        rows.push(SampleRow {
            point: p,
            sample: k,
            seed,
            box_side: point.box_side,
            cells_per_side: point.cells_per_side,
            t: point.t(),
            status,
            values,
        });
    }
    if failures as f64 > cfg.failure_budget * tasks as f64 {
        return Err(Error::FailureBudget {
            failed: failures,
            total: tasks,
        });
    }
    let columns = cfg.columns();
    let aggregates = aggregate(&columns, &rows, cfg.schedule.len());
    let mut report = EnsembleReport {
        columns,
        rows,
        aggregates,
        fits: Vec::new(),
        failures,
        seconds: 0.0,
    };
    for (i, spec) in cfg.fits.iter().enumerate() {
        let fit = run_fit(
            cfg,
            &report,
            spec,
            split_seed(cfg.master_seed ^ 0x5EED_F17, i as u64),
        )
        .unwrap_or_else(|e| FitResult::Failed {
            spec: spec.clone(),
            message: e.to_string(),
        });
        report.fits.push(fit);
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Ensemble of `a_hom_11` over box sides at the grid spacing of the first schedule point,
/// with the variance-scaling fit.
pub fn variance_scaling(
    cfg: &EnsembleConfig,
    box_sides: &[f64],
    workers: usize,
) -> Result<(EnsembleReport, ScalingFit)> {
    if box_sides.len() < 3 {
        return Err(Error::param(
            "variance scaling needs at least three box sides",
        ));
    }
    if cfg.sample_count < 100 {
        return Err(Error::param(
            "variance scaling needs at least 100 samples per box side",
        ));
    }
    let base = cfg
        .schedule
        .first()
        .ok_or_else(|| Error::param("schedule must not be empty"))?;
    let h = base.box_side / base.cells_per_side as f64;
    let mut c = cfg.clone();
    c.schedule = box_sides
        .iter()
        .map(|&l| SchedulePoint {
            box_side: l,
            cells_per_side: (l / h).round() as usize,
            t: None,
        })
        .collect();
    c.observables = vec![Observable::AHom];
    c.fits = vec![FitSpec::VarianceScaling {
        column: "a_hom_11".into(),
    }];
    let report = run_ensemble(&c, workers)?;
    match report.fits.first() {
        Some(FitResult::VarianceScaling { fit, .. }) => {
            let fit = fit.clone();
            Ok((report, fit))
        }
        Some(FitResult::Failed { message, .. }) => Err(Error::Fit(message.clone())),
        _ => unreachable!("variance scaling fit is always configured"),
    }
}

/// Ensemble of the decay quantity over `T` at the first schedule point's `(L, n)`.
pub fn decay_fit_t(
    cfg: &EnsembleConfig,
    ts: &[f64],
    workers: usize,
) -> Result<(EnsembleReport, DecayFit)> {
    if ts.len() < 3 {
        return Err(Error::param("decay fit needs at least three values of T"));
    }
    let base = cfg
        .schedule
        .first()
        .ok_or_else(|| Error::param("schedule must not be empty"))?;
    let mut c = cfg.clone();
    c.schedule = ts
        .iter()
        .map(|&t| SchedulePoint {
            t: Some(t),
            ..base.clone()
        })
        .collect();
    c.observables = vec![Observable::DecayQuantity];
    c.fits = vec![FitSpec::DecayInT {
        column: "decay_quantity".into(),
    }];
    let report = run_ensemble(&c, workers)?;
    match report.fits.first() {
        Some(FitResult::DecayInT { fit, .. }) => {
            let fit = fit.clone();
            Ok((report, fit))
        }
        Some(FitResult::Failed { message, .. }) => Err(Error::Fit(message.clone())),
        _ => unreachable!("decay fit is always configured"),
    }
}
