//! Command-line front end: `holehom <command> --config cfg.json --out dir/`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::corrector::{compute_bundle, homogenized_estimate, BundleParts};
use crate::ensemble::{
    resolve_workers, run_ensemble, run_indexed, sample_center, split_seed, variance_scaling,
    EnsembleReport,
};
use crate::error::{Error, Result};
use crate::field::matrix_components;
use crate::geometry::{check_admissible, inclusion_set_to_json, sample};
use crate::io::{
    dump_field, fmt_f, header, parse_config, stats_row, unix_now, OutDir, RunConfig, RunManifest,
    MANIFEST, STATS_HEADER,
};
use crate::quantify::{
    a_harmonic_sample, corrector_growth_profile, excess, fit_growth_regime, hole_filling_ratio,
    locality_probe, oscillation_probe, regularity_radius, ProbeSetup,
};
use crate::twoscale::run_twoscale;

#[derive(Debug, Parser)]
#[command(
    name = "holehom",
    version,
    about = "Quantitative homogenization of randomly perforated media"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "holehom-out")]
    pub out: PathBuf,
    /// Defaults to HOLEHOM_WORKERS, then the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write the rasterized coefficient field(s).
    #[arg(long)]
    pub dump_field: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    SampleGeometry(Common),
    Corrector(Common),
    Homogenize(Common),
    Quantify(Common),
    Ensemble(Common),
    Twoscale(Common),
    Probe(Common),
    VarianceScaling(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SampleGeometry(_) => "sample-geometry",
            Command::Corrector(_) => "corrector",
            Command::Homogenize(_) => "homogenize",
            Command::Quantify(_) => "quantify",
            Command::Ensemble(_) => "ensemble",
            Command::Twoscale(_) => "twoscale",
            Command::Probe(_) => "probe",
            Command::VarianceScaling(_) => "variance-scaling",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::SampleGeometry(c)
            | Command::Corrector(c)
            | Command::Homogenize(c)
            | Command::Quantify(c)
            | Command::Ensemble(c)
            | Command::Twoscale(c)
            | Command::Probe(c)
            | Command::VarianceScaling(c) => c,
        }
    }
}

/// 3 for solver failures, 2 for everything else (configuration, parameters, I/O).
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::FailureBudget { .. } | Error::NonConvergence { .. } | Error::SingularGram(_) => 3,
        _ => 2,
    }
}

fn missing(section: &str) -> Error {
    Error::Config {
        path: section.into(),
        message: "section is required by this command".into(),
    }
}

fn master_seed(cmd: &Command, cfg: &RunConfig) -> Result<u64> {
    Ok(match cmd {
        Command::SampleGeometry(_) => {
            cfg.sample_geometry
                .as_ref()
                .ok_or_else(|| missing("sample_geometry"))?
                .master_seed
        }
        Command::Corrector(_) => {
            cfg.corrector
                .as_ref()
                .ok_or_else(|| missing("corrector"))?
                .master_seed
        }
        Command::Homogenize(_) => {
            cfg.homogenize
                .as_ref()
                .ok_or_else(|| missing("homogenize"))?
                .master_seed
        }
        Command::Quantify(_) => {
            cfg.quantify
                .as_ref()
                .ok_or_else(|| missing("quantify"))?
                .master_seed
        }
        Command::Ensemble(_) => {
            cfg.ensemble
                .as_ref()
                .ok_or_else(|| missing("ensemble"))?
                .master_seed
        }
        Command::Twoscale(_) => {
            cfg.twoscale
                .as_ref()
                .ok_or_else(|| missing("twoscale"))?
                .master_seed
        }
        Command::Probe(_) => {
            cfg.probe
                .as_ref()
                .ok_or_else(|| missing("probe"))?
                .master_seed
        }
        Command::VarianceScaling(_) => {
            cfg.variance_scaling
                .as_ref()
                .ok_or_else(|| missing("variance_scaling"))?
                .base
                .master_seed
        }
    })
}

/// Parse, validate, write the manifest, run, write results. Returns the exit code.
pub fn dispatch(cmd: &Command) -> i32 {
    match run(cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("holehom {}: {e}", cmd.name());
            exit_code(&e)
        }
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    let cfg = parse_config(&common.config)?;
    let seed = master_seed(cmd, &cfg)?;
    let workers = resolve_workers(common.workers);
    let mut manifest = RunManifest::new(cmd.name(), &cfg, seed, workers)?;
    let mut out = OutDir::create(&common.out)?;
    out.write_json(MANIFEST, &manifest)?;
    match execute(cmd, &cfg, workers, &mut out, &mut manifest) {
        Ok(()) => {
            manifest.finished_unix = Some(unix_now());
            manifest.outputs = out.names();
            out.write_json(MANIFEST, &manifest)
        }
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn execute(
    cmd: &Command,
    cfg: &RunConfig,
    workers: usize,
    out: &mut OutDir,
    manifest: &mut RunManifest,
) -> Result<()> {
    let dump = cmd.common().dump_field;
    match cmd {
        Command::SampleGeometry(_) => sample_geometry(cfg, out, manifest),
        Command::Corrector(_) => corrector(cfg, out, manifest, dump),
        Command::Homogenize(_) => homogenize(cfg, workers, out, manifest, dump),
        Command::Quantify(_) => quantify(cfg, workers, out, manifest, dump),
        Command::Ensemble(_) => {
            let c = cfg.ensemble.as_ref().ok_or_else(|| missing("ensemble"))?;
            let report = run_ensemble(c, workers)?;
            write_ensemble(out, &report)?;
            out.write_json("fits.json", &report.fits)
        }
        Command::VarianceScaling(_) => {
            let c = cfg
                .variance_scaling
                .as_ref()
                .ok_or_else(|| missing("variance_scaling"))?;
            let (report, fit) = variance_scaling(&c.base, &c.box_sides, workers)?;
            write_ensemble(out, &report)?;
            out.write_json("fits.json", &fit)
        }
        Command::Twoscale(_) => {
            let c = cfg.twoscale.as_ref().ok_or_else(|| missing("twoscale"))?;
            manifest.notes.push(format!(
                "two-scale corrector uses T = {} (microstructure box squared unless configured)",
                c.corrector_t()
            ));
            let report = run_twoscale(c, workers)?;
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.realization.to_string(),
                        fmt_f(r.epsilon),
                        fmt_f(r.defect),
                        fmt_f(r.grad_g_norm),
                    ]
                })
                .collect();
            out.write_csv(
                "defect.csv",
                &header(&["realization", "epsilon", "defect", "grad_g_norm"]),
                &rows,
            )?;
            out.write_json(
                "ratefit.json",
                &serde_json::json!({
                    "fit": report.fit,
                    "median_defects": report.median_defects,
                    "median_monotone": report.median_monotone,
                    "a_hom": report.a_hom,
                }),
            )
        }
        Command::Probe(_) => probe(cfg, out, manifest, dump),
    }
}

fn sample_geometry(cfg: &RunConfig, out: &mut OutDir, manifest: &mut RunManifest) -> Result<()> {
    let c = cfg
        .sample_geometry
        .as_ref()
        .ok_or_else(|| missing("sample_geometry"))?;
    let mut rows = Vec::new();
    for k in 0..c.samples {
        let seed = split_seed(c.master_seed, k as u64);
        let set = sample(&c.geometry, seed)?;
        if k == 0 {
            manifest.geometry_parameters = set.parameters.clone();
        }
        let mut rep = check_admissible(&set);
        if let Some(n) = c.cells_per_side {
            let field = crate::field::rasterize(&set, n, &Default::default())?;
            rep.matrix_connected_on_grid = Some(matrix_components(&field).count == 1);
        }
        out.write_text(
            &format!("geometry_{k:04}.json"),
            &inclusion_set_to_json(&set)?,
        )?;
        let l = set.box_side;
        rows.push(vec![
            k.to_string(),
            seed.to_string(),
            set.len().to_string(),
            fmt_f(set.hole_volume() / l.powi(set.dimension as i32)),
            rep.diameter_ok.to_string(),
            rep.separation_ok.to_string(),
            fmt_f(rep.min_separation_ratio),
            fmt_f(rep.max_diameter),
            rep.matrix_connected_on_grid
                .map(|b| b.to_string())
                .unwrap_or_default(),
        ]);
    }
    out.write_csv(
        "admissibility.csv",
        &header(&[
            "sample",
            "seed",
            "inclusions",
            "hole_fraction",
            "diameter_ok",
            "separation_ok",
            "min_separation_ratio",
            "max_diameter",
            "matrix_connected",
        ]),
        &rows,
    )
}

fn a_hom_header(d: usize) -> Vec<String> {
    let mut h = vec!["row".to_string()];
    h.extend((0..d).map(|i| format!("col{}", i + 1)));
    h
}

fn a_hom_rows(a: &[Vec<f64>]) -> Vec<Vec<String>> {
    a.iter()
        .enumerate()
        .map(|(j, row)| {
            let mut r = vec![(j + 1).to_string()];
            r.extend(row.iter().map(|&v| fmt_f(v)));
            r
        })
        .collect()
}

fn corrector(
    cfg: &RunConfig,
    out: &mut OutDir,
    manifest: &mut RunManifest,
    dump: bool,
) -> Result<()> {
    let c = cfg.corrector.as_ref().ok_or_else(|| missing("corrector"))?;
    let seed = split_seed(c.master_seed, 0);
    let (set, field) = c.medium.build(seed)?;
    manifest.geometry_parameters = set.parameters.clone();
    if dump {
        dump_field(out, &field, "field")?;
    }
    let bundle = compute_bundle(field, c.medium.t(), &c.solver, c.parts, seed)?;
    let est = homogenized_estimate(&bundle);
    out.write_csv(
        "a_hom.csv",
        &a_hom_header(est.a_hom.len()),
        &a_hom_rows(&est.a_hom),
    )?;
    let stats: Vec<Vec<String>> = bundle.stats().into_iter().map(stats_row).collect();
    out.write_csv("stats.csv", &header(&STATS_HEADER), &stats)?;
    out.write_json("estimate.json", &est)
}

fn homogenize(
    cfg: &RunConfig,
    workers: usize,
    out: &mut OutDir,
    manifest: &mut RunManifest,
    dump: bool,
) -> Result<()> {
    let c = cfg
        .homogenize
        .as_ref()
        .ok_or_else(|| missing("homogenize"))?;
    let results = run_indexed(c.samples, workers, |k| -> Result<_> {
        let seed = split_seed(c.master_seed, k as u64);
        let (set, field) = c.medium.build(seed)?;
        let bundle = compute_bundle(
            field.clone(),
            c.medium.t(),
            &c.solver,
            BundleParts::FLUX_ONLY,
            seed,
        )?;
        let stats: Vec<Vec<String>> = bundle.stats().into_iter().map(stats_row).collect();
        Ok((
            seed,
            set.parameters,
            field,
            homogenized_estimate(&bundle),
            stats,
        ))
    })?;
    let d = c.medium.geometry.dimension();
    let mut rows = Vec::new();
    let mut stats = Vec::new();
    let mut mean = vec![vec![0.0; d]; d];
    for (k, r) in results.into_iter().enumerate() {
        let (seed, params, field, est, st) = r?;
        if k == 0 {
            manifest.geometry_parameters = params;
            if dump {
                dump_field(out, &field, "field")?;
            }
        }
        let mut row = vec![
            k.to_string(),
            seed.to_string(),
            fmt_f(est.volume_fraction_matrix),
        ];
        for j in 0..d {
            for i in 0..d {
                row.push(fmt_f(est.a_hom[j][i]));
                mean[j][i] += est.a_hom[j][i] / c.samples as f64;
            }
        }
        rows.push(row);
        stats.extend(st.into_iter().map(|mut s| {
            s.insert(0, k.to_string());
            s
        }));
    }
    let mut h = header(&["sample", "seed", "volume_fraction"]);
    h.extend((0..d).flat_map(|j| (0..d).map(move |i| format!("a_hom_{}{}", j + 1, i + 1))));
    out.write_csv("a_hom_samples.csv", &h, &rows)?;
    out.write_csv("a_hom.csv", &a_hom_header(d), &a_hom_rows(&mean))?;
    let mut sh = vec!["sample".to_string()];
    sh.extend(header(&STATS_HEADER));
    out.write_csv("stats.csv", &sh, &stats)
}

struct QuantifyRows {
    excess: Vec<Vec<String>>,
    rstar: Vec<Vec<String>>,
    holefill: Vec<Vec<String>>,
    growth: Vec<Vec<String>>,
    probes: Vec<Vec<String>>,
}

fn quantify(
    cfg: &RunConfig,
    workers: usize,
    out: &mut OutDir,
    manifest: &mut RunManifest,
    dump: bool,
) -> Result<()> {
    let c = cfg.quantify.as_ref().ok_or_else(|| missing("quantify"))?;
    let l = c.medium.geometry.box_side();
    let d = c.medium.geometry.dimension();
    let t = c.medium.t();
    let holefill_ok = t.sqrt() <= 0.5 * l;
    if !holefill_ok {
        manifest
            .notes
            .push("holefill.csv is empty: hole filling needs sqrt(T) <= L/2".into());
    }
    let results = run_indexed(c.samples, workers, |k| -> Result<_> {
        let seed = split_seed(c.master_seed, k as u64);
        let (set, field) = c.medium.build(seed)?;
        let bundle = compute_bundle(field.clone(), t, &c.solver, BundleParts::ALL, seed)?;
        let grid = *bundle.grid();
        let center = c
            .center
            .clone()
            .unwrap_or_else(|| sample_center(seed, d, l));
        let ks = k.to_string();
        let mut rows = QuantifyRows {
            excess: Vec::new(),
            rstar: Vec::new(),
            holefill: Vec::new(),
            growth: Vec::new(),
            probes: Vec::new(),
        };

        let reg = regularity_radius(&bundle, &c.quantify, &center)?;
        rows.rstar.push(vec![
            ks.clone(),
            fmt_f(reg.rstar.unwrap_or(f64::INFINITY)),
            fmt_f(reg.threshold_c),
        ]);

        let harmonic = a_harmonic_sample(&field, &c.solver, split_seed(seed, 1), &center)?;
        for r in c
            .quantify
            .radii_for(&grid)
            .into_iter()
            .filter(|&r| r <= 0.25 * l && r >= 2.0 * grid.spacing())
        {
            let mut row = vec![ks.clone(), fmt_f(r)];
            match excess(&harmonic.grad, &bundle, r, &center) {
                Ok(e) => {
                    row.push(fmt_f(e.value));
                    row.extend(e.xi.iter().map(|&x| fmt_f(x)));
                }
                Err(Error::SingularGram(_)) => {
                    row.push(fmt_f(f64::NAN));
                    row.extend((0..d).map(|_| fmt_f(f64::NAN)));
                }
                Err(e) => return Err(e),
            }
            rows.excess.push(row);
        }

        if holefill_ok {
            let hf = hole_filling_ratio(&bundle, 0, None)?;
            for p in &hf.rows {
                rows.holefill.push(vec![
                    ks.clone(),
                    fmt_f(p.radius),
                    fmt_f(p.value),
                    fmt_f(hf.eps_hat),
                ]);
            }
        }

        for i in 0..d {
            let prof = corrector_growth_profile(&grid, bundle.phi_ext(i), &center);
            let fit = fit_growth_regime(&prof).ok();
            let regime = fit
                .as_ref()
                .map(|f| format!("{:?}", f.regime).to_lowercase())
                .unwrap_or_default();
            let theta = fit.as_ref().map(|f| fmt_f(f.theta)).unwrap_or_default();
            for p in &prof {
                rows.growth.push(vec![
                    ks.clone(),
                    (i + 1).to_string(),
                    fmt_f(p.radius),
                    fmt_f(p.value),
                    regime.clone(),
                    theta.clone(),
                ]);
            }
        }

        if c.probes {
            let setup = ProbeSetup {
                params: c.medium.geometry.clone(),
                cells_per_side: c.medium.cells_per_side,
                profile: c.medium.profile.clone(),
                t,
                solver: c.solver.clone(),
                kappa: c.quantify.kappa,
            };
            let probe_seed = split_seed(seed, 2);
            let radii = [0.125 * l, 0.25 * l, 0.375 * l];
            let loc = locality_probe(&setup, &set, &bundle, &radii, &center, probe_seed)?;
            for p in &loc.rows {
                rows.probes.push(vec![
                    ks.clone(),
                    "locality".into(),
                    fmt_f(p.radius),
                    fmt_f(p.value),
                ]);
            }
            let m = c.quantify.oscillation_radius_m;
            let osc = oscillation_probe(
                &setup,
                &set,
                &bundle,
                &center,
                m,
                2.0 * m,
                &center,
                probe_seed,
            )?;
            rows.probes
                .push(vec![ks.clone(), "oscillation".into(), fmt_f(m), fmt_f(osc)]);
        }
        Ok((set.parameters, field, rows))
    })?;

    let mut all = QuantifyRows {
        excess: Vec::new(),
        rstar: Vec::new(),
        holefill: Vec::new(),
        growth: Vec::new(),
        probes: Vec::new(),
    };
    for (k, r) in results.into_iter().enumerate() {
        let (params, field, rows) = r?;
        if k == 0 {
            manifest.geometry_parameters = params;
            if dump {
                dump_field(out, &field, "field")?;
            }
        }
        all.excess.extend(rows.excess);
        all.rstar.extend(rows.rstar);
        all.holefill.extend(rows.holefill);
        all.growth.extend(rows.growth);
        all.probes.extend(rows.probes);
    }
    let mut eh = header(&["sample", "r", "value"]);
    eh.extend((0..d).map(|i| format!("xi{}", i + 1)));
    out.write_csv("excess.csv", &eh, &all.excess)?;
    out.write_csv("rstar.csv", &header(&["sample", "rstar", "C"]), &all.rstar)?;
    out.write_csv(
        "holefill.csv",
        &header(&["sample", "R", "E", "eps_hat"]),
        &all.holefill,
    )?;
    out.write_csv(
        "growth.csv",
        &header(&["sample", "direction", "r", "value", "regime", "theta"]),
        &all.growth,
    )?;
    out.write_csv(
        "probes.csv",
        &header(&["sample", "kind", "radius", "value"]),
        &all.probes,
    )
}

fn probe(cfg: &RunConfig, out: &mut OutDir, manifest: &mut RunManifest, dump: bool) -> Result<()> {
    let c = cfg.probe.as_ref().ok_or_else(|| missing("probe"))?;
    let seed = split_seed(c.master_seed, 0);
    let (set, field) = c.medium.build(seed)?;
    manifest.geometry_parameters = set.parameters.clone();
    if dump {
        dump_field(out, &field, "field")?;
    }
    let l = c.medium.geometry.box_side();
    let d = c.medium.geometry.dimension();
    let t = c.medium.t();
    let bundle = compute_bundle(field, t, &c.solver, BundleParts::ALL, seed)?;
    let center = c
        .center
        .clone()
        .unwrap_or_else(|| sample_center(seed, d, l));
    let setup = ProbeSetup {
        params: c.medium.geometry.clone(),
        cells_per_side: c.medium.cells_per_side,
        profile: c.medium.profile.clone(),
        t,
        solver: c.solver.clone(),
        kappa: c.kappa,
    };
    let probe_seed = split_seed(seed, 2);
    let radii = c
        .locality_radii
        .clone()
        .unwrap_or_else(|| vec![0.125 * l, 0.25 * l, 0.375 * l]);
    let loc = locality_probe(&setup, &set, &bundle, &radii, &center, probe_seed)?;
    let osc = oscillation_probe(
        &setup,
        &set,
        &bundle,
        &center,
        c.oscillation_radius_m,
        c.bump_radius,
        &center,
        probe_seed,
    )?;
    let mut rows: Vec<Vec<String>> = loc
        .rows
        .iter()
        .map(|p| vec!["locality".into(), fmt_f(p.radius), fmt_f(p.value)])
        .collect();
    rows.push(vec![
        "oscillation".into(),
        fmt_f(c.oscillation_radius_m),
        fmt_f(osc),
    ]);
    out.write_csv("probes.csv", &header(&["kind", "radius", "value"]), &rows)?;
    out.write_json(
        "probe_fit.json",
        &serde_json::json!({ "center": center, "locality_rate": loc.rate, "oscillation": osc }),
    )
}

fn write_ensemble(out: &mut OutDir, report: &EnsembleReport) -> Result<()> {
    let mut h = header(&[
        "point",
        "sample",
        "seed",
        "box_side",
        "cells_per_side",
        "T",
        "status",
    ]);
    h.extend(report.columns.iter().cloned());
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.point.to_string(),
                r.sample.to_string(),
                r.seed.to_string(),
                fmt_f(r.box_side),
                r.cells_per_side.to_string(),
                fmt_f(r.t),
                if r.is_ok() {
                    "ok".into()
                } else {
                    "failed".into()
                },
            ];
            if r.is_ok() {
                v.extend(r.values.iter().map(|&x| fmt_f(x)));
            } else {
                v.extend(report.columns.iter().map(|_| String::new()));
            }
            v
        })
        .collect();
    out.write_csv("rows.csv", &h, &rows)?;
    let agg: Vec<Vec<String>> = report
        .aggregates
        .iter()
        .map(|a| {
            vec![
                a.point.to_string(),
                a.column.clone(),
                a.count.to_string(),
                a.non_finite.to_string(),
                fmt_f(a.mean),
                fmt_f(a.variance),
                fmt_f(a.min),
                fmt_f(a.q05),
                fmt_f(a.median),
                fmt_f(a.q95),
                fmt_f(a.max),
            ]
        })
        .collect();
    out.write_csv(
        "aggregates.csv",
        &header(&[
            "point",
            "column",
            "count",
            "non_finite",
            "mean",
            "variance",
            "min",
            "q05",
            "median",
            "q95",
            "max",
        ]),
        &agg,
    )
}
