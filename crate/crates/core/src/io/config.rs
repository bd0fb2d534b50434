use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrector::BundleParts;
use crate::elliptic::SolverConfig;
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::field::{rasterize, CoefficientField, Grid, Profile};
use crate::geometry::{sample, GeometryParams, InclusionSet};
use crate::quantify::QuantifyConfig;
use crate::twoscale::TwoScaleConfig;

/// One medium: geometry law, resolution, coefficient profile and massive parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    pub geometry: GeometryParams,
    pub cells_per_side: usize,
    #[serde(default)]
    pub profile: Profile,
    /// Defaults to `L²`.
    #[serde(default, rename = "T")]
    pub t: Option<f64>,
}

impl Medium {
    pub fn t(&self) -> f64 {
        self.t.unwrap_or(self.geometry.box_side().powi(2))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.profile.validate(self.geometry.dimension())?;
        Grid::new(
            self.geometry.dimension(),
            self.cells_per_side,
            self.geometry.box_side(),
        )?;
        if !(self.t() > 0.0 && self.t().is_finite()) {
            return Err(Error::param("T must be positive and finite"));
        }
        Ok(())
    }

    pub fn build(&self, seed: u64) -> Result<(InclusionSet, Arc<CoefficientField>)> {
        let set = sample(&self.geometry, seed)?;
        let field = Arc::new(rasterize(&set, self.cells_per_side, &self.profile)?);
        Ok((set, field))
    }
}

fn default_samples() -> usize {
    1
}

fn default_parts() -> BundleParts {
    BundleParts::FLUX_ONLY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGeometryConfig {
    pub geometry: GeometryParams,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// When set, matrix connectivity is also checked on this grid.
    #[serde(default)]
    pub cells_per_side: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorConfig {
    pub medium: Medium,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_parts")]
    pub parts: BundleParts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizeConfig {
    pub medium: Medium,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantifyRunConfig {
    pub medium: Medium,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub quantify: QuantifyConfig,
    /// Diagnostic center; random per sample when absent.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub probes: bool,
}

fn default_true() -> bool {
    true
}

fn default_kappa() -> f64 {
    1.0
}

fn default_m() -> f64 {
    1.0
}

fn default_bump() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub medium: Medium,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Resampling radii of the locality probe; default `L/8, L/4, 3L/8`.
    #[serde(default)]
    pub locality_radii: Option<Vec<f64>>,
    #[serde(default = "default_m", rename = "oscillation_radius_M")]
    pub oscillation_radius_m: f64,
    #[serde(default = "default_bump")]
    pub bump_radius: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceScalingConfig {
    pub base: EnsembleConfig,
    pub box_sides: Vec<f64>,
}

/// The whole configuration file; each command reads its own section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sample_geometry: Option<SampleGeometryConfig>,
    #[serde(default)]
    pub corrector: Option<CorrectorConfig>,
    #[serde(default)]
    pub homogenize: Option<HomogenizeConfig>,
    #[serde(default)]
    pub quantify: Option<QuantifyRunConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub twoscale: Option<TwoScaleConfig>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub variance_scaling: Option<VarianceScalingConfig>,
}

fn at(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::Config {
            path: section.into(),
            message: other.to_string(),
        },
    })
}

fn check_center(center: &Option<Vec<f64>>, geometry: &GeometryParams) -> Result<()> {
    if let Some(c) = center {
        if c.len() != geometry.dimension() {
            return Err(Error::param(
                "center must have one coordinate per dimension",
            ));
        }
    }
    Ok(())
}

fn positive_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("samples must be at least 1"));
    }
    Ok(())
}

impl SampleGeometryConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        positive_samples(self.samples)?;
        if let Some(n) = self.cells_per_side {
            Grid::new(self.geometry.dimension(), n, self.geometry.box_side())?;
        }
        Ok(())
    }
}

impl CorrectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.solver.validate()
    }
}

impl HomogenizeConfig {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.solver.validate()?;
        positive_samples(self.samples)
    }
}

impl QuantifyRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.solver.validate()?;
        self.quantify.validate()?;
        positive_samples(self.samples)?;
        check_center(&self.center, &self.medium.geometry)
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.solver.validate()?;
        check_center(&self.center, &self.medium.geometry)?;
        if !(self.kappa > 0.0 && self.oscillation_radius_m > 0.0 && self.bump_radius > 0.0) {
            return Err(Error::param(
                "kappa, oscillation_radius_M and bump_radius must be positive",
            ));
        }
        if let Some(r) = &self.locality_radii {
            if r.is_empty() || r.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::param(
                    "locality_radii must be a non-empty list of positive radii",
                ));
            }
        }
        Ok(())
    }
}

impl VarianceScalingConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.box_sides.len() < 3 || self.box_sides.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::param(
                "box_sides needs at least three positive values",
            ));
        }
        if self.base.sample_count < 100 {
            return Err(Error::param(
                "variance scaling needs at least 100 samples per box side",
            ));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Validate every section that is present.
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.sample_geometry {
            at("sample_geometry", c.validate())?;
        }
        if let Some(c) = &self.corrector {
            at("corrector", c.validate())?;
        }
        if let Some(c) = &self.homogenize {
            at("homogenize", c.validate())?;
        }
        if let Some(c) = &self.quantify {
            at("quantify", c.validate())?;
        }
        if let Some(c) = &self.ensemble {
            at("ensemble", c.validate())?;
        }
        if let Some(c) = &self.twoscale {
            at("twoscale", c.validate())?;
        }
        if let Some(c) = &self.probe {
            at("probe", c.validate())?;
        }
        if let Some(c) = &self.variance_scaling {
            at("variance_scaling", c.validate())?;
        }
        Ok(())
    }

    /// Canonical serialization: compact JSON with sorted keys, defaults filled in.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&serde_json::to_value(self)?)?)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(
            self.canonical_json()?.as_bytes(),
        )))
    }
}

/// Strict parse: unknown keys and type errors carry their JSON path.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "corrector": {
            "medium": {
                "geometry": {"generator": "lattice_iid", "box_side": 8, "dimension": 2,
                             "radius_law": {"kind": "uniform", "lo": 0.0, "hi": 0.2}},
                "cells_per_side": 32
            }
        }
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let c = cfg.corrector.as_ref().unwrap();
        assert_eq!(c.medium.t(), 64.0);
        assert_eq!(c.parts, BundleParts::FLUX_ONLY);
        assert_eq!(c.solver, SolverConfig::default());
        let text = cfg.canonical_json().unwrap();
        assert!(text.contains("\"relative_tolerance\":1e-10"), "{text}");
    }

    #[test]
    fn unknown_key_is_named_with_its_location() {
        let bad = MINIMAL.replace(
            "\"cells_per_side\": 32",
            "\"cells_per_side\": 32, \"tolerence\": 1e-8",
        );
        match parse_config_str(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "corrector.medium.tolerence");
                assert!(message.contains("tolerence"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let nested = MINIMAL.replace(
            "\"cells_per_side\": 32",
            "\"cells_per_side\": 32}, \"solver\": {\"tolerence\": 1",
        );
        let nested = nested.replacen("}\n        }\n    }", "}\n    }", 1);
        let err = parse_config_str(&nested).unwrap_err().to_string();
        assert!(
            err.contains("corrector.solver") && err.contains("tolerence"),
            "{err}"
        );
    }

    #[test]
    fn invalid_values_name_the_section() {
        let bad = MINIMAL.replace("32", "30");
        match parse_config_str(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "corrector"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let again = parse_config_str(&cfg.canonical_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.sha256().unwrap(), again.sha256().unwrap());
    }
}
