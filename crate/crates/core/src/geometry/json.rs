use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{GeneratorTag, Inclusion, InclusionSet};
use crate::error::{Error, Result};

/// Decimal rendering with 17 significant digits (enough to round-trip any f64).
pub fn format_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() {
            "0.0".into()
        } else {
            "null".into()
        };
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-6..=15).contains(&exponent) {
        let decimals = (16 - exponent).max(1) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}

fn raw(x: f64) -> Box<RawValue> {
    RawValue::from_string(format_real(x)).expect("formatted real is valid JSON")
}

#[derive(Serialize)]
struct Doc<'a> {
    dimension: usize,
    box_side: Box<RawValue>,
    separation: Box<RawValue>,
    diameter_cap: Box<RawValue>,
    seed: u64,
    generator_tag: GeneratorTag,
    parameters: &'a BTreeMap<String, serde_json::Value>,
    inclusions: Vec<Vec<Box<RawValue>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocIn {
    dimension: usize,
    box_side: f64,
    separation: f64,
    diameter_cap: f64,
    seed: u64,
    generator_tag: GeneratorTag,
    #[serde(default)]
    parameters: BTreeMap<String, serde_json::Value>,
    inclusions: Vec<Vec<f64>>,
}

pub fn inclusion_set_to_json(set: &InclusionSet) -> Result<String> {
    let doc = Doc {
        dimension: set.dimension,
        box_side: raw(set.box_side),
        separation: raw(set.separation),
        diameter_cap: raw(set.diameter_cap),
        seed: set.seed,
        generator_tag: set.generator,
        parameters: &set.parameters,
        inclusions: set
            .inclusions
            .iter()
            .map(|inc| {
                inc.center
                    .iter()
                    .chain(std::iter::once(&inc.radius))
                    .map(|&x| raw(x))
                    .collect()
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn inclusion_set_from_json(text: &str) -> Result<InclusionSet> {
    let doc: DocIn = serde_json::from_str(text)?;
    let inclusions = doc
        .inclusions
        .into_iter()
        .map(|mut row| {
            if row.len() != doc.dimension + 1 {
                return Err(Error::param(format!(
                    "inclusion row has {} entries, expected {}",
                    row.len(),
                    doc.dimension + 1
                )));
            }
            let r = row.pop().unwrap();
            Ok(Inclusion::new(row, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InclusionSet {
        inclusions,
        box_side: doc.box_side,
        dimension: doc.dimension,
        separation: doc.separation,
        diameter_cap: doc.diameter_cap,
        seed: doc.seed,
        generator: doc.generator_tag,
        parameters: doc.parameters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_lattice_iid, LatticeParams, RadiusLaw};
    use proptest::prelude::*;

    #[test]
    fn reals_carry_at_least_fifteen_digits() {
        for x in [0.1, 1.0 / 3.0, 16.0, 2.5e-7, 123456.789] {
            let s = format_real(x);
            let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
            assert!(digits >= 15, "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn document_round_trips() {
        let p = LatticeParams {
            box_side: 4.0,
            dimension: 2,
            radius_law: RadiusLaw::Uniform { lo: 0.0, hi: 0.2 },
            diameter_cap: 0.5,
            separation: None,
        };
        let set = sample_lattice_iid(&p, 11).unwrap();
        let text = inclusion_set_to_json(&set).unwrap();
        assert!(text.contains("\"generator_tag\": \"LatticeIID\""));
        assert_eq!(inclusion_set_from_json(&text).unwrap(), set);
    }

    proptest! {
        #[test]
        fn format_real_round_trips(x in -1e12f64..1e12) {
            prop_assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
