//! Config loading shared by all subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use snspd_core::dynamics::{EfficiencyRecovery, PulseShape, RecoveryCurve, DETECTOR_FIG3A};
use snspd_core::materials::{DispersionTable, MaterialLibrary};
use snspd_core::{Error, Result};

/// Reads a TOML config, or JSON when the extension is `.json`: either the
/// bare config echoed into every output or a whole `report.json`.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str::<serde_json::Value>(&text)
            .and_then(|mut doc| {
                if doc.get("command").is_some() {
                    if let Some(cfg) = doc.get_mut("config") {
                        doc = cfg.take();
                    }
                }
                serde_json::from_value(doc)
            })
            .map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Resolves `path` against the config directory and checks that it exists.
pub fn resolve_path(base: &Path, path: &Path) -> Result<PathBuf> {
    let joined = if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    };
    let abs = std::path::absolute(&joined)?;
    if !abs.exists() {
        return Err(Error::Validation(format!(
            "referenced file {} does not exist",
            abs.display()
        )));
    }
    Ok(abs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantMaterial {
    pub n: f64,
    #[serde(default)]
    pub k: f64,
    #[serde(default = "default_min_nm")]
    pub min_nm: f64,
    #[serde(default = "default_max_nm")]
    pub max_nm: f64,
}

fn default_min_nm() -> f64 {
    100.0
}

fn default_max_nm() -> f64 {
    20_000.0
}

/// A material given as a dispersion CSV (`wavelength_nm,n,k`) or a constant index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialSource {
    Table(PathBuf),
    Constant(ConstantMaterial),
}

/// The illustrative library extended or overridden by `materials`. Table
/// paths are rewritten to absolute paths.
pub fn material_library(
    materials: &mut BTreeMap<String, MaterialSource>,
    base: &Path,
) -> Result<MaterialLibrary> {
    let mut lib = MaterialLibrary::illustrative();
    for (name, source) in materials.iter_mut() {
        let table = match source {
            MaterialSource::Table(path) => {
                *path = resolve_path(base, path)?;
                DispersionTable::from_csv_path(name.clone(), &*path)?
            }
            MaterialSource::Constant(c) => {
                DispersionTable::constant(name.clone(), c.n, c.k, c.min_nm, c.max_nm)?
            }
        };
        lib.insert(table);
    }
    Ok(lib)
}

/// Recovery model: a named preset, an electrical pulse model, or explicit
/// pulse time constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecoverySpec {
    Preset {
        preset: String,
    },
    Electrical {
        kinetic_inductance_nh: f64,
        load_ohm: f64,
        hotspot_ohm: f64,
        efficiency: EfficiencyRecovery,
    },
    Explicit {
        pulse: PulseShape,
        efficiency: EfficiencyRecovery,
    },
}

impl Default for RecoverySpec {
    fn default() -> Self {
        RecoverySpec::Preset {
            preset: DETECTOR_FIG3A.into(),
        }
    }
}

impl RecoverySpec {
    pub fn curve(&self) -> Result<RecoveryCurve> {
        match self {
            RecoverySpec::Preset { preset } => RecoveryCurve::preset(preset),
            RecoverySpec::Electrical {
                kinetic_inductance_nh,
                load_ohm,
                hotspot_ohm,
                efficiency,
            } => RecoveryCurve::new(
                PulseShape::from_electrical(*kinetic_inductance_nh, *load_ohm, *hotspot_ohm)?,
                *efficiency,
            ),
            RecoverySpec::Explicit { pulse, efficiency } => RecoveryCurve::new(*pulse, *efficiency),
        }
    }
}

/// Seed from the command line, else from the config; stochastic commands
/// must have one.
pub fn require_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    flag.or(config).ok_or_else(|| {
        Error::Validation("this command is stochastic: give --seed or `seed` in the config".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn material_source_forms() {
        #[derive(Deserialize)]
        struct Wrap {
            materials: BTreeMap<String, MaterialSource>,
        }
        let w: Wrap =
            toml::from_str("[materials]\nglass = { n = 1.5 }\nsi = \"si.csv\"\n").unwrap();
        assert_eq!(w.materials["si"], MaterialSource::Table("si.csv".into()));
        assert!(
            matches!(&w.materials["glass"], MaterialSource::Constant(c) if c.n == 1.5 && c.k == 0.0)
        );
    }

    #[test]
    fn recovery_spec_forms() {
        let preset: RecoverySpec = toml::from_str("preset = \"detector-fig3a\"").unwrap();
        assert_eq!(preset.curve().unwrap(), RecoveryCurve::detector_fig3a());
        let explicit: RecoverySpec = toml::from_str(
            "pulse = { tau_rise_ns = 0.0, tau_fall_ns = 30.0 }\nefficiency = { t_blind_ns = 20.0, tau_eff_ns = 10.0 }",
        )
        .unwrap();
        assert_eq!(explicit.curve().unwrap().efficiency.t_blind_ns, 20.0);
        let unknown: RecoverySpec = toml::from_str("preset = \"other\"").unwrap();
        assert!(unknown.curve().is_err());
    }

    #[test]
    fn missing_seed_is_a_validation_error() {
        assert!(matches!(
            require_seed(None, None),
            Err(Error::Validation(_))
        ));
        assert_eq!(require_seed(Some(1), Some(2)).unwrap(), 1);
        assert_eq!(require_seed(None, Some(2)).unwrap(), 2);
    }
}
