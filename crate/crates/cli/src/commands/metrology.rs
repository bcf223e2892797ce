use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use snspd_core::metrology::{
    analyze_session, combine_uncertainty, photon_flux, AttenuationChain, MeasurementSession,
    DEFAULT_RATIO_BAND_DB,
};
use snspd_core::Result;

use crate::config;
use crate::output::{num, Report, Table};

fn default_band() -> (f64, f64) {
    DEFAULT_RATIO_BAND_DB
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedAttenuation {
    pub ratio_db: f64,
    #[serde(default)]
    pub nd_stages_db: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedAttenuation {
    /// `(P1, P2)` pairs in W.
    pub readings_w: Vec<(f64, f64)>,
    #[serde(default)]
    pub nd_stages_db: Vec<f64>,
    #[serde(default = "default_band")]
    pub ratio_band_db: (f64, f64),
}

/// A known splitter ratio, or one calibrated from `(P1, P2)` readings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttenuationSpec {
    Fixed(FixedAttenuation),
    Calibrated(CalibratedAttenuation),
}

impl AttenuationSpec {
    fn chain(&self) -> Result<AttenuationChain> {
        match self {
            AttenuationSpec::Fixed(f) => {
                let mut chain = AttenuationChain::fixed(f.ratio_db)?;
                chain.nd_stages_db = f.nd_stages_db.clone();
                Ok(chain)
            }
            AttenuationSpec::Calibrated(c) => AttenuationChain::from_calibration(
                c.readings_w.clone(),
                c.nd_stages_db.clone(),
                c.ratio_band_db,
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxConfig {
    pub p_monitor_w: f64,
    pub wavelength_nm: f64,
    pub attenuation: AttenuationSpec,
}

pub fn flux(path: &Path) -> Result<Report> {
    let cfg: FluxConfig = config::load(path)?;
    let chain = cfg.attenuation.chain()?;
    let f = photon_flux(cfg.p_monitor_w, &chain, cfg.wavelength_nm)?;
    let mut table = Table::new([
        "p_monitor_w",
        "attenuation_db",
        "wavelength_nm",
        "power_at_detector_w",
        "photons_per_s",
    ]);
    table.push(vec![
        num(cfg.p_monitor_w),
        num(chain.total_attenuation_db()),
        num(cfg.wavelength_nm),
        num(f.power_at_detector_w),
        num(f.photons_per_s),
    ]);
    table
        .notes
        .push(format!("photon flux: {:.4e} photons/s", f.photons_per_s));
    let result =
        json!({ "attenuation_db": chain.total_attenuation_db(), "flux": f, "chain": chain });
    Report::new("flux", &cfg, &result, table)
}

pub fn sde(path: &Path) -> Result<Report> {
    let cfg: MeasurementSession = config::load(path)?;
    let report = analyze_session(&cfg)?;
    let mut table = Table::new([
        "timestamp",
        "counts_per_s",
        "dark_per_s",
        "photons_per_s",
        "r_rfl",
        "sde",
        "uncertainty",
        "over_unity",
    ]);
    for p in &report.points {
        let r = &p.result;
        table.push(vec![
            p.timestamp.clone(),
            num(r.counts_per_s),
            num(r.dark_per_s),
            num(r.flux.photons_per_s),
            num(r.r_rfl),
            num(r.sde),
            num(r.uncertainty),
            p.over_unity.to_string(),
        ]);
    }
    table.notes.push(format!(
        "attenuation: {:.4} dB",
        report.total_attenuation_db
    ));
    Report::new("sde", &cfg, &report, table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub label: String,
    pub percent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub components: Vec<ComponentSpec>,
}

pub fn uncertainty(path: &Path) -> Result<Report> {
    let cfg: UncertaintyConfig = config::load(path)?;
    let budget = combine_uncertainty(
        cfg.components
            .iter()
            .map(|c| (c.label.clone(), c.percent / 100.0)),
    )?;
    let total_percent = 100.0 * budget.total;
    let mut table = Table::new(["label", "percent"]);
    for c in &cfg.components {
        table.push(vec![c.label.clone(), num(c.percent)]);
    }
    table.push(vec!["total (RSS)".into(), num(total_percent)]);
    let display = format!("{total_percent:.2}%");
    table
        .notes
        .push(format!("total uncertainty: ±{display} (RMS)"));
    let result =
        json!({ "budget": budget, "total_percent": total_percent, "total_display": display });
    Report::new("uncertainty", &cfg, &result, table)
}
