use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use snspd_core::cavity::{
    linspace, optimize_gap, sweep, CavityTemplate, ScanConfig, SweepGrid, Target,
    DEFAULT_PROMINENCE, GAP_RANGE_NM, LASER_WINDOW_NM,
};
use snspd_core::materials::{MaterialLibrary, Polarization};
use snspd_core::tmm::{solve_stack, LayerStack, MembraneCavity, StackSpec};
use snspd_core::{Error, Result};

use crate::config::{self, MaterialSource};
use crate::output::{num, Report, Table};

fn default_polarization() -> Polarization {
    Polarization::TE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialSource>,
    #[serde(default = "default_polarization")]
    pub polarization: Polarization,
    pub wavelengths_nm: Vec<f64>,
    /// Explicit stack; alternative to `cavity` + `gap_nm`.
    #[serde(default)]
    pub stack: Option<StackSpec>,
    #[serde(default)]
    pub cavity: Option<MembraneCavity>,
    #[serde(default)]
    pub gap_nm: Option<f64>,
}

impl SolveConfig {
    fn build(&self, lib: &MaterialLibrary) -> Result<LayerStack> {
        match (&self.stack, &self.cavity, self.gap_nm) {
            (Some(stack), None, None) => stack.build(lib),
            (None, Some(cavity), Some(gap)) => cavity.build(lib, gap),
            _ => Err(Error::Validation(
                "give either `stack`, or `cavity` together with `gap_nm`".into(),
            )),
        }
    }
}

pub fn solve(path: &Path) -> Result<Report> {
    let mut cfg: SolveConfig = config::load(path)?;
    let lib = config::material_library(&mut cfg.materials, base(path))?;
    let stack = cfg.build(&lib)?;
    if cfg.wavelengths_nm.is_empty() {
        return Err(Error::Validation("wavelengths_nm is empty".into()));
    }
    let layers = stack.layers().len();
    let mut header = vec![
        "wavelength_nm",
        "reflectance",
        "transmittance",
        "total_absorptance",
        "energy_sum",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend((0..layers).map(|i| format!("absorptance_layer_{i}")));
    let mut table = Table::new(header);
    let mut results = Vec::new();
    for &lambda in &cfg.wavelengths_nm {
        let r = solve_stack(&stack, lambda, cfg.polarization)?;
        let residual = r.energy_sum() - 1.0;
        let mut row = vec![
            num(lambda),
            num(r.reflectance),
            num(r.transmittance),
            num(r.total_absorptance()),
            num(r.energy_sum()),
        ];
        row.extend(r.layer_absorptance.iter().map(|&a| num(a)));
        table.push(row);
        results.push(json!({
            "wavelength_nm": lambda,
            "reflectance": r.reflectance,
            "transmittance": r.transmittance,
            "layer_absorptance": r.layer_absorptance,
            "total_absorptance": r.total_absorptance(),
            "energy_sum": r.energy_sum(),
            "energy_residual": residual,
            "energy_conserved": residual.abs() <= 1e-9,
        }));
    }
    Report::new(
        "solve",
        &cfg,
        &json!({ "polarization": cfg.polarization, "responses": results }),
        table,
    )
}

fn base(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn default_gaps() -> Axis {
    Axis {
        lo: GAP_RANGE_NM.0,
        hi: GAP_RANGE_NM.1,
        count: 200,
    }
}

fn default_wavelengths() -> Axis {
    Axis {
        lo: LASER_WINDOW_NM.0,
        hi: LASER_WINDOW_NM.1,
        count: 400,
    }
}

fn default_prominence() -> f64 {
    DEFAULT_PROMINENCE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialSource>,
    pub cavity: MembraneCavity,
    #[serde(default = "default_polarization")]
    pub polarization: Polarization,
    #[serde(default = "default_gaps")]
    pub gaps_nm: Axis,
    #[serde(default = "default_wavelengths")]
    pub wavelengths_nm: Axis,
    #[serde(default = "default_prominence")]
    pub prominence: f64,
}

pub fn sweep_cmd(path: &Path) -> Result<Report> {
    let mut cfg: SweepConfig = config::load(path)?;
    let lib = config::material_library(&mut cfg.materials, base(path))?;
    let template = CavityTemplate::membrane_cavity(&lib, &cfg.cavity)?;
    let grid = SweepGrid::new(
        linspace(
            cfg.wavelengths_nm.lo,
            cfg.wavelengths_nm.hi,
            cfg.wavelengths_nm.count,
        ),
        linspace(cfg.gaps_nm.lo, cfg.gaps_nm.hi, cfg.gaps_nm.count),
        cfg.polarization,
    )?;
    let map = sweep(&template, &grid)?;

    let mut table = Table::new([
        "gap_nm",
        "peak_count",
        "max_absorption",
        "max_wavelength_nm",
    ]);
    let mut peaks_csv = csv::Writer::from_writer(Vec::new());
    peaks_csv
        .write_record(["gap_nm", "wavelength_nm", "absorption", "prominence"])
        .map_err(Error::from)?;
    let mut by_count: BTreeMap<usize, usize> = BTreeMap::new();
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for (i, &gap) in grid.airgaps_nm().iter().enumerate() {
        let peaks = map.peaks_at(i, cfg.prominence)?;
        *by_count.entry(peaks.len()).or_default() += 1;
        for p in peaks.iter() {
            peaks_csv
                .write_record([
                    num(gap),
                    num(p.wavelength_nm),
                    num(p.absorption),
                    num(p.prominence),
                ])
                .map_err(Error::from)?;
        }
        let (j, &a) = map
            .row(i)
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty grid");
        let lambda = grid.wavelengths_nm()[j];
        if a > best.2 {
            best = (gap, lambda, a);
        }
        table.push(vec![num(gap), peaks.len().to_string(), num(a), num(lambda)]);
    }
    let peaks_body = peaks_csv
        .into_inner()
        .map_err(|e| Error::Parse(e.to_string()))?;
    let result = json!({
        "gaps": grid.airgaps_nm().len(),
        "wavelengths": grid.wavelengths_nm().len(),
        "gaps_by_peak_count": by_count.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        "max_absorption": { "gap_nm": best.0, "wavelength_nm": best.1, "absorption": best.2 },
        "files": ["map.csv", "peaks.csv"],
    });
    Report::new("sweep", &cfg, &result, table)?
        .file("map.csv", |buf| map.write_csv(buf))?
        .file("peaks.csv", |buf| {
            buf.extend_from_slice(&peaks_body);
            Ok(())
        })
}

fn default_scan_step() -> f64 {
    ScanConfig::default().scan_step_nm
}

fn default_tolerance() -> f64 {
    ScanConfig::default().tolerance_nm
}

fn default_bounds() -> (f64, f64) {
    GAP_RANGE_NM
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialSource>,
    pub cavity: MembraneCavity,
    #[serde(default = "default_polarization")]
    pub polarization: Polarization,
    pub targets: Vec<Target>,
    #[serde(default = "default_bounds")]
    pub gap_bounds_nm: (f64, f64),
    #[serde(default = "default_scan_step")]
    pub scan_step_nm: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance_nm: f64,
}

pub fn optimize(path: &Path) -> Result<Report> {
    let mut cfg: OptimizeConfig = config::load(path)?;
    let lib = config::material_library(&mut cfg.materials, base(path))?;
    let template = CavityTemplate::membrane_cavity(&lib, &cfg.cavity)?;
    let scan = ScanConfig {
        scan_step_nm: cfg.scan_step_nm,
        tolerance_nm: cfg.tolerance_nm,
    };
    let best = optimize_gap(
        &template,
        &cfg.targets,
        cfg.gap_bounds_nm,
        cfg.polarization,
        scan,
    )?;
    let mut table = Table::new(["gap_nm", "score", "wavelength_nm", "weight", "absorption"]);
    let mut per_target = Vec::new();
    for t in &cfg.targets {
        let a = template.absorption(t.wavelength_nm, best.gap_nm, cfg.polarization)?;
        table.push(vec![
            num(best.gap_nm),
            num(best.score),
            num(t.wavelength_nm),
            num(t.weight),
            num(a),
        ]);
        per_target
            .push(json!({ "wavelength_nm": t.wavelength_nm, "weight": t.weight, "absorption": a }));
    }
    Report::new(
        "optimize",
        &cfg,
        &json!({ "optimum": best, "targets": per_target }),
        table,
    )
}
