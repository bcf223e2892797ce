use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use snspd_core::dynamics::{
    dead_time_metrics, rate_dependent_efficiency_analytic, DEFAULT_FULL_RECOVERY_FRACTION,
};
use snspd_core::timetag::{
    autocorrelation_histogram, estimate_recovery, fit_gaussian_irf, gaussian_samples,
    monte_carlo_efficiency, simulate_trials, Histogram, SimulationSpec, SourceModel, TimeTagStream,
    DEFAULT_AUTOCORR_BIN_NS, DEFAULT_IRF_BIN_PS,
};
use snspd_core::{Error, Result};

use crate::config::{self, RecoverySpec};
use crate::output::{num, Report, Table};

fn base(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn default_fraction() -> f64 {
    DEFAULT_FULL_RECOVERY_FRACTION
}

fn default_curve_max_ns() -> f64 {
    200.0
}

fn default_curve_step_ns() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadTimeConfig {
    #[serde(default)]
    pub recovery: RecoverySpec,
    #[serde(default = "default_fraction")]
    pub full_recovery_fraction: f64,
    #[serde(default = "default_curve_max_ns")]
    pub curve_max_ns: f64,
    #[serde(default = "default_curve_step_ns")]
    pub curve_step_ns: f64,
}

pub fn deadtime(path: &Path) -> Result<Report> {
    let cfg: DeadTimeConfig = config::load(path)?;
    if !(cfg.curve_step_ns > 0.0 && cfg.curve_max_ns > 0.0) {
        return Err(Error::Validation(
            "curve_step_ns and curve_max_ns must be positive".into(),
        ));
    }
    let curve = cfg.recovery.curve()?;
    let m = dead_time_metrics(&curve, cfg.full_recovery_fraction)?;
    let mut table = Table::new(["metric", "ns"]);
    for (name, v) in [
        ("tau1_min_separation", m.tau1_min_separation_ns),
        ("tau2_one_over_e", m.tau2_one_over_e_ns),
        ("tau3_minus3db", m.tau3_minus3db_ns),
        ("tau4_full_recovery", m.tau4_full_recovery_ns),
    ] {
        table.push(vec![name.into(), num(v)]);
    }
    let steps = (cfg.curve_max_ns / cfg.curve_step_ns).floor() as usize;
    let mut samples = csv::Writer::from_writer(Vec::new());
    samples
        .write_record(["t_ns", "pulse_amplitude", "relative_efficiency"])
        .map_err(Error::from)?;
    for i in 0..=steps {
        let t = i as f64 * cfg.curve_step_ns;
        samples
            .write_record([
                num(t),
                num(curve.pulse.amplitude(t)),
                num(curve.relative_efficiency(t)),
            ])
            .map_err(Error::from)?;
    }
    let body = samples
        .into_inner()
        .map_err(|e| Error::Parse(e.to_string()))?;
    Report::new(
        "deadtime",
        &cfg,
        &json!({ "curve": curve, "metrics": m }),
        table,
    )?
    .file("recovery.csv", |buf| {
        buf.extend_from_slice(&body);
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub photons_per_trial: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroopConfig {
    #[serde(default)]
    pub recovery: RecoverySpec,
    pub eta_max: f64,
    pub fluxes_per_s: Vec<f64>,
    /// Adds a Monte Carlo estimate per flux; needs a seed.
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn droop(path: &Path, seed: Option<u64>) -> Result<Report> {
    let mut cfg: DroopConfig = config::load(path)?;
    let curve = cfg.recovery.curve()?;
    if cfg.monte_carlo.is_some() {
        cfg.seed = Some(config::require_seed(seed, cfg.seed)?);
    }
    let mut table = Table::new([
        "flux_per_s",
        "efficiency_analytic",
        "mc_mean",
        "mc_std_error",
    ]);
    let mut rows = Vec::new();
    for (i, &flux) in cfg.fluxes_per_s.iter().enumerate() {
        let analytic = rate_dependent_efficiency_analytic(&curve, flux, cfg.eta_max)?;
        let mc = match (&cfg.monte_carlo, cfg.seed) {
            (Some(spec), Some(seed)) => Some(monte_carlo_efficiency(
                &curve,
                flux,
                cfg.eta_max,
                spec.photons_per_trial,
                spec.trials,
                seed.wrapping_add(i as u64),
            )?),
            _ => None,
        };
        table.push(vec![
            num(flux),
            num(analytic),
            mc.map(|m| num(m.mean)).unwrap_or_default(),
            mc.map(|m| num(m.std_error)).unwrap_or_default(),
        ]);
        rows.push(
            json!({ "flux_per_s": flux, "efficiency_analytic": analytic, "monte_carlo": mc }),
        );
    }
    Report::new("droop", &cfg, &json!({ "points": rows }), table)
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub source: SourceModel,
    #[serde(default)]
    pub recovery: RecoverySpec,
    pub eta_max: f64,
    #[serde(default)]
    pub jitter_fwhm_ps: f64,
    #[serde(default)]
    pub dark_rate_per_s: f64,
    pub duration_ns: f64,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn tag_file_name(trial: u64, trials: u64) -> String {
    if trials == 1 {
        "tags.txt".into()
    } else {
        format!("tags_{trial:03}.txt")
    }
}

pub fn simulate(path: &Path, seed: Option<u64>) -> Result<Report> {
    let mut cfg: SimulateConfig = config::load(path)?;
    let seed = config::require_seed(seed, cfg.seed)?;
    cfg.seed = Some(seed);
    if cfg.trials == 0 {
        return Err(Error::Validation("trials must be at least 1".into()));
    }
    let spec = SimulationSpec {
        source: cfg.source,
        curve: cfg.recovery.curve()?,
        eta_max: cfg.eta_max,
        jitter_fwhm_ps: cfg.jitter_fwhm_ps,
        dark_rate_per_s: cfg.dark_rate_per_s,
        duration_ns: cfg.duration_ns,
    };
    let streams = simulate_trials(&spec, seed, cfg.trials)?;
    let mut table = Table::new([
        "trial",
        "file",
        "tags",
        "emitted_photons",
        "signal_detections",
        "dark_counts",
    ]);
    let mut rows = Vec::new();
    for s in &streams {
        let m = s.meta().expect("simulated streams carry metadata");
        let file = tag_file_name(m.trial, cfg.trials);
        table.push(vec![
            m.trial.to_string(),
            file.clone(),
            s.len().to_string(),
            m.emitted_photons.to_string(),
            m.signal_detections.to_string(),
            m.dark_counts.to_string(),
        ]);
        rows.push(json!({
            "trial": m.trial,
            "file": file,
            "tags": s.len(),
            "emitted_photons": m.emitted_photons,
            "signal_detections": m.signal_detections,
            "dark_counts": m.dark_counts,
        }));
    }
    let mut report = Report::new(
        "simulate",
        &cfg,
        &json!({ "seed": seed, "trials": rows }),
        table,
    )?;
    for s in &streams {
        let trial = s.meta().map_or(0, |m| m.trial);
        report = report.file(tag_file_name(trial, cfg.trials), |buf| s.write_to(buf))?;
    }
    Ok(report)
}

fn default_autocorr_bin() -> f64 {
    DEFAULT_AUTOCORR_BIN_NS
}

fn default_max_delay() -> f64 {
    300.0
}

fn default_smoothing() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutocorrConfig {
    /// Time-tag file, relative to the config.
    pub tags: PathBuf,
    #[serde(default = "default_autocorr_bin")]
    pub bin_width_ns: f64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ns: f64,
    /// When set, the relative recovery and its half crossing are estimated
    /// with delays beyond this value taken as fully recovered.
    #[serde(default)]
    pub plateau_start_ns: Option<f64>,
    #[serde(default = "default_smoothing")]
    pub smoothing_bins: usize,
}

pub fn autocorr(path: &Path) -> Result<Report> {
    let mut cfg: AutocorrConfig = config::load(path)?;
    cfg.tags = config::resolve_path(base(path), &cfg.tags)?;
    let stream =
        TimeTagStream::read_from(std::io::BufReader::new(std::fs::File::open(&cfg.tags)?))?;
    let hist = autocorrelation_histogram(&stream, cfg.bin_width_ns, cfg.max_delay_ns)?;
    let recovery = cfg
        .plateau_start_ns
        .map(|p| estimate_recovery(&hist, p, cfg.smoothing_bins))
        .transpose()?;

    let mut table = Table::new(["bin_lo", "bin_hi", "count", "relative_recovery"]);
    let edges = hist.edges();
    for (i, c) in hist.counts().iter().enumerate() {
        table.push(vec![
            num(edges[i]),
            num(edges[i + 1]),
            c.to_string(),
            recovery
                .as_ref()
                .map(|r| num(r.relative[i]))
                .unwrap_or_default(),
        ]);
    }
    let result = json!({
        "events": stream.len(),
        "binned_delays": hist.total(),
        "discarded_delays": hist.overflow(),
        "recovery": recovery.as_ref().map(|r| json!({
            "plateau_hazard_per_ns": r.plateau_hazard_per_unit,
            "half_crossing_ns": r.half_crossing,
        })),
    });
    Report::new("autocorr", &cfg, &result, table)?.file("histogram.csv", |buf| hist.write_csv(buf))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticIrf {
    #[serde(default)]
    pub center_ps: f64,
    pub fwhm_ps: f64,
    pub samples: usize,
}

fn default_irf_bin() -> f64 {
    DEFAULT_IRF_BIN_PS
}

/// Exactly one of `histogram`, `samples` or `synthetic` gives the IRF data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitIrfConfig {
    /// Histogram CSV (`bin_lo,bin_hi,count`) in ps.
    #[serde(default)]
    pub histogram: Option<PathBuf>,
    /// One delay in ps per line.
    #[serde(default)]
    pub samples: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticIrf>,
    #[serde(default = "default_irf_bin")]
    pub bin_width_ps: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(line.parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: `{line}` is not a number",
                path.display(),
                n + 1
            ))
        })?);
    }
    Ok(out)
}

pub fn fit_irf(path: &Path, seed: Option<u64>) -> Result<Report> {
    let mut cfg: FitIrfConfig = config::load(path)?;
    let hist = match (&mut cfg.histogram, &mut cfg.samples, &cfg.synthetic) {
        (Some(h), None, None) => {
            *h = config::resolve_path(base(path), h)?;
            Histogram::read_csv(std::fs::File::open(&*h)?)?
        }
        (None, Some(s), None) => {
            *s = config::resolve_path(base(path), s)?;
            Histogram::covering(&read_samples(s)?, cfg.bin_width_ps)?
        }
        (None, None, Some(syn)) => {
            let seed = config::require_seed(seed, cfg.seed)?;
            cfg.seed = Some(seed);
            Histogram::covering(
                &gaussian_samples(syn.center_ps, syn.fwhm_ps, syn.samples, seed)?,
                cfg.bin_width_ps,
            )?
        }
        _ => {
            return Err(Error::Validation(
                "give exactly one of `histogram`, `samples` or `synthetic`".into(),
            ))
        }
    };
    let fit = fit_gaussian_irf(&hist)?;
    let mut table = Table::new([
        "center_ps",
        "sigma_ps",
        "fwhm_ps",
        "amplitude",
        "center_std_error_ps",
        "sigma_std_error_ps",
        "fwhm_std_error_ps",
        "goodness",
        "iterations",
    ]);
    table.push(vec![
        num(fit.center),
        num(fit.sigma),
        num(fit.fwhm),
        num(fit.amplitude),
        num(fit.center_std_error),
        num(fit.sigma_std_error),
        num(fit.fwhm_std_error),
        num(fit.goodness),
        fit.iterations.to_string(),
    ]);
    table.notes.push(format!(
        "FWHM jitter: {:.3} ± {:.3} ps",
        fit.fwhm, fit.fwhm_std_error
    ));
    Report::new("fit-irf", &cfg, &json!({ "fit": fit }), table)?
        .file("histogram.csv", |buf| hist.write_csv(buf))
}
