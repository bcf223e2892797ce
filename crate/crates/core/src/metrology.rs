//! Efficiency-measurement arithmetic: attenuation calibration, photon flux,
//! system detection efficiency (SDE) and the uncertainty budget.
//!
//! The SDE follows `(1 - R_rfl) * (N_count - N_dark) / N_total`, where
//! `N_total = P λ / (h c)` is the photon flux delivered to the detector and
//! `R_rfl` corrects for the fiber end-face reflection present while the power
//! meter was read. An SDE above one is reported as-is and flagged.

use serde::{Deserialize, Serialize};

use crate::cavity::LASER_WINDOW_NM;
use crate::error::{Error, Result};

/// Planck constant, J s (exact SI).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;
/// Default accepted band for the calibrated monitor/signal ratio, dB.
pub const DEFAULT_RATIO_BAND_DB: (f64, f64) = (50.0, 60.0);

/// Energy of one photon at `wavelength_nm`, in J.
pub fn photon_energy_j(wavelength_nm: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationCalibration {
    /// Mean of `10 log10(P1/P2)` over the readings.
    pub ratio_db: f64,
    /// `(max - min) / mean` of the linear ratios.
    pub ratio_relative_spread: f64,
    pub readings: usize,
}

/// Calibrates the monitor-to-signal ratio from repeated `(P1, P2)` readings in W.
pub fn calibrate_attenuation(readings: &[(f64, f64)]) -> Result<AttenuationCalibration> {
    if readings.is_empty() {
        return Err(Error::validation(
            "attenuation calibration needs at least one reading",
        ));
    }
    if let Some((p1, p2)) = readings
        .iter()
        .find(|(p1, p2)| !(*p1 > 0.0 && *p2 > 0.0 && p1.is_finite() && p2.is_finite()))
    {
        return Err(Error::validation(format!(
            "calibration powers must be positive, got P1={p1} W, P2={p2} W"
        )));
    }
    let ratios: Vec<f64> = readings.iter().map(|(p1, p2)| p1 / p2).collect();
    let count = ratios.len() as f64;
    let ratio_db = ratios.iter().map(|r| 10.0 * r.log10()).sum::<f64>() / count;
    let mean = ratios.iter().sum::<f64>() / count;
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(AttenuationCalibration {
        ratio_db,
        ratio_relative_spread: (max - min) / mean,
        readings: readings.len(),
    })
}

/// Calibrated splitter ratio plus any fixed ND stages after the monitor tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationChain {
    pub splitter_ratio_db: f64,
    #[serde(default)]
    pub nd_stages_db: Vec<f64>,
    #[serde(default)]
    pub calibration_readings: Vec<(f64, f64)>,
}

impl AttenuationChain {
    /// Chain with a known ratio and no recorded calibration.
    pub fn fixed(ratio_db: f64) -> Result<Self> {
        if !ratio_db.is_finite() {
            return Err(Error::validation("attenuation ratio must be finite"));
        }
        Ok(Self {
            splitter_ratio_db: ratio_db,
            nd_stages_db: Vec::new(),
            calibration_readings: Vec::new(),
        })
    }

    /// Chain calibrated from readings; the ratio must fall inside `band_db`.
    pub fn from_calibration(
        readings: Vec<(f64, f64)>,
        nd_stages_db: Vec<f64>,
        band_db: (f64, f64),
    ) -> Result<Self> {
        let cal = calibrate_attenuation(&readings)?;
        if !(cal.ratio_db >= band_db.0 && cal.ratio_db <= band_db.1) {
            return Err(Error::validation(format!(
                "calibrated ratio {:.3} dB outside the accepted band [{}, {}] dB",
                cal.ratio_db, band_db.0, band_db.1
            )));
        }
        if let Some(nd) = nd_stages_db.iter().find(|d| !d.is_finite()) {
            return Err(Error::validation(format!("ND stage {nd} dB is not finite")));
        }
        Ok(Self {
            splitter_ratio_db: cal.ratio_db,
            nd_stages_db,
            calibration_readings: readings,
        })
    }

    pub fn total_attenuation_db(&self) -> f64 {
        self.splitter_ratio_db + self.nd_stages_db.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonFlux {
    pub power_at_detector_w: f64,
    pub wavelength_nm: f64,
    pub photons_per_s: f64,
}

impl PhotonFlux {
    /// Flux carried by `power_w` at `wavelength_nm`, without window checks.
    pub fn from_power(power_w: f64, wavelength_nm: f64) -> Result<Self> {
        if !(power_w >= 0.0 && power_w.is_finite()) {
            return Err(Error::validation(format!(
                "power must be non-negative, got {power_w} W"
            )));
        }
        if !(wavelength_nm > 0.0 && wavelength_nm.is_finite()) {
            return Err(Error::validation(format!(
                "wavelength must be positive, got {wavelength_nm}"
            )));
        }
        Ok(Self {
            power_at_detector_w: power_w,
            wavelength_nm,
            photons_per_s: power_w / photon_energy_j(wavelength_nm),
        })
    }
}

/// Photon flux at the detector for a monitor reading `p_monitor_w` (W).
pub fn photon_flux(
    p_monitor_w: f64,
    chain: &AttenuationChain,
    wavelength_nm: f64,
) -> Result<PhotonFlux> {
    if !(p_monitor_w > 0.0 && p_monitor_w.is_finite()) {
        return Err(Error::validation(format!(
            "monitor power must be positive, got {p_monitor_w} W"
        )));
    }
    let (lo, hi) = LASER_WINDOW_NM;
    if !(wavelength_nm >= lo && wavelength_nm <= hi) {
        return Err(Error::Range {
            material: "laser window".into(),
            wavelength_nm,
            min_nm: lo,
            max_nm: hi,
        });
    }
    let power = p_monitor_w / db_to_linear(chain.total_attenuation_db());
    PhotonFlux::from_power(power, wavelength_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeResult {
    pub counts_per_s: f64,
    pub dark_per_s: f64,
    pub flux: PhotonFlux,
    pub r_rfl: f64,
    pub sde: f64,
    /// Relative 1-sigma-equivalent uncertainty from the attached budget.
    pub uncertainty: f64,
}

impl SdeResult {
    pub fn is_over_unity(&self) -> bool {
        self.sde > 1.0
    }

    pub fn with_budget(mut self, budget: &UncertaintyBudget) -> Self {
        self.uncertainty = budget.total;
        self
    }
}

pub fn compute_sde(
    counts_per_s: f64,
    dark_per_s: f64,
    flux: &PhotonFlux,
    r_rfl: f64,
) -> Result<SdeResult> {
    if !(dark_per_s >= 0.0 && dark_per_s.is_finite() && counts_per_s.is_finite()) {
        return Err(Error::validation(format!(
            "dark count rate must be non-negative, got {dark_per_s}"
        )));
    }
    if counts_per_s < dark_per_s {
        return Err(Error::validation(format!(
            "count rate {counts_per_s}/s is below the dark count rate {dark_per_s}/s"
        )));
    }
    if !(flux.photons_per_s > 0.0) {
        return Err(Error::validation("photon flux must be positive"));
    }
    if !(0.0..1.0).contains(&r_rfl) {
        return Err(Error::validation(format!(
            "R_rfl must lie in [0, 1), got {r_rfl}"
        )));
    }
    let sde = (1.0 - r_rfl) * ((counts_per_s - dark_per_s) / flux.photons_per_s);
    if sde > 1.0 {
        log::warn!(
            "SDE {sde:.4} exceeds unity at {} nm; check attenuation and power-meter calibration",
            flux.wavelength_nm
        );
    }
    Ok(SdeResult {
        counts_per_s,
        dark_per_s,
        flux: *flux,
        r_rfl,
        sde,
        uncertainty: 0.0,
    })
}

/// Count rate that [`compute_sde`] maps to `sde`.
pub fn counts_for_sde(sde: f64, dark_per_s: f64, flux: &PhotonFlux, r_rfl: f64) -> f64 {
    sde * flux.photons_per_s / (1.0 - r_rfl) + dark_per_s
}

/// Normal-incidence Fresnel reflectance of the fiber end face.
pub fn fresnel_end_face_reflection(n_core: f64, n_outside: f64) -> Result<f64> {
    if !(n_core > 0.0 && n_outside > 0.0) {
        return Err(Error::validation(format!(
            "refractive indices must be positive, got {n_core} and {n_outside}"
        )));
    }
    Ok(((n_core - n_outside) / (n_core + n_outside)).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyComponent {
    pub label: String,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub components: Vec<UncertaintyComponent>,
    pub total: f64,
}

/// Root-sum-square of uncorrelated relative uncertainties.
pub fn combine_uncertainty<S: Into<String>>(
    components: impl IntoIterator<Item = (S, f64)>,
) -> Result<UncertaintyBudget> {
    let components = components
        .into_iter()
        .map(|(label, relative)| UncertaintyComponent {
            label: label.into(),
            relative,
        })
        .collect::<Vec<_>>();
    if let Some(c) = components
        .iter()
        .find(|c| !(c.relative >= 0.0 && c.relative.is_finite()))
    {
        return Err(Error::validation(format!(
            "uncertainty component `{}` must be non-negative, got {}",
            c.label, c.relative
        )));
    }
    let total = components
        .iter()
        .map(|c| c.relative * c.relative)
        .sum::<f64>()
        .sqrt();
    Ok(UncertaintyBudget { components, total })
}

/// Budget of the reference efficiency setup: power-meter accuracy and
/// linearity, laser stability and attenuator repeatability.
pub fn reference_sde_budget() -> UncertaintyBudget {
    combine_uncertainty([
        ("power meter accuracy", 0.02),
        ("power meter linearity", 0.005),
        ("laser stability", 0.001),
        ("optical attenuator", 0.002),
    ])
    .expect("reference components are non-negative")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMeter {
    pub name: String,
    /// Relative calibration accuracy.
    pub accuracy: f64,
    /// Relative linearity uncertainty.
    pub linearity: f64,
}

impl PowerMeter {
    pub fn relative_uncertainty(&self) -> f64 {
        self.accuracy.hypot(self.linearity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedReading {
    pub meter: String,
    /// Reading divided by the reference meter's reading.
    pub ratio: f64,
    /// Absolute error bar on `ratio` from the meter's own uncertainty.
    pub error_bar: f64,
}

/// Normalizes simultaneous readings of the same beam to the meter named `reference`.
pub fn normalize_to_reference(
    readings: &[(PowerMeter, f64)],
    reference: &str,
) -> Result<Vec<NormalizedReading>> {
    let reference_power = readings
        .iter()
        .find(|(m, _)| m.name == reference)
        .map(|(_, p)| *p)
        .ok_or_else(|| {
            Error::validation(format!("reference meter `{reference}` has no reading"))
        })?;
    if !(reference_power > 0.0) {
        return Err(Error::validation("reference reading must be positive"));
    }
    Ok(readings
        .iter()
        .map(|(m, p)| {
            let ratio = p / reference_power;
            NormalizedReading {
                meter: m.name.clone(),
                ratio,
                error_bar: ratio * m.relative_uncertainty(),
            }
        })
        .collect())
}

/// How the end-face reflection correction is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReflectionCorrection {
    Value(f64),
    Fresnel { n_core: f64, n_outside: f64 },
}

impl ReflectionCorrection {
    pub fn resolve(&self) -> Result<f64> {
        match *self {
            ReflectionCorrection::Value(r) => {
                if !(0.0..1.0).contains(&r) {
                    return Err(Error::validation(format!(
                        "R_rfl must lie in [0, 1), got {r}"
                    )));
                }
                Ok(r)
            }
            ReflectionCorrection::Fresnel { n_core, n_outside } => {
                fresnel_end_face_reflection(n_core, n_outside)
            }
        }
    }
}

/// One line of a measurement log. Records with `p2_w` feed the attenuation
/// calibration; records with `counts_per_s` are efficiency measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    pub timestamp: String,
    pub p1_w: f64,
    #[serde(default)]
    pub p2_w: Option<f64>,
    pub wavelength_nm: f64,
    #[serde(default)]
    pub counts_per_s: Option<f64>,
    #[serde(default)]
    pub dark_per_s: Option<f64>,
}

fn default_band() -> (f64, f64) {
    DEFAULT_RATIO_BAND_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSession {
    pub r_rfl: ReflectionCorrection,
    #[serde(default)]
    pub nd_stages_db: Vec<f64>,
    #[serde(default = "default_band")]
    pub ratio_band_db: (f64, f64),
    /// Relative uncertainty components, `(label, fraction)`.
    #[serde(default)]
    pub uncertainty: Vec<(String, f64)>,
    pub records: Vec<MeasurementRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPoint {
    pub timestamp: String,
    pub result: SdeResult,
    pub over_unity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub calibration: AttenuationCalibration,
    pub total_attenuation_db: f64,
    pub r_rfl: f64,
    pub budget: UncertaintyBudget,
    pub points: Vec<SessionPoint>,
}

/// Calibrates the chain from the session's `(P1, P2)` records and evaluates
/// the SDE of every count record.
pub fn analyze_session(session: &MeasurementSession) -> Result<SessionReport> {
    let readings: Vec<(f64, f64)> = session
        .records
        .iter()
        .filter_map(|r| r.p2_w.map(|p2| (r.p1_w, p2)))
        .collect();
    let chain = AttenuationChain::from_calibration(
        readings.clone(),
        session.nd_stages_db.clone(),
        session.ratio_band_db,
    )?;
    let calibration = calibrate_attenuation(&readings)?;
    let r_rfl = session.r_rfl.resolve()?;
    let budget = combine_uncertainty(session.uncertainty.iter().map(|(l, v)| (l.clone(), *v)))?;
    let points = session
        .records
        .iter()
        .filter_map(|r| r.counts_per_s.map(|c| (r, c)))
        .map(|(r, counts)| {
            let flux = photon_flux(r.p1_w, &chain, r.wavelength_nm)?;
            let result = compute_sde(counts, r.dark_per_s.unwrap_or(0.0), &flux, r_rfl)?
                .with_budget(&budget);
            Ok(SessionPoint {
                timestamp: r.timestamp.clone(),
                over_unity: result.is_over_unity(),
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if points.is_empty() {
        return Err(Error::InsufficientData(
            "session has no count-rate records".into(),
        ));
    }
    Ok(SessionReport {
        calibration,
        total_attenuation_db: chain.total_attenuation_db(),
        r_rfl,
        budget,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn calibration_single_and_repeated() {
        let one = calibrate_attenuation(&[(1e-3, 1e-8)]).unwrap();
        assert_relative_eq!(one.ratio_db, 50.0, epsilon = 1e-12);
        assert_eq!(one.ratio_relative_spread, 0.0);
        let two = calibrate_attenuation(&[(1e-3, 1e-8), (1e-3, 1e-8)]).unwrap();
        assert_relative_eq!(two.ratio_db, 50.0, epsilon = 1e-12);
        assert_eq!(two.ratio_relative_spread, 0.0);
    }

    #[test]
    fn calibration_spread_by_hand() {
        let cal = calibrate_attenuation(&[(1.0e-3, 1.0e-8), (1.0e-3, 1.05e-8)]).unwrap();
        // Ratios 1e5 and 1e5/1.05 = 95238.095...; 10 log10 of the latter is
        // 50 - 0.2118929907 dB.
        let second_db = 50.0 - 10.0 * 1.05f64.log10();
        assert_relative_eq!(second_db, 49.788_107_009_300_6, epsilon = 1e-10);
        assert_relative_eq!(cal.ratio_db, (50.0 + second_db) / 2.0, epsilon = 1e-12);
        let (a, b) = (1e5, 1e5 / 1.05);
        assert_relative_eq!(
            cal.ratio_relative_spread,
            (a - b) / ((a + b) / 2.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            cal.ratio_relative_spread,
            0.048_780_487_804_878,
            epsilon = 1e-12
        );
    }

    #[test]
    fn calibration_rejects_bad_input() {
        assert!(calibrate_attenuation(&[]).is_err());
        assert!(calibrate_attenuation(&[(1e-3, 0.0)]).is_err());
        assert!(calibrate_attenuation(&[(-1e-3, 1e-8)]).is_err());
    }

    #[test]
    fn chain_band_enforced() {
        assert!(
            AttenuationChain::from_calibration(vec![(1e-3, 1e-8)], vec![], (50.0, 60.0)).is_ok()
        );
        assert!(
            AttenuationChain::from_calibration(vec![(1e-3, 1e-6)], vec![], (50.0, 60.0)).is_err()
        );
    }

    #[test]
    fn flux_reference_points() {
        let chain = AttenuationChain::fixed(50.0).unwrap();
        let f10 = photon_flux(10e-9, &chain, 1350.0).unwrap();
        assert!(
            (f10.photons_per_s / 6.79e5 - 1.0).abs() < 0.005,
            "{}",
            f10.photons_per_s
        );
        let f4 = photon_flux(4e-9, &chain, 1350.0).unwrap();
        assert!(
            (f4.photons_per_s / 2.716e5 - 1.0).abs() < 0.005,
            "{}",
            f4.photons_per_s
        );
    }

    #[test]
    fn single_photon_energy() {
        let e = PLANCK * SPEED_OF_LIGHT / 1350e-9;
        assert_relative_eq!(e, 1.4714e-19, max_relative = 1e-4);
        let f = photon_flux(e, &AttenuationChain::fixed(0.0).unwrap(), 1350.0).unwrap();
        assert_relative_eq!(f.photons_per_s, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn flux_outside_laser_window() {
        let chain = AttenuationChain::fixed(50.0).unwrap();
        assert!(photon_flux(1e-9, &chain, 1550.0).is_ok());
        assert!(matches!(
            photon_flux(1e-9, &chain, 1200.0),
            Err(Error::Range { .. })
        ));
        assert!(photon_flux(0.0, &chain, 1350.0).is_err());
    }

    #[test]
    fn nd_stages_add_up() {
        let chain =
            AttenuationChain::from_calibration(vec![(1e-3, 1e-8)], vec![3.0, 7.0], (50.0, 60.0))
                .unwrap();
        assert_relative_eq!(chain.total_attenuation_db(), 60.0, epsilon = 1e-12);
    }

    #[test]
    fn sde_examples() {
        let flux = PhotonFlux::from_power(1e-13, 1350.0).unwrap();
        let unity = compute_sde(flux.photons_per_s, 0.0, &flux, 0.0).unwrap();
        assert_relative_eq!(unity.sde, 1.0, epsilon = 1e-15);
        let zero = compute_sde(0.0, 0.0, &flux, 0.0).unwrap();
        assert_eq!(zero.sde, 0.0);

        let flux = PhotonFlux {
            power_at_detector_w: 0.0,
            wavelength_nm: 1350.0,
            photons_per_s: 679_000.0,
        };
        let counts = 679_000.0 * 0.995 / (1.0 - 0.033);
        let r = compute_sde(counts, 0.0, &flux, 0.033).unwrap();
        assert!((r.sde - 0.995).abs() < 1e-9);
    }

    #[test]
    fn sde_over_unity_is_flagged_not_clamped() {
        let flux = PhotonFlux::from_power(1e-13, 1350.0).unwrap();
        let r = compute_sde(1.2 * flux.photons_per_s, 0.0, &flux, 0.0).unwrap();
        assert!(r.is_over_unity());
        assert!((r.sde - 1.2).abs() < 1e-12);
    }

    #[test]
    fn sde_rejects_bad_input() {
        let flux = PhotonFlux::from_power(1e-13, 1350.0).unwrap();
        assert!(compute_sde(10.0, 20.0, &flux, 0.0).is_err());
        assert!(compute_sde(10.0, 0.0, &flux, 1.0).is_err());
        assert!(compute_sde(10.0, 0.0, &flux, -0.1).is_err());
        let dark = PhotonFlux::from_power(0.0, 1350.0).unwrap();
        assert!(compute_sde(10.0, 0.0, &dark, 0.0).is_err());
    }

    #[test]
    fn fresnel_examples() {
        assert_eq!(fresnel_end_face_reflection(1.45, 1.45).unwrap(), 0.0);
        let r = fresnel_end_face_reflection(1.45, 1.0).unwrap();
        assert_relative_eq!(r, (0.45f64 / 2.45).powi(2), epsilon = 1e-15);
        assert!((r - 0.0337).abs() < 1e-4);
        assert_relative_eq!(
            fresnel_end_face_reflection(1.0, 3.0).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(fresnel_end_face_reflection(0.0, 1.0).is_err());
    }

    #[test]
    fn uncertainty_examples() {
        let b = reference_sde_budget();
        assert!((b.total * 100.0 - 2.07).abs() <= 0.005, "{}", b.total);
        assert_relative_eq!(
            b.total,
            (0.02f64.powi(2) + 0.005f64.powi(2) + 0.001f64.powi(2) + 0.002f64.powi(2)).sqrt()
        );
        let pyth = combine_uncertainty([("a", 0.03), ("b", 0.04)]).unwrap();
        assert_relative_eq!(pyth.total, 0.05, epsilon = 1e-15);
        assert_eq!(combine_uncertainty([("x", 0.013)]).unwrap().total, 0.013);
        assert!(combine_uncertainty([("neg", -0.01)]).is_err());
    }

    #[test]
    fn meters_normalized_to_reference() {
        let newport = PowerMeter {
            name: "818-IG-L".into(),
            accuracy: 0.02,
            linearity: 0.005,
        };
        let thorlabs = PowerMeter {
            name: "S154C".into(),
            accuracy: 0.05,
            linearity: 0.005,
        };
        let out =
            normalize_to_reference(&[(thorlabs, 1.03e-6), (newport, 1.0e-6)], "818-IG-L").unwrap();
        assert_relative_eq!(out[0].ratio, 1.03, epsilon = 1e-12);
        assert_relative_eq!(out[1].ratio, 1.0);
        assert_relative_eq!(out[1].error_bar, 0.02f64.hypot(0.005));
        assert!(normalize_to_reference(
            &out.iter()
                .map(|_| (
                    PowerMeter {
                        name: "x".into(),
                        accuracy: 0.0,
                        linearity: 0.0
                    },
                    1.0
                ))
                .collect::<Vec<_>>(),
            "y"
        )
        .is_err());
    }

    #[test]
    fn session_analysis() {
        let rec = |p1: f64, p2: Option<f64>, counts: Option<f64>| MeasurementRecord {
            timestamp: "t".into(),
            p1_w: p1,
            p2_w: p2,
            wavelength_nm: 1350.0,
            counts_per_s: counts,
            dark_per_s: Some(100.0),
        };
        let flux = photon_flux(10e-9, &AttenuationChain::fixed(50.0).unwrap(), 1350.0).unwrap();
        let counts = counts_for_sde(0.95, 100.0, &flux, 0.03);
        let session = MeasurementSession {
            r_rfl: ReflectionCorrection::Value(0.03),
            nd_stages_db: vec![],
            ratio_band_db: DEFAULT_RATIO_BAND_DB,
            uncertainty: vec![("meter".into(), 0.02)],
            records: vec![rec(1e-3, Some(1e-8), None), rec(10e-9, None, Some(counts))],
        };
        let report = analyze_session(&session).unwrap();
        assert_eq!(report.points.len(), 1);
        assert_relative_eq!(report.points[0].result.sde, 0.95, epsilon = 1e-12);
        assert_eq!(report.points[0].result.uncertainty, 0.02);

        let mut empty = session.clone();
        empty.records.truncate(1);
        assert!(matches!(
            analyze_session(&empty),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn reflection_correction_variants() {
        assert_eq!(ReflectionCorrection::Value(0.02).resolve().unwrap(), 0.02);
        assert!(ReflectionCorrection::Value(1.0).resolve().is_err());
        let r = ReflectionCorrection::Fresnel {
            n_core: 1.45,
            n_outside: 1.0,
        }
        .resolve()
        .unwrap();
        assert!((r - 0.0337).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn flux_is_linear_in_power(p in 1e-12f64..1e-3, lambda in 1260.0f64..1650.0, db in 0.0f64..70.0) {
            let chain = AttenuationChain::fixed(db).unwrap();
            let a = photon_flux(p, &chain, lambda).unwrap().photons_per_s;
            let b = photon_flux(2.0 * p, &chain, lambda).unwrap().photons_per_s;
            prop_assert_eq!(b, 2.0 * a);
        }

        #[test]
        fn sde_without_corrections_is_count_ratio(counts in 0.0f64..1e7, flux in 1.0f64..1e8) {
            let f = PhotonFlux { power_at_detector_w: 0.0, wavelength_nm: 1350.0, photons_per_s: flux };
            prop_assert_eq!(compute_sde(counts, 0.0, &f, 0.0).unwrap().sde, counts / flux);
        }

        #[test]
        fn sde_round_trip(counts in 1e3f64..1e7, dark in 0.0f64..1e3, flux in 1e4f64..1e8, r in 0.0f64..0.2) {
            let f = PhotonFlux { power_at_detector_w: 0.0, wavelength_nm: 1350.0, photons_per_s: flux };
            let sde = compute_sde(counts, dark, &f, r).unwrap().sde;
            let back = counts_for_sde(sde, dark, &f, r);
            prop_assert!((back - counts).abs() <= 1e-12 * counts);
        }

        #[test]
        fn budget_is_permutation_invariant_and_monotone(mut cs in proptest::collection::vec(0.0f64..0.1, 1..8), extra in 0.0f64..0.1) {
            let a = combine_uncertainty(cs.iter().map(|&c| ("c", c))).unwrap().total;
            cs.reverse();
            let b = combine_uncertainty(cs.iter().map(|&c| ("c", c))).unwrap().total;
            prop_assert!((a - b).abs() <= 1e-15);
            cs.push(extra);
            let c = combine_uncertainty(cs.iter().map(|&c| ("c", c))).unwrap().total;
            prop_assert!(c >= b);
        }
    }
}
