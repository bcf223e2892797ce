//! Air-gap sweeps, peak analysis and gap optimization for a cavity template.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{MaterialLibrary, Polarization};
use crate::tmm::{detector_absorption, LayerKind, LayerStack, MembraneCavity};

/// Tunable-laser window, nm.
pub const LASER_WINDOW_NM: (f64, f64) = (1260.0, 1650.0);
/// Air-gap range covered by the default sweep, nm.
pub const GAP_RANGE_NM: (f64, f64) = (0.0, 10_000.0);
/// Default peak prominence threshold (absolute absorption).
pub const DEFAULT_PROMINENCE: f64 = 0.02;

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// A stack whose air-gap layer thickness is the free parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityTemplate {
    stack: LayerStack,
    gap_layer: usize,
}

impl CavityTemplate {
    pub fn new(stack: LayerStack, gap_layer: usize) -> Result<Self> {
        match stack.layers().get(gap_layer) {
            Some(l) if matches!(l.kind, LayerKind::Homogeneous(_)) => {}
            Some(_) => return Err(Error::validation("the gap layer must be homogeneous")),
            None => {
                return Err(Error::validation(format!(
                    "gap layer {gap_layer} out of range for {} layers",
                    stack.layers().len()
                )))
            }
        }
        if stack.meander_index().is_none() {
            return Err(Error::validation("cavity template needs a meander layer"));
        }
        Ok(Self { stack, gap_layer })
    }

    pub fn membrane_cavity(lib: &MaterialLibrary, cavity: &MembraneCavity) -> Result<Self> {
        Self::new(cavity.build(lib, 0.0)?, MembraneCavity::GAP_LAYER)
    }

    pub fn gap_layer(&self) -> usize {
        self.gap_layer
    }

    pub fn at_gap(&self, gap_nm: f64) -> Result<LayerStack> {
        self.stack.with_thickness(self.gap_layer, gap_nm)
    }

    pub fn absorption(&self, wavelength_nm: f64, gap_nm: f64, pol: Polarization) -> Result<f64> {
        detector_absorption(&self.at_gap(gap_nm)?, wavelength_nm, pol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    wavelengths_nm: Vec<f64>,
    airgaps_nm: Vec<f64>,
    polarization: Polarization,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

impl SweepGrid {
    pub fn new(
        wavelengths_nm: Vec<f64>,
        airgaps_nm: Vec<f64>,
        polarization: Polarization,
    ) -> Result<Self> {
        if wavelengths_nm.is_empty() || airgaps_nm.is_empty() {
            return Err(Error::validation("sweep grid axes must be non-empty"));
        }
        if !strictly_increasing(&wavelengths_nm) || !strictly_increasing(&airgaps_nm) {
            return Err(Error::validation(
                "sweep grid axes must be strictly increasing",
            ));
        }
        if airgaps_nm[0] < 0.0 {
            return Err(Error::validation("air gaps must be non-negative"));
        }
        Ok(Self {
            wavelengths_nm,
            airgaps_nm,
            polarization,
        })
    }

    /// Laser window by 0-10 um of gap, evenly sampled.
    pub fn default_window(
        gaps: usize,
        wavelengths: usize,
        polarization: Polarization,
    ) -> Result<Self> {
        Self::new(
            linspace(LASER_WINDOW_NM.0, LASER_WINDOW_NM.1, wavelengths),
            linspace(GAP_RANGE_NM.0, GAP_RANGE_NM.1, gaps),
            polarization,
        )
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn airgaps_nm(&self) -> &[f64] {
        &self.airgaps_nm
    }

    pub fn polarization(&self) -> Polarization {
        self.polarization
    }
}

/// Meander absorption over a [`SweepGrid`], one row per air gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionMap {
    pub grid: SweepGrid,
    pub values: Vec<Vec<f64>>,
}

impl AbsorptionMap {
    pub fn row(&self, gap_index: usize) -> &[f64] {
        &self.values[gap_index]
    }

    /// Peaks of the spectrum at one gap.
    pub fn peaks_at(&self, gap_index: usize, prominence: f64) -> Result<PeakSet> {
        find_peaks(self.grid.wavelengths_nm(), self.row(gap_index), prominence)
    }

    /// Row-major `gap_nm,wavelength_nm,absorption` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gap_nm", "wavelength_nm", "absorption"])?;
        for (gap, row) in self.grid.airgaps_nm.iter().zip(&self.values) {
            for (lambda, a) in self.grid.wavelengths_nm.iter().zip(row) {
                w.serialize((gap, lambda, a))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the meander absorption over the whole grid. Rows run in parallel
/// and are assembled by index, so the result is deterministic.
pub fn sweep(template: &CavityTemplate, grid: &SweepGrid) -> Result<AbsorptionMap> {
    let values = grid
        .airgaps_nm
        .par_iter()
        .map(|&gap| {
            let stack = template.at_gap(gap)?;
            grid.wavelengths_nm
                .iter()
                .map(|&lambda| {
                    detector_absorption(&stack, lambda, grid.polarization).map_err(|e| {
                        Error::AtGridPoint {
                            gap_nm: gap,
                            wavelength_nm: lambda,
                            source: Box::new(e),
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AbsorptionMap {
        grid: grid.clone(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub wavelength_nm: f64,
    pub absorption: f64,
    pub prominence: f64,
}

/// Peaks sorted by wavelength.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet(pub Vec<Peak>);

impl PeakSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Peak> {
        self.0.iter()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["wavelength_nm", "absorption", "prominence"])?;
        for p in &self.0 {
            w.serialize((p.wavelength_nm, p.absorption, p.prominence))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Local maxima of `values` whose topographic prominence reaches `threshold`.
///
/// A flat top counts once, reported at its shortest wavelength. Maxima at the
/// curve ends are not peaks.
pub fn find_peaks(wavelengths_nm: &[f64], values: &[f64], threshold: f64) -> Result<PeakSet> {
    if wavelengths_nm.len() != values.len() {
        return Err(Error::validation(format!(
            "curve has {} wavelengths but {} values",
            wavelengths_nm.len(),
            values.len()
        )));
    }
    let n = values.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return Ok(PeakSet(peaks));
    }
    let mut i = 1;
    while i < n - 1 {
        if values[i] <= values[i - 1] {
            i += 1;
            continue;
        }
        let top = values[i];
        let mut plateau_end = i;
        while plateau_end + 1 < n && values[plateau_end + 1] == top {
            plateau_end += 1;
        }
        if plateau_end + 1 < n && values[plateau_end + 1] < top {
            let left_min = values[..i]
                .iter()
                .rev()
                .take_while(|&&v| v <= top)
                .fold(top, |m, &v| m.min(v));
            let right_min = values[plateau_end + 1..]
                .iter()
                .take_while(|&&v| v <= top)
                .fold(top, |m, &v| m.min(v));
            let prominence = top - left_min.max(right_min);
            if prominence > 0.0 && prominence >= threshold {
                peaks.push(Peak {
                    wavelength_nm: wavelengths_nm[i],
                    absorption: top,
                    prominence,
                });
            }
        }
        i = plateau_end + 1;
    }
    Ok(PeakSet(peaks))
}

/// Settings of the scan-then-golden-section maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Largest spacing of the coarse scan.
    pub scan_step_nm: f64,
    /// Final bracket width of the golden-section refinement.
    pub tolerance_nm: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            scan_step_nm: 5.0,
            tolerance_nm: 0.1,
        }
    }
}

/// Global maximum of `f` on `[lo, hi]`: dense scan, then golden-section search
/// on the bracket around the best scan point. The result never scores below
/// the best scanned point.
pub fn maximize_scan_golden<F>(mut f: F, lo: f64, hi: f64, config: ScanConfig) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::validation(format!("invalid bounds [{lo}, {hi}]")));
    }
    if !(config.scan_step_nm > 0.0 && config.tolerance_nm > 0.0) {
        return Err(Error::validation(
            "scan step and tolerance must be positive",
        ));
    }
    if lo == hi {
        return Ok((lo, f(lo)?));
    }
    let intervals = ((hi - lo) / config.scan_step_nm).ceil().max(1.0) as usize;
    let xs = linspace(lo, hi, intervals + 1);
    let mut best = (xs[0], f64::NEG_INFINITY);
    let mut best_idx = 0;
    for (i, &x) in xs.iter().enumerate() {
        let y = f(x)?;
        if y > best.1 {
            best = (x, y);
            best_idx = i;
        }
    }
    let mut a = xs[best_idx.saturating_sub(1)];
    let mut b = xs[(best_idx + 1).min(xs.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > config.tolerance_nm {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let (x, y) = if fc >= fd { (c, fc) } else { (d, fd) };
    if y > best.1 {
        best = (x, y);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub wavelength_nm: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptimum {
    pub gap_nm: f64,
    pub score: f64,
}

/// Air gap in `bounds` maximizing `Σ weight · absorption(λ, gap)`.
pub fn optimize_gap(
    template: &CavityTemplate,
    targets: &[Target],
    bounds_nm: (f64, f64),
    pol: Polarization,
    config: ScanConfig,
) -> Result<GapOptimum> {
    if targets.is_empty() {
        return Err(Error::validation("optimize_gap needs at least one target"));
    }
    if let Some(t) = targets
        .iter()
        .find(|t| !(t.weight > 0.0 && t.weight.is_finite()))
    {
        return Err(Error::validation(format!(
            "target weights must be positive, got {} at {} nm",
            t.weight, t.wavelength_nm
        )));
    }
    if bounds_nm.0 < 0.0 {
        return Err(Error::validation("gap bounds must be non-negative"));
    }
    let score = |gap: f64| -> Result<f64> {
        let stack = template.at_gap(gap)?;
        targets.iter().try_fold(0.0, |acc, t| {
            Ok(acc + t.weight * detector_absorption(&stack, t.wavelength_nm, pol)?)
        })
    };
    let (gap_nm, score) = maximize_scan_golden(score, bounds_nm.0, bounds_nm.1, config)?;
    Ok(GapOptimum { gap_nm, score })
}

/// `A_TE / A_TM` of the meander at one wavelength and gap.
pub fn polarization_contrast(
    template: &CavityTemplate,
    wavelength_nm: f64,
    gap_nm: f64,
) -> Result<f64> {
    let stack = template.at_gap(gap_nm)?;
    let te = detector_absorption(&stack, wavelength_nm, Polarization::TE)?;
    let tm = detector_absorption(&stack, wavelength_nm, Polarization::TM)?;
    if tm <= 0.0 {
        return Err(Error::Numeric {
            layer: stack.meander_index().unwrap_or(0),
            reason: "TM absorption is zero; contrast undefined".into(),
        });
    }
    Ok(te / tm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{DispersionTable, MeanderGeometry};
    use crate::tmm::{Layer, MembraneCavity};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn template() -> CavityTemplate {
        let lib = MaterialLibrary::illustrative();
        let geom = MeanderGeometry::new(50.0, 120.0, 9.0, 8.0).unwrap();
        CavityTemplate::membrane_cavity(&lib, &MembraneCavity::new(geom)).unwrap()
    }

    #[test]
    fn one_by_one_grid_matches_direct_call() {
        let t = template();
        let grid = SweepGrid::new(vec![1350.0], vec![2200.0], Polarization::TE).unwrap();
        let map = sweep(&t, &grid).unwrap();
        let direct = t.absorption(1350.0, 2200.0, Polarization::TE).unwrap();
        assert_eq!(map.values, vec![vec![direct]]);
    }

    #[test]
    fn half_wave_rows_agree() {
        let t = template();
        let lambda = 1425.0;
        let grid = SweepGrid::new(
            vec![lambda],
            vec![3000.0, 3000.0 + lambda / 2.0],
            Polarization::TE,
        )
        .unwrap();
        let map = sweep(&t, &grid).unwrap();
        assert!((map.values[0][0] - map.values[1][0]).abs() <= 1e-6 * map.values[0][0]);
    }

    #[test]
    fn sweep_is_bit_reproducible() {
        let t = template();
        let grid = SweepGrid::default_window(7, 11, Polarization::TM).unwrap();
        assert_eq!(sweep(&t, &grid).unwrap(), sweep(&t, &grid).unwrap());
    }

    #[test]
    fn sweep_reports_grid_coordinates_on_range_error() {
        let t = template();
        let grid = SweepGrid::new(vec![1350.0, 2500.0], vec![100.0], Polarization::TE).unwrap();
        match sweep(&t, &grid).unwrap_err() {
            Error::AtGridPoint {
                gap_nm,
                wavelength_nm,
                source,
            } => {
                assert_eq!((gap_nm, wavelength_nm), (100.0, 2500.0));
                assert!(matches!(*source, Error::Range { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        assert!(SweepGrid::new(vec![], vec![1.0], Polarization::TE).is_err());
        assert!(SweepGrid::new(vec![2.0, 1.0], vec![1.0], Polarization::TE).is_err());
        assert!(SweepGrid::new(vec![1.0], vec![-1.0], Polarization::TE).is_err());
    }

    #[test]
    fn map_csv_is_row_major() {
        let t = template();
        let grid =
            SweepGrid::new(vec![1300.0, 1400.0], vec![0.0, 500.0], Polarization::TE).unwrap();
        let mut buf = Vec::new();
        sweep(&t, &grid).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "gap_nm,wavelength_nm,absorption");
        assert!(lines[1].starts_with("0.0,1300.0,"));
        assert!(lines[2].starts_with("0.0,1400.0,"));
        assert!(lines[3].starts_with("500.0,1300.0,"));
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn template_validation() {
        let lib = MaterialLibrary::illustrative();
        let geom = MeanderGeometry::new(50.0, 120.0, 9.0, 8.0).unwrap();
        let stack = MembraneCavity::new(geom).build(&lib, 0.0).unwrap();
        assert!(CavityTemplate::new(stack.clone(), 1).is_err());
        assert!(CavityTemplate::new(stack.clone(), 9).is_err());
        let bare = LayerStack::new(
            lib.get("SiO2").unwrap(),
            vec![Layer::homogeneous(lib.get("air").unwrap(), 10.0)],
            lib.get("air").unwrap(),
        )
        .unwrap();
        assert!(CavityTemplate::new(bare, 0).is_err());
    }

    #[test]
    fn monotone_and_flat_curves_have_no_peaks() {
        let x = linspace(0.0, 1.0, 50);
        let rising: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!(find_peaks(&x, &rising, 0.0).unwrap().is_empty());
        let flat = vec![0.7; 50];
        assert!(find_peaks(&x, &flat, 0.0).unwrap().is_empty());
    }

    #[test]
    fn double_gaussian_peaks() {
        let x = linspace(1260.0, 1650.0, 391);
        let g = |x: f64, c: f64| (-(x - c).powi(2) / (2.0 * 30.0f64.powi(2))).exp();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 0.5 + 0.45 * g(v, 1280.0) + 0.4 * g(v, 1500.0))
            .collect();
        let peaks = find_peaks(&x, &y, DEFAULT_PROMINENCE).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!((peaks.0[0].wavelength_nm - 1280.0).abs() <= 1.0);
        assert!((peaks.0[1].wavelength_nm - 1500.0).abs() <= 1.0);
    }

    #[test]
    fn plateau_reports_shortest_wavelength() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![0.0, 1.0, 1.0, 1.0, 0.0];
        let peaks = find_peaks(&x, &y, 0.5).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks.0[0].wavelength_nm, 2.0);
        assert_eq!(peaks.0[0].prominence, 1.0);
    }

    #[test]
    fn prominence_uses_higher_saddle() {
        let x = linspace(0.0, 6.0, 7);
        let y = vec![0.0, 0.5, 0.3, 1.0, 0.1, 0.2, 0.0];
        let peaks = find_peaks(&x, &y, 0.0).unwrap();
        let p: Vec<_> = peaks
            .iter()
            .map(|p| (p.wavelength_nm, p.prominence))
            .collect();
        assert_eq!(p.len(), 3);
        assert!((p[0].1 - 0.2).abs() < 1e-15);
        assert!((p[1].1 - 1.0).abs() < 1e-15);
        assert!((p[2].1 - 0.1).abs() < 1e-12);
        assert_eq!(find_peaks(&x, &y, 0.15).unwrap().len(), 2);
    }

    #[test]
    fn mismatched_curve_is_rejected() {
        assert!(find_peaks(&[1.0, 2.0, 3.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn scan_golden_matches_brute_force() {
        let f = |g: f64| Ok(0.6 + 0.3 * (2.0 * std::f64::consts::PI * (g - 731.3) / 675.0).cos());
        let (x, y) = maximize_scan_golden(f, 0.0, 3000.0, ScanConfig::default()).unwrap();
        let brute = linspace(0.0, 3000.0, 30_001)
            .into_iter()
            .map(|g| f(g).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(y >= brute - 1e-9);
        let period = 675.0;
        let offset = (x - 731.3).rem_euclid(period);
        assert!(offset.min(period - offset) <= 0.1, "{x}");
    }

    #[test]
    fn two_cosine_targets_hit_closed_form_optimum() {
        // A1 + A2 with equal weights and periods p: the sum is a single cosine
        // with phase atan2(sin φ1 + sin φ2, cos φ1 + cos φ2).
        let p = 700.0;
        let (s1, s2) = (100.0, 400.0);
        let k = 2.0 * std::f64::consts::PI / p;
        let f = |g: f64| Ok(0.5 + 0.2 * (k * (g - s1)).cos() + 0.5 + 0.2 * (k * (g - s2)).cos());
        let phase = ((k * s1).sin() + (k * s2).sin()).atan2((k * s1).cos() + (k * s2).cos());
        let expected = (phase / k).rem_euclid(p);
        let (x, _) = maximize_scan_golden(f, 0.0, p - 1.0, ScanConfig::default()).unwrap();
        assert!((x - expected).abs() <= 0.1, "{x} vs {expected}");
    }

    #[test]
    fn degenerate_bounds_return_the_bound() {
        let t = template();
        let targets = [Target {
            wavelength_nm: 1350.0,
            weight: 1.0,
        }];
        let opt = optimize_gap(
            &t,
            &targets,
            (2200.0, 2200.0),
            Polarization::TE,
            ScanConfig::default(),
        )
        .unwrap();
        assert_eq!(opt.gap_nm, 2200.0);
        assert_eq!(
            opt.score,
            t.absorption(1350.0, 2200.0, Polarization::TE).unwrap()
        );
    }

    #[test]
    fn optimize_gap_contracts() {
        let t = template();
        assert!(optimize_gap(
            &t,
            &[],
            (0.0, 100.0),
            Polarization::TE,
            ScanConfig::default()
        )
        .is_err());
        let bad = [Target {
            wavelength_nm: 1350.0,
            weight: 0.0,
        }];
        assert!(optimize_gap(
            &t,
            &bad,
            (0.0, 100.0),
            Polarization::TE,
            ScanConfig::default()
        )
        .is_err());
        let ok = [Target {
            wavelength_nm: 1350.0,
            weight: 1.0,
        }];
        assert!(optimize_gap(
            &t,
            &ok,
            (100.0, 0.0),
            Polarization::TE,
            ScanConfig::default()
        )
        .is_err());
    }

    #[test]
    fn optimized_gap_beats_the_coarse_scan() {
        let t = template();
        let targets = [
            Target {
                wavelength_nm: 1280.0,
                weight: 1.0,
            },
            Target {
                wavelength_nm: 1500.0,
                weight: 1.0,
            },
        ];
        let cfg = ScanConfig::default();
        let opt = optimize_gap(&t, &targets, (3000.0, 5000.0), Polarization::TE, cfg).unwrap();
        for g in linspace(3000.0, 5000.0, 401) {
            let s: f64 = targets
                .iter()
                .map(|x| t.absorption(x.wavelength_nm, g, Polarization::TE).unwrap())
                .sum();
            assert!(opt.score >= s, "gap {g}: {s} > {}", opt.score);
        }
    }

    #[test]
    fn contrast_of_degenerate_meander_is_one() {
        let lib = MaterialLibrary::illustrative();
        let nbtin = lib.get("NbTiN").unwrap();
        let geom = MeanderGeometry::new(50.0, 120.0, 9.0, 8.0).unwrap();
        let stack = LayerStack::new(
            lib.get("SiO2").unwrap(),
            vec![
                Layer::homogeneous(lib.get("air").unwrap(), 0.0),
                Layer::meander(geom, nbtin.clone(), nbtin),
                Layer::homogeneous(lib.get("SiO2").unwrap(), 230.0),
                Layer::homogeneous(lib.get("Au").unwrap(), 200.0),
            ],
            lib.get("air").unwrap(),
        )
        .unwrap();
        let t = CavityTemplate::new(stack, 0).unwrap();
        assert_eq!(polarization_contrast(&t, 1350.0, 2200.0).unwrap(), 1.0);
    }

    #[test]
    fn contrast_tends_to_one_at_full_fill() {
        let lib = MaterialLibrary::illustrative();
        let geom = MeanderGeometry::new(120.0 * (1.0 - 1e-9), 120.0, 9.0, 8.0).unwrap();
        let t = CavityTemplate::membrane_cavity(&lib, &MembraneCavity::new(geom)).unwrap();
        let r = polarization_contrast(&t, 1350.0, 2200.0).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn lossy_meander_prefers_parallel_polarization() {
        let r = polarization_contrast(&template(), 1350.0, 2200.0).unwrap();
        assert!(r > 1.0, "{r}");
    }

    #[test]
    fn contrast_guard_on_zero_tm() {
        let lib = MaterialLibrary::illustrative();
        let clear = Arc::new(DispersionTable::constant("clear", 3.0, 0.0, 1000.0, 2000.0).unwrap());
        let geom = MeanderGeometry::new(50.0, 120.0, 9.0, 8.0).unwrap();
        let stack = LayerStack::new(
            lib.get("SiO2").unwrap(),
            vec![
                Layer::homogeneous(lib.get("air").unwrap(), 0.0),
                Layer::meander(geom, clear, lib.get("air").unwrap()),
                Layer::homogeneous(lib.get("SiO2").unwrap(), 230.0),
            ],
            lib.get("air").unwrap(),
        )
        .unwrap();
        let t = CavityTemplate::new(stack, 0).unwrap();
        assert!(matches!(
            polarization_contrast(&t, 1350.0, 100.0),
            Err(Error::Numeric { .. })
        ));
    }

    proptest! {
        #[test]
        fn peaks_scale_with_threshold(ys in proptest::collection::vec(0.0f64..1.0, 3..60), thr in 0.0f64..0.5, scale in 0.01f64..100.0) {
            let x: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let scaled: Vec<f64> = ys.iter().map(|v| v * scale).collect();
            let a = find_peaks(&x, &ys, thr).unwrap();
            let b = find_peaks(&x, &scaled, thr * scale).unwrap();
            let pa: Vec<f64> = a.iter().map(|p| p.wavelength_nm).collect();
            let pb: Vec<f64> = b.iter().map(|p| p.wavelength_nm).collect();
            prop_assert_eq!(pa, pb);
        }

        #[test]
        fn scan_golden_never_below_scan(shift in 0.0f64..500.0, period in 100.0f64..900.0, lo in 0.0f64..200.0, width in 1.0f64..2000.0) {
            let f = |g: f64| Ok((2.0 * std::f64::consts::PI * (g - shift) / period).cos() + 1e-4 * g);
            let cfg = ScanConfig::default();
            let (_, best) = maximize_scan_golden(f, lo, lo + width, cfg).unwrap();
            let n = ((width / cfg.scan_step_nm).ceil() as usize).max(1);
            for g in linspace(lo, lo + width, n + 1) {
                prop_assert!(best >= f(g).unwrap());
            }
        }
    }
}
