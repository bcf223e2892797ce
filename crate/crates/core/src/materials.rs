//! Optical constants and the effective-medium model of the nanowire meander.
//!
//! Complex refractive indices follow the `N = n - i k` convention with an
//! `exp(+i w t)` time dependence, so absorbing media have `k > 0` and the
//! imaginary part of the permittivity `eps = N^2` is negative. Every module
//! in this crate uses the same convention.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polarization of the normally incident field relative to the meander wires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    /// E-field parallel to the wires.
    TE,
    /// E-field perpendicular to the wires.
    TM,
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Polarization::TE => write!(f, "TE"),
            Polarization::TM => write!(f, "TM"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub wavelength_nm: f64,
    pub n: f64,
    pub k: f64,
}

/// Tabulated `(wavelength, n, k)` data for one material, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionTable {
    material_name: String,
    samples: Vec<DispersionSample>,
}

impl DispersionTable {
    pub fn new(material_name: impl Into<String>, samples: Vec<DispersionSample>) -> Result<Self> {
        let material_name = material_name.into();
        if samples.len() < 2 {
            return Err(Error::validation(format!(
                "dispersion table `{material_name}` needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.wavelength_nm.is_finite() && s.n.is_finite() && s.k.is_finite()) {
                return Err(Error::validation(format!(
                    "dispersion table `{material_name}` row {i} is not finite"
                )));
            }
            if s.n <= 0.0 || s.k < 0.0 {
                return Err(Error::validation(format!(
                    "dispersion table `{material_name}` row {i}: need n > 0 and k >= 0, got n={} k={}",
                    s.n, s.k
                )));
            }
        }
        if let Some(w) = samples
            .windows(2)
            .find(|w| w[1].wavelength_nm <= w[0].wavelength_nm)
        {
            return Err(Error::validation(format!(
                "dispersion table `{material_name}`: wavelengths must increase strictly ({} then {})",
                w[0].wavelength_nm, w[1].wavelength_nm
            )));
        }
        Ok(Self {
            material_name,
            samples,
        })
    }

    /// Wavelength-independent material over `[min_nm, max_nm]`.
    pub fn constant(
        material_name: impl Into<String>,
        n: f64,
        k: f64,
        min_nm: f64,
        max_nm: f64,
    ) -> Result<Self> {
        Self::new(
            material_name,
            vec![
                DispersionSample {
                    wavelength_nm: min_nm,
                    n,
                    k,
                },
                DispersionSample {
                    wavelength_nm: max_nm,
                    n,
                    k,
                },
            ],
        )
    }

    /// Reads a CSV with the header `wavelength_nm,n,k`.
    pub fn from_csv_reader<R: Read>(material_name: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["wavelength_nm", "n", "k"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse(format!(
                "dispersion CSV header must be `wavelength_nm,n,k`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let samples = rdr
            .deserialize::<DispersionSample>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(material_name, samples)
    }

    pub fn from_csv_path(material_name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(material_name, file)
    }

    pub fn material_name(&self) -> &str {
        &self.material_name
    }

    pub fn samples(&self) -> &[DispersionSample] {
        &self.samples
    }

    /// `(min, max)` wavelength covered by the table, in nm.
    pub fn range_nm(&self) -> (f64, f64) {
        (
            self.samples[0].wavelength_nm,
            self.samples[self.samples.len() - 1].wavelength_nm,
        )
    }

    pub fn contains(&self, wavelength_nm: f64) -> bool {
        let (lo, hi) = self.range_nm();
        wavelength_nm >= lo && wavelength_nm <= hi
    }

    /// Linearly interpolated `n - i k` at `wavelength_nm`. Never extrapolates.
    pub fn complex_index(&self, wavelength_nm: f64) -> Result<Complex64> {
        let (lo, hi) = self.range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::Range {
                material: self.material_name.clone(),
                wavelength_nm,
                min_nm: lo,
                max_nm: hi,
            });
        }
        let idx = self
            .samples
            .partition_point(|s| s.wavelength_nm < wavelength_nm);
        let upper = self.samples[idx];
        if upper.wavelength_nm == wavelength_nm {
            return Ok(Complex64::new(upper.n, -upper.k));
        }
        let lower = self.samples[idx - 1];
        let t = (wavelength_nm - lower.wavelength_nm) / (upper.wavelength_nm - lower.wavelength_nm);
        let n = lower.n + (upper.n - lower.n) * t;
        let k = lower.k + (upper.k - lower.k) * t;
        Ok(Complex64::new(n, -k))
    }

    pub fn permittivity(&self, wavelength_nm: f64) -> Result<Complex64> {
        self.complex_index(wavelength_nm).map(|n| n * n)
    }
}

/// Relative permittivity from a complex index, `eps = N^2`.
pub fn permittivity_of(index: Complex64) -> Complex64 {
    index * index
}

/// Complex index from a permittivity, on the branch with `n >= 0`.
///
/// With the `n - i k` convention a lossy permittivity (`Im eps < 0`) maps to
/// `k > 0` on the principal square root.
pub fn index_of(permittivity: Complex64) -> Complex64 {
    let root = permittivity.sqrt();
    if root.re < 0.0 {
        -root
    } else {
        root
    }
}

/// Layout of the meandered nanowire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanderGeometry {
    pub linewidth_nm: f64,
    pub pitch_nm: f64,
    pub film_thickness_nm: f64,
    pub active_radius_um: f64,
}

impl MeanderGeometry {
    pub fn new(
        linewidth_nm: f64,
        pitch_nm: f64,
        film_thickness_nm: f64,
        active_radius_um: f64,
    ) -> Result<Self> {
        let geom = Self {
            linewidth_nm,
            pitch_nm,
            film_thickness_nm,
            active_radius_um,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth_nm > 0.0 && self.linewidth_nm < self.pitch_nm) {
            return Err(Error::validation(format!(
                "meander needs 0 < linewidth < pitch, got {} / {} nm",
                self.linewidth_nm, self.pitch_nm
            )));
        }
        if !(self.film_thickness_nm > 0.0 && self.film_thickness_nm.is_finite()) {
            return Err(Error::validation(format!(
                "meander film thickness must be positive, got {} nm",
                self.film_thickness_nm
            )));
        }
        if !(self.active_radius_um > 0.0 && self.active_radius_um.is_finite()) {
            return Err(Error::validation(format!(
                "meander active radius must be positive, got {} um",
                self.active_radius_um
            )));
        }
        Ok(())
    }

    pub fn fill_factor(&self) -> f64 {
        self.linewidth_nm / self.pitch_nm
    }
}

/// Zeroth-order effective permittivity of the wire grating.
pub fn effective_permittivity(
    geom: &MeanderGeometry,
    eps_wire: Complex64,
    eps_gap: Complex64,
    pol: Polarization,
) -> Result<Complex64> {
    effective_permittivity_for_fill(geom.fill_factor(), eps_wire, eps_gap, pol)
}

/// Same as [`effective_permittivity`] for a bare fill factor `f` in `(0, 1)`.
///
/// TE takes the arithmetic mean of the permittivities, TM the harmonic mean.
pub fn effective_permittivity_for_fill(
    fill: f64,
    eps_wire: Complex64,
    eps_gap: Complex64,
    pol: Polarization,
) -> Result<Complex64> {
    if !(fill > 0.0 && fill < 1.0) {
        return Err(Error::validation(format!(
            "fill factor must lie in (0, 1), got {fill}"
        )));
    }
    if eps_wire == eps_gap {
        return Ok(eps_wire);
    }
    Ok(match pol {
        Polarization::TE => eps_wire * fill + eps_gap * (1.0 - fill),
        Polarization::TM => (eps_wire.inv() * fill + eps_gap.inv() * (1.0 - fill)).inv(),
    })
}

/// Materials addressed by name.
#[derive(Debug, Clone, Default)]
pub struct MaterialLibrary {
    tables: BTreeMap<String, Arc<DispersionTable>>,
}

const ILLUSTRATIVE_AIR: &str = include_str!("../data/air.csv");
const ILLUSTRATIVE_SIO2: &str = include_str!("../data/sio2.csv");
const ILLUSTRATIVE_AU: &str = include_str!("../data/au.csv");
const ILLUSTRATIVE_NBTIN: &str = include_str!("../data/nbtin.csv");

impl MaterialLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shipped example tables: `air`, `SiO2`, `Au` and `NbTiN`.
    ///
    /// These are illustrative. `SiO2` follows a fused-silica Sellmeier fit and
    /// `Au` a Drude model; the `NbTiN` values are made-up placeholders of the
    /// right magnitude, not measured data.
    pub fn illustrative() -> Self {
        let mut lib = Self::new();
        for (name, csv) in [
            ("air", ILLUSTRATIVE_AIR),
            ("SiO2", ILLUSTRATIVE_SIO2),
            ("Au", ILLUSTRATIVE_AU),
            ("NbTiN", ILLUSTRATIVE_NBTIN),
        ] {
            let table = DispersionTable::from_csv_reader(name, csv.as_bytes())
                .expect("shipped dispersion tables are valid");
            lib.insert(table);
        }
        lib
    }

    pub fn insert(&mut self, table: DispersionTable) -> Arc<DispersionTable> {
        let table = Arc::new(table);
        self.tables
            .insert(table.material_name().to_string(), Arc::clone(&table));
        table
    }

    pub fn get(&self, name: &str) -> Result<Arc<DispersionTable>> {
        self.tables.get(name).cloned().ok_or_else(|| {
            Error::validation(format!(
                "unknown material `{name}` (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ramp() -> DispersionTable {
        DispersionTable::new(
            "ramp",
            vec![
                DispersionSample {
                    wavelength_nm: 1000.0,
                    n: 1.0,
                    k: 0.0,
                },
                DispersionSample {
                    wavelength_nm: 2000.0,
                    n: 2.0,
                    k: 0.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_table_interpolates_to_constant() {
        let t = DispersionTable::constant("glass", 1.45, 0.0, 1000.0, 2000.0).unwrap();
        assert_eq!(t.complex_index(1350.0).unwrap(), Complex64::new(1.45, 0.0));
    }

    #[test]
    fn ramp_midpoint() {
        let n = ramp().complex_index(1500.0).unwrap();
        assert_relative_eq!(n.re, 1.5, epsilon = 1e-15);
        assert_eq!(n.im, 0.0);
    }

    #[test]
    fn out_of_range_is_an_error_naming_the_material() {
        let err = ramp().complex_index(900.0).unwrap_err();
        match err {
            Error::Range {
                material,
                min_nm,
                max_nm,
                ..
            } => {
                assert_eq!(material, "ramp");
                assert_eq!((min_nm, max_nm), (1000.0, 2000.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ramp().complex_index(2000.5).is_err());
        assert!(ramp().complex_index(f64::NAN).is_err());
    }

    #[test]
    fn absorbing_sample_uses_minus_ik() {
        let t = DispersionTable::constant("metal", 0.3, 9.0, 1000.0, 2000.0).unwrap();
        let n = t.complex_index(1200.0).unwrap();
        assert_eq!(n, Complex64::new(0.3, -9.0));
        assert!(t.permittivity(1200.0).unwrap().im < 0.0);
    }

    #[test]
    fn table_validation() {
        let s = |w, n, k| DispersionSample {
            wavelength_nm: w,
            n,
            k,
        };
        assert!(DispersionTable::new("x", vec![s(1.0, 1.0, 0.0)]).is_err());
        assert!(DispersionTable::new("x", vec![s(2.0, 1.0, 0.0), s(1.0, 1.0, 0.0)]).is_err());
        assert!(DispersionTable::new("x", vec![s(1.0, 1.0, 0.0), s(1.0, 1.0, 0.0)]).is_err());
        assert!(DispersionTable::new("x", vec![s(1.0, 0.0, 0.0), s(2.0, 1.0, 0.0)]).is_err());
        assert!(DispersionTable::new("x", vec![s(1.0, 1.0, -0.1), s(2.0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn csv_requires_header() {
        let ok = "wavelength_nm,n,k\n1000,1.5,0\n2000,1.5,0.1\n";
        let t = DispersionTable::from_csv_reader("g", ok.as_bytes()).unwrap();
        assert_eq!(t.samples().len(), 2);
        let missing = "1000,1.5,0\n2000,1.5,0.1\n";
        assert!(DispersionTable::from_csv_reader("g", missing.as_bytes()).is_err());
    }

    #[test]
    fn illustrative_library_loads() {
        let lib = MaterialLibrary::illustrative();
        for name in ["air", "SiO2", "Au", "NbTiN"] {
            let t = lib.get(name).unwrap();
            assert!(t.contains(1260.0) && t.contains(1650.0), "{name}");
        }
        assert!(lib.get("unobtainium").is_err());
    }

    #[test]
    fn ema_arithmetic_and_harmonic_means() {
        let w = Complex64::new(9.0, 0.0);
        let g = Complex64::new(1.0, 0.0);
        let te = effective_permittivity_for_fill(0.5, w, g, Polarization::TE).unwrap();
        let tm = effective_permittivity_for_fill(0.5, w, g, Polarization::TM).unwrap();
        assert_relative_eq!(te.re, 5.0, epsilon = 1e-15);
        assert_relative_eq!(tm.re, 1.8, epsilon = 1e-15);
    }

    #[test]
    fn ema_full_fill_limit() {
        let w = Complex64::new(-5.4, -40.3);
        let g = Complex64::new(1.0, 0.0);
        for pol in [Polarization::TE, Polarization::TM] {
            let e = effective_permittivity_for_fill(1.0 - 1e-12, w, g, pol).unwrap();
            assert!((e - w).norm() < 1e-9 * w.norm(), "{pol}: {e}");
        }
    }

    #[test]
    fn ema_rejects_fill_outside_open_interval() {
        let one = Complex64::new(1.0, 0.0);
        for f in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(effective_permittivity_for_fill(f, one, one, Polarization::TE).is_err());
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(MeanderGeometry::new(50.0, 120.0, 9.0, 8.0).is_ok());
        assert!(MeanderGeometry::new(120.0, 120.0, 9.0, 8.0).is_err());
        assert!(MeanderGeometry::new(0.0, 120.0, 9.0, 8.0).is_err());
        assert!(MeanderGeometry::new(50.0, 120.0, 0.0, 8.0).is_err());
        assert!(MeanderGeometry::new(50.0, 120.0, 9.0, -1.0).is_err());
        let g = MeanderGeometry::new(70.0, 140.0, 9.0, 8.0).unwrap();
        assert_eq!(g.fill_factor(), 0.5);
    }

    #[test]
    fn index_branch_has_positive_n_and_k() {
        let eps = permittivity_of(Complex64::new(4.1, -4.8));
        let n = index_of(eps);
        assert_relative_eq!(n.re, 4.1, epsilon = 1e-12);
        assert_relative_eq!(n.im, -4.8, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn tm_never_exceeds_te_for_lossless(f in 0.001f64..0.999, a in 1.0f64..30.0, b in 1.0f64..30.0) {
            let (w, g) = (Complex64::new(a, 0.0), Complex64::new(b, 0.0));
            let te = effective_permittivity_for_fill(f, w, g, Polarization::TE).unwrap().re;
            let tm = effective_permittivity_for_fill(f, w, g, Polarization::TM).unwrap().re;
            prop_assert!(tm <= te * (1.0 + 1e-14));
            if (a - b).abs() > 1e-6 {
                prop_assert!(tm < te);
            }
        }

        #[test]
        fn ema_swap_symmetry(f in 0.001f64..0.999, wr in -20.0f64..30.0, wi in -40.0f64..0.0, gr in 1.0f64..5.0) {
            let (w, g) = (Complex64::new(wr, wi), Complex64::new(gr, 0.0));
            for pol in [Polarization::TE, Polarization::TM] {
                let a = effective_permittivity_for_fill(f, w, g, pol).unwrap();
                let b = effective_permittivity_for_fill(1.0 - f, g, w, pol).unwrap();
                prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
            }
        }

        #[test]
        fn ema_equal_media_is_identity(f in 0.001f64..0.999, er in 1.0f64..20.0, ei in -10.0f64..0.0) {
            let e = Complex64::new(er, ei);
            for pol in [Polarization::TE, Polarization::TM] {
                let out = effective_permittivity_for_fill(f, e, e, pol).unwrap();
                prop_assert!((out - e).norm() <= 1e-12 * e.norm());
            }
        }

        #[test]
        fn sample_points_round_trip(idx in 0usize..20) {
            let lib = MaterialLibrary::illustrative();
            let t = lib.get("NbTiN").unwrap();
            let s = t.samples()[idx % t.samples().len()];
            prop_assert_eq!(t.complex_index(s.wavelength_nm).unwrap(), Complex64::new(s.n, -s.k));
        }
    }
}
