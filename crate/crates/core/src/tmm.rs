//! Normal-incidence characteristic-matrix solver for stratified media.
//!
//! Each interior layer `j` with index `N_j` and thickness `d_j` contributes
//!
//! ```text
//! M_j = [[cos δ,        i sin δ / N_j],
//!        [i N_j sin δ,  cos δ        ]],   δ = 2π N_j d_j / λ
//! ```
//!
//! and the field vector `[B; C]` at the top of layer `j` is
//! `M_j · … · M_last · [1; N_exit]`. The net Poynting flux through a plane is
//! proportional to `Re(B C*)`, which gives the reflectance, the transmittance
//! into the exit medium and the absorptance of every layer from flux
//! differences across its boundaries.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{
    effective_permittivity, index_of, DispersionTable, MaterialLibrary, MeanderGeometry,
    Polarization,
};

/// Largest round-off excursion outside `[0, 1]` that is clamped instead of rejected.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Homogeneous(Arc<DispersionTable>),
    Meander {
        geometry: MeanderGeometry,
        wire: Arc<DispersionTable>,
        gap: Arc<DispersionTable>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub thickness_nm: f64,
}

impl Layer {
    pub fn homogeneous(material: Arc<DispersionTable>, thickness_nm: f64) -> Self {
        Self {
            kind: LayerKind::Homogeneous(material),
            thickness_nm,
        }
    }

    /// Effective-medium meander layer; its thickness is the film thickness.
    pub fn meander(
        geometry: MeanderGeometry,
        wire: Arc<DispersionTable>,
        gap: Arc<DispersionTable>,
    ) -> Self {
        Self {
            thickness_nm: geometry.film_thickness_nm,
            kind: LayerKind::Meander {
                geometry,
                wire,
                gap,
            },
        }
    }

    pub fn is_meander(&self) -> bool {
        matches!(self.kind, LayerKind::Meander { .. })
    }

    /// Complex index of the layer at `wavelength_nm` for `pol`.
    pub fn index(&self, wavelength_nm: f64, pol: Polarization) -> Result<Complex64> {
        match &self.kind {
            LayerKind::Homogeneous(m) => m.complex_index(wavelength_nm),
            LayerKind::Meander {
                geometry,
                wire,
                gap,
            } => {
                let eps = effective_permittivity(
                    geometry,
                    wire.permittivity(wavelength_nm)?,
                    gap.permittivity(wavelength_nm)?,
                    pol,
                )?;
                Ok(index_of(eps))
            }
        }
    }

    fn label(&self) -> String {
        match &self.kind {
            LayerKind::Homogeneous(m) => m.material_name().to_string(),
            LayerKind::Meander { wire, gap, .. } => {
                format!("meander({}/{})", wire.material_name(), gap.material_name())
            }
        }
    }
}

/// Interior layers between two semi-infinite media, listed from the entry side.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    entry: Arc<DispersionTable>,
    layers: Vec<Layer>,
    exit: Arc<DispersionTable>,
}

impl LayerStack {
    /// Layers of zero thickness are accepted and act as the identity.
    pub fn new(
        entry: Arc<DispersionTable>,
        layers: Vec<Layer>,
        exit: Arc<DispersionTable>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation(
                "a stack needs at least one interior layer",
            ));
        }
        if layers.iter().filter(|l| l.is_meander()).count() > 1 {
            return Err(Error::validation(
                "a stack may contain at most one meander layer",
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if !(l.thickness_nm >= 0.0 && l.thickness_nm.is_finite()) {
                return Err(Error::validation(format!(
                    "layer {i} ({}) has invalid thickness {} nm",
                    l.label(),
                    l.thickness_nm
                )));
            }
            if let LayerKind::Meander { geometry, .. } = &l.kind {
                geometry.validate()?;
            }
        }
        Ok(Self {
            entry,
            layers,
            exit,
        })
    }

    pub fn entry(&self) -> &Arc<DispersionTable> {
        &self.entry
    }

    pub fn exit(&self) -> &Arc<DispersionTable> {
        &self.exit
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn meander_index(&self) -> Option<usize> {
        self.layers.iter().position(Layer::is_meander)
    }

    /// Copy of the stack with layer `index` set to `thickness_nm`.
    pub fn with_thickness(&self, index: usize, thickness_nm: f64) -> Result<Self> {
        let mut layers = self.layers.clone();
        let layer = layers
            .get_mut(index)
            .ok_or_else(|| Error::validation(format!("layer index {index} out of range")))?;
        if layer.is_meander() {
            return Err(Error::validation(
                "the meander thickness is fixed by its geometry",
            ));
        }
        layer.thickness_nm = thickness_nm;
        Self::new(Arc::clone(&self.entry), layers, Arc::clone(&self.exit))
    }

    /// The same layers traversed from the exit side.
    pub fn reversed(&self) -> Self {
        let mut layers = self.layers.clone();
        layers.reverse();
        Self {
            entry: Arc::clone(&self.exit),
            layers,
            exit: Arc::clone(&self.entry),
        }
    }
}

/// Optical response of a stack at one wavelength and polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackResponse {
    pub wavelength_nm: f64,
    pub polarization: Polarization,
    pub reflectance: f64,
    pub transmittance: f64,
    /// One entry per interior layer, in stack order.
    pub layer_absorptance: Vec<f64>,
}

impl StackResponse {
    pub fn total_absorptance(&self) -> f64 {
        self.layer_absorptance.iter().sum()
    }

    /// `R + T + ΣA`, which is 1 up to round-off.
    pub fn energy_sum(&self) -> f64 {
        self.reflectance + self.transmittance + self.total_absorptance()
    }
}

/// Field vector `[B; C]` stored as `exp(log_scale) * (b, c)`.
#[derive(Debug, Clone, Copy)]
struct ScaledField {
    b: Complex64,
    c: Complex64,
    log_scale: f64,
}

impl ScaledField {
    fn normalize(mut self) -> Self {
        let m = self.b.norm().max(self.c.norm());
        if m > 0.0 && m.is_finite() {
            self.b /= m;
            self.c /= m;
            self.log_scale += m.ln();
        }
        self
    }

    /// Applies the characteristic matrix of a layer with index `n` and phase
    /// thickness `delta`, keeping the exponential growth out of the mantissa.
    fn propagate(self, n: Complex64, delta: Complex64) -> Self {
        // With n - ik, Im δ <= 0 and exp(iδ) carries the growth exp(|Im δ|).
        let growth = delta.im.abs();
        let e_pos = (I * delta - growth).exp();
        let e_neg = (-I * delta - growth).exp();
        let cos = (e_pos + e_neg) * 0.5;
        let sin = (e_pos - e_neg) / (2.0 * I);
        Self {
            b: cos * self.b + I * sin / n * self.c,
            c: I * n * sin * self.b + cos * self.c,
            log_scale: self.log_scale + growth,
        }
        .normalize()
    }
}

/// Solves a stack described directly by complex indices and thicknesses.
///
/// `layers` lists `(index, thickness_nm)` from the entry side. The entry
/// medium must be non-absorbing.
pub fn solve_indices(
    entry: Complex64,
    layers: &[(Complex64, f64)],
    exit: Complex64,
    wavelength_nm: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    if !(wavelength_nm > 0.0 && wavelength_nm.is_finite()) {
        return Err(Error::validation(format!(
            "wavelength must be positive, got {wavelength_nm}"
        )));
    }
    if entry.im != 0.0 || entry.re <= 0.0 {
        return Err(Error::validation(format!(
            "entry medium must be non-absorbing with n > 0, got {entry}"
        )));
    }
    let eta0 = entry.re;
    let mut fields = Vec::with_capacity(layers.len() + 1);
    let mut field = ScaledField {
        b: Complex64::new(1.0, 0.0),
        c: exit,
        log_scale: 0.0,
    }
    .normalize();
    fields.push(field);
    for (j, &(n, d)) in layers.iter().enumerate().rev() {
        if n.norm() < 1e-12 || !n.re.is_finite() || !n.im.is_finite() {
            return Err(Error::Numeric {
                layer: j,
                reason: format!("singular characteristic matrix (index {n})"),
            });
        }
        if d > 0.0 {
            let delta = n * (2.0 * std::f64::consts::PI * d / wavelength_nm);
            field = field.propagate(n, delta);
        }
        fields.push(field);
    }
    fields.reverse();
    let top = fields[0];
    let denom = eta0 * top.b + top.c;
    if denom.norm() == 0.0 || !denom.norm().is_finite() {
        return Err(Error::Numeric {
            layer: 0,
            reason: "degenerate input admittance".into(),
        });
    }
    let r = (eta0 * top.b - top.c) / denom;
    let reflectance = r.norm_sqr();
    // Flux through each interface, normalized to the incident flux.
    let flux = |f: &ScaledField| -> f64 {
        let rel = (2.0 * (f.log_scale - top.log_scale)).exp();
        4.0 * eta0 * (f.b * f.c.conj()).re * rel / denom.norm_sqr()
    };
    let fluxes: Vec<f64> = fields.iter().map(flux).collect();
    let transmittance = fluxes[layers.len()];
    let absorptance = layers
        .iter()
        .enumerate()
        .map(|(j, &(n, d))| {
            if n.im == 0.0 || d == 0.0 {
                0.0
            } else {
                fluxes[j] - fluxes[j + 1]
            }
        })
        .collect();
    Ok((reflectance, transmittance, absorptance))
}

fn clamp_fraction(value: f64, what: &str, layer: usize) -> Result<f64> {
    if !value.is_finite() || !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&value) {
        return Err(Error::Numeric {
            layer,
            reason: format!("{what} = {value} is outside [0, 1]"),
        });
    }
    if !(0.0..=1.0).contains(&value) {
        let clamped = value.clamp(0.0, 1.0);
        log::warn!("clamped {what} from {value:e} to {clamped}");
        return Ok(clamped);
    }
    Ok(value)
}

/// Reflectance, transmittance and per-layer absorptance of `stack`.
pub fn solve_stack(
    stack: &LayerStack,
    wavelength_nm: f64,
    pol: Polarization,
) -> Result<StackResponse> {
    let entry = stack.entry.complex_index(wavelength_nm)?;
    let exit = stack.exit.complex_index(wavelength_nm)?;
    let indexed = stack
        .layers
        .iter()
        .map(|l| Ok((l.index(wavelength_nm, pol)?, l.thickness_nm)))
        .collect::<Result<Vec<_>>>()?;
    let (r, t, a) = solve_indices(entry, &indexed, exit, wavelength_nm)?;
    let last = stack.layers.len().saturating_sub(1);
    Ok(StackResponse {
        wavelength_nm,
        polarization: pol,
        reflectance: clamp_fraction(r, "reflectance", 0)?,
        transmittance: clamp_fraction(t, "transmittance", last)?,
        layer_absorptance: a
            .into_iter()
            .enumerate()
            .map(|(j, v)| clamp_fraction(v, "absorptance", j))
            .collect::<Result<_>>()?,
    })
}

/// Fraction of the incident light absorbed in the meander layer.
pub fn detector_absorption(
    stack: &LayerStack,
    wavelength_nm: f64,
    pol: Polarization,
) -> Result<f64> {
    let idx = stack
        .meander_index()
        .ok_or_else(|| Error::validation("stack has no meander layer"))?;
    Ok(solve_stack(stack, wavelength_nm, pol)?.layer_absorptance[idx])
}

/// Name of the canonical membrane-cavity stack.
pub const MEMBRANE_CAVITY_V1: &str = "membrane-cavity-v1";

/// Parameters of the membrane cavity: fiber / air gap / meander / SiO2 / Au / air.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembraneCavity {
    pub meander: MeanderGeometry,
    #[serde(default = "default_spacer_nm")]
    pub spacer_nm: f64,
    #[serde(default = "default_mirror_nm")]
    pub mirror_nm: f64,
    #[serde(default = "default_fiber")]
    pub fiber: String,
    #[serde(default = "default_air")]
    pub gap_medium: String,
    #[serde(default = "default_wire")]
    pub wire: String,
    #[serde(default = "default_air")]
    pub wire_gap: String,
    #[serde(default = "default_fiber")]
    pub spacer: String,
    #[serde(default = "default_mirror")]
    pub mirror: String,
    #[serde(default = "default_air")]
    pub exit: String,
}

fn default_spacer_nm() -> f64 {
    230.0
}
fn default_mirror_nm() -> f64 {
    200.0
}
fn default_fiber() -> String {
    "SiO2".into()
}
fn default_air() -> String {
    "air".into()
}
fn default_wire() -> String {
    "NbTiN".into()
}
fn default_mirror() -> String {
    "Au".into()
}

impl MembraneCavity {
    /// Default materials, 230 nm SiO2 spacer and 200 nm Au mirror.
    pub fn new(meander: MeanderGeometry) -> Self {
        Self {
            meander,
            spacer_nm: default_spacer_nm(),
            mirror_nm: default_mirror_nm(),
            fiber: default_fiber(),
            gap_medium: default_air(),
            wire: default_wire(),
            wire_gap: default_air(),
            spacer: default_fiber(),
            mirror: default_mirror(),
            exit: default_air(),
        }
    }

    /// Index of the air-gap layer in the built stack.
    pub const GAP_LAYER: usize = 0;

    pub fn build(&self, lib: &MaterialLibrary, gap_nm: f64) -> Result<LayerStack> {
        LayerStack::new(
            lib.get(&self.fiber)?,
            vec![
                Layer::homogeneous(lib.get(&self.gap_medium)?, gap_nm),
                Layer::meander(self.meander, lib.get(&self.wire)?, lib.get(&self.wire_gap)?),
                Layer::homogeneous(lib.get(&self.spacer)?, self.spacer_nm),
                Layer::homogeneous(lib.get(&self.mirror)?, self.mirror_nm),
            ],
            lib.get(&self.exit)?,
        )
    }
}

/// Serializable description of one interior layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Homogeneous {
        material: String,
        thickness_nm: f64,
    },
    Meander {
        wire: String,
        gap: String,
        linewidth_nm: f64,
        pitch_nm: f64,
        film_thickness_nm: f64,
        active_radius_um: f64,
    },
}

/// Serializable stack: materials by name, resolved against a [`MaterialLibrary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub entry: String,
    pub exit: String,
    pub layers: Vec<LayerSpec>,
}

impl StackSpec {
    pub fn build(&self, lib: &MaterialLibrary) -> Result<LayerStack> {
        let layers = self
            .layers
            .iter()
            .map(|spec| {
                Ok(match spec {
                    LayerSpec::Homogeneous {
                        material,
                        thickness_nm,
                    } => Layer::homogeneous(lib.get(material)?, *thickness_nm),
                    LayerSpec::Meander {
                        wire,
                        gap,
                        linewidth_nm,
                        pitch_nm,
                        film_thickness_nm,
                        active_radius_um,
                    } => Layer::meander(
                        MeanderGeometry::new(
                            *linewidth_nm,
                            *pitch_nm,
                            *film_thickness_nm,
                            *active_radius_um,
                        )?,
                        lib.get(wire)?,
                        lib.get(gap)?,
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LayerStack::new(lib.get(&self.entry)?, layers, lib.get(&self.exit)?)
    }
}
