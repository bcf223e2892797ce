//! Detector recovery after a detection: electrical pulse shape, efficiency
//! recovery, the four dead-time metrics, and count-rate dependent efficiency.
//!
//! Times are in ns, photon fluxes in photons/s. The efficiency recovery is
//! stored relative to the saturated efficiency `eta_max`, which callers pass
//! separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the canonical recovery preset.
pub const DETECTOR_FIG3A: &str = "detector-fig3a";
/// Default fraction of `eta_max` that counts as fully recovered.
pub const DEFAULT_FULL_RECOVERY_FRACTION: f64 = 0.99;

const BISECTION_TOLERANCE_NS: f64 = 1e-6;

/// Normalized double-exponential read-out pulse,
/// `p(t) ∝ exp(-t/tau_fall) - exp(-t/tau_rise)` with unit peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Zero gives a pure exponential decay from `t = 0`.
    pub tau_rise_ns: f64,
    pub tau_fall_ns: f64,
}

impl PulseShape {
    pub fn new(tau_rise_ns: f64, tau_fall_ns: f64) -> Result<Self> {
        let p = Self {
            tau_rise_ns,
            tau_fall_ns,
        };
        p.validate()?;
        Ok(p)
    }

    /// Lumped electrical model: `tau_rise = L_k / (R_load + R_hotspot)`,
    /// `tau_fall = L_k / R_load`. nH over ohm gives ns.
    pub fn from_electrical(
        kinetic_inductance_nh: f64,
        load_ohm: f64,
        hotspot_ohm: f64,
    ) -> Result<Self> {
        if !(kinetic_inductance_nh > 0.0 && load_ohm > 0.0 && hotspot_ohm >= 0.0) {
            return Err(Error::validation(
                "electrical model needs L_k > 0, R_load > 0, R_hotspot >= 0",
            ));
        }
        Self::new(
            kinetic_inductance_nh / (load_ohm + hotspot_ohm),
            kinetic_inductance_nh / load_ohm,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau_fall_ns > 0.0 && self.tau_fall_ns.is_finite()) {
            return Err(Error::validation("pulse fall time must be positive"));
        }
        if !(self.tau_rise_ns >= 0.0 && self.tau_rise_ns < self.tau_fall_ns) {
            return Err(Error::validation(
                "pulse rise time must lie in [0, tau_fall)",
            ));
        }
        Ok(())
    }

    fn raw(&self, t: f64) -> f64 {
        let fall = (-t / self.tau_fall_ns).exp();
        if self.tau_rise_ns == 0.0 {
            fall
        } else {
            fall - (-t / self.tau_rise_ns).exp()
        }
    }

    pub fn peak_time_ns(&self) -> f64 {
        let (r, f) = (self.tau_rise_ns, self.tau_fall_ns);
        if r == 0.0 {
            0.0
        } else {
            r * f * (f / r).ln() / (f - r)
        }
    }

    /// Pulse amplitude at `t_ns` after the detection, peak normalized to 1.
    pub fn amplitude(&self, t_ns: f64) -> f64 {
        if t_ns < 0.0 {
            return 0.0;
        }
        self.raw(t_ns) / self.raw(self.peak_time_ns())
    }

    /// Time for the pulse to decay from its peak to `1/e` of the peak.
    pub fn one_over_e_time_ns(&self) -> f64 {
        let tp = self.peak_time_ns();
        let target = (-1.0f64).exp();
        let t = bisect_first(tp, tp + 50.0 * self.tau_fall_ns, |t| {
            self.amplitude(t) <= target
        });
        t - tp
    }
}

/// Relative efficiency after a detection: zero during the blind interval,
/// then `1 - exp(-(t - t_blind)/tau_eff)`, and exactly one from `t_full` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecovery {
    pub t_blind_ns: f64,
    /// Zero gives a step back to full efficiency at `t_blind`.
    pub tau_eff_ns: f64,
    #[serde(default)]
    pub t_full_ns: Option<f64>,
}

impl EfficiencyRecovery {
    pub fn new(t_blind_ns: f64, tau_eff_ns: f64, t_full_ns: Option<f64>) -> Result<Self> {
        let e = Self {
            t_blind_ns,
            tau_eff_ns,
            t_full_ns,
        };
        e.validate()?;
        Ok(e)
    }

    /// Non-paralyzable dead time `dead_ns`: blind, then instantly recovered.
    pub fn step(dead_ns: f64) -> Result<Self> {
        Self::new(dead_ns, 0.0, None)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_blind_ns >= 0.0 && self.t_blind_ns.is_finite()) {
            return Err(Error::validation("blind interval must be non-negative"));
        }
        if !(self.tau_eff_ns >= 0.0 && self.tau_eff_ns.is_finite()) {
            return Err(Error::validation(
                "recovery time constant must be non-negative",
            ));
        }
        if let Some(tf) = self.t_full_ns {
            if !(tf >= self.t_blind_ns && tf.is_finite()) {
                return Err(Error::validation(
                    "full-recovery time must not precede the blind interval end",
                ));
            }
        }
        Ok(())
    }

    /// Relative efficiency `t_ns` after the previous detection.
    pub fn relative(&self, t_ns: f64) -> f64 {
        if t_ns < self.t_blind_ns {
            return 0.0;
        }
        if self.tau_eff_ns == 0.0 || self.t_full_ns.is_some_and(|tf| t_ns >= tf) {
            return 1.0;
        }
        -(-(t_ns - self.t_blind_ns) / self.tau_eff_ns).exp_m1()
    }

    /// `∫_0^t relative(s) ds`.
    pub fn integral(&self, t_ns: f64) -> f64 {
        if t_ns <= self.t_blind_ns {
            return 0.0;
        }
        let end = self.t_full_ns.map_or(t_ns, |tf| t_ns.min(tf));
        let u = end - self.t_blind_ns;
        let rising = if self.tau_eff_ns == 0.0 {
            u
        } else {
            u + self.tau_eff_ns * (-u / self.tau_eff_ns).exp_m1()
        };
        rising + (t_ns - end)
    }

    /// Time after which `relative` is 1 to double precision.
    fn settled_ns(&self) -> f64 {
        match self.t_full_ns {
            Some(tf) => tf,
            None if self.tau_eff_ns == 0.0 => self.t_blind_ns,
            None => self.t_blind_ns + 40.0 * self.tau_eff_ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCurve {
    pub pulse: PulseShape,
    pub efficiency: EfficiencyRecovery,
}

impl RecoveryCurve {
    pub fn new(pulse: PulseShape, efficiency: EfficiencyRecovery) -> Result<Self> {
        pulse.validate()?;
        efficiency.validate()?;
        Ok(Self { pulse, efficiency })
    }

    /// Recovery fitted to a 25 ns blind interval, 33 ns pulse 1/e decay,
    /// 51 ns half-efficiency point and full efficiency at 97 ns.
    ///
    /// The pulse comes from `L_k = 1633.744 nH` into 50 ohm with a 5 kohm
    /// hotspot; `tau_eff = 26 ns / ln 2` puts the half point at 51 ns.
    pub fn detector_fig3a() -> Self {
        Self {
            pulse: PulseShape::from_electrical(1633.744, 50.0, 5000.0).expect("valid preset"),
            efficiency: EfficiencyRecovery {
                t_blind_ns: 25.0,
                tau_eff_ns: 26.0 / std::f64::consts::LN_2,
                t_full_ns: Some(97.0),
            },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            DETECTOR_FIG3A => Ok(Self::detector_fig3a()),
            other => Err(Error::validation(format!(
                "unknown recovery preset `{other}` (known: {DETECTOR_FIG3A})"
            ))),
        }
    }

    pub fn relative_efficiency(&self, t_ns: f64) -> f64 {
        self.efficiency.relative(t_ns)
    }
}

/// Smallest `t` in `[lo, hi]` with `pred(t)` true, for a monotone predicate
/// with `pred(hi)` true.
fn bisect_first(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    if pred(lo) {
        return lo;
    }
    while hi - lo > BISECTION_TOLERANCE_NS {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadTimeMetrics {
    /// Blind interval: no detection is possible before it ends.
    pub tau1_min_separation_ns: f64,
    /// Pulse decay from peak to 1/e.
    pub tau2_one_over_e_ns: f64,
    /// Efficiency back to half of `eta_max` (-3 dB).
    pub tau3_minus3db_ns: f64,
    /// Efficiency back to the full-recovery fraction of `eta_max`.
    pub tau4_full_recovery_ns: f64,
}

fn first_reaching(curve: &RecoveryCurve, fraction: f64) -> Result<f64> {
    let e = &curve.efficiency;
    if e.tau_eff_ns > 0.0 && e.t_full_ns.is_none() && fraction >= 1.0 {
        return Err(Error::Unreachable {
            threshold: fraction,
            detail: "exponential recovery without a full-recovery time never reaches 100 %".into(),
        });
    }
    let hi = e.settled_ns();
    if curve.relative_efficiency(hi) < fraction {
        return Err(Error::Unreachable {
            threshold: fraction,
            detail: format!("relative efficiency at {hi} ns is below the threshold"),
        });
    }
    Ok(bisect_first(0.0, hi, |t| {
        curve.relative_efficiency(t) >= fraction
    }))
}

/// Extracts the four dead-time metrics. `full_recovery_fraction` must lie in
/// `[0.5, 1]`; the result must satisfy `tau1 <= tau2 <= tau3 <= tau4`.
pub fn dead_time_metrics(
    curve: &RecoveryCurve,
    full_recovery_fraction: f64,
) -> Result<DeadTimeMetrics> {
    if !(0.5..=1.0).contains(&full_recovery_fraction) {
        return Err(Error::validation(format!(
            "full-recovery fraction must lie in [0.5, 1], got {full_recovery_fraction}"
        )));
    }
    let m = DeadTimeMetrics {
        tau1_min_separation_ns: curve.efficiency.t_blind_ns,
        tau2_one_over_e_ns: curve.pulse.one_over_e_time_ns(),
        tau3_minus3db_ns: first_reaching(curve, 0.5)?,
        tau4_full_recovery_ns: first_reaching(curve, full_recovery_fraction)?,
    };
    let ordered = m.tau1_min_separation_ns <= m.tau2_one_over_e_ns
        && m.tau2_one_over_e_ns <= m.tau3_minus3db_ns
        && m.tau3_minus3db_ns <= m.tau4_full_recovery_ns;
    if !ordered {
        return Err(Error::validation(format!(
            "recovery curve gives unordered dead times {m:?}: the pulse must decay after the \
             blind interval and before half efficiency returns"
        )));
    }
    Ok(m)
}

// 5-point Gauss-Legendre rule on [-1, 1].
fn gauss_legendre_5() -> ([f64; 5], [f64; 5]) {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    ([-b, -a, 0.0, a, b], [wb, wa, 128.0 / 225.0, wa, wb])
}

fn integrate_panels(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre_5();
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = lo + h * (p as f64 + 0.5);
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| wi * f(mid + 0.5 * h * xi))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

const MAX_REFINEMENTS: usize = 10_000;

/// Detection efficiency under CW Poisson illumination at `flux_per_s`.
///
/// With non-paralyzable recovery the detections form a renewal process. After
/// a detection the next one arrives with hazard `λ η_rel(t)`, `λ = flux·eta_max`,
/// so the mean spacing is `E[T] = ∫ exp(-λ ∫_0^t η_rel) dt` and the efficiency
/// is `1 / (flux · E[T])`. For a step recovery of length `D` this reduces to
/// `eta_max / (1 + eta_max · flux · D)`.
pub fn rate_dependent_efficiency_analytic(
    curve: &RecoveryCurve,
    flux_per_s: f64,
    eta_max: f64,
) -> Result<f64> {
    if !(flux_per_s >= 0.0 && flux_per_s.is_finite()) {
        return Err(Error::validation(format!(
            "flux must be non-negative, got {flux_per_s}"
        )));
    }
    if !(0.0..=1.0).contains(&eta_max) {
        return Err(Error::validation(format!(
            "eta_max must lie in [0, 1], got {eta_max}"
        )));
    }
    let rate_per_ns = flux_per_s * 1e-9 * eta_max;
    if rate_per_ns == 0.0 {
        return Ok(eta_max);
    }
    let e = &curve.efficiency;
    let settled = e.settled_ns();
    let survival = |t: f64| (-rate_per_ns * e.integral(t)).exp();
    // ∫_0^settled S dt; S = 1 on the blind interval.
    let transient = if settled > e.t_blind_ns {
        let scale = e.tau_eff_ns.max(1e-3).min(1.0 / rate_per_ns);
        let mut panels = (((settled - e.t_blind_ns) / scale) * 2.0).ceil().max(8.0) as usize;
        let mut previous = integrate_panels(&survival, e.t_blind_ns, settled, panels);
        let mut refinements = 0;
        loop {
            panels *= 2;
            let next = integrate_panels(&survival, e.t_blind_ns, settled, panels);
            if (next - previous).abs() <= 1e-13 * next.abs() {
                break next;
            }
            previous = next;
            refinements += 1;
            if refinements >= MAX_REFINEMENTS || panels > 1 << 26 {
                return Err(Error::NonConvergence {
                    iterations: refinements,
                    detail: format!("survival integral did not settle at flux {flux_per_s}/s"),
                });
            }
        }
    } else {
        0.0
    } + e.t_blind_ns;
    // E[T] = transient + S(settled)/rate, so flux·E[T] = (rate·transient + S)/eta_max.
    Ok(eta_max / (rate_per_ns * transient + survival(settled)))
}

/// Efficiency for a pulsed source with one photon per pulse when every pulse
/// is detected: the detector is re-armed only to `η_rel(period)`.
pub fn pulsed_source_efficiency(
    curve: &RecoveryCurve,
    repetition_period_ns: f64,
    eta_max: f64,
) -> Result<f64> {
    if !(repetition_period_ns > 0.0 && repetition_period_ns.is_finite()) {
        return Err(Error::validation("repetition period must be positive"));
    }
    Ok(eta_max * curve.relative_efficiency(repetition_period_ns))
}
