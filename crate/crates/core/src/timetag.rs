//! Seeded Monte Carlo time-tagging and the two timing analyses: the
//! consecutive-event delay histogram and the Gaussian IRF fit.
//!
//! Detector time stamps are in ns. Jitter is specified in ps. Histograms are
//! unit-agnostic; the IRF helpers use ps throughout.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::RecoveryCurve;
use crate::error::{Error, Result};

/// `2·sqrt(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
pub const DEFAULT_AUTOCORR_BIN_NS: f64 = 1.0;
pub const DEFAULT_IRF_BIN_PS: f64 = 1.0;
/// Resolution of the plain-text tag format.
pub const TAG_FILE_RESOLUTION_NS: f64 = 1e-3;
pub const MAX_FIT_ITERATIONS: usize = 200;

const TAG_FILE_HEADER: &str = "# snspd time tags (ns)";
const META_PREFIX: &str = "# meta: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonStatistics {
    /// Poisson-distributed photon number per pulse (attenuated laser).
    #[default]
    Poisson,
    /// Exactly `mean_photons_per_pulse` photons in every pulse.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceModel {
    Cw {
        rate_per_s: f64,
    },
    /// Pulses at `k·period_ns`, `k = 0, 1, ...`.
    Pulsed {
        period_ns: f64,
        mean_photons_per_pulse: f64,
        #[serde(default)]
        statistics: PhotonStatistics,
    },
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceModel::Cw { rate_per_s } => {
                if !(rate_per_s >= 0.0 && rate_per_s.is_finite()) {
                    return Err(Error::validation(format!(
                        "CW rate must be non-negative, got {rate_per_s}"
                    )));
                }
            }
            SourceModel::Pulsed {
                period_ns,
                mean_photons_per_pulse: mean,
                statistics,
            } => {
                if !(period_ns > 0.0 && period_ns.is_finite()) {
                    return Err(Error::validation(format!(
                        "pulse period must be positive, got {period_ns}"
                    )));
                }
                if !(mean >= 0.0 && mean.is_finite()) {
                    return Err(Error::validation("mean photon number must be non-negative"));
                }
                if statistics == PhotonStatistics::Exact && mean.fract() != 0.0 {
                    return Err(Error::validation(
                        "exact photon statistics need an integer photon number",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Everything `simulate_stream` needs besides the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub source: SourceModel,
    pub curve: RecoveryCurve,
    pub eta_max: f64,
    pub jitter_fwhm_ps: f64,
    pub dark_rate_per_s: f64,
    pub duration_ns: f64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if !(0.0..=1.0).contains(&self.eta_max) {
            return Err(Error::validation(format!(
                "eta_max must lie in [0, 1], got {}",
                self.eta_max
            )));
        }
        if !(self.jitter_fwhm_ps >= 0.0 && self.jitter_fwhm_ps.is_finite()) {
            return Err(Error::validation("jitter FWHM must be non-negative"));
        }
        if !(self.dark_rate_per_s >= 0.0 && self.dark_rate_per_s.is_finite()) {
            return Err(Error::validation("dark-count rate must be non-negative"));
        }
        if !(self.duration_ns > 0.0 && self.duration_ns.is_finite()) {
            return Err(Error::validation(format!(
                "duration must be positive, got {}",
                self.duration_ns
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub seed: u64,
    /// Trial index; the RNG stream is `(seed, trial)`.
    pub trial: u64,
    pub spec: SimulationSpec,
    pub emitted_photons: u64,
    /// Photon detections before jitter and windowing.
    pub signal_detections: u64,
    pub dark_counts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTagStream {
    tags: Vec<f64>,
    meta: Option<StreamMeta>,
}

impl TimeTagStream {
    /// Tags must be strictly increasing and, when metadata is given, within
    /// `[0, duration]` up to the file resolution.
    pub fn new(tags: Vec<f64>, meta: Option<StreamMeta>) -> Result<Self> {
        if let Some(i) = tags.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::validation(format!(
                "tags not strictly increasing at index {}",
                i + 1
            )));
        }
        if let (Some(m), Some(first), Some(last)) = (&meta, tags.first(), tags.last()) {
            let slack = 0.5 * TAG_FILE_RESOLUTION_NS;
            if *first < -slack || *last > m.spec.duration_ns + slack {
                return Err(Error::validation("tags outside [0, duration]"));
            }
        }
        Ok(Self { tags, meta })
    }

    pub fn tags(&self) -> &[f64] {
        &self.tags
    }

    pub fn meta(&self) -> Option<&StreamMeta> {
        self.meta.as_ref()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// One tag per line with 3 decimals; metadata as a JSON header comment.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TAG_FILE_HEADER}")?;
        if let Some(meta) = &self.meta {
            let json = serde_json::to_string(meta).map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(w, "{META_PREFIX}{json}")?;
        }
        for t in &self.tags {
            writeln!(w, "{t:.3}")?;
        }
        Ok(())
    }

    /// Reads the format of [`write_to`](Self::write_to). Tags that collide
    /// after rounding to the file resolution are merged.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut tags: Vec<f64> = Vec::new();
        let mut meta = None;
        let mut merged = 0usize;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(json) = line.strip_prefix(META_PREFIX) {
                meta = Some(
                    serde_json::from_str(json)
                        .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?,
                );
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line.parse().map_err(|_| {
                Error::Parse(format!("line {}: `{line}` is not a time stamp", n + 1))
            })?;
            match tags.last() {
                Some(&prev) if t < prev => {
                    return Err(Error::Parse(format!(
                        "line {}: time stamps out of order",
                        n + 1
                    )));
                }
                Some(&prev) if t == prev => merged += 1,
                _ => tags.push(t),
            }
        }
        if merged > 0 {
            log::warn!("merged {merged} tags that coincide at the file resolution");
        }
        Self::new(tags, meta)
    }
}

struct Detector<'a> {
    curve: &'a RecoveryCurve,
    eta_max: f64,
    last: Option<f64>,
    emitted: u64,
    detections: Vec<f64>,
}

impl Detector<'_> {
    fn offer(&mut self, t: f64, rng: &mut ChaCha8Rng) {
        self.emitted += 1;
        let rel = self
            .last
            .map_or(1.0, |l| self.curve.relative_efficiency(t - l));
        let p = self.eta_max * rel;
        if p > 0.0 && rng.random::<f64>() < p {
            self.detections.push(t);
            self.last = Some(t);
        }
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Simulates one detector record. Equivalent to trial 0 of
/// [`simulate_trials`].
pub fn simulate_stream(spec: &SimulationSpec, seed: u64) -> Result<TimeTagStream> {
    simulate_trial(spec, seed, 0)
}

/// Simulates trial `trial` of seed `seed`; every `(seed, trial)` pair has its
/// own independent random stream.
pub fn simulate_trial(spec: &SimulationSpec, seed: u64, trial: u64) -> Result<TimeTagStream> {
    spec.validate()?;
    let mut rng = trial_rng(seed, trial);
    let duration = spec.duration_ns;
    let mut det = Detector {
        curve: &spec.curve,
        eta_max: spec.eta_max,
        last: None,
        emitted: 0,
        detections: Vec::new(),
    };

    match spec.source {
        SourceModel::Cw { rate_per_s } if rate_per_s > 0.0 => {
            let gap = Exp::new(rate_per_s * 1e-9).map_err(|e| Error::validation(e.to_string()))?;
            let mut t = gap.sample(&mut rng);
            while t <= duration {
                det.offer(t, &mut rng);
                t += gap.sample(&mut rng);
            }
        }
        SourceModel::Cw { .. } => {}
        SourceModel::Pulsed {
            period_ns,
            mean_photons_per_pulse: mean,
            statistics,
        } => {
            let poisson = match statistics {
                PhotonStatistics::Poisson if mean > 0.0 => {
                    Some(Poisson::new(mean).map_err(|e| Error::validation(e.to_string()))?)
                }
                _ => None,
            };
            let pulses = (duration / period_ns).floor() as u64;
            for k in 0..=pulses {
                let t = k as f64 * period_ns;
                let n = match (statistics, &poisson) {
                    (PhotonStatistics::Exact, _) => mean as u64,
                    (PhotonStatistics::Poisson, Some(p)) => p.sample(&mut rng) as u64,
                    (PhotonStatistics::Poisson, None) => 0,
                };
                for _ in 0..n {
                    det.offer(t, &mut rng);
                }
            }
        }
    }

    let signal_detections = det.detections.len() as u64;
    let emitted_photons = det.emitted;
    let mut tags = det.detections;
    if spec.jitter_fwhm_ps > 0.0 {
        let sigma_ns = spec.jitter_fwhm_ps / FWHM_PER_SIGMA * 1e-3;
        let normal = Normal::new(0.0, sigma_ns).map_err(|e| Error::validation(e.to_string()))?;
        for t in &mut tags {
            *t += normal.sample(&mut rng);
        }
    }
    let mut dark_counts = 0;
    let expected_dark = spec.dark_rate_per_s * duration * 1e-9;
    if expected_dark > 0.0 {
        let n = Poisson::new(expected_dark)
            .map_err(|e| Error::validation(e.to_string()))?
            .sample(&mut rng) as u64;
        dark_counts = n;
        tags.extend((0..n).map(|_| rng.random_range(0.0..=duration)));
    }
    tags.retain(|t| (0.0..=duration).contains(t));
    tags.sort_by(f64::total_cmp);
    tags.dedup();

    let meta = StreamMeta {
        seed,
        trial,
        spec: *spec,
        emitted_photons,
        signal_detections,
        dark_counts,
    };
    TimeTagStream::new(tags, Some(meta))
}

/// Runs `trials` independent trials in parallel; results are in trial order.
pub fn simulate_trials(
    spec: &SimulationSpec,
    seed: u64,
    trials: u64,
) -> Result<Vec<TimeTagStream>> {
    (0..trials)
        .into_par_iter()
        .map(|i| simulate_trial(spec, seed, i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEfficiency {
    pub flux_per_s: f64,
    pub mean: f64,
    /// Standard error of the mean across trials.
    pub std_error: f64,
    pub trials: u64,
    pub emitted_photons: u64,
}

/// Detected/emitted photon ratio under CW illumination, from `trials`
/// parallel trials of about `photons_per_trial` photons each.
pub fn monte_carlo_efficiency(
    curve: &RecoveryCurve,
    flux_per_s: f64,
    eta_max: f64,
    photons_per_trial: u64,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloEfficiency> {
    if trials < 2 || photons_per_trial == 0 {
        return Err(Error::validation("need at least 2 trials with photons"));
    }
    if !(flux_per_s > 0.0) {
        return Err(Error::validation(
            "Monte Carlo efficiency needs a positive flux",
        ));
    }
    let spec = SimulationSpec {
        source: SourceModel::Cw {
            rate_per_s: flux_per_s,
        },
        curve: *curve,
        eta_max,
        jitter_fwhm_ps: 0.0,
        dark_rate_per_s: 0.0,
        duration_ns: photons_per_trial as f64 / flux_per_s * 1e9,
    };
    let per_trial: Vec<(f64, u64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = simulate_trial(&spec, seed, i)?;
            let m = s.meta().expect("simulated streams carry metadata");
            Ok((
                m.signal_detections as f64 / m.emitted_photons.max(1) as f64,
                m.emitted_photons,
            ))
        })
        .collect::<Result<_>>()?;
    let n = trials as f64;
    let mean = per_trial.iter().map(|p| p.0).sum::<f64>() / n;
    let var = per_trial.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloEfficiency {
        flux_per_s,
        mean,
        std_error: (var / n).sqrt(),
        trials,
        emitted_photons: per_trial.iter().map(|p| p.1).sum(),
    })
}

/// Uniform-width histogram. Values below the first edge go to `underflow`,
/// values above the last edge to `overflow`; a value on the last edge is
/// counted in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    lo: f64,
    bin_width: f64,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, bin_width: f64, bins: usize) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite() && lo.is_finite()) {
            return Err(Error::validation(
                "histogram needs a finite origin and positive bin width",
            ));
        }
        if bins == 0 {
            return Err(Error::validation("histogram needs at least one bin"));
        }
        Ok(Self {
            lo,
            bin_width,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        })
    }

    /// Builds a histogram directly from bin counts.
    pub fn from_counts(lo: f64, bin_width: f64, counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::new(lo, bin_width, counts.len())?;
        h.counts = counts;
        Ok(h)
    }

    /// Bins aligned to multiples of `bin_width`, just covering the samples.
    pub fn covering(samples: &[f64], bin_width: f64) -> Result<Self> {
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::InsufficientData("no finite samples to bin".into()));
        }
        let lo = (min / bin_width).floor() * bin_width;
        let bins = ((max - lo) / bin_width).floor() as usize + 1;
        let mut h = Self::new(lo, bin_width, bins)?;
        samples.iter().for_each(|&x| h.fill(x));
        Ok(h)
    }

    pub fn fill(&mut self, x: f64) {
        let pos = (x - self.lo) / self.bin_width;
        if pos < 0.0 {
            self.underflow += 1;
            return;
        }
        let n = self.counts.len();
        let i = pos.floor() as usize;
        if i < n {
            self.counts[i] += 1;
        } else if x == self.hi() {
            self.counts[n - 1] += 1;
        } else {
            self.overflow += 1;
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.bin_width * self.counts.len() as f64
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// Samples inside the binned range.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len())
            .map(|i| self.lo + self.bin_width * i as f64)
            .collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.lo + self.bin_width * (i as f64 + 0.5))
            .collect()
    }

    /// Copy with every edge moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            lo: self.lo + delta,
            ..self.clone()
        }
    }

    /// CSV with columns `bin_lo,bin_hi,count`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bin_lo", "bin_hi", "count"])?;
        let edges = self.edges();
        for (i, c) in self.counts.iter().enumerate() {
            wtr.write_record([
                edges[i].to_string(),
                edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv); bins must be
    /// contiguous with a common width.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            bin_lo: f64,
            bin_hi: f64,
            count: u64,
        }
        let mut rows = Vec::new();
        for row in csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(r)
            .deserialize()
        {
            let row: Row = row?;
            rows.push(row);
        }
        let first = rows
            .first()
            .ok_or_else(|| Error::Parse("histogram file has no bins".into()))?;
        let width = first.bin_hi - first.bin_lo;
        for (i, row) in rows.iter().enumerate() {
            let expected_lo = first.bin_lo + width * i as f64;
            let tol = 1e-9 * width.abs().max(expected_lo.abs());
            if (row.bin_lo - expected_lo).abs() > tol
                || (row.bin_hi - row.bin_lo - width).abs() > tol
            {
                return Err(Error::Parse(format!(
                    "histogram bin {} is not uniform and contiguous",
                    i + 1
                )));
            }
        }
        Self::from_counts(first.bin_lo, width, rows.iter().map(|r| r.count).collect())
    }
}

/// Delays between consecutive tags.
pub fn inter_event_delays(stream: &TimeTagStream) -> Result<Vec<f64>> {
    if stream.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "delay analysis needs at least 2 tags, stream has {}",
            stream.len()
        )));
    }
    Ok(stream.tags().windows(2).map(|w| w[1] - w[0]).collect())
}

/// Histogram of consecutive-event delays over `[0, max_delay_ns]`. Longer
/// delays are discarded and counted in the overflow.
pub fn autocorrelation_histogram(
    stream: &TimeTagStream,
    bin_width_ns: f64,
    max_delay_ns: f64,
) -> Result<Histogram> {
    if !(max_delay_ns > 0.0 && max_delay_ns.is_finite()) {
        return Err(Error::validation("maximum delay must be positive"));
    }
    let delays = inter_event_delays(stream)?;
    let bins = (max_delay_ns / bin_width_ns - 1e-9).ceil().max(1.0) as usize;
    let mut h = Histogram::new(0.0, bin_width_ns, bins)?;
    for d in delays {
        if d > max_delay_ns {
            h.overflow += 1;
        } else {
            let i = ((d / bin_width_ns).floor() as usize).min(bins - 1);
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

/// Recovery of the detection probability read from a delay histogram.
///
/// For a renewal process the hazard of the next detection at delay `t` is
/// `flux·eta_max·η_rel(t)`, so the hazard normalized to its plateau estimates
/// `η_rel` without bias from the exponential decay of the raw histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEstimate {
    pub plateau_hazard_per_unit: f64,
    pub delays: Vec<f64>,
    pub relative: Vec<f64>,
    /// Delay where the smoothed relative hazard first reaches one half.
    pub half_crossing: f64,
}

/// `plateau_start` marks where recovery is complete; `smoothing_bins` is the
/// width of the centered moving average used for the half crossing.
pub fn estimate_recovery(
    hist: &Histogram,
    plateau_start: f64,
    smoothing_bins: usize,
) -> Result<RecoveryEstimate> {
    if smoothing_bins == 0 || smoothing_bins.is_multiple_of(2) {
        return Err(Error::validation(
            "smoothing window must be an odd number of bins",
        ));
    }
    let w = hist.bin_width();
    let mut at_risk = hist.total() + hist.overflow();
    let mut hazard = Vec::with_capacity(hist.counts().len());
    let (mut plateau_events, mut plateau_exposure) = (0.0, 0.0);
    for (i, &c) in hist.counts().iter().enumerate() {
        let exposure = (at_risk as f64 - 0.5 * c as f64) * w;
        hazard.push(if exposure > 0.0 {
            c as f64 / exposure
        } else {
            0.0
        });
        if hist.lo() + w * i as f64 >= plateau_start && exposure > 0.0 {
            plateau_events += c as f64;
            plateau_exposure += exposure;
        }
        at_risk -= c;
    }
    if plateau_events == 0.0 {
        return Err(Error::InsufficientData(format!(
            "no events beyond the plateau start {plateau_start}"
        )));
    }
    let plateau = plateau_events / plateau_exposure;
    let relative: Vec<f64> = hazard.iter().map(|h| h / plateau).collect();
    let half = smoothing_bins / 2;
    let smooth: Vec<f64> = (0..relative.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(relative.len());
            relative[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let delays = hist.centers();
    let i = smooth
        .iter()
        .position(|&r| r >= 0.5)
        .ok_or_else(|| Error::Unreachable {
            threshold: 0.5,
            detail: "relative hazard never reaches half of its plateau".into(),
        })?;
    let half_crossing = if i == 0 {
        delays[0]
    } else {
        let (r0, r1) = (smooth[i - 1], smooth[i]);
        delays[i - 1] + (0.5 - r0) / (r1 - r0) * w
    };
    Ok(RecoveryEstimate {
        plateau_hazard_per_unit: plateau,
        delays,
        relative,
        half_crossing,
    })
}

/// Gaussian model `amplitude·exp(-(t - center)²/(2σ²))` fitted to a histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub center: f64,
    pub sigma: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub center_std_error: f64,
    pub sigma_std_error: f64,
    pub fwhm_std_error: f64,
    /// `sqrt(SSR / (bins - 3))`.
    pub goodness: f64,
    pub iterations: usize,
}

/// Draws `count` seeded samples from a Gaussian of the given FWHM.
pub fn gaussian_samples(center: f64, fwhm: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let normal =
        Normal::new(center, fwhm / FWHM_PER_SIGMA).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| normal.sample(&mut rng)).collect())
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col] == 0.0 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        let pivot_row = m[col];
        for row in m.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (x, p) in row.iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][3] - s) / m[i][i];
    }
    Some(x)
}

fn invert3(a: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let col = solve3(a, e)?;
        for i in 0..3 {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

// Residuals, cost, Jacobian for p = [amplitude, center, sigma].
fn gaussian_system(x: &[f64], y: &[f64], p: [f64; 3]) -> (f64, [[f64; 3]; 3], [f64; 3]) {
    let [a, c, s] = p;
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    let mut cost = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - c) / s;
        let e = (-0.5 * u * u).exp();
        let r = yi - a * e;
        let j = [e, a * e * u / s, a * e * u * u / s];
        cost += r * r;
        for m in 0..3 {
            jtr[m] += j[m] * r;
            for n in 0..3 {
                jtj[m][n] += j[m] * j[n];
            }
        }
    }
    (cost, jtj, jtr)
}

fn gaussian_cost(x: &[f64], y: &[f64], [a, c, s]: [f64; 3]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let u = (xi - c) / s;
            (yi - a * (-0.5 * u * u).exp()).powi(2)
        })
        .sum()
}

/// Unweighted Levenberg-Marquardt fit to the bin centers, started from the
/// histogram moments. Needs at least 5 nonzero bins.
pub fn fit_gaussian_irf(hist: &Histogram) -> Result<GaussianFit> {
    let nonzero = hist.counts().iter().filter(|&&c| c > 0).count();
    if nonzero < 5 {
        return Err(Error::InsufficientData(format!(
            "IRF fit needs at least 5 nonzero bins, found {nonzero}"
        )));
    }
    let y: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    let total: f64 = y.iter().sum();
    // Fit in coordinates relative to the moment center, computed from the bin
    // offsets so the result does not depend on where the histogram starts.
    let offsets: Vec<f64> = (0..y.len())
        .map(|i| hist.bin_width() * (i as f64 + 0.5))
        .collect();
    let mean_offset = offsets.iter().zip(&y).map(|(x, w)| x * w).sum::<f64>() / total;
    let mean = hist.lo() + mean_offset;
    let x: Vec<f64> = offsets.iter().map(|c| c - mean_offset).collect();
    let var = x.iter().zip(&y).map(|(u, w)| u * u * w).sum::<f64>() / total;
    let peak = y.iter().cloned().fold(0.0, f64::max);
    let mut p = [peak, 0.0, var.sqrt().max(0.5 * hist.bin_width())];

    let (mut cost, mut jtj, mut jtr) = gaussian_system(&x, &y, p);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let converged = loop {
        if iterations >= MAX_FIT_ITERATIONS {
            break false;
        }
        iterations += 1;
        let mut damped = jtj;
        for i in 0..3 {
            damped[i][i] += mu * jtj[i][i];
        }
        let Some(step) = solve3(damped, jtr) else {
            break false;
        };
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
        let trial_cost = if trial[2] > 0.0 {
            gaussian_cost(&x, &y, trial)
        } else {
            f64::INFINITY
        };
        if trial_cost <= cost {
            let small = step[0].abs() <= 1e-12 * p[0].abs()
                && step[1].abs() <= 1e-12 * p[2]
                && step[2].abs() <= 1e-12 * p[2];
            p = trial;
            (cost, jtj, jtr) = gaussian_system(&x, &y, p);
            mu = (mu / 3.0).max(1e-15);
            if small || cost == 0.0 {
                break true;
            }
        } else {
            mu *= 4.0;
            if mu > 1e16 {
                // No descent direction left: at a minimum to working precision.
                break true;
            }
        }
    };
    let dof = (y.len() - 3) as f64;
    let goodness = (cost / dof).sqrt();
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            detail: format!("Gaussian IRF fit, residual norm {goodness:.6e} per degree of freedom"),
        });
    }
    let cov = invert3(jtj).ok_or_else(|| Error::NonConvergence {
        iterations,
        detail: "singular normal matrix at the IRF fit solution".into(),
    })?;
    let s2 = cost / dof;
    let sigma = p[2];
    let sigma_std_error = (s2 * cov[2][2]).max(0.0).sqrt();
    Ok(GaussianFit {
        center: mean + p[1],
        sigma,
        fwhm: FWHM_PER_SIGMA * sigma,
        amplitude: p[0],
        center_std_error: (s2 * cov[1][1]).max(0.0).sqrt(),
        sigma_std_error,
        fwhm_std_error: FWHM_PER_SIGMA * sigma_std_error,
        goodness,
        iterations,
    })
}
