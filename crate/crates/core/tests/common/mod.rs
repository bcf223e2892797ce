//! Reference implementations shared by the integration tests. Nothing here
//! calls into the solver paths it is used to check.

#![allow(dead_code)]

use num_complex::Complex64;

/// Closed-form Airy summation for one film between two half-spaces at normal
/// incidence, `N = n - i k` convention. Returns `(R, T)`.
pub fn airy_single_film(
    n_entry: f64,
    film: Complex64,
    thickness_nm: f64,
    exit: Complex64,
    wavelength_nm: f64,
) -> (f64, f64) {
    let n0 = Complex64::new(n_entry, 0.0);
    let r01 = (n0 - film) / (n0 + film);
    let r12 = (film - exit) / (film + exit);
    let t01 = 2.0 * n0 / (n0 + film);
    let t12 = 2.0 * film / (film + exit);
    let beta = film * (2.0 * std::f64::consts::PI * thickness_nm / wavelength_nm);
    let i = Complex64::new(0.0, 1.0);
    let round_trip = (-2.0 * i * beta).exp();
    let denom = 1.0 + r01 * r12 * round_trip;
    let r = (r01 + r12 * round_trip) / denom;
    let t = t01 * t12 * (-i * beta).exp() / denom;
    (r.norm_sqr(), exit.re / n_entry * t.norm_sqr())
}

/// Inverse of the Kolmogorov distribution tail at 1 %: `D_n > 1.6276 / sqrt(n)`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_62 / (n as f64).sqrt()
}
