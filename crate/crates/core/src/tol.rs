//! Numerical tolerances shared across modules.
//!
//! `eps_tol` is the mass/spacing tolerance. It defaults to `1e-9`, can be
//! overridden once per process through the `IPTREE_TOL` environment variable,
//! and can be changed at runtime with [`set_eps_tol`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

/// Default mass and spacing tolerance.
pub const DEFAULT_EPS_TOL: f64 = 1e-9;
/// Rounding grid for mass statistics in canonical forms.
pub const EPS_CANON: f64 = 1e-7;
/// Bisection tolerance of the Prokhorov distance.
pub const EPS_BIS: f64 = 1e-6;
/// Iteration cap of the Prokhorov bisection.
pub const MAX_BISECTION_STEPS: usize = 40;

static EPS: AtomicU64 = AtomicU64::new(0);
static INIT: OnceLock<()> = OnceLock::new();

fn init() {
    INIT.get_or_init(|| {
        let v = std::env::var("IPTREE_TOL")
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v > 0.0)
            .unwrap_or(DEFAULT_EPS_TOL);
        // A racing set_eps_tol wins over the environment.
        let _ = EPS.compare_exchange(0, v.to_bits(), Ordering::SeqCst, Ordering::SeqCst);
    });
}

/// Current mass/spacing tolerance.
pub fn eps_tol() -> f64 {
    init();
    f64::from_bits(EPS.load(Ordering::Relaxed))
}

/// Override the mass/spacing tolerance for the rest of the process.
pub fn set_eps_tol(v: f64) {
    assert!(v.is_finite() && v > 0.0, "tolerance must be positive");
    init();
    EPS.store(v.to_bits(), Ordering::SeqCst);
}
