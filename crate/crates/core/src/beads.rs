//! Poisson–Dirichlet stick-breaking and (α, θ)-strings of beads.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::measure::{uniformize, Atom1D, FadMeasure1D};

/// Smallest number of ranked masses accepted by the diversity estimator.
pub const MIN_DIVERSITY_ATOMS: usize = 10;

/// Nonincreasing positive masses plus the unallocated remainder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedMasses {
    masses: Vec<f64>,
    residual: f64,
}

impl RankedMasses {
    /// Sorts `masses` decreasingly and drops zeros.
    pub fn new(mut masses: Vec<f64>, residual: f64) -> Result<Self> {
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) || !(residual.is_finite() && residual >= 0.0) {
            return Err(Error::InvalidMeasure("masses must be finite and nonnegative".into()));
        }
        masses.retain(|&m| m > 0.0);
        masses.sort_by(|a, b| b.total_cmp(a));
        Ok(RankedMasses { masses, residual })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.residual
    }
}

fn check_params(alpha: f64, theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha)
        || theta.partial_cmp(&-alpha) != Some(std::cmp::Ordering::Greater)
        || !theta.is_finite()
    {
        return Err(Error::Domain(format!("need 0 <= alpha < 1 and theta > -alpha, got alpha={alpha}, theta={theta}")));
    }
    Ok(())
}

/// The first `truncation` GEM(α, θ) sticks, ranked; the unbroken remainder of
/// the stick becomes the residual.
pub fn sample_poisson_dirichlet<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    truncation: usize,
    rng: &mut R,
) -> Result<RankedMasses> {
    check_params(alpha, theta)?;
    if truncation == 0 {
        return Err(Error::Domain("truncation must be at least 1".into()));
    }
    let mut remaining = 1.0f64;
    let mut masses = Vec::with_capacity(truncation);
    for i in 1..=truncation {
        let b = theta + i as f64 * alpha;
        let w = Beta::new(1.0 - alpha, b).map_err(|e| Error::Domain(format!("Beta(1-alpha, {b}): {e}")))?.sample(rng);
        let w = if w.is_nan() { 1.0 } else { w };
        masses.push(remaining * w);
        remaining *= 1.0 - w;
    }
    RankedMasses::new(masses, remaining)
}

/// Average of `n · P_n^α · Γ(1-α)` over ranks `n ∈ [⌈N/2⌉, N]`.
pub fn estimate_alpha_diversity(masses: &RankedMasses, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let p = masses.masses();
    if p.len() < MIN_DIVERSITY_ATOMS {
        return Err(Error::TooFewAtoms { need: MIN_DIVERSITY_ATOMS, have: p.len() });
    }
    Ok(diversity_window(p, alpha, p.len().div_ceil(2), p.len()))
}

/// The estimator averaged over ranks `lo..=hi` (1-based).
pub fn diversity_window(p: &[f64], alpha: f64, lo: usize, hi: usize) -> f64 {
    let g = gamma(1.0 - alpha);
    let sum: f64 = (lo..=hi).map(|n| n as f64 * p[n - 1].powf(alpha)).sum();
    g * sum / (hi - lo + 1) as f64
}

/// Atoms scattered uniformly on `[0, L]`, plus the residual at `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StringOfBeads {
    pub diversity: f64,
    /// `(location, mass)` in sampling order.
    pub atoms: Vec<(f64, f64)>,
    pub residual: f64,
}

impl StringOfBeads {
    /// The string as a measure on `[0, L]`.
    pub fn to_measure(&self) -> Result<FadMeasure1D> {
        let mut atoms: Vec<Atom1D> = self.atoms.iter().map(|&(x, m)| Atom1D::new(x, m)).collect();
        if self.residual > 0.0 {
            atoms.push(Atom1D::new(self.diversity, self.residual));
        }
        FadMeasure1D::new(atoms, vec![])
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.residual
    }
}

/// Ranked PD(α, θ) masses at i.i.d. uniform positions on `[0, L]`, with `L`
/// the estimated α-diversity of the masses.
pub fn sample_string_of_beads<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    truncation: usize,
    rng: &mut R,
) -> Result<StringOfBeads> {
    let ranked = sample_poisson_dirichlet(alpha, theta, truncation, rng)?;
    let diversity = estimate_alpha_diversity(&ranked, alpha)?;
    let atoms = ranked.masses().iter().map(|&m| (rng.random::<f64>() * diversity, m)).collect();
    Ok(StringOfBeads { diversity, atoms, residual: ranked.residual() })
}

/// Uniformization of the string's measure: purely atomic, same masses, in
/// the same left-to-right order.
pub fn uniformized_string(s: &StringOfBeads) -> Result<FadMeasure1D> {
    uniformize(&s.to_measure()?)
}
