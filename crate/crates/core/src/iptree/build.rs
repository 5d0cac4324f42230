//! Random and scheduled bead-crushing builds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Grower, IpTree};
use crate::beads::{sample_string_of_beads, uniformized_string};
use crate::error::{Error, Result};
use crate::l1geom::L1Point;
use crate::measure::{fat_cantor_measure, is_uniformized, Atom1D, FadMeasure1D, MAX_FAT_CANTOR_DEPTH};

/// Default number of sticks per random string.
pub const DEFAULT_TRUNCATION: usize = 100;

/// Source of the strings crushed at each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// Uniformized (½, ½)-strings, size-biased sites, full crushes.
    Brownian { truncation: usize },
    /// Uniformized (α, θ)-strings, size-biased sites, full crushes.
    AlphaTheta { alpha: f64, theta: f64, truncation: usize },
    /// The level-`depth` fat Cantor measure, size-biased sites, full crushes.
    FatCantor { depth: u32 },
    /// The given uniformized measures in rotation, always crushing the
    /// heaviest pending atom in full.
    Custom { strings: Vec<FadMeasure1D> },
}

impl Model {
    pub fn brownian() -> Self {
        Model::Brownian { truncation: DEFAULT_TRUNCATION }
    }

    fn validate(&self) -> Result<()> {
        let trunc = |t: usize| {
            if t < crate::beads::MIN_DIVERSITY_ATOMS {
                Err(Error::Domain(format!(
                    "truncation must be at least {}, got {t}",
                    crate::beads::MIN_DIVERSITY_ATOMS
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Model::Brownian { truncation } => trunc(*truncation),
            Model::AlphaTheta { alpha, theta, truncation } => {
                if !(*alpha > 0.0 && *alpha < 1.0 && *theta > -alpha && theta.is_finite()) {
                    return Err(Error::Domain(format!(
                        "need 0 < alpha < 1 and theta > -alpha, got alpha={alpha}, theta={theta}"
                    )));
                }
                trunc(*truncation)
            }
            Model::FatCantor { depth } => {
                if *depth == 0 || *depth > MAX_FAT_CANTOR_DEPTH {
                    return Err(Error::Domain(format!("fat Cantor depth must be in 1..={MAX_FAT_CANTOR_DEPTH}")));
                }
                Ok(())
            }
            Model::Custom { strings } => {
                if strings.is_empty() {
                    return Err(Error::Domain("custom model needs at least one string".into()));
                }
                for q in strings {
                    if !is_uniformized(q)? {
                        return Err(Error::NotUniformized);
                    }
                }
                Ok(())
            }
        }
    }
}

fn random_string(alpha: f64, theta: f64, truncation: usize, rng: &mut ChaCha8Rng) -> Result<FadMeasure1D> {
    let mut child = ChaCha8Rng::seed_from_u64(rng.random());
    uniformized_string(&sample_string_of_beads(alpha, theta, truncation, &mut child)?)
}

/// Run `steps` crushes of `model` from the one-point tree. The build stops
/// early if no pending atom is left. Builds with the same seed share their
/// prefixes: the first `k` steps of a longer build equal a `k`-step build.
pub fn build_model(model: &Model, steps: usize, seed: u64) -> Result<IpTree> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Grower::new(IpTree::new())?;
    let cantor = match model {
        Model::FatCantor { depth } => Some(fat_cantor_measure(*depth)?),
        _ => None,
    };
    for n in 0..steps {
        let site = match model {
            Model::Custom { .. } => g.largest_pending(),
            _ => g.pick_pending(&mut rng),
        };
        let Some(site) = site else { break };
        let m = g.atom(&site).expect("picked atom exists").mass();
        let q = match model {
            Model::Brownian { truncation } => random_string(0.5, 0.5, *truncation, &mut rng)?,
            Model::AlphaTheta { alpha, theta, truncation } => random_string(*alpha, *theta, *truncation, &mut rng)?,
            Model::FatCantor { .. } => cantor.clone().expect("set above"),
            Model::Custom { strings } => strings[n % strings.len()].clone(),
        };
        g.crush(&site, m, &q, None)?;
    }
    Ok(g.finish())
}

/// `raw` (purely atomic) with atoms merged wherever their uniformized
/// locations coincide in floating point, so that its atoms match those of
/// its uniformization one to one.
fn merge_uniform_collisions(raw: &FadMeasure1D) -> Result<FadMeasure1D> {
    let mut out: Vec<Atom1D> = Vec::with_capacity(raw.atoms().len());
    let (mut c, mut last) = (0.0f64, f64::NAN);
    for a in raw.atoms() {
        match out.last_mut() {
            Some(prev) if c == last => prev.1 += a.mass(),
            _ => {
                out.push(*a);
                last = c;
            }
        }
        c += a.mass();
    }
    FadMeasure1D::new(out, raw.segments().to_vec())
}

/// Two trees grown from the same random strings: `crt` hangs each raw
/// string at scale `√m` (`m` the crushed mass), `ip` hangs its
/// uniformization by ordinary crushing. Atoms correspond one to one in
/// left-to-right string order.
pub struct CoupledBuild {
    crt: Grower,
    ip: Grower,
    /// `(crt atom, ip atom)` pairs of still-pending atoms.
    partner: std::collections::HashMap<L1Point, L1Point>,
    rng: ChaCha8Rng,
    alpha: f64,
    theta: f64,
    truncation: usize,
}

impl CoupledBuild {
    pub fn new(alpha: f64, theta: f64, truncation: usize, seed: u64) -> Result<Self> {
        Model::AlphaTheta { alpha, theta, truncation }.validate()?;
        let mut partner = std::collections::HashMap::new();
        partner.insert(L1Point::origin(), L1Point::origin());
        Ok(CoupledBuild {
            crt: Grower::new(IpTree::new())?,
            ip: Grower::new(IpTree::new())?,
            partner,
            rng: ChaCha8Rng::seed_from_u64(seed),
            alpha,
            theta,
            truncation,
        })
    }

    /// One coupled step: a size-biased site on the `crt` side and its partner
    /// on the `ip` side are crushed with the same string.
    pub fn step(&mut self) -> Result<()> {
        let site = self.crt.pick_pending(&mut self.rng).ok_or_else(|| Error::Domain("no pending atom".into()))?;
        let twin = self.partner.remove(&site).expect("every pending crt atom has a partner");
        let mut child = ChaCha8Rng::seed_from_u64(self.rng.random());
        let s = sample_string_of_beads(self.alpha, self.theta, self.truncation, &mut child)?;
        let raw = merge_uniform_collisions(&s.to_measure()?)?;
        let q = uniformized_string(&s)?;
        let m = self.crt.atom(&site).expect("picked").mass();
        let a = self.crt.graft_scaled(&site, &raw, m.sqrt())?;
        let m_ip = self.ip.atom(&twin).expect("partner exists").mass();
        let (_, b) = self.ip.crush_traced(&twin, m_ip, &q, None)?;
        if a.len() != b.len() {
            return Err(Error::InvalidTree("coupled strings have different atom counts".into()));
        }
        // Atoms closer than the float spacing land on one point. A run of
        // string atoms that collides on either side is folded onto its
        // lowest atom on both sides.
        let mut i = 0;
        while i < a.len() {
            let mut j = i + 1;
            while j < a.len() && (a[j] == a[j - 1] || b[j] == b[j - 1]) {
                j += 1;
            }
            for t in i + 1..j {
                if a[t] != a[t - 1] {
                    self.crt.fold_atom(&a[t], &a[i])?;
                }
                if b[t] != b[t - 1] {
                    self.ip.fold_atom(&b[t], &b[i])?;
                }
            }
            self.partner.insert(a[i].clone(), b[i].clone());
            i = j;
        }
        Ok(())
    }

    pub fn crt(&self) -> &IpTree {
        &self.crt.tree
    }

    pub fn ip(&self) -> &IpTree {
        &self.ip.tree
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::uniformize;

    #[test]
    fn collisions_merge_like_uniformization() {
        let raw =
            FadMeasure1D::new(vec![Atom1D::new(0.1, 0.5), Atom1D::new(0.2, 1e-20), Atom1D::new(0.3, 0.5)], vec![])
                .unwrap();
        let q = uniformize(&raw).unwrap();
        assert_eq!(q.atoms().len(), 2);
        let m = merge_uniform_collisions(&raw).unwrap();
        assert_eq!(m.atoms().iter().map(|a| a.loc()).collect::<Vec<_>>(), vec![0.1, 0.2]);
        let plain = FadMeasure1D::new(vec![Atom1D::new(0.1, 0.25), Atom1D::new(0.2, 0.75)], vec![]).unwrap();
        assert_eq!(merge_uniform_collisions(&plain).unwrap(), plain);
    }
}
