//! Finite-atoms-plus-density ("FAD") measures on the line and on trees.
//!
//! Every measure here is a finite list of atoms plus a finite list of
//! segments carrying length measure. Uniformization, the open-set bijection
//! and the fat Cantor family all stay inside this class.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iptree::IpTree;
use crate::l1geom::{Arc, L1Point};
use crate::tol::eps_tol;

/// Whether an atom may still be crushed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomTag {
    #[default]
    Pending,
    Resolved,
}

impl AtomTag {
    fn merge(self, other: AtomTag) -> AtomTag {
        if self == AtomTag::Pending || other == AtomTag::Pending {
            AtomTag::Pending
        } else {
            AtomTag::Resolved
        }
    }
}

/// An atom of a measure on the line, serialized as `[loc, mass, tag]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom1D(pub f64, pub f64, #[serde(default)] pub AtomTag);

impl Atom1D {
    pub fn new(loc: f64, mass: f64) -> Self {
        Atom1D(loc, mass, AtomTag::Pending)
    }
    pub fn loc(&self) -> f64 {
        self.0
    }
    pub fn mass(&self) -> f64 {
        self.1
    }
    pub fn tag(&self) -> AtomTag {
        self.2
    }
}

/// A measure on ℝ made of atoms and half-open unit-rate segments `[a, b)`.
///
/// Atoms are sorted by location with coincident atoms merged; segments are
/// sorted, pairwise disjoint, and touching segments are merged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFad")]
pub struct FadMeasure1D {
    atoms: Vec<Atom1D>,
    segments: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct RawFad {
    #[serde(default)]
    atoms: Vec<Atom1D>,
    #[serde(default)]
    segments: Vec<(f64, f64)>,
}

impl TryFrom<RawFad> for FadMeasure1D {
    type Error = Error;
    fn try_from(r: RawFad) -> Result<Self> {
        FadMeasure1D::new(r.atoms, r.segments)
    }
}

impl FadMeasure1D {
    pub fn new(mut atoms: Vec<Atom1D>, mut segments: Vec<(f64, f64)>) -> Result<Self> {
        for a in &atoms {
            if !a.0.is_finite() || !(a.1.is_finite() && a.1 > 0.0) {
                return Err(Error::InvalidMeasure(format!("bad atom {a:?}")));
            }
        }
        for &(a, b) in &segments {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidMeasure(format!("bad segment [{a}, {b})")));
            }
        }
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<Atom1D> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == a.0 => {
                    last.1 += a.1;
                    last.2 = last.2.merge(a.2);
                }
                _ => merged.push(a),
            }
        }
        segments.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut segs: Vec<(f64, f64)> = Vec::with_capacity(segments.len());
        for (a, b) in segments {
            match segs.last_mut() {
                Some(last) if a < last.1 => {
                    return Err(Error::InvalidMeasure(format!(
                        "segments [{}, {}) and [{a}, {b}) overlap",
                        last.0, last.1
                    )))
                }
                Some(last) if a == last.1 => last.1 = b,
                _ => segs.push((a, b)),
            }
        }
        Ok(FadMeasure1D { atoms: merged, segments: segs })
    }

    /// Length measure on `[a, b)`.
    pub fn lebesgue(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![], vec![(a, b)])
    }

    /// A single atom of mass 1.
    pub fn dirac(loc: f64) -> Self {
        FadMeasure1D { atoms: vec![Atom1D::new(loc, 1.0)], segments: vec![] }
    }

    pub fn atoms(&self) -> &[Atom1D] {
        &self.atoms
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn lebesgue_mass(&self) -> f64 {
        self.segments.iter().map(|&(a, b)| b - a).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.lebesgue_mass()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= eps_tol()
    }

    /// Largest point of the closed support.
    pub fn support_max(&self) -> f64 {
        let a = self.atoms.last().map(|a| a.0).unwrap_or(f64::NEG_INFINITY);
        let s = self.segments.last().map(|s| s.1).unwrap_or(f64::NEG_INFINITY);
        a.max(s)
    }

    /// Mass of `(-∞, x)`.
    pub fn mass_below(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().take_while(|a| a.0 < x).map(|a| a.1).sum();
        let dens: f64 = self.segments.iter().take_while(|s| s.0 < x).map(|&(a, b)| b.min(x) - a).sum();
        atoms + dens
    }

    /// Atoms and segments in left-to-right order; an atom sorts before a
    /// segment starting at the same point, and segments are split at atoms
    /// lying strictly inside them.
    fn pieces(&self) -> Vec<Piece> {
        let mut out: Vec<Piece> = self.atoms.iter().map(|&a| Piece::Atom(a)).collect();
        for &(a, b) in &self.segments {
            let mut start = a;
            for at in self.atoms.iter().filter(|at| at.0 > a && at.0 < b) {
                out.push(Piece::Seg(start, at.0));
                start = at.0;
            }
            out.push(Piece::Seg(start, b));
        }
        out.sort_by(|x, y| {
            x.loc().total_cmp(&y.loc()).then_with(|| match (x, y) {
                (Piece::Atom(_), Piece::Seg(..)) => Ordering::Less,
                (Piece::Seg(..), Piece::Atom(_)) => Ordering::Greater,
                _ => Ordering::Equal,
            })
        });
        out
    }
}

#[derive(Clone, Copy)]
enum Piece {
    Atom(Atom1D),
    Seg(f64, f64),
}

impl Piece {
    fn loc(&self) -> f64 {
        match self {
            Piece::Atom(a) => a.0,
            Piece::Seg(a, _) => *a,
        }
    }
}

/// Whether `q[0, x) = x` at every point of the support of `q`.
///
/// Checked at each atom and at both ends of each segment; the unit density
/// rate carries the identity through segment interiors.
pub fn is_uniformized(q: &FadMeasure1D) -> Result<bool> {
    if !q.is_probability() {
        return Err(Error::NotProbability(q.total_mass()));
    }
    let tol = eps_tol();
    if q.atoms.first().is_some_and(|a| a.0 < 0.0) || q.segments.first().is_some_and(|s| s.0 < 0.0) {
        return Ok(false);
    }
    // An atom strictly inside a segment breaks the identity just right of it.
    for a in &q.atoms {
        if q.segments.iter().any(|&(s, e)| a.0 > s && a.0 < e) {
            return Ok(false);
        }
    }
    let mut c = 0.0;
    for piece in q.pieces() {
        match piece {
            Piece::Atom(a) => {
                if (c - a.0).abs() > tol {
                    return Ok(false);
                }
                c += a.1;
            }
            Piece::Seg(a, b) => {
                if (c - a).abs() > tol {
                    return Ok(false);
                }
                c += b - a;
                if (c - b).abs() > tol {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// The uniformization of a probability measure on ℝ.
///
/// Each piece is moved so that it starts at the mass strictly to its left:
/// an atom of mass `w` with `F(x-) = c` becomes `w·δ_c`, a segment of length
/// `ℓ` becomes length measure on `[c, c+ℓ)`. Pieces already in place are
/// copied, which makes the map exactly idempotent.
pub fn uniformize(mu: &FadMeasure1D) -> Result<FadMeasure1D> {
    if !mu.is_probability() {
        return Err(Error::NotProbability(mu.total_mass()));
    }
    let mut atoms = Vec::with_capacity(mu.atoms.len());
    let mut segments = Vec::with_capacity(mu.segments.len());
    let mut c = 0.0f64;
    for piece in mu.pieces() {
        match piece {
            Piece::Atom(a) => {
                atoms.push(Atom1D(c, a.1, a.2));
                c += a.1;
            }
            Piece::Seg(a, b) => {
                if c == a {
                    segments.push((a, b));
                    c = b;
                } else {
                    let end = c + (b - a);
                    segments.push((c, end));
                    c = end;
                }
            }
        }
    }
    FadMeasure1D::new(atoms, segments)
}

/// A finite disjoint union of open intervals in `(0, 1)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct OpenSubset01 {
    intervals: Vec<(f64, f64)>,
}

impl OpenSubset01 {
    /// Intervals must satisfy `0 ≤ a < b ≤ 1` and be sorted and disjoint.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev = 0.0f64;
        for &(a, b) in &intervals {
            if !(a >= 0.0 && a < b && b <= 1.0) {
                return Err(Error::InvalidOpenSet(format!("bad interval ({a}, {b})")));
            }
            if a < prev {
                return Err(Error::InvalidOpenSet(format!("interval ({a}, {b}) overlaps or is out of order")));
            }
            prev = b;
        }
        Ok(OpenSubset01 { intervals })
    }

    pub fn empty() -> Self {
        OpenSubset01::default()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).sum()
    }
}

impl TryFrom<Vec<(f64, f64)>> for OpenSubset01 {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        OpenSubset01::new(v)
    }
}

impl From<OpenSubset01> for Vec<(f64, f64)> {
    fn from(u: OpenSubset01) -> Self {
        u.intervals
    }
}

/// The uniformized measure whose support has complement `u` in `[0, 1)`:
/// an atom of mass `b - a` at each left end `a`, plus length measure on
/// `[0,1) \ u`.
pub fn open_set_to_uniformized(u: &OpenSubset01) -> FadMeasure1D {
    let mut atoms = Vec::with_capacity(u.intervals.len());
    let mut segments = Vec::with_capacity(u.intervals.len() + 1);
    let mut prev = 0.0f64;
    for &(a, b) in &u.intervals {
        if prev < a {
            segments.push((prev, a));
        }
        atoms.push(Atom1D::new(a, b - a));
        prev = b;
    }
    if prev < 1.0 {
        segments.push((prev, 1.0));
    }
    FadMeasure1D { atoms, segments }
}

/// Inverse of [`open_set_to_uniformized`]: each atom opens a gap that runs to
/// the next support point (or to 1).
pub fn uniformized_to_open_set(q: &FadMeasure1D) -> Result<OpenSubset01> {
    if !is_uniformized(q)? {
        return Err(Error::NotUniformized);
    }
    let mut intervals = Vec::with_capacity(q.atoms.len());
    let mut seg = 0usize;
    for (k, a) in q.atoms.iter().enumerate() {
        while seg < q.segments.len() && q.segments[seg].0 <= a.0 {
            seg += 1;
        }
        let next_atom = q.atoms.get(k + 1).map(|n| n.0).unwrap_or(1.0);
        let next_seg = q.segments.get(seg).map(|s| s.0).unwrap_or(1.0);
        let end = next_atom.min(next_seg).min(1.0);
        if end > a.0 {
            intervals.push((a.0, end));
        }
    }
    OpenSubset01::new(intervals)
}

/// Deepest supported fat Cantor level (2^depth components).
pub const MAX_FAT_CANTOR_DEPTH: u32 = 24;

/// Open intervals removed in the first `depth` levels of the fat Cantor
/// construction, in increasing order.
pub fn fat_cantor_removed(depth: u32) -> Result<OpenSubset01> {
    if depth == 0 || depth > MAX_FAT_CANTOR_DEPTH {
        return Err(Error::Domain(format!("fat Cantor depth must be in 1..={MAX_FAT_CANTOR_DEPTH}, got {depth}")));
    }
    // Components are (start, length); all values are dyadic, so exact.
    let mut comps: Vec<f64> = vec![0.0];
    let mut len = 1.0f64;
    let mut removed: Vec<(f64, f64)> = Vec::new();
    for n in 0..depth {
        let r = 0.25f64.powi(n as i32 + 1);
        let child = (len - r) / 2.0;
        let mut next = Vec::with_capacity(comps.len() * 2);
        for &c in &comps {
            removed.push((c + child, c + child + r));
            next.push(c);
            next.push(c + child + r);
        }
        comps = next;
        len = child;
    }
    removed.sort_by(|a, b| a.0.total_cmp(&b.0));
    OpenSubset01::new(removed)
}

/// The uniformized measure of the level-`depth` fat Cantor approximation:
/// length measure on the remaining set plus an atom at the left end of each
/// removed interval carrying its length.
pub fn fat_cantor_measure(depth: u32) -> Result<FadMeasure1D> {
    Ok(open_set_to_uniformized(&fat_cantor_removed(depth)?))
}

/// An atom of a tree measure, serialized as `[point, mass, tag]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeAtom(pub L1Point, pub f64, #[serde(default)] pub AtomTag);

impl TreeAtom {
    pub fn point(&self) -> &L1Point {
        &self.0
    }
    pub fn mass(&self) -> f64 {
        self.1
    }
    pub fn tag(&self) -> AtomTag {
        self.2
    }
}

fn is_one(r: &f64) -> bool {
    *r == 1.0
}

fn one() -> f64 {
    1.0
}

/// A piece of an arc carrying length measure at `rate` (1 in every measure
/// produced by the engine).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityArc {
    #[serde(flatten)]
    pub arc: Arc,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub rate: f64,
}

impl DensityArc {
    pub fn unit(arc: Arc) -> Self {
        DensityArc { arc, rate: 1.0 }
    }
    pub fn mass(&self) -> f64 {
        self.rate * self.arc.length()
    }
}

/// A FAD measure on an embedded tree.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeMeasure {
    #[serde(default)]
    atoms: Vec<TreeAtom>,
    #[serde(default)]
    density_arcs: Vec<DensityArc>,
}

impl TreeMeasure {
    /// Atoms at the same point are merged, keeping first-seen order.
    pub fn new(atoms: Vec<TreeAtom>, density_arcs: Vec<DensityArc>) -> Result<Self> {
        for a in &atoms {
            if !(a.1.is_finite() && a.1 > 0.0) {
                return Err(Error::InvalidMeasure(format!("atom at {} has mass {}", a.0, a.1)));
            }
        }
        for d in &density_arcs {
            if !(d.rate.is_finite() && d.rate > 0.0) {
                return Err(Error::InvalidMeasure(format!("density rate {}", d.rate)));
            }
        }
        let mut index: HashMap<L1Point, usize> = HashMap::with_capacity(atoms.len());
        let mut merged: Vec<TreeAtom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match index.get(&a.0) {
                Some(&k) => {
                    merged[k].1 += a.1;
                    merged[k].2 = merged[k].2.merge(a.2);
                }
                None => {
                    index.insert(a.0.clone(), merged.len());
                    merged.push(a);
                }
            }
        }
        Ok(TreeMeasure { atoms: merged, density_arcs })
    }

    /// Unit atom at the origin.
    pub fn root_atom() -> Self {
        TreeMeasure { atoms: vec![TreeAtom(L1Point::origin(), 1.0, AtomTag::Pending)], density_arcs: vec![] }
    }

    pub fn atoms(&self) -> &[TreeAtom] {
        &self.atoms
    }

    pub fn density_arcs(&self) -> &[DensityArc] {
        &self.density_arcs
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut Vec<TreeAtom> {
        &mut self.atoms
    }

    pub(crate) fn density_arcs_mut(&mut self) -> &mut Vec<DensityArc> {
        &mut self.density_arcs
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn density_mass(&self) -> f64 {
        self.density_arcs.iter().map(DensityArc::mass).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.density_mass()
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.density_arcs.is_empty()
    }

    pub fn atom_at(&self, x: &L1Point) -> Option<&TreeAtom> {
        self.atoms.iter().find(|a| &a.0 == x)
    }
}

/// The three parts of a tree weight: genuine atoms, length measure on the
/// skeleton, and pending atoms standing in for mass that would end up on
/// leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub atomic: TreeMeasure,
    pub skeleton_density: TreeMeasure,
    pub leaf_pending: TreeMeasure,
}

impl Decomposition {
    pub fn masses(&self) -> (f64, f64, f64) {
        (self.atomic.total_mass(), self.skeleton_density.total_mass(), self.leaf_pending.total_mass())
    }
}

/// Split a tree's weight into resolved atoms, density arcs and pending atoms.
pub fn decompose(tree: &IpTree) -> Decomposition {
    let w = tree.weight();
    let (resolved, pending): (Vec<TreeAtom>, Vec<TreeAtom>) =
        w.atoms.iter().cloned().partition(|a| a.2 == AtomTag::Resolved);
    Decomposition {
        atomic: TreeMeasure { atoms: resolved, density_arcs: vec![] },
        skeleton_density: TreeMeasure { atoms: vec![], density_arcs: w.density_arcs.clone() },
        leaf_pending: TreeMeasure { atoms: pending, density_arcs: vec![] },
    }
}
