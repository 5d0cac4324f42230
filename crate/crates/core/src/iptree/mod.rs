//! Embedded interval-partition trees and the bead-crushing engine.

mod build;
pub mod index;

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use build::{build_model, CoupledBuild, Model, DEFAULT_TRUNCATION};
use index::{Loc, TreeIndex};

use crate::error::{Error, Result};
use crate::l1geom::{is_on_root_path, Arc, L1Point};
use crate::measure::{is_uniformized, AtomTag, DensityArc, FadMeasure1D, TreeAtom, TreeMeasure};
use crate::tol::eps_tol;

/// One recorded bead-crushing step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrushStep {
    pub site: L1Point,
    pub site_mass: f64,
    pub crushed_mass: f64,
    /// Fringe mass at the site before the step.
    pub site_fringe: f64,
    pub string: FadMeasure1D,
    pub new_axis: u32,
    pub paused: bool,
}

/// A rooted weighted tree embedded in ℓ₁ as a union of axis-parallel arcs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTree")]
pub struct IpTree {
    arcs: Vec<Arc>,
    weight: TreeMeasure,
    #[serde(default)]
    build_log: Vec<CrushStep>,
}

#[derive(Deserialize)]
struct RawTree {
    arcs: Vec<Arc>,
    weight: TreeMeasure,
    #[serde(default)]
    build_log: Vec<CrushStep>,
}

impl TryFrom<RawTree> for IpTree {
    type Error = Error;

    fn try_from(r: RawTree) -> Result<Self> {
        IpTree::from_parts(r.arcs, r.weight, r.build_log)
    }
}

impl Default for IpTree {
    fn default() -> Self {
        Self::new()
    }
}

/// Kind of a special point. When several apply, atom wins over branch
/// point, which wins over leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Atom,
    Branch,
    IsolatedLeaf,
}

/// `p[[0,x]]`, `p{x}` and `p(F_x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassStats {
    pub path_mass: f64,
    pub atom_mass: f64,
    pub fringe_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialPoint {
    pub point: L1Point,
    pub kind: PointKind,
    pub stats: MassStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Structure,
    Mass,
    Rate,
    Spanning,
    Spacing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Option<L1Point>,
    pub residual: f64,
    pub detail: String,
}

/// Result of [`IpTree::is_ip_tree`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpCheck {
    pub valid: bool,
    /// Largest spacing residual over all checked points.
    pub max_residual: f64,
    pub violations: Vec<Violation>,
}

impl IpTree {
    /// The one-point tree carrying a pending unit atom at the origin.
    pub fn new() -> Self {
        IpTree { arcs: vec![], weight: TreeMeasure::root_atom(), build_log: vec![] }
    }

    /// Assemble a tree from parts; the arc set must be structurally sound and
    /// carry the whole weight.
    pub fn from_parts(arcs: Vec<Arc>, weight: TreeMeasure, build_log: Vec<CrushStep>) -> Result<Self> {
        TreeIndex::build(&arcs, &weight)?;
        Ok(IpTree { arcs, weight, build_log })
    }

    /// The one-dimensional tree `[0, L]·e₁` carrying `q` lifted to axis 1,
    /// where `L` is the largest support point of `q`.
    pub fn from_line_measure(q: &FadMeasure1D) -> Result<Self> {
        let on = |x: f64| L1Point::on_axis(1, x);
        if q.atoms().iter().any(|a| a.loc() < 0.0) || q.segments().iter().any(|s| s.0 < 0.0) {
            return Err(Error::Domain("measure has support below 0".into()));
        }
        let l = q.support_max();
        let arcs = if l > 0.0 { vec![Arc::new(L1Point::origin(), on(l)?, 1)?] } else { vec![] };
        let atoms =
            q.atoms().iter().map(|a| Ok(TreeAtom(on(a.loc())?, a.mass(), a.tag()))).collect::<Result<Vec<_>>>()?;
        let dens = q
            .segments()
            .iter()
            .map(|&(s, e)| Ok(DensityArc::unit(Arc::new(on(s)?, on(e)?, 1)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(arcs, TreeMeasure::new(atoms, dens)?, vec![])
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn weight(&self) -> &TreeMeasure {
        &self.weight
    }

    pub fn build_log(&self) -> &[CrushStep] {
        &self.build_log
    }

    pub fn index(&self) -> Result<TreeIndex> {
        TreeIndex::build(&self.arcs, &self.weight)
    }

    /// Largest axis used by any arc (0 for the one-point tree).
    pub fn max_axis(&self) -> u32 {
        self.arcs.iter().map(|a| a.axis).max().unwrap_or(0)
    }

    /// Whether `x` lies on the arc set.
    pub fn contains(&self, x: &L1Point) -> bool {
        x.is_origin() || self.arcs.iter().any(|a| a.position_of(x).is_some())
    }

    /// Crush `a` units of the pending atom at `site` into a new branch
    /// carrying the uniformized measure `q`, on the next fresh axis.
    pub fn crush(&self, site: &L1Point, a: f64, q: &FadMeasure1D) -> Result<IpTree> {
        let mut g = Grower::new(self.clone())?;
        g.crush(site, a, q, None)?;
        Ok(g.finish())
    }

    /// As [`IpTree::crush`] with an explicit axis for the new branch.
    pub fn crush_on_axis(&self, site: &L1Point, a: f64, q: &FadMeasure1D, axis: u32) -> Result<IpTree> {
        let mut g = Grower::new(self.clone())?;
        g.crush(site, a, q, Some(axis))?;
        Ok(g.finish())
    }

    /// Rebuild a tree from the one-point tree by replaying recorded steps.
    pub fn replay(log: &[CrushStep]) -> Result<IpTree> {
        let mut g = Grower::new(IpTree::new())?;
        for s in log {
            g.crush(&s.site, s.crushed_mass, &s.string, Some(s.new_axis))?;
        }
        Ok(g.finish())
    }

    /// `p(F_x)` from the definition: all mass at or beyond `x`.
    pub fn fringe_mass(&self, x: &L1Point) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OffTree(x.to_string()));
        }
        let atoms: f64 = self.weight.atoms().iter().filter(|a| is_on_root_path(x, a.point())).map(|a| a.mass()).sum();
        let dens: f64 = self
            .weight
            .density_arcs()
            .iter()
            .map(|d| {
                let base = d.arc.base();
                if is_on_root_path(x, &base) {
                    d.mass()
                } else if x.last_axis() == Some(d.arc.axis) && x.truncated_below(d.arc.axis) == base {
                    let p = x.coord(d.arc.axis);
                    d.rate * (d.arc.end() - d.arc.start().max(p)).max(0.0)
                } else {
                    0.0
                }
            })
            .sum();
        Ok(atoms + dens)
    }

    /// `p[[0, x]]` from the definition: all mass on the root path of `x`.
    pub fn path_mass(&self, x: &L1Point) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OffTree(x.to_string()));
        }
        let atoms: f64 = self.weight.atoms().iter().filter(|a| is_on_root_path(a.point(), x)).map(|a| a.mass()).sum();
        let dens: f64 = self
            .weight
            .density_arcs()
            .iter()
            .map(|d| {
                let i = d.arc.axis;
                if x.truncated_below(i) == d.arc.base() {
                    d.rate * (d.arc.end().min(x.coord(i)) - d.arc.start()).max(0.0)
                } else {
                    0.0
                }
            })
            .sum();
        Ok(atoms + dens)
    }

    /// Check the Spanning and Spacing conditions, unit total mass and unit
    /// density rates.
    pub fn is_ip_tree(&self) -> IpCheck {
        let tol = eps_tol();
        let mut out = IpCheck { valid: true, max_residual: 0.0, violations: vec![] };
        let ix = match self.index() {
            Ok(ix) => ix,
            Err(e) => {
                out.valid = false;
                out.violations.push(Violation {
                    kind: ViolationKind::Structure,
                    location: None,
                    residual: f64::NAN,
                    detail: e.to_string(),
                });
                return out;
            }
        };
        let flag = |out: &mut IpCheck, kind, location: Option<L1Point>, residual: f64, detail: String| {
            out.valid = false;
            out.violations.push(Violation { kind, location, residual, detail });
        };

        let total_res = (ix.total - 1.0).abs();
        if total_res > tol {
            flag(&mut out, ViolationKind::Mass, None, total_res, format!("total mass {}", ix.total));
        }
        for d in self.weight.density_arcs() {
            let r = (d.rate - 1.0).abs();
            if r > tol {
                flag(&mut out, ViolationKind::Rate, Some(d.arc.lower.clone()), r, format!("density rate {}", d.rate));
            }
        }

        // Spanning.
        if ix.root_atom == 0.0 {
            let in_support = ix.root_children.iter().any(|&c| ix.lines[c].density_starts_at(0.0));
            if ix.root_children.len() <= 1 && !in_support {
                flag(
                    &mut out,
                    ViolationKind::Spanning,
                    Some(L1Point::origin()),
                    0.0,
                    "root leaf outside the support".into(),
                );
            }
        }
        for line in &ix.lines {
            let e = line.end;
            if line.children_at(e).is_empty() && line.atom_at(e).is_none() && !line.density_ends_at(e) {
                flag(&mut out, ViolationKind::Spanning, Some(line.point_at(e)), 0.0, "leaf outside the support".into());
            }
        }

        // Spacing.
        let mut points: Vec<Loc> = vec![];
        if ix.root_atom > 0.0 || ix.root_children.len() >= 3 {
            points.push(Loc::Root);
        }
        for (l, line) in ix.lines.iter().enumerate() {
            points.extend(line.atoms.iter().map(|a| Loc::On(l, a.0)));
            let mut last = f64::NAN;
            for &(p, _) in &line.children {
                if p == last {
                    continue;
                }
                last = p;
                if p < line.end || line.children_at(p).len() >= 2 {
                    points.push(Loc::On(l, p));
                }
            }
            for &(s, e, _) in &line.density {
                points.push(if s == 0.0 { line.parent } else { Loc::On(l, s) });
                points.push(Loc::On(l, e));
            }
        }
        for loc in points {
            let r = (ix.norm(loc) + ix.fringe(loc) - 1.0).abs();
            out.max_residual = out.max_residual.max(r);
            if r > tol {
                let x = ix.point(loc);
                flag(
                    &mut out,
                    ViolationKind::Spacing,
                    Some(x.clone()),
                    r,
                    format!("norm + fringe mass off by {r:e} at {x}"),
                );
            }
        }
        out
    }

    /// Atoms, branch points and isolated leaves with their mass statistics.
    /// Fails unless the tree passes [`IpTree::is_ip_tree`].
    pub fn special_points(&self) -> Result<Vec<SpecialPoint>> {
        let check = self.is_ip_tree();
        if !check.valid {
            return Err(Error::InvalidTree(check.violations.first().map(|v| v.detail.clone()).unwrap_or_default()));
        }
        self.special_points_unchecked()
    }

    /// [`IpTree::special_points`] without the IP-tree precondition; needs only
    /// a structurally sound arc set.
    pub fn special_points_unchecked(&self) -> Result<Vec<SpecialPoint>> {
        let ix = self.index()?;
        Ok(special_locs(&ix)
            .into_iter()
            .map(|(loc, kind)| SpecialPoint { point: ix.point(loc), kind, stats: stats_at(&ix, loc) })
            .collect())
    }

    /// `√π·√h·#{x ∈ [[0,y]] : p_y{x} > h}`, where `p_y{x}` is the mass of the
    /// bush hanging off the spine `[[0,y]]` at `x`.
    pub fn spinal_diversity(&self, y: &L1Point, h: f64) -> Result<f64> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Domain(format!("h must be positive, got {h}")));
        }
        let ix = self.index()?;
        Ok(std::f64::consts::PI.sqrt() * h.sqrt() * spinal_count(&ix, y, h)? as f64)
    }

    /// `n` independent draws from the weight.
    pub fn sample_points<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<L1Point>> {
        let atoms = self.weight.atoms();
        let dens = self.weight.density_arcs();
        let weights: Vec<f64> = atoms.iter().map(|a| a.mass()).chain(dens.iter().map(|d| d.mass())).collect();
        let pick = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidMeasure(format!("cannot sample from weight: {e}")))?;
        Ok((0..n)
            .map(|_| {
                let k = pick.sample(rng);
                if k < atoms.len() {
                    atoms[k].point().clone()
                } else {
                    let arc = &dens[k - atoms.len()].arc;
                    let u: f64 = rng.random();
                    let s = (arc.start() + u * arc.length()).min(arc.end());
                    if s == 0.0 {
                        arc.base()
                    } else {
                        arc.point_at(s)
                    }
                }
            })
            .collect())
    }
}

/// Mass statistics at an indexed location.
pub(crate) fn stats_at(ix: &TreeIndex, loc: Loc) -> MassStats {
    MassStats { path_mass: ix.path_mass(loc), atom_mass: ix.atom_mass(loc), fringe_mass: ix.fringe(loc) }
}

/// Special points in a deterministic order: root first, then line by line
/// with positions increasing.
pub(crate) fn special_locs(ix: &TreeIndex) -> Vec<(Loc, PointKind)> {
    let mut out = vec![];
    if ix.root_atom > 0.0 {
        out.push((Loc::Root, PointKind::Atom));
    } else if ix.massive_directions(Loc::Root) >= 3 {
        out.push((Loc::Root, PointKind::Branch));
    }
    for (l, line) in ix.lines.iter().enumerate() {
        let mut pos: Vec<f64> = line.atoms.iter().map(|a| a.0).collect();
        pos.extend(line.children.iter().map(|c| c.0));
        pos.push(line.end);
        pos.sort_by(f64::total_cmp);
        pos.dedup();
        for p in pos {
            let loc = Loc::On(l, p);
            if line.atom_at(p).is_some() {
                out.push((loc, PointKind::Atom));
            } else if ix.massive_directions(loc) >= 3 {
                out.push((loc, PointKind::Branch));
            } else if p == line.end && line.children_at(p).is_empty() && line.density_ends_at(p) {
                out.push((loc, PointKind::IsolatedLeaf));
            }
        }
    }
    out
}

fn spinal_count(ix: &TreeIndex, y: &L1Point, h: f64) -> Result<usize> {
    let target = ix.locate(y)?;
    let coords = y.coords();
    let first_line = |k: usize| -> usize {
        let base = L1Point::new(coords[..k].to_vec()).expect("prefix of a valid point");
        ix.line_of(&base, coords[k].0).expect("located point has every spine line")
    };
    let mut count = 0;
    let mut bump = |m: f64| {
        if m > h {
            count += 1;
        }
    };
    if target == Loc::Root {
        bump(ix.total);
        return Ok(count);
    }
    let next0 = first_line(0);
    bump(ix.root_atom + ix.root_children.iter().filter(|&&c| c != next0).map(|&c| ix.lines[c].subtree).sum::<f64>());
    for k in 0..coords.len() {
        let l = first_line(k);
        let line = &ix.lines[l];
        let v = coords[k].1;
        let mut pos: Vec<f64> = line.atoms.iter().map(|a| a.0).filter(|&p| p < v).collect();
        pos.extend(line.children.iter().map(|c| c.0).filter(|&p| p < v));
        pos.sort_by(f64::total_cmp);
        pos.dedup();
        for p in pos {
            let kids: f64 = line.children_at(p).iter().map(|&(_, c)| ix.lines[c].subtree).sum();
            bump(line.atom_at(p).map(|a| a.0).unwrap_or(0.0) + kids);
        }
        if k + 1 == coords.len() {
            bump(ix.fringe(target));
        } else {
            let next = first_line(k + 1);
            let kids: f64 =
                line.children_at(v).iter().filter(|&&(_, c)| c != next).map(|&(_, c)| ix.lines[c].subtree).sum();
            bump(line.atom_at(v).map(|a| a.0).unwrap_or(0.0) + kids + ix.beyond_on_line(l, v));
        }
    }
    Ok(count)
}

/// Mutable tree under construction with per-atom fringe masses cached.
///
/// Fringe masses of existing points never change under crushing, so each
/// atom's fringe is computed once, when the atom is created.
pub(crate) struct Grower {
    tree: IpTree,
    slot: HashMap<L1Point, usize>,
    fringe: Vec<f64>,
    max_axis: u32,
    grafts: usize,
}

impl Grower {
    pub(crate) fn new(tree: IpTree) -> Result<Self> {
        let ix = tree.index()?;
        let mut slot = HashMap::with_capacity(tree.weight.atoms().len());
        let mut fringe = Vec::with_capacity(tree.weight.atoms().len());
        for (k, a) in tree.weight.atoms().iter().enumerate() {
            slot.insert(a.point().clone(), k);
            fringe.push(ix.fringe(ix.locate(a.point())?));
        }
        let max_axis = tree.max_axis();
        Ok(Grower { tree, slot, fringe, max_axis, grafts: 0 })
    }

    pub(crate) fn finish(self) -> IpTree {
        self.tree
    }

    pub(crate) fn atom(&self, x: &L1Point) -> Option<&TreeAtom> {
        self.slot.get(x).map(|&k| &self.tree.weight.atoms()[k])
    }

    /// Size-biased choice among pending atoms.
    pub(crate) fn pick_pending<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<L1Point> {
        let atoms = self.tree.weight.atoms();
        let total: f64 = atoms.iter().filter(|a| a.tag() == AtomTag::Pending).map(|a| a.mass()).sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for a in atoms.iter().filter(|a| a.tag() == AtomTag::Pending) {
            last = Some(a);
            if u < a.mass() {
                return Some(a.point().clone());
            }
            u -= a.mass();
        }
        last.map(|a| a.point().clone())
    }

    /// Heaviest pending atom (first one on ties).
    pub(crate) fn largest_pending(&self) -> Option<L1Point> {
        let mut best: Option<&TreeAtom> = None;
        for a in self.tree.weight.atoms().iter().filter(|a| a.tag() == AtomTag::Pending) {
            if best.is_none_or(|b| a.mass() > b.mass()) {
                best = Some(a);
            }
        }
        best.map(|a| a.point().clone())
    }

    fn remove_atom(&mut self, k: usize) {
        let atoms = self.tree.weight.atoms_mut();
        let gone = atoms.swap_remove(k);
        self.fringe.swap_remove(k);
        self.slot.remove(gone.point());
        if k < atoms.len() {
            self.slot.insert(atoms[k].point().clone(), k);
        }
    }

    /// Move the mass of the atom at `from` onto the atom at `into`. Cached
    /// fringes stay exact when `into` lies below `from`.
    pub(crate) fn fold_atom(&mut self, from: &L1Point, into: &L1Point) -> Result<()> {
        let k = *self.slot.get(from).ok_or_else(|| Error::OffTree(from.to_string()))?;
        if !self.slot.contains_key(into) {
            return Err(Error::OffTree(into.to_string()));
        }
        let m = self.tree.weight.atoms()[k].mass();
        self.remove_atom(k);
        let j = self.slot[into];
        self.tree.weight.atoms_mut()[j].1 += m;
        Ok(())
    }

    fn add_atom(&mut self, x: L1Point, mass: f64, tag: AtomTag, fringe: f64) {
        if let Some(&k) = self.slot.get(&x) {
            let a = &mut self.tree.weight.atoms_mut()[k];
            a.1 += mass;
            if tag == AtomTag::Pending {
                a.2 = AtomTag::Pending;
            }
            return;
        }
        self.slot.insert(x.clone(), self.tree.weight.atoms().len());
        self.tree.weight.atoms_mut().push(TreeAtom(x, mass, tag));
        self.fringe.push(fringe);
    }

    pub(crate) fn crush(&mut self, site: &L1Point, a: f64, q: &FadMeasure1D, axis: Option<u32>) -> Result<CrushStep> {
        self.crush_traced(site, a, q, axis).map(|r| r.0)
    }

    /// [`Grower::crush`], also returning where each atom of `q` landed.
    pub(crate) fn crush_traced(
        &mut self,
        site: &L1Point,
        a: f64,
        q: &FadMeasure1D,
        axis: Option<u32>,
    ) -> Result<(CrushStep, Vec<L1Point>)> {
        if !is_uniformized(q)? {
            return Err(Error::NotUniformized);
        }
        let k = self.pending_slot(site)?;
        let m = self.tree.weight.atoms()[k].mass();
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Domain(format!("crushed mass must be positive, got {a}")));
        }
        if a > m {
            return Err(Error::CrushTooLarge { crushed: a, site: m });
        }
        // The fringe of an atom is at least its mass; roundoff may say otherwise.
        let f = self.fringe[k].max(m);
        let axis = self.fresh_axis(site, axis)?;
        let phi = |z: f64| f + (z - 1.0) * a;
        let step = CrushStep {
            site: site.clone(),
            site_mass: m,
            crushed_mass: a,
            site_fringe: f,
            string: q.clone(),
            new_axis: axis,
            paused: phi(q.support_max()) <= 0.0,
        };
        let landed = if step.paused {
            q.atoms().iter().map(|_| site.clone()).collect()
        } else {
            self.attach(k, site, a, q, axis, &phi)?
        };
        self.tree.build_log.push(step.clone());
        Ok((step, landed))
    }

    /// Replace the whole atom at `site` by a branch carrying `q` at
    /// coordinates `z·scale`, without the uniformization requirement and
    /// without logging. Used for trees that are not IP trees.
    pub(crate) fn graft_scaled(&mut self, site: &L1Point, q: &FadMeasure1D, scale: f64) -> Result<Vec<L1Point>> {
        let k = self.pending_slot(site)?;
        let m = self.tree.weight.atoms()[k].mass();
        if !(q.is_probability() && q.support_max() > 0.0 && scale > 0.0) {
            return Err(Error::Domain("graft needs a probability measure with positive extent".into()));
        }
        let axis = self.fresh_axis(site, None)?;
        let landed = self.attach(k, site, m, q, axis, &|z| z * scale)?;
        self.grafts += 1;
        Ok(landed)
    }

    fn pending_slot(&self, site: &L1Point) -> Result<usize> {
        match self.slot.get(site) {
            Some(&k) if self.tree.weight.atoms()[k].tag() == AtomTag::Pending => Ok(k),
            _ => Err(Error::NotPendingAtom(site.to_string())),
        }
    }

    fn fresh_axis(&self, site: &L1Point, axis: Option<u32>) -> Result<u32> {
        let steps = (self.tree.build_log.len() + self.grafts) as u32;
        match axis {
            None => Ok((steps + 1).max(self.max_axis + 1)),
            Some(ax) => {
                if ax == 0
                    || site.last_axis().is_some_and(|i| ax <= i)
                    || self.tree.arcs.iter().any(|arc| arc.axis == ax && arc.base() == *site)
                {
                    return Err(Error::Domain(format!("axis {ax} is not fresh at {site}")));
                }
                Ok(ax)
            }
        }
    }

    /// Take `a` off the atom in slot `k` and hang `a·q` on a new branch from
    /// `site` along `axis`, with `q`'s point `z` at axis coordinate `coord(z)`.
    fn attach(
        &mut self,
        k: usize,
        site: &L1Point,
        a: f64,
        q: &FadMeasure1D,
        axis: u32,
        coord: &dyn Fn(f64) -> f64,
    ) -> Result<Vec<L1Point>> {
        let m = self.tree.weight.atoms()[k].mass();
        if a == m {
            self.remove_atom(k);
        } else {
            self.tree.weight.atoms_mut()[k].1 = m - a;
        }
        let at = |z: f64| {
            let c = coord(z);
            if c <= 0.0 {
                Ok(site.clone())
            } else {
                site.with_last(axis, c)
            }
        };
        self.tree.arcs.push(Arc::new(site.clone(), at(q.support_max())?, axis)?);
        self.max_axis = self.max_axis.max(axis);

        // Fringe of each new atom is a·q[z, ∞), from a merged sweep taken
        // from the top so that tip atoms get exactly their own mass.
        let segs = q.segments();
        let mut above = vec![0.0f64; q.atoms().len()];
        let (mut j, mut seg_above, mut atoms_above) = (segs.len(), 0.0f64, 0.0f64);
        for (i, atom) in q.atoms().iter().enumerate().rev() {
            let z = atom.loc();
            while j > 0 && segs[j - 1].0 >= z {
                seg_above += segs[j - 1].1 - segs[j - 1].0;
                j -= 1;
            }
            let partial = if j > 0 && segs[j - 1].1 > z { segs[j - 1].1 - z } else { 0.0 };
            above[i] = atoms_above + atom.mass() + seg_above + partial;
            atoms_above += atom.mass();
        }
        let mut landed = Vec::with_capacity(q.atoms().len());
        for (atom, up) in q.atoms().iter().zip(above) {
            let x = at(atom.loc())?;
            self.add_atom(x.clone(), a * atom.mass(), atom.tag(), a * up);
            landed.push(x);
        }
        for &(s, e) in segs {
            self.tree.weight.density_arcs_mut().push(DensityArc::unit(Arc::new(at(s)?, at(e)?, axis)?));
        }
        Ok(landed)
    }
}
