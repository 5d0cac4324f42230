//! Line decomposition of an axis-path tree for fast mass queries.
//!
//! Arcs sharing a base point and an axis form one line `base + [0, end]·e_axis`.
//! Every non-root point of the tree lies on exactly one line, found from its
//! last nonzero coordinate, and every line hangs off its parent line (or the
//! root) at its base.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::l1geom::{is_on_root_path, wedge, Arc, L1Point};
use crate::measure::{AtomTag, TreeMeasure};

/// Where a point sits in the tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loc {
    Root,
    /// Line index and axis coordinate (strictly positive).
    On(usize, f64),
}

#[derive(Clone, Debug)]
pub struct Line {
    pub base: L1Point,
    pub axis: u32,
    pub end: f64,
    pub parent: Loc,
    /// `(position, mass, tag)` sorted by position, positions distinct.
    pub atoms: Vec<(f64, f64, AtomTag)>,
    /// `(position, child line)` sorted by position.
    pub children: Vec<(f64, usize)>,
    /// `(start, end, rate)` sorted and disjoint.
    pub density: Vec<(f64, f64, f64)>,
    density_prefix: Vec<f64>,
    /// `(position, mass)`: atoms and child subtrees merged, sorted.
    events: Vec<(f64, f64)>,
    events_suffix: Vec<f64>,
    pub subtree: f64,
    pub base_path: f64,
}

impl Line {
    pub fn point_at(&self, pos: f64) -> L1Point {
        let mut c = self.base.coords().to_vec();
        c.push((self.axis, pos));
        L1Point::new(c).expect("line positions are positive")
    }

    pub fn base_norm(&self) -> f64 {
        self.base.norm()
    }

    /// Density mass on `[0, p]`.
    pub fn density_below(&self, p: f64) -> f64 {
        let k = self.density.partition_point(|d| d.1 <= p);
        let mut m = self.density_prefix[k];
        if let Some(&(s, _, r)) = self.density.get(k) {
            if s < p {
                m += r * (p - s);
            }
        }
        m
    }

    pub fn density_total(&self) -> f64 {
        *self.density_prefix.last().unwrap()
    }

    /// Atom and child-subtree mass at positions `≥ p` (or `> p`).
    fn events_from(&self, p: f64, strict: bool) -> f64 {
        let k =
            if strict { self.events.partition_point(|e| e.0 <= p) } else { self.events.partition_point(|e| e.0 < p) };
        self.events_suffix[k]
    }

    pub fn atom_at(&self, p: f64) -> Option<(f64, AtomTag)> {
        self.atoms.binary_search_by(|a| a.0.total_cmp(&p)).ok().map(|k| (self.atoms[k].1, self.atoms[k].2))
    }

    pub fn children_at(&self, p: f64) -> &[(f64, usize)] {
        let lo = self.children.partition_point(|c| c.0 < p);
        let hi = self.children.partition_point(|c| c.0 <= p);
        &self.children[lo..hi]
    }

    /// Whether a density piece ends exactly at `p`.
    pub fn density_ends_at(&self, p: f64) -> bool {
        self.density.iter().any(|d| d.1 == p)
    }

    pub fn density_starts_at(&self, p: f64) -> bool {
        self.density.iter().any(|d| d.0 == p)
    }
}

/// Line decomposition with mass bookkeeping.
#[derive(Clone, Debug)]
pub struct TreeIndex {
    pub lines: Vec<Line>,
    by_key: HashMap<(L1Point, u32), usize>,
    pub root_atom: f64,
    pub root_tag: Option<AtomTag>,
    pub root_children: Vec<usize>,
    pub total: f64,
    /// Lowest point of the closed support (meet of all support points).
    pub support_root: Option<L1Point>,
}

fn structure(msg: String) -> Error {
    Error::InvalidTree(msg)
}

impl TreeIndex {
    pub fn build(arcs: &[Arc], weight: &TreeMeasure) -> Result<Self> {
        let mut by_key: HashMap<(L1Point, u32), usize> = HashMap::new();
        let mut spans: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut lines: Vec<Line> = Vec::new();
        for arc in arcs {
            let key = (arc.base(), arc.axis);
            let k = *by_key.entry(key).or_insert_with(|| {
                lines.push(Line {
                    base: arc.base(),
                    axis: arc.axis,
                    end: 0.0,
                    parent: Loc::Root,
                    atoms: vec![],
                    children: vec![],
                    density: vec![],
                    density_prefix: vec![],
                    events: vec![],
                    events_suffix: vec![],
                    subtree: 0.0,
                    base_path: 0.0,
                });
                spans.push(vec![]);
                lines.len() - 1
            });
            spans[k].push((arc.start(), arc.end()));
        }
        for (line, sp) in lines.iter_mut().zip(spans.iter_mut()) {
            sp.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut covered = 0.0f64;
            for &(s, e) in sp.iter() {
                if s > covered {
                    return Err(structure(format!(
                        "gap on the axis-{} line from {}: [{covered}, {s}] is not covered",
                        line.axis, line.base
                    )));
                }
                covered = covered.max(e);
            }
            line.end = covered;
        }

        let mut index = TreeIndex {
            lines,
            by_key,
            root_atom: 0.0,
            root_tag: None,
            root_children: vec![],
            total: 0.0,
            support_root: None,
        };

        // Attach every line to its parent.
        for k in 0..index.lines.len() {
            let base = index.lines[k].base.clone();
            let loc = index.locate(&base).map_err(|_| {
                structure(format!("axis-{} line hangs off {base}, which is not on the tree", index.lines[k].axis))
            })?;
            index.lines[k].parent = loc;
            match loc {
                Loc::Root => index.root_children.push(k),
                Loc::On(l, p) => index.lines[l].children.push((p, k)),
            }
        }

        for a in weight.atoms() {
            match index.locate(a.point())? {
                Loc::Root => {
                    index.root_atom += a.mass();
                    let pending = a.tag() == AtomTag::Pending || index.root_tag == Some(AtomTag::Pending);
                    index.root_tag = Some(if pending { AtomTag::Pending } else { AtomTag::Resolved });
                }
                Loc::On(l, p) => index.lines[l].atoms.push((p, a.mass(), a.tag())),
            }
        }
        for d in weight.density_arcs() {
            let key = (d.arc.base(), d.arc.axis);
            let Some(&l) = index.by_key.get(&key) else {
                return Err(Error::OffTree(format!("density arc {} -> {}", d.arc.lower, d.arc.upper)));
            };
            if d.arc.end() > index.lines[l].end {
                return Err(Error::OffTree(format!("density arc {} -> {}", d.arc.lower, d.arc.upper)));
            }
            index.lines[l].density.push((d.arc.start(), d.arc.end(), d.rate));
        }

        for line in &mut index.lines {
            line.atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64, AtomTag)> = Vec::with_capacity(line.atoms.len());
            for a in line.atoms.drain(..) {
                match merged.last_mut() {
                    Some(m) if m.0 == a.0 => {
                        m.1 += a.1;
                        if a.2 == AtomTag::Pending {
                            m.2 = AtomTag::Pending;
                        }
                    }
                    _ => merged.push(a),
                }
            }
            line.atoms = merged;
            line.children.sort_by(|a, b| a.0.total_cmp(&b.0));
            line.density.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in line.density.windows(2) {
                if w[1].0 < w[0].1 {
                    return Err(structure(format!(
                        "overlapping density on the axis-{} line from {}",
                        line.axis, line.base
                    )));
                }
            }
            let mut acc = 0.0;
            line.density_prefix = std::iter::once(0.0)
                .chain(line.density.iter().map(|&(s, e, r)| {
                    acc += r * (e - s);
                    acc
                }))
                .collect();
        }

        // Subtree masses: children have larger axes than their parents.
        let mut order: Vec<usize> = (0..index.lines.len()).collect();
        order.sort_by_key(|&k| std::cmp::Reverse(index.lines[k].axis));
        for &k in &order {
            let line = &index.lines[k];
            let mut events: Vec<(f64, f64)> = line.atoms.iter().map(|a| (a.0, a.1)).collect();
            events.extend(line.children.iter().map(|&(p, c)| (p, index.lines[c].subtree)));
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut suffix = vec![0.0; events.len() + 1];
            for i in (0..events.len()).rev() {
                suffix[i] = suffix[i + 1] + events[i].1;
            }
            let subtree = suffix[0] + line.density_total();
            let line = &mut index.lines[k];
            line.events = events;
            line.events_suffix = suffix;
            line.subtree = subtree;
        }
        index.total = index.root_atom + index.root_children.iter().map(|&c| index.lines[c].subtree).sum::<f64>();
        for &k in order.iter().rev() {
            let bp = match index.lines[k].parent {
                Loc::Root => index.root_atom,
                loc => index.path_mass(loc),
            };
            index.lines[k].base_path = bp;
        }

        let mut lowest: Option<L1Point> = None;
        let mut meet = |x: L1Point| {
            lowest = Some(match lowest.take() {
                None => x,
                Some(z) => wedge(&z, &x),
            })
        };
        for a in weight.atoms() {
            meet(a.point().clone());
        }
        for d in weight.density_arcs() {
            meet(d.arc.lower.clone());
        }
        index.support_root = lowest;
        Ok(index)
    }

    /// Position of `x` in the tree, or an off-tree error.
    pub fn locate(&self, x: &L1Point) -> Result<Loc> {
        let Some(axis) = x.last_axis() else {
            return Ok(Loc::Root);
        };
        let key = (x.truncated_below(axis), axis);
        match self.by_key.get(&key) {
            Some(&l) => {
                let p = x.coord(axis);
                if p <= self.lines[l].end {
                    Ok(Loc::On(l, p))
                } else {
                    Err(Error::OffTree(x.to_string()))
                }
            }
            None => Err(Error::OffTree(x.to_string())),
        }
    }

    pub fn point(&self, loc: Loc) -> L1Point {
        match loc {
            Loc::Root => L1Point::origin(),
            Loc::On(l, p) => self.lines[l].point_at(p),
        }
    }

    pub fn norm(&self, loc: Loc) -> f64 {
        match loc {
            Loc::Root => 0.0,
            Loc::On(l, p) => self.lines[l].base_norm() + p,
        }
    }

    /// `p(F_x)`.
    pub fn fringe(&self, loc: Loc) -> f64 {
        match loc {
            Loc::Root => self.total,
            Loc::On(l, p) => {
                let line = &self.lines[l];
                line.events_from(p, false) + line.density_total() - line.density_below(p)
            }
        }
    }

    /// `p[[0, x]]`.
    pub fn path_mass(&self, loc: Loc) -> f64 {
        match loc {
            Loc::Root => self.root_atom,
            Loc::On(l, p) => {
                let line = &self.lines[l];
                let k = line.atoms.partition_point(|a| a.0 <= p);
                line.base_path + line.atoms[..k].iter().map(|a| a.1).sum::<f64>() + line.density_below(p)
            }
        }
    }

    pub fn atom_mass(&self, loc: Loc) -> f64 {
        match loc {
            Loc::Root => self.root_atom,
            Loc::On(l, p) => self.lines[l].atom_at(p).map(|a| a.0).unwrap_or(0.0),
        }
    }

    /// Lines attached at `loc`.
    pub fn children_at(&self, loc: Loc) -> Vec<usize> {
        match loc {
            Loc::Root => self.root_children.clone(),
            Loc::On(l, p) => self.lines[l].children_at(p).iter().map(|c| c.1).collect(),
        }
    }

    /// Mass strictly further along the line than `p` (including lines
    /// attached further along).
    pub fn beyond_on_line(&self, l: usize, p: f64) -> f64 {
        let line = &self.lines[l];
        line.events_from(p, true) + line.density_total() - line.density_below(p)
    }

    /// Number of directions at `loc` carrying positive mass.
    pub fn massive_directions(&self, loc: Loc) -> usize {
        let mut n = 0;
        if let Loc::On(l, p) = loc {
            let x = self.point(loc);
            if let Some(s) = &self.support_root {
                if !is_on_root_path(&x, s) {
                    n += 1;
                }
            }
            if p < self.lines[l].end && self.beyond_on_line(l, p) > 0.0 {
                n += 1;
            }
        }
        n += self.children_at(loc).iter().filter(|&&c| self.lines[c].subtree > 0.0).count();
        n
    }

    /// Line of the given key, if present.
    pub fn line_of(&self, base: &L1Point, axis: u32) -> Option<usize> {
        self.by_key.get(&(base.clone(), axis)).copied()
    }
}
