//! Mass-structural canonical forms, IP representatives, axis relabelings
//! and the Prokhorov distance between weights sharing an embedding.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::iptree::index::{Loc, TreeIndex};
use crate::iptree::{special_locs, stats_at, CrushStep, IpTree, MassStats, PointKind};
use crate::l1geom::{path_distance, Arc, L1Point};
use crate::measure::{AtomTag, DensityArc, TreeAtom, TreeMeasure};
use crate::tol::{EPS_BIS, EPS_CANON, MAX_BISECTION_STEPS};

/// Fingerprint of a tree up to mass-structural isomorphism: a Merkle
/// digest of the forest of special points under the root-path order, each
/// node carrying its kind and its mass statistics on the `EPS_CANON` grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MsCanonicalForm {
    pub digest: String,
    pub special_points: usize,
}

impl std::fmt::Display for MsCanonicalForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} special points)", self.digest, self.special_points)
    }
}

/// Special points with their nearest special strict ancestors.
struct Forest {
    locs: Vec<Loc>,
    kinds: Vec<PointKind>,
    stats: Vec<MassStats>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

impl Forest {
    fn new(ix: &TreeIndex) -> Self {
        let found = special_locs(ix);
        let mut root_id = None;
        let mut on_line: Vec<Vec<(f64, usize)>> = vec![vec![]; ix.lines.len()];
        for (id, &(loc, _)) in found.iter().enumerate() {
            match loc {
                Loc::Root => root_id = Some(id),
                Loc::On(l, p) => on_line[l].push((p, id)),
            }
        }
        for v in &mut on_line {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
        }

        // Nearest special point at or below the base of each line.
        let mut memo: Vec<Option<Option<usize>>> = vec![None; ix.lines.len()];
        let mut below_line = |l: usize| -> Option<usize> {
            let mut chain = vec![];
            let mut cur = l;
            let ans = loop {
                if let Some(a) = memo[cur] {
                    break a;
                }
                chain.push(cur);
                match ix.lines[cur].parent {
                    Loc::Root => break root_id,
                    Loc::On(up, p) => {
                        let v = &on_line[up];
                        let k = v.partition_point(|e| e.0 <= p);
                        if k > 0 {
                            break Some(v[k - 1].1);
                        }
                        cur = up;
                    }
                }
            };
            for c in chain {
                memo[c] = Some(ans);
            }
            ans
        };

        let n = found.len();
        let mut children = vec![vec![]; n];
        let mut roots = vec![];
        for (id, &(loc, _)) in found.iter().enumerate() {
            let parent = match loc {
                Loc::Root => None,
                Loc::On(l, p) => {
                    let v = &on_line[l];
                    let k = v.partition_point(|e| e.0 < p);
                    if k > 0 {
                        Some(v[k - 1].1)
                    } else {
                        below_line(l)
                    }
                }
            };
            match parent {
                Some(q) => children[q].push(id),
                None => roots.push(id),
            }
        }
        Forest {
            stats: found.iter().map(|&(loc, _)| stats_at(ix, loc)).collect(),
            locs: found.iter().map(|e| e.0).collect(),
            kinds: found.iter().map(|e| e.1).collect(),
            children,
            roots,
        }
    }

    /// Parents before children.
    fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.locs.len());
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev().copied());
        }
        out
    }
}

fn grid(v: f64) -> i64 {
    (v / EPS_CANON).round() as i64
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_forest(f: &Forest) -> MsCanonicalForm {
    let mut d: Vec<[u8; 32]> = vec![[0; 32]; f.locs.len()];
    for &v in f.preorder().iter().rev() {
        let mut h = Sha256::new();
        h.update([f.kinds[v] as u8]);
        let s = f.stats[v];
        for x in [s.path_mass, s.atom_mass, s.fringe_mass] {
            h.update(grid(x).to_le_bytes());
        }
        let mut kids: Vec<[u8; 32]> = f.children[v].iter().map(|&c| d[c]).collect();
        kids.sort_unstable();
        h.update((kids.len() as u64).to_le_bytes());
        for k in &kids {
            h.update(k);
        }
        d[v] = h.finalize().into();
    }
    let mut tops: Vec<[u8; 32]> = f.roots.iter().map(|&r| d[r]).collect();
    tops.sort_unstable();
    let mut h = Sha256::new();
    h.update((tops.len() as u64).to_le_bytes());
    for t in &tops {
        h.update(t);
    }
    MsCanonicalForm { digest: hex(&h.finalize()), special_points: f.locs.len() }
}

/// Canonical form of an IP tree.
pub fn canonical_form(tree: &IpTree) -> Result<MsCanonicalForm> {
    let check = tree.is_ip_tree();
    if !check.valid {
        return Err(Error::InvalidTree(check.violations.first().map(|v| v.detail.clone()).unwrap_or_default()));
    }
    canonical_form_unchecked(tree)
}

/// Canonical form of any structurally sound tree, IP or not.
pub fn canonical_form_unchecked(tree: &IpTree) -> Result<MsCanonicalForm> {
    Ok(digest_forest(&Forest::new(&tree.index()?)))
}

/// Whether two IP trees are mass-structurally equivalent.
pub fn ms_equivalent(a: &IpTree, b: &IpTree) -> Result<bool> {
    Ok(canonical_form(a)? == canonical_form(b)?)
}

/// An IP tree mass-structurally equivalent to a purely atomic tree. IP
/// trees are returned unchanged.
///
/// Each special point `x` is placed at distance `total - p(F_x)` from the
/// root: the first special child continues its parent's axis, the others
/// start new axes.
pub fn ip_representative(tree: &IpTree) -> Result<IpTree> {
    if tree.is_ip_tree().valid {
        return Ok(tree.clone());
    }
    if !tree.weight().is_purely_atomic() {
        return Err(Error::Domain("IP representatives are built for purely atomic weights only".into()));
    }
    let ix = tree.index()?;
    let f = Forest::new(&ix);
    let fringe = |v: usize| f.stats[v].fringe_mass;
    let order_kids = |kids: &[usize]| {
        let mut k = kids.to_vec();
        k.sort_by(|&a, &b| fringe(b).total_cmp(&fringe(a)));
        k
    };

    let mut place: Vec<Option<(L1Point, Option<u32>)>> = vec![None; f.locs.len()];
    let mut arcs = vec![];
    let mut next_axis = 1u32;
    let mut fresh = || {
        let a = next_axis;
        next_axis += 1;
        a
    };
    let offset = |from: f64, to: f64| -> Result<f64> {
        let d = from - to;
        if d > 0.0 {
            Ok(d)
        } else {
            Err(Error::InvalidTree("special point with a non-decreasing fringe mass".into()))
        }
    };
    let roots = order_kids(&f.roots);
    if roots.len() == 1 {
        place[roots[0]] = Some((L1Point::origin(), None));
    } else {
        for &r in &roots {
            let axis = fresh();
            let x = L1Point::on_axis(axis, offset(ix.total, fringe(r))?)?;
            arcs.push(Arc::new(L1Point::origin(), x.clone(), axis)?);
            place[r] = Some((x, Some(axis)));
        }
    }
    for v in f.preorder() {
        let (x, axis) = place[v].clone().expect("parents are placed first");
        for (i, c) in order_kids(&f.children[v]).into_iter().enumerate() {
            let d = offset(fringe(v), fringe(c))?;
            let (y, a) = match axis {
                Some(a) if i == 0 => (x.with_last(a, x.coord(a) + d)?, a),
                _ => {
                    let a = fresh();
                    (x.with_last(a, d)?, a)
                }
            };
            arcs.push(Arc::new(x.clone(), y.clone(), a)?);
            place[c] = Some((y, Some(a)));
        }
    }
    let mut atoms = vec![];
    for (v, slot) in place.iter().enumerate() {
        let m = f.stats[v].atom_mass;
        if m > 0.0 {
            let src = ix.point(f.locs[v]);
            let tag = tree.weight().atom_at(&src).map(|a| a.tag()).unwrap_or(AtomTag::Pending);
            atoms.push(TreeAtom(slot.as_ref().expect("placed").0.clone(), m, tag));
        }
    }
    IpTree::from_parts(arcs, TreeMeasure::new(atoms, vec![])?, vec![])
}

/// The same tree with every axis `i` renamed `f(i)`; `f` must be injective
/// and preserve the order of axes that occur together in a point.
pub fn relabel_axes(tree: &IpTree, f: impl Fn(u32) -> u32) -> Result<IpTree> {
    let arc = |a: &Arc| Arc::new(a.lower.map_axes(&f)?, a.upper.map_axes(&f)?, f(a.axis));
    let arcs = tree.arcs().iter().map(arc).collect::<Result<Vec<_>>>()?;
    let atoms = tree
        .weight()
        .atoms()
        .iter()
        .map(|a| Ok(TreeAtom(a.point().map_axes(&f)?, a.mass(), a.tag())))
        .collect::<Result<Vec<_>>>()?;
    let dens = tree
        .weight()
        .density_arcs()
        .iter()
        .map(|d| Ok(DensityArc { arc: arc(&d.arc)?, rate: d.rate }))
        .collect::<Result<Vec<_>>>()?;
    let log = tree
        .build_log()
        .iter()
        .map(|s| Ok(CrushStep { site: s.site.map_axes(&f)?, new_axis: f(s.new_axis), ..s.clone() }))
        .collect::<Result<Vec<_>>>()?;
    IpTree::from_parts(arcs, TreeMeasure::new(atoms, dens)?, log)
}

/// A random order-respecting renaming of the axes of `tree`: a uniformly
/// chosen step of Kahn's algorithm at each rank, with random gaps between
/// the new labels.
pub fn random_axis_map<R: Rng + ?Sized>(tree: &IpTree, rng: &mut R) -> HashMap<u32, u32> {
    let mut axes = BTreeSet::new();
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut note = |base: &L1Point, axis: u32| {
        axes.insert(axis);
        for &(i, _) in base.coords() {
            if i < axis {
                axes.insert(i);
                edges.insert((i, axis));
            }
        }
    };
    for a in tree.arcs() {
        note(&a.lower, a.axis);
    }
    for s in tree.build_log() {
        note(&s.site, s.new_axis);
    }
    let mut indeg: HashMap<u32, usize> = axes.iter().map(|&a| (a, 0)).collect();
    let mut out: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(a, b) in &edges {
        *indeg.get_mut(&b).expect("axis noted") += 1;
        out.entry(a).or_default().push(b);
    }
    let mut ready: Vec<u32> = axes.iter().copied().filter(|a| indeg[a] == 0).collect();
    let mut map = HashMap::new();
    let mut label = 0u32;
    while !ready.is_empty() {
        let a = ready.swap_remove(rng.random_range(0..ready.len()));
        label += rng.random_range(1..=3);
        map.insert(a, label);
        for &b in out.get(&a).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indeg.get_mut(&b).expect("axis noted");
            *d -= 1;
            if *d == 0 {
                ready.push(b);
            }
        }
    }
    map
}

/// [`relabel_axes`] with [`random_axis_map`].
pub fn random_relabel<R: Rng + ?Sized>(tree: &IpTree, rng: &mut R) -> Result<IpTree> {
    let map = random_axis_map(tree, rng);
    relabel_axes(tree, |a| map[&a])
}

/// Atoms of `m`, with each density arc cut into cells of length at most
/// `grid` whose mass sits at the cell midpoint.
pub fn discretize(m: &TreeMeasure, grid: Option<f64>) -> Result<Vec<(L1Point, f64)>> {
    let mut out: Vec<(L1Point, f64)> = m.atoms().iter().map(|a| (a.point().clone(), a.mass())).collect();
    if m.density_arcs().is_empty() {
        return Ok(out);
    }
    let h = grid.ok_or(Error::NeedsGrid)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("grid must be positive, got {h}")));
    }
    for d in m.density_arcs() {
        let (s, e) = (d.arc.start(), d.arc.end());
        let cells = ((e - s) / h).ceil().max(1.0) as usize;
        let w = (e - s) / cells as f64;
        for k in 0..cells {
            out.push((d.arc.point_at(s + (k as f64 + 0.5) * w), d.rate * w));
        }
    }
    Ok(out)
}

/// Prokhorov distance between two weights in the same embedding.
///
/// Bisection on `ε` over the max-flow test: mass may move at most `ε`, and
/// the flow must carry all but `ε` of the larger total. Densities are
/// discretized with [`discretize`]. The result is within `EPS_BIS` above
/// the true value.
pub fn prokhorov_distance(p: &TreeMeasure, q: &TreeMeasure, grid: Option<f64>) -> Result<f64> {
    let a = discretize(p, grid)?;
    let b = discretize(q, grid)?;
    let dist: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| path_distance(&x.0, &y.0)).collect()).collect();
    let need = a.iter().map(|x| x.1).sum::<f64>().max(b.iter().map(|y| y.1).sum::<f64>());
    let feasible = |eps: f64| max_flow_within(&a, &b, &dist, eps) >= need - eps - 1e-12;
    if feasible(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, need.max(1.0));
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= EPS_BIS {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn max_flow_within(a: &[(L1Point, f64)], b: &[(L1Point, f64)], dist: &[Vec<f64>], eps: f64) -> f64 {
    let (s, t) = (0, 1);
    let mut g = Dinic::new(2 + a.len() + b.len());
    for (i, x) in a.iter().enumerate() {
        g.add_edge(s, 2 + i, x.1);
    }
    for (j, y) in b.iter().enumerate() {
        g.add_edge(2 + a.len() + j, t, y.1);
    }
    for (i, row) in dist.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            if d <= eps {
                g.add_edge(2 + i, 2 + a.len() + j, f64::INFINITY);
            }
        }
    }
    g.max_flow(s, t)
}

/// Dinic's max-flow on real capacities.
struct Dinic {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const FLOW_EPS: f64 = 1e-15;

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic { head: vec![vec![]; n], to: vec![], cap: vec![], level: vec![0; n], iter: vec![0; n] }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0.0);
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    /// One blocking-flow augmentation along a shortest path, iteratively.
    fn augment(&mut self, s: usize, t: usize) -> f64 {
        let mut path: Vec<usize> = vec![];
        let mut u = s;
        loop {
            if u == t {
                let f = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                }
                return f;
            }
            let mut advanced = false;
            while self.iter[u] < self.head[u].len() {
                let e = self.head[u][self.iter[u]];
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.iter[u] += 1;
            }
            if !advanced {
                if u == s {
                    return 0.0;
                }
                self.level[u] = -1;
                let e = path.pop().expect("not at source");
                u = self.to[e ^ 1];
                self.iter[u] += 1;
            }
        }
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.augment(s, t);
                if f <= FLOW_EPS {
                    break;
                }
                flow += f;
            }
        }
        flow
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beads::{sample_string_of_beads, uniformized_string};
    use crate::hierarchy::{derive_hierarchy, reconstruct_tree, sample_law, total_variation};
    use crate::iptree::tests::three_atom_tree;
    use crate::iptree::{build_model, CoupledBuild, Model};
    use crate::measure::{Atom1D, FadMeasure1D};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(c: &[(u32, f64)]) -> L1Point {
        L1Point::new(c.to_vec()).unwrap()
    }

    fn atomic(v: &[(L1Point, f64)]) -> TreeMeasure {
        TreeMeasure::new(v.iter().map(|(x, m)| TreeAtom(x.clone(), *m, AtomTag::Pending)).collect(), vec![]).unwrap()
    }

    fn q(v: &[(f64, f64)]) -> FadMeasure1D {
        FadMeasure1D::new(v.iter().map(|&(l, m)| Atom1D::new(l, m)).collect(), vec![]).unwrap()
    }

    #[test]
    fn forms_ignore_axis_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in [IpTree::new(), three_atom_tree(), build_model(&Model::brownian(), 30, 4).unwrap()] {
            let r = random_relabel(&t, &mut rng).unwrap();
            assert!(r.is_ip_tree().valid);
            assert_eq!(canonical_form(&r).unwrap(), canonical_form(&t).unwrap());
            assert!(ms_equivalent(&t, &t).unwrap());
        }
    }

    #[test]
    fn three_atom_form_has_four_points() {
        let c = canonical_form(&three_atom_tree()).unwrap();
        assert_eq!(c.special_points, 4);
        assert_eq!(c.digest.len(), 64);
    }

    #[test]
    fn non_ip_trees_are_rejected() {
        // Half-length segment with density rate 2.
        let half = IpTree::from_parts(
            vec![Arc::new(L1Point::origin(), p(&[(1, 0.5)]), 1).unwrap()],
            TreeMeasure::new(
                vec![],
                vec![DensityArc { arc: Arc::new(L1Point::origin(), p(&[(1, 0.5)]), 1).unwrap(), rate: 2.0 }],
            )
            .unwrap(),
            vec![],
        )
        .unwrap();
        assert!(matches!(canonical_form(&half), Err(Error::InvalidTree(_))));
        assert!(canonical_form_unchecked(&half).is_ok());
    }

    #[test]
    fn string_and_uniformized_twin_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let s = sample_string_of_beads(0.5, 0.5, 60, &mut rng).unwrap();
            let raw = IpTree::from_line_measure(&s.to_measure().unwrap()).unwrap();
            let twin = IpTree::from_line_measure(&uniformized_string(&s).unwrap()).unwrap();
            assert!(twin.is_ip_tree().valid);
            assert_eq!(canonical_form_unchecked(&raw).unwrap(), canonical_form(&twin).unwrap());
        }
    }

    #[test]
    fn coupled_builds_are_equivalent() {
        let mut c = CoupledBuild::new(0.5, 0.5, 40, 3).unwrap();
        for _ in 0..12 {
            c.step().unwrap();
            assert_eq!(canonical_form_unchecked(c.crt()).unwrap(), canonical_form(c.ip()).unwrap());
        }
    }

    #[test]
    fn coupled_builds_fold_colliding_atoms() {
        // Step 41 of this build lands two string atoms 1e-17 apart near 0.25.
        let mut c = CoupledBuild::new(0.7, 0.2, 100, 3).unwrap();
        for _ in 0..45 {
            c.step().unwrap();
        }
        assert_eq!(canonical_form_unchecked(c.crt()).unwrap(), canonical_form(c.ip()).unwrap());
        assert!((c.crt().weight().total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fat_cantor_depths_differ() {
        let a = build_model(&Model::FatCantor { depth: 2 }, 3, 1).unwrap();
        let b = build_model(&Model::FatCantor { depth: 3 }, 3, 1).unwrap();
        assert!(!ms_equivalent(&a, &b).unwrap());
        // Enumeration oracle: the sorted multisets of rounded stats differ.
        let stats = |t: &IpTree| {
            let mut v: Vec<(i64, i64, i64)> = t
                .special_points()
                .unwrap()
                .iter()
                .map(|s| (grid(s.stats.path_mass), grid(s.stats.atom_mass), grid(s.stats.fringe_mass)))
                .collect();
            v.sort();
            v
        };
        assert_ne!(stats(&a), stats(&b));
    }

    #[test]
    fn permuted_replay_keeps_the_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = build_model(&Model::AlphaTheta { alpha: 0.4, theta: 0.6, truncation: 30 }, 25, 8).unwrap();
        for _ in 0..5 {
            let map = random_axis_map(&t, &mut rng);
            let log: Vec<CrushStep> = t
                .build_log()
                .iter()
                .map(|s| CrushStep {
                    site: s.site.map_axes(|a| map[&a]).unwrap(),
                    new_axis: map[&s.new_axis],
                    ..s.clone()
                })
                .collect();
            let r = IpTree::replay(&log).unwrap();
            assert_eq!(r, relabel_axes(&t, |a| map[&a]).unwrap());
            assert_eq!(canonical_form(&r).unwrap(), canonical_form(&t).unwrap());
        }
    }

    #[test]
    fn representative_of_reconstruction() {
        let (h, _) = derive_hierarchy(&three_atom_tree(), 801, 5).unwrap();
        let raw = reconstruct_tree(&h.relabel_to_z().unwrap(), 15).unwrap().tree;
        let rep = ip_representative(&raw).unwrap();
        assert!(rep.is_ip_tree().valid, "{:?}", rep.is_ip_tree().violations);
        assert_eq!(canonical_form(&rep).unwrap(), canonical_form_unchecked(&raw).unwrap());
        let t = three_atom_tree();
        assert_eq!(ip_representative(&t).unwrap(), t);
        let seg = IpTree::from_parts(
            vec![Arc::new(L1Point::origin(), p(&[(1, 0.5)]), 1).unwrap()],
            TreeMeasure::new(
                vec![],
                vec![DensityArc { arc: Arc::new(L1Point::origin(), p(&[(1, 0.5)]), 1).unwrap(), rate: 2.0 }],
            )
            .unwrap(),
            vec![],
        )
        .unwrap();
        assert!(ip_representative(&seg).is_err());
    }

    #[test]
    fn representative_of_a_two_way_root() {
        // Two atoms on separate axes, nothing at the root.
        let raw = IpTree::from_parts(
            vec![
                Arc::new(L1Point::origin(), p(&[(1, 2.0)]), 1).unwrap(),
                Arc::new(L1Point::origin(), p(&[(2, 1.0)]), 2).unwrap(),
            ],
            atomic(&[(p(&[(1, 2.0)]), 0.3), (p(&[(2, 1.0)]), 0.7)]),
            vec![],
        )
        .unwrap();
        let rep = ip_representative(&raw).unwrap();
        assert!(rep.is_ip_tree().valid);
        let mut pts: Vec<f64> = rep.weight().atoms().iter().map(|a| a.point().norm()).collect();
        pts.sort_by(f64::total_cmp);
        assert!((pts[0] - 0.3).abs() < 1e-15 && (pts[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn theta_laws_agree_for_equivalent_pairs() {
        let model =
            Model::Custom { strings: vec![q(&[(0.0, 0.2), (0.2, 0.5), (0.7, 0.3)]), q(&[(0.0, 0.6), (0.6, 0.4)])] };
        let t = build_model(&model, 4, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_relabel(&t, &mut rng).unwrap();
        let (a, b) = (sample_law(&t, 3).unwrap(), sample_law(&r, 3).unwrap());
        assert!(total_variation(&a, &b) < 1e-12);
        let other = build_model(&model, 3, 0).unwrap();
        assert!(!ms_equivalent(&t, &other).unwrap());
        assert!(total_variation(&a, &sample_law(&other, 3).unwrap()) > 1e-6);
    }

    #[test]
    fn prokhorov_two_point_cases() {
        let o = L1Point::origin();
        let e = p(&[(1, 1.0)]);
        let d0 = atomic(&[(o.clone(), 1.0)]);
        assert_eq!(prokhorov_distance(&d0, &d0, None).unwrap(), 0.0);
        let d1 = atomic(&[(e.clone(), 1.0)]);
        assert!((prokhorov_distance(&d0, &d1, None).unwrap() - 1.0).abs() <= 2.0 * EPS_BIS);
        let mix = atomic(&[(o.clone(), 0.5), (e.clone(), 0.5)]);
        assert!((prokhorov_distance(&mix, &d0, None).unwrap() - 0.5).abs() <= 2.0 * EPS_BIS);
        // Distance 0.2 apart: moving is cheaper than forfeiting.
        let near = atomic(&[(p(&[(1, 0.2)]), 1.0)]);
        assert!((prokhorov_distance(&d0, &near, None).unwrap() - 0.2).abs() <= 2.0 * EPS_BIS);
    }

    #[test]
    fn prokhorov_needs_a_grid_for_density() {
        let seg = IpTree::new().crush(&L1Point::origin(), 1.0, &FadMeasure1D::lebesgue(0.0, 1.0).unwrap()).unwrap();
        let mid = atomic(&[(p(&[(1, 0.5)]), 1.0)]);
        assert!(matches!(prokhorov_distance(seg.weight(), &mid, None), Err(Error::NeedsGrid)));
        // Against δ at the midpoint the extremal set is the complement of a ball: 1 - 2ε = ε.
        let d = prokhorov_distance(seg.weight(), &mid, Some(1e-3)).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-3 + 2.0 * EPS_BIS, "{d}");
    }

    fn arb_atomic() -> impl Strategy<Value = TreeMeasure> {
        prop::collection::vec((1u32..4, 0.0f64..1.5, 0.01f64..1.0), 1..5).prop_map(|v| {
            let total: f64 = v.iter().map(|t| t.2).sum();
            let pts: Vec<(L1Point, f64)> =
                v.iter().map(|&(ax, x, m)| (L1Point::on_axis(ax, x).unwrap(), m / total)).collect();
            atomic(&pts)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prokhorov_is_a_metric(a in arb_atomic(), b in arb_atomic(), c in arb_atomic()) {
            let ab = prokhorov_distance(&a, &b, None).unwrap();
            let ba = prokhorov_distance(&b, &a, None).unwrap();
            let bc = prokhorov_distance(&b, &c, None).unwrap();
            let ac = prokhorov_distance(&a, &c, None).unwrap();
            prop_assert_eq!(prokhorov_distance(&a, &a, None).unwrap(), 0.0);
            prop_assert!((0.0..=1.0 + EPS_BIS).contains(&ab));
            prop_assert!((ab - ba).abs() <= EPS_BIS);
            prop_assert!(ac <= ab + bc + 2.0 * EPS_BIS);
        }

        #[test]
        fn equivalence_is_an_equivalence(seed in any::<u64>(), steps in 0usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = build_model(&Model::brownian(), steps, seed).unwrap();
            let u = random_relabel(&t, &mut rng).unwrap();
            let v = random_relabel(&u, &mut rng).unwrap();
            let w = build_model(&Model::brownian(), steps + 1, seed).unwrap();
            prop_assert!(ms_equivalent(&t, &u).unwrap() && ms_equivalent(&u, &t).unwrap());
            prop_assert!(ms_equivalent(&u, &v).unwrap() && ms_equivalent(&t, &v).unwrap());
            let tw = ms_equivalent(&t, &w).unwrap();
            prop_assert_eq!(tw, ms_equivalent(&w, &t).unwrap());
            prop_assert_eq!(tw, ms_equivalent(&v, &w).unwrap());
        }
    }
}
