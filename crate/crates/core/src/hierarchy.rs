//! Finite hierarchies (laminar families of label sets), hierarchies derived
//! by sampling from a weighted tree, spinal coordinates, and the recursion
//! that rebuilds a tree from a hierarchy on `[±n]`.
//!
//! A hierarchy is stored as its block tree: the root is the full label set,
//! leaves are singletons, and every block is a contiguous run of a fixed
//! leaf order. The empty set is implicit.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::iptree::IpTree;
use crate::l1geom::{is_on_root_path, lex_cmp, wedge, Arc, L1Point};
use crate::measure::{AtomTag, TreeAtom, TreeMeasure};

pub type Label = i64;

/// Handle to a block of a particular [`Hierarchy`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(usize);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Node {
    lo: usize,
    hi: usize,
    parent: Option<usize>,
    children: Vec<usize>,
    depth: usize,
}

/// A laminar family on a finite label set containing the full set, all
/// singletons and (implicitly) the empty set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Hierarchy {
    labels: Vec<Label>,
    order: Vec<Label>,
    nodes: Vec<Node>,
    leaf: Vec<usize>,
}

/// Block tree under construction.
#[derive(Default)]
struct Raw {
    children: Vec<Vec<usize>>,
    label: Vec<Option<Label>>,
}

impl Raw {
    fn leaf(&mut self, l: Label) -> usize {
        self.children.push(vec![]);
        self.label.push(Some(l));
        self.label.len() - 1
    }

    fn node(&mut self, kids: Vec<usize>) -> usize {
        self.children.push(kids);
        self.label.push(None);
        self.label.len() - 1
    }

    /// Canonical layout: children ordered by smallest label, nodes numbered
    /// in preorder.
    fn finish(mut self, root: usize) -> Result<Hierarchy> {
        let m = self.label.len();
        let mut post = Vec::with_capacity(m);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            post.push(v);
            stack.extend(self.children[v].iter().copied());
        }
        let mut min_label = vec![Label::MAX; m];
        let mut size = vec![0usize; m];
        for &v in post.iter().rev() {
            match self.label[v] {
                Some(l) => {
                    min_label[v] = l;
                    size[v] = 1;
                }
                None => {
                    if self.children[v].len() < 2 {
                        return Err(Error::InvalidHierarchy("a block repeats one of its children".into()));
                    }
                    min_label[v] = self.children[v].iter().map(|&c| min_label[c]).min().expect("nonempty");
                    size[v] = self.children[v].iter().map(|&c| size[c]).sum();
                }
            }
        }
        for &v in &post {
            let kids = &mut self.children[v];
            kids.sort_by_key(|&c| min_label[c]);
        }

        let n = size[root];
        let mut nodes: Vec<Node> = Vec::with_capacity(post.len());
        let mut order = vec![0; n];
        let mut stack = vec![(root, None::<usize>, 0usize, 0usize)];
        while let Some((v, parent, lo, depth)) = stack.pop() {
            let id = nodes.len();
            nodes.push(Node { lo, hi: lo + size[v], parent, children: vec![], depth });
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            if let Some(l) = self.label[v] {
                order[lo] = l;
            }
            let mut offs = lo;
            let mut pending = Vec::with_capacity(self.children[v].len());
            for &c in &self.children[v] {
                pending.push((c, Some(id), offs, depth + 1));
                offs += size[c];
            }
            stack.extend(pending.into_iter().rev());
        }

        let mut labels = order.clone();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidHierarchy(format!("label {} appears twice", w[0])));
        }
        let mut leaf = vec![0; n];
        for (id, node) in nodes.iter().enumerate() {
            if node.children.is_empty() {
                let k = labels.binary_search(&order[node.lo]).expect("label present");
                leaf[k] = id;
            }
        }
        Ok(Hierarchy { labels, order, nodes, leaf })
    }
}

impl Hierarchy {
    /// The hierarchy generated by `blocks` on `labels`. The full set and
    /// the singletons are added; empty and repeated blocks are ignored.
    pub fn new(labels: impl IntoIterator<Item = Label>, blocks: impl IntoIterator<Item = Vec<Label>>) -> Result<Self> {
        let mut labels: Vec<Label> = labels.into_iter().collect();
        labels.sort_unstable();
        if labels.is_empty() {
            return Err(Error::InvalidHierarchy("empty label set".into()));
        }
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidHierarchy(format!("label {} appears twice", w[0])));
        }
        let n = labels.len();
        let mut sets = Vec::new();
        for b in blocks {
            let mut s = b
                .iter()
                .map(|&l| labels.binary_search(&l).map_err(|_| Error::MissingLabel(l)))
                .collect::<Result<Vec<usize>>>()?;
            s.sort_unstable();
            s.dedup();
            if s.len() >= 2 && s.len() < n {
                sets.push(s);
            }
        }
        sets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        sets.dedup();

        let mut raw = Raw::default();
        if n == 1 {
            let r = raw.leaf(labels[0]);
            return raw.finish(r);
        }
        let root = raw.node(vec![]);
        let mut owner = vec![root; n];
        for s in &sets {
            let p = owner[s[0]];
            if s.iter().any(|&x| owner[x] != p) {
                return Err(Error::InvalidHierarchy(format!(
                    "block {:?} overlaps another block without nesting",
                    s.iter().map(|&x| labels[x]).collect::<Vec<_>>()
                )));
            }
            let b = raw.node(vec![]);
            raw.children[p].push(b);
            for &x in s {
                owner[x] = b;
            }
        }
        for (x, &l) in labels.iter().enumerate() {
            let f = raw.leaf(l);
            raw.children[owner[x]].push(f);
        }
        raw.finish(root)
    }

    /// Sorted label set.
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> BlockId {
        BlockId(0)
    }

    /// Number of nonempty blocks.
    pub fn num_blocks(&self) -> usize {
        self.nodes.len()
    }

    /// Sorted members of a block.
    pub fn block(&self, b: BlockId) -> Vec<Label> {
        let node = &self.nodes[b.0];
        let mut v = self.order[node.lo..node.hi].to_vec();
        v.sort_unstable();
        v
    }

    pub fn block_len(&self, b: BlockId) -> usize {
        let node = &self.nodes[b.0];
        node.hi - node.lo
    }

    pub fn children(&self, b: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.nodes[b.0].children.iter().map(|&c| BlockId(c))
    }

    /// All nonempty blocks as sorted label lists, in canonical order.
    pub fn blocks(&self) -> Vec<Vec<Label>> {
        (0..self.nodes.len()).map(|i| self.block(BlockId(i))).collect()
    }

    pub fn contains_block(&self, set: &[Label]) -> bool {
        let mut s = set.to_vec();
        s.sort_unstable();
        s.dedup();
        match s.first() {
            None => true,
            Some(&l) => {
                let Ok(mut v) = self.leaf_of(l) else { return false };
                loop {
                    let len = self.nodes[v].hi - self.nodes[v].lo;
                    if len == s.len() {
                        return self.block(BlockId(v)) == s;
                    }
                    if len > s.len() {
                        return false;
                    }
                    match self.nodes[v].parent {
                        Some(p) => v = p,
                        None => return false,
                    }
                }
            }
        }
    }

    fn leaf_of(&self, l: Label) -> Result<usize> {
        self.labels.binary_search(&l).map(|k| self.leaf[k]).map_err(|_| Error::MissingLabel(l))
    }

    pub fn singleton(&self, l: Label) -> Result<BlockId> {
        self.leaf_of(l).map(BlockId)
    }

    /// Whether label `l` belongs to block `b`.
    pub fn block_contains(&self, b: BlockId, l: Label) -> Result<bool> {
        let pos = self.nodes[self.leaf_of(l)?].lo;
        let node = &self.nodes[b.0];
        Ok(node.lo <= pos && pos < node.hi)
    }

    /// Smallest block containing both labels.
    pub fn mrca_id(&self, i: Label, j: Label) -> Result<BlockId> {
        let (mut a, mut b) = (self.leaf_of(i)?, self.leaf_of(j)?);
        while self.nodes[a].depth > self.nodes[b].depth {
            a = self.nodes[a].parent.expect("deeper than root");
        }
        while self.nodes[b].depth > self.nodes[a].depth {
            b = self.nodes[b].parent.expect("deeper than root");
        }
        while a != b {
            a = self.nodes[a].parent.expect("common root");
            b = self.nodes[b].parent.expect("common root");
        }
        Ok(BlockId(a))
    }

    pub fn mrca(&self, i: Label, j: Label) -> Result<Vec<Label>> {
        Ok(self.block(self.mrca_id(i, j)?))
    }

    /// `{B ∩ A : B a block}`.
    pub fn restrict(&self, a: &[Label]) -> Result<Hierarchy> {
        let mut keep = vec![false; self.nodes.len()];
        for &l in a {
            keep[self.leaf_of(l)?] = true;
        }
        let mut raw = Raw::default();
        let mut image: Vec<Option<usize>> = vec![None; self.nodes.len()];
        for v in (0..self.nodes.len()).rev() {
            let node = &self.nodes[v];
            image[v] = if node.children.is_empty() {
                keep[v].then(|| raw.leaf(self.order[node.lo]))
            } else {
                let kids: Vec<usize> = node.children.iter().filter_map(|&c| image[c]).collect();
                match kids.len() {
                    0 => None,
                    1 => Some(kids[0]),
                    _ => Some(raw.node(kids)),
                }
            };
        }
        let root = image[0].ok_or_else(|| Error::InvalidHierarchy("restriction to the empty set".into()))?;
        raw.finish(root)
    }

    /// The same block structure with every label replaced by `f(label)`.
    pub fn map_labels(&self, f: impl Fn(Label) -> Label) -> Result<Hierarchy> {
        let mut raw = Raw::default();
        let mut image = vec![0usize; self.nodes.len()];
        for v in (0..self.nodes.len()).rev() {
            let node = &self.nodes[v];
            image[v] = if node.children.is_empty() {
                raw.leaf(f(self.order[node.lo]))
            } else {
                raw.node(node.children.iter().map(|&c| image[c]).collect())
            };
        }
        raw.finish(image[0])
    }

    /// Relabel a hierarchy on `[2n+1]` to `[±n]`: odd `k ↦ -(k-1)/2`,
    /// even `k ↦ k/2`.
    pub fn relabel_to_z(&self) -> Result<Hierarchy> {
        let m = self.labels.len() as Label;
        if m % 2 == 0 || self.labels.first() != Some(&1) || self.labels.last() != Some(&m) {
            return Err(Error::InvalidHierarchy(format!(
                "relabeling to [±n] needs labels 1..=2n+1, got {} labels",
                self.labels.len()
            )));
        }
        self.map_labels(|k| if k % 2 == 1 { -(k - 1) / 2 } else { k / 2 })
    }

    /// Inverse of [`Hierarchy::relabel_to_z`].
    pub fn relabel_from_z(&self) -> Result<Hierarchy> {
        let n = self.symmetric_n()?;
        let _ = n;
        self.map_labels(|l| if l <= 0 { 1 - 2 * l } else { 2 * l })
    }

    /// `n` if the labels are exactly `-n..=n`.
    pub fn symmetric_n(&self) -> Result<usize> {
        let m = self.labels.len();
        let n = (m / 2) as Label;
        if m % 2 == 1 && self.labels[0] == -n && self.labels[m - 1] == n {
            Ok(n as usize)
        } else {
            Err(Error::InvalidHierarchy("labels are not of the form -n..=n".into()))
        }
    }

    /// Checks the defining properties from the explicit block list.
    pub fn is_laminar(&self) -> bool {
        let blocks = self.blocks();
        let sets: Vec<std::collections::BTreeSet<Label>> = blocks.iter().map(|b| b.iter().copied().collect()).collect();
        let full = sets.iter().any(|s| s.len() == self.labels.len());
        let singles = self.labels.iter().all(|l| sets.iter().any(|s| s.len() == 1 && s.contains(l)));
        let nested = sets
            .iter()
            .enumerate()
            .all(|(i, a)| sets[i + 1..].iter().all(|b| a.is_disjoint(b) || a.is_subset(b) || b.is_subset(a)));
        let distinct = {
            let mut b = blocks.clone();
            b.sort();
            b.dedup();
            b.len() == blocks.len()
        };
        full && singles && nested && distinct
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hierarchies serialize")
    }

    pub fn from_json(s: &str) -> Result<Hierarchy> {
        Ok(serde_json::from_str(s)?)
    }

    fn nested(&self, v: usize) -> Nested {
        let node = &self.nodes[v];
        if node.children.is_empty() {
            Nested::Leaf(self.order[node.lo])
        } else {
            Nested::Block(node.children.iter().map(|&c| self.nested(c)).collect())
        }
    }
}

/// JSON layout: a block is an array of its children, a singleton is its
/// label. The root is always an array.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Nested {
    Leaf(Label),
    Block(Vec<Nested>),
}

impl Serialize for Hierarchy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.nested(0) {
            Nested::Leaf(l) => Nested::Block(vec![Nested::Leaf(l)]).serialize(s),
            b => b.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Hierarchy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        fn build(raw: &mut Raw, n: &Nested) -> std::result::Result<usize, String> {
            match n {
                Nested::Leaf(l) => Ok(raw.leaf(*l)),
                Nested::Block(kids) => {
                    let mut ids = kids.iter().map(|k| build(raw, k)).collect::<std::result::Result<Vec<_>, _>>()?;
                    match ids.len() {
                        0 => Err("empty block".into()),
                        1 => Ok(ids.pop().expect("one")),
                        _ => Ok(raw.node(ids)),
                    }
                }
            }
        }
        let top = Nested::deserialize(d)?;
        if matches!(top, Nested::Leaf(_)) {
            return Err(serde::de::Error::custom("the root block must be an array"));
        }
        let mut raw = Raw::default();
        let root = build(&mut raw, &top).map_err(serde::de::Error::custom)?;
        raw.finish(root).map_err(serde::de::Error::custom)
    }
}

/// Range of sorted `points` in the fringe of `v`. The fringe is a
/// contiguous run of the lexicographic order starting at the first point
/// not below `v`.
fn fringe_range(points: &[&L1Point], v: &L1Point) -> (usize, usize) {
    let lo = points.partition_point(|p| lex_cmp(p, v).is_lt());
    let len = points[lo..].partition_point(|p| is_on_root_path(v, p));
    (lo, lo + len)
}

/// The hierarchy on `[n]` of fringe sets `{i : x ≤ tᵢ}` of the given
/// points, `tᵢ = samples[i-1]`.
pub fn hierarchy_from_samples(samples: &[L1Point]) -> Result<Hierarchy> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidHierarchy("no samples".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| lex_cmp(&samples[a], &samples[b]).then(a.cmp(&b)));
    let sorted: Vec<&L1Point> = idx.iter().map(|&i| &samples[i]).collect();

    let mut ranges = vec![(0, n)];
    for p in &sorted {
        ranges.push(fringe_range(&sorted, p));
    }
    for w in sorted.windows(2) {
        ranges.push(fringe_range(&sorted, &wedge(w[0], w[1])));
    }
    ranges.retain(|&(lo, hi)| hi - lo >= 2);
    ranges.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    ranges.dedup();

    // Nest the ranges with a stack; each sorted position becomes a leaf.
    let label = |k: usize| idx[k] as Label + 1;
    let mut raw = Raw::default();
    if n == 1 {
        let r = raw.leaf(1);
        return raw.finish(r);
    }
    let mut stack: Vec<(usize, usize, Vec<usize>)> = vec![];
    let mut next = 0usize;
    let close = |raw: &mut Raw, stack: &mut Vec<(usize, usize, Vec<usize>)>| {
        let (_, _, kids) = stack.pop().expect("open range");
        let id = raw.node(kids);
        stack.last_mut().expect("inside root").2.push(id);
    };
    for &(lo, hi) in &ranges {
        while let Some(&(_, top_hi, _)) = stack.last() {
            if lo >= top_hi {
                while next < top_hi {
                    let f = raw.leaf(label(next));
                    stack.last_mut().expect("open").2.push(f);
                    next += 1;
                }
                close(&mut raw, &mut stack);
            } else {
                break;
            }
        }
        while next < lo {
            let f = raw.leaf(label(next));
            stack.last_mut().expect("root is open").2.push(f);
            next += 1;
        }
        stack.push((lo, hi, vec![]));
    }
    while let Some(&(_, top_hi, _)) = stack.last() {
        while next < top_hi {
            let f = raw.leaf(label(next));
            stack.last_mut().expect("open").2.push(f);
            next += 1;
        }
        if stack.len() == 1 {
            break;
        }
        close(&mut raw, &mut stack);
    }
    let (_, _, kids) = stack.pop().expect("root range");
    let root = raw.node(kids);
    raw.finish(root)
}

/// Draw `n` points from the weight of `tree` and return their hierarchy on
/// `[n]` along with the points. Seeded runs share prefixes: the first `k`
/// points of a run with `n > k` are the points of the `k`-run.
pub fn derive_hierarchy(tree: &IpTree, n: usize, seed: u64) -> Result<(Hierarchy, Vec<L1Point>)> {
    if n == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let check = tree.is_ip_tree();
    if !check.valid {
        return Err(Error::InvalidTree(format!("not an IP tree: {} violation(s)", check.violations.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = tree.sample_points(n, &mut rng)?;
    Ok((hierarchy_from_samples(&samples)?, samples))
}

/// Largest sample count accepted by [`brute_force_hierarchy_oracle`].
pub const ORACLE_MAX_SAMPLES: usize = 10;

/// Fringe hierarchy found by testing every subset `S ⊆ [n]` against the
/// fringe of the meet of `{tᵢ : i ∈ S}`.
pub fn brute_force_hierarchy_oracle(samples: &[L1Point]) -> Result<Hierarchy> {
    let n = samples.len();
    if n == 0 || n > ORACLE_MAX_SAMPLES {
        return Err(Error::Domain(format!("oracle needs 1..={ORACLE_MAX_SAMPLES} samples, got {n}")));
    }
    let mut blocks = vec![];
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let meet = members[1..].iter().fold(samples[members[0]].clone(), |m, &i| wedge(&m, &samples[i]));
        let fringe: Vec<usize> = (0..n).filter(|&i| is_on_root_path(&meet, &samples[i])).collect();
        if fringe == members {
            blocks.push(members.iter().map(|&i| i as Label + 1).collect());
        }
    }
    Hierarchy::new(1..=n as Label, blocks)
}

/// Law of the hierarchy of `n` samples from a purely atomic tree, by
/// enumeration of all atom tuples. Entries are sorted by their JSON form.
pub fn sample_law(tree: &IpTree, n: usize) -> Result<Vec<(Hierarchy, f64)>> {
    let atoms = tree.weight().atoms();
    if !tree.weight().is_purely_atomic() {
        return Err(Error::Domain("exact sample laws need a purely atomic weight".into()));
    }
    let tuples = (atoms.len() as f64).powi(n as i32);
    if n == 0 || tuples > 1e6 {
        return Err(Error::Domain(format!("{} atoms and n = {n} is too many tuples", atoms.len())));
    }
    let mut law: BTreeMap<String, (Hierarchy, f64)> = BTreeMap::new();
    let mut pick = vec![0usize; n];
    loop {
        let pts: Vec<L1Point> = pick.iter().map(|&k| atoms[k].point().clone()).collect();
        let p: f64 = pick.iter().map(|&k| atoms[k].mass()).product();
        let h = hierarchy_from_samples(&pts)?;
        law.entry(h.to_json()).or_insert_with(|| (h, 0.0)).1 += p;
        let mut d = 0;
        while d < n {
            pick[d] += 1;
            if pick[d] < atoms.len() {
                break;
            }
            pick[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
    }
    Ok(law.into_values().collect())
}

/// Total variation distance between two laws from [`sample_law`].
pub fn total_variation(a: &[(Hierarchy, f64)], b: &[(Hierarchy, f64)]) -> f64 {
    let mut diff: HashMap<&Hierarchy, f64> = HashMap::new();
    for (h, p) in a {
        *diff.entry(h).or_default() += p;
    }
    for (h, p) in b {
        *diff.entry(h).or_default() -= p;
    }
    diff.values().map(|d| d.abs()).sum::<f64>() / 2.0
}

/// Plug-in spinal coordinates `X̂ⁱⱼ = 1 - #(i∧j)/(2n)`, clipped to `[0, 1]`,
/// of a hierarchy on `[±n]`. Entries are computed on demand.
pub struct SpinalMatrix<'a> {
    h: &'a Hierarchy,
    n: usize,
}

pub fn estimate_spinal(h: &Hierarchy) -> Result<SpinalMatrix<'_>> {
    let n = h.symmetric_n()?;
    if n == 0 {
        return Err(Error::InvalidHierarchy("spinal coordinates need n >= 1".into()));
    }
    Ok(SpinalMatrix { h, n })
}

impl SpinalMatrix<'_> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Unclipped `1 - #(i∧j)/(2n)`.
    pub fn raw(&self, i: Label, j: Label) -> Result<f64> {
        if i == j {
            return Err(Error::Domain(format!("spinal coordinate needs distinct labels, got {i} twice")));
        }
        let c = self.h.block_len(self.h.mrca_id(i, j)?);
        Ok(1.0 - c as f64 / (2 * self.n) as f64)
    }

    pub fn get(&self, i: Label, j: Label) -> Result<f64> {
        Ok(self.raw(i, j)?.clamp(0.0, 1.0))
    }
}

/// Output of [`reconstruct_tree`].
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Union of root paths to the samples, weighted by their empirical law.
    pub tree: IpTree,
    /// `t_j` for `j = 1..=n`.
    pub samples: Vec<L1Point>,
}

/// Embed the labels of a hierarchy on `[±n]` by `K` steps of the spinal
/// recursion: at step `k = 0, -1, …, -K+1` every label `j ∉ {k-1, …, -1}`
/// moves out along `e_{|k-1|}` to depth `X̂^{k-1}_j` if it is not already
/// that deep. All labels moved in one step start from the spine point of
/// `k-1`; a violation is reported as an error.
pub fn reconstruct_tree(h: &Hierarchy, k_steps: usize) -> Result<Reconstruction> {
    let x = estimate_spinal(h)?;
    let n = x.n();
    if k_steps == 0 || k_steps > n {
        return Err(Error::Domain(format!("depth K must be in 1..={n}, got {k_steps}")));
    }
    let ni = n as Label;
    let slot = |l: Label| (l + ni) as usize;
    let mut t = vec![L1Point::origin(); 2 * n + 1];
    // Exact depth of each label: the last spinal value it moved out to.
    let mut depth = vec![0.0f64; 2 * n + 1];
    for step in 0..k_steps {
        let s = -(step as Label) - 1;
        let axis = (-s) as u32;
        let site = t[slot(s)].clone();
        for j in (-ni..=ni).filter(|&j| j < s || j >= 0) {
            let v = x.get(s, j)?;
            let d = depth[slot(j)];
            if v > d {
                if t[slot(j)] != site {
                    return Err(Error::InvalidHierarchy(format!(
                        "line-breaking fails at step {s}: label {j} moves out from {} instead of {site}",
                        t[slot(j)]
                    )));
                }
                t[slot(j)] = t[slot(j)].with_last(axis, v - d)?;
                depth[slot(j)] = v;
            }
        }
    }
    let samples: Vec<L1Point> = (1..=ni).map(|j| t[slot(j)].clone()).collect();
    let tree = tree_from_samples(&samples)?;
    Ok(Reconstruction { tree, samples })
}

/// The union of root paths to `samples` with their empirical measure as
/// pending atoms. Coincident samples share one atom.
pub fn tree_from_samples(samples: &[L1Point]) -> Result<IpTree> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Domain("no samples".into()));
    }
    let mut reach: HashMap<(L1Point, u32), f64> = HashMap::new();
    let mut count: HashMap<&L1Point, usize> = HashMap::new();
    for p in samples {
        *count.entry(p).or_default() += 1;
        for (k, &(axis, v)) in p.coords().iter().enumerate() {
            let base = L1Point::new(p.coords()[..k].to_vec())?;
            let e = reach.entry((base, axis)).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let mut arcs = reach
        .into_iter()
        .map(|((base, axis), v)| {
            let upper = base.with_last(axis, v)?;
            Arc::new(base, upper, axis)
        })
        .collect::<Result<Vec<_>>>()?;
    arcs.sort_by(|a, b| a.axis.cmp(&b.axis).then_with(|| lex_cmp(&a.upper, &b.upper)));
    let mut atoms: Vec<TreeAtom> =
        count.into_iter().map(|(p, c)| TreeAtom(p.clone(), c as f64 / n as f64, AtomTag::Pending)).collect();
    atoms.sort_by(|a, b| lex_cmp(a.point(), b.point()));
    IpTree::from_parts(arcs, TreeMeasure::new(atoms, vec![])?, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iptree::tests::three_atom_tree;
    use crate::iptree::{build_model, Model, PointKind};
    use crate::measure::{Atom1D, FadMeasure1D};
    use proptest::prelude::*;
    use rand::Rng;

    fn p(c: &[(u32, f64)]) -> L1Point {
        L1Point::new(c.to_vec()).unwrap()
    }

    fn h(labels: std::ops::RangeInclusive<Label>, blocks: &[&[Label]]) -> Hierarchy {
        Hierarchy::new(labels, blocks.iter().map(|b| b.to_vec())).unwrap()
    }

    #[test]
    fn construction_and_json() {
        let one = h(1..=1, &[]);
        assert_eq!(one.blocks(), vec![vec![1]]);
        assert_eq!(one.to_json(), "[1]");
        assert_eq!(Hierarchy::from_json("[1]").unwrap(), one);

        let x = h(1..=5, &[&[1, 3], &[1, 2, 3], &[4, 5]]);
        assert_eq!(x.to_json(), "[[[1,3],2],[4,5]]");
        assert_eq!(Hierarchy::from_json(&x.to_json()).unwrap(), x);
        assert!(x.is_laminar());
        assert_eq!(x.num_blocks(), 9);
        assert!(x.contains_block(&[3, 1]));
        assert!(!x.contains_block(&[2, 3]));

        assert!(Hierarchy::new(1..=3, vec![vec![1, 2], vec![2, 3]]).is_err());
        assert!(matches!(Hierarchy::new(1..=3, vec![vec![1, 7]]), Err(Error::MissingLabel(7))));
        assert!(Hierarchy::from_json("[[1,2],[2,3]]").is_err());
        assert!(Hierarchy::from_json("4").is_err());
    }

    #[test]
    fn mrca_examples() {
        let star = h(1..=4, &[]);
        assert_eq!(star.mrca(2, 2).unwrap(), vec![2]);
        assert_eq!(star.mrca(1, 3).unwrap(), vec![1, 2, 3, 4]);
        let x = h(1..=5, &[&[1, 3], &[1, 2, 3], &[4, 5]]);
        assert_eq!(x.mrca(1, 3).unwrap(), vec![1, 3]);
        assert_eq!(x.mrca(2, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(x.mrca(2, 5).unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(matches!(x.mrca(2, 9), Err(Error::MissingLabel(9))));
    }

    #[test]
    fn dyadic_blocks_give_dyadic_mrcas() {
        // Unit blocks of [0,3), dyadic blocks of [0,1), and tails [x,3) for x in (2,3).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 3.0).collect();
        let members = |f: &dyn Fn(f64) -> bool| -> Vec<Label> {
            (0..s.len()).filter(|&i| f(s[i])).map(|i| i as Label + 1).collect()
        };
        let mut blocks = vec![];
        for u in 0..3 {
            blocks.push(members(&|v| v >= u as f64 && v < u as f64 + 1.0));
        }
        for lvl in 1..=53 {
            let w = 0.5f64.powi(lvl);
            for &v in &s {
                if v < 1.0 {
                    let j = (v / w).floor();
                    blocks.push(members(&|y| y >= j * w && y < (j + 1.0) * w));
                }
            }
        }
        for &x in &s {
            if x > 2.0 {
                blocks.push(members(&|y| y >= x));
            }
        }
        let hh = Hierarchy::new(1..=s.len() as Label, blocks.clone()).unwrap();
        assert!(hh.is_laminar());
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i == j || s[i] >= 1.0 || s[j] >= 1.0 {
                    continue;
                }
                // Smallest dyadic interval holding both, by brute force.
                let lvl =
                    (0..=53).rev().find(|&l| (s[i] * 2f64.powi(l)).floor() == (s[j] * 2f64.powi(l)).floor()).unwrap();
                let w = 0.5f64.powi(lvl);
                let k = (s[i] / w).floor();
                let want = members(&|y| y >= k * w && y < (k + 1.0) * w);
                assert_eq!(hh.mrca(i as Label + 1, j as Label + 1).unwrap(), want);
            }
        }
    }

    #[test]
    fn restriction_examples() {
        let x = h(1..=5, &[&[1, 3], &[1, 2, 3], &[4, 5]]);
        assert_eq!(x.restrict(&[1, 2, 3, 4, 5]).unwrap(), x);
        assert_eq!(x.restrict(&[4]).unwrap(), h(4..=4, &[]));
        assert_eq!(x.restrict(&[1, 2, 4]).unwrap(), Hierarchy::new([1, 2, 4], vec![vec![1, 2]]).unwrap());
        assert!(x.restrict(&[]).is_err());
    }

    #[test]
    fn relabeling_roundtrips() {
        for x in [h(1..=1, &[]), h(1..=3, &[&[1, 3]]), h(1..=7, &[&[1, 2, 3], &[6, 7], &[4, 6, 7]])] {
            let z = x.relabel_to_z().unwrap();
            let n = (x.len() / 2) as Label;
            assert_eq!(z.labels(), (-n..=n).collect::<Vec<_>>());
            assert_eq!(z.relabel_from_z().unwrap(), x);
        }
        let z = h(1..=3, &[&[1, 3]]).relabel_to_z().unwrap();
        assert!(z.contains_block(&[0, -1]));
        assert!(h(1..=4, &[]).relabel_to_z().is_err());
    }

    #[test]
    fn derived_trivial_cases() {
        let (one, _) = derive_hierarchy(&IpTree::new(), 1, 3).unwrap();
        assert_eq!(one, h(1..=1, &[]));
        let (star, pts) = derive_hierarchy(&IpTree::new(), 3, 3).unwrap();
        assert!(pts.iter().all(|x| x.is_origin()));
        assert_eq!(star, h(1..=3, &[]));
    }

    #[test]
    fn two_atom_tree_blocks_follow_fringes() {
        // Samples from ½δ_{½e₁} + ½δ_{e₁}.
        let a = p(&[(1, 0.5)]);
        let b = p(&[(1, 1.0)]);
        let samples = vec![a.clone(), b.clone(), b.clone(), a.clone(), b.clone()];
        let got = hierarchy_from_samples(&samples).unwrap();
        assert_eq!(got, h(1..=5, &[&[2, 3, 5]]));
        assert_eq!(got, brute_force_hierarchy_oracle(&samples).unwrap());

        // Same shape in an IP tree: atoms ½ at the origin and ½ at ½e₁.
        let t = IpTree::new()
            .crush(
                &L1Point::origin(),
                1.0,
                &FadMeasure1D::new(vec![Atom1D::new(0.0, 0.5), Atom1D::new(0.5, 0.5)], vec![]).unwrap(),
            )
            .unwrap();
        let (d, pts) = derive_hierarchy(&t, 8, 9).unwrap();
        let far: Vec<Label> = (0..8).filter(|&i| !pts[i].is_origin()).map(|i| i as Label + 1).collect();
        let proper = far.len() >= 2 && far.len() < 8;
        assert_eq!(d.num_blocks(), 9 + usize::from(proper));
        assert!(!proper || d.contains_block(&far));
    }

    #[test]
    fn oracle_trivia() {
        assert_eq!(brute_force_hierarchy_oracle(&[p(&[(2, 1.0)])]).unwrap(), h(1..=1, &[]));
        let same = vec![p(&[(1, 0.3)]); 4];
        assert_eq!(brute_force_hierarchy_oracle(&same).unwrap(), h(1..=4, &[]));
        assert!(brute_force_hierarchy_oracle(&vec![L1Point::origin(); 11]).is_err());
    }

    #[test]
    fn spinal_examples() {
        let star = h(1..=5, &[]).relabel_to_z().unwrap();
        let x = estimate_spinal(&star).unwrap();
        assert_eq!(x.raw(-1, 2).unwrap(), 1.0 - 5.0 / 4.0);
        assert_eq!(x.get(-1, 2).unwrap(), 0.0);
        // Chain in which every pair's MRCA is exactly the pair.
        let chain = Hierarchy::new(-2..=2, vec![vec![-1, 1]]).unwrap();
        let x = estimate_spinal(&chain).unwrap();
        assert_eq!(x.get(-1, 1).unwrap(), 1.0 - 2.0 / 4.0);
        assert!(x.get(1, 1).is_err());
        assert!(estimate_spinal(&h(1..=3, &[])).is_err());
    }

    #[test]
    fn spinal_matches_lebesgue_minimum() {
        let seg = IpTree::from_line_measure(&FadMeasure1D::lebesgue(0.0, 1.0).unwrap()).unwrap();
        let n = 2000;
        let (hh, pts) = derive_hierarchy(&seg, 2 * n + 1, 17).unwrap();
        let z = hh.relabel_to_z().unwrap();
        let x = estimate_spinal(&z).unwrap();
        let coord = |l: Label| {
            let k = if l <= 0 { 1 - 2 * l } else { 2 * l };
            pts[k as usize - 1].norm()
        };
        let mut worst = 0.0f64;
        for (i, j) in [(-3, 5), (1, 2), (-7, -8), (10, 0), (30, -30)] {
            worst = worst.max((x.get(i, j).unwrap() - coord(i).min(coord(j))).abs());
        }
        // Binomial sd of a fraction from 4001 draws is below 0.008.
        assert!(worst < 0.04, "{worst}");
    }

    #[test]
    fn reconstruct_base_step() {
        let t = three_atom_tree();
        let (hh, _) = derive_hierarchy(&t, 41, 2).unwrap();
        let z = hh.relabel_to_z().unwrap();
        let x = estimate_spinal(&z).unwrap();
        let r = reconstruct_tree(&z, 1).unwrap();
        for j in 1..=20 {
            let want = x.get(-1, j).unwrap();
            let got = &r.samples[j as usize - 1];
            if want == 0.0 {
                assert!(got.is_origin());
            } else {
                assert_eq!(got, &L1Point::on_axis(1, want).unwrap());
            }
        }
        assert!(reconstruct_tree(&z, 0).is_err());
        assert!(reconstruct_tree(&z, 21).is_err());
    }

    #[test]
    fn reconstruct_three_atom_tree() {
        let t = three_atom_tree();
        let mut want: Vec<_> = t.special_points().unwrap();
        want.sort_by(|a, b| {
            a.stats.path_mass.total_cmp(&b.stats.path_mass).then(a.stats.atom_mass.total_cmp(&b.stats.atom_mass))
        });
        let (hh, _) = derive_hierarchy(&t, 4001, 1).unwrap();
        let r = reconstruct_tree(&hh.relabel_to_z().unwrap(), 20).unwrap();
        let mut got = r.tree.special_points_unchecked().unwrap();
        got.sort_by(|a, b| {
            a.stats.path_mass.total_cmp(&b.stats.path_mass).then(a.stats.atom_mass.total_cmp(&b.stats.atom_mass))
        });
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.kind, w.kind);
            for (a, b) in [
                (g.stats.path_mass, w.stats.path_mass),
                (g.stats.atom_mass, w.stats.atom_mass),
                (g.stats.fringe_mass, w.stats.fringe_mass),
            ] {
                assert!((a - b).abs() < 0.05, "{g:?} vs {w:?}");
            }
        }
        assert!(got.iter().any(|s| s.kind == PointKind::Branch));
    }

    #[test]
    fn reconstruction_preserves_three_sample_law() {
        // Purely atomic source: atoms pushed out by a few atomic crushes.
        let q =
            |v: &[(f64, f64)]| FadMeasure1D::new(v.iter().map(|&(l, m)| Atom1D::new(l, m)).collect(), vec![]).unwrap();
        let model = Model::Custom { strings: vec![q(&[(0.0, 0.3), (0.3, 0.7)]), q(&[(0.0, 0.5), (0.5, 0.5)])] };
        let t = build_model(&model, 3, 0).unwrap();
        assert!(t.weight().is_purely_atomic());
        let source = sample_law(&t, 3).unwrap();
        let (hh, _) = derive_hierarchy(&t, 4001, 8).unwrap();
        let r = reconstruct_tree(&hh.relabel_to_z().unwrap(), 30).unwrap();
        let rebuilt = sample_law(&r.tree, 3).unwrap();
        let tv = total_variation(&source, &rebuilt);
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn sample_law_is_a_probability() {
        let law = sample_law(&three_atom_tree(), 3).unwrap();
        let s: f64 = law.iter().map(|e| e.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(sample_law(&IpTree::from_line_measure(&FadMeasure1D::lebesgue(0.0, 1.0).unwrap()).unwrap(), 3).is_err());
    }

    fn arb_tree() -> impl Strategy<Value = IpTree> {
        (0usize..25, any::<u64>(), 0usize..3).prop_map(|(steps, seed, m)| {
            let model = match m {
                0 => Model::brownian(),
                1 => Model::FatCantor { depth: 3 },
                _ => Model::AlphaTheta { alpha: 0.3, theta: 1.0, truncation: 30 },
            };
            build_model(&model, steps, seed).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn derived_matches_oracle_and_restricts(t in arb_tree(), n in 1usize..=8, seed in any::<u64>()) {
            let (hh, pts) = derive_hierarchy(&t, n + 1, seed).unwrap();
            prop_assert!(hh.is_laminar());
            prop_assert_eq!(&hh, &brute_force_hierarchy_oracle(&pts).unwrap());
            let (small, _) = derive_hierarchy(&t, n, seed).unwrap();
            let labels: Vec<Label> = (1..=n as Label).collect();
            prop_assert_eq!(hh.restrict(&labels).unwrap(), small);
        }

        #[test]
        fn mrca_is_the_fringe_of_the_wedge(t in arb_tree(), n in 2usize..=8, seed in any::<u64>()) {
            let (hh, pts) = derive_hierarchy(&t, n, seed).unwrap();
            for u in 0..n {
                for v in u + 1..n {
                    let w = wedge(&pts[u], &pts[v]);
                    let want: Vec<Label> = (0..n).filter(|&j| is_on_root_path(&w, &pts[j])).map(|j| j as Label + 1).collect();
                    prop_assert_eq!(hh.mrca(u as Label + 1, v as Label + 1).unwrap(), want);
                }
            }
        }

        #[test]
        fn restriction_is_functorial_and_projects_mrcas(t in arb_tree(), seed in any::<u64>(), mask in any::<u32>()) {
            let (hh, _) = derive_hierarchy(&t, 12, seed).unwrap();
            let b: Vec<Label> = (1..=12).filter(|k| mask >> k & 1 == 1 || *k <= 2).collect();
            let a: Vec<Label> = b.iter().copied().filter(|k| mask >> (k + 12) & 1 == 1 || *k <= 2).collect();
            let hb = hh.restrict(&b).unwrap();
            prop_assert_eq!(hb.restrict(&a).unwrap(), hh.restrict(&a).unwrap());
            let ha = hh.restrict(&a).unwrap();
            for &i in &a {
                for &j in &a {
                    let big: Vec<Label> = hh.mrca(i, j).unwrap().into_iter().filter(|l| a.contains(l)).collect();
                    prop_assert_eq!(ha.mrca(i, j).unwrap(), big);
                }
            }
        }
    }
}
