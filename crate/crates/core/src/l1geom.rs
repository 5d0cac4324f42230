//! Sparse nonnegative points of ℓ₁ and the axis-path geometry built on them.
//!
//! The root path `[[0, x]]` of a point `x` runs from the origin along axis 1
//! to `x₁`, then parallel to axis 2 up to `x₂`, and so on. Two root paths
//! share an initial piece `[[0, z]]` where `z` is their [`wedge`]; trees built
//! by bead crushing are unions of such paths, so the tree metric on them is
//! [`path_distance`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of ℓ₁ with finitely many positive coordinates.
///
/// Coordinates are `(index, value)` pairs with strictly increasing indices
/// starting at 1; zero coordinates are never stored. Equality is exact
/// bitwise equality of the stored values.
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, f64)>", into = "Vec<(u32, f64)>")]
pub struct L1Point {
    coords: Vec<(u32, f64)>,
}

impl L1Point {
    pub fn origin() -> Self {
        L1Point { coords: Vec::new() }
    }

    /// `value · e_axis`. A zero value gives the origin.
    pub fn on_axis(axis: u32, value: f64) -> Result<Self> {
        Self::new(vec![(axis, value)].into_iter().filter(|&(_, v)| v != 0.0).collect())
    }

    pub fn new(coords: Vec<(u32, f64)>) -> Result<Self> {
        let mut prev = 0u32;
        for &(i, v) in &coords {
            if i == 0 {
                return Err(Error::InvalidPoint("coordinate index 0".into()));
            }
            if i <= prev {
                return Err(Error::InvalidPoint(format!("indices not strictly increasing at {i}")));
            }
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidPoint(format!("coordinate {i} has value {v}")));
            }
            prev = i;
        }
        Ok(L1Point { coords })
    }

    pub fn coords(&self) -> &[(u32, f64)] {
        &self.coords
    }

    pub fn is_origin(&self) -> bool {
        self.coords.is_empty()
    }

    /// Value at `axis` (0 when absent).
    pub fn coord(&self, axis: u32) -> f64 {
        match self.coords.binary_search_by_key(&axis, |&(i, _)| i) {
            Ok(k) => self.coords[k].1,
            Err(_) => 0.0,
        }
    }

    /// Highest index with a nonzero coordinate.
    pub fn last_axis(&self) -> Option<u32> {
        self.coords.last().map(|&(i, _)| i)
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|&(_, v)| v).sum()
    }

    /// The point obtained by setting coordinate `axis` to `value`, where
    /// `axis` is at least the current last axis. Setting to zero drops it.
    pub fn with_last(&self, axis: u32, value: f64) -> Result<Self> {
        let mut coords = self.coords.clone();
        match coords.last() {
            Some(&(i, _)) if i > axis => {
                return Err(Error::InvalidPoint(format!("axis {axis} is below the last axis {i}")))
            }
            Some(&(i, _)) if i == axis => {
                coords.pop();
            }
            _ => {}
        }
        if value != 0.0 {
            coords.push((axis, value));
        }
        Self::new(coords)
    }

    /// Coordinates with index strictly below `axis`.
    pub fn truncated_below(&self, axis: u32) -> Self {
        L1Point { coords: self.coords.iter().copied().take_while(|&(i, _)| i < axis).collect() }
    }

    /// Apply an index relabeling to every coordinate.
    pub fn map_axes(&self, f: impl Fn(u32) -> u32) -> Result<Self> {
        Self::new(self.coords.iter().map(|&(i, v)| (f(i), v)).collect())
    }
}

impl TryFrom<Vec<(u32, f64)>> for L1Point {
    type Error = Error;
    fn try_from(v: Vec<(u32, f64)>) -> Result<Self> {
        L1Point::new(v)
    }
}

impl From<L1Point> for Vec<(u32, f64)> {
    fn from(p: L1Point) -> Self {
        p.coords
    }
}

impl PartialEq for L1Point {
    fn eq(&self, other: &Self) -> bool {
        self.coords.len() == other.coords.len()
            && self.coords.iter().zip(&other.coords).all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits())
    }
}

impl Eq for L1Point {}

impl Hash for L1Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.coords.len().hash(state);
        for &(i, v) in &self.coords {
            i.hash(state);
            v.to_bits().hash(state);
        }
    }
}

impl fmt::Debug for L1Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for L1Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coords.is_empty() {
            return write!(f, "0");
        }
        for (k, &(i, v)) in self.coords.iter().enumerate() {
            if k > 0 {
                write!(f, "+")?;
            }
            write!(f, "{v}e{i}")?;
        }
        Ok(())
    }
}

/// Merged walk over the dense coordinates of two sparse points.
fn merged<'a>(x: &'a [(u32, f64)], y: &'a [(u32, f64)]) -> impl Iterator<Item = (u32, f64, f64)> + 'a {
    let (mut a, mut b) = (0usize, 0usize);
    std::iter::from_fn(move || match (x.get(a), y.get(b)) {
        (None, None) => None,
        (Some(&(i, v)), None) => {
            a += 1;
            Some((i, v, 0.0))
        }
        (None, Some(&(j, w))) => {
            b += 1;
            Some((j, 0.0, w))
        }
        (Some(&(i, v)), Some(&(j, w))) => match i.cmp(&j) {
            Ordering::Less => {
                a += 1;
                Some((i, v, 0.0))
            }
            Ordering::Greater => {
                b += 1;
                Some((j, 0.0, w))
            }
            Ordering::Equal => {
                a += 1;
                b += 1;
                Some((i, v, w))
            }
        },
    })
}

/// The branch point of two root paths: `[[0,x]] ∩ [[0,y]] = [[0, wedge(x,y)]]`.
pub fn wedge(x: &L1Point, y: &L1Point) -> L1Point {
    let mut coords = Vec::with_capacity(x.coords.len().min(y.coords.len()));
    for (i, v, w) in merged(&x.coords, &y.coords) {
        if v.to_bits() == w.to_bits() {
            coords.push((i, v));
            continue;
        }
        let m = v.min(w);
        if m > 0.0 {
            coords.push((i, m));
        }
        break;
    }
    L1Point { coords }
}

/// True iff `z` lies on the root path of `w`, i.e. `wedge(z, w) == z`.
pub fn is_on_root_path(z: &L1Point, w: &L1Point) -> bool {
    let Some(&(last, zl)) = z.coords.last() else {
        return true;
    };
    let n = z.coords.len();
    if w.coords.len() < n {
        return false;
    }
    for k in 0..n - 1 {
        let (i, v) = z.coords[k];
        let (j, u) = w.coords[k];
        if i != j || v.to_bits() != u.to_bits() {
            return false;
        }
    }
    let (j, u) = w.coords[n - 1];
    j == last && u >= zl
}

/// Tree distance between two points of a common axis-path tree.
pub fn path_distance(x: &L1Point, y: &L1Point) -> f64 {
    let z = wedge(x, y);
    (x.norm() - z.norm()) + (y.norm() - z.norm())
}

/// Lexicographic order of the dense coordinate sequences. The fringe of any
/// point is a contiguous run in this order.
pub fn lex_cmp(x: &L1Point, y: &L1Point) -> Ordering {
    for (_, v, w) in merged(&x.coords, &y.coords) {
        match v.total_cmp(&w) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// A straight piece of an axis-path tree: from `lower` along `axis` to `upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArc")]
pub struct Arc {
    pub lower: L1Point,
    pub upper: L1Point,
    pub axis: u32,
}

#[derive(Deserialize)]
struct RawArc {
    lower: L1Point,
    upper: L1Point,
    axis: u32,
}

impl TryFrom<RawArc> for Arc {
    type Error = Error;
    fn try_from(r: RawArc) -> Result<Self> {
        Arc::new(r.lower, r.upper, r.axis)
    }
}

impl Arc {
    /// `upper` must end on `axis`, and `lower` must differ from `upper` only
    /// by a smaller value on that axis.
    pub fn new(lower: L1Point, upper: L1Point, axis: u32) -> Result<Self> {
        if upper.last_axis() != Some(axis) {
            return Err(Error::InvalidArc(format!("upper {upper} does not end on axis {axis}")));
        }
        if lower.truncated_below(axis) != upper.truncated_below(axis)
            || lower.last_axis().is_some_and(|i| i > axis)
            || lower.coord(axis) >= upper.coord(axis)
        {
            return Err(Error::InvalidArc(format!("{lower} -> {upper} is not a positive piece along axis {axis}")));
        }
        Ok(Arc { lower, upper, axis })
    }

    /// The point where the arc's axis line leaves the rest of the tree.
    pub fn base(&self) -> L1Point {
        self.upper.truncated_below(self.axis)
    }

    /// Axis coordinate of the lower end.
    pub fn start(&self) -> f64 {
        self.lower.coord(self.axis)
    }

    /// Axis coordinate of the upper end.
    pub fn end(&self) -> f64 {
        self.upper.coord(self.axis)
    }

    pub fn length(&self) -> f64 {
        self.end() - self.start()
    }

    /// Axis coordinate of `x` if it lies on the arc.
    pub fn position_of(&self, x: &L1Point) -> Option<f64> {
        let s = match x.last_axis() {
            Some(i) if i == self.axis => x.coord(self.axis),
            Some(i) if i > self.axis => return None,
            _ => 0.0,
        };
        (s >= self.start() && s <= self.end() && x.truncated_below(self.axis) == self.base()).then_some(s)
    }

    /// The point with axis coordinate `s` on the arc's line.
    pub fn point_at(&self, s: f64) -> L1Point {
        let mut coords = self.base().coords;
        if s != 0.0 {
            coords.push((self.axis, s));
        }
        L1Point { coords }
    }
}
