//! SVG drawings of embedded trees.
//!
//! The root is at the top and depth grows downward, so `y` is the distance
//! from the root. Each line of the tree is a vertical stroke; its
//! horizontal slot comes from an in-order walk in which a line sits between
//! the first and second halves of the lines hanging off it. Atoms are black
//! wedges whose size grows with their mass, and density is a heavy shaded
//! stroke over the skeleton.

use std::fmt::Write;

use crate::error::Result;
use crate::iptree::index::{Loc, TreeIndex};
use crate::iptree::IpTree;

/// Drawing parameters in SVG user units.
#[derive(Clone, Debug)]
pub struct Style {
    pub slot_width: f64,
    pub depth_scale: f64,
    pub margin: f64,
    pub wedge_size: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style { slot_width: 24.0, depth_scale: 360.0, margin: 30.0, wedge_size: 60.0 }
    }
}

/// Horizontal slot of every line (and of the root).
fn slots(ix: &TreeIndex) -> (Vec<f64>, f64, usize) {
    enum Visit {
        Line(usize),
        Place(usize),
    }
    let mut x = vec![0.0; ix.lines.len()];
    let mut next = 0usize;
    let mut root_x = 0.0;
    let mut stack = vec![];
    let push_line = |stack: &mut Vec<Visit>, kids: &[usize], own: Option<usize>| {
        let half = kids.len() / 2;
        // Reverse order: right half, own slot, left half.
        for &c in kids[half..].iter().rev() {
            stack.push(Visit::Line(c));
        }
        if let Some(l) = own {
            stack.push(Visit::Place(l));
        }
        for &c in kids[..half].iter().rev() {
            stack.push(Visit::Line(c));
        }
    };
    let root_kids = ix.root_children.clone();
    push_line(&mut stack, &root_kids, None);
    if root_kids.is_empty() {
        next = 1;
    }
    while let Some(v) = stack.pop() {
        match v {
            Visit::Place(l) => {
                x[l] = next as f64;
                next += 1;
            }
            Visit::Line(l) => {
                let kids: Vec<usize> = ix.lines[l].children.iter().map(|c| c.1).collect();
                push_line(&mut stack, &kids, Some(l));
            }
        }
    }
    if !root_kids.is_empty() {
        let xs: Vec<f64> = root_kids.iter().map(|&c| x[c]).collect();
        root_x = (xs.iter().copied().fold(f64::INFINITY, f64::min)
            + xs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            / 2.0;
    }
    (x, root_x, next.max(1))
}

/// Render `tree` with the default style.
pub fn render_svg(tree: &IpTree) -> Result<String> {
    render_svg_with(tree, &Style::default())
}

pub fn render_svg_with(tree: &IpTree, style: &Style) -> Result<String> {
    let ix = tree.index()?;
    let (slot, root_slot, n_slots) = slots(&ix);
    let depth = ix.lines.iter().map(|l| l.base_norm() + l.end).fold(0.0f64, f64::max);
    let scale = if depth > 0.0 { style.depth_scale / depth } else { style.depth_scale };
    let m = style.margin;
    let width = 2.0 * m + n_slots as f64 * style.slot_width;
    let height = 2.0 * m + style.depth_scale + style.wedge_size;
    let px = |s: f64| m + (s + 0.5) * style.slot_width;
    let py = |d: f64| m + d * scale;
    let at = |loc: Loc| match loc {
        Loc::Root => (px(root_slot), py(0.0)),
        Loc::On(l, p) => (px(slot[l]), py(ix.lines[l].base_norm() + p)),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(svg, r#"<g stroke="black" stroke-width="1.2" fill="none">"#);
    for (l, line) in ix.lines.iter().enumerate() {
        let (x0, y0) = at(line.parent);
        let x1 = px(slot[l]);
        let y1 = py(line.base_norm() + line.end);
        if (x0 - x1).abs() > 1e-9 {
            let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
        }
        let _ = writeln!(svg, r#"<line x1="{x1:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/>"#);
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r##"<g stroke="#777" stroke-opacity="0.75" stroke-width="6" stroke-linecap="butt">"##);
    for (l, line) in ix.lines.iter().enumerate() {
        let x = px(slot[l]);
        for &(s, e, _) in &line.density {
            let (a, b) = (py(line.base_norm() + s), py(line.base_norm() + e));
            let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{a:.2}" x2="{x:.2}" y2="{b:.2}"/>"#);
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g fill="black">"#);
    let mut wedge = |loc: Loc, mass: f64| {
        let (x, y) = at(loc);
        let h = style.wedge_size * mass.sqrt();
        let w = h / 2.5;
        let _ =
            writeln!(svg, r#"<polygon points="{x:.2},{y:.2} {:.2},{:.2} {:.2},{:.2}"/>"#, x - w, y + h, x + w, y + h);
    };
    if ix.root_atom > 0.0 {
        wedge(Loc::Root, ix.root_atom);
    }
    for (l, line) in ix.lines.iter().enumerate() {
        for &(p, mass, _) in &line.atoms {
            wedge(Loc::On(l, p), mass);
        }
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iptree::{build_model, Model};
    use crate::l1geom::L1Point;
    use crate::measure::FadMeasure1D;

    fn count(s: &str, pat: &str) -> usize {
        s.matches(pat).count()
    }

    #[test]
    fn one_point_tree_is_a_single_wedge() {
        let s = render_svg(&IpTree::new()).unwrap();
        assert_eq!(count(&s, "<polygon"), 1);
        assert_eq!(count(&s, "<line"), 0);
    }

    #[test]
    fn unit_segment_is_one_heavy_line() {
        let t = IpTree::new().crush(&L1Point::origin(), 1.0, &FadMeasure1D::lebesgue(0.0, 1.0).unwrap()).unwrap();
        let s = render_svg(&t).unwrap();
        assert_eq!(count(&s, "<polygon"), 0);
        assert_eq!(count(&s, "<line"), 2);
        assert!(s.contains(r#"stroke-width="6""#));
    }

    #[test]
    fn every_atom_and_line_is_drawn() {
        let t = build_model(&Model::FatCantor { depth: 3 }, 6, 2).unwrap();
        let s = render_svg(&t).unwrap();
        assert_eq!(count(&s, "<polygon"), t.weight().atoms().len());
        let ix = t.index().unwrap();
        let dens: usize = ix.lines.iter().map(|l| l.density.len()).sum();
        assert!(count(&s, "<line") >= ix.lines.len() + dens);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}
