//! Triangular P1 meshes, structured generators and boundary conditions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// How each structured grid cell is split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Triangulation {
    /// Two triangles per cell, split along the lower-left to upper-right diagonal.
    #[default]
    Diagonal,
    /// Four triangles per cell meeting at an added cell-center node.
    Crossed,
}

/// Which displacement components a support fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fix {
    pub x: bool,
    pub y: bool,
}

impl Fix {
    pub const XY: Fix = Fix { x: true, y: true };
    pub const X: Fix = Fix { x: true, y: false };
    pub const Y: Fix = Fix { x: false, y: true };
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    centroids: Vec<[f64; 2]>,
    supports: BTreeMap<usize, Fix>,
    loads: BTreeMap<usize, [f64; 2]>,
}

impl Mesh {
    /// Builds a mesh and checks it: indices in range, strictly positive
    /// counter-clockwise areas, every node used, and every edge shared by at
    /// most two consistently oriented triangles.
    pub fn new(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let mut used = vec![false; nodes.len()];
        let mut areas = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nodes.len() {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references node {v} but the mesh has {} nodes",
                        nodes.len()
                    )));
                }
                used[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let [a, b, c] = tri.map(|v| nodes[v]);
            let area = signed_area(a, b, c);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            areas.push(area);
            centroids.push([(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]);
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("node {v} is not used by any triangle")));
        }
        let mut edges: HashMap<(usize, usize), (u8, u8)> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let entry = edges.entry((a.min(b), a.max(b))).or_insert((0, 0));
                if a < b {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
        for (&(a, b), &(fwd, bwd)) in &edges {
            if fwd > 1 || bwd > 1 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) is not shared conformingly"
                )));
            }
        }
        Ok(Mesh {
            nodes,
            triangles,
            areas,
            centroids,
            supports: BTreeMap::new(),
            loads: BTreeMap::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Axis-aligned bounding box as `([xmin, ymin], [xmax, ymax])`.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Edges that belong to exactly one triangle, oriented as in that triangle.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if count[&(a.min(b), a.max(b))] == 1 {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    /// Index of the node closest to `p`; ties go to the lowest index.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.nodes.iter().enumerate() {
            let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Fixes the given components on every node satisfying `pred`.
    /// Returns the number of nodes affected.
    pub fn fix_where(&mut self, pred: impl Fn([f64; 2]) -> bool, fix: Fix) -> usize {
        let hits: Vec<usize> = (0..self.nodes.len()).filter(|&i| pred(self.nodes[i])).collect();
        for &i in &hits {
            self.fix_node(i, fix);
        }
        hits.len()
    }

    /// Fixes the given components on the node nearest to `p`.
    pub fn fix_nearest(&mut self, p: [f64; 2], fix: Fix) -> usize {
        let i = self.nearest_node(p);
        self.fix_node(i, fix);
        i
    }

    pub fn fix_node(&mut self, node: usize, fix: Fix) {
        let e = self.supports.entry(node).or_insert(Fix { x: false, y: false });
        e.x |= fix.x;
        e.y |= fix.y;
    }

    /// Adds a point force at the node nearest to `p`.
    pub fn add_point_load(&mut self, p: [f64; 2], force: [f64; 2]) -> usize {
        let i = self.nearest_node(p);
        self.add_nodal_load(i, force);
        i
    }

    pub fn add_nodal_load(&mut self, node: usize, force: [f64; 2]) {
        let e = self.loads.entry(node).or_insert([0.0, 0.0]);
        e[0] += force[0];
        e[1] += force[1];
    }

    /// Applies a constant traction (force per unit length) on every boundary
    /// edge whose two end points satisfy `pred`, lumped consistently for P1.
    /// Returns the loaded length.
    pub fn add_edge_traction(&mut self, pred: impl Fn([f64; 2]) -> bool, traction: [f64; 2]) -> f64 {
        let mut length = 0.0;
        for [a, b] in self.boundary_edges() {
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            if pred(pa) && pred(pb) {
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                length += len;
                let half = [0.5 * len * traction[0], 0.5 * len * traction[1]];
                self.add_nodal_load(a, half);
                self.add_nodal_load(b, half);
            }
        }
        length
    }

    pub fn clear_boundary_conditions(&mut self) {
        self.supports.clear();
        self.loads.clear();
    }

    pub fn supports(&self) -> impl Iterator<Item = (usize, Fix)> + '_ {
        self.supports.iter().map(|(&n, &f)| (n, f))
    }

    pub fn nodal_loads(&self) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        self.loads.iter().map(|(&n, &f)| (n, f))
    }

    /// Sorted global indices (`2 * node + component`) of constrained dofs.
    pub fn fixed_dofs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (&n, f) in &self.supports {
            if f.x {
                out.push(2 * n);
            }
            if f.y {
                out.push(2 * n + 1);
            }
        }
        out
    }

    /// Global load vector of length `2 * num_nodes`.
    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.num_dofs()];
        for (&n, v) in &self.loads {
            f[2 * n] += v[0];
            f[2 * n + 1] += v[1];
        }
        f
    }

    /// Plain-text dump: node count, `x y` lines, triangle count, `i j k` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.nodes.len()).unwrap();
        for p in &self.nodes {
            writeln!(s, "{} {}", p[0], p[1]).unwrap();
        }
        writeln!(s, "{}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse("mesh text", format!("unexpected end of input, expected {what}")))
        };
        let bad = |ln: usize, msg: String| Error::parse("mesh text", format!("line {}: {msg}", ln + 1));

        let (ln, l) = next("node count")?;
        let n: usize = l.parse().map_err(|e| bad(ln, format!("node count: {e}")))?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = next("node coordinates")?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(ln, format!("{e}")))?;
            if v.len() != 2 {
                return Err(bad(ln, format!("expected 2 coordinates, found {}", v.len())));
            }
            nodes.push([v[0], v[1]]);
        }
        let (ln, l) = next("triangle count")?;
        let m: usize = l.parse().map_err(|e| bad(ln, format!("triangle count: {e}")))?;
        let mut tris = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = next("triangle")?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(ln, format!("{e}")))?;
            if v.len() != 3 {
                return Err(bad(ln, format!("expected 3 node indices, found {}", v.len())));
            }
            tris.push([v[0], v[1], v[2]]);
        }
        Mesh::new(nodes, tris)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Structured `width x height` rectangle with `nx x ny` cells, diagonal split.
pub fn build_rect_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    build_rect_mesh_with(width, height, nx, ny, Triangulation::Diagonal)
}

pub fn build_rect_mesh_with(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    tri: Triangulation,
) -> Result<Mesh> {
    if !(width > 0.0 && height > 0.0) || nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "rectangle needs positive size and resolution, got {width}x{height} with {nx}x{ny} cells"
        )));
    }
    build_grid(width / nx as f64, height / ny as f64, nx, ny, tri, |_, _| true)
}

/// L-shaped domain: the square `[0, size]^2` with its upper-right quadrant
/// removed, on an `n x n` cell grid (`n` even), diagonal split.
pub fn build_lshape_mesh(size: f64, n: usize) -> Result<Mesh> {
    build_lshape_mesh_with(size, n, Triangulation::Diagonal)
}

pub fn build_lshape_mesh_with(size: f64, n: usize, tri: Triangulation) -> Result<Mesh> {
    if !(size > 0.0) || n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "L-shape needs positive size and an even resolution >= 2, got size {size} and n = {n}"
        )));
    }
    let h = size / n as f64;
    let half = n / 2;
    build_grid(h, h, n, n, tri, |i, j| i < half || j < half)
}

fn build_grid(
    hx: f64,
    hy: f64,
    nx: usize,
    ny: usize,
    tri: Triangulation,
    keep: impl Fn(usize, usize) -> bool,
) -> Result<Mesh> {
    const UNUSED: usize = usize::MAX;
    let mut id = vec![UNUSED; (nx + 1) * (ny + 1)];
    let mut nodes = Vec::new();
    let mut corner = |i: usize, j: usize, nodes: &mut Vec<[f64; 2]>| {
        let k = j * (nx + 1) + i;
        if id[k] == UNUSED {
            id[k] = nodes.len();
            nodes.push([i as f64 * hx, j as f64 * hy]);
        }
        id[k]
    };
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !keep(i, j) {
                continue;
            }
            let a = corner(i, j, &mut nodes);
            let b = corner(i + 1, j, &mut nodes);
            let c = corner(i + 1, j + 1, &mut nodes);
            let d = corner(i, j + 1, &mut nodes);
            match tri {
                Triangulation::Diagonal => {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
                Triangulation::Crossed => {
                    let e = nodes.len();
                    nodes.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy]);
                    triangles.push([a, b, e]);
                    triangles.push([b, c, e]);
                    triangles.push([c, d, e]);
                    triangles.push([d, a, e]);
                }
            }
        }
    }
    Mesh::new(nodes, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_single_cell() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.num_elements(), 2);
        assert!(m.areas().iter().all(|&a| (a - 0.5).abs() < 1e-15));
    }

    #[test]
    fn eight_by_eight_two_cells() {
        let m = build_rect_mesh(8.0, 8.0, 2, 2).unwrap();
        assert_eq!(m.num_elements(), 8);
        assert!(m.areas().iter().all(|&a| (a - 8.0).abs() < 1e-12));
        assert!((m.total_area() - 64.0).abs() < 1e-12);
    }

    #[test]
    fn crossed_counts_and_area() {
        let m = build_rect_mesh_with(2.0, 1.0, 4, 2, Triangulation::Crossed).unwrap();
        assert_eq!(m.num_elements(), 32);
        assert_eq!(m.num_nodes(), 15 + 8);
        assert!((m.total_area() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn lshape_boundary_and_area() {
        let m = build_lshape_mesh(8.0, 4).unwrap();
        assert!((m.total_area() - 48.0).abs() < 1e-12);
        assert_eq!(m.boundary_edges().len(), 16);
        let mc = build_lshape_mesh_with(8.0, 4, Triangulation::Crossed).unwrap();
        assert!((mc.total_area() - 48.0).abs() < 1e-12);
        assert_eq!(mc.boundary_edges().len(), 16);
    }

    #[test]
    fn odd_lshape_rejected() {
        assert!(build_lshape_mesh(8.0, 5).is_err());
        assert!(build_rect_mesh(1.0, 1.0, 0, 3).is_err());
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Mesh::new(nodes.clone(), vec![[0, 1, 2]]).is_ok());
        assert!(matches!(Mesh::new(nodes, vec![[0, 2, 1]]), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn text_round_trip() {
        let m = build_rect_mesh_with(3.0, 1.7, 3, 2, Triangulation::Crossed).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(m.nodes(), back.nodes());
        assert_eq!(m.triangles(), back.triangles());
    }

    #[test]
    fn edge_traction_lumps_total_force() {
        let mut m = build_rect_mesh(2.0, 1.0, 4, 3).unwrap();
        let len = m.add_edge_traction(|p| (p[0] - 2.0).abs() < 1e-12, [0.0, -3.0]);
        assert!((len - 1.0).abs() < 1e-12);
        let f = m.load_vector();
        let fy: f64 = f.iter().skip(1).step_by(2).sum();
        assert!((fy + 3.0).abs() < 1e-12);
    }

    #[test]
    fn supports_merge_components() {
        let mut m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        m.fix_nearest([0.0, 0.0], Fix::X);
        m.fix_nearest([0.0, 0.0], Fix::Y);
        assert_eq!(m.fixed_dofs(), vec![0, 1]);
    }
}
