//! Simplicial triangulations of polyhedral domains in R^1, R^2, R^3.
//!
//! Every face is stored as its strictly increasing vertex tuple. Local faces
//! of a cell are enumerated as the lexicographically ordered subsets of the
//! cell's (sorted) vertices, so a face's orientation and parametrization are
//! the same seen from every cell containing it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FeecError, Result};
use crate::exterior::{indices, subsets};

/// Local vertex lists of the `d`-dimensional faces of an `n`-simplex, in the
/// canonical order used throughout the crate.
pub fn local_faces(n: usize, d: usize) -> Vec<Vec<usize>> {
    subsets(n + 1, d + 1).into_iter().map(|m| indices(m).collect()).collect()
}

#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    dim: usize,
    coords: Vec<f64>,
    /// `faces[d][id]` is the sorted vertex tuple of a `d`-face; `faces[dim]` are the cells.
    faces: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    /// `cell_faces[d][cell]` lists global ids of the cell's local `d`-faces.
    cell_faces: Vec<Vec<Vec<usize>>>,
    facet_cells: Vec<Vec<usize>>,
    boundary: Vec<Vec<bool>>,
    parent: Option<Vec<usize>>,
}

impl SimplicialComplex {
    /// Builds and validates a complex from vertex coordinates (`dim` per
    /// vertex, flattened) and cells given as vertex tuples in any order.
    pub fn new(dim: usize, coords: Vec<f64>, cells: Vec<Vec<usize>>) -> Result<Self> {
        let mesh = Self::build(dim, coords, cells)?;
        mesh.check_conformity()?;
        Ok(mesh)
    }

    fn build(dim: usize, coords: Vec<f64>, cells: Vec<Vec<usize>>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(FeecError::InvalidArgument(format!("unsupported dimension {dim}")));
        }
        if coords.len() % dim != 0 {
            return Err(FeecError::InvalidArgument("coordinate array length".into()));
        }
        let nv = coords.len() / dim;
        let mut sorted_cells = Vec::with_capacity(cells.len());
        for c in cells {
            if c.len() != dim + 1 {
                return Err(FeecError::InvalidArgument(format!("cell {c:?} is not a {dim}-simplex")));
            }
            let mut s = c.clone();
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) || s.iter().any(|&v| v >= nv) {
                return Err(FeecError::InvalidArgument(format!("invalid cell {c:?}")));
            }
            sorted_cells.push(s);
        }
        let mut faces: Vec<Vec<Vec<usize>>> = vec![Vec::new(); dim + 1];
        let mut lookup: Vec<HashMap<Vec<usize>, usize>> = vec![HashMap::new(); dim + 1];
        let mut cell_faces: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(sorted_cells.len()); dim + 1];
        faces[0] = (0..nv).map(|v| vec![v]).collect();
        lookup[0] = (0..nv).map(|v| (vec![v], v)).collect();
        for cell in &sorted_cells {
            for d in 0..=dim {
                let ids = local_faces(dim, d)
                    .into_iter()
                    .map(|lf| {
                        let tuple: Vec<usize> = lf.iter().map(|&i| cell[i]).collect();
                        if let Some(&id) = lookup[d].get(&tuple) {
                            id
                        } else {
                            let id = faces[d].len();
                            lookup[d].insert(tuple.clone(), id);
                            faces[d].push(tuple);
                            id
                        }
                    })
                    .collect();
                cell_faces[d].push(ids);
            }
        }
        let nfacets = faces[dim - 1].len();
        let mut facet_cells = vec![Vec::new(); nfacets];
        for (c, ids) in cell_faces[dim - 1].iter().enumerate() {
            for &f in ids {
                facet_cells[f].push(c);
            }
        }
        let mut boundary: Vec<Vec<bool>> = (0..=dim).map(|d| vec![false; faces[d].len()]).collect();
        for (f, cs) in facet_cells.iter().enumerate() {
            if cs.len() > 2 {
                return Err(FeecError::NonConforming(format!(
                    "facet {:?} shared by {} cells",
                    faces[dim - 1][f],
                    cs.len()
                )));
            }
            if cs.len() == 1 {
                let tuple = faces[dim - 1][f].clone();
                for d in 0..dim {
                    for lf in local_faces(dim - 1, d) {
                        let sub: Vec<usize> = lf.iter().map(|&i| tuple[i]).collect();
                        boundary[d][lookup[d][&sub]] = true;
                    }
                }
            }
        }
        let mesh = Self {
            dim,
            coords,
            faces,
            lookup,
            cell_faces,
            facet_cells,
            boundary,
            parent: None,
        };
        for c in 0..mesh.num_cells() {
            let (_, _, det) = mesh.cell_map(c);
            let diam = mesh.cell_diameter(c);
            if det.abs() <= 1e-12 * diam.powi(dim as i32) {
                return Err(FeecError::InvalidArgument(format!("degenerate cell {c}")));
            }
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.faces[0].len()
    }

    pub fn num_cells(&self) -> usize {
        self.faces[self.dim].len()
    }

    pub fn num_faces(&self, d: usize) -> usize {
        self.faces[d].len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coords
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.faces[self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.faces[self.dim][c]
    }

    pub fn faces(&self, d: usize) -> &[Vec<usize>] {
        &self.faces[d]
    }

    pub fn face(&self, d: usize, id: usize) -> &[usize] {
        &self.faces[d][id]
    }

    pub fn face_id(&self, tuple: &[usize]) -> Option<usize> {
        let d = tuple.len().checked_sub(1)?;
        self.lookup.get(d)?.get(tuple).copied()
    }

    /// Global ids of the local `d`-faces of `cell` in canonical order.
    pub fn cell_faces(&self, d: usize, cell: usize) -> &[usize] {
        &self.cell_faces[d][cell]
    }

    pub fn facet_cells(&self, facet: usize) -> &[usize] {
        &self.facet_cells[facet]
    }

    pub fn is_boundary(&self, d: usize, id: usize) -> bool {
        d < self.dim && self.boundary[d][id]
    }

    /// Cell index in the mesh this one was refined from.
    pub fn parent(&self) -> Option<&[usize]> {
        self.parent.as_deref()
    }

    /// Affine map `x = v0 + J ξ` of a cell: `(v0, J row-major, det J)`.
    pub fn cell_map(&self, c: usize) -> (Vec<f64>, Vec<f64>, f64) {
        self.simplex_map(self.cell(c))
    }

    /// Affine map of an arbitrary simplex of the mesh given by its vertices.
    /// `J` is `dim × (len − 1)` row-major.
    pub fn simplex_map(&self, verts: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.dim;
        let m = verts.len() - 1;
        let v0 = self.vertex(verts[0]).to_vec();
        let mut j = vec![0.0; n * m];
        for (col, &v) in verts[1..].iter().enumerate() {
            let p = self.vertex(v);
            for row in 0..n {
                j[row * m + col] = p[row] - v0[row];
            }
        }
        let det = if m == n { det_small(&j, n) } else { f64::NAN };
        (v0, j, det)
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        let (_, _, det) = self.cell_map(c);
        det.abs() / factorial(self.dim)
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let mut h: f64 = 0.0;
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                h = h.max(dist(self.vertex(cell[a]), self.vertex(cell[b])));
            }
        }
        h
    }

    /// Mesh size: the largest cell diameter.
    pub fn h(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    /// Largest circumradius / inradius ratio over all cells.
    pub fn shape_constant(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_shape_ratio(c)).fold(0.0, f64::max)
    }

    fn cell_shape_ratio(&self, c: usize) -> f64 {
        let n = self.dim;
        if n == 1 {
            return 1.0;
        }
        let cell = self.cell(c);
        let pts: Vec<&[f64]> = cell.iter().map(|&v| self.vertex(v)).collect();
        // circumcenter: 2 (p_i − p_0)·x = |p_i|² − |p_0|²
        let mut a = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 2.0 * (pts[i + 1][j] - pts[0][j]);
            }
            rhs[i] = norm2(pts[i + 1]) - norm2(pts[0]);
        }
        let center = solve_small(&a, &rhs, n);
        let circ = dist(&center, pts[0]);
        let vol = self.cell_volume(c);
        let facet_area: f64 = local_faces(n, n - 1)
            .iter()
            .map(|lf| {
                let fp: Vec<&[f64]> = lf.iter().map(|&i| pts[i]).collect();
                simplex_measure(&fp)
            })
            .sum();
        let inr = n as f64 * vol / facet_area;
        circ / inr
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=self.dim)
            .map(|d| if d % 2 == 0 { 1 } else { -1 } * self.num_faces(d) as i64)
            .sum()
    }

    /// Signed coboundary incidence `Δ_d → Δ_{d+1}` as triplets
    /// `(row = (d+1)-face, col = d-face, ±1)`; omitting vertex `i` carries `(−1)^i`.
    pub fn coboundary_triplets(&self, d: usize) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::new();
        for (row, tuple) in self.faces[d + 1].iter().enumerate() {
            for i in 0..tuple.len() {
                let mut sub = tuple.clone();
                sub.remove(i);
                let col = self.lookup[d][&sub];
                out.push((row, col, if i % 2 == 0 { 1 } else { -1 }));
            }
        }
        out
    }

    /// Barycentric coordinates of `x` relative to cell `c`.
    pub fn barycentric(&self, c: usize, x: &[f64]) -> Vec<f64> {
        let xi = self.reference_coordinates(c, x);
        let mut out = Vec::with_capacity(self.dim + 1);
        out.push(1.0 - xi.iter().sum::<f64>());
        out.extend(xi);
        out
    }

    /// `ξ = J^{-1}(x − v0)` for cell `c`.
    pub fn reference_coordinates(&self, c: usize, x: &[f64]) -> Vec<f64> {
        let (v0, j, _) = self.cell_map(c);
        let rhs: Vec<f64> = x.iter().zip(&v0).map(|(a, b)| a - b).collect();
        solve_small(&j, &rhs, self.dim)
    }

    pub fn contains_point(&self, c: usize, x: &[f64], tol: f64) -> bool {
        self.barycentric(c, x).iter().all(|&l| l >= -tol)
    }

    fn check_conformity(&self) -> Result<()> {
        let n = self.dim;
        // interior facets: the opposite vertices lie on opposite sides
        for (f, cs) in self.facet_cells.iter().enumerate() {
            let tuple = &self.faces[n - 1][f];
            let pts: Vec<&[f64]> = tuple.iter().map(|&v| self.vertex(v)).collect();
            let normal = facet_normal(&pts, n);
            let side = |c: usize| -> f64 {
                let opp = self.cell(c).iter().find(|v| !tuple.contains(v)).copied().unwrap();
                let p = self.vertex(opp);
                p.iter().zip(pts[0]).zip(&normal).map(|((a, b), nn)| (a - b) * nn).sum()
            };
            if cs.len() == 2 && side(cs[0]) * side(cs[1]) >= 0.0 {
                return Err(FeecError::NonConforming(format!("cells overlap across facet {tuple:?}")));
            }
        }
        // boundary facets: a point just outside must not lie in another cell
        let grid = CellGrid::new(self);
        for (f, cs) in self.facet_cells.iter().enumerate() {
            if cs.len() != 1 {
                continue;
            }
            let tuple = &self.faces[n - 1][f];
            let pts: Vec<&[f64]> = tuple.iter().map(|&v| self.vertex(v)).collect();
            let mut normal = facet_normal(&pts, n);
            let opp = self.cell(cs[0]).iter().find(|v| !tuple.contains(v)).copied().unwrap();
            let centroid: Vec<f64> = (0..n).map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / n as f64).collect();
            let toward: f64 = self.vertex(opp).iter().zip(&centroid).zip(&normal).map(|((a, b), nn)| (a - b) * nn).sum();
            if toward > 0.0 {
                normal.iter_mut().for_each(|v| *v = -*v);
            }
            let size = self.cell_diameter(cs[0]);
            let nn = norm2(&normal).sqrt();
            let probe: Vec<f64> = centroid.iter().zip(&normal).map(|(c, v)| c + 1e-3 * size * v / nn).collect();
            for c in grid.candidates(&probe) {
                if c != cs[0] && self.contains_point(c, &probe, 1e-12) {
                    return Err(FeecError::NonConforming(format!(
                        "facet {tuple:?} is exposed on one side but covered by cell {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Red refinement: every cell is split into `2^n` children through edge
    /// midpoints. The parent cell of each child is recorded.
    pub fn refine_uniform(&self) -> Result<Self> {
        let n = self.dim;
        let nv = self.num_vertices();
        let mut coords = self.coords.clone();
        for e in &self.faces[1] {
            let (a, b) = (self.vertex(e[0]), self.vertex(e[1]));
            coords.extend(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)));
        }
        let mid = |a: usize, b: usize| -> usize {
            let key = if a < b { vec![a, b] } else { vec![b, a] };
            nv + self.lookup[1][&key]
        };
        let mut cells = Vec::new();
        let mut parent = Vec::new();
        for (c, cell) in self.cells().iter().enumerate() {
            let children: Vec<Vec<usize>> = match n {
                1 => {
                    let m = mid(cell[0], cell[1]);
                    vec![vec![cell[0], m], vec![m, cell[1]]]
                }
                2 => {
                    let (v0, v1, v2) = (cell[0], cell[1], cell[2]);
                    let (m01, m02, m12) = (mid(v0, v1), mid(v0, v2), mid(v1, v2));
                    vec![vec![v0, m01, m02], vec![m01, v1, m12], vec![m02, m12, v2], vec![m01, m12, m02]]
                }
                _ => {
                    let v = cell;
                    let m = |i: usize, j: usize| mid(v[i], v[j]);
                    let mut out = vec![
                        vec![v[0], m(0, 1), m(0, 2), m(0, 3)],
                        vec![m(0, 1), v[1], m(1, 2), m(1, 3)],
                        vec![m(0, 2), m(1, 2), v[2], m(2, 3)],
                        vec![m(0, 3), m(1, 3), m(2, 3), v[3]],
                    ];
                    // octahedron split along its shortest diagonal
                    let diagonals = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))];
                    let len = |(a, b): (usize, usize), (c2, d): (usize, usize)| -> f64 {
                        let p = |i: usize, j: usize| -> Vec<f64> {
                            self.vertex(v[i]).iter().zip(self.vertex(v[j])).map(|(x, y)| 0.5 * (x + y)).collect()
                        };
                        dist(&p(a, b), &p(c2, d))
                    };
                    let best = (0..3)
                        .min_by(|&i, &j| {
                            len(diagonals[i].0, diagonals[i].1)
                                .partial_cmp(&len(diagonals[j].0, diagonals[j].1))
                                .unwrap()
                        })
                        .unwrap();
                    let (p, pp) = diagonals[best];
                    let others: Vec<((usize, usize), (usize, usize))> =
                        (0..3).filter(|&i| i != best).map(|i| diagonals[i]).collect();
                    let (q1, q1p) = others[0];
                    let (q2, q2p) = others[1];
                    let ring = [q1, q2, q1p, q2p];
                    for i in 0..4 {
                        let (a, b) = ring[i];
                        let (c2, d) = ring[(i + 1) % 4];
                        out.push(vec![m(p.0, p.1), m(pp.0, pp.1), m(a, b), m(c2, d)]);
                    }
                    out
                }
            };
            for ch in children {
                cells.push(ch);
                parent.push(c);
            }
        }
        let mut fine = Self::build(n, coords, cells)?;
        fine.parent = Some(parent);
        Ok(fine)
    }

    /// Writes the plain-text mesh format: header `n #verts #cells`, then one
    /// line of coordinates per vertex, then one 0-based vertex tuple per cell.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.dim, self.num_vertices(), self.num_cells());
        for v in 0..self.num_vertices() {
            let line: Vec<String> = self.vertex(v).iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        for c in self.cells() {
            let line: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| FeecError::Parse("empty mesh file".into()))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| FeecError::Parse(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        if h.len() != 3 {
            return Err(FeecError::Parse(format!("bad header {header:?}")));
        }
        let (dim, nv, nc) = (h[0], h[1], h[2]);
        let mut coords = Vec::with_capacity(nv * dim);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| FeecError::Parse("missing vertex line".into()))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| FeecError::Parse(format!("bad coordinate {t:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(FeecError::Parse(format!("vertex line {l:?}")));
            }
            coords.extend(vals);
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let l = lines.next().ok_or_else(|| FeecError::Parse("missing cell line".into()))?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| FeecError::Parse(format!("bad index {t:?}"))))
                .collect::<Result<_>>()?;
            cells.push(vals);
        }
        Self::new(dim, coords, cells)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Uniform bucket grid over cell bounding boxes.
struct CellGrid {
    lo: Vec<f64>,
    cell: f64,
    res: usize,
    buckets: HashMap<Vec<usize>, Vec<usize>>,
    dim: usize,
}

impl CellGrid {
    fn new(mesh: &SimplicialComplex) -> Self {
        let n = mesh.dim;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for v in 0..mesh.num_vertices() {
            for i in 0..n {
                lo[i] = lo[i].min(mesh.vertex(v)[i]);
                hi[i] = hi[i].max(mesh.vertex(v)[i]);
            }
        }
        let extent = (0..n).map(|i| hi[i] - lo[i]).fold(0.0, f64::max).max(1e-300);
        let res = ((mesh.num_cells() as f64).powf(1.0 / n as f64).ceil() as usize).max(1);
        let cell = extent / res as f64;
        let mut buckets: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        let key = |x: f64, i: usize| -> usize { (((x - lo[i]) / cell).floor().max(0.0) as usize).min(res - 1) };
        for c in 0..mesh.num_cells() {
            let verts = mesh.cell(c);
            let mut kl = vec![usize::MAX; n];
            let mut kh = vec![0; n];
            for &v in verts {
                for i in 0..n {
                    let k = key(mesh.vertex(v)[i], i);
                    kl[i] = kl[i].min(k);
                    kh[i] = kh[i].max(k);
                }
            }
            let mut idx = kl.clone();
            loop {
                buckets.entry(idx.clone()).or_default().push(c);
                let mut d = 0;
                loop {
                    if d == n {
                        break;
                    }
                    idx[d] += 1;
                    if idx[d] <= kh[d] {
                        break;
                    }
                    idx[d] = kl[d];
                    d += 1;
                }
                if d == n {
                    break;
                }
            }
        }
        Self {
            lo,
            cell,
            res,
            buckets,
            dim: n,
        }
    }

    fn candidates(&self, x: &[f64]) -> Vec<usize> {
        let mut key = Vec::with_capacity(self.dim);
        for (i, &xi) in x.iter().enumerate() {
            let k = (xi - self.lo[i]) / self.cell;
            if k < -1e-9 || k > self.res as f64 + 1e-9 {
                return Vec::new();
            }
            key.push((k.floor().max(0.0) as usize).min(self.res - 1));
        }
        self.buckets.get(&key).cloned().unwrap_or_default()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn det_small(a: &[f64], n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => unreachable!("dimension above 3"),
    }
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub(crate) fn solve_small(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())
            .unwrap();
        if p != col {
            for j in 0..n {
                m.swap(p * n + j, col * n + j);
            }
            x.swap(p, col);
        }
        let piv = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / piv;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in col + 1..n {
            s -= m[col * n + j] * x[j];
        }
        x[col] = s / m[col * n + col];
    }
    x
}

/// Unnormalized normal of a hyperplane through `n` points in R^n.
fn facet_normal(pts: &[&[f64]], n: usize) -> Vec<f64> {
    match n {
        1 => vec![1.0],
        2 => {
            let t = [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1]];
            vec![-t[1], t[0]]
        }
        _ => {
            let a: Vec<f64> = (0..3).map(|i| pts[1][i] - pts[0][i]).collect();
            let b: Vec<f64> = (0..3).map(|i| pts[2][i] - pts[0][i]).collect();
            vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
        }
    }
}

/// d-dimensional measure of a simplex with `d + 1` vertices (Gram determinant).
pub(crate) fn simplex_measure(pts: &[&[f64]]) -> f64 {
    let d = pts.len() - 1;
    if d == 0 {
        return 1.0;
    }
    let edges: Vec<Vec<f64>> = pts[1..].iter().map(|p| p.iter().zip(pts[0]).map(|(a, b)| a - b).collect()).collect();
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            g[i * d + j] = edges[i].iter().zip(&edges[j]).map(|(a, b)| a * b).sum();
        }
    }
    det_small(&g, d).max(0.0).sqrt() / factorial(d)
}

/// Built-in mesh families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshKind {
    /// `n` uniform subintervals of `[a, b]`.
    Interval { n: usize, a: f64, b: f64 },
    /// `[0, side]^2`, each of the `n × n` squares cut along its main diagonal.
    Square { n: usize, side: f64 },
    /// `[0, side]^2`, each square split into four triangles by its center.
    SquareCrisscross { n: usize, side: f64 },
    /// Perturbed square grid with randomly oriented diagonals.
    SquareUnstructured { n: usize, side: f64, seed: u64 },
    /// `(−1, 1)^2` minus the quadrant `[0, 1) × (−1, 0]`, cells of size `1/n`.
    LShape { n: usize },
    /// Polygonal annulus with `n` radial layers and `8n` angular sectors.
    Annulus { n: usize, r_in: f64, r_out: f64 },
    /// `[0, side]^3`, each cube split into six tetrahedra (Kuhn).
    Cube { n: usize, side: f64 },
}

impl MeshKind {
    pub fn interval(n: usize) -> Self {
        Self::Interval { n, a: -1.0, b: 1.0 }
    }

    pub fn unit_square(n: usize) -> Self {
        Self::Square { n, side: 1.0 }
    }

    pub fn annulus(n: usize) -> Self {
        Self::Annulus { n, r_in: 0.5, r_out: 1.0 }
    }

    pub fn unit_cube(n: usize) -> Self {
        Self::Cube { n, side: 1.0 }
    }

    fn resolution(&self) -> usize {
        match *self {
            Self::Interval { n, .. }
            | Self::Square { n, .. }
            | Self::SquareCrisscross { n, .. }
            | Self::SquareUnstructured { n, .. }
            | Self::LShape { n }
            | Self::Annulus { n, .. }
            | Self::Cube { n, .. } => n,
        }
    }
}

pub fn generate(kind: &MeshKind) -> Result<SimplicialComplex> {
    if kind.resolution() < 1 {
        return Err(FeecError::InvalidArgument("mesh resolution must be at least 1".into()));
    }
    match *kind {
        MeshKind::Interval { n, a, b } => {
            let coords: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
            let cells = (0..n).map(|i| vec![i, i + 1]).collect();
            SimplicialComplex::new(1, coords, cells)
        }
        MeshKind::Square { n, side } => grid_triangulation(n, side, |_, _| false, None),
        MeshKind::SquareUnstructured { n, side, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let flips: Vec<bool> = (0..n * n).map(|_| rng.random::<bool>()).collect();
            grid_triangulation(n, side, |i, j| flips[j * n + i], Some(&mut rng))
        }
        MeshKind::SquareCrisscross { n, side } => {
            let h = side / n as f64;
            let mut coords = Vec::new();
            for j in 0..=n {
                for i in 0..=n {
                    coords.extend([i as f64 * h, j as f64 * h]);
                }
            }
            let corner = |i: usize, j: usize| j * (n + 1) + i;
            let mut cells = Vec::new();
            for j in 0..n {
                for i in 0..n {
                    let c = coords.len() / 2;
                    coords.extend([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                    let (a, b, cc, d) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
                    cells.extend([vec![a, b, c], vec![b, cc, c], vec![cc, d, c], vec![d, a, c]]);
                }
            }
            SimplicialComplex::new(2, coords, cells)
        }
        MeshKind::LShape { n } => {
            let m = 2 * n;
            let h = 1.0 / n as f64;
            let keep = |i: usize, j: usize| -> bool {
                let cx = -1.0 + (i as f64 + 0.5) * h;
                let cy = -1.0 + (j as f64 + 0.5) * h;
                !(cx > 0.0 && cy < 0.0)
            };
            let mut id = vec![usize::MAX; (m + 1) * (m + 1)];
            let mut coords = Vec::new();
            let mut cells = Vec::new();
            let mut vid = |i: usize, j: usize, coords: &mut Vec<f64>| -> usize {
                let k = j * (m + 1) + i;
                if id[k] == usize::MAX {
                    id[k] = coords.len() / 2;
                    coords.extend([-1.0 + i as f64 * h, -1.0 + j as f64 * h]);
                }
                id[k]
            };
            for j in 0..m {
                for i in 0..m {
                    if !keep(i, j) {
                        continue;
                    }
                    let a = vid(i, j, &mut coords);
                    let b = vid(i + 1, j, &mut coords);
                    let c = vid(i + 1, j + 1, &mut coords);
                    let d = vid(i, j + 1, &mut coords);
                    cells.push(vec![a, b, c]);
                    cells.push(vec![a, c, d]);
                }
            }
            SimplicialComplex::new(2, coords, cells)
        }
        MeshKind::Annulus { n, r_in, r_out } => {
            let sectors = 8 * n;
            let mut coords = Vec::new();
            for layer in 0..=n {
                let r = r_in + (r_out - r_in) * layer as f64 / n as f64;
                for s in 0..sectors {
                    let t = 2.0 * std::f64::consts::PI * s as f64 / sectors as f64;
                    coords.extend([r * t.cos(), r * t.sin()]);
                }
            }
            let v = |layer: usize, s: usize| layer * sectors + (s % sectors);
            let mut cells = Vec::new();
            for layer in 0..n {
                for s in 0..sectors {
                    let (a, b, c, d) = (v(layer, s), v(layer, s + 1), v(layer + 1, s + 1), v(layer + 1, s));
                    cells.push(vec![a, b, c]);
                    cells.push(vec![a, c, d]);
                }
            }
            SimplicialComplex::new(2, coords, cells)
        }
        MeshKind::Cube { n, side } => {
            let h = side / n as f64;
            let vid = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
            let mut coords = Vec::new();
            for k in 0..=n {
                for j in 0..=n {
                    for i in 0..=n {
                        coords.extend([i as f64 * h, j as f64 * h, k as f64 * h]);
                    }
                }
            }
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let mut cells = Vec::new();
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        for p in perms {
                            let mut pos = [i, j, k];
                            let mut tet = vec![vid(pos[0], pos[1], pos[2])];
                            for axis in p {
                                pos[axis] += 1;
                                tet.push(vid(pos[0], pos[1], pos[2]));
                            }
                            cells.push(tet);
                        }
                    }
                }
            }
            SimplicialComplex::new(3, coords, cells)
        }
    }
}

fn grid_triangulation(
    n: usize,
    side: f64,
    anti_diagonal: impl Fn(usize, usize) -> bool,
    jitter: Option<&mut ChaCha8Rng>,
) -> Result<SimplicialComplex> {
    let h = side / n as f64;
    let mut coords = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            coords.extend([i as f64 * h, j as f64 * h]);
        }
    }
    if let Some(rng) = jitter {
        for j in 1..n {
            for i in 1..n {
                let v = j * (n + 1) + i;
                coords[2 * v] += 0.2 * h * rng.random_range(-1.0..1.0);
                coords[2 * v + 1] += 0.2 * h * rng.random_range(-1.0..1.0);
            }
        }
    }
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            if anti_diagonal(i, j) {
                cells.push(vec![a, b, d]);
                cells.push(vec![b, c, d]);
            } else {
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            }
        }
    }
    SimplicialComplex::new(2, coords, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_counts() {
        let m = generate(&MeshKind::interval(14)).unwrap();
        assert_eq!((m.num_cells(), m.num_vertices()), (14, 15));
        for n in 1..4 {
            let m = generate(&MeshKind::unit_square(n)).unwrap();
            assert_eq!(m.num_cells(), 2 * n * n);
            assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.euler_characteristic(), 1);
        }
        let m = generate(&MeshKind::unit_square(1)).unwrap();
        assert_eq!(m.num_faces(1), 5);
        let a = generate(&MeshKind::annulus(2)).unwrap();
        assert_eq!(a.euler_characteristic(), 0);
        let c = generate(&MeshKind::unit_cube(2)).unwrap();
        assert_eq!(c.num_cells(), 48);
        assert_eq!(c.euler_characteristic(), 1);
        let l = generate(&MeshKind::LShape { n: 2 }).unwrap();
        assert_eq!(l.num_cells(), 24);
        assert_eq!(l.euler_characteristic(), 1);
        let x = generate(&MeshKind::SquareCrisscross { n: 2, side: 1.0 }).unwrap();
        assert_eq!(x.num_cells(), 16);
        let u = generate(&MeshKind::SquareUnstructured { n: 4, side: 1.0, seed: 7 }).unwrap();
        assert_eq!(u.euler_characteristic(), 1);
        assert!(generate(&MeshKind::unit_square(0)).is_err());
    }

    #[test]
    fn single_simplex_lattices() {
        let tri = SimplicialComplex::new(2, vec![0., 0., 1., 0., 0., 1.], vec![vec![0, 1, 2]]).unwrap();
        assert_eq!((tri.num_faces(0), tri.num_faces(1), tri.num_faces(2)), (3, 3, 1));
        let tet = SimplicialComplex::new(
            3,
            vec![0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0., 1.],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        assert_eq!(
            (0..4).map(|d| tet.num_faces(d)).collect::<Vec<_>>(),
            vec![4, 6, 4, 1]
        );
    }

    #[test]
    fn facets_shared_by_at_most_two_and_boundary_of_boundary() {
        for kind in [MeshKind::unit_square(3), MeshKind::annulus(1), MeshKind::unit_cube(2), MeshKind::LShape { n: 2 }] {
            let m = generate(&kind).unwrap();
            let n = m.dim();
            for f in 0..m.num_faces(n - 1) {
                let c = m.facet_cells(f).len();
                assert!(c == 1 || c == 2);
                assert_eq!(c == 1, m.is_boundary(n - 1, f));
            }
            // δδ = 0 at the incidence level
            for d in 0..n.saturating_sub(1) {
                let mut a: HashMap<(usize, usize), i64> = HashMap::new();
                let first = m.coboundary_triplets(d);
                let second = m.coboundary_triplets(d + 1);
                for &(r2, c2, s2) in &second {
                    for &(r1, c1, s1) in first.iter().filter(|t| t.0 == c2) {
                        let _ = r1;
                        *a.entry((r2, c1)).or_default() += s1 * s2;
                    }
                }
                assert!(a.values().all(|&v| v == 0));
            }
        }
    }

    #[test]
    fn refinement() {
        let m = generate(&MeshKind::Interval { n: 4, a: -1.0, b: 1.0 }).unwrap();
        let f = m.refine_uniform().unwrap();
        assert_eq!(f.num_cells(), 8);
        let mut xs: Vec<f64> = (0..f.num_vertices()).map(|v| f.vertex(v)[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, x) in xs.iter().enumerate() {
            assert!((x - (-1.0 + i as f64 * 0.25)).abs() < 1e-15);
        }
        let s = generate(&MeshKind::unit_square(2)).unwrap();
        let mut cur = s.clone();
        let mut shape = cur.shape_constant();
        for _ in 0..4 {
            let next = cur.refine_uniform().unwrap();
            assert_eq!(next.num_cells(), 4 * cur.num_cells());
            assert!((next.h() - 0.5 * cur.h()).abs() < 1e-12);
            let sc = next.shape_constant();
            assert!(sc <= shape + 1e-12);
            shape = sc;
            cur = next;
        }
        let c = generate(&MeshKind::unit_cube(1)).unwrap();
        let cf = c.refine_uniform().unwrap();
        assert_eq!(cf.num_cells(), 48);
        assert_eq!(cf.euler_characteristic(), 1);
        let total: f64 = (0..cf.num_cells()).map(|i| cf.cell_volume(i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let parent = cf.parent().unwrap();
        for (child, &p) in parent.iter().enumerate() {
            let verts = cf.cell(child);
            let centroid: Vec<f64> = (0..3).map(|i| verts.iter().map(|&v| cf.vertex(v)[i]).sum::<f64>() / 4.0).collect();
            assert!(c.contains_point(p, &centroid, 1e-12));
        }
    }

    #[test]
    fn text_round_trip() {
        let m = generate(&MeshKind::SquareUnstructured { n: 3, side: std::f64::consts::PI, seed: 3 }).unwrap();
        let text = m.to_text();
        let back = SimplicialComplex::from_text(&text).unwrap();
        assert_eq!(back.coordinates(), m.coordinates());
        assert_eq!(back.cells(), m.cells());
        assert_eq!(back.to_text(), text);
        assert!(SimplicialComplex::from_text("2 1").is_err());
    }

    #[test]
    fn nonconforming_meshes_rejected() {
        // hanging node: one big triangle next to two small ones
        let coords = vec![0., 0., 1., 0., 0., 1., 1., 1., 0.5, 0.5];
        let cells = vec![vec![0, 1, 2], vec![1, 3, 4], vec![4, 3, 2]];
        assert!(matches!(
            SimplicialComplex::new(2, coords, cells),
            Err(FeecError::NonConforming(_))
        ));
        // overlapping triangles
        let coords = vec![0., 0., 1., 0., 0., 1., 0.8, 0.8];
        let cells = vec![vec![0, 1, 2], vec![0, 1, 3]];
        assert!(SimplicialComplex::new(2, coords, cells).is_err());
    }
}
