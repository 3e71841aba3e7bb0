//! Triangulated planar cross-sections, their moments and normalization.
//!
//! A section is *normalized* when it has unit area, its centroid at the
//! origin and its principal axes aligned with the coordinate axes
//! (`∫x₂ = ∫x₃ = ∫x₂x₃ = 0`). All downstream solvers require normalized
//! sections.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by [`CrossSection::check_normalized`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Relative spread of the principal moments below which a section is treated
/// as isotropic and left unrotated.
const ISOTROPY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSection {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionMoments {
    pub area: f64,
    /// `∫x₂`
    pub s2: f64,
    /// `∫x₃`
    pub s3: f64,
    pub i2: f64,
    pub i3: f64,
    pub i23: f64,
    /// `μ(S) = ∫(x₂² + x₃²)`
    pub mu_s: f64,
}

impl SectionMoments {
    pub fn csv_header() -> &'static str {
        "area,I2,I3,I23,muS"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            self.area, self.i2, self.i3, self.i23, self.mu_s
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub nodes: usize,
    pub triangles: usize,
    pub min_edge: f64,
    pub max_edge: f64,
    pub min_angle_deg: f64,
}

/// Geometry of one triangle: signed area and constant P1 basis gradients.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl CrossSection {
    /// Validates indices and areas, flips clockwise triangles, and rejects
    /// non-conforming meshes (a directed edge used twice).
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(Error::Mesh("section needs at least 3 vertices and 1 triangle".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        let mut tris = triangles;
        let scale = bbox_diameter(&vertices).max(f64::MIN_POSITIVE);
        for (t, tri) in tris.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex")));
            }
            let a = signed_area(&vertices, tri);
            if a.abs() <= 1e-14 * scale * scale {
                return Err(Error::Mesh(format!("triangle {t} is degenerate (area {a:e})")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        let mut seen = HashMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for e in 0..3 {
                let key = (tri[e], tri[(e + 1) % 3]);
                if let Some(other) = seen.insert(key, t) {
                    return Err(Error::Mesh(format!(
                        "edge {key:?} used with the same orientation by triangles {other} and {t}"
                    )));
                }
            }
        }
        Ok(CrossSection {
            vertices,
            triangles: tris,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: CrossSection =
            serde_json::from_str(s).map_err(|e| Error::Input(format!("mesh JSON: {e}")))?;
        Self::new(raw.vertices, raw.triangles)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("mesh serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn geometry(&self, t: usize) -> TriangleGeometry {
        let tri = self.triangles[t];
        let p = tri.map(|i| self.vertices[i]);
        let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            grads[i] = [(p[j][1] - p[k][1]) / two_a, (p[k][0] - p[j][0]) / two_a];
        }
        TriangleGeometry {
            area: 0.5 * two_a,
            grads,
        }
    }

    /// Physical coordinates of a barycentric point of triangle `t`.
    pub fn point(&self, t: usize, bary: &[f64; 3]) -> [f64; 2] {
        let tri = self.triangles[t];
        let mut x = [0.0; 2];
        for (a, &i) in tri.iter().enumerate() {
            x[0] += bary[a] * self.vertices[i][0];
            x[1] += bary[a] * self.vertices[i][1];
        }
        x
    }

    /// Nodal weights `∫φ_i`; exact integration of P1 fields.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.vertices.len()];
        for t in 0..self.triangles.len() {
            let a = self.geometry(t).area;
            for &i in &self.triangles[t] {
                w[i] += a / 3.0;
            }
        }
        w
    }

    /// Nodal weights `∫x_k φ_i` (k = 0 for x₂, 1 for x₃); exact.
    pub fn first_moment_weights(&self) -> [Vec<f64>; 2] {
        let mut w = [vec![0.0; self.vertices.len()], vec![0.0; self.vertices.len()]];
        for t in 0..self.triangles.len() {
            let a = self.geometry(t).area;
            let tri = self.triangles[t];
            for (k, wk) in w.iter_mut().enumerate() {
                let sum: f64 = tri.iter().map(|&i| self.vertices[i][k]).sum();
                for &i in &tri {
                    wk[i] += a / 12.0 * (self.vertices[i][k] + sum);
                }
            }
        }
        w
    }

    /// Area and first/second moments, exact for the polygonal domain.
    pub fn moments(&self) -> SectionMoments {
        let mut m = SectionMoments {
            area: 0.0,
            s2: 0.0,
            s3: 0.0,
            i2: 0.0,
            i3: 0.0,
            i23: 0.0,
            mu_s: 0.0,
        };
        for t in 0..self.triangles.len() {
            let a = self.geometry(t).area;
            let p = self.triangles[t].map(|i| self.vertices[i]);
            let sx: f64 = p.iter().map(|q| q[0]).sum();
            let sy: f64 = p.iter().map(|q| q[1]).sum();
            m.area += a;
            m.s2 += a * sx / 3.0;
            m.s3 += a * sy / 3.0;
            m.i2 += a / 12.0 * (p.iter().map(|q| q[0] * q[0]).sum::<f64>() + sx * sx);
            m.i3 += a / 12.0 * (p.iter().map(|q| q[1] * q[1]).sum::<f64>() + sy * sy);
            m.i23 += a / 12.0 * (p.iter().map(|q| q[0] * q[1]).sum::<f64>() + sx * sy);
        }
        m.mu_s = m.i2 + m.i3;
        m
    }

    /// Integral of `f(x₂, x₃)` with the degree-2 interior rule.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut s = 0.0;
        for t in 0..self.triangles.len() {
            let a = self.geometry(t).area;
            for (bary, w) in crate::quadrature::TRIANGLE_DEGREE2.iter() {
                let x = self.point(t, bary);
                s += a * w * f(x[0], x[1]);
            }
        }
        s
    }

    pub fn check_normalized(&self, tol: f64) -> Result<SectionMoments> {
        let m = self.moments();
        let scale = m.mu_s.max(1.0);
        if (m.area - 1.0).abs() > tol
            || m.s2.abs() > tol
            || m.s3.abs() > tol
            || m.i23.abs() > tol * scale
        {
            return Err(Error::NotNormalized(format!(
                "area={:e}, ∫x2={:e}, ∫x3={:e}, ∫x2x3={:e}; normalize the section first",
                m.area, m.s2, m.s3, m.i23
            )));
        }
        Ok(m)
    }

    /// Translates to the centroid, rotates onto principal axes (`I2 ≥ I3`,
    /// first axis with positive x₂-component) and scales to unit area.
    pub fn normalize(&self) -> Result<CrossSection> {
        let m = self.moments();
        let scale = bbox_diameter(&self.vertices);
        if !(m.area > 1e-14 * scale * scale) {
            return Err(Error::Input(format!("section has non-positive area {:e}", m.area)));
        }
        let c = [m.s2 / m.area, m.s3 / m.area];
        let j22 = m.i2 - m.area * c[0] * c[0];
        let j33 = m.i3 - m.area * c[1] * c[1];
        let j23 = m.i23 - m.area * c[0] * c[1];

        let spread = ((j22 - j33).powi(2) + 4.0 * j23 * j23).sqrt();
        let axis = if spread <= ISOTROPY_TOL * (j22 + j33) {
            [1.0, 0.0]
        } else {
            // eigenvector of the larger eigenvalue of [[j22, j23], [j23, j33]]
            let lmax = 0.5 * (j22 + j33 + spread);
            let v = if (lmax - j33).abs() >= (lmax - j22).abs() {
                [lmax - j33, j23]
            } else {
                [j23, lmax - j22]
            };
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let mut e = [v[0] / n, v[1] / n];
            if e[0] < 0.0 || (e[0] == 0.0 && e[1] < 0.0) {
                e = [-e[0], -e[1]];
            }
            e
        };
        let s = 1.0 / m.area.sqrt();
        let vertices = self
            .vertices
            .iter()
            .map(|p| {
                let d = [p[0] - c[0], p[1] - c[1]];
                [
                    s * (axis[0] * d[0] + axis[1] * d[1]),
                    s * (-axis[1] * d[0] + axis[0] * d[1]),
                ]
            })
            .collect();
        let mut out = CrossSection {
            vertices,
            triangles: self.triangles.clone(),
        };
        // one corrective recentring pass removes the translation roundoff
        let m2 = out.moments();
        let c2 = [m2.s2 / m2.area, m2.s3 / m2.area];
        if c2[0] != 0.0 || c2[1] != 0.0 {
            for v in &mut out.vertices {
                v[0] -= c2[0];
                v[1] -= c2[1];
            }
        }
        Ok(out)
    }

    /// Uniform red refinement (each triangle split in four). Midpoints of
    /// boundary edges are passed through `project` so curved boundaries can
    /// be followed.
    pub fn refine_with(&self, project: impl Fn([f64; 2]) -> [f64; 2]) -> CrossSection {
        let mut vertices = self.vertices.clone();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let p = [
                    0.5 * (vertices[a][0] + vertices[b][0]),
                    0.5 * (vertices[a][1] + vertices[b][1]),
                ];
                let p = if edge_count[&key] == 1 { project(p) } else { p };
                vertices.push(p);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for tri in &self.triangles {
            let [a, b, c] = *tri;
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        CrossSection {
            vertices,
            triangles,
        }
    }

    pub fn refine(&self) -> CrossSection {
        self.refine_with(|p| p)
    }

    pub fn stats(&self) -> MeshStats {
        let mut min_edge = f64::INFINITY;
        let mut max_edge: f64 = 0.0;
        let mut min_angle = f64::INFINITY;
        for tri in &self.triangles {
            let p = tri.map(|i| self.vertices[i]);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let e = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                min_edge = min_edge.min(e);
                max_edge = max_edge.max(e);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1])
                    / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
                min_angle = min_angle.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        MeshStats {
            nodes: self.vertices.len(),
            triangles: self.triangles.len(),
            min_edge,
            max_edge,
            min_angle_deg: min_angle.to_degrees(),
        }
    }
}

fn signed_area(v: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[tri[0]], v[tri[1]], v[tri[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn bbox_diameter(v: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in v {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
}

/// Mesh built from concentric rings around a center node. Ring `k`
/// (1..=rings) has `per_ring * k` nodes given by `place(k, j)`; neighbouring
/// rings are stitched by walking both in order of their perimeter parameter
/// `j / (per_ring * k)`.
fn ring_mesh(rings: usize, per_ring: usize, place: impl Fn(usize, usize) -> [f64; 2]) -> CrossSection {
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(vertices.len());
        for j in 0..per_ring * k {
            vertices.push(place(k, j));
        }
    }
    let mut triangles = Vec::with_capacity(per_ring * rings * rings);
    for k in 1..=rings {
        let outer_n = per_ring * k;
        let outer = |j: usize| ring_start[k] + j % outer_n;
        if k == 1 {
            for j in 0..outer_n {
                triangles.push([0, outer(j), outer(j + 1)]);
            }
            continue;
        }
        let inner_n = per_ring * (k - 1);
        let inner = |i: usize| ring_start[k - 1] + i % inner_n;
        let (mut i, mut j) = (0, 0);
        while i < inner_n || j < outer_n {
            let next_inner = (i + 1) as f64 / inner_n as f64;
            let next_outer = (j + 1) as f64 / outer_n as f64;
            if j < outer_n && (i == inner_n || next_outer <= next_inner) {
                triangles.push([inner(i), outer(j), outer(j + 1)]);
                j += 1;
            } else {
                triangles.push([inner(i), outer(j), inner(i + 1)]);
                i += 1;
            }
        }
    }
    for tri in &mut triangles {
        if signed_area(&vertices, tri) < 0.0 {
            tri.swap(1, 2);
        }
    }
    CrossSection {
        vertices,
        triangles,
    }
}

/// Disc of the given radius meshed with `rings` concentric rings
/// (`6·rings²` triangles).
pub fn disc(radius: f64, rings: usize) -> Result<CrossSection> {
    if rings == 0 || !(radius > 0.0) {
        return Err(Error::Input("disc needs rings >= 1 and radius > 0".into()));
    }
    let m = ring_mesh(rings, 6, |k, j| {
        let r = radius * k as f64 / rings as f64;
        let th = 2.0 * PI * j as f64 / (6 * k) as f64;
        [r * th.cos(), r * th.sin()]
    });
    CrossSection::new(m.vertices, m.triangles)
}

/// Unit-area disc (radius `1/√π`), already normalized up to polygonal error.
pub fn unit_disc(rings: usize) -> Result<CrossSection> {
    disc(1.0 / PI.sqrt(), rings)?.normalize()
}

/// Star-shaped polygon (given by its corners in counter-clockwise order)
/// meshed with `rings` rings around its vertex centroid.
pub fn polygon(corners: &[[f64; 2]], rings: usize) -> Result<CrossSection> {
    let m = corners.len();
    if m < 3 || rings == 0 {
        return Err(Error::Input("polygon needs >= 3 corners and rings >= 1".into()));
    }
    let c = [
        corners.iter().map(|p| p[0]).sum::<f64>() / m as f64,
        corners.iter().map(|p| p[1]).sum::<f64>() / m as f64,
    ];
    let mesh = ring_mesh(rings, m, |k, j| {
        let e = j / k;
        let t = (j % k) as f64 / k as f64;
        let a = corners[e];
        let b = corners[(e + 1) % m];
        let s = k as f64 / rings as f64;
        [
            c[0] + s * (a[0] + t * (b[0] - a[0]) - c[0]),
            c[1] + s * (a[1] + t * (b[1] - a[1]) - c[1]),
        ]
    });
    let mut mesh = mesh;
    mesh.vertices[0] = c;
    CrossSection::new(mesh.vertices, mesh.triangles)
}

/// Axis-aligned rectangle `[-w/2, w/2] × [-h/2, h/2]` on an `nx × ny` grid,
/// cell diagonals alternating in a checkerboard pattern.
pub fn rectangle(width: f64, height: f64, nx: usize, ny: usize) -> Result<CrossSection> {
    if nx == 0 || ny == 0 || !(width > 0.0) || !(height > 0.0) {
        return Err(Error::Input("rectangle needs positive size and resolution".into()));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                -0.5 * width + width * i as f64 / nx as f64,
                -0.5 * height + height * j as f64 / ny as f64,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    CrossSection::new(vertices, triangles)
}

/// Unit square centered at the origin.
pub fn unit_square(n: usize) -> Result<CrossSection> {
    rectangle(1.0, 1.0, n, n)
}
