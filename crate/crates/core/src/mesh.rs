//! Tetrahedral meshes with tagged boundary faces and a marked design region.
//!
//! The builtin generator splits a box into hexahedral cells and every cell
//! into six path tetrahedra (Kuhn subdivision). Path simplices have no obtuse
//! dihedral angles for any cell aspect ratio, so the P1 stiffness matrices
//! assembled on these meshes have nonpositive off-diagonal entries.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Boundary condition class of a boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Grounded contact: potential fixed to zero.
    DirichletPotential,
    /// Contact through which the controlled current enters.
    ControlContact,
    /// No current flux; heat exchange through the Robin condition only.
    Insulated,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 3] = [
        BoundaryTag::DirichletPotential,
        BoundaryTag::ControlContact,
        BoundaryTag::Insulated,
    ];

    pub fn word(self) -> &'static str {
        match self {
            BoundaryTag::DirichletPotential => "dirichlet",
            BoundaryTag::ControlContact => "control",
            BoundaryTag::Insulated => "insulated",
        }
    }

    pub fn from_word(word: &str) -> Option<BoundaryTag> {
        match word {
            "dirichlet" => Some(BoundaryTag::DirichletPotential),
            "control" => Some(BoundaryTag::ControlContact),
            "insulated" => Some(BoundaryTag::Insulated),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFace {
    /// Vertex indices, ordered so that the normal points out of the domain.
    pub vertices: [usize; 3],
    pub tag: BoundaryTag,
}

/// Validated tetrahedral mesh. Immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<BoundaryFace>,
    design_cells: Vec<usize>,
}

/// Parameters of the builtin box generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dims: [f64; 3],
    /// Fraction of the top face length (from each end in x) used by the two contacts.
    pub contact_fraction: f64,
    /// Fraction of the height (from the top) occupied by the design region.
    pub design_depth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshMeasures {
    pub volume: f64,
    pub boundary_area: f64,
    /// Area per tag, in the order of [`BoundaryTag::ALL`].
    pub area_per_tag: [f64; 3],
    pub design_volume: f64,
}

impl MeshMeasures {
    pub fn area(&self, tag: BoundaryTag) -> f64 {
        self.area_per_tag[tag as usize]
    }
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn signed_volume(p: &[Point; 4]) -> f64 {
    let a = sub(&p[1], &p[0]);
    let b = sub(&p[2], &p[0]);
    let c = sub(&p[3], &p[0]);
    dot(&a, &cross(&b, &c)) / 6.0
}

pub fn triangle_area(p: &[Point; 3]) -> f64 {
    let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
    0.5 * dot(&n, &n).sqrt()
}

/// Local faces of a positively oriented tet, each with outward orientation.
const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// Faces that belong to exactly one tet, in first-occurrence order.
fn topological_boundary(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut count: HashMap<[usize; 3], usize> = HashMap::new();
    for tet in tets {
        for lf in TET_FACES {
            let f = [tet[lf[0]], tet[lf[1]], tet[lf[2]]];
            *count.entry(sorted3(f)).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for tet in tets {
        for lf in TET_FACES {
            let f = [tet[lf[0]], tet[lf[1]], tet[lf[2]]];
            if count[&sorted3(f)] == 1 {
                out.push(f);
            }
        }
    }
    out
}

impl Mesh {
    /// Builds a mesh after checking every structural invariant.
    pub fn new(
        vertices: Vec<Point>,
        tets: Vec<[usize; 4]>,
        boundary_faces: Vec<BoundaryFace>,
        mut design_cells: Vec<usize>,
    ) -> Result<Mesh> {
        let nv = vertices.len();
        if tets.is_empty() {
            return Err(Error::Mesh("mesh has no tetrahedra".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        for (t, tet) in tets.iter().enumerate() {
            if tet.iter().any(|&v| v >= nv) {
                return Err(Error::Mesh(format!("tet {t} references a vertex out of range")));
            }
            let p = tet.map(|v| vertices[v]);
            if !(signed_volume(&p) > 0.0) {
                return Err(Error::Mesh(format!("inverted element {t}")));
            }
        }

        let mut boundary: HashMap<[usize; 3], usize> = topological_boundary(&tets)
            .into_iter()
            .map(|f| (sorted3(f), 0))
            .collect();
        if boundary.len() != boundary_faces.len() {
            return Err(Error::Mesh(format!(
                "{} boundary faces given, topological boundary has {}",
                boundary_faces.len(),
                boundary.len()
            )));
        }
        for (i, face) in boundary_faces.iter().enumerate() {
            match boundary.get_mut(&sorted3(face.vertices)) {
                Some(seen) if *seen == 0 => *seen = 1,
                Some(_) => return Err(Error::Mesh(format!("boundary face {i} listed twice"))),
                None => {
                    return Err(Error::Mesh(format!(
                        "face {i} {:?} is not on the boundary",
                        face.vertices
                    )))
                }
            }
        }

        design_cells.sort_unstable();
        design_cells.dedup();
        if let Some(&c) = design_cells.last() {
            if c >= tets.len() {
                return Err(Error::Mesh(format!("design cell {c} out of range")));
            }
        }

        Ok(Mesh {
            vertices,
            tets,
            boundary_faces,
            design_cells,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn design_cells(&self) -> &[usize] {
        &self.design_cells
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn face_points(&self, f: &BoundaryFace) -> [Point; 3] {
        f.vertices.map(|v| self.vertices[v])
    }

    pub fn faces_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryFace> {
        self.boundary_faces.iter().filter(move |f| f.tag == tag)
    }

    /// Index of the vertex closest to `p` (first one on ties).
    pub fn nearest_vertex(&self, p: &Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, v) in self.vertices.iter().enumerate() {
            let d = sub(v, p);
            let d2 = dot(&d, &d);
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best.1
    }

    /// Same mesh with every coordinate multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Mesh> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        let mut m = self.clone();
        for p in &mut m.vertices {
            for c in p.iter_mut() {
                *c *= factor;
            }
        }
        Ok(m)
    }

    pub fn measures(&self) -> MeshMeasures {
        let volume = (0..self.tets.len()).map(|t| signed_volume(&self.tet_points(t))).sum();
        let design_volume = self
            .design_cells
            .iter()
            .map(|&t| signed_volume(&self.tet_points(t)))
            .sum();
        let mut area_per_tag = [0.0; 3];
        for f in &self.boundary_faces {
            area_per_tag[f.tag as usize] += triangle_area(&self.face_points(f));
        }
        MeshMeasures {
            volume,
            boundary_area: area_per_tag.iter().sum(),
            area_per_tag,
            design_volume,
        }
    }

    /// Structured box `[0,Lx]x[0,Ly]x[0,Lz]` with two contacts on the top face.
    ///
    /// A hexahedral column belongs to a contact or to the design region when
    /// its center lies in the corresponding x (and z) range.
    pub fn build_box(spec: &BoxSpec) -> Result<Mesh> {
        let BoxSpec {
            nx,
            ny,
            nz,
            dims,
            contact_fraction: cf,
            design_depth: depth,
        } = *spec;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Mesh(format!("cell counts must be >= 1, got {nx}x{ny}x{nz}")));
        }
        if dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Mesh(format!("degenerate box dimensions {dims:?}")));
        }
        if !(cf > 0.0 && cf <= 0.5) {
            return Err(Error::Mesh(format!(
                "contact fraction {cf} must lie in (0, 0.5] so the contacts do not overlap"
            )));
        }
        if !(depth > 0.0 && depth < 1.0) {
            return Err(Error::Mesh(format!("design depth {depth} must lie in (0, 1)")));
        }

        let [lx, ly, lz] = dims;
        let h = [lx / nx as f64, ly / ny as f64, lz / nz as f64];
        let vid = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    // last layer snapped to the exact box extent
                    let c = |n: usize, idx: usize, d: f64, l: f64| if idx == n { l } else { idx as f64 * d };
                    vertices.push([c(nx, i, h[0], lx), c(ny, j, h[1], ly), c(nz, k, h[2], lz)]);
                }
            }
        }

        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut tets = Vec::with_capacity(6 * nx * ny * nz);
        let mut design_cells = Vec::new();
        let tol = 1e-12;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let xc = (i as f64 + 0.5) * h[0];
                    let zc = (k as f64 + 0.5) * h[2];
                    let in_design = zc > (1.0 - depth) * lz + tol * lz
                        && xc >= cf * lx - tol * lx
                        && xc <= (1.0 - cf) * lx + tol * lx;
                    for perm in PERMS {
                        let mut corner = [i, j, k];
                        let mut tet = [vid(i, j, k), 0, 0, 0];
                        for (slot, axis) in perm.iter().enumerate() {
                            corner[*axis] += 1;
                            tet[slot + 1] = vid(corner[0], corner[1], corner[2]);
                        }
                        if signed_volume(&tet.map(|v| vertices[v])) < 0.0 {
                            tet.swap(2, 3);
                        }
                        if in_design {
                            design_cells.push(tets.len());
                        }
                        tets.push(tet);
                    }
                }
            }
        }

        let boundary_faces = topological_boundary(&tets)
            .into_iter()
            .map(|f| {
                let on_top = f.iter().all(|&v| vertices[v][2] >= lz * (1.0 - tol));
                let tag = if on_top {
                    // column of the face: mean x of its vertices lies inside one cell
                    let xm = f.iter().map(|&v| vertices[v][0]).sum::<f64>() / 3.0;
                    let col = ((xm / h[0]).floor() as usize).min(nx - 1);
                    let xc = (col as f64 + 0.5) * h[0];
                    if xc < cf * lx - tol * lx {
                        BoundaryTag::ControlContact
                    } else if xc > (1.0 - cf) * lx + tol * lx {
                        BoundaryTag::DirichletPotential
                    } else {
                        BoundaryTag::Insulated
                    }
                } else {
                    BoundaryTag::Insulated
                };
                BoundaryFace { vertices: f, tag }
            })
            .collect();

        Mesh::new(vertices, tets, boundary_faces, design_cells)
    }

    /// Writes the ASCII `TETMESH v1` format.
    pub fn to_ascii(&self) -> String {
        let mut s = String::from("TETMESH v1\n");
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
        }
        let _ = writeln!(s, "tets {}", self.tets.len());
        for t in &self.tets {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(s, "faces {}", self.boundary_faces.len());
        for f in &self.boundary_faces {
            let v = f.vertices;
            let _ = writeln!(s, "{} {} {} {}", v[0], v[1], v[2], f.tag.word());
        }
        let _ = writeln!(s, "design {}", self.design_cells.len());
        for c in &self.design_cells {
            let _ = writeln!(s, "{c}");
        }
        s
    }

    pub fn from_ascii(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, msg: String| Error::Parse { line, msg };

        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| perr(0, format!("unexpected end of file, expected {what}")))
        };

        let (ln, header) = next("header")?;
        if header != "TETMESH v1" {
            return Err(perr(ln, format!("bad header {header:?}")));
        }

        fn count(ln: usize, line: &str, key: &str) -> Result<usize> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected '{key} <count>'"),
                });
            }
            let n = it.next().and_then(|t| t.parse().ok()).ok_or(Error::Parse {
                line: ln,
                msg: format!("malformed {key} count"),
            })?;
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: ln,
                    msg: "trailing tokens after count".into(),
                });
            }
            Ok(n)
        }

        fn fields<T: std::str::FromStr>(ln: usize, line: &str, n: usize) -> Result<Vec<T>> {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != n {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {n} fields, found {}", toks.len()),
                });
            }
            toks.iter()
                .map(|t| {
                    t.parse().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("cannot parse {t:?}"),
                    })
                })
                .collect()
        }

        let (ln, l) = next("vertices")?;
        let nv = count(ln, l, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = next("vertex")?;
            let c: Vec<f64> = fields(ln, l, 3)?;
            if c.iter().any(|x| !x.is_finite()) {
                return Err(perr(ln, "non-finite coordinate".into()));
            }
            vertices.push([c[0], c[1], c[2]]);
        }

        let (ln, l) = next("tets")?;
        let nt = count(ln, l, "tets")?;
        let mut tets = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = next("tet")?;
            let t: Vec<usize> = fields(ln, l, 4)?;
            if let Some(bad) = t.iter().find(|&&v| v >= nv) {
                return Err(perr(ln, format!("vertex index {bad} out of range (vertex count {nv})")));
            }
            let tet = [t[0], t[1], t[2], t[3]];
            if !(signed_volume(&tet.map(|v| vertices[v])) > 0.0) {
                return Err(perr(ln, "inverted element".into()));
            }
            tets.push(tet);
        }

        let (ln, l) = next("faces")?;
        let nf = count(ln, l, "faces")?;
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (ln, l) = next("face")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(perr(ln, format!("expected 4 fields, found {}", toks.len())));
            }
            let idx: Vec<usize> = fields(ln, &toks[..3].join(" "), 3)?;
            if let Some(bad) = idx.iter().find(|&&v| v >= nv) {
                return Err(perr(ln, format!("vertex index {bad} out of range (vertex count {nv})")));
            }
            let tag = BoundaryTag::from_word(toks[3]).ok_or_else(|| perr(ln, format!("unknown tag {:?}", toks[3])))?;
            faces.push(BoundaryFace {
                vertices: [idx[0], idx[1], idx[2]],
                tag,
            });
        }

        let (ln, l) = next("design")?;
        let nd = count(ln, l, "design")?;
        let mut design = Vec::with_capacity(nd);
        for _ in 0..nd {
            let (ln, l) = next("design cell")?;
            let c: Vec<usize> = fields(ln, l, 1)?;
            if c[0] >= nt {
                return Err(perr(ln, format!("design cell {} out of range (tet count {nt})", c[0])));
            }
            design.push(c[0]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content".into()));
        }

        Mesh::new(vertices, tets, faces, design)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mesh> {
        Mesh::from_ascii(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: [usize; 3], dims: [f64; 3], cf: f64, depth: f64) -> BoxSpec {
        BoxSpec {
            nx: n[0],
            ny: n[1],
            nz: n[2],
            dims,
            contact_fraction: cf,
            design_depth: depth,
        }
    }

    /// Counts faces of a structured decomposition by brute-force enumeration of
    /// every hex cell's six sides.
    fn enumerate_boundary_triangles(n: [usize; 3]) -> usize {
        let mut sides = 0;
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let c = [i, j, k];
                    for axis in 0..3 {
                        if c[axis] == 0 {
                            sides += 1;
                        }
                        if c[axis] + 1 == n[axis] {
                            sides += 1;
                        }
                    }
                }
            }
        }
        2 * sides
    }

    #[test]
    fn single_cell_box() {
        let m = Mesh::build_box(&spec([1, 1, 1], [1.0; 3], 0.25, 0.5)).unwrap();
        assert_eq!(m.n_vertices(), 8);
        assert_eq!(m.tets().len(), 6);
        assert_eq!(m.boundary_faces().len(), 12);
        let meas = m.measures();
        assert!((meas.volume - 1.0).abs() < 1e-12);
        assert!((meas.boundary_area - 6.0).abs() < 1e-12);
        let tag_sum: f64 = meas.area_per_tag.iter().sum();
        assert!((tag_sum - meas.boundary_area).abs() < 1e-12);
    }

    #[test]
    fn two_cell_bar_volume_and_contact_area() {
        let m = Mesh::build_box(&spec([2, 1, 1], [2.0, 1.0, 1.0], 0.5, 0.5)).unwrap();
        let meas = m.measures();
        assert!((meas.volume - 2.0).abs() < 1e-12);
        assert!((meas.area(BoundaryTag::ControlContact) - 1.0).abs() < 1e-12);
        assert!((meas.area(BoundaryTag::DirichletPotential) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn desk_box_counts() {
        let m = Mesh::build_box(&spec([5, 3, 3], [0.1, 0.02, 0.02], 0.3, 0.4)).unwrap();
        assert_eq!(m.n_vertices(), 96);
        assert_eq!(m.tets().len(), 270);
        assert_eq!(m.boundary_faces().len(), enumerate_boundary_triangles([5, 3, 3]));
        assert_eq!(m.boundary_faces().len(), 156);
        let meas = m.measures();
        assert!((meas.volume - 0.1 * 0.02 * 0.02).abs() < 1e-12 * 4e-5);
        // one contact column each way, the middle three columns of the top layer designed
        assert!((meas.area(BoundaryTag::ControlContact) - 0.02 * 0.02).abs() < 1e-15);
        assert!((meas.area(BoundaryTag::DirichletPotential) - 0.02 * 0.02).abs() < 1e-15);
        assert_eq!(m.design_cells().len(), 3 * 3 * 6);
    }

    #[test]
    fn scaling_multiplies_measures() {
        let m = Mesh::build_box(&spec([2, 1, 1], [2.0, 1.0, 1.0], 0.5, 0.5)).unwrap();
        let s = m.scaled(0.5).unwrap();
        let (a, b) = (m.measures(), s.measures());
        assert!((b.volume - a.volume / 8.0).abs() < 1e-14);
        assert!((b.boundary_area - a.boundary_area / 4.0).abs() < 1e-14);
        assert_eq!(s.tets(), m.tets());
        assert_eq!(s.boundary_faces(), m.boundary_faces());
        assert!(m.scaled(0.0).is_err());
        assert!(m.scaled(f64::NAN).is_err());
    }

    #[test]
    fn half_slab_design_volume() {
        let m = Mesh::build_box(&spec([2, 2, 2], [1.0; 3], 0.25, 0.5)).unwrap();
        assert!((m.measures().design_volume - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interior_faces_shared_by_two_tets() {
        let m = Mesh::build_box(&spec([3, 2, 2], [1.0, 0.5, 0.7], 0.3, 0.4)).unwrap();
        let mut count: HashMap<[usize; 3], usize> = HashMap::new();
        for tet in m.tets() {
            for lf in TET_FACES {
                *count.entry(sorted3([tet[lf[0]], tet[lf[1]], tet[lf[2]]])).or_default() += 1;
            }
        }
        let boundary: std::collections::HashSet<_> = m.boundary_faces().iter().map(|f| sorted3(f.vertices)).collect();
        for (f, c) in count {
            if boundary.contains(&f) {
                assert_eq!(c, 1);
            } else {
                assert_eq!(c, 2);
            }
        }
    }

    #[test]
    fn boundary_faces_point_outward() {
        let m = Mesh::build_box(&spec([2, 2, 2], [1.0; 3], 0.25, 0.5)).unwrap();
        let center = [0.5, 0.5, 0.5];
        for f in m.boundary_faces() {
            let p = m.face_points(f);
            let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            assert!(dot(&n, &sub(&p[0], &center)) > 0.0);
        }
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(Mesh::build_box(&spec([1, 1, 1], [1.0, 0.0, 1.0], 0.25, 0.5)).is_err());
        assert!(Mesh::build_box(&spec([0, 1, 1], [1.0; 3], 0.25, 0.5)).is_err());
        assert!(Mesh::build_box(&spec([1, 1, 1], [1.0; 3], 0.7, 0.5)).is_err());
    }

    #[test]
    fn ascii_round_trip() {
        let m = Mesh::build_box(&spec([1, 1, 1], [1.0, 0.3, 0.1], 0.25, 0.5)).unwrap();
        let back = Mesh::from_ascii(&m.to_ascii()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let m = Mesh::build_box(&spec([1, 1, 1], [1.0; 3], 0.25, 0.5)).unwrap();
        let text = m.to_ascii();

        // line 12 is the first tet line: header, count, 8 vertices, count
        let bad_index: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i == 11 { "0 1 2 8".to_string() } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n");
        match Mesh::from_ascii(&bad_index) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 12);
                assert!(msg.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let inverted: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 11 {
                    let t: Vec<&str> = l.split_whitespace().collect();
                    format!("{} {} {} {}", t[1], t[0], t[2], t[3])
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        match Mesh::from_ascii(&inverted) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 12);
                assert!(msg.contains("inverted element"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let bad_tag = text.replacen("insulated", "grounded", 1);
        assert!(matches!(Mesh::from_ascii(&bad_tag), Err(Error::Parse { .. })));
        let bad_count = text.replacen("vertices 8", "vertices x", 1);
        assert!(matches!(
            Mesh::from_ascii(&bad_count),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
