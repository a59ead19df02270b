//! P1 finite-element assembly on tetrahedra.
//!
//! Nonlinear coefficients are evaluated once per element at the centroid
//! temperature `θ̄ = (θ₀+θ₁+θ₂+θ₃)/4`. Every Jacobian block below is the exact
//! derivative of the corresponding residual term under this quadrature, which
//! is what makes the transposed sweep in [`crate::adjoint`] a true discrete
//! adjoint.

use crate::error::{Error, Result};
use crate::materials::ScaledModel;
use crate::mesh::{self, BoundaryTag, Mesh, Point};
use crate::sparse::{SparseMatrix, Triplet};

/// Constant shape-function gradients and volume of one tet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGradients {
    pub grads: [Point; 4],
    pub volume: f64,
}

impl ElementGradients {
    pub fn new(p: &[Point; 4]) -> ElementGradients {
        let e1 = mesh::sub(&p[1], &p[0]);
        let e2 = mesh::sub(&p[2], &p[0]);
        let e3 = mesh::sub(&p[3], &p[0]);
        let c23 = mesh::cross(&e2, &e3);
        let det = mesh::dot(&e1, &c23);
        let rows = [c23, mesh::cross(&e3, &e1), mesh::cross(&e1, &e2)].map(|r| r.map(|v| v / det));
        let g0 = [
            -(rows[0][0] + rows[1][0] + rows[2][0]),
            -(rows[0][1] + rows[1][1] + rows[2][1]),
            -(rows[0][2] + rows[1][2] + rows[2][2]),
        ];
        ElementGradients {
            grads: [g0, rows[0], rows[1], rows[2]],
            volume: det / 6.0,
        }
    }

    /// Gradient of the P1 interpolant of nodal values `f` on this element.
    #[inline]
    pub fn gradient(&self, tet: &[usize; 4], f: &[f64]) -> Point {
        let mut g = [0.0; 3];
        for (a, &v) in tet.iter().enumerate() {
            for d in 0..3 {
                g[d] += f[v] * self.grads[a][d];
            }
        }
        g
    }
}

#[inline]
pub(crate) fn centroid(tet: &[usize; 4], f: &[f64]) -> f64 {
    0.25 * (f[tet[0]] + f[tet[1]] + f[tet[2]] + f[tet[3]])
}

/// Vertex classification for the potential equation and the control.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub n_vertices: usize,
    pub dirichlet: Vec<bool>,
    /// Free (non-Dirichlet) vertices in ascending order.
    pub free: Vec<usize>,
    pub free_index: Vec<Option<usize>>,
    /// Vertices of control-contact faces in ascending order.
    pub control: Vec<usize>,
    pub control_index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Result<DofMap> {
        let n = mesh.n_vertices();
        let mut dirichlet = vec![false; n];
        let mut is_control = vec![false; n];
        for f in mesh.boundary_faces() {
            match f.tag {
                BoundaryTag::DirichletPotential => f.vertices.iter().for_each(|&v| dirichlet[v] = true),
                BoundaryTag::ControlContact => f.vertices.iter().for_each(|&v| is_control[v] = true),
                BoundaryTag::Insulated => {}
            }
        }
        if !dirichlet.iter().any(|&d| d) {
            return Err(Error::Mesh(
                "no grounded (dirichlet) boundary faces; potential is undetermined".into(),
            ));
        }
        if !is_control.iter().any(|&c| c) {
            return Err(Error::Mesh("no control-contact boundary faces".into()));
        }
        let mut free = Vec::new();
        let mut free_index = vec![None; n];
        let mut control = Vec::new();
        let mut control_index = vec![None; n];
        for v in 0..n {
            if !dirichlet[v] {
                free_index[v] = Some(free.len());
                free.push(v);
            }
            if is_control[v] {
                control_index[v] = Some(control.len());
                control.push(v);
            }
        }
        Ok(DofMap {
            n_vertices: n,
            dirichlet,
            free,
            free_index,
            control,
            control_index,
        })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_control(&self) -> usize {
        self.control.len()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_vertices];
        for (k, &v) in self.free.iter().enumerate() {
            full[v] = reduced[k];
        }
        full
    }
}

/// Mesh plus everything about the discretization that does not depend on the
/// state: element geometry, vertex classes and the constant matrices.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    pub elements: Vec<ElementGradients>,
    pub dofs: DofMap,
    /// Row sums of the unit-coefficient volume mass matrix.
    pub lumped_mass: Vec<f64>,
    /// Row sums of the unit-coefficient boundary mass matrix over all faces.
    pub lumped_boundary: Vec<f64>,
    /// Consistent boundary mass on control faces; rows free vertices, columns control vertices.
    pub control_mass: SparseMatrix,
    /// Lumped control-boundary mass per control vertex.
    pub control_weights: Vec<f64>,
    /// Consistent mass matrix restricted to the design cells.
    pub design_mass: SparseMatrix,
    pub(crate) patterns: Patterns,
}

/// Marks a local pair that has no slot (a grounded row or column).
pub(crate) const NO_SLOT: usize = usize::MAX;

pub(crate) type SlotMap = Vec<[[usize; 4]; 4]>;

/// Sparsity patterns fixed by the mesh, with the storage slot of every local
/// element pair, so the state-dependent matrices scatter straight into CSR.
#[derive(Clone, Debug)]
pub(crate) struct Patterns {
    /// `V ∇N_a·∇N_b` per element.
    pub local: Vec<[[f64; 4]; 4]>,
    pub vertex: SparseMatrix,
    pub vertex_slots: SlotMap,
    pub free: SparseMatrix,
    pub free_slots: SlotMap,
    /// Coupled `(θ, φ_free)` step matrix and its four blocks.
    pub coupled: SparseMatrix,
    pub theta_theta: SlotMap,
    pub theta_phi: SlotMap,
    pub phi_theta: SlotMap,
    pub phi_phi: SlotMap,
    pub coupled_diag: Vec<usize>,
}

type Map<'a> = &'a dyn Fn(usize) -> Option<usize>;

fn pairs(tets: &[[usize; 4]], rows: Map, cols: Map, out: &mut Vec<Triplet>) {
    for t in tets {
        for a in 0..4 {
            let Some(i) = rows(t[a]) else { continue };
            for b in 0..4 {
                if let Some(j) = cols(t[b]) {
                    out.push((i, j, 0.0));
                }
            }
        }
    }
}

fn slots(m: &SparseMatrix, tets: &[[usize; 4]], rows: Map, cols: Map) -> SlotMap {
    tets.iter()
        .map(|t| {
            let mut s = [[NO_SLOT; 4]; 4];
            for a in 0..4 {
                for b in 0..4 {
                    if let (Some(i), Some(j)) = (rows(t[a]), cols(t[b])) {
                        s[a][b] = m.find(i, j).expect("pair in pattern");
                    }
                }
            }
            s
        })
        .collect()
}

impl Patterns {
    fn new(tets: &[[usize; 4]], elements: &[ElementGradients], dofs: &DofMap) -> Result<Patterns> {
        let n = dofs.n_vertices;
        let nf = dofs.n_free();
        let vertex_of = |v: usize| Some(v);
        let free_of = |v: usize| dofs.free_index[v];
        let shifted = |v: usize| dofs.free_index[v].map(|f| n + f);

        let mut t = Vec::with_capacity(16 * tets.len());
        pairs(tets, &vertex_of, &vertex_of, &mut t);
        let vertex = SparseMatrix::from_triplets(n, n, t)?;
        let mut t = Vec::with_capacity(16 * tets.len());
        pairs(tets, &free_of, &free_of, &mut t);
        let free = SparseMatrix::from_triplets(nf, nf, t)?;

        let mut t: Vec<Triplet> = (0..n).map(|i| (i, i, 0.0)).collect();
        pairs(tets, &vertex_of, &vertex_of, &mut t);
        pairs(tets, &vertex_of, &shifted, &mut t);
        pairs(tets, &shifted, &vertex_of, &mut t);
        pairs(tets, &shifted, &shifted, &mut t);
        let coupled = SparseMatrix::from_triplets(n + nf, n + nf, t)?;

        let local = elements
            .iter()
            .map(|el| {
                let mut l = [[0.0; 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        l[a][b] = el.volume * mesh::dot(&el.grads[a], &el.grads[b]);
                    }
                }
                l
            })
            .collect();
        Ok(Patterns {
            local,
            vertex_slots: slots(&vertex, tets, &vertex_of, &vertex_of),
            free_slots: slots(&free, tets, &free_of, &free_of),
            theta_theta: slots(&coupled, tets, &vertex_of, &vertex_of),
            theta_phi: slots(&coupled, tets, &vertex_of, &shifted),
            phi_theta: slots(&coupled, tets, &shifted, &vertex_of),
            phi_phi: slots(&coupled, tets, &shifted, &shifted),
            coupled_diag: (0..n)
                .map(|i| coupled.find(i, i).expect("diagonal in pattern"))
                .collect(),
            vertex,
            free,
            coupled,
        })
    }

    /// `Σ_e c_e V ∇N_a·∇N_b` scattered through `slots` into `pattern`.
    fn stiffness(&self, pattern: &SparseMatrix, slots: &SlotMap, coeffs: impl Iterator<Item = f64>) -> SparseMatrix {
        let mut values = vec![0.0; pattern.nnz()];
        for ((s, l), c) in slots.iter().zip(&self.local).zip(coeffs) {
            for a in 0..4 {
                for b in 0..4 {
                    if s[a][b] != NO_SLOT {
                        values[s[a][b]] += c * l[a][b];
                    }
                }
            }
        }
        pattern.with_values(values)
    }
}

impl Discretization {
    pub fn new(mesh: Mesh) -> Result<Discretization> {
        let dofs = DofMap::new(&mesh)?;
        let elements: Vec<_> = (0..mesh.tets().len())
            .map(|t| ElementGradients::new(&mesh.tet_points(t)))
            .collect();
        let n = mesh.n_vertices();

        let mut lumped_mass = vec![0.0; n];
        for (tet, el) in mesh.tets().iter().zip(&elements) {
            for &v in tet {
                lumped_mass[v] += el.volume / 4.0;
            }
        }
        let mut lumped_boundary = vec![0.0; n];
        for f in mesh.boundary_faces() {
            let a = mesh::triangle_area(&mesh.face_points(f));
            for &v in &f.vertices {
                lumped_boundary[v] += a / 3.0;
            }
        }

        let mut t = Vec::new();
        let mut control_weights = vec![0.0; dofs.n_control()];
        for f in mesh.faces_with_tag(BoundaryTag::ControlContact) {
            let a = mesh::triangle_area(&mesh.face_points(f));
            for &vi in &f.vertices {
                control_weights[dofs.control_index[vi].unwrap()] += a / 3.0;
                let Some(i) = dofs.free_index[vi] else { continue };
                for &vj in &f.vertices {
                    let j = dofs.control_index[vj].unwrap();
                    t.push((i, j, if vi == vj { a / 6.0 } else { a / 12.0 }));
                }
            }
        }
        let control_mass = SparseMatrix::from_triplets(dofs.n_free(), dofs.n_control(), t)?;

        let mut t = Vec::new();
        for &c in mesh.design_cells() {
            push_mass(&mut t, &mesh.tets()[c], elements[c].volume, 1.0);
        }
        let design_mass = SparseMatrix::from_triplets(n, n, t)?;
        let patterns = Patterns::new(mesh.tets(), &elements, &dofs)?;

        Ok(Discretization {
            mesh,
            elements,
            dofs,
            lumped_mass,
            lumped_boundary,
            control_mass,
            control_weights,
            design_mass,
            patterns,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub(crate) fn cells(&self) -> impl Iterator<Item = (&[usize; 4], &ElementGradients)> {
        self.mesh.tets().iter().zip(&self.elements)
    }
}

fn push_mass(t: &mut Vec<Triplet>, tet: &[usize; 4], volume: f64, coeff: f64) {
    for a in 0..4 {
        for b in 0..4 {
            let w = if a == b { 2.0 } else { 1.0 };
            t.push((tet[a], tet[b], coeff * w * volume / 20.0));
        }
    }
}

fn square(n: usize, t: Vec<Triplet>) -> SparseMatrix {
    SparseMatrix::from_triplets(n, n, t).expect("assembly indices in range")
}

/// Consistent P1 mass matrix `coeff ∫ N_i N_j`.
pub fn assemble_mass(disc: &Discretization, coeff: f64) -> SparseMatrix {
    let mut t = Vec::with_capacity(16 * disc.elements.len());
    for (tet, el) in disc.cells() {
        push_mass(&mut t, tet, el.volume, coeff);
    }
    square(disc.n_vertices(), t)
}

/// `∫ D η̂(θ̄) ∇N_j·∇N_i`
pub fn assemble_heat_stiffness(disc: &Discretization, model: &ScaledModel, theta: &[f64]) -> SparseMatrix {
    let p = &disc.patterns;
    p.stiffness(
        &p.vertex,
        &p.vertex_slots,
        disc.mesh
            .tets()
            .iter()
            .map(|tet| model.heat.value(centroid(tet, theta))),
    )
}

/// Unit-coefficient Laplace stiffness.
pub fn assemble_laplace(disc: &Discretization) -> SparseMatrix {
    let p = &disc.patterns;
    p.stiffness(&p.vertex, &p.vertex_slots, std::iter::repeat(1.0))
}

/// Consistent boundary mass `α ∫_∂Ω N_i N_j` over every boundary face, and the
/// matching load for a constant ambient temperature.
pub fn assemble_robin(disc: &Discretization, alpha: f64, theta_l: f64) -> (SparseMatrix, Vec<f64>) {
    let mesh = &disc.mesh;
    let mut t = Vec::with_capacity(9 * mesh.boundary_faces().len());
    for f in mesh.boundary_faces() {
        let a = mesh::triangle_area(&mesh.face_points(f));
        for &vi in &f.vertices {
            for &vj in &f.vertices {
                t.push((vi, vj, alpha * if vi == vj { a / 6.0 } else { a / 12.0 }));
            }
        }
    }
    let b = square(disc.n_vertices(), t);
    let load = b.matvec(&vec![theta_l; disc.n_vertices()]);
    (b, load)
}

/// `∫ σ̂(θ̄) ∇N_j·∇N_i` on the free vertices (grounded rows and columns removed).
pub fn assemble_potential_system(disc: &Discretization, model: &ScaledModel, theta: &[f64]) -> SparseMatrix {
    let p = &disc.patterns;
    p.stiffness(
        &p.free,
        &p.free_slots,
        disc.mesh
            .tets()
            .iter()
            .map(|tet| model.electric.value(centroid(tet, theta))),
    )
}

/// `∫_{Γ_N} u N_i` for a P1 boundary current given at the control vertices.
pub fn assemble_control_load(disc: &Discretization, u_slice: &[f64]) -> Vec<f64> {
    let mesh = &disc.mesh;
    let idx = &disc.dofs.control_index;
    let mut load = vec![0.0; disc.n_vertices()];
    for f in mesh.faces_with_tag(BoundaryTag::ControlContact) {
        let a = mesh::triangle_area(&mesh.face_points(f));
        for &vi in &f.vertices {
            for &vj in &f.vertices {
                let w = if vi == vj { a / 6.0 } else { a / 12.0 };
                load[vi] += w * u_slice[idx[vj].unwrap()];
            }
        }
    }
    load
}

/// Joule heat `Jo σ̂(θ̄)|∇φ|²` per element, lumped to the vertices with weight `V/4`.
pub fn assemble_joule_load(disc: &Discretization, model: &ScaledModel, theta: &[f64], phi: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; disc.n_vertices()];
    for (tet, el) in disc.cells() {
        let g = el.gradient(tet, phi);
        let q = model.joule * model.electric.value(centroid(tet, theta)) * mesh::dot(&g, &g);
        for &v in tet {
            load[v] += q * el.volume / 4.0;
        }
    }
    load
}

/// Weak q-Laplacian `ξ ↦ ∫ |∇θ|^{q−2} ∇θ·∇ξ` tested with every hat function.
pub fn assemble_qlaplacian(disc: &Discretization, theta: &[f64], q_exp: f64) -> Vec<f64> {
    let mut out = vec![0.0; disc.n_vertices()];
    for (tet, el) in disc.cells() {
        let g = el.gradient(tet, theta);
        let n2 = mesh::dot(&g, &g);
        let w = if q_exp == 2.0 {
            1.0
        } else if n2 == 0.0 {
            0.0
        } else {
            n2.powf(0.5 * (q_exp - 2.0))
        };
        for a in 0..4 {
            out[tet[a]] += w * el.volume * mesh::dot(&g, &el.grads[a]);
        }
    }
    out
}

/// `Σ_e V_e |∇θ|_e^q`, the q-th power of the discrete `L^q` norm of `∇θ`.
pub fn gradient_norm_power(disc: &Discretization, theta: &[f64], q_exp: f64) -> f64 {
    disc.cells()
        .map(|(tet, el)| {
            let g = el.gradient(tet, theta);
            el.volume * mesh::dot(&g, &g).sqrt().powf(q_exp)
        })
        .sum()
}

/// Derivative blocks of the coupled step residual with respect to the
/// coefficients' temperature dependence and the Joule term.
#[derive(Clone, Debug)]
pub struct LinearizationBlocks {
    /// `∂/∂θ_j` of `K_η(θ)θ` at fixed θ in the product: `∫ D η̂'(θ̄) N_j ∇θ·∇N_i`.
    pub k_eta_p: SparseMatrix,
    /// `∂F_i/∂θ_j` of the lumped Joule load.
    pub c_joule_theta: SparseMatrix,
    /// `∂F_i/∂φ_j` of the lumped Joule load (all vertices).
    pub c_joule_phi: SparseMatrix,
    /// `∫ σ̂'(θ̄) N_j ∇φ·∇N_i`, free rows only.
    pub a_sigma_p: SparseMatrix,
}

pub fn assemble_linearization_blocks(
    disc: &Discretization,
    model: &ScaledModel,
    theta: &[f64],
    phi: &[f64],
) -> LinearizationBlocks {
    let n = disc.n_vertices();
    let idx = &disc.dofs.free_index;
    let ne = disc.elements.len();
    let (mut kp, mut ct, mut cp, mut ap) = (
        Vec::with_capacity(16 * ne),
        Vec::with_capacity(16 * ne),
        Vec::with_capacity(16 * ne),
        Vec::with_capacity(16 * ne),
    );
    for (tet, el) in disc.cells() {
        let tc = centroid(tet, theta);
        let (s, ds) = model.electric.eval(tc);
        let deta = model.heat.derivative(tc);
        let gt = el.gradient(tet, theta);
        let gp = el.gradient(tet, phi);
        let gp2 = mesh::dot(&gp, &gp);
        let v = el.volume;
        for a in 0..4 {
            let i = tet[a];
            let heat_flux = deta * v * mesh::dot(&gt, &el.grads[a]) / 4.0;
            let cur_flux = ds * v * mesh::dot(&gp, &el.grads[a]) / 4.0;
            for b in 0..4 {
                let j = tet[b];
                kp.push((i, j, heat_flux));
                ct.push((i, j, model.joule * ds / 4.0 * gp2 * v / 4.0));
                cp.push((i, j, model.joule * 2.0 * s * mesh::dot(&gp, &el.grads[b]) * v / 4.0));
                if let Some(fi) = idx[i] {
                    ap.push((fi, j, cur_flux));
                }
            }
        }
    }
    LinearizationBlocks {
        k_eta_p: square(n, kp),
        c_joule_theta: square(n, ct),
        c_joule_phi: square(n, cp),
        a_sigma_p: SparseMatrix::from_triplets(disc.dofs.n_free(), n, ap).expect("indices in range"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryFace, BoxSpec};
    use crate::sparse::{cg_solve, dot};

    fn boxed(n: [usize; 3], dims: [f64; 3]) -> Discretization {
        Discretization::new(
            Mesh::build_box(&BoxSpec {
                nx: n[0],
                ny: n[1],
                nz: n[2],
                dims,
                contact_fraction: 0.3,
                design_depth: 0.4,
            })
            .unwrap(),
        )
        .unwrap()
    }

    fn reference_tet() -> Discretization {
        let vertices = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let tets = vec![[0, 1, 2, 3]];
        let faces = vec![
            BoundaryFace {
                vertices: [1, 2, 3],
                tag: BoundaryTag::ControlContact,
            },
            BoundaryFace {
                vertices: [0, 3, 2],
                tag: BoundaryTag::DirichletPotential,
            },
            BoundaryFace {
                vertices: [0, 1, 3],
                tag: BoundaryTag::Insulated,
            },
            BoundaryFace {
                vertices: [0, 2, 1],
                tag: BoundaryTag::Insulated,
            },
        ];
        Discretization::new(Mesh::new(vertices, tets, faces, vec![0]).unwrap()).unwrap()
    }

    #[test]
    fn gradients_sum_to_zero_and_reproduce_linear_fields() {
        let d = boxed([2, 2, 2], [1.0, 0.7, 0.3]);
        for (tet, el) in d.cells() {
            for k in 0..3 {
                let s: f64 = el.grads.iter().map(|g| g[k]).sum();
                assert!(s.abs() < 1e-12);
            }
            let f: Vec<f64> = d
                .mesh
                .vertices()
                .iter()
                .map(|p| 2.0 * p[0] - p[1] + 3.0 * p[2])
                .collect();
            let g = el.gradient(tet, &f);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 1.0).abs() < 1e-12 && (g[2] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_mass_matrix() {
        let d = reference_tet();
        let m = assemble_mass(&d, 1.0);
        let v = 1.0 / 6.0;
        for i in 0..4 {
            for j in 0..4 {
                let expect = v / 20.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_partition_of_unity() {
        let d = boxed([3, 2, 2], [0.1, 0.02, 0.02]);
        let m = assemble_mass(&d, 3.5);
        let total: f64 = m.row_sums().iter().sum();
        assert!((total - 3.5 * 0.1 * 0.02 * 0.02).abs() < 1e-15);
        assert_eq!(assemble_mass(&d, 0.0).max_abs(), 0.0);
        assert!(m.asymmetry() <= 1e-12 * m.max_abs());
    }

    #[test]
    fn constant_kernel_and_linearity_of_heat_stiffness() {
        let d = boxed([3, 2, 2], [1.0, 0.5, 0.5]);
        let model = ScaledModel::uniform(1.0, 1.0, 1.0, 0.0, 0.0);
        let theta = vec![0.3; d.n_vertices()];
        let k = assemble_heat_stiffness(&d, &model, &theta);
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(k.asymmetry() <= 1e-12 * k.max_abs());
        let k2 = assemble_heat_stiffness(&d, &ScaledModel::uniform(2.0, 1.0, 1.0, 0.0, 0.0), &theta);
        for ((_, _, a), (_, _, b)) in k.triplets().zip(k2.triplets()) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
        // nonpositive off-diagonals on path-simplex meshes
        for (i, j, v) in k.triplets() {
            if i != j {
                assert!(v <= 1e-14);
            }
        }
    }

    #[test]
    fn heat_stiffness_quadratic_form_matches_quadrature() {
        let d = boxed([2, 2, 2], [1.0, 1.0, 1.0]);
        let model = crate::materials::ScaledModel::new(
            &crate::materials::MaterialModel::default(),
            crate::materials::make_scaling(
                &crate::materials::MaterialModel::default(),
                &crate::materials::ScalingConfig::identity(),
                290.0,
            )
            .unwrap(),
            290.0,
        );
        let theta: Vec<f64> = d.mesh.vertices().iter().map(|p| 300.0 + 1000.0 * p[0]).collect();
        let k = assemble_heat_stiffness(&d, &model, &theta);
        let form = dot(&theta, &k.matvec(&theta));
        // brute force: per element, η at the centroid (average of vertex x), |∇θ|² = 1e6
        let mut expect = 0.0;
        for (t, tet) in d.mesh.tets().iter().enumerate() {
            let xc: f64 = tet.iter().map(|&v| d.mesh.vertices()[v][0]).sum::<f64>() / 4.0;
            expect += model.heat.value(300.0 + 1000.0 * xc) * 1e6 * mesh::signed_volume(&d.mesh.tet_points(t));
        }
        assert!((form - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn reference_triangle_robin() {
        let d = reference_tet();
        let (b, load) = assemble_robin(&d, 1.0, 2.0);
        // face [1,2,3] has area sqrt(3)/2, face [0,2,1] area 1/2
        let a = 0.5;
        let m_00: f64 = 3.0 * a / 6.0;
        assert!((b.get(0, 0) - m_00).abs() < 1e-15);
        let total_area = 1.5 + 3f64.sqrt() / 2.0;
        let rs: f64 = b.row_sums().iter().sum();
        assert!((rs - total_area).abs() < 1e-14);
        // Robin equilibrium
        let res: Vec<f64> = b.matvec(&[2.0; 4]).iter().zip(&load).map(|(x, y)| x - y).collect();
        assert!(res.iter().all(|r| r.abs() < 1e-15));
        let (b0, l0) = assemble_robin(&d, 0.0, 2.0);
        assert_eq!(b0.max_abs(), 0.0);
        assert!(l0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_triangle_robin_element_matrix() {
        // one boundary triangle of area A contributes (A/12)(2 diag, 1 off)
        let d = reference_tet();
        let f = d.mesh.boundary_faces()[3];
        let area = mesh::triangle_area(&d.mesh.face_points(&f));
        let (b, _) = assemble_robin(&d, 1.0, 0.0);
        // vertex 0 is on three faces of area 1/2 each; (0,1) on two
        assert!((b.get(0, 1) - 2.0 * area / 12.0).abs() < 1e-15);
    }

    #[test]
    fn patch_test_linear_potential() {
        // bar with grounded x=Lx end; unit flux enters at x=0 end through control
        let mesh = Mesh::build_box(&BoxSpec {
            nx: 4,
            ny: 2,
            nz: 2,
            dims: [2.0, 1.0, 1.0],
            contact_fraction: 0.25,
            design_depth: 0.5,
        })
        .unwrap();
        // retag: x = 0 face control, x = Lx face grounded
        let faces = mesh
            .boundary_faces()
            .iter()
            .map(|f| {
                let xs: Vec<f64> = f.vertices.iter().map(|&v| mesh.vertices()[v][0]).collect();
                let tag = if xs.iter().all(|&x| x == 0.0) {
                    BoundaryTag::ControlContact
                } else if xs.iter().all(|&x| x == 2.0) {
                    BoundaryTag::DirichletPotential
                } else {
                    BoundaryTag::Insulated
                };
                BoundaryFace {
                    vertices: f.vertices,
                    tag,
                }
            })
            .collect();
        let mesh = Mesh::new(mesh.vertices().to_vec(), mesh.tets().to_vec(), faces, vec![]).unwrap();
        let d = Discretization::new(mesh).unwrap();
        let s = 3.0;
        let model = ScaledModel::uniform(1.0, s, 1.0, 0.0, 0.0);
        let theta = vec![0.0; d.n_vertices()];
        let a = assemble_potential_system(&d, &model, &theta);
        let load = assemble_control_load(&d, &vec![1.0; d.dofs.n_control()]);
        let (phi, _) = cg_solve(&a, &d.dofs.restrict(&load), 1e-14, 1000).unwrap();
        let phi = d.dofs.extend(&phi);
        for (v, p) in d.mesh.vertices().iter().enumerate() {
            // σ ∂φ/∂x = -1, φ(2) = 0
            let exact = (2.0 - p[0]) / s;
            assert!((phi[v] - exact).abs() < 1e-10, "{} vs {}", phi[v], exact);
        }
    }

    #[test]
    fn potential_system_scales_with_sigma() {
        let d = boxed([3, 2, 2], [1.0, 0.4, 0.4]);
        let m = crate::materials::MaterialModel::default();
        let s = crate::materials::make_scaling(&m, &crate::materials::ScalingConfig::identity(), 290.0).unwrap();
        let model = ScaledModel::new(&m, s, 290.0);
        let theta = vec![290.0; d.n_vertices()];
        let a = assemble_potential_system(&d, &model, &theta);
        let lap = assemble_potential_system(&d, &ScaledModel::uniform(1.0, 1.0, 1.0, 0.0, 0.0), &theta);
        let f = model.electric.value(290.0);
        assert!((f - 1.0).abs() < 1e-14);
        for ((_, _, x), (_, _, y)) in a.triplets().zip(lap.triplets()) {
            assert!((x - f * y).abs() <= 1e-14 * y.abs().max(1e-300));
        }
        assert!(a.asymmetry() <= 1e-12 * a.max_abs());
        let rhs: Vec<f64> = (0..d.dofs.n_free()).map(|i| (i as f64).sin()).collect();
        assert!(cg_solve(&a, &rhs, 1e-12, 1000).is_ok());
    }

    #[test]
    fn control_load_cases() {
        let d = boxed([5, 3, 3], [0.1, 0.02, 0.02]);
        let nc = d.dofs.n_control();
        assert!(assemble_control_load(&d, &vec![0.0; nc]).iter().all(|&x| x == 0.0));
        let area = d.mesh.measures().area(BoundaryTag::ControlContact);
        let total: f64 = assemble_control_load(&d, &vec![1.0; nc]).iter().sum();
        assert!((total - area).abs() < 1e-15);
        let c = 2;
        let mut hat = vec![0.0; nc];
        hat[c] = 1.0;
        let incident: f64 = d
            .mesh
            .faces_with_tag(BoundaryTag::ControlContact)
            .filter(|f| f.vertices.contains(&d.dofs.control[c]))
            .map(|f| mesh::triangle_area(&d.mesh.face_points(f)))
            .sum();
        let s: f64 = assemble_control_load(&d, &hat).iter().sum();
        assert!((s - incident / 3.0).abs() < 1e-16);
        assert!((d.control_weights[c] - incident / 3.0).abs() < 1e-16);
    }

    #[test]
    fn joule_load_cases() {
        let d = boxed([3, 2, 2], [1.0, 0.5, 0.5]);
        let n = d.n_vertices();
        let model = ScaledModel::uniform(1.0, 2.5, 1.0, 0.0, 0.0);
        let theta = vec![0.0; n];
        assert!(assemble_joule_load(&d, &model, &theta, &vec![0.0; n])
            .iter()
            .all(|&x| x == 0.0));
        let phi: Vec<f64> = d.mesh.vertices().iter().map(|p| p[1]).collect();
        let f = assemble_joule_load(&d, &model, &theta, &phi);
        assert!(f.iter().all(|&x| x >= 0.0));
        let total: f64 = f.iter().sum();
        assert!((total - 2.5 * 0.25).abs() < 1e-14);
        let phi2: Vec<f64> = phi.iter().map(|x| 2.0 * x).collect();
        let f2 = assemble_joule_load(&d, &model, &theta, &phi2);
        assert!(f.iter().zip(&f2).all(|(a, b)| (4.0 * a - b).abs() < 1e-14));
    }

    #[test]
    fn qlaplacian_cases() {
        let d = boxed([3, 2, 2], [1.0, 0.5, 0.5]);
        let lap = assemble_laplace(&d);
        let theta: Vec<f64> = d
            .mesh
            .vertices()
            .iter()
            .map(|p| (p[0] * 3.0).sin() + p[1] * p[2])
            .collect();
        let q2 = assemble_qlaplacian(&d, &theta, 2.0);
        let k = lap.matvec(&theta);
        assert!(q2.iter().zip(&k).all(|(a, b)| (a - b).abs() < 1e-13));

        let unit: Vec<f64> = d.mesh.vertices().iter().map(|p| 0.6 * p[0] + 0.8 * p[2]).collect();
        let a = assemble_qlaplacian(&d, &unit, 2.0);
        let b = assemble_qlaplacian(&d, &unit, 3.7);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-13));

        let two: Vec<f64> = unit.iter().map(|x| 2.0 * x).collect();
        let a = assemble_qlaplacian(&d, &two, 2.0);
        let b = assemble_qlaplacian(&d, &two, 4.0);
        assert!(a.iter().zip(&b).all(|(x, y)| (4.0 * x - y).abs() < 1e-12));
        assert!((gradient_norm_power(&d, &two, 4.0) - 16.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn linearization_blocks_vanish() {
        let d = boxed([3, 2, 2], [1.0, 0.5, 0.5]);
        let n = d.n_vertices();
        let m = crate::materials::MaterialModel::default();
        let s = crate::materials::make_scaling(&m, &crate::materials::ScalingConfig::identity(), 290.0).unwrap();
        let model = ScaledModel::new(&m, s, 290.0);
        let theta: Vec<f64> = (0..n).map(|i| 300.0 + i as f64).collect();
        let blocks = assemble_linearization_blocks(&d, &model, &theta, &vec![0.0; n]);
        assert_eq!(blocks.c_joule_theta.max_abs(), 0.0);
        assert_eq!(blocks.c_joule_phi.max_abs(), 0.0);
        assert_eq!(blocks.a_sigma_p.max_abs(), 0.0);
        // above the blend zone η' ≡ 0
        let hot = vec![20000.0; n];
        let phi: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let blocks = assemble_linearization_blocks(&d, &model, &hot, &phi);
        assert_eq!(blocks.k_eta_p.max_abs(), 0.0);
    }
}
