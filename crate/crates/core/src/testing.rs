//! Shared fixtures for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::Discretization;
use crate::materials::{make_scaling, MaterialModel, ScaledModel, ScalingConfig};
use crate::mesh::{BoundaryFace, BoundaryTag, BoxSpec, Mesh};
use crate::objective::ControlField;
use crate::state::TimeGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn desk_model() -> ScaledModel {
    let m = MaterialModel::default();
    let s = make_scaling(&m, &ScalingConfig::default(), 290.0).unwrap();
    ScaledModel::new(&m, s, 290.0)
}

pub fn box_disc(n: [usize; 3]) -> Discretization {
    let mesh = Mesh::build_box(&BoxSpec {
        nx: n[0],
        ny: n[1],
        nz: n[2],
        dims: [1.0, 0.6, 0.6],
        contact_fraction: 0.2,
        design_depth: 0.4,
    })
    .unwrap();
    Discretization::new(mesh).unwrap()
}

/// Two tets sharing a face; ground on one outer face, contact on the opposite one.
pub fn two_tet() -> Discretization {
    let vertices = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
    ];
    let tets = vec![[0, 1, 2, 3], [1, 2, 3, 4]];
    let f = |vertices, tag| BoundaryFace { vertices, tag };
    let faces = vec![
        f([0, 3, 2], BoundaryTag::DirichletPotential),
        f([0, 1, 3], BoundaryTag::Insulated),
        f([0, 2, 1], BoundaryTag::Insulated),
        f([2, 3, 4], BoundaryTag::ControlContact),
        f([1, 4, 3], BoundaryTag::Insulated),
        f([1, 2, 4], BoundaryTag::Insulated),
    ];
    Discretization::new(Mesh::new(vertices, tets, faces, vec![1]).unwrap()).unwrap()
}

pub fn unit_grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, steps).unwrap()
}

/// Uniform random values in `[0, umax]`, end slices zero.
pub fn random_control(rng: &mut impl Rng, steps: usize, nc: usize, umax: f64) -> ControlField {
    let mut c = ControlField::zeros(steps, nc);
    for k in 1..steps {
        for v in c.slice_mut(k) {
            *v = umax * rng.random::<f64>();
        }
    }
    c
}

/// Zero-mean random direction with pinned end slices.
pub fn random_direction(rng: &mut impl Rng, steps: usize, nc: usize) -> ControlField {
    let mut c = ControlField::zeros(steps, nc);
    for k in 1..steps {
        for v in c.slice_mut(k) {
            *v = rng.random::<f64>() - 0.5;
        }
    }
    c
}
