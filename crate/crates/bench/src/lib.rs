//! Fixtures shared by the benchmarks.

use thinrod_core::beam3d::{AxialQuadrature, SolverOptions};
use thinrod_core::cross_section::unit_disc;
use thinrod_core::{BeamConfig, LoadFn, RodLoads, StoredEnergy};

/// Neo-Hookean beam on the unit-area disc, `α = 3`, uniform load along `e₂`.
pub fn beam_config(h: f64, rings: usize, axial_elems: usize) -> BeamConfig {
    BeamConfig {
        h,
        alpha: 3.0,
        length: 1.0,
        axial_elems,
        section: unit_disc(rings).unwrap().normalize().unwrap(),
        material: StoredEnergy::neo_hookean(1.0, 1.0).unwrap(),
        loads: RodLoads::new(LoadFn::Const(0.01), LoadFn::zero()),
        quadrature: AxialQuadrature::Midpoint,
        solver: SolverOptions::default(),
    }
}
