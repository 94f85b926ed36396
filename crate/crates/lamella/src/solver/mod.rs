//! Global degree-of-freedom management, assembly, Newton-Raphson and time
//! integration for the coupled deformation / phase-field system.

pub mod assembly;
pub mod linear;
mod newton;
mod timestep;

pub use newton::{apply_dirichlet, newton_solve, quasistatic_continuation, NewtonParams, NewtonTrace};
pub use timestep::{GeneralizedAlpha, TimeParams};

use crate::constraints::{
    build_line_contexts, BuiltLine, ConstraintConfig, ConstraintError,
};
use crate::phasefield::{CahnHilliardSpec, FractureSpec, MixtureSpec};
use crate::real::V3;
use crate::shell::{RefPoint, ShellError, ShellMaterial};
use crate::splines::MultiPatchSurface;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("Newton did not converge after {iters} iterations (|r| = {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),
    #[error(transparent)]
    Linear(#[from] linear::LinearError),
    #[error(transparent)]
    Element(#[from] ShellError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("load step underflow at load factor {0}")]
    StepUnderflow(f64),
    #[error("time step underflow (dt = {0:.3e})")]
    TimeStepUnderflow(f64),
}

/// Mechanical physics switches.
#[derive(Debug, Clone)]
pub struct MechanicsConfig {
    pub material: ShellMaterial,
    /// follower pressure [E0/L0], scaled by the load factor
    pub pressure: f64,
    /// inertia on/off
    pub dynamic: bool,
}

/// Scalar phase-field physics.
#[derive(Debug, Clone)]
pub enum PhaseConfig {
    CahnHilliard {
        spec: CahnHilliardSpec,
        rho: f64,
        mixture: Option<MixtureSpec>,
    },
    Fracture(FractureSpec),
}

/// Point load on a control point (components scaled by the load factor).
#[derive(Debug, Clone, Copy)]
pub struct PointLoad {
    pub cp: usize,
    pub force: [f64; 3],
}

/// Distributed follower edge moment m_tau on a patch boundary edge,
/// scaled by the load factor.
#[derive(Debug, Clone, Copy)]
pub struct EdgeMoment {
    pub patch: usize,
    pub edge: u8,
    pub m_tau: f64,
}

/// Constraint enforcement setup for the interfaces of the surface.
#[derive(Debug, Clone)]
pub struct ConstraintSetup {
    pub config: ConstraintConfig,
    pub enforce_g1: bool,
    pub enforce_c1: bool,
}

/// Dirichlet condition: fixed dof or prescribed displacement (scaled by the
/// load factor for quasi-statics, by ramp time for dynamics).
#[derive(Debug, Clone, Copy)]
pub struct Bc {
    pub cp: usize,
    /// 0,1,2 for x components; 3 for the phase dof
    pub component: u8,
    /// prescribed increment relative to the reference value
    pub value: f64,
}

/// Full model: topology, physics, constraints, loads, boundary conditions.
pub struct Model {
    pub surface: MultiPatchSurface,
    pub mechanics: Option<MechanicsConfig>,
    pub phase: Option<PhaseConfig>,
    pub constraints: Option<ConstraintSetup>,
    pub point_loads: Vec<PointLoad>,
    pub edge_moments: Vec<EdgeMoment>,
    pub bcs: Vec<Bc>,
    /// reference quadrature data per surface element
    pub ref_points: Vec<Vec<RefPoint>>,
    /// interface line elements (empty without constraints)
    pub lines: Vec<BuiltLine>,
    /// boundary line contexts of the edge moments
    pub moment_lines: Vec<assembly::MomentLineCtx>,
    pub dofs: DofMap,
}

impl Model {
    pub fn new(
        surface: MultiPatchSurface,
        mechanics: Option<MechanicsConfig>,
        phase: Option<PhaseConfig>,
        constraints: Option<ConstraintSetup>,
    ) -> Result<Self, SolveError> {
        let mut ref_points = Vec::with_capacity(surface.elements.len());
        for elem in &surface.elements {
            let patch = &surface.patches[elem.patch];
            let positions: Vec<[f64; 3]> = patch.cps.iter().map(|c| c.x).collect();
            ref_points.push(RefPoint::element_rule(patch, elem.rect, &positions)?);
        }
        let lines = match &constraints {
            Some(setup) => {
                setup.config.validate()?;
                build_line_contexts(&surface, setup.config.rule)?
            }
            None => Vec::new(),
        };
        let mut dofs = DofMap::build(
            &surface,
            mechanics.is_some(),
            phase.is_some(),
            constraints.as_ref(),
            &lines,
        );
        dofs.apply_bcs(&[]);
        Ok(Model {
            surface,
            mechanics,
            phase,
            constraints,
            point_loads: Vec::new(),
            edge_moments: Vec::new(),
            bcs: Vec::new(),
            ref_points,
            lines,
            moment_lines: Vec::new(),
            dofs,
        })
    }

    /// Rebuild Dirichlet bookkeeping after editing `bcs`, and boundary line
    /// contexts after editing `edge_moments`.
    pub fn finalize(&mut self) -> Result<(), SolveError> {
        self.dofs.apply_bcs(&self.bcs);
        self.moment_lines = assembly::build_moment_lines(&self.surface, &self.edge_moments)?;
        Ok(())
    }

    /// Initial full dof vector: reference positions, phase = `phi0`,
    /// multipliers zero.
    pub fn initial_state(&self, phi0: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.dofs.n_total];
        if self.dofs.mech {
            for (i, p) in self.surface.positions.iter().enumerate() {
                for k in 0..3 {
                    u[self.dofs.x_dof(i, k)] = p[k];
                }
            }
        }
        if self.dofs.phase {
            for i in 0..self.surface.n_global_cps {
                u[self.dofs.phi_dof(i)] = phi0;
            }
        }
        u
    }

    /// Fresh (zero) history field storage, one value per quadrature point.
    pub fn initial_history(&self) -> Vec<Vec<f64>> {
        self.ref_points.iter().map(|qps| vec![0.0; qps.len()]).collect()
    }

    pub fn n_elements(&self) -> usize {
        self.surface.elements.len()
    }
}

/// Dof layout: x dofs (3 per control point) first, then phase dofs, then
/// G1 multipliers (q), then C1 multipliers (lambda).
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_cps: usize,
    pub mech: bool,
    pub phase: bool,
    pub phi_offset: usize,
    pub q_offset: usize,
    pub lam_offset: usize,
    pub n_total: usize,
    /// per line element: multiplier dof ids
    pub q_dofs: Vec<Vec<usize>>,
    pub lam_dofs: Vec<Vec<usize>>,
    /// prescribed increments (None = free)
    pub prescribed: Vec<Option<f64>>,
    /// full dof -> free index (usize::MAX when constrained)
    pub free_index: Vec<usize>,
    pub free_dofs: Vec<usize>,
}

impl DofMap {
    fn build(
        mp: &MultiPatchSurface,
        mech: bool,
        phase: bool,
        constraints: Option<&ConstraintSetup>,
        lines: &[BuiltLine],
    ) -> DofMap {
        let n_cps = mp.n_global_cps;
        let nx = if mech { 3 * n_cps } else { 0 };
        let nphi = if phase { n_cps } else { 0 };
        let phi_offset = nx;
        let q_offset = nx + nphi;

        let mut q_dofs = vec![Vec::new(); lines.len()];
        let mut lam_dofs = vec![Vec::new(); lines.len()];
        let mut next = q_offset;
        if let Some(setup) = constraints {
            let per = setup.config.multipliers_per_element();
            if setup.enforce_g1 && mech && per > 0 {
                next = allocate_multipliers(lines, per, next, &mut q_dofs);
            }
        }
        let lam_offset = next;
        if let Some(setup) = constraints {
            let per = setup.config.multipliers_per_element();
            if setup.enforce_c1 && phase && per > 0 {
                // symmetry edges carry no phase constraint
                next = allocate_multipliers_filtered(
                    lines,
                    per,
                    next,
                    &mut lam_dofs,
                    |l| l.surf_b.is_some(),
                );
            }
        }
        let n_total = next;
        DofMap {
            n_cps,
            mech,
            phase,
            phi_offset,
            q_offset,
            lam_offset,
            n_total,
            q_dofs,
            lam_dofs,
            prescribed: vec![None; n_total],
            free_index: Vec::new(),
            free_dofs: Vec::new(),
        }
    }

    fn apply_bcs(&mut self, bcs: &[Bc]) {
        self.prescribed = vec![None; self.n_total];
        for bc in bcs {
            let dof = if bc.component < 3 {
                assert!(self.mech, "x boundary condition without mechanics");
                self.x_dof(bc.cp, bc.component as usize)
            } else {
                assert!(self.phase, "phase boundary condition without phase field");
                self.phi_dof(bc.cp)
            };
            self.prescribed[dof] = Some(bc.value);
        }
        self.free_index = vec![usize::MAX; self.n_total];
        self.free_dofs.clear();
        for dof in 0..self.n_total {
            if self.prescribed[dof].is_none() {
                self.free_index[dof] = self.free_dofs.len();
                self.free_dofs.push(dof);
            }
        }
    }

    #[inline]
    pub fn x_dof(&self, cp: usize, k: usize) -> usize {
        3 * cp + k
    }

    #[inline]
    pub fn phi_dof(&self, cp: usize) -> usize {
        self.phi_offset + cp
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Human-readable dof description for singularity reports.
    pub fn describe(&self, dof: usize) -> String {
        if self.mech && dof < self.phi_offset {
            format!("x[{}].{}", dof / 3, ["x", "y", "z"][dof % 3])
        } else if self.phase && dof >= self.phi_offset && dof < self.q_offset {
            format!("phi[{}]", dof - self.phi_offset)
        } else if dof < self.lam_offset {
            format!("G1 multiplier q[{}]", dof - self.q_offset)
        } else {
            format!("C1 multiplier lambda[{}]", dof - self.lam_offset)
        }
    }
}

/// Allocate per-line multiplier dofs. Linear multipliers are continuous along
/// each interface but repeated across interfaces, so junction control points
/// of valence >= 3 carry one multiplier per meeting interface.
fn allocate_multipliers(
    lines: &[BuiltLine],
    per_element: usize,
    next: usize,
    out: &mut [Vec<usize>],
) -> usize {
    allocate_multipliers_filtered(lines, per_element, next, out, |_| true)
}

fn allocate_multipliers_filtered(
    lines: &[BuiltLine],
    per_element: usize,
    mut next: usize,
    out: &mut [Vec<usize>],
    keep: impl Fn(&BuiltLine) -> bool,
) -> usize {
    if per_element == 1 {
        for (i, line) in lines.iter().enumerate() {
            if keep(line) {
                out[i] = vec![next];
                next += 1;
            }
        }
        return next;
    }
    // linear: chain nodes along each interface (lines are ordered per
    // interface, so endpoint multipliers are shared within an interface and
    // repeated across interfaces meeting at a junction)
    let mut idx = 0;
    while idx < lines.len() {
        let iface = lines[idx].iface;
        let start = idx;
        while idx < lines.len() && lines[idx].iface == iface {
            idx += 1;
        }
        if !keep(&lines[start]) {
            continue;
        }
        let n_lel = idx - start;
        let nodes: Vec<usize> = (0..=n_lel).map(|k| next + k).collect();
        next += n_lel + 1;
        for (k, line) in (start..idx).enumerate() {
            out[line] = vec![nodes[k], nodes[k + 1]];
        }
    }
    next
}

/// Simultaneous view of the generalized-alpha stage: intermediate kinematic
/// fields are affine in the primary unknown u_{n+1}.
#[derive(Debug, Clone)]
pub struct StageMap {
    /// factor on u for the intermediate position / phase
    pub cx: f64,
    pub cphi: f64,
    /// factors on u for velocity / acceleration / phase rate
    pub cv: f64,
    pub ca: f64,
    pub cphidot: f64,
    pub x_rest: Vec<V3<f64>>,
    pub v_rest: Vec<V3<f64>>,
    pub a_rest: Vec<V3<f64>>,
    pub phi_rest: Vec<f64>,
    pub phidot_rest: Vec<f64>,
    /// inertia and rate terms active
    pub dynamic: bool,
}

impl StageMap {
    /// Quasi-static map: fields equal the primary unknown, no rates.
    pub fn quasistatic(n_cps: usize) -> StageMap {
        StageMap {
            cx: 1.0,
            cphi: 1.0,
            cv: 0.0,
            ca: 0.0,
            cphidot: 0.0,
            x_rest: vec![V3::zero(); n_cps],
            v_rest: vec![V3::zero(); n_cps],
            a_rest: vec![V3::zero(); n_cps],
            phi_rest: vec![0.0; n_cps],
            phidot_rest: vec![0.0; n_cps],
            dynamic: false,
        }
    }
}
