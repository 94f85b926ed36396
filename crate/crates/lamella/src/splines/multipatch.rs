//! Conforming multi-patch surfaces: deduplicated global control point
//! numbering, surface element lists and interface line elements.

use super::nurbs::NurbsPatch;
use super::SplineError;
use serde::{Deserialize, Serialize};

/// (patch index, edge id); edges are 0: v=lo, 1: u=hi, 2: v=hi, 3: u=lo.
pub type EdgeId = (usize, u8);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InterfaceKind {
    /// Two patches glued along a conforming edge with reference kink angle alpha0.
    Interface,
    /// One-sided symmetry condition against a fixed mirror plane.
    Symmetry,
}

/// Declared patch interface prior to topology construction.
#[derive(Debug, Clone)]
pub struct InterfaceDecl {
    pub a: EdgeId,
    pub b: EdgeId,
    /// Signed reference kink angle; computed from the reference geometry when
    /// absent. A stored value disambiguates kinks beyond pi.
    pub alpha0: Option<f64>,
}

/// Declared symmetry edge with the unit normal of the mirror plane.
#[derive(Debug, Clone)]
pub struct SymmetryDecl {
    pub edge: EdgeId,
    pub mirror_normal: [f64; 3],
}

/// One finite element of the surface: a nonzero knot span of one patch.
#[derive(Debug, Clone)]
pub struct SurfaceElement {
    pub patch: usize,
    pub span: (usize, usize),
    /// parametric rectangle [u_lo, u_hi] x [v_lo, v_hi]
    pub rect: ([f64; 2], [f64; 2]),
    /// patch-local control point indices in shape-table order
    pub cps_local: Vec<usize>,
    pub cps_global: Vec<usize>,
}

/// One line element along a patch interface, conforming to a surface element
/// on each side.
#[derive(Debug, Clone)]
pub struct LineElement {
    pub surf_a: usize,
    pub surf_b: Option<usize>,
    /// edge-parameter range on side A
    pub t_a: (f64, f64),
    /// edge-parameter range on side B, orientation-corrected (may decrease)
    pub t_b: Option<(f64, f64)>,
}

/// A conforming interface (or symmetry edge) with its line elements.
#[derive(Debug, Clone)]
pub struct InterfaceEdge {
    pub a: EdgeId,
    pub b: Option<EdgeId>,
    pub kind: InterfaceKind,
    /// true if side B traverses the interface in the opposite direction
    pub reversed: bool,
    /// reference kink angle [rad]
    pub alpha0: f64,
    pub mirror_normal: Option<[f64; 3]>,
    /// patch-local control point indices of the shared edge row on side A
    pub edge_local_a: Vec<usize>,
    pub edge_cps_global: Vec<usize>,
    pub line_elements: Vec<LineElement>,
}

/// A set of NURBS patches with conforming interfaces and a deduplicated
/// global control point numbering.
#[derive(Debug, Clone)]
pub struct MultiPatchSurface {
    pub patches: Vec<NurbsPatch>,
    pub elements: Vec<SurfaceElement>,
    /// per patch: local control point index -> global index
    pub cp_global: Vec<Vec<usize>>,
    pub n_global_cps: usize,
    /// reference positions of the global control points
    pub positions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub interfaces: Vec<InterfaceEdge>,
    /// per patch: element index grid, u-major within v rows
    elem_grid: Vec<Vec<usize>>,
    elem_grid_dims: Vec<(usize, usize)>,
}

impl MultiPatchSurface {
    /// Element index of `patch` at span-grid position (iu, iv).
    pub fn element_at(&self, patch: usize, iu: usize, iv: usize) -> usize {
        let (nu, _) = self.elem_grid_dims[patch];
        self.elem_grid[patch][iv * nu + iu]
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Bounding-box diagonal of the reference control net.
    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }
}

fn bbox_diagonal(points: &[[f64; 3]]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[rb.max(ra)] = rb.min(ra);
        }
    }
}

/// Build the conforming multi-patch topology.
///
/// Shared control points of declared interfaces must coincide (position and
/// weight) to within `1e-12 * L0`, with `L0` the bounding-box diagonal of the
/// input control nets.
pub fn build_multipatch(
    patches: Vec<NurbsPatch>,
    interfaces: &[InterfaceDecl],
    symmetries: &[SymmetryDecl],
) -> Result<MultiPatchSurface, SplineError> {
    let all_points: Vec<[f64; 3]> =
        patches.iter().flat_map(|p| p.cps.iter().map(|c| c.x)).collect();
    let tol = 1e-12 * bbox_diagonal(&all_points).max(1.0);

    // flat indexing of (patch, local cp)
    let offsets: Vec<usize> = patches
        .iter()
        .scan(0usize, |acc, p| {
            let o = *acc;
            *acc += p.cps.len();
            Some(o)
        })
        .collect();
    let total: usize = patches.iter().map(|p| p.cps.len()).sum();
    let mut uf = UnionFind::new(total);

    // orientation detection + conformity checks + unions
    let mut reversed_flags = Vec::with_capacity(interfaces.len());
    for decl in interfaces {
        let (pa, ea) = decl.a;
        let (pb, eb) = decl.b;
        let cps_a = patches[pa].edge_cp_indices(ea);
        let cps_b = patches[pb].edge_cp_indices(eb);
        if cps_a.len() != cps_b.len() {
            return Err(SplineError::Topology(format!(
                "interface ({pa},{ea})-({pb},{eb}): control point counts {} vs {}",
                cps_a.len(),
                cps_b.len()
            )));
        }
        let pos =
            |p: usize, idx: &[usize], k: usize| -> [f64; 3] { patches[p].cps[idx[k]].x };
        let d = |x: [f64; 3], y: [f64; 3]| -> f64 {
            (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt()
        };
        let n = cps_a.len();
        let same = d(pos(pa, &cps_a, 0), pos(pb, &cps_b, 0))
            + d(pos(pa, &cps_a, n - 1), pos(pb, &cps_b, n - 1));
        let flip = d(pos(pa, &cps_a, 0), pos(pb, &cps_b, n - 1))
            + d(pos(pa, &cps_a, n - 1), pos(pb, &cps_b, 0));
        let reversed = flip < same;
        reversed_flags.push(reversed);
        for k in 0..n {
            let kb = if reversed { n - 1 - k } else { k };
            let xa = pos(pa, &cps_a, k);
            let xb = pos(pb, &cps_b, kb);
            if d(xa, xb) > tol {
                return Err(SplineError::Topology(format!(
                    "interface ({pa},{ea})-({pb},{eb}): point {k} mismatch by {:.3e}",
                    d(xa, xb)
                )));
            }
            let wa = patches[pa].cps[cps_a[k]].w;
            let wb = patches[pb].cps[cps_b[kb]].w;
            if (wa - wb).abs() > tol {
                return Err(SplineError::Topology(format!(
                    "interface ({pa},{ea})-({pb},{eb}): weight {k} mismatch"
                )));
            }
            uf.union(offsets[pa] + cps_a[k], offsets[pb] + cps_b[kb]);
        }
        // knot breakpoints along the edge must agree after normalization
        let bp_a = normalized_breakpoints(&patches[pa], ea);
        let mut bp_b = normalized_breakpoints(&patches[pb], eb);
        if reversed {
            bp_b = bp_b.iter().rev().map(|t| 1.0 - t).collect();
        }
        if bp_a.len() != bp_b.len()
            || bp_a.iter().zip(&bp_b).any(|(x, y)| (x - y).abs() > 1e-12)
        {
            return Err(SplineError::Topology(format!(
                "interface ({pa},{ea})-({pb},{eb}): knot lines do not match"
            )));
        }
    }

    // global numbering from union-find roots
    let mut root_to_global = vec![usize::MAX; total];
    let mut n_global = 0usize;
    let mut positions = Vec::new();
    let mut gweights = Vec::new();
    let mut cp_global: Vec<Vec<usize>> = Vec::with_capacity(patches.len());
    for (p, patch) in patches.iter().enumerate() {
        let mut map = Vec::with_capacity(patch.cps.len());
        for (l, cp) in patch.cps.iter().enumerate() {
            let root = uf.find(offsets[p] + l);
            if root_to_global[root] == usize::MAX {
                root_to_global[root] = n_global;
                positions.push(cp.x);
                gweights.push(cp.w);
                n_global += 1;
            }
            map.push(root_to_global[root]);
        }
        cp_global.push(map);
    }

    // surface elements
    let mut elements = Vec::new();
    let mut elem_grid = Vec::new();
    let mut elem_grid_dims = Vec::new();
    for (pi, patch) in patches.iter().enumerate() {
        let (p, q) = patch.degrees();
        let spans_u = patch.ku.nonzero_spans();
        let spans_v = patch.kv.nonzero_spans();
        let mut grid = Vec::with_capacity(spans_u.len() * spans_v.len());
        for &sv in &spans_v {
            for &su in &spans_u {
                let ku = patch.ku.knots();
                let kvn = patch.kv.knots();
                let mut cps_local = Vec::with_capacity((p + 1) * (q + 1));
                for b in 0..=q {
                    for a in 0..=p {
                        cps_local.push(patch.cp_index(su - p + a, sv - q + b));
                    }
                }
                let cps_globals = cps_local.iter().map(|&l| cp_global[pi][l]).collect();
                grid.push(elements.len());
                elements.push(SurfaceElement {
                    patch: pi,
                    span: (su, sv),
                    rect: ([ku[su], ku[su + 1]], [kvn[sv], kvn[sv + 1]]),
                    cps_local,
                    cps_global: cps_globals,
                });
            }
        }
        elem_grid.push(grid);
        elem_grid_dims.push((spans_u.len(), spans_v.len()));
    }

    let surf = |_patch: usize, edge: u8, k: usize, n_spans: (usize, usize), grid: &Vec<usize>| {
        let (nu, nv) = n_spans;
        match edge {
            0 => grid[k],
            1 => grid[k * nu + (nu - 1)],
            2 => grid[(nv - 1) * nu + k],
            3 => grid[k * nu],
            _ => unreachable!(),
        }
    };

    // interfaces with line elements
    let mut iface_edges = Vec::new();
    for (decl, &reversed) in interfaces.iter().zip(&reversed_flags) {
        let (pa, ea) = decl.a;
        let (pb, eb) = decl.b;
        let bp_a = patches[pa].edge_knots(ea).breakpoints();
        let bp_b = patches[pb].edge_knots(eb).breakpoints();
        let n_lel = bp_a.len() - 1;
        let edge_local_a = patches[pa].edge_cp_indices(ea);
        let edge_cps_global: Vec<usize> =
            edge_local_a.iter().map(|&l| cp_global[pa][l]).collect();

        let mut line_elements = Vec::with_capacity(n_lel);
        for k in 0..n_lel {
            let t_a = (bp_a[k], bp_a[k + 1]);
            let (kb, t_b) = if reversed {
                let kb = n_lel - 1 - k;
                (kb, (bp_b[kb + 1], bp_b[kb]))
            } else {
                (k, (bp_b[k], bp_b[k + 1]))
            };
            line_elements.push(LineElement {
                surf_a: surf(pa, ea, k, elem_grid_dims[pa], &elem_grid[pa]),
                surf_b: Some(surf(pb, eb, kb, elem_grid_dims[pb], &elem_grid[pb])),
                t_a,
                t_b: Some(t_b),
            });
        }

        iface_edges.push(InterfaceEdge {
            a: decl.a,
            b: Some(decl.b),
            kind: InterfaceKind::Interface,
            reversed,
            alpha0: decl.alpha0.unwrap_or(f64::NAN), // resolved below from geometry
            mirror_normal: None,
            edge_local_a,
            edge_cps_global,
            line_elements,
        });
    }

    for decl in symmetries {
        let (pa, ea) = decl.edge;
        let bp_a = patches[pa].edge_knots(ea).breakpoints();
        let n_lel = bp_a.len() - 1;
        let edge_local_a = patches[pa].edge_cp_indices(ea);
        let edge_cps_global: Vec<usize> =
            edge_local_a.iter().map(|&l| cp_global[pa][l]).collect();
        let nmag = decl.mirror_normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mirror = [
            decl.mirror_normal[0] / nmag,
            decl.mirror_normal[1] / nmag,
            decl.mirror_normal[2] / nmag,
        ];
        let line_elements = (0..n_lel)
            .map(|k| LineElement {
                surf_a: surf(pa, ea, k, elem_grid_dims[pa], &elem_grid[pa]),
                surf_b: None,
                t_a: (bp_a[k], bp_a[k + 1]),
                t_b: None,
            })
            .collect();
        iface_edges.push(InterfaceEdge {
            a: decl.edge,
            b: None,
            kind: InterfaceKind::Symmetry,
            reversed: false,
            alpha0: f64::NAN,
            mirror_normal: Some(mirror),
            edge_local_a,
            edge_cps_global,
            line_elements,
        });
    }

    // resolve reference kink angles from geometry where not declared
    for iface in iface_edges.iter_mut() {
        if iface.alpha0.is_nan() {
            iface.alpha0 = reference_kink_angle(&patches, iface);
        }
    }

    Ok(MultiPatchSurface {
        patches,
        elements,
        cp_global,
        n_global_cps: n_global,
        positions,
        weights: gweights,
        interfaces: iface_edges,
        elem_grid,
        elem_grid_dims,
    })
}

fn patch_normal(patch: &NurbsPatch, xi: [f64; 2]) -> [f64; 3] {
    let t = patch.shape_table(xi).expect("normal inside domain");
    let mut a1 = [0.0f64; 3];
    let mut a2 = [0.0f64; 3];
    for (i, &cp) in t.cps.iter().enumerate() {
        for k in 0..3 {
            a1[k] += t.d1[i][0] * patch.cps[cp].x[k];
            a2[k] += t.d1[i][1] * patch.cps[cp].x[k];
        }
    }
    let n = [
        a1[1] * a2[2] - a1[2] * a2[1],
        a1[2] * a2[0] - a1[0] * a2[2],
        a1[0] * a2[1] - a1[1] * a2[0],
    ];
    let mag = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    [n[0] / mag, n[1] / mag, n[2] / mag]
}

/// Signed kink angle between the reference normals at the interface midpoint:
/// cos a0 = N . N~, sin a0 = (N x N~) . tau0.
fn reference_kink_angle(patches: &[NurbsPatch], iface: &InterfaceEdge) -> f64 {
    let (pa, ea) = iface.a;
    let lel = &iface.line_elements[iface.line_elements.len() / 2];
    let ta = 0.5 * (lel.t_a.0 + lel.t_a.1);
    let na = patch_normal(&patches[pa], patches[pa].edge_to_xi(ea, ta));
    let nb = match (iface.b, iface.mirror_normal) {
        (Some((pb, eb)), _) => {
            let tb_range = lel.t_b.unwrap();
            let tb = 0.5 * (tb_range.0 + tb_range.1);
            patch_normal(&patches[pb], patches[pb].edge_to_xi(eb, tb))
        }
        (None, Some(m)) => m,
        _ => unreachable!(),
    };
    // reference edge tangent from the edge curve
    let edge_pos: Vec<[f64; 3]> =
        iface.edge_local_a.iter().map(|&l| patches[pa].cps[l].x).collect();
    let cs = patches[pa].edge_curve_sample(ea, ta, &edge_pos).expect("edge sample");
    let tau_mag = cs.dx.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tau: Vec<f64> = cs.dx.iter().map(|x| x / tau_mag).collect();
    let cos_a = na.iter().zip(&nb).map(|(x, y)| x * y).sum::<f64>();
    let cross = [
        na[1] * nb[2] - na[2] * nb[1],
        na[2] * nb[0] - na[0] * nb[2],
        na[0] * nb[1] - na[1] * nb[0],
    ];
    let sin_a = cross.iter().zip(&tau).map(|(x, y)| x * y).sum::<f64>();
    let alpha = sin_a.atan2(cos_a);
    // snap numerically planar interfaces to exactly zero
    if alpha.abs() < 1e-12 {
        0.0
    } else {
        alpha
    }
}

fn normalized_breakpoints(patch: &NurbsPatch, edge: u8) -> Vec<f64> {
    let kv = patch.edge_knots(edge);
    let (lo, hi) = kv.domain();
    kv.breakpoints().iter().map(|t| (t - lo) / (hi - lo)).collect()
}
