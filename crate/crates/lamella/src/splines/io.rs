//! Mesh exchange file: JSON with patches, interfaces and symmetry edges.
//!
//! ```json
//! {
//!   "patches": [
//!     { "p": 2, "q": 2,
//!       "knots_u": [0,0,0,1,1,1], "knots_v": [0,0,0,1,1,1],
//!       "ctrl": [[x,y,z,w], ...] }
//!   ],
//!   "interfaces": [
//!     { "a": {"patch": 0, "edge": 1}, "b": {"patch": 1, "edge": 3},
//!       "kind": "interface", "alpha0": 0.0 }
//!   ],
//!   "symmetry_edges": [
//!     { "patch": 0, "edge": 3, "mirror_normal": [1,0,0] }
//!   ]
//! }
//! ```
//!
//! Control points are row-major over the second parametric direction
//! (`index = j * n_u + i`). `alpha0` is optional and computed from the
//! reference geometry when absent; storing it disambiguates kinks beyond pi.

use super::{
    build_multipatch, ControlPoint, InterfaceDecl, KnotVector, MultiPatchSurface, NurbsPatch,
    SplineError, SymmetryDecl,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshFile {
    pub patches: Vec<PatchSpec>,
    #[serde(default)]
    pub interfaces: Vec<InterfaceSpec>,
    #[serde(default)]
    pub symmetry_edges: Vec<SymmetrySpec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PatchSpec {
    pub p: usize,
    pub q: usize,
    pub knots_u: Vec<f64>,
    pub knots_v: Vec<f64>,
    pub ctrl: Vec<[f64; 4]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EdgeRef {
    pub patch: usize,
    pub edge: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub a: EdgeRef,
    pub b: EdgeRef,
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
}

fn default_kind() -> String {
    "interface".into()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SymmetrySpec {
    pub patch: usize,
    pub edge: u8,
    pub mirror_normal: [f64; 3],
}

impl MeshFile {
    pub fn from_surface(mp: &MultiPatchSurface) -> Self {
        let patches = mp
            .patches
            .iter()
            .map(|p| PatchSpec {
                p: p.ku.degree(),
                q: p.kv.degree(),
                knots_u: p.ku.knots().to_vec(),
                knots_v: p.kv.knots().to_vec(),
                ctrl: p.cps.iter().map(|c| [c.x[0], c.x[1], c.x[2], c.w]).collect(),
            })
            .collect();
        let mut interfaces = Vec::new();
        let mut symmetry_edges = Vec::new();
        for iface in &mp.interfaces {
            match (iface.b, iface.mirror_normal) {
                (Some(b), _) => interfaces.push(InterfaceSpec {
                    a: EdgeRef { patch: iface.a.0, edge: iface.a.1 },
                    b: EdgeRef { patch: b.0, edge: b.1 },
                    kind: "interface".into(),
                    alpha0: Some(iface.alpha0),
                }),
                (None, Some(m)) => symmetry_edges.push(SymmetrySpec {
                    patch: iface.a.0,
                    edge: iface.a.1,
                    mirror_normal: m,
                }),
                _ => {}
            }
        }
        MeshFile { patches, interfaces, symmetry_edges }
    }

    pub fn into_surface(self) -> Result<MultiPatchSurface, SplineError> {
        let mut patches = Vec::with_capacity(self.patches.len());
        for spec in self.patches {
            let ku = KnotVector::new(spec.p, spec.knots_u)?;
            let kv = KnotVector::new(spec.q, spec.knots_v)?;
            let cps = spec
                .ctrl
                .iter()
                .map(|c| ControlPoint { x: [c[0], c[1], c[2]], w: c[3] })
                .collect();
            patches.push(NurbsPatch::new(ku, kv, cps)?);
        }
        let interfaces: Vec<InterfaceDecl> = self
            .interfaces
            .iter()
            .map(|s| InterfaceDecl {
                a: (s.a.patch, s.a.edge),
                b: (s.b.patch, s.b.edge),
                alpha0: s.alpha0,
            })
            .collect();
        let symmetries: Vec<SymmetryDecl> = self
            .symmetry_edges
            .iter()
            .map(|s| SymmetryDecl { edge: (s.patch, s.edge), mirror_normal: s.mirror_normal })
            .collect();
        build_multipatch(patches, &interfaces, &symmetries)
    }
}

/// Load a mesh exchange file.
pub fn read_mesh(path: &std::path::Path) -> Result<MultiPatchSurface, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: MeshFile =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    file.into_surface().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::greville_abscissae;

    #[test]
    fn roundtrip_through_json() {
        let ku = KnotVector::uniform(2, 2);
        let kv = KnotVector::uniform(2, 2);
        let g = greville_abscissae(&ku);
        let mut ctrl = Vec::new();
        for &v in &g {
            for &u in &g {
                ctrl.push([u, v, 0.0, 1.0]);
            }
        }
        let ctrl_b: Vec<[f64; 4]> = ctrl.iter().map(|c| [c[0] + 1.0, c[1], c[2], c[3]]).collect();
        let file = MeshFile {
            patches: vec![
                PatchSpec {
                    p: 2,
                    q: 2,
                    knots_u: ku.knots().to_vec(),
                    knots_v: kv.knots().to_vec(),
                    ctrl,
                },
                PatchSpec {
                    p: 2,
                    q: 2,
                    knots_u: ku.knots().to_vec(),
                    knots_v: kv.knots().to_vec(),
                    ctrl: ctrl_b,
                },
            ],
            interfaces: vec![InterfaceSpec {
                a: EdgeRef { patch: 0, edge: 1 },
                b: EdgeRef { patch: 1, edge: 3 },
                kind: "interface".into(),
                alpha0: None,
            }],
            symmetry_edges: vec![],
        };
        let json = serde_json::to_string(&file).unwrap();
        let parsed: MeshFile = serde_json::from_str(&json).unwrap();
        let mp = parsed.into_surface().unwrap();
        assert_eq!(mp.patches.len(), 2);
        assert_eq!(mp.interfaces[0].alpha0, 0.0);

        let back = MeshFile::from_surface(&mp);
        assert_eq!(back.patches.len(), 2);
        assert_eq!(back.interfaces.len(), 1);
    }
}
