//! Legacy ASCII VTK output: the surface sampled on a per-element lattice.

use crate::solver::Model;
use std::io::Write;

/// Write the current configuration with point data (phase value when present)
/// as an unstructured grid of quads, sampled on an `nsub x nsub` lattice per
/// element.
pub fn write_vtk(
    model: &Model,
    u: &[f64],
    nsub: usize,
    path: &std::path::Path,
) -> std::io::Result<()> {
    let mp = &model.surface;
    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut phi_vals: Vec<f64> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();

    for elem in &mp.elements {
        let patch = &mp.patches[elem.patch];
        let base = points.len();
        for j in 0..=nsub {
            for i in 0..=nsub {
                let xi = [
                    elem.rect.0[0] + (elem.rect.0[1] - elem.rect.0[0]) * i as f64 / nsub as f64,
                    elem.rect.1[0] + (elem.rect.1[1] - elem.rect.1[0]) * j as f64 / nsub as f64,
                ];
                let shape = patch.shape_table(xi).expect("sample inside element");
                let mut x = [0.0f64; 3];
                let mut phi = 0.0f64;
                for (l, &cpl) in shape.cps.iter().enumerate() {
                    let cp = mp.cp_global[elem.patch][cpl];
                    for k in 0..3 {
                        let coord = if model.dofs.mech {
                            u[model.dofs.x_dof(cp, k)]
                        } else {
                            mp.positions[cp][k]
                        };
                        x[k] += shape.value[l] * coord;
                    }
                    if model.dofs.phase {
                        phi += shape.value[l] * u[model.dofs.phi_dof(cp)];
                    }
                }
                points.push(x);
                phi_vals.push(phi);
            }
        }
        for j in 0..nsub {
            for i in 0..nsub {
                let n0 = base + j * (nsub + 1) + i;
                quads.push([n0, n0 + 1, n0 + nsub + 2, n0 + nsub + 1]);
            }
        }
    }

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "lamella surface sample")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(f, "{:.12e} {:.12e} {:.12e}", p[0], p[1], p[2])?;
    }
    writeln!(f, "CELLS {} {}", quads.len(), 5 * quads.len())?;
    for q in &quads {
        writeln!(f, "4 {} {} {} {}", q[0], q[1], q[2], q[3])?;
    }
    writeln!(f, "CELL_TYPES {}", quads.len())?;
    for _ in &quads {
        writeln!(f, "9")?;
    }
    if model.dofs.phase {
        writeln!(f, "POINT_DATA {}", points.len())?;
        writeln!(f, "SCALARS phi double 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for v in &phi_vals {
            writeln!(f, "{v:.9e}")?;
        }
    }
    Ok(())
}
