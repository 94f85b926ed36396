//! Benchmark geometries: exact rational primitives (arcs, spheres of
//! revolution, tori) and Greville-interpolated patches for general surfaces.

use crate::solver::linear::{BandLu, Triplets};
use crate::splines::{
    build_multipatch, split_at_c0_lines, ControlPoint, Direction, InterfaceDecl, KnotVector,
    MultiPatchSurface, NurbsPatch, SymmetryDecl,
};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Flat rectangle [x0, x0+lx] x [y0, y0+ly] at z = 0, bi-degree (p, q),
/// exact plane via the Greville net.
pub fn flat_rectangle(
    x0: f64,
    y0: f64,
    lx: f64,
    ly: f64,
    p: usize,
    n_x: usize,
    n_y: usize,
) -> NurbsPatch {
    let ku = KnotVector::uniform(p, n_x);
    let kv = KnotVector::uniform(p, n_y);
    let gu = crate::splines::greville_abscissae(&ku);
    let gv = crate::splines::greville_abscissae(&kv);
    let mut cps = Vec::new();
    for &v in &gv {
        for &u in &gu {
            cps.push(ControlPoint { x: [x0 + u * lx, y0 + v * ly, 0.0], w: 1.0 });
        }
    }
    NurbsPatch::new(ku, kv, cps).unwrap()
}

/// Flat strip [0, length] x [0, width] split into `n_patches` equal patches
/// along x, with planar interfaces.
pub fn strip(
    length: f64,
    width: f64,
    n_patches: usize,
    n_x_per_patch: usize,
    n_y: usize,
) -> MultiPatchSurface {
    let dx = length / n_patches as f64;
    let patches: Vec<NurbsPatch> = (0..n_patches)
        .map(|k| flat_rectangle(k as f64 * dx, 0.0, dx, width, 2, n_x_per_patch, n_y))
        .collect();
    let decls: Vec<InterfaceDecl> = (0..n_patches.saturating_sub(1))
        .map(|k| InterfaceDecl { a: (k, 1), b: (k + 1, 3), alpha0: None })
        .collect();
    build_multipatch(patches, &decls, &[]).expect("conforming strip")
}

/// Quarter-cylinder surface of radius `r` and height `h` (exact rational
/// quadratic arc, quadratic in the axial direction), refined `levels` times.
pub fn quarter_cylinder(r: f64, h: f64, levels: usize) -> NurbsPatch {
    let ku = KnotVector::uniform(2, 1);
    let kv = KnotVector::uniform(2, 1);
    let arc = [([r, 0.0], 1.0), ([r, r], SQRT_HALF), ([0.0, r], 1.0)];
    let mut cps = Vec::new();
    for j in 0..3 {
        let z = h * j as f64 / 2.0;
        for (xy, w) in arc {
            cps.push(ControlPoint { x: [xy[0], xy[1], z], w });
        }
    }
    NurbsPatch::new(ku, kv, cps).unwrap().refine_uniform(levels)
}

/// Exact sphere octant of radius `r` as a surface of revolution; the pole row
/// is degenerate. Refinement by knot insertion keeps the sphere exact.
pub fn sphere_octant(r: f64, levels: usize) -> NurbsPatch {
    let ku = KnotVector::uniform(2, 1);
    let kv = KnotVector::uniform(2, 1);
    // meridian quarter arc (x, z): equator -> pole; azimuth quarter circle
    let meridian = [([r, 0.0], 1.0), ([r, r], SQRT_HALF), ([0.0, r], 1.0)];
    let azimuth = [([1.0, 0.0], 1.0), ([1.0, 1.0], SQRT_HALF), ([0.0, 1.0], 1.0)];
    let mut cps = Vec::new();
    for (m, wm) in meridian {
        for (c, wc) in azimuth {
            cps.push(ControlPoint { x: [m[0] * c[0], m[0] * c[1], m[1]], w: wm * wc });
        }
    }
    NurbsPatch::new(ku, kv, cps).unwrap().refine_uniform(levels)
}

/// Exact torus with major/minor radii, built from 4 x 4 quarter-arc patches
/// (`n_major` x `n_minor` = 4 x 4), each refined `levels` times. All 32
/// interfaces are smooth (alpha0 = 0).
pub fn torus(r_major: f64, r_minor: f64, levels: usize) -> MultiPatchSurface {
    let quarter = |k: usize| -> [([f64; 2], f64); 3] {
        // quarter circle from angle k*90 to (k+1)*90 in (c, s) coordinates
        let a0 = k as f64 * std::f64::consts::FRAC_PI_2;
        let c0 = a0.cos().round();
        let s0 = a0.sin().round();
        let c1 = (a0 + std::f64::consts::FRAC_PI_2).cos().round();
        let s1 = (a0 + std::f64::consts::FRAC_PI_2).sin().round();
        [
            ([c0, s0], 1.0),
            ([c0 + c1, s0 + s1], SQRT_HALF),
            ([c1, s1], 1.0),
        ]
    };
    let mut patches = Vec::new();
    for km in 0..4usize {
        // minor circle in the (rho, z) plane: rho = R + r c, z = r s
        let minor = quarter(km);
        for ka in 0..4usize {
            let azim = quarter(ka);
            let mut cps = Vec::new();
            for (m, wm) in minor {
                let rho = r_major + r_minor * m[0];
                let z = r_minor * m[1];
                for (c, wc) in azim {
                    cps.push(ControlPoint { x: [rho * c[0], rho * c[1], z], w: wm * wc });
                }
            }
            patches.push(
                NurbsPatch::new(KnotVector::uniform(2, 1), KnotVector::uniform(2, 1), cps)
                    .unwrap()
                    .refine_uniform(levels),
            );
        }
    }
    // patch (km, ka) at index 4*km + ka; u = azimuthal, v = minor direction
    let idx = |km: usize, ka: usize| 4 * km + ka;
    let mut decls = Vec::new();
    for km in 0..4 {
        for ka in 0..4 {
            // azimuthal neighbor: edge 1 (u = 1) to edge 3 of the next
            decls.push(InterfaceDecl {
                a: (idx(km, ka), 1),
                b: (idx(km, (ka + 1) % 4), 3),
                alpha0: None,
            });
            // minor-direction neighbor: edge 2 (v = 1) to edge 0 of the next
            decls.push(InterfaceDecl {
                a: (idx(km, ka), 2),
                b: (idx((km + 1) % 4, ka), 0),
                alpha0: None,
            });
        }
    }
    build_multipatch(patches, &decls, &[]).expect("conforming torus")
}

/// Interpolate a parametric surface on the Greville grid of a uniform
/// bi-degree-p patch with n_u x n_v elements (polynomial weights).
pub fn fit_patch(
    f: impl Fn(f64, f64) -> [f64; 3],
    p: usize,
    n_u: usize,
    n_v: usize,
) -> NurbsPatch {
    let ku = KnotVector::uniform(p, n_u);
    let kv = KnotVector::uniform(p, n_v);
    let gu = crate::splines::greville_abscissae(&ku);
    let gv = crate::splines::greville_abscissae(&kv);
    let nu = ku.n_basis();
    let nv = kv.n_basis();
    // data values on the Greville grid
    let mut data = vec![[0.0f64; 3]; nu * nv];
    for (j, &v) in gv.iter().enumerate() {
        for (i, &u) in gu.iter().enumerate() {
            data[j * nu + i] = f(u, v);
        }
    }
    // tensor-product interpolation: solve along u for every v row, then along v
    let lu_u = collocation_lu(&ku, &gu);
    for j in 0..nv {
        for k in 0..3 {
            let mut rhs: Vec<f64> = (0..nu).map(|i| data[j * nu + i][k]).collect();
            lu_u.solve(&mut rhs);
            for i in 0..nu {
                data[j * nu + i][k] = rhs[i];
            }
        }
    }
    let lu_v = collocation_lu(&kv, &gv);
    for i in 0..nu {
        for k in 0..3 {
            let mut rhs: Vec<f64> = (0..nv).map(|j| data[j * nu + i][k]).collect();
            lu_v.solve(&mut rhs);
            for j in 0..nv {
                data[j * nu + i][k] = rhs[j];
            }
        }
    }
    let cps = data.into_iter().map(|x| ControlPoint { x, w: 1.0 }).collect();
    NurbsPatch::new(ku, kv, cps).unwrap()
}

fn collocation_lu(kv: &KnotVector, sites: &[f64]) -> BandLu {
    let n = kv.n_basis();
    let mut t = Triplets::new(n);
    for (row, &u) in sites.iter().enumerate() {
        let (span, d) = crate::splines::basis_derivs(kv, u, 0).expect("site in domain");
        for (a, &val) in d[0].iter().enumerate() {
            if val != 0.0 {
                t.push(row, span - kv.degree() + a, val);
            }
        }
    }
    BandLu::factor(&t, |i| format!("greville row {i}")).expect("collocation system")
}

/// Quarter hemisphere (one sphere octant) subdivided into three conforming
/// non-degenerate patches meeting at the pole, each with n x n elements,
/// fitted to the exact sphere of radius `r`.
///
/// Symmetry edges lie in the planes y = 0 and x = 0; the equator edge is free.
pub fn hemisphere_3patch(r: f64, n: usize) -> MultiPatchSurface {
    let a = [1.0, 0.0, 0.0];
    let b = [0.0, 1.0, 0.0];
    let c = [0.0, 0.0, 1.0];
    let mid = |p: [f64; 3], q: [f64; 3]| normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]);
    let m_ab = mid(a, b);
    let m_ac = mid(a, c);
    let m_bc = mid(b, c);
    let pole_q = normalize([1.0, 1.0, 1.0]);

    let sph_quad = |c00: [f64; 3], c10: [f64; 3], c11: [f64; 3], c01: [f64; 3]| {
        move |u: f64, v: f64| {
            let mut x = [0.0; 3];
            for k in 0..3 {
                x[k] = (1.0 - u) * (1.0 - v) * c00[k]
                    + u * (1.0 - v) * c10[k]
                    + u * v * c11[k]
                    + (1.0 - u) * v * c01[k];
            }
            let x = normalize(x);
            [r * x[0], r * x[1], r * x[2]]
        }
    };
    let p1 = fit_patch(sph_quad(a, m_ab, pole_q, m_ac), 2, n, n);
    let p2 = fit_patch(sph_quad(m_ab, b, m_bc, pole_q), 2, n, n);
    let p3 = fit_patch(sph_quad(m_ac, pole_q, m_bc, c), 2, n, n);

    let decls = vec![
        // Q1 (u=1): m_ab -> pole  with  Q2 (u=0): m_ab -> pole
        InterfaceDecl { a: (0, 1), b: (1, 3), alpha0: None },
        // Q1 (v=1): m_ac -> pole  with  Q3 (v=0): m_ac -> pole
        InterfaceDecl { a: (0, 2), b: (2, 0), alpha0: None },
        // Q2 (v=1): pole -> m_bc  with  Q3 (u=1): pole -> m_bc
        InterfaceDecl { a: (1, 2), b: (2, 1), alpha0: None },
    ];
    let syms = vec![
        // plane y = 0: Q1 edge u=0 (a -> m_ac), Q3 edge u=0 (m_ac -> c)
        SymmetryDecl { edge: (0, 3), mirror_normal: [0.0, 1.0, 0.0] },
        SymmetryDecl { edge: (2, 3), mirror_normal: [0.0, 1.0, 0.0] },
        // plane x = 0: Q2 edge u=1 (b -> m_bc), Q3 edge v=1 (c -> m_bc)
        SymmetryDecl { edge: (1, 1), mirror_normal: [1.0, 0.0, 0.0] },
        SymmetryDecl { edge: (2, 2), mirror_normal: [1.0, 0.0, 0.0] },
    ];
    build_multipatch(vec![p1, p2, p3], &decls, &syms).expect("conforming hemisphere")
}

fn normalize(x: [f64; 3]) -> [f64; 3] {
    let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    [x[0] / n, x[1] / n, x[2] / n]
}

/// Flat five-patch pinwheel around the origin: a valence-5 junction with
/// planar interfaces, used for multiplier-stability checks.
pub fn pinwheel_5(n: usize) -> MultiPatchSurface {
    let ray = |k: usize| {
        let t = 2.0 * std::f64::consts::PI * (k % 5) as f64 / 5.0;
        [t.cos(), t.sin(), 0.0]
    };
    let bilinear = |c00: [f64; 3], c10: [f64; 3], c11: [f64; 3], c01: [f64; 3]| {
        move |u: f64, v: f64| {
            let mut x = [0.0; 3];
            for k in 0..3 {
                x[k] = (1.0 - u) * (1.0 - v) * c00[k]
                    + u * (1.0 - v) * c10[k]
                    + u * v * c11[k]
                    + (1.0 - u) * v * c01[k];
            }
            x
        }
    };
    let origin = [0.0, 0.0, 0.0];
    let patches: Vec<NurbsPatch> = (0..5)
        .map(|k| {
            let r0 = ray(k);
            let r1 = ray(k + 1);
            let outer = [r0[0] + r1[0], r0[1] + r1[1], 0.0];
            fit_patch(bilinear(origin, r0, outer, r1), 2, n, n)
        })
        .collect();
    let decls: Vec<InterfaceDecl> = (0..5)
        .map(|k| InterfaceDecl { a: (k, 3), b: ((k + 1) % 5, 0), alpha0: None })
        .collect();
    build_multipatch(patches, &decls, &[]).expect("conforming pinwheel")
}

/// Flat sheet with vertical C0 lines at the given x positions: a single
/// logical patch split into conforming patches with planar interfaces.
pub fn sheet_with_c0_lines(n: usize, lines: &[f64]) -> MultiPatchSurface {
    let base = flat_rectangle(0.0, 0.0, 1.0, 1.0, 2, n, n);
    let parts = split_at_c0_lines(&base, Direction::U, lines);
    let decls: Vec<InterfaceDecl> = (0..parts.len() - 1)
        .map(|k| InterfaceDecl { a: (k, 1), b: (k + 1, 3), alpha0: None })
        .collect();
    build_multipatch(parts, &decls, &[]).expect("conforming sheet")
}

/// Strip with two fold lines (kinks) at x positions `folds`, fold angle
/// `angle` (the surface bends up at each fold). Built from three flat pieces
/// in 3D joined at kink interfaces.
pub fn folded_strip(
    length: f64,
    width: f64,
    folds: [f64; 2],
    angle: f64,
    n_x: usize,
    n_y: usize,
) -> MultiPatchSurface {
    // planar development then fold: piece 1 in the plane, piece 2 rotated by
    // `angle` about the first fold line, piece 3 rotated back to horizontal
    let seg = |x0: f64, x1: f64| x1 - x0;
    let l1 = seg(0.0, folds[0]);
    let l2 = seg(folds[0], folds[1]);
    let l3 = seg(folds[1], length);
    let (c, s) = (angle.cos(), angle.sin());
    let f1 = move |u: f64, v: f64| [u * l1, v * width, 0.0];
    let f2 = move |u: f64, v: f64| [folds[0] + c * u * l2, v * width, s * u * l2];
    let top_x = folds[0] + c * l2;
    let top_z = s * l2;
    let f3 = move |u: f64, v: f64| [top_x + u * l3, v * width, top_z];
    let nx = |l: f64| ((n_x as f64 * l / length).round() as usize).max(1);
    let p1 = fit_patch(f1, 2, nx(l1), n_y);
    let p2 = fit_patch(f2, 2, nx(l2), n_y);
    let p3 = fit_patch(f3, 2, nx(l3), n_y);
    let decls = vec![
        InterfaceDecl { a: (0, 1), b: (1, 3), alpha0: None },
        InterfaceDecl { a: (1, 1), b: (2, 3), alpha0: None },
    ];
    build_multipatch(vec![p1, p2, p3], &decls, &[]).expect("conforming folded strip")
}
