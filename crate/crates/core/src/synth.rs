//! Procedural test meshes: spheres, cylinders, grids and star-shaped
//! "biped" blobs with controllable limb poses.
//!
//! Everything here is deterministic, so meshes built twice are identical
//! bit for bit. The generators return a [`SynthMesh`] wrapper exposing both
//! the raw soup and the normalized [`TriMesh`].

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::Result;
use crate::mesh::{RawMesh, TriMesh};

pub struct SynthMesh {
    raw: RawMesh,
}

impl SynthMesh {
    pub fn raw(&self) -> RawMesh {
        self.raw.clone()
    }

    /// Wrap an externally assembled soup (used by tests that pose meshes).
    pub fn from_raw_for_tests(raw: RawMesh) -> SynthMesh {
        SynthMesh { raw }
    }

    /// Scale each axis independently.
    pub fn scaled(mut self, sx: f64, sy: f64, sz: f64) -> SynthMesh {
        for v in &mut self.raw.vertices {
            v.coords[0] *= sx;
            v.coords[1] *= sy;
            v.coords[2] *= sz;
        }
        self
    }

    /// Mirror through the plane `axis = 0`, flipping triangle winding so
    /// normals stay outward. Vertex indices are untouched, so the identity
    /// index map is the orientation-reversing isometry onto the original.
    pub fn mirrored(mut self, axis: usize) -> SynthMesh {
        for v in &mut self.raw.vertices {
            v.coords[axis] = -v.coords[axis];
        }
        for t in &mut self.raw.triangles {
            t.swap(1, 2);
        }
        self
    }

    pub fn build(&self) -> Result<TriMesh> {
        TriMesh::from_raw(self.raw.clone())
    }
}

pub fn tetrahedron() -> SynthMesh {
    let s = 1.0 / (3.0f64).sqrt();
    SynthMesh {
        raw: RawMesh {
            vertices: vec![
                Point3::new(s, s, s),
                Point3::new(s, -s, -s),
                Point3::new(-s, s, -s),
                Point3::new(-s, -s, s),
            ],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        },
    }
}

/// Unit icosphere by repeated midpoint subdivision of an icosahedron.
/// Vertex counts: 12, 42, 162, 642, 2562, 10242 for 0..=5 subdivisions.
pub fn icosphere(subdivisions: usize) -> SynthMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Point3::from(Vector3::new(c[0], c[1], c[2]).normalize()))
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0usize; 3];
            for c in 0..3 {
                let a = tri[c];
                let b = tri[(c + 1) % 3];
                let key = (a.min(b), a.max(b));
                mids[c] = *midpoint.entry(key).or_insert_with(|| {
                    let p = Point3::from(
                        ((vertices[a].coords + vertices[b].coords) * 0.5).normalize(),
                    );
                    vertices.push(p);
                    vertices.len() - 1
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        triangles = next;
    }

    SynthMesh {
        raw: RawMesh {
            vertices,
            triangles,
        },
    }
}

/// Unit square split into two right triangles.
pub fn unit_square() -> SynthMesh {
    SynthMesh {
        raw: RawMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        },
    }
}

/// Flat (nx+1) x (ny+1) grid in the unit square, mildly warped in z so the
/// geometry is not perfectly planar.
pub fn grid(nx: usize, ny: usize, warp: f64) -> SynthMesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = i as f64 / nx as f64;
            let y = j as f64 / ny as f64;
            let z = warp * (2.3 * x).sin() * (1.7 * y).cos();
            vertices.push(Point3::new(x, y, z));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    SynthMesh {
        raw: RawMesh {
            vertices,
            triangles,
        },
    }
}

/// Cylinder along +z with `n_len` rings of `n_circ` vertices, optionally
/// closed with fan caps.
pub fn cylinder(n_circ: usize, n_len: usize, radius: f64, length: f64, capped: bool) -> SynthMesh {
    bent_cylinder(n_circ, n_len, radius, length, 0.0, capped)
}

/// [`bent_cylinder`] with a taper and a deterministic pattern of surface
/// bumps. A plain tube has end-swap, axial and mirror symmetries, so
/// identity ground truth is not identifiable from geometry alone; the
/// detail pattern pins all of them down while both shapes stay
/// near-isometric (the detail rides along the bend unchanged).
pub fn detailed_bent_cylinder(
    n_circ: usize,
    n_len: usize,
    radius: f64,
    length: f64,
    bend_deg: f64,
    detail: f64,
) -> SynthMesh {
    bent_cylinder_impl(n_circ, n_len, radius, length, bend_deg, true, detail)
}

/// Cylinder bent by `bend_deg` degrees in the x-z plane. Shares its
/// connectivity (and vertex ordering) with the straight cylinder, so
/// straight-vs-bent pairs have ground truth = identity.
pub fn bent_cylinder(
    n_circ: usize,
    n_len: usize,
    radius: f64,
    length: f64,
    bend_deg: f64,
    capped: bool,
) -> SynthMesh {
    bent_cylinder_impl(n_circ, n_len, radius, length, bend_deg, capped, 0.0)
}

fn bent_cylinder_impl(
    n_circ: usize,
    n_len: usize,
    radius: f64,
    length: f64,
    bend_deg: f64,
    capped: bool,
    detail: f64,
) -> SynthMesh {
    assert!(n_circ >= 3 && n_len >= 2);
    let theta = bend_deg.to_radians();
    let place = |x: f64, y: f64, z: f64| -> Point3<f64> {
        if theta.abs() < 1e-12 {
            Point3::new(x, y, z)
        } else {
            let arc_r = length / theta;
            let alpha = theta * z / length;
            Point3::new((arc_r + x) * alpha.cos() - arc_r, y, (arc_r + x) * alpha.sin())
        }
    };
    // gaussian bumps in (angle, height) parameters plus a linear taper;
    // identical on the straight and bent variants
    let bumps: [(f64, f64, f64, f64); 3] = [
        (0.6, 0.22, 0.8, 0.08),
        (2.9, 0.55, 0.7, 0.10),
        (4.6, 0.83, 0.9, 0.07),
    ];
    let local_radius = |ang: f64, t: f64| -> f64 {
        let mut r = radius;
        if detail != 0.0 {
            r *= 1.0 - 0.25 * t; // taper kills the end-swap symmetry
            let mut boost = 0.0;
            for &(a0, t0, wa, wt) in &bumps {
                let mut da = (ang - a0).abs();
                da = da.min(std::f64::consts::TAU - da);
                let g = (-0.5 * (da / wa).powi(2) - 0.5 * ((t - t0) / wt).powi(2)).exp();
                boost += detail * g;
            }
            r *= 1.0 + boost;
        }
        r
    };

    let mut vertices = Vec::with_capacity(n_circ * n_len + 2);
    for ring in 0..n_len {
        let t = ring as f64 / (n_len - 1) as f64;
        let z = length * t;
        for s in 0..n_circ {
            let ang = std::f64::consts::TAU * s as f64 / n_circ as f64;
            let r = local_radius(ang, t);
            vertices.push(place(r * ang.cos(), r * ang.sin(), z));
        }
    }
    let mut triangles = Vec::new();
    for ring in 0..n_len - 1 {
        for s in 0..n_circ {
            let a = ring * n_circ + s;
            let b = ring * n_circ + (s + 1) % n_circ;
            let c = (ring + 1) * n_circ + s;
            let d = (ring + 1) * n_circ + (s + 1) % n_circ;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    if capped {
        let bottom = vertices.len();
        vertices.push(place(0.0, 0.0, 0.0));
        let top = vertices.len();
        vertices.push(place(0.0, 0.0, length));
        for s in 0..n_circ {
            let a = s;
            let b = (s + 1) % n_circ;
            triangles.push([bottom, b, a]);
            let a2 = (n_len - 1) * n_circ + s;
            let b2 = (n_len - 1) * n_circ + (s + 1) % n_circ;
            triangles.push([top, a2, b2]);
        }
    }
    SynthMesh {
        raw: RawMesh {
            vertices,
            triangles,
        },
    }
}

/// Tapered, surface-detailed tube bent successively in two planes. The
/// two-plane elbow makes the gross shape chiral: no rotation maps it close
/// to its mirror image, unlike a planar arc. Used for symmetric-ambiguity
/// tests as a pair with its [`SynthMesh::mirrored`] copy (which is exactly
/// isometric to it under the identity index map).
pub fn chiral_tube(
    n_circ: usize,
    n_len: usize,
    radius: f64,
    length: f64,
    bend1_deg: f64,
    bend2_deg: f64,
    detail: f64,
) -> SynthMesh {
    let mut mesh = detailed_bent_cylinder(n_circ, n_len, radius, length, bend1_deg, detail);
    let theta2 = bend2_deg.to_radians();
    if theta2.abs() > 1e-12 {
        let z_max = mesh
            .raw
            .vertices
            .iter()
            .map(|v| v.z)
            .fold(f64::NEG_INFINITY, f64::max);
        let arc_r = z_max / theta2;
        for v in &mut mesh.raw.vertices {
            let alpha = theta2 * v.z / z_max;
            let y = v.y;
            v.coords[1] = (arc_r + y) * alpha.cos() - arc_r;
            v.coords[2] = (arc_r + y) * alpha.sin();
        }
    }
    mesh
}

/// A radial protrusion for [`star_shape`]: the surface is pushed outward
/// around direction `dir` with the given amplitude and angular sharpness.
#[derive(Debug, Clone, Copy)]
pub struct RadialBump {
    pub dir: Vector3<f64>,
    pub amplitude: f64,
    pub sharpness: f64,
}

impl RadialBump {
    pub fn new(dir: Vector3<f64>, amplitude: f64, sharpness: f64) -> RadialBump {
        RadialBump {
            dir: dir.normalize(),
            amplitude,
            sharpness,
        }
    }
}

/// Star-shaped blob: an icosphere with radial bumps. Because the deformation
/// is purely radial, vertex `i` keeps the direction of icosphere vertex `i`,
/// so meshes built from the same subdivision level share connectivity and
/// vertex correspondence regardless of bump layout.
pub fn star_shape(subdivisions: usize, bumps: &[RadialBump]) -> SynthMesh {
    let mut raw = icosphere(subdivisions).raw();
    for v in &mut raw.vertices {
        let u = v.coords.normalize();
        let mut r = 1.0;
        for b in bumps {
            let c = u.dot(&b.dir).max(0.0);
            r += b.amplitude * c.powf(b.sharpness);
        }
        v.coords = u * r;
    }
    SynthMesh { raw }
}

/// Arm pose for [`biped`]: which way the arms swing in the front-back
/// direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmPose {
    /// Left arm forward, right arm backward.
    LeftForward,
    /// Left arm backward, right arm forward.
    RightForward,
}

/// Star-shaped biped blob: head up, two legs down, two arms out to the
/// sides. The left arm (negative x) is noticeably longer than the right
/// one, so the left/right intrinsic near-symmetry is broken by geometry
/// while remaining close enough to fool purely extrinsic alignment.
pub fn biped(subdivisions: usize, pose: ArmPose) -> SynthMesh {
    let fwd = match pose {
        ArmPose::LeftForward => 0.8,
        ArmPose::RightForward => -0.8,
    };
    // Broad limbs carry enough area that coarse eigenmodes resolve them.
    // The arms swing front-back, so any rotation aligning the swapped arms
    // has to flip the vertical axis and scramble head and legs; the nose
    // additionally pins the front. The correct rigid pose is therefore the
    // identity and the arm swap stays a pure deformation ambiguity.
    let bumps = [
        // head
        RadialBump::new(Vector3::new(0.0, 0.0, 1.0), 1.0, 4.0),
        // nose
        RadialBump::new(Vector3::new(0.0, 1.0, 0.35), 0.7, 7.0),
        // legs
        RadialBump::new(Vector3::new(-0.5, 0.0, -1.0), 1.4, 6.0),
        RadialBump::new(Vector3::new(0.5, 0.0, -1.0), 1.4, 6.0),
        // long left arm, short right arm, opposite front-back swings
        RadialBump::new(Vector3::new(-1.0, fwd, 0.1), 2.1, 5.0),
        RadialBump::new(Vector3::new(1.0, -fwd, 0.1), 1.05, 5.0),
    ];
    // the elongated body makes rotations strongly non-isometric, so the
    // spectral channel pins the orientation
    star_shape(subdivisions, &bumps).scaled(0.62, 0.35, 1.25)
}

/// Biped variant whose pose ambiguity lives in the legs: the unequal arms
/// and the nose are identical in both poses and anchor the rigid
/// orientation, while the unequal legs either hang straight or cross over
/// to the opposite side. Extrinsic proximity alone locks each leg onto the
/// wrong one in the crossed pose; identifying them correctly needs the
/// coarse-deformation search. Ground truth between the two poses is the
/// identity.
pub fn crossed_biped(subdivisions: usize, crossed: bool) -> SynthMesh {
    let (l_leg, r_leg) = if crossed {
        // each leg takes over the other's angular slot, offset only in y
        (
            Vector3::new(0.5, 0.28, -1.0),
            Vector3::new(-0.5, -0.28, -1.0),
        )
    } else {
        (
            Vector3::new(-0.5, 0.0, -1.0),
            Vector3::new(0.5, 0.0, -1.0),
        )
    };
    let bumps = [
        // head and nose
        RadialBump::new(Vector3::new(0.0, 0.0, 1.0), 1.0, 4.0),
        RadialBump::new(Vector3::new(0.0, 1.0, 0.35), 0.6, 7.0),
        // fixed unequal arms pin the orientation
        RadialBump::new(Vector3::new(-1.0, 0.0, 0.15), 1.8, 5.0),
        RadialBump::new(Vector3::new(1.0, 0.0, 0.15), 0.9, 5.0),
        // unequal legs carry the pose ambiguity
        RadialBump::new(l_leg, 1.6, 6.0),
        RadialBump::new(r_leg, 1.1, 6.0),
    ];
    star_shape(subdivisions, &bumps).scaled(0.62, 0.42, 1.25)
}

/// Icosphere with one vertex pushed radially outward; vertex 0 carries the
/// spike.
pub fn sphere_with_spike(subdivisions: usize, factor: f64) -> SynthMesh {
    let mut raw = icosphere(subdivisions).raw();
    raw.vertices[0].coords *= factor;
    SynthMesh { raw }
}

/// Biped with the upper body twisted about the vertical axis by
/// `twist_deg` degrees (legs stay put, the twist ramps in smoothly above
/// the waist). Opposite twists carry each arm past the other's position,
/// so the extrinsic overlay of such a pair locks arms onto the wrong
/// sides, while no global rotation can align the twisted tops and the
/// untwisted legs at the same time. The slightly unequal arms are the
/// only left-right marker.
pub fn twisted_biped(subdivisions: usize, twist_deg: f64) -> SynthMesh {
    let bumps = [
        // head and nose
        RadialBump::new(Vector3::new(0.0, 0.0, 1.0), 1.0, 4.0),
        RadialBump::new(Vector3::new(0.0, 1.0, 0.35), 0.6, 7.0),
        // nearly equal arms: intrinsically identifiable, extrinsically weak
        RadialBump::new(Vector3::new(-1.0, 0.0, 0.15), 1.55, 5.0),
        RadialBump::new(Vector3::new(1.0, 0.0, 0.15), 1.15, 5.0),
        // equal legs
        RadialBump::new(Vector3::new(-0.5, 0.0, -1.0), 1.3, 6.0),
        RadialBump::new(Vector3::new(0.5, 0.0, -1.0), 1.3, 6.0),
    ];
    let mut mesh = star_shape(subdivisions, &bumps).scaled(0.62, 0.5, 1.25);
    let twist = twist_deg.to_radians();
    if twist.abs() > 1e-12 {
        let z_max = mesh.raw.vertices.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max);
        let waist = -0.15;
        for v in &mut mesh.raw.vertices {
            let t = ((v.z - waist) / (z_max - waist)).clamp(0.0, 1.0);
            let ramp = t * t * (3.0 - 2.0 * t);
            let ang = twist * ramp;
            let (x, y) = (v.x, v.y);
            v.coords[0] = x * ang.cos() - y * ang.sin();
            v.coords[1] = x * ang.sin() + y * ang.cos();
        }
    }
    mesh
}

/// Biped leaning sideways by `lean_deg` degrees (positive leans toward
/// +x). The body is left-right near-symmetric — only the arm lengths and
/// the nose break the mirror — so a pair leaning opposite ways overlays
/// almost perfectly under the flipped correspondence while the true
/// (identity) correspondence requires a whole-body coarse deformation.
pub fn leaning_biped(subdivisions: usize, lean_deg: f64) -> SynthMesh {
    let bumps = [
        // head and nose
        RadialBump::new(Vector3::new(0.0, 0.0, 1.0), 1.0, 4.0),
        RadialBump::new(Vector3::new(0.0, 1.0, 0.35), 0.6, 7.0),
        // strongly unequal arms: the only left-right marker
        RadialBump::new(Vector3::new(-1.0, 0.0, 0.15), 1.8, 5.0),
        RadialBump::new(Vector3::new(1.0, 0.0, 0.15), 0.7, 5.0),
        // equal legs
        RadialBump::new(Vector3::new(-0.5, 0.0, -1.0), 1.3, 6.0),
        RadialBump::new(Vector3::new(0.5, 0.0, -1.0), 1.3, 6.0),
    ];
    let mut mesh = star_shape(subdivisions, &bumps).scaled(0.62, 0.42, 1.25);
    let theta = lean_deg.to_radians();
    if theta.abs() > 1e-12 {
        let z_min = mesh.raw.vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
        let z_max = mesh.raw.vertices.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max);
        let height = z_max - z_min;
        let arc_r = height / theta;
        for v in &mut mesh.raw.vertices {
            let alpha = theta * (v.z - z_min) / height;
            let x = v.x;
            v.coords[0] = (arc_r + x) * alpha.cos() - arc_r;
            v.coords[2] = z_min + (arc_r + x) * alpha.sin();
        }
        // leaning toward +x for positive angles
        for v in &mut mesh.raw.vertices {
            v.coords[0] = -v.coords[0];
        }
    }
    mesh
}

/// Vertex permutation realizing the mirror symmetry `axis -> -axis` of a
/// raw mesh, if it exists exactly (within `tol` on mirrored positions).
pub fn mirror_permutation(raw: &RawMesh, axis: usize, tol: f64) -> Option<Vec<usize>> {
    let n = raw.vertices.len();
    let mut perm = vec![usize::MAX; n];
    for i in 0..n {
        let mut target = raw.vertices[i];
        target.coords[axis] = -target.coords[axis];
        let mut best = usize::MAX;
        let mut best_d = tol;
        for j in 0..n {
            let d = (raw.vertices[j] - target).norm();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if best == usize::MAX {
            return None;
        }
        perm[i] = best;
    }
    // must be an involution and a bijection
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[perm[i]] || perm[perm[i]] != i {
            return None;
        }
        seen[perm[i]] = true;
    }
    Some(perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere(0).raw().vertices.len(), 12);
        assert_eq!(icosphere(1).raw().vertices.len(), 42);
        assert_eq!(icosphere(3).raw().vertices.len(), 642);
    }

    #[test]
    fn cylinder_is_closed_when_capped() {
        let m = cylinder(12, 8, 0.3, 1.5, true).build().unwrap();
        // closed manifold: E = 3F/2, V - E + F = 2
        let f = m.num_triangles() as i64;
        let v = m.num_vertices() as i64;
        let e = 3 * f / 2;
        assert_eq!(v - e + f, 2);
    }

    #[test]
    fn bent_cylinder_shares_connectivity() {
        let a = cylinder(10, 6, 0.2, 1.0, true).raw();
        let b = bent_cylinder(10, 6, 0.2, 1.0, 60.0, true).raw();
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.vertices.len(), b.vertices.len());
    }

    #[test]
    fn icosphere_has_exact_mirror_symmetry() {
        let raw = icosphere(2).raw();
        let perm = mirror_permutation(&raw, 0, 1e-9).expect("mirror symmetry");
        assert!(perm.iter().enumerate().any(|(i, &p)| p != i));
    }

    #[test]
    fn biped_poses_share_vertex_directions() {
        let a = biped(2, ArmPose::LeftForward).raw();
        let b = biped(2, ArmPose::RightForward).raw();
        assert_eq!(a.triangles, b.triangles);
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            let ua = va.coords.normalize();
            let ub = vb.coords.normalize();
            assert!((ua - ub).norm() < 1e-12);
        }
    }

    #[test]
    fn star_shape_builds_valid_mesh() {
        let m = biped(2, ArmPose::LeftForward).build().unwrap();
        assert!(m.vertex_masses.iter().all(|&x| x > 0.0));
        assert!((m.surface_area() - 1.0).abs() < 1e-10);
    }
}
