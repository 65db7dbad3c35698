//! Synthetic desk-scale training data. Three part-pair templates with
//! exact graphs, watertight meshes, and ground-truth joints:
//!
//! - a peg inserted into the matching hole of a drilled plate,
//! - two boxes mated on their largest faces,
//! - two drilled plates stacked with their matching holes aligned.
//!
//! Plates are rows of square cells, one centered hole per cell; the first
//! hole radius range is disjoint from the decoy range so the labeled hole
//! stays identifiable, except in sibling samples where one decoy duplicates
//! the labeled radius exactly.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point3, Unit, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Error};
use crate::brep::{
    Convexity, CurveType, Entity, EntityType, Joint, JointSet, PartGraph, PhysicalProps,
    SurfaceType,
};
use crate::geometry::{box_mesh, transform_from_axes, Pose, TriMesh};

/// Segments per circle. A multiple of 8 so plate-cell boundary rays land
/// exactly on cell corners, and a multiple of 4 so a quarter turn is a
/// symmetry of every tessellated hole.
const NSEG: usize = 16;

const FACE_TOP: usize = 0;
const FACE_BOTTOM: usize = 1;
const FACE_FRONT: usize = 2;
const FACE_BACK: usize = 3;
const FACE_LEFT: usize = 4;
const FACE_RIGHT: usize = 5;
/// Nodes 6..18 are the twelve shell boundary lines; holes start here.
const SHELL_NODES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Template {
    PegPlate,
    CubePair,
    PlatePair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_samples: usize,
    pub seed: u64,
    pub peg_plate_weight: f64,
    pub cube_pair_weight: f64,
    pub plate_pair_weight: f64,
    /// Fraction of peg-plate samples whose plate gets a second hole with
    /// exactly the labeled radius. Ignored when `max_decoy_holes` is zero.
    pub sibling_fraction: f64,
    /// Extra unlabeled holes per plate, drawn uniformly from 0..=this.
    pub max_decoy_holes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_samples: 100,
            seed: 0,
            peg_plate_weight: 0.5,
            cube_pair_weight: 0.3,
            plate_pair_weight: 0.2,
            sibling_fraction: 0.1,
            max_decoy_holes: 2,
        }
    }
}

/// One generated pair: both part graphs, their meshes, and the joint set
/// labeling them.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub template: Template,
    pub part1: PartGraph,
    pub mesh1: TriMesh,
    pub part2: PartGraph,
    pub mesh2: TriMesh,
    pub set: JointSet,
}

impl SynthSample {
    pub fn labels(&self) -> Vec<(usize, usize)> {
        self.set.joints.iter().map(|j| (j.u, j.v)).collect()
    }
}

/// A three-part bolt stack: base plate, a second plate whose hole aligns
/// with the base's, and a peg long enough to pass through both. `parts` is
/// in assembly order; `sets` label part 2 against part 1 and part 3 against
/// part 1.
#[derive(Debug, Clone)]
pub struct StackSample {
    pub parts: Vec<(PartGraph, TriMesh)>,
    pub sets: Vec<JointSet>,
}

// ---------------------------------------------------------------- entities

fn face_entity(
    ty: SurfaceType,
    area: f64,
    origin: Point3<f64>,
    dir: Vector3<f64>,
    radius: Option<f64>,
) -> Entity {
    Entity {
        entity_type: EntityType::Surface(ty),
        reversed: false,
        length: 0.0,
        area,
        dihedral: 0.0,
        convexity: None,
        axis_origin: Some(origin),
        axis_dir: Some(Unit::new_normalize(dir)),
        radius,
    }
}

fn edge_entity(
    ty: CurveType,
    length: f64,
    origin: Point3<f64>,
    dir: Vector3<f64>,
    radius: Option<f64>,
    convexity: Convexity,
) -> Entity {
    Entity {
        entity_type: EntityType::Curve(ty),
        reversed: false,
        length,
        area: 0.0,
        dihedral: FRAC_PI_2,
        convexity: Some(convexity),
        axis_origin: Some(origin),
        axis_dir: Some(Unit::new_normalize(dir)),
        radius,
    }
}

/// Six faces of a w×d×h shell, corner at the origin. Top and bottom areas
/// are passed in so plates can subtract their holes.
fn shell_faces(w: f64, d: f64, h: f64, top_area: f64) -> Vec<Entity> {
    let plane = |area, origin: [f64; 3], dir: [f64; 3]| {
        face_entity(
            SurfaceType::Plane,
            area,
            Point3::from(origin),
            Vector3::from(dir),
            None,
        )
    };
    vec![
        plane(top_area, [w / 2.0, d / 2.0, h], [0.0, 0.0, 1.0]),
        plane(top_area, [w / 2.0, d / 2.0, 0.0], [0.0, 0.0, -1.0]),
        plane(w * h, [w / 2.0, 0.0, h / 2.0], [0.0, -1.0, 0.0]),
        plane(w * h, [w / 2.0, d, h / 2.0], [0.0, 1.0, 0.0]),
        plane(d * h, [0.0, d / 2.0, h / 2.0], [-1.0, 0.0, 0.0]),
        plane(d * h, [w, d / 2.0, h / 2.0], [1.0, 0.0, 0.0]),
    ]
}

/// Twelve boundary lines of the same shell, in the order `shell_links`
/// assumes: top rectangle, bottom rectangle, then the four verticals.
fn shell_edges(w: f64, d: f64, h: f64) -> Vec<Entity> {
    let line = |len, origin: [f64; 3], dir: [f64; 3]| {
        edge_entity(
            CurveType::Line,
            len,
            Point3::from(origin),
            Vector3::from(dir),
            None,
            Convexity::Convex,
        )
    };
    let (x, y, z) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    vec![
        line(w, [0.0, 0.0, h], x),
        line(w, [0.0, d, h], x),
        line(d, [0.0, 0.0, h], y),
        line(d, [w, 0.0, h], y),
        line(w, [0.0, 0.0, 0.0], x),
        line(w, [0.0, d, 0.0], x),
        line(d, [0.0, 0.0, 0.0], y),
        line(d, [w, 0.0, 0.0], y),
        line(h, [0.0, 0.0, 0.0], z),
        line(h, [w, 0.0, 0.0], z),
        line(h, [0.0, d, 0.0], z),
        line(h, [w, d, 0.0], z),
    ]
}

fn shell_links() -> Vec<(usize, usize)> {
    vec![
        (FACE_TOP, 6),
        (FACE_TOP, 7),
        (FACE_TOP, 8),
        (FACE_TOP, 9),
        (FACE_BOTTOM, 10),
        (FACE_BOTTOM, 11),
        (FACE_BOTTOM, 12),
        (FACE_BOTTOM, 13),
        (FACE_FRONT, 6),
        (FACE_FRONT, 10),
        (FACE_FRONT, 14),
        (FACE_FRONT, 15),
        (FACE_BACK, 7),
        (FACE_BACK, 11),
        (FACE_BACK, 16),
        (FACE_BACK, 17),
        (FACE_LEFT, 8),
        (FACE_LEFT, 12),
        (FACE_LEFT, 14),
        (FACE_LEFT, 16),
        (FACE_RIGHT, 9),
        (FACE_RIGHT, 13),
        (FACE_RIGHT, 15),
        (FACE_RIGHT, 17),
    ]
}

// ------------------------------------------------------------------ meshes

struct MeshAcc {
    verts: Vec<Point3<f64>>,
    tris: Vec<[usize; 3]>,
    groups: BTreeMap<usize, Vec<usize>>,
}

impl MeshAcc {
    fn new() -> Self {
        Self {
            verts: Vec::new(),
            tris: Vec::new(),
            groups: BTreeMap::new(),
        }
    }

    fn vert(&mut self, p: Point3<f64>) -> usize {
        self.verts.push(p);
        self.verts.len() - 1
    }

    fn tri(&mut self, face: usize, a: usize, b: usize, c: usize) {
        self.groups.entry(face).or_default().push(self.tris.len());
        self.tris.push([a, b, c]);
    }

    fn quad(&mut self, face: usize, a: usize, b: usize, c: usize, d: usize) {
        self.tri(face, a, b, c);
        self.tri(face, a, c, d);
    }

    fn build(self) -> Result<TriMesh, crate::geometry::Error> {
        TriMesh::new(self.verts, self.tris, self.groups)
    }
}

fn ring_angle(j: usize) -> f64 {
    2.0 * PI * j as f64 / NSEG as f64
}

fn peg_mesh(r: f64, h: f64) -> Result<TriMesh, crate::geometry::Error> {
    let mut acc = MeshAcc::new();
    let mut bottom = [0usize; NSEG];
    let mut top = [0usize; NSEG];
    for j in 0..NSEG {
        let (sin, cos) = ring_angle(j).sin_cos();
        bottom[j] = acc.vert(Point3::new(r * cos, r * sin, 0.0));
    }
    for j in 0..NSEG {
        let (sin, cos) = ring_angle(j).sin_cos();
        top[j] = acc.vert(Point3::new(r * cos, r * sin, h));
    }
    let center_bottom = acc.vert(Point3::new(0.0, 0.0, 0.0));
    let center_top = acc.vert(Point3::new(0.0, 0.0, h));
    for j in 0..NSEG {
        let j1 = (j + 1) % NSEG;
        acc.quad(0, bottom[j], bottom[j1], top[j1], top[j]);
        acc.tri(1, center_bottom, bottom[j1], bottom[j]);
        acc.tri(2, center_top, top[j], top[j1]);
    }
    acc.build()
}

/// Per-cell vertex ids at both levels (0 = bottom, 1 = top).
struct PlateCell {
    ring: [[usize; NSEG]; 2],
    circ: [[usize; NSEG]; 2],
    top_edge: [[usize; 3]; 2],
    bottom_edge: [[usize; 3]; 2],
}

/// A row of `radii.len()` square cells of side `s` and thickness `t`, each
/// with one centered hole. Cell webs connect each hole ring to the cell
/// boundary along rays; neighboring cells share their boundary vertices, so
/// the mesh is combinatorially watertight.
fn plate_mesh(s: f64, t: f64, radii: &[f64]) -> Result<TriMesh, crate::geometry::Error> {
    let k = radii.len();
    let cy = s / 2.0;
    // Ray height where a 22.5 degree ray meets the cell boundary.
    let e = (s / 2.0) * (PI / 8.0).tan();
    let mut acc = MeshAcc::new();

    // Shared vertical boundary lines, [line][level][point], points ordered
    // by y. Corner points double as endpoints of the y-facing walls.
    let dys = [-s / 2.0, -e, 0.0, e, s / 2.0];
    let mut vline = vec![[[0usize; 5]; 2]; k + 1];
    for (i, line) in vline.iter_mut().enumerate() {
        let x = i as f64 * s;
        for (zi, z) in [0.0, t].into_iter().enumerate() {
            for (m, dy) in dys.into_iter().enumerate() {
                line[zi][m] = acc.vert(Point3::new(x, cy + dy, z));
            }
        }
    }

    let mut cells = Vec::with_capacity(k);
    for (i, &r) in radii.iter().enumerate() {
        let cx = (i as f64 + 0.5) * s;
        let mut cell = PlateCell {
            ring: [[0; NSEG]; 2],
            circ: [[0; NSEG]; 2],
            top_edge: [[0; 3]; 2],
            bottom_edge: [[0; 3]; 2],
        };
        for (zi, z) in [0.0, t].into_iter().enumerate() {
            cell.top_edge[zi] =
                [cx + e, cx, cx - e].map(|x| acc.vert(Point3::new(x, s, z)));
            cell.bottom_edge[zi] =
                [cx - e, cx, cx + e].map(|x| acc.vert(Point3::new(x, 0.0, z)));
            for j in 0..NSEG {
                let (sin, cos) = ring_angle(j).sin_cos();
                cell.circ[zi][j] = acc.vert(Point3::new(cx + r * cos, cy + r * sin, z));
            }
            let v_l = &vline[i][zi];
            let v_r = &vline[i + 1][zi];
            let te = &cell.top_edge[zi];
            let be = &cell.bottom_edge[zi];
            cell.ring[zi] = [
                v_r[2], v_r[3], v_r[4], te[0], te[1], te[2], v_l[4], v_l[3], v_l[2], v_l[1],
                v_l[0], be[0], be[1], be[2], v_r[0], v_r[1],
            ];
        }
        cells.push(cell);
    }

    for (i, cell) in cells.iter().enumerate() {
        let hole_face = SHELL_NODES + 3 * i;
        for j in 0..NSEG {
            let j1 = (j + 1) % NSEG;
            let (c, b) = (&cell.circ[1], &cell.ring[1]);
            acc.quad(FACE_TOP, c[j], b[j], b[j1], c[j1]);
            let (c, b) = (&cell.circ[0], &cell.ring[0]);
            acc.quad(FACE_BOTTOM, c[j], c[j1], b[j1], b[j]);
            acc.quad(
                hole_face,
                cell.circ[0][j],
                cell.circ[1][j],
                cell.circ[1][j1],
                cell.circ[0][j1],
            );
        }
    }

    // Outer walls: strips of quads between matching bottom and top runs.
    let wall = |acc: &mut MeshAcc, face: usize, run: [[usize; 5]; 2]| {
        for m in 0..4 {
            acc.quad(face, run[0][m], run[0][m + 1], run[1][m + 1], run[1][m]);
        }
    };
    for (i, cell) in cells.iter().enumerate() {
        let front = |zi: usize| {
            let be = &cell.bottom_edge[zi];
            [vline[i][zi][0], be[0], be[1], be[2], vline[i + 1][zi][0]]
        };
        wall(&mut acc, FACE_FRONT, [front(0), front(1)]);
        let back = |zi: usize| {
            let te = &cell.top_edge[zi];
            [vline[i + 1][zi][4], te[0], te[1], te[2], vline[i][zi][4]]
        };
        wall(&mut acc, FACE_BACK, [back(0), back(1)]);
    }
    let left = |zi: usize| {
        let v = &vline[0][zi];
        [v[4], v[3], v[2], v[1], v[0]]
    };
    wall(&mut acc, FACE_LEFT, [left(0), left(1)]);
    let right = |zi: usize| vline[k][zi];
    wall(&mut acc, FACE_RIGHT, [right(0), right(1)]);

    acc.build()
}

fn box_mesh_grouped(dims: Vector3<f64>) -> Result<TriMesh, crate::geometry::Error> {
    let m = box_mesh(Point3::origin(), Point3::from(dims))?;
    let groups = BTreeMap::from([
        (FACE_TOP, vec![2, 3]),
        (FACE_BOTTOM, vec![0, 1]),
        (FACE_FRONT, vec![4, 5]),
        (FACE_BACK, vec![6, 7]),
        (FACE_LEFT, vec![8, 9]),
        (FACE_RIGHT, vec![10, 11]),
    ]);
    TriMesh::new(m.vertices().to_vec(), m.triangles().to_vec(), groups)
}

// ------------------------------------------------------------------ graphs

fn peg_graph(id: &str, r: f64, h: f64) -> PartGraph {
    let volume = PI * r * r * h;
    let transverse = volume * (3.0 * r * r + h * h) / 12.0;
    let z = Vector3::z();
    let nodes = vec![
        face_entity(
            SurfaceType::Cylinder,
            2.0 * PI * r * h,
            Point3::origin(),
            z,
            Some(r),
        ),
        face_entity(SurfaceType::Plane, PI * r * r, Point3::origin(), -z, None),
        face_entity(
            SurfaceType::Plane,
            PI * r * r,
            Point3::new(0.0, 0.0, h),
            z,
            None,
        ),
        edge_entity(
            CurveType::Circle,
            2.0 * PI * r,
            Point3::origin(),
            z,
            Some(r),
            Convexity::Convex,
        ),
        edge_entity(
            CurveType::Circle,
            2.0 * PI * r,
            Point3::new(0.0, 0.0, h),
            z,
            Some(r),
            Convexity::Convex,
        ),
    ];
    PartGraph {
        part_id: id.to_string(),
        bbox_min: Point3::new(-r, -r, 0.0),
        bbox_max: Point3::new(r, r, h),
        mesh: format!("meshes/{id}.obj"),
        nodes,
        links: vec![(0, 3), (0, 4), (1, 3), (2, 4)],
        physical: Some(PhysicalProps {
            volume,
            moments: [transverse, transverse, volume * r * r / 2.0],
        }),
    }
}

fn plate_graph(id: &str, s: f64, t: f64, radii: &[f64]) -> PartGraph {
    let k = radii.len();
    let w = k as f64 * s;
    let hole_area: f64 = radii.iter().map(|r| PI * r * r).sum();
    let mut nodes = shell_faces(w, s, t, w * s - hole_area);
    nodes.extend(shell_edges(w, s, t));
    let mut links = shell_links();
    let cy = s / 2.0;
    let z = Vector3::z();
    for (i, &r) in radii.iter().enumerate() {
        let cx = (i as f64 + 0.5) * s;
        let base = SHELL_NODES + 3 * i;
        nodes.push(face_entity(
            SurfaceType::Cylinder,
            2.0 * PI * r * t,
            Point3::new(cx, cy, 0.0),
            z,
            Some(r),
        ));
        nodes.push(edge_entity(
            CurveType::Circle,
            2.0 * PI * r,
            Point3::new(cx, cy, t),
            z,
            Some(r),
            Convexity::Concave,
        ));
        nodes.push(edge_entity(
            CurveType::Circle,
            2.0 * PI * r,
            Point3::new(cx, cy, 0.0),
            z,
            Some(r),
            Convexity::Concave,
        ));
        links.push((FACE_TOP, base + 1));
        links.push((FACE_BOTTOM, base + 2));
        links.push((base, base + 1));
        links.push((base, base + 2));
    }

    let box_mass = w * s * t;
    let mut moments = [
        box_mass * (s * s + t * t) / 12.0,
        box_mass * (w * w + t * t) / 12.0,
        box_mass * (w * w + s * s) / 12.0,
    ];
    let mut volume = box_mass;
    for (i, &r) in radii.iter().enumerate() {
        let m = PI * r * r * t;
        let dx = (i as f64 + 0.5) * s - w / 2.0;
        let transverse = m * (3.0 * r * r + t * t) / 12.0;
        moments[0] -= transverse;
        moments[1] -= transverse + m * dx * dx;
        moments[2] -= m * r * r / 2.0 + m * dx * dx;
        volume -= m;
    }

    PartGraph {
        part_id: id.to_string(),
        bbox_min: Point3::origin(),
        bbox_max: Point3::new(w, s, t),
        mesh: format!("meshes/{id}.obj"),
        nodes,
        links,
        physical: Some(PhysicalProps { volume, moments }),
    }
}

fn box_graph(id: &str, dims: Vector3<f64>) -> PartGraph {
    let (w, d, h) = (dims.x, dims.y, dims.z);
    let mut nodes = shell_faces(w, d, h, w * d);
    nodes.extend(shell_edges(w, d, h));
    let volume = w * d * h;
    PartGraph {
        part_id: id.to_string(),
        bbox_min: Point3::origin(),
        bbox_max: Point3::from(dims),
        mesh: format!("meshes/{id}.obj"),
        nodes,
        links: shell_links(),
        physical: Some(PhysicalProps {
            volume,
            moments: [
                volume * (d * d + h * h) / 12.0,
                volume * (w * w + h * h) / 12.0,
                volume * (w * w + d * d) / 12.0,
            ],
        }),
    }
}

// --------------------------------------------------------------- templates

fn hole_node(cell: usize) -> usize {
    SHELL_NODES + 3 * cell
}

fn gt_joint(
    g1: &PartGraph,
    u: usize,
    g2: &PartGraph,
    v: usize,
    pose: Pose,
) -> Result<Joint, Error> {
    let a1 = crate::brep::derive_axis(g1, u)?;
    let a2 = crate::brep::derive_axis(g2, v)?;
    let transform = transform_from_axes(&a1, &a2, pose)?;
    Ok(Joint {
        u,
        v,
        transform,
        offset: pose.offset,
        rotation: pose.rotation,
        flip: pose.flip,
    })
}

/// Decoy radii stay below 0.16 s and labeled radii above 0.22 s, so the two
/// populations never fall within the 5% tolerance used by radius matching.
fn labeled_radius(rng: &mut ChaCha8Rng, s: f64) -> f64 {
    s * rng.gen_range(0.22..0.30)
}

fn decoy_radius(rng: &mut ChaCha8Rng, s: f64) -> f64 {
    s * rng.gen_range(0.08..0.16)
}

/// Cell radii with the labeled one placed at `target`; one decoy duplicates
/// it exactly in sibling plates.
fn plate_radii(rng: &mut ChaCha8Rng, s: f64, cells: usize, target: usize, sibling: bool) -> Vec<f64> {
    let labeled = labeled_radius(rng, s);
    let mut radii: Vec<f64> = (0..cells)
        .map(|i| {
            if i == target {
                labeled
            } else {
                decoy_radius(rng, s)
            }
        })
        .collect();
    if sibling && cells > 1 {
        let mut pick = rng.gen_range(0..cells - 1);
        if pick >= target {
            pick += 1;
        }
        radii[pick] = labeled;
    }
    radii
}

fn peg_plate_sample(
    rng: &mut ChaCha8Rng,
    index: usize,
    sibling: bool,
    max_decoys: usize,
) -> Result<SynthSample, Error> {
    let s = rng.gen_range(8.0..10.0);
    let t = rng.gen_range(2.0..3.0);
    let mut cells = 1 + rng.gen_range(0..=max_decoys);
    if sibling {
        cells = cells.max(2);
    }
    let target = rng.gen_range(0..cells);
    let radii = plate_radii(rng, s, cells, target, sibling);
    let r = radii[target];
    let h = t * rng.gen_range(1.0..1.6);

    let peg_id = format!("peg_{index:04}");
    let plate_id = format!("plate_{index:04}");
    let part1 = peg_graph(&peg_id, r, h);
    let mesh1 = peg_mesh(r, h)?;
    let part2 = plate_graph(&plate_id, s, t, &radii);
    let mesh2 = plate_mesh(s, t, &radii)?;

    let joint = gt_joint(&part1, 0, &part2, hole_node(target), Pose::zero())?;
    let set = JointSet {
        part1: peg_id,
        part2: plate_id,
        joints: vec![joint],
        holes: (false, true),
    };
    Ok(SynthSample {
        template: Template::PegPlate,
        part1,
        mesh1,
        part2,
        mesh2,
        set,
    })
}

/// Edge lengths drawn from three disjoint ranges, then shuffled onto the
/// axes, so every box has a unique largest face but no fixed orientation.
fn box_dims(rng: &mut ChaCha8Rng) -> (Vector3<f64>, usize) {
    let long = rng.gen_range(8.0..11.0);
    let mid = rng.gen_range(5.0..7.0);
    let short = rng.gen_range(2.0..4.0);
    let mut order = [0usize, 1, 2];
    for i in (1..3).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut dims = Vector3::zeros();
    let mut short_axis = 0;
    for (slot, &axis) in order.iter().enumerate() {
        dims[axis] = [long, mid, short][slot];
        if slot == 2 {
            short_axis = axis;
        }
    }
    (dims, short_axis)
}

/// The positive-side face perpendicular to the shortest dimension, i.e. one
/// of the two largest faces.
fn largest_face(short_axis: usize) -> usize {
    match short_axis {
        0 => FACE_RIGHT,
        1 => FACE_BACK,
        _ => FACE_TOP,
    }
}

fn cube_pair_sample(rng: &mut ChaCha8Rng, index: usize) -> Result<SynthSample, Error> {
    let (dims1, short1) = box_dims(rng);
    let area1 = largest_area(dims1, short1);
    // Keep the mated faces visibly different in area so size similarity
    // cannot single out the ground truth pair.
    let (mut dims2, mut short2) = box_dims(rng);
    for _ in 0..64 {
        let area2 = largest_area(dims2, short2);
        if (area1 - area2).abs() > 0.06 * area1.max(area2) {
            break;
        }
        (dims2, short2) = box_dims(rng);
    }

    let id1 = format!("boxa_{index:04}");
    let id2 = format!("boxb_{index:04}");
    let part1 = box_graph(&id1, dims1);
    let mesh1 = box_mesh_grouped(dims1)?;
    let part2 = box_graph(&id2, dims2);
    let mesh2 = box_mesh_grouped(dims2)?;

    let pose = Pose {
        offset: 0.0,
        rotation: 0.0,
        flip: true,
    };
    let joint = gt_joint(&part1, largest_face(short1), &part2, largest_face(short2), pose)?;
    let set = JointSet {
        part1: id1,
        part2: id2,
        joints: vec![joint],
        holes: (false, false),
    };
    Ok(SynthSample {
        template: Template::CubePair,
        part1,
        mesh1,
        part2,
        mesh2,
        set,
    })
}

fn largest_area(dims: Vector3<f64>, short_axis: usize) -> f64 {
    let mut area = 1.0;
    for axis in 0..3 {
        if axis != short_axis {
            area *= dims[axis];
        }
    }
    area
}

fn plate_pair_sample(
    rng: &mut ChaCha8Rng,
    index: usize,
    max_decoys: usize,
) -> Result<SynthSample, Error> {
    let s = rng.gen_range(8.0..10.0);
    let t_base = rng.gen_range(2.0..3.0);
    let t_upper = rng.gen_range(2.0..3.0);
    let cells_base = 1 + rng.gen_range(0..=max_decoys);
    let cells_upper = 1 + rng.gen_range(0..=max_decoys);
    let target_base = rng.gen_range(0..cells_base);
    let target_upper = rng.gen_range(0..cells_upper);
    let radii_base = plate_radii(rng, s, cells_base, target_base, false);
    let mut radii_upper = plate_radii(rng, s, cells_upper, target_upper, false);
    // Bolt holes must agree exactly for the pair to assemble.
    radii_upper[target_upper] = radii_base[target_base];

    let base_id = format!("plta_{index:04}");
    let upper_id = format!("pltb_{index:04}");
    let base = plate_graph(&base_id, s, t_base, &radii_base);
    let base_mesh = plate_mesh(s, t_base, &radii_base)?;
    let upper = plate_graph(&upper_id, s, t_upper, &radii_upper);
    let upper_mesh = plate_mesh(s, t_upper, &radii_upper)?;

    let pose = Pose {
        offset: t_base,
        rotation: 0.0,
        flip: false,
    };
    let joint = gt_joint(
        &upper,
        hole_node(target_upper),
        &base,
        hole_node(target_base),
        pose,
    )?;
    let set = JointSet {
        part1: upper_id,
        part2: base_id,
        joints: vec![joint],
        holes: (true, true),
    };
    Ok(SynthSample {
        template: Template::PlatePair,
        part1: upper,
        mesh1: upper_mesh,
        part2: base,
        mesh2: base_mesh,
        set,
    })
}

// --------------------------------------------------------------- generator

fn validate(cfg: &SynthConfig) -> Result<(), Error> {
    let weights = [
        cfg.peg_plate_weight,
        cfg.cube_pair_weight,
        cfg.plate_pair_weight,
    ];
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "template weights must be nonnegative with a positive sum, got {weights:?}"
        )));
    }
    if !(0.0..=1.0).contains(&cfg.sibling_fraction) {
        return Err(Error::InvalidConfig(format!(
            "sibling fraction {} outside [0, 1]",
            cfg.sibling_fraction
        )));
    }
    if cfg.max_decoy_holes > 5 {
        return Err(Error::InvalidConfig(format!(
            "at most 5 decoy holes supported, got {}",
            cfg.max_decoy_holes
        )));
    }
    Ok(())
}

/// Generate `cfg.num_samples` labeled part pairs. Deterministic in the
/// seed: the same config always produces byte-identical parts and sets.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<SynthSample>, Error> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.peg_plate_weight + cfg.cube_pair_weight + cfg.plate_pair_weight;
    let mut out = Vec::with_capacity(cfg.num_samples);
    for index in 0..cfg.num_samples {
        let draw = rng.gen::<f64>() * total;
        let sample = if draw < cfg.peg_plate_weight {
            let sibling =
                cfg.max_decoy_holes > 0 && rng.gen::<f64>() < cfg.sibling_fraction;
            peg_plate_sample(&mut rng, index, sibling, cfg.max_decoy_holes)?
        } else if draw < cfg.peg_plate_weight + cfg.cube_pair_weight {
            cube_pair_sample(&mut rng, index)?
        } else {
            plate_pair_sample(&mut rng, index, cfg.max_decoy_holes)?
        };
        out.push(sample);
    }
    Ok(out)
}

/// Generate and pack into a corpus, sets named `set_NNNN` by sample index.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus, Error> {
    let mut corpus = Corpus::new();
    for (index, sample) in gen_synthetic(cfg)?.into_iter().enumerate() {
        corpus.insert_part(sample.part1, sample.mesh1)?;
        corpus.insert_part(sample.part2, sample.mesh2)?;
        corpus.push_set(format!("set_{index:04}"), sample.set);
    }
    Ok(corpus)
}

/// Three-part bolt stack: base plate, aligned upper plate, and a peg long
/// enough to pass through both.
pub fn gen_stack(seed: u64) -> Result<StackSample, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.gen_range(8.0..10.0);
    let t_base = rng.gen_range(2.0..3.0);
    let t_upper = rng.gen_range(2.0..3.0);
    let r = labeled_radius(&mut rng, s);
    let h = t_base + t_upper;

    let base = plate_graph("stack_base", s, t_base, &[r]);
    let base_mesh = plate_mesh(s, t_base, &[r])?;
    let upper = plate_graph("stack_mid", s, t_upper, &[r]);
    let upper_mesh = plate_mesh(s, t_upper, &[r])?;
    let peg = peg_graph("stack_peg", r, h);
    let peg_mesh = peg_mesh(r, h)?;

    let plate_joint = gt_joint(
        &upper,
        hole_node(0),
        &base,
        hole_node(0),
        Pose {
            offset: t_base,
            rotation: 0.0,
            flip: false,
        },
    )?;
    let peg_joint = gt_joint(&peg, 0, &base, hole_node(0), Pose::zero())?;
    let sets = vec![
        JointSet {
            part1: "stack_mid".into(),
            part2: "stack_base".into(),
            joints: vec![plate_joint],
            holes: (true, true),
        },
        JointSet {
            part1: "stack_peg".into(),
            part2: "stack_base".into(),
            joints: vec![peg_joint],
            holes: (false, true),
        },
    ];
    Ok(StackSample {
        parts: vec![(base, base_mesh), (upper, upper_mesh), (peg, peg_mesh)],
        sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::{
        axes_collinear, derive_axis, find_siblings, parse_part_graph, serialize_joint_set,
        serialize_part_graph, CollinearTol,
    };
    use crate::geometry::{write_obj, CostConfig, CostEvaluator};
    use std::collections::{BTreeSet, HashMap};

    fn polygon_area(r: f64) -> f64 {
        0.5 * NSEG as f64 * r * r * (2.0 * PI / NSEG as f64).sin()
    }

    fn samples(n: usize, seed: u64) -> Vec<SynthSample> {
        gen_synthetic(&SynthConfig {
            num_samples: n,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = samples(6, 11);
        let b = samples(6, 11);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(serialize_part_graph(&x.part1), serialize_part_graph(&y.part1));
            assert_eq!(serialize_part_graph(&x.part2), serialize_part_graph(&y.part2));
            assert_eq!(serialize_joint_set(&x.set), serialize_joint_set(&y.set));
            assert_eq!(write_obj(&x.mesh1), write_obj(&y.mesh1));
            assert_eq!(write_obj(&x.mesh2), write_obj(&y.mesh2));
        }
    }

    #[test]
    fn graphs_round_trip_and_validate() {
        for sample in samples(12, 3) {
            for part in [&sample.part1, &sample.part2] {
                let back = parse_part_graph(&serialize_part_graph(part)).unwrap();
                assert_eq!(&back, part);
                for (i, node) in part.nodes.iter().enumerate() {
                    assert!(!node.entity_type.is_nurbs());
                    let axis = derive_axis(part, i).unwrap();
                    assert!((axis.direction.norm() - 1.0).abs() < 1e-12);
                }
            }
            sample
                .set
                .validate_against(&sample.part1, &sample.part2)
                .unwrap();
        }
    }

    /// Every directed edge must appear exactly once, and its reverse exactly
    /// once: a closed orientable surface with no cracks or T-junctions.
    fn assert_watertight(mesh: &TriMesh, what: &str) {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in mesh.triangles() {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            assert_eq!(count, 1, "{what}: repeated edge ({a}, {b})");
            assert_eq!(
                directed.get(&(b, a)),
                Some(&1),
                "{what}: unmatched edge ({a}, {b})"
            );
        }
    }

    #[test]
    fn meshes_are_watertight_and_outward() {
        for (i, sample) in samples(10, 7).into_iter().enumerate() {
            for (mesh, part) in [(&sample.mesh1, &sample.part1), (&sample.mesh2, &sample.part2)] {
                assert_watertight(mesh, &part.part_id);
                assert!(
                    mesh.signed_volume() > 0.0,
                    "sample {i} {}: inward orientation",
                    part.part_id
                );
            }
        }
    }

    #[test]
    fn mesh_volumes_match_polygonal_closed_forms() {
        let peg = peg_mesh(2.3, 4.1).unwrap();
        let expected = polygon_area(2.3) * 4.1;
        assert!((peg.signed_volume() - expected).abs() <= 1e-9 * expected);

        let radii = [2.4, 1.1, 0.9];
        let (s, t) = (9.0, 2.5);
        let plate = plate_mesh(s, t, &radii).unwrap();
        let holes: f64 = radii.iter().map(|&r| polygon_area(r)).sum();
        let expected = (3.0 * s * s - holes) * t;
        assert!((plate.signed_volume() - expected).abs() <= 1e-9 * expected);

        let b = box_mesh_grouped(Vector3::new(2.0, 3.0, 4.0)).unwrap();
        assert!((b.signed_volume() - 24.0).abs() <= 1e-9 * 24.0);
    }

    #[test]
    fn ideal_physical_volume_is_close_to_mesh_volume() {
        for sample in samples(8, 5) {
            for (part, mesh) in [(&sample.part1, &sample.mesh1), (&sample.part2, &sample.mesh2)] {
                let ideal = part.physical.unwrap().volume;
                let rel = (ideal - mesh.signed_volume()).abs() / ideal;
                assert!(rel < 0.03, "{}: {rel}", part.part_id);
            }
        }
    }

    #[test]
    fn groups_partition_all_triangles() {
        let radii = [2.2, 1.0];
        let plate = plate_mesh(8.5, 2.0, &radii).unwrap();
        let mut seen = BTreeSet::new();
        for (_, tris) in plate.groups() {
            for &t in tris {
                assert!(seen.insert(t), "triangle {t} in two groups");
            }
        }
        assert_eq!(seen.len(), plate.num_triangles());
        // Hole walls carry their graph node ids.
        assert!(plate.groups().contains_key(&hole_node(1)));
    }

    #[test]
    fn ground_truth_axes_are_collinear() {
        let tol = CollinearTol {
            angle: 1e-9,
            distance: 1e-9,
        };
        for sample in samples(12, 19) {
            for joint in &sample.set.joints {
                let a1 = derive_axis(&sample.part1, joint.u).unwrap();
                let a2 = derive_axis(&sample.part2, joint.v).unwrap();
                let moved = joint.transform.apply_axis(&a1);
                assert!(axes_collinear(&moved, &a2, &tol));
            }
        }
    }

    /// At the ground-truth pose the pair touches without intersecting.
    #[test]
    fn ground_truth_pose_is_clean() {
        let cfg = SynthConfig {
            num_samples: 40,
            seed: 23,
            ..SynthConfig::default()
        };
        let all = gen_synthetic(&cfg).unwrap();
        for wanted in [Template::PegPlate, Template::CubePair, Template::PlatePair] {
            let sample = all
                .iter()
                .find(|s| s.template == wanted)
                .expect("every template appears in 40 draws");
            let cost_cfg = CostConfig {
                surface_samples: 1024,
                volume_samples: 1024,
                seed: 5,
                ..CostConfig::default()
            };
            let eval = CostEvaluator::new(
                &sample.mesh1,
                std::slice::from_ref(&sample.mesh2),
                &cost_cfg,
            )
            .unwrap();
            let est = eval.evaluate(&sample.set.joints[0].transform);
            assert!(
                est.c_overlap < 0.02,
                "{wanted:?}: overlap {}",
                est.c_overlap
            );
            assert!(
                est.c_contact > 0.03,
                "{wanted:?}: contact {}",
                est.c_contact
            );
        }
    }

    #[test]
    fn sibling_plates_are_flagged_and_clean_ones_are_not() {
        let sibling = peg_plate_sample(&mut ChaCha8Rng::seed_from_u64(1), 0, true, 2).unwrap();
        let labeled = BTreeSet::from([sibling.set.joints[0].v]);
        assert!(!find_siblings(&sibling.part2, &labeled).is_empty());

        let clean = peg_plate_sample(&mut ChaCha8Rng::seed_from_u64(1), 0, false, 2).unwrap();
        let labeled = BTreeSet::from([clean.set.joints[0].v]);
        assert!(find_siblings(&clean.part2, &labeled).is_empty());
        assert!(find_siblings(&clean.part1, &BTreeSet::from([0])).is_empty());
    }

    #[test]
    fn hole_flags_follow_templates() {
        for sample in samples(20, 2) {
            let expected = match sample.template {
                Template::PegPlate => (false, true),
                Template::CubePair => (false, false),
                Template::PlatePair => (true, true),
            };
            assert_eq!(sample.set.holes, expected);
        }
    }

    #[test]
    fn stack_parts_share_one_axis() {
        let stack = gen_stack(31).unwrap();
        assert_eq!(stack.parts.len(), 3);
        assert_eq!(stack.sets.len(), 2);
        let (base, _) = &stack.parts[0];
        let (upper, _) = &stack.parts[1];
        let (peg, _) = &stack.parts[2];
        stack.sets[0].validate_against(upper, base).unwrap();
        stack.sets[1].validate_against(peg, base).unwrap();
        // Peg length spans both plates.
        let t_total = stack.sets[0].joints[0].offset + upper.bbox_max.z;
        assert!((peg.bbox_max.z - t_total).abs() < 1e-12);

        let tol = CollinearTol {
            angle: 1e-9,
            distance: 1e-9,
        };
        let base_axis = derive_axis(base, hole_node(0)).unwrap();
        let upper_axis = stack.sets[0].joints[0]
            .transform
            .apply_axis(&derive_axis(upper, hole_node(0)).unwrap());
        let peg_axis = stack.sets[1].joints[0]
            .transform
            .apply_axis(&derive_axis(peg, 0).unwrap());
        assert!(axes_collinear(&base_axis, &upper_axis, &tol));
        assert!(axes_collinear(&base_axis, &peg_axis, &tol));
    }

    #[test]
    fn corpus_packing_keeps_every_sample() {
        let cfg = SynthConfig {
            num_samples: 9,
            seed: 4,
            ..SynthConfig::default()
        };
        let corpus = synth_corpus(&cfg).unwrap();
        assert_eq!(corpus.sets.len(), 9);
        assert_eq!(corpus.parts.len(), 18);
        for (_, set) in &corpus.sets {
            corpus.part(&set.part1).unwrap();
            corpus.mesh(&set.part2).unwrap();
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let zero = SynthConfig {
            peg_plate_weight: 0.0,
            cube_pair_weight: 0.0,
            plate_pair_weight: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(gen_synthetic(&zero), Err(Error::InvalidConfig(_))));
        let frac = SynthConfig {
            sibling_fraction: 1.5,
            ..SynthConfig::default()
        };
        assert!(matches!(gen_synthetic(&frac), Err(Error::InvalidConfig(_))));
        let holes = SynthConfig {
            max_decoy_holes: 9,
            ..SynthConfig::default()
        };
        assert!(matches!(gen_synthetic(&holes), Err(Error::InvalidConfig(_))));
    }
}
