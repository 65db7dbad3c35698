//! Deterministic Monte-Carlo point sampling on and inside triangle meshes.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sdf::SignedDistanceField;
use super::{Error, TriMesh};

/// Points drawn uniformly by area over the surface, tagged with the index of
/// the triangle each point landed on.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Vec<(Point3<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_surface_with(mesh, count, &mut rng)
}

pub(crate) fn sample_surface_with(
    mesh: &TriMesh,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(Point3<f64>, usize)> {
    let areas = mesh.triangle_areas();
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut running = 0.0;
    for &a in areas {
        running += a;
        cumulative.push(running);
    }
    let total = running;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.gen_range(0.0..total);
        let tri = cumulative.partition_point(|&c| c <= x).min(areas.len() - 1);
        let [a, b, c] = mesh.triangle_points(tri);
        // Square-root warp keeps the density uniform over the triangle.
        let s = rng.gen::<f64>().sqrt();
        let t = rng.gen::<f64>();
        let p = a + s * (1.0 - t) * (b - a) + s * t * (c - a);
        out.push((p, tri));
    }
    out
}

/// Points drawn uniformly inside the mesh by rejection against its bounding
/// box. Returns the points and the observed acceptance ratio; fails when the
/// ratio collapses (flat or near-flat input).
pub fn sample_volume(
    mesh: &TriMesh,
    count: usize,
    seed: u64,
) -> Result<(Vec<Point3<f64>>, f64), Error> {
    let sdf = SignedDistanceField::new(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_volume_with(mesh, &sdf, count, &mut rng)
}

pub(crate) fn sample_volume_with(
    mesh: &TriMesh,
    sdf: &SignedDistanceField,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Point3<f64>>, f64), Error> {
    let (lo, hi) = mesh.bbox();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        attempts += 1;
        if attempts >= 10_000 && (out.len() as f64) < 1e-4 * attempts as f64 {
            return Err(Error::DegenerateMesh(format!(
                "volume rejection acceptance below 1e-4 ({} of {attempts})",
                out.len()
            )));
        }
        let p = Point3::new(
            gen_coord(rng, lo.x, hi.x),
            gen_coord(rng, lo.y, hi.y),
            gen_coord(rng, lo.z, hi.z),
        );
        if sdf.inside(p) {
            out.push(p);
        }
    }
    Ok((out, count as f64 / attempts as f64))
}

fn gen_coord(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}
