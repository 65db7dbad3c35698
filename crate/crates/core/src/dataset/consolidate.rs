//! Regrouping of raw labeled joints into one joint set per unordered pair
//! of identical-by-hash parts.

use std::collections::BTreeMap;

use super::{part_hash, Error};
use crate::brep::{Joint, JointSet, PartGraph};

/// Two joints with equal entity indices whose transforms differ by at most
/// this much per matrix entry are the same joint.
pub const TRANSFORM_DEDUP_TOL: f64 = 1e-6;

/// One labeled joint as it arrives from an input file, before grouping.
#[derive(Debug, Clone)]
pub struct JointRecord {
    pub part1: String,
    pub part2: String,
    pub joint: Joint,
    pub holes: (bool, bool),
}

/// Flatten loaded joint sets back into raw records for regrouping.
pub fn flatten_sets<'a, I: IntoIterator<Item = &'a JointSet>>(sets: I) -> Vec<JointRecord> {
    let mut out = Vec::new();
    for set in sets {
        for joint in &set.joints {
            out.push(JointRecord {
                part1: set.part1.clone(),
                part2: set.part2.clone(),
                joint: joint.clone(),
                holes: set.holes,
            });
        }
    }
    out
}

/// Reverse the roles of the two parts in a joint: part 2 posed in part 1's
/// frame. Under the axis-alignment convention the flip state is preserved,
/// and offset and rotation change sign exactly when the axes are not
/// flipped.
pub(crate) fn swap_joint(j: &Joint) -> Joint {
    Joint {
        u: j.v,
        v: j.u,
        transform: j.transform.inverse(),
        offset: if j.flip { j.offset } else { -j.offset },
        rotation: if j.flip { j.rotation } else { -j.rotation },
        flip: j.flip,
    }
}

fn joint_order(a: &Joint, b: &Joint) -> std::cmp::Ordering {
    let ma = a.transform.to_mat16();
    let mb = b.transform.to_mat16();
    a.u.cmp(&b.u)
        .then(a.v.cmp(&b.v))
        .then_with(|| {
            ma.iter()
                .zip(&mb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .then(a.offset.total_cmp(&b.offset))
        .then(a.rotation.total_cmp(&b.rotation))
        .then(a.flip.cmp(&b.flip))
}

fn same_joint(a: &Joint, b: &Joint) -> bool {
    if a.u != b.u || a.v != b.v {
        return false;
    }
    let ma = a.transform.to_mat16();
    let mb = b.transform.to_mat16();
    ma.iter()
        .zip(&mb)
        .all(|(x, y)| (x - y).abs() <= TRANSFORM_DEDUP_TOL)
}

struct Group {
    joints: Vec<Joint>,
    holes: (bool, bool),
}

/// Group raw joints by the unordered pair of part content hashes, orient
/// each group so the smaller hash is part 1, and deduplicate joints whose
/// entity pair and transform agree within [`TRANSFORM_DEDUP_TOL`]. Each
/// output set names one representative part per hash (the lexicographically
/// smallest part id), and sets are emitted sorted by their hash pair, so
/// the result does not depend on input order.
pub fn consolidate(
    parts: &BTreeMap<String, PartGraph>,
    records: &[JointRecord],
) -> Result<Vec<JointSet>, Error> {
    let mut hashes: BTreeMap<&str, String> = BTreeMap::new();
    for record in records {
        for id in [&record.part1, &record.part2] {
            if !hashes.contains_key(id.as_str()) {
                let part = parts
                    .get(id)
                    .ok_or_else(|| Error::UnknownPart(id.clone()))?;
                hashes.insert(id, part_hash(part)?);
            }
        }
    }
    // One representative part id per hash.
    let mut rep: BTreeMap<&str, &str> = BTreeMap::new();
    for (&id, hash) in &hashes {
        rep.entry(hash)
            .and_modify(|r| {
                if id < *r {
                    *r = id;
                }
            })
            .or_insert(id);
    }

    let mut groups: BTreeMap<(String, String), Group> = BTreeMap::new();
    for record in records {
        let h1 = &hashes[record.part1.as_str()];
        let h2 = &hashes[record.part2.as_str()];
        let (key, joint, holes) = if h2 < h1 {
            (
                (h2.clone(), h1.clone()),
                swap_joint(&record.joint),
                (record.holes.1, record.holes.0),
            )
        } else if h1 < h2 {
            (
                (h1.clone(), h2.clone()),
                record.joint.clone(),
                record.holes,
            )
        } else {
            // Identical parts on both sides: orient by the smaller joint
            // encoding so opposite-order duplicates line up.
            let swapped = swap_joint(&record.joint);
            if joint_order(&swapped, &record.joint).is_lt() {
                (
                    (h1.clone(), h2.clone()),
                    swapped,
                    (record.holes.1, record.holes.0),
                )
            } else {
                (
                    (h1.clone(), h2.clone()),
                    record.joint.clone(),
                    record.holes,
                )
            }
        };
        let group = groups.entry(key).or_insert(Group {
            joints: Vec::new(),
            holes: (false, false),
        });
        group.joints.push(joint);
        group.holes.0 |= holes.0;
        group.holes.1 |= holes.1;
    }

    let mut out = Vec::with_capacity(groups.len());
    for ((h1, h2), mut group) in groups {
        group.joints.sort_by(joint_order);
        // Near-duplicates need not sort adjacently (a sub-tolerance nudge in
        // an early matrix entry can leapfrog a larger difference in a later
        // one), so compare each candidate against everything already kept.
        // The canonical sort above makes the outcome input-order invariant.
        let mut joints: Vec<Joint> = Vec::with_capacity(group.joints.len());
        for joint in group.joints {
            if !joints.iter().any(|kept| same_joint(kept, &joint)) {
                joints.push(joint);
            }
        }
        out.push(JointSet {
            part1: rep[h1.as_str()].to_string(),
            part2: rep[h2.as_str()].to_string(),
            joints,
            holes: group.holes,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::{parse_part_graph, AxisSpec};
    use crate::geometry::{transform_from_axes, Pose, RigidTransform};
    use nalgebra::{Point3, Vector3};

    fn part(id: &str, area: f64) -> PartGraph {
        parse_part_graph(&format!(
            r#"{{
                "part_id": "{id}",
                "bbox": [[0,0,0],[2,2,2]],
                "mesh": "{id}.obj",
                "nodes": [
                    {{"id": 0, "kind": "face", "type": "Cylinder", "reversed": false,
                     "length": 0.0, "area": {area}, "dihedral": 0.0, "convexity": null,
                     "axis_origin": [0,0,0], "axis_dir": [0,0,1], "radius": 1.0}},
                    {{"id": 1, "kind": "face", "type": "Plane", "reversed": false,
                     "length": 0.0, "area": 4.0, "dihedral": 0.0, "convexity": null,
                     "axis_origin": [0,0,1], "axis_dir": [0,0,1], "radius": null}}
                ],
                "links": [{{"s":0,"t":1}}],
                "physical": {{"volume": {area}, "moi": [0.4, 0.4, 0.5]}}
            }}"#
        ))
        .unwrap()
    }

    fn joint(u: usize, v: usize, tz: f64) -> Joint {
        Joint {
            u,
            v,
            transform: RigidTransform {
                rot: nalgebra::Rotation3::identity(),
                trans: Vector3::new(0.0, 0.0, tz),
            },
            offset: tz,
            rotation: 0.0,
            flip: false,
        }
    }

    fn corpus() -> (BTreeMap<String, PartGraph>, Vec<JointRecord>) {
        let mut parts = BTreeMap::new();
        for (id, area) in [("a1", 6.0), ("a2", 6.0), ("b", 9.0), ("c", 12.0)] {
            parts.insert(id.to_string(), part(id, area));
        }
        let records = vec![
            JointRecord {
                part1: "a1".into(),
                part2: "b".into(),
                joint: joint(0, 1, 1.0),
                holes: (true, false),
            },
            // Same physical joint, duplicate part instance.
            JointRecord {
                part1: "a2".into(),
                part2: "b".into(),
                joint: joint(0, 1, 1.0),
                holes: (false, false),
            },
            // Distinct joint between the same pair.
            JointRecord {
                part1: "a1".into(),
                part2: "b".into(),
                joint: joint(1, 0, 2.0),
                holes: (false, true),
            },
            JointRecord {
                part1: "b".into(),
                part2: "c".into(),
                joint: joint(0, 0, 3.0),
                holes: (false, false),
            },
        ];
        (parts, records)
    }

    #[test]
    fn duplicates_collapse_and_sets_merge() {
        let (parts, records) = corpus();
        let sets = consolidate(&parts, &records).unwrap();
        assert_eq!(sets.len(), 2);
        let ab = sets
            .iter()
            .find(|s| s.joints.len() == 2)
            .expect("merged a-b set");
        // a1 and a2 hash identically; the representative is a1.
        assert!(ab.part1 == "a1" || ab.part2 == "a1");
        assert!(!sets.iter().any(|s| s.part1 == "a2" || s.part2 == "a2"));
        // Hole flags survive the merge by union.
        let a_side = if ab.part1 == "a1" { ab.holes.0 } else { ab.holes.1 };
        let b_side = if ab.part1 == "a1" { ab.holes.1 } else { ab.holes.0 };
        assert!(a_side && b_side);
    }

    #[test]
    fn input_order_is_irrelevant() {
        let (parts, mut records) = corpus();
        let baseline = consolidate(&parts, &records).unwrap();
        records.reverse();
        assert_eq!(consolidate(&parts, &records).unwrap(), baseline);
        records.swap(0, 2);
        assert_eq!(consolidate(&parts, &records).unwrap(), baseline);
    }

    #[test]
    fn consolidation_is_idempotent() {
        let (parts, records) = corpus();
        let once = consolidate(&parts, &records).unwrap();
        let again = consolidate(&parts, &flatten_sets(&once)).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn opposite_order_records_are_the_same_joint() {
        let mut parts = BTreeMap::new();
        parts.insert("p".to_string(), part("p", 6.0));
        parts.insert("q".to_string(), part("q", 9.0));
        let a1 = AxisSpec::new(Point3::new(0.5, 0.0, 0.0), Vector3::new(0.3, 1.0, 0.2)).unwrap();
        let a2 = AxisSpec::new(Point3::new(0.0, 2.0, 1.0), Vector3::new(1.0, -0.4, 0.5)).unwrap();
        for flip in [false, true] {
            let pose = Pose {
                offset: 0.8,
                rotation: 0.6,
                flip,
            };
            let fwd = transform_from_axes(&a1, &a2, pose).unwrap();
            let fwd_joint = Joint {
                u: 0,
                v: 1,
                transform: fwd,
                offset: pose.offset,
                rotation: pose.rotation,
                flip,
            };
            let records = vec![
                JointRecord {
                    part1: "p".into(),
                    part2: "q".into(),
                    joint: fwd_joint.clone(),
                    holes: (false, false),
                },
                JointRecord {
                    part1: "q".into(),
                    part2: "p".into(),
                    joint: swap_joint(&fwd_joint),
                    holes: (false, false),
                },
            ];
            let sets = consolidate(&parts, &records).unwrap();
            assert_eq!(sets.len(), 1);
            assert_eq!(sets[0].joints.len(), 1, "flip={flip}");
        }
    }

    #[test]
    fn swapped_pose_parameters_rebuild_the_inverse_transform() {
        // The sign rules in swap_joint must agree with transform_from_axes:
        // building the reversed joint from the swapped parameters gives the
        // inverse transform.
        let axes = [
            AxisSpec::new(Point3::new(1.0, -2.0, 0.5), Vector3::new(0.2, 0.9, -0.1)).unwrap(),
            AxisSpec::new(Point3::new(0.0, 3.0, 1.0), Vector3::new(1.0, 0.1, 0.4)).unwrap(),
            AxisSpec::new(Point3::new(-1.0, 0.0, 2.0), Vector3::new(0.0, -0.3, 1.0)).unwrap(),
        ];
        for (i, a1) in axes.iter().enumerate() {
            for (j, a2) in axes.iter().enumerate() {
                if i == j {
                    continue;
                }
                for flip in [false, true] {
                    let pose = Pose {
                        offset: 1.3,
                        rotation: -0.7,
                        flip,
                    };
                    let fwd = transform_from_axes(a1, a2, pose).unwrap();
                    let swapped = swap_joint(&Joint {
                        u: 0,
                        v: 0,
                        transform: fwd,
                        offset: pose.offset,
                        rotation: pose.rotation,
                        flip,
                    });
                    let rebuilt = transform_from_axes(
                        a2,
                        a1,
                        Pose {
                            offset: swapped.offset,
                            rotation: swapped.rotation,
                            flip: swapped.flip,
                        },
                    )
                    .unwrap();
                    let inv = fwd.inverse();
                    let diff: f64 = rebuilt
                        .to_mat16()
                        .iter()
                        .zip(inv.to_mat16())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    assert!(diff < 1e-9, "axes {i},{j} flip={flip}: diff {diff:.2e}");
                }
            }
        }
    }

    #[test]
    fn near_duplicate_transforms_collapse() {
        let mut parts = BTreeMap::new();
        parts.insert("p".to_string(), part("p", 6.0));
        parts.insert("q".to_string(), part("q", 9.0));
        let mut wiggled = joint(0, 1, 1.0);
        wiggled.transform.trans.x += 0.4 * TRANSFORM_DEDUP_TOL;
        let far = joint(0, 1, 1.0 + 100.0 * TRANSFORM_DEDUP_TOL);
        let records: Vec<JointRecord> = [joint(0, 1, 1.0), wiggled, far]
            .into_iter()
            .map(|j| JointRecord {
                part1: "p".into(),
                part2: "q".into(),
                joint: j,
                holes: (false, false),
            })
            .collect();
        let sets = consolidate(&parts, &records).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].joints.len(), 2);
    }

    #[test]
    fn unknown_part_is_an_error() {
        let parts = BTreeMap::new();
        let records = vec![JointRecord {
            part1: "ghost".into(),
            part2: "ghost".into(),
            joint: joint(0, 0, 0.0),
            holes: (false, false),
        }];
        assert!(matches!(
            consolidate(&parts, &records),
            Err(Error::UnknownPart(id)) if id == "ghost"
        ));
    }
}
