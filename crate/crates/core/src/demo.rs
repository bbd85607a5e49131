//! Preset groups used by the examples, the CLI defaults and the test suites.

use crate::geometry::HPoint;
use crate::group::{Disk, DiskPair, SchottkyGroup};

fn pair(rep: (f64, f64), att: (f64, f64)) -> DiskPair {
    DiskPair {
        repelling: Disk { center: rep.0, radius: rep.1 },
        attracting: Disk { center: att.0, radius: att.1 },
    }
}

fn build(disks: Vec<DiskPair>, extended: bool) -> SchottkyGroup {
    SchottkyGroup::from_disk_pairs(disks, HPoint::origin(), extended).expect("preset disks are valid")
}

/// Two hyperbolic generators with well separated disks.
pub fn standard_group() -> SchottkyGroup {
    build(vec![pair((-2.5, 1.0), (2.5, 1.0)), pair((-0.9, 0.35), (0.9, 0.35))], false)
}

/// A second two-generator group with a different disk layout.
pub fn second_group() -> SchottkyGroup {
    build(vec![pair((-3.0, 0.6), (1.8, 0.9)), pair((-1.2, 0.4), (4.5, 1.2))], false)
}

/// Four hyperbolic generators; pairs (1, 2) and (3, 4) seed the nested families.
pub fn ambient_four() -> SchottkyGroup {
    build(
        vec![
            pair((-6.0, 0.8), (-2.0, 0.8)),
            pair((-4.6, 0.35), (-3.4, 0.35)),
            pair((2.0, 0.8), (6.0, 0.8)),
            pair((3.4, 0.35), (4.6, 0.35)),
        ],
        false,
    )
}

/// A parabolic generator `z ↦ z / (z + 1)` fixing 0 with tangent unit disks,
/// plus one hyperbolic generator far from the cusp.
pub fn extended_group() -> SchottkyGroup {
    build(vec![pair((-1.0, 1.0), (1.0, 1.0)), pair((-4.0, 0.8), (4.0, 0.8))], true)
}
