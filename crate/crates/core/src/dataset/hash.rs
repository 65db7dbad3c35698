//! Content hashing of parts. Two parts hash equal exactly when their
//! truncated geometric summaries agree, which is how consolidation decides
//! that differently named parts are the same component.

use super::Error;
use crate::brep::PartGraph;

/// FNV-1a, 64 bit. Stable across platforms and releases, unlike the
/// standard library's default hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// `value` printed with `dp` decimal places, extra digits truncated rather
/// than rounded. The value is first rendered with five guard digits so that
/// binary representations of decimal inputs (2.9 is stored as 2.8999…) do
/// not truncate down a digit.
pub(crate) fn trunc_token(value: f64, dp: usize) -> String {
    let full = format!("{value:.prec$}", prec = dp + 5);
    match full.find('.') {
        Some(dot) => full[..dot + 1 + dp].to_string(),
        // inf or NaN: kept verbatim.
        None => full,
    }
}

/// Content hash over the part's volume (1 dp), principal moments of inertia
/// (3 dp), and each entity's type name, area, and length (1 dp), joined in
/// vertex order. Returned as 16 hex digits.
pub fn part_hash(part: &PartGraph) -> Result<String, Error> {
    let phys = part
        .physical
        .ok_or_else(|| Error::MissingPhysicalProps(part.part_id.clone()))?;
    let mut tokens = Vec::with_capacity(4 + 3 * part.nodes.len());
    tokens.push(trunc_token(phys.volume, 1));
    for m in phys.moments {
        tokens.push(trunc_token(m, 3));
    }
    for node in &part.nodes {
        tokens.push(node.entity_type.name().to_string());
        tokens.push(trunc_token(node.area, 1));
        tokens.push(trunc_token(node.length, 1));
    }
    Ok(format!("{:016x}", fnv1a(tokens.join("|").as_bytes())))
}
