//! Dense joint connectivity between two part graphs: every (part1 entity,
//! part2 entity) pair is a candidate, enumerated row-major.

use super::{Error, PartGraph};

/// Index over the n × m candidate space. Edge `k` maps to
/// `(k / m, k % m)`: part 1 outer, part 2 inner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectivityIndex {
    pub n: usize,
    pub m: usize,
}

impl ConnectivityIndex {
    pub fn num_edges(&self) -> usize {
        self.n * self.m
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.num_edges());
        (k / self.m, k % self.m)
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.n && v < self.m);
        u * self.m + v
    }
}

pub fn build_connectivity(g1: &PartGraph, g2: &PartGraph) -> Result<ConnectivityIndex, Error> {
    if g1.num_nodes() == 0 || g2.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(ConnectivityIndex {
        n: g1.num_nodes(),
        m: g2.num_nodes(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_enumeration() {
        let idx = ConnectivityIndex { n: 3, m: 4 };
        assert_eq!(idx.num_edges(), 12);
        assert_eq!(idx.pair(7), (1, 3));
        assert_eq!(idx.index(1, 3), 7);
    }

    #[test]
    fn minimal_and_large() {
        let one = ConnectivityIndex { n: 1, m: 1 };
        assert_eq!(one.num_edges(), 1);
        assert_eq!(one.pair(0), (0, 0));
        let big = ConnectivityIndex { n: 50, m: 40 };
        assert_eq!(big.num_edges(), 2000);
    }

    #[test]
    fn mapping_is_a_bijection() {
        let idx = ConnectivityIndex { n: 5, m: 7 };
        let mut seen = vec![false; idx.num_edges()];
        for k in 0..idx.num_edges() {
            let (u, v) = idx.pair(k);
            assert!(u < idx.n && v < idx.m);
            assert_eq!(idx.index(u, v), k);
            assert!(!seen[k]);
            seen[k] = true;
        }
        assert!(seen.into_iter().all(|s| s));
    }
}
