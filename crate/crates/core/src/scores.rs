//! Dense n × m score matrices over part-pair entity combinations, with
//! invalid (NURBS) cells masked out of ranking.

use crate::brep::PartGraph;

/// Scores for every (entity of part 1, entity of part 2) cell, row-major.
/// Masked cells are never returned from ranking queries.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    n: usize,
    m: usize,
    scores: Vec<f64>,
    valid: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(n: usize, m: usize, scores: Vec<f64>, valid: Vec<bool>) -> Self {
        assert_eq!(scores.len(), n * m, "score buffer must be n*m");
        assert_eq!(valid.len(), n * m, "mask buffer must be n*m");
        Self { n, m, scores, valid }
    }

    /// Wraps raw scores, masking rows/columns of NURBS entities.
    pub fn from_parts(g1: &PartGraph, g2: &PartGraph, scores: Vec<f64>) -> Self {
        let (n, m) = (g1.num_nodes(), g2.num_nodes());
        assert_eq!(scores.len(), n * m, "score buffer must be n*m");
        let row_ok: Vec<bool> = g1.nodes.iter().map(|e| !e.entity_type.is_nurbs()).collect();
        let col_ok: Vec<bool> = g2.nodes.iter().map(|e| !e.entity_type.is_nurbs()).collect();
        let mut valid = vec![true; n * m];
        for u in 0..n {
            for v in 0..m {
                valid[u * m + v] = row_ok[u] && col_ok[v];
            }
        }
        Self { n, m, scores, valid }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.scores[u * self.m + v]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[u * self.m + v]
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Highest-score valid cell, row-major order breaking ties.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        self.top_k(1).first().map(|&(u, v, _)| (u, v))
    }

    /// Up to `k` valid cells in descending score order; equal scores rank in
    /// row-major (u, v) order.
    pub fn top_k(&self, k: usize) -> Vec<(usize, usize, f64)> {
        let mut cells: Vec<(usize, usize, f64)> = (0..self.n * self.m)
            .filter(|&i| self.valid[i])
            .map(|i| (i / self.m, i % self.m, self.scores[i]))
            .collect();
        cells.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        cells.truncate(k);
        cells
    }
}
