//! Model parameters, the encoder forward pass, and pairwise logit scoring.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jf_autodiff::{checkpoint, Tape, Tensor, Var};

use crate::brep::{featurize, EntityKind, FeatureMask, PartGraph};
use crate::scores::ScoreMatrix;

use super::Error;

pub const DEFAULT_WIDTH: usize = 384;
const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    /// Hidden width everywhere; 384 puts the default model at ~1.34M params.
    pub width: usize,
    pub feature_mask: FeatureMask,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            width: DEFAULT_WIDTH,
            feature_mask: FeatureMask::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Mlp2 {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl Mlp2 {
    fn init(inputs: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: Tensor::glorot_uniform(inputs, width, rng),
            b1: Tensor::zeros(vec![width]),
            w2: Tensor::glorot_uniform(width, width, rng),
            b2: Tensor::zeros(vec![width]),
        }
    }
}

#[derive(Debug, Clone)]
struct Gat {
    ws: Tensor,
    wt: Tensor,
    att: Tensor,
}

impl Gat {
    fn init(width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ws: Tensor::glorot_uniform(width, width, rng),
            wt: Tensor::glorot_uniform(width, width, rng),
            att: Tensor::glorot_uniform(width, 1, rng),
        }
    }
}

#[derive(Debug, Clone)]
struct Mlp3 {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    w3: Tensor,
    b3: Tensor,
}

impl Mlp3 {
    fn init(inputs: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: Tensor::glorot_uniform(inputs, width, rng),
            b1: Tensor::zeros(vec![width]),
            w2: Tensor::glorot_uniform(width, width, rng),
            b2: Tensor::zeros(vec![width]),
            w3: Tensor::glorot_uniform(width, 1, rng),
            b3: Tensor::zeros(vec![1]),
        }
    }
}

/// All trainable tensors. Face and edge vertices get separate input MLPs;
/// the attention layers and head are shared between both parts.
#[derive(Debug, Clone)]
pub struct ModelParams {
    face_mlp: Mlp2,
    edge_mlp: Mlp2,
    gat1: Gat,
    gat2: Gat,
    head: Mlp3,
}

impl ModelParams {
    fn init(feature_width: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            face_mlp: Mlp2::init(feature_width, width, &mut rng),
            edge_mlp: Mlp2::init(feature_width, width, &mut rng),
            gat1: Gat::init(width, &mut rng),
            gat2: Gat::init(width, &mut rng),
            head: Mlp3::init(2 * width, width, &mut rng),
        }
    }

    /// Canonical (name, tensor) listing; ordering is the checkpoint and
    /// optimizer contract.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("face_mlp.w1", &self.face_mlp.w1),
            ("face_mlp.b1", &self.face_mlp.b1),
            ("face_mlp.w2", &self.face_mlp.w2),
            ("face_mlp.b2", &self.face_mlp.b2),
            ("edge_mlp.w1", &self.edge_mlp.w1),
            ("edge_mlp.b1", &self.edge_mlp.b1),
            ("edge_mlp.w2", &self.edge_mlp.w2),
            ("edge_mlp.b2", &self.edge_mlp.b2),
            ("gat1.ws", &self.gat1.ws),
            ("gat1.wt", &self.gat1.wt),
            ("gat1.att", &self.gat1.att),
            ("gat2.ws", &self.gat2.ws),
            ("gat2.wt", &self.gat2.wt),
            ("gat2.att", &self.gat2.att),
            ("head.w1", &self.head.w1),
            ("head.b1", &self.head.b1),
            ("head.w2", &self.head.w2),
            ("head.b2", &self.head.b2),
            ("head.w3", &self.head.w3),
            ("head.b3", &self.head.b3),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("face_mlp.w1", &mut self.face_mlp.w1),
            ("face_mlp.b1", &mut self.face_mlp.b1),
            ("face_mlp.w2", &mut self.face_mlp.w2),
            ("face_mlp.b2", &mut self.face_mlp.b2),
            ("edge_mlp.w1", &mut self.edge_mlp.w1),
            ("edge_mlp.b1", &mut self.edge_mlp.b1),
            ("edge_mlp.w2", &mut self.edge_mlp.w2),
            ("edge_mlp.b2", &mut self.edge_mlp.b2),
            ("gat1.ws", &mut self.gat1.ws),
            ("gat1.wt", &mut self.gat1.wt),
            ("gat1.att", &mut self.gat1.att),
            ("gat2.ws", &mut self.gat2.ws),
            ("gat2.wt", &mut self.gat2.wt),
            ("gat2.att", &mut self.gat2.att),
            ("head.w1", &mut self.head.w1),
            ("head.b1", &mut self.head.b1),
            ("head.w2", &mut self.head.w2),
            ("head.b2", &mut self.head.b2),
            ("head.w3", &mut self.head.w3),
            ("head.b3", &mut self.head.b3),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Tape handles for one forward pass, in the `named` ordering.
pub(crate) struct BoundParams {
    pub vars: Vec<Var>,
}

impl BoundParams {
    fn var(&self, name: &str, params: &ModelParams) -> Var {
        let idx = params
            .named()
            .iter()
            .position(|(n, _)| *n == name)
            .expect("known tensor name");
        self.vars[idx]
    }
}

pub struct Model {
    pub cfg: NetworkConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(cfg: NetworkConfig) -> Self {
        let params = ModelParams::init(cfg.feature_mask.width(), cfg.width, cfg.seed);
        Self { cfg, params }
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .params
            .named()
            .iter()
            .map(|(_, t)| tape.leaf((*t).clone()))
            .collect();
        BoundParams { vars }
    }

    /// Embeds every vertex of one part: per-kind input MLPs, then two
    /// attention layers over the adjacency (with self-loops).
    pub(crate) fn encode(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        part: &PartGraph,
    ) -> Result<Var, Error> {
        let n = part.num_nodes();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let feats = featurize(part, self.cfg.feature_mask);
        let x = tape.leaf(feats);

        let face_idx: Vec<usize> = (0..n)
            .filter(|&i| part.nodes[i].kind() == EntityKind::Face)
            .collect();
        let edge_idx: Vec<usize> = (0..n)
            .filter(|&i| part.nodes[i].kind() == EntityKind::Edge)
            .collect();

        let p = |name: &str| bound.var(name, &self.params);
        let faces_in = tape.gather_rows(x, &face_idx)?;
        let faces = mlp2(tape, faces_in, p("face_mlp.w1"), p("face_mlp.b1"), p("face_mlp.w2"), p("face_mlp.b2"))?;
        let edges_in = tape.gather_rows(x, &edge_idx)?;
        let edges = mlp2(tape, edges_in, p("edge_mlp.w1"), p("edge_mlp.b1"), p("edge_mlp.w2"), p("edge_mlp.b2"))?;
        let stacked = tape.concat(0, &[faces, edges])?;

        // Undo the face/edge regrouping back into vertex order.
        let mut back = vec![0usize; n];
        for (pos, &i) in face_idx.iter().chain(edge_idx.iter()).enumerate() {
            back[i] = pos;
        }
        let h0 = tape.gather_rows(stacked, &back)?;

        let (src, dst) = attention_edges(part);
        let h1 = gat_layer(tape, h0, p("gat1.ws"), p("gat1.wt"), p("gat1.att"), &src, &dst, n)?;
        let h1 = tape.relu(h1);
        let h2 = gat_layer(tape, h1, p("gat2.ws"), p("gat2.wt"), p("gat2.att"), &src, &dst, n)?;
        Ok(h2)
    }

    /// Dense pair scoring: head(h1\[u\] ⊕ h2\[v\]) for every cell, reshaped
    /// to the row-major n × m logit matrix.
    pub(crate) fn predict_logits(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        h1: Var,
        h2: Var,
        n: usize,
        m: usize,
    ) -> Result<Var, Error> {
        let mut us = Vec::with_capacity(n * m);
        let mut vs = Vec::with_capacity(n * m);
        for u in 0..n {
            for v in 0..m {
                us.push(u);
                vs.push(v);
            }
        }
        let hu = tape.gather_rows(h1, &us)?;
        let hv = tape.gather_rows(h2, &vs)?;
        let pairs = tape.concat(1, &[hu, hv])?;

        let p = |name: &str| bound.var(name, &self.params);
        let a = tape.matmul(pairs, p("head.w1"))?;
        let a = tape.add_bias(a, p("head.b1"))?;
        let a = tape.relu(a);
        let b = tape.matmul(a, p("head.w2"))?;
        let b = tape.add_bias(b, p("head.b2"))?;
        let b = tape.relu(b);
        let c = tape.matmul(b, p("head.w3"))?;
        let c = tape.add_bias(c, p("head.b3"))?;
        Ok(tape.reshape(c, vec![n, m])?)
    }

    /// Full forward pass for one part pair, without gradients.
    pub fn predict(&self, g1: &PartGraph, g2: &PartGraph) -> Result<ScoreMatrix, Error> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let h1 = self.encode(&mut tape, &bound, g1)?;
        let h2 = self.encode(&mut tape, &bound, g2)?;
        let logits = self.predict_logits(&mut tape, &bound, h1, h2, g1.num_nodes(), g2.num_nodes())?;
        let scores = tape.value(logits).data().to_vec();
        Ok(ScoreMatrix::from_parts(g1, g2, scores))
    }

    pub fn save(&self, manifest_path: &Path, extra_meta: serde_json::Value) -> Result<(), Error> {
        let meta = serde_json::json!({
            "width": self.cfg.width,
            "feature_mask": self.cfg.feature_mask,
            "seed": self.cfg.seed,
            "extra": extra_meta,
        });
        checkpoint::save(manifest_path, &self.params.named(), meta)?;
        Ok(())
    }

    pub fn load(manifest_path: &Path) -> Result<Self, Error> {
        let (tensors, meta) = checkpoint::load(manifest_path)?;
        let width = meta["width"]
            .as_u64()
            .ok_or_else(|| Error::BadCheckpoint("missing width".into()))? as usize;
        let feature_mask: FeatureMask = serde_json::from_value(meta["feature_mask"].clone())
            .map_err(|e| Error::BadCheckpoint(format!("feature_mask: {e}")))?;
        let seed = meta["seed"].as_u64().unwrap_or(0);
        let cfg = NetworkConfig { width, feature_mask, seed };
        let mut model = Model::new(cfg);
        {
            let mut slots = model.params.named_mut();
            for (name, tensor) in tensors {
                let slot = slots
                    .iter_mut()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| Error::BadCheckpoint(format!("unknown tensor {name}")))?;
                if slot.1.shape() != tensor.shape() {
                    return Err(Error::BadCheckpoint(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        slot.1.shape()
                    )));
                }
                *slot.1 = tensor;
            }
        }
        Ok(model)
    }
}

fn mlp2(tape: &mut Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var, Error> {
    let a = tape.matmul(x, w1)?;
    let a = tape.add_bias(a, b1)?;
    let a = tape.relu(a);
    let b = tape.matmul(a, w2)?;
    let b = tape.add_bias(b, b2)?;
    Ok(tape.relu(b))
}

/// Directed message edges: both directions of every link plus a self-loop
/// per vertex, sorted by (destination, source) and deduplicated.
fn attention_edges(part: &PartGraph) -> (Vec<usize>, Vec<usize>) {
    let n = part.num_nodes();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2 * part.links.len() + n);
    for &(s, t) in &part.links {
        pairs.push((t, s));
        pairs.push((s, t));
    }
    for i in 0..n {
        pairs.push((i, i));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let dst = pairs.iter().map(|&(d, _)| d).collect();
    let src = pairs.iter().map(|&(_, s)| s).collect();
    (src, dst)
}

/// One GATv2 step: score(u→v) = aᵀ·LeakyReLU(W_s h_u + W_t h_v), softmax
/// over each destination's in-edges, then attention-weighted sum of W_s h_u.
#[allow(clippy::too_many_arguments)]
fn gat_layer(
    tape: &mut Tape,
    h: Var,
    ws: Var,
    wt: Var,
    att: Var,
    src: &[usize],
    dst: &[usize],
    n: usize,
) -> Result<Var, Error> {
    let s = tape.matmul(h, ws)?;
    let t = tape.matmul(h, wt)?;
    let zs = tape.gather_rows(s, src)?;
    let zt = tape.gather_rows(t, dst)?;
    let z = tape.add(zs, zt)?;
    let act = tape.leaky_relu(z, ATTENTION_SLOPE);
    let scores = tape.matmul(act, att)?;
    let flat = tape.reshape(scores, vec![src.len()])?;
    let alpha = tape.segment_softmax(flat, dst, n)?;
    let values = tape.gather_rows(s, src)?;
    let weighted = tape.scale_rows(values, alpha)?;
    Ok(tape.segment_sum(weighted, dst, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::parse_part_graph;

    fn graph(nodes: &str, links: &str) -> PartGraph {
        parse_part_graph(&format!(
            r#"{{
                "part_id": "t",
                "bbox": [[0,0,0],[1,1,1]],
                "mesh": "t.obj",
                "nodes": [{nodes}],
                "links": [{links}]
            }}"#
        ))
        .unwrap()
    }

    fn plane(id: usize, area: f64) -> String {
        format!(
            r#"{{"id":{id},"kind":"face","type":"Plane","reversed":false,"length":0,
                "area":{area},"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[0,0,1],"radius":null}}"#
        )
    }

    fn line(id: usize, length: f64) -> String {
        format!(
            r#"{{"id":{id},"kind":"edge","type":"Line","reversed":false,"length":{length},
                "area":0,"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[1,0,0],"radius":null}}"#
        )
    }

    fn small_cfg(seed: u64) -> NetworkConfig {
        NetworkConfig { width: 16, seed, ..Default::default() }
    }

    #[test]
    fn default_width_lands_near_the_published_parameter_count() {
        let model = Model::new(NetworkConfig::default());
        let count = model.params.num_params();
        assert!((1_300_000..1_400_000).contains(&count), "got {count}");
    }

    #[test]
    fn single_vertex_graph_encodes_to_its_mlp_output() {
        // With one vertex the only attention edge is the self-loop, whose
        // softmax weight is 1, so the embedding is W_s · mlp(x) exactly.
        let model = Model::new(small_cfg(1));
        let g = graph(&plane(0, 2.0), "");
        let scores = model.predict(&g, &g).unwrap();
        assert_eq!((scores.n(), scores.m()), (1, 1));
        assert!(scores.get(0, 0).is_finite());
    }

    #[test]
    fn permuting_part2_vertices_permutes_logit_columns() {
        let model = Model::new(small_cfg(7));
        let g1 = graph(&format!("{},{}", plane(0, 1.0), line(1, 2.0)), r#"{"s":0,"t":1}"#);
        let g2 = graph(
            &format!("{},{},{}", plane(0, 3.0), line(1, 1.5), plane(2, 0.5)),
            r#"{"s":0,"t":1},{"s":1,"t":2}"#,
        );
        // Reversed vertex order with links renumbered to match.
        let g2_perm = graph(
            &format!("{},{},{}", plane(2, 0.5), line(1, 1.5), plane(0, 3.0)),
            r#"{"s":2,"t":1},{"s":1,"t":0}"#,
        );
        let base = model.predict(&g1, &g2).unwrap();
        let perm = model.predict(&g1, &g2_perm).unwrap();
        for u in 0..2 {
            for v in 0..3 {
                let d = (base.get(u, v) - perm.get(u, 2 - v)).abs();
                assert!(d < 1e-9, "cell ({u},{v}) differs by {d}");
            }
        }
    }

    #[test]
    fn duplicated_vertex_duplicates_its_logit_column() {
        let model = Model::new(small_cfg(3));
        let g1 = graph(&plane(0, 1.0), "");
        let g2 = graph(&format!("{},{}", plane(0, 2.0), plane(1, 2.0)), "");
        let scores = model.predict(&g1, &g2).unwrap();
        assert_eq!(scores.get(0, 0), scores.get(0, 1));
    }

    #[test]
    fn isolated_vertices_still_get_embeddings() {
        let model = Model::new(small_cfg(5));
        let g = graph(&format!("{},{}", plane(0, 1.0), line(1, 4.0)), "");
        let scores = model.predict(&g, &g).unwrap();
        for u in 0..2 {
            for v in 0..2 {
                assert!(scores.get(u, v).is_finite());
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_weights_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = Model::new(small_cfg(11));
        let g1 = graph(&plane(0, 1.0), "");
        let g2 = graph(&format!("{},{}", plane(0, 2.0), line(1, 0.7)), r#"{"s":0,"t":1}"#);
        let before = model.predict(&g1, &g2).unwrap();
        model.save(&path, serde_json::json!({"note": "test"})).unwrap();

        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded.cfg.width, 16);
        let after = loaded.predict(&g1, &g2).unwrap();
        for u in 0..1 {
            for v in 0..2 {
                assert_eq!(before.get(u, v), after.get(u, v));
            }
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let model = Model::new(small_cfg(2));
        let g1 = graph(&format!("{},{}", plane(0, 1.0), line(1, 2.0)), r#"{"s":0,"t":1}"#);
        let a = model.predict(&g1, &g1).unwrap();
        let b = model.predict(&g1, &g1).unwrap();
        for u in 0..2 {
            for v in 0..2 {
                assert_eq!(a.get(u, v), b.get(u, v));
            }
        }
    }
}
