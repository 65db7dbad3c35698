//! Reverse-mode autodiff on a linear tape.
//!
//! Every operation records a node holding its result and the handles of its
//! inputs. `backward` walks the tape once in reverse, accumulating adjoints
//! additively so fan-out is handled for free. A tape is single-shot: after
//! `backward` it refuses a second pass; build a fresh forward instead.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Row-vector bias broadcast over every row of a matrix.
    AddBias(Var, Var),
    AddScalar(Var),
    Mul(Var, Var),
    MulScalar(Var, f64),
    Concat {
        axis: usize,
        parts: Vec<Var>,
    },
    Reshape(Var),
    GatherRows {
        input: Var,
        indices: Arc<[usize]>,
    },
    Relu(Var),
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Softmax {
        input: Var,
        axis: usize,
    },
    LogSoftmax {
        input: Var,
        axis: usize,
    },
    Log(Var),
    Sum(Var),
    SumAxis {
        input: Var,
        axis: usize,
    },
    Mean(Var),
    /// Multiply row `i` of `values` by scalar `scales[i]`.
    ScaleRows {
        values: Var,
        scales: Var,
    },
    SegmentSoftmax {
        input: Var,
        segments: Arc<[usize]>,
    },
    SegmentSum {
        values: Var,
        segments: Arc<[usize]>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Iteration pattern for one axis of a rank-1/2 tensor: element `j` of lane
/// `i` lives at flat index `i * step + j * stride`.
struct Lanes {
    count: usize,
    len: usize,
    stride: usize,
    step: usize,
}

fn lanes(shape: &[usize], axis: usize) -> Result<Lanes> {
    match (shape.len(), axis) {
        (1, 0) => Ok(Lanes {
            count: 1,
            len: shape[0],
            stride: 1,
            step: 0,
        }),
        (2, 0) => Ok(Lanes {
            count: shape[1],
            len: shape[0],
            stride: shape[1],
            step: 1,
        }),
        (2, 1) => Ok(Lanes {
            count: shape[0],
            len: shape[1],
            stride: 1,
            step: shape[1],
        }),
        (rank, axis) => Err(Error::InvalidAxis { axis, rank }),
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Adjoint of `v`; populated only by `backward`, and only for nodes the
    /// loss actually depends on.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record an input tensor (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    // ---- forward ops ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        dgemm_rm(
            m,
            k,
            n,
            self.nodes[a.0].value.data(),
            (k, 1),
            self.nodes[b.0].value.data(),
            (n, 1),
            0.0,
            &mut out,
        );
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb,
            });
        }
        let data = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        Ok(self.push(Tensor::new(sa, data)?, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "sub",
                lhs: sa,
                rhs: sb,
            });
        }
        let data = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        Ok(self.push(Tensor::new(sa, data)?, Op::Sub(a, b)))
    }

    /// `a` is `[n, k]`, `bias` is `[k]` or `[1, k]`; the bias row is added to
    /// every row of `a`. The only broadcast this tape supports.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let sa = self.shape_of(a);
        let sbias = self.shape_of(bias);
        let k = self.nodes[bias.0].value.numel();
        let bias_rank_ok = sbias.len() == 1 || (sbias.len() == 2 && sbias[0] == 1);
        if sa.len() != 2 || !bias_rank_ok || sa[1] != k {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: sa,
                rhs: sbias,
            });
        }
        let bdata = self.nodes[bias.0].value.data().to_vec();
        let mut out = self.nodes[a.0].value.data().to_vec();
        for row in out.chunks_mut(k) {
            for (o, b) in row.iter_mut().zip(&bdata) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::new(sa, out)?, Op::AddBias(a, bias)))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = map(&self.nodes[a.0].value, |x| x + c);
        self.push(t, Op::AddScalar(a))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: sa,
                rhs: sb,
            });
        }
        let data = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        Ok(self.push(Tensor::new(sa, data)?, Op::Mul(a, b)))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = map(&self.nodes[a.0].value, |x| x * c);
        self.push(t, Op::MulScalar(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.mul_scalar(a, -1.0)
    }

    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        let first = self.shape_of(parts[0]);
        let rank = first.len();
        if rank == 0 || axis >= rank {
            return Err(Error::InvalidAxis { axis, rank });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.shape_of(p);
            let compatible = s.len() == rank
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s,
                });
            }
            out_shape[axis] += s[axis];
        }
        let numel: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        if rank == 1 || axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.data());
            }
        } else {
            // axis == 1 on rank 2: interleave rows.
            let rows = out_shape[0];
            for r in 0..rows {
                for &p in parts {
                    data.extend_from_slice(self.nodes[p.0].value.row(r));
                }
            }
        }
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::Concat {
                axis,
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].value.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape_of(a),
                rhs: shape,
            });
        }
        let data = self.nodes[a.0].value.data().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Reshape(a)))
    }

    /// Select rows of a `[n, k]` matrix by index, with repetition allowed.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let sa = self.shape_of(a);
        if sa.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: sa,
                rhs: vec![indices.len()],
            });
        }
        let (n, k) = (sa[0], sa[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows: index out of range",
                lhs: vec![bad],
                rhs: vec![n],
            });
        }
        let mut data = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            data.extend_from_slice(self.nodes[a.0].value.row(i));
        }
        Ok(self.push(
            Tensor::new(vec![indices.len(), k], data)?,
            Op::GatherRows {
                input: a,
                indices: indices.into(),
            },
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = map(&self.nodes[a.0].value, |x| x.max(0.0));
        self.push(t, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let t = map(&self.nodes[a.0].value, |x| if x > 0.0 { x } else { slope * x });
        self.push(t, Op::LeakyRelu { input: a, slope })
    }

    /// Numerically stabilized softmax along `axis` (max subtracted per lane).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape_of(a);
        let ln = lanes(&shape, axis)?;
        let mut out = self.nodes[a.0].value.data().to_vec();
        for lane in 0..ln.count {
            let idx = |j: usize| lane * ln.step + j * ln.stride;
            let max = (0..ln.len)
                .map(|j| out[idx(j)])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..ln.len {
                let e = (out[idx(j)] - max).exp();
                out[idx(j)] = e;
                total += e;
            }
            for j in 0..ln.len {
                out[idx(j)] /= total;
            }
        }
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { input: a, axis }))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape_of(a);
        let ln = lanes(&shape, axis)?;
        let mut out = self.nodes[a.0].value.data().to_vec();
        for lane in 0..ln.count {
            let idx = |j: usize| lane * ln.step + j * ln.stride;
            let max = (0..ln.len)
                .map(|j| out[idx(j)])
                .fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = (0..ln.len).map(|j| (out[idx(j)] - max).exp()).sum();
            let log_total = total.ln() + max;
            for j in 0..ln.len {
                out[idx(j)] -= log_total;
            }
        }
        Ok(self.push(Tensor::new(shape, out)?, Op::LogSoftmax { input: a, axis }))
    }

    /// Elementwise natural log. Caller guarantees positive inputs.
    pub fn log(&mut self, a: Var) -> Var {
        let t = map(&self.nodes[a.0].value, f64::ln);
        self.push(t, Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Sum along `axis` of a rank-2 tensor, producing a rank-1 result.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape_of(a);
        if shape.len() != 2 {
            return Err(Error::InvalidAxis {
                axis,
                rank: shape.len(),
            });
        }
        let ln = lanes(&shape, axis)?;
        let data = self.nodes[a.0].value.data();
        let out: Vec<f64> = (0..ln.count)
            .map(|lane| (0..ln.len).map(|j| data[lane * ln.step + j * ln.stride]).sum())
            .collect();
        Ok(self.push(
            Tensor::new(vec![ln.count], out)?,
            Op::SumAxis { input: a, axis },
        ))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].value.numel();
        if n == 0 {
            return Err(Error::ShapeMismatch {
                op: "mean of empty tensor",
                lhs: self.shape_of(a),
                rhs: vec![],
            });
        }
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        Ok(self.push(Tensor::scalar(total / n as f64), Op::Mean(a)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Multiply each row `i` of `values` (`[n, k]`) by `scales[i]`
    /// (`[n]` or `[n, 1]`).
    pub fn scale_rows(&mut self, values: Var, scales: Var) -> Result<Var> {
        let sv = self.shape_of(values);
        let ss = self.shape_of(scales);
        let n_scales = self.nodes[scales.0].value.numel();
        if sv.len() != 2 || sv[0] != n_scales {
            return Err(Error::ShapeMismatch {
                op: "scale_rows",
                lhs: sv,
                rhs: ss,
            });
        }
        let k = sv[1];
        let s = self.nodes[scales.0].value.data().to_vec();
        let mut out = self.nodes[values.0].value.data().to_vec();
        for (i, row) in out.chunks_mut(k).enumerate() {
            for v in row {
                *v *= s[i];
            }
        }
        Ok(self.push(Tensor::new(sv, out)?, Op::ScaleRows { values, scales }))
    }

    /// Softmax over groups of entries sharing a segment id. `a` is flat with
    /// one entry per segment member; empty segments are fine.
    pub fn segment_softmax(
        &mut self,
        a: Var,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<Var> {
        let shape = self.shape_of(a);
        self.check_segments(&shape, self.nodes[a.0].value.numel(), segments, num_segments)?;
        let data = self.nodes[a.0].value.data();
        let mut max = vec![f64::NEG_INFINITY; num_segments];
        for (x, &s) in data.iter().zip(segments) {
            max[s] = max[s].max(*x);
        }
        let mut out: Vec<f64> = data
            .iter()
            .zip(segments)
            .map(|(x, &s)| (x - max[s]).exp())
            .collect();
        let mut total = vec![0.0; num_segments];
        for (e, &s) in out.iter().zip(segments) {
            total[s] += e;
        }
        for (e, &s) in out.iter_mut().zip(segments) {
            *e /= total[s];
        }
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::SegmentSoftmax {
                input: a,
                segments: segments.into(),
            },
        ))
    }

    /// Scatter-add rows of `values` (`[e, k]`) into `num_segments` output rows.
    pub fn segment_sum(
        &mut self,
        values: Var,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<Var> {
        let sv = self.shape_of(values);
        if sv.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "segment_sum",
                lhs: sv,
                rhs: vec![segments.len()],
            });
        }
        self.check_segments(&sv, sv[0], segments, num_segments)?;
        let k = sv[1];
        let mut out = vec![0.0; num_segments * k];
        for (e, &s) in segments.iter().enumerate() {
            let row = self.nodes[values.0].value.row(e);
            for (o, v) in out[s * k..(s + 1) * k].iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(self.push(
            Tensor::new(vec![num_segments, k], out)?,
            Op::SegmentSum {
                values,
                segments: segments.into(),
            },
        ))
    }

    fn check_segments(
        &self,
        shape: &[usize],
        expected_len: usize,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<()> {
        if segments.len() != expected_len {
            return Err(Error::ShapeMismatch {
                op: "segment ids: wrong length",
                lhs: shape.to_vec(),
                rhs: vec![segments.len()],
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
            return Err(Error::ShapeMismatch {
                op: "segment id out of range",
                lhs: vec![bad],
                rhs: vec![num_segments],
            });
        }
        Ok(())
    }

    fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes[v.0].value.shape().to_vec()
    }

    // ---- backward ----

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::ConsumedTape);
        }
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.nodes[i].grad.clone() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let sa = self.shape_of(a);
                    let sb = self.shape_of(b);
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    // dA += G B^T, reading B transposed via strides.
                    let mut ga = self.take_grad_buf(a);
                    dgemm_rm(
                        m,
                        n,
                        k,
                        &g,
                        (n, 1),
                        self.nodes[b.0].value.data(),
                        (1, n),
                        1.0,
                        &mut ga,
                    );
                    self.put_grad_buf(a, ga);
                    // dB += A^T G.
                    let mut gb = self.take_grad_buf(b);
                    dgemm_rm(
                        k,
                        m,
                        n,
                        self.nodes[a.0].value.data(),
                        (1, k),
                        &g,
                        (n, 1),
                        1.0,
                        &mut gb,
                    );
                    self.put_grad_buf(b, gb);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, |ga| add_into(ga, &g));
                    self.accumulate(b, |gb| add_into(gb, &g));
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, |ga| add_into(ga, &g));
                    self.accumulate(b, |gb| {
                        for (o, x) in gb.iter_mut().zip(&g) {
                            *o -= x;
                        }
                    });
                }
                Op::AddBias(a, bias) => {
                    self.accumulate(a, |ga| add_into(ga, &g));
                    let k = self.nodes[bias.0].value.numel();
                    self.accumulate(bias, |gb| {
                        for row in g.chunks(k) {
                            for (o, x) in gb.iter_mut().zip(row) {
                                *o += x;
                            }
                        }
                    });
                }
                Op::AddScalar(a) => self.accumulate(a, |ga| add_into(ga, &g)),
                Op::Mul(a, b) => {
                    let mut ga = self.take_grad_buf(a);
                    for ((o, x), y) in ga.iter_mut().zip(&g).zip(self.nodes[b.0].value.data()) {
                        *o += x * y;
                    }
                    self.put_grad_buf(a, ga);
                    let mut gb = self.take_grad_buf(b);
                    for ((o, x), y) in gb.iter_mut().zip(&g).zip(self.nodes[a.0].value.data()) {
                        *o += x * y;
                    }
                    self.put_grad_buf(b, gb);
                }
                Op::MulScalar(a, c) => self.accumulate(a, |ga| {
                    for (o, x) in ga.iter_mut().zip(&g) {
                        *o += c * x;
                    }
                }),
                Op::Concat { axis, parts } => {
                    let rank = self.shape_of(parts[0]).len();
                    if rank == 1 || axis == 0 {
                        let mut offset = 0;
                        for &p in &parts {
                            let len = self.nodes[p.0].value.numel();
                            let slice = &g[offset..offset + len];
                            self.accumulate(p, |gp| add_into(gp, slice));
                            offset += len;
                        }
                    } else {
                        let rows = self.nodes[i].value.rows();
                        let total_cols = self.nodes[i].value.cols();
                        let mut col_offset = 0;
                        for &p in &parts {
                            let k = self.nodes[p.0].value.cols();
                            let mut gp_contrib = vec![0.0; rows * k];
                            for r in 0..rows {
                                let src = &g[r * total_cols + col_offset..][..k];
                                gp_contrib[r * k..(r + 1) * k].copy_from_slice(src);
                            }
                            self.accumulate(p, |gp| add_into(gp, &gp_contrib));
                            col_offset += k;
                        }
                    }
                }
                Op::Reshape(a) => self.accumulate(a, |ga| add_into(ga, &g)),
                Op::GatherRows { input, indices } => {
                    let k = self.nodes[input.0].value.cols();
                    self.accumulate(input, |gi| {
                        for (row, &src) in indices.iter().enumerate() {
                            let gr = &g[row * k..(row + 1) * k];
                            for (o, x) in gi[src * k..(src + 1) * k].iter_mut().zip(gr) {
                                *o += x;
                            }
                        }
                    });
                }
                Op::Relu(a) => {
                    let mut ga = self.take_grad_buf(a);
                    for ((o, x), inp) in ga.iter_mut().zip(&g).zip(self.nodes[a.0].value.data()) {
                        if *inp > 0.0 {
                            *o += x;
                        }
                    }
                    self.put_grad_buf(a, ga);
                }
                Op::LeakyRelu { input, slope } => {
                    let mut ga = self.take_grad_buf(input);
                    for ((o, x), inp) in
                        ga.iter_mut().zip(&g).zip(self.nodes[input.0].value.data())
                    {
                        *o += if *inp > 0.0 { *x } else { slope * x };
                    }
                    self.put_grad_buf(input, ga);
                }
                Op::Softmax { input, axis } => {
                    let shape = self.shape_of(input);
                    let ln = lanes(&shape, axis)?;
                    let mut ga = self.take_grad_buf(input);
                    let y = self.nodes[i].value.data();
                    for lane in 0..ln.count {
                        let idx = |j: usize| lane * ln.step + j * ln.stride;
                        let dot: f64 = (0..ln.len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..ln.len {
                            let p = idx(j);
                            ga[p] += y[p] * (g[p] - dot);
                        }
                    }
                    self.put_grad_buf(input, ga);
                }
                Op::LogSoftmax { input, axis } => {
                    let shape = self.shape_of(input);
                    let ln = lanes(&shape, axis)?;
                    let mut ga = self.take_grad_buf(input);
                    let y = self.nodes[i].value.data();
                    for lane in 0..ln.count {
                        let idx = |j: usize| lane * ln.step + j * ln.stride;
                        let gsum: f64 = (0..ln.len).map(|j| g[idx(j)]).sum();
                        for j in 0..ln.len {
                            let p = idx(j);
                            ga[p] += g[p] - y[p].exp() * gsum;
                        }
                    }
                    self.put_grad_buf(input, ga);
                }
                Op::Log(a) => {
                    let mut ga = self.take_grad_buf(a);
                    for ((o, x), inp) in ga.iter_mut().zip(&g).zip(self.nodes[a.0].value.data()) {
                        *o += x / inp;
                    }
                    self.put_grad_buf(a, ga);
                }
                Op::Sum(a) => self.accumulate(a, |ga| {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }),
                Op::SumAxis { input, axis } => {
                    let shape = self.shape_of(input);
                    let ln = lanes(&shape, axis)?;
                    self.accumulate(input, |gi| {
                        for lane in 0..ln.count {
                            for j in 0..ln.len {
                                gi[lane * ln.step + j * ln.stride] += g[lane];
                            }
                        }
                    });
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.numel() as f64;
                    self.accumulate(a, |ga| {
                        for o in ga.iter_mut() {
                            *o += g[0] / n;
                        }
                    });
                }
                Op::ScaleRows { values, scales } => {
                    let k = self.nodes[values.0].value.cols();
                    let mut gv = self.take_grad_buf(values);
                    {
                        let s = self.nodes[scales.0].value.data();
                        for (row, gr) in g.chunks(k).enumerate() {
                            for (o, x) in gv[row * k..(row + 1) * k].iter_mut().zip(gr) {
                                *o += s[row] * x;
                            }
                        }
                    }
                    self.put_grad_buf(values, gv);
                    let mut gs = self.take_grad_buf(scales);
                    {
                        let v = self.nodes[values.0].value.data();
                        for (row, gr) in g.chunks(k).enumerate() {
                            gs[row] += gr
                                .iter()
                                .zip(&v[row * k..(row + 1) * k])
                                .map(|(x, y)| x * y)
                                .sum::<f64>();
                        }
                    }
                    self.put_grad_buf(scales, gs);
                }
                Op::SegmentSoftmax { input, segments } => {
                    let num_segments = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; num_segments];
                    let y = self.nodes[i].value.data();
                    for (e, &s) in segments.iter().enumerate() {
                        dot[s] += g[e] * y[e];
                    }
                    let mut ga = self.take_grad_buf(input);
                    {
                        let y = self.nodes[i].value.data();
                        for (e, &s) in segments.iter().enumerate() {
                            ga[e] += y[e] * (g[e] - dot[s]);
                        }
                    }
                    self.put_grad_buf(input, ga);
                }
                Op::SegmentSum { values, segments } => {
                    let k = self.nodes[values.0].value.cols();
                    self.accumulate(values, |gv| {
                        for (e, &s) in segments.iter().enumerate() {
                            let gr = &g[s * k..(s + 1) * k];
                            for (o, x) in gv[e * k..(e + 1) * k].iter_mut().zip(gr) {
                                *o += x;
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }

    fn take_grad_buf(&mut self, v: Var) -> Vec<f64> {
        let numel = self.nodes[v.0].value.numel();
        self.nodes[v.0]
            .grad
            .take()
            .unwrap_or_else(|| vec![0.0; numel])
    }

    fn put_grad_buf(&mut self, v: Var, buf: Vec<f64>) {
        self.nodes[v.0].grad = Some(buf);
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let mut buf = self.take_grad_buf(v);
        f(&mut buf);
        self.put_grad_buf(v, buf);
    }
}

fn add_into(acc: &mut [f64], src: &[f64]) {
    for (o, x) in acc.iter_mut().zip(src) {
        *o += x;
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
        .expect("same shape")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect()
}

/// `C = alpha*A@B + beta*C` for row-major buffers with explicit `(row, col)`
/// strides, so transposed reads need no copies.
#[allow(clippy::too_many_arguments)]
fn dgemm_rm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(c.len(), m * n);
    // Safety: shapes are validated by the callers; strides address within the
    // slices for the given dims.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn matmul_forward_and_backward() {
        let mut tape = Tape::new();
        let a = tape.leaf(t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.leaf(t2(&[vec![5.0, 6.0], vec![7.0, 8.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
        let loss = tape.sum(c);
        tape.backward(loss).unwrap();
        // dA = 1s @ B^T, dB = A^T @ 1s.
        assert_eq!(tape.grad(a).unwrap(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(tape.grad(b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[vec![1.0, 2.0, 3.0], vec![1e4, 1e4 + 1.0, -1e4]]));
        let y = tape.softmax(x, 1).unwrap();
        for r in 0..2 {
            let s: f64 = tape.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {r} sums to {s}");
        }
        assert!(tape.value(y).all_finite());
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[vec![0.3, -1.2, 2.4, 0.0]]));
        let sm = tape.softmax(x, 1).unwrap();
        let log_sm = tape.log(sm);
        let direct = tape.log_softmax(x, 1).unwrap();
        for (a, b) in tape
            .value(log_sm)
            .data()
            .iter()
            .zip(tape.value(direct).data())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_stays_finite() {
        // A large negative mask value must not poison gradients with NaN.
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[vec![0.5, -1e30, 1.5]]));
        let y = tape.log_softmax(x, 1).unwrap();
        let picked = tape.gather_cols_for_test(y, 0);
        tape.backward(picked).unwrap();
        assert!(tape.grad(x).unwrap().iter().all(|v| v.is_finite()));
    }

    impl Tape {
        /// Test helper: select one element of a rank-2 row as a scalar.
        fn gather_cols_for_test(&mut self, v: Var, col: usize) -> Var {
            let cols = self.value(v).cols();
            let mut mask = vec![0.0; cols];
            mask[col] = 1.0;
            let m = self.leaf(Tensor::new(vec![1, cols], mask).unwrap());
            let p = self.mul(v, m).unwrap();
            self.sum(p)
        }
    }

    #[test]
    fn concat_axis1_backward_splits() {
        let mut tape = Tape::new();
        let a = tape.leaf(t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.leaf(t2(&[vec![5.0], vec![6.0]]));
        let c = tape.concat(1, &[a, b]).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 3]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let w = tape.leaf(t2(&[vec![1.0, 10.0, 100.0], vec![2.0, 20.0, 200.0]]));
        let p = tape.mul(c, w).unwrap();
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0, 10.0, 2.0, 20.0]);
        assert_eq!(tape.grad(b).unwrap(), &[100.0, 200.0]);
    }

    #[test]
    fn gather_rows_scatter_adds() {
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]));
        let g = tape.gather_rows(x, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(g).row(0), &[5.0, 6.0]);
        let loss = tape.sum(g);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn segment_ops_small_case() {
        let mut tape = Tape::new();
        let scores = tape.leaf(Tensor::new(vec![4, 1], vec![0.0, 0.0, 1.0, 2.0]).unwrap());
        let segs = [0usize, 0, 1, 1];
        let alpha = tape.segment_softmax(scores, &segs, 2).unwrap();
        let a = tape.value(alpha).data();
        assert!((a[0] - 0.5).abs() < 1e-12 && (a[1] - 0.5).abs() < 1e-12);
        assert!((a[2] + a[3] - 1.0).abs() < 1e-12 && a[3] > a[2]);

        let vals = tape.leaf(t2(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
        ]));
        let scaled = tape.scale_rows(vals, alpha).unwrap();
        let pooled = tape.segment_sum(scaled, &segs, 2).unwrap();
        let p = tape.value(pooled);
        assert!((p.row(0)[0] - 0.5).abs() < 1e-12 && (p.row(0)[1] - 0.5).abs() < 1e-12);
        let loss = tape.sum(pooled);
        tape.backward(loss).unwrap();
        assert!(tape.grad(scores).is_some());
        assert!(tape.grad(vals).is_some());
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::ConsumedTape)));
    }

    #[test]
    fn non_scalar_loss_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![2, 2]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn zero_row_matmul_is_fine() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![0, 4]));
        let b = tape.leaf(Tensor::zeros(vec![4, 3]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[0, 3]);
        let loss = tape.sum(c);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(b).unwrap(), &[0.0; 12]);
    }
}
