use std::sync::Arc;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Arc<[usize]>,
    },
    EdgeDot {
        x: Var,
        left: Arc<[usize]>,
        right: Arc<[usize]>,
        heads: usize,
        scale: f64,
    },
    PairAdd {
        a: Var,
        b: Var,
        left: Arc<[usize]>,
        right: Arc<[usize]>,
    },
    BlockDot {
        x: Var,
        w: Var,
        heads: usize,
    },
    Aggregate {
        coef: Var,
        x: Var,
        center: Arc<[usize]>,
        neighbor: Arc<[usize]>,
        heads: usize,
    },
    SegmentSoftmax {
        x: Var,
        segments: Arc<[usize]>,
        num_segments: usize,
        slope: Option<f64>,
    },
    BlockMean {
        x: Var,
        heads: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        rows: Arc<[usize]>,
        labels: Arc<[usize]>,
        probs: Vec<f64>,
    },
    SigmoidBce {
        logits: Var,
        rows: Arc<[usize]>,
        targets: Arc<[f64]>,
    },
    BinaryCrossEntropy {
        probs: Var,
        targets: Arc<[f64]>,
        eps: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records every operation of one forward pass so that [`Tape::backward`]
/// can replay the chain rule in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_len(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() && a.len() != 1 && b.len() != 1 {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn check_index(op: &'static str, index: &[usize], bound: usize) -> Result<()> {
    if let Some(&bad) = index.iter().find(|&&i| i >= bound) {
        return Err(Error::Index {
            op,
            index: bad,
            bound,
        });
    }
    Ok(())
}

fn head_width(op: &'static str, cols: usize, heads: usize) -> Result<usize> {
    if heads == 0 || !cols.is_multiple_of(heads) {
        return Err(Error::shape(
            op,
            format!("{cols} columns cannot be split into {heads} heads"),
        ));
    }
    Ok(cols / heads)
}

/// Broadcast-aware binary map: operands share a shape or one is a single value.
fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (shape, n) = if a.len() >= b.len() {
        (a.shape().to_vec(), a.len())
    } else {
        (b.shape().to_vec(), b.len())
    };
    let (ad, bd) = (a.data(), b.data());
    let data = (0..n)
        .map(|i| {
            let x = if ad.len() == 1 { ad[0] } else { ad[i] };
            let y = if bd.len() == 1 { bd[0] } else { bd[i] };
            f(x, y)
        })
        .collect();
    Tensor::new(shape, data).expect("shape product preserved")
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&v| f(v)).collect())
        .expect("shape product preserved")
}

/// `c += alpha * op(a) * op(b)` on row-major buffers via strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // a is m×k after op; stored either as m×k or k×m
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dot product with four interleaved partial sums, which keeps the adds off
/// one dependency chain.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .map(|(p, q)| p * q)
        .sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        needs_grad: bool,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf; gradients flow into it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        let needs = t.requires_grad();
        self.push("leaf", t, Op::Leaf, needs)
    }

    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of a `requires_grad` leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out);
        let t = Tensor::matrix(m, n, out)?;
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul", t, Op::MatMul(a, b), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_len("add", self.value(a), self.value(b))?;
        let t = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        self.push("add", t, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_len("sub", self.value(a), self.value(b))?;
        let t = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        self.push("sub", t, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_len("mul", self.value(a), self.value(b))?;
        let t = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        self.push("mul", t, Op::Mul(a, b), needs)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = map(self.value(a), |x| x * factor);
        let needs = self.needs(a);
        self.push("scale", t, Op::Scale(a, factor), needs)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let t = map(self.value(a), |x| if x > 0.0 { x } else { slope * x });
        let needs = self.needs(a);
        self.push("leaky_relu", t, Op::LeakyRelu(a, slope), needs)
    }

    /// ELU with unit scale: `x` for `x > 0`, `e^x - 1` otherwise.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), |x| if x > 0.0 { x } else { x.exp_m1() });
        let needs = self.needs(a);
        self.push("elu", t, Op::Elu(a), needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), sigmoid);
        let needs = self.needs(a);
        self.push("sigmoid", t, Op::Sigmoid(a), needs)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let t = map(self.value(a), f64::ln);
        let needs = self.needs(a);
        self.push("log", t, Op::Log(a), needs)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), f64::exp);
        let needs = self.needs(a);
        self.push("exp", t, Op::Exp(a), needs)
    }

    /// Inverted dropout. Identity (no node recorded) in eval mode or at `p = 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(a).len();
        // one 32-bit draw per element; drop when it falls below p·2^32
        let cut = (p * 4_294_967_296.0) as u64;
        let mut draws = vec![0u32; n];
        rng.fill(&mut draws[..]);
        let mask: Vec<f64> = draws
            .iter()
            .map(|&u| if u64::from(u) < cut { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let needs = self.needs(a);
        self.push("dropout", t, Op::Dropout(a, mask), needs)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::shape("mean", "empty input"));
        }
        let s = x.data().iter().sum::<f64>() / x.len() as f64;
        let needs = self.needs(a);
        self.push("mean", Tensor::scalar(s), Op::Mean(a), needs)
    }

    /// Squared Frobenius norm.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum_squares();
        let needs = self.needs(a);
        self.push("sum_squares", Tensor::scalar(s), Op::SumSquares(a), needs)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        if start > end || end > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("range {start}..{end} of {cols} columns"),
            ));
        }
        let width = end - start;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&x.data()[r * cols + start..r * cols + end]);
        }
        let t = Tensor::matrix(rows, width, out)?;
        let needs = self.needs(a);
        self.push("slice_cols", t, Op::SliceCols { x: a, start }, needs)
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        check_index("gather_rows", &index, rows)?;
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            out.extend_from_slice(x.row(i));
        }
        let t = Tensor::matrix(index.len(), cols, out)?;
        let needs = self.needs(a);
        self.push("gather_rows", t, Op::GatherRows { x: a, index }, needs)
    }

    /// Per-pair, per-head dot products: `out[e, k] = <x[left[e], k], x[right[e], k]>`
    /// where `x` is `N × (heads·F)` with heads laid out in contiguous column blocks.
    pub fn edge_dot(
        &mut self,
        a: Var,
        left: Arc<[usize]>,
        right: Arc<[usize]>,
        heads: usize,
    ) -> Result<Var> {
        self.scaled_edge_dot(a, left, right, heads, 1.0)
    }

    /// [`Tape::edge_dot`] times a constant, in one pass.
    pub fn scaled_edge_dot(
        &mut self,
        a: Var,
        left: Arc<[usize]>,
        right: Arc<[usize]>,
        heads: usize,
        scale: f64,
    ) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        let f = head_width("edge_dot", cols, heads)?;
        if left.len() != right.len() {
            return Err(Error::shape("edge_dot", "left/right index lengths differ"));
        }
        check_index("edge_dot", &left, rows)?;
        check_index("edge_dot", &right, rows)?;
        let d = x.data();
        let mut out = vec![0.0; left.len() * heads];
        if f > 0 {
            for ((&i, &j), oe) in left.iter().zip(right.iter()).zip(out.chunks_exact_mut(heads)) {
                let xi = &d[i * cols..(i + 1) * cols];
                let xj = &d[j * cols..(j + 1) * cols];
                for ((o, a), b) in oe.iter_mut().zip(xi.chunks_exact(f)).zip(xj.chunks_exact(f)) {
                    *o = scale * dot(a, b);
                }
            }
        }
        let t = Tensor::matrix(left.len(), heads, out)?;
        let needs = self.needs(a);
        self.push(
            "edge_dot",
            t,
            Op::EdgeDot {
                x: a,
                left,
                right,
                heads,
                scale,
            },
            needs,
        )
    }

    /// `out[e, k] = a[left[e], k] + b[right[e], k]` for two matrices of equal shape.
    pub fn pair_add(
        &mut self,
        a: Var,
        b: Var,
        left: Arc<[usize]>,
        right: Arc<[usize]>,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() || left.len() != right.len() {
            return Err(Error::shape(
                "pair_add",
                format!(
                    "{:?} vs {:?} with {} and {} indices",
                    av.shape(),
                    bv.shape(),
                    left.len(),
                    right.len()
                ),
            ));
        }
        let (rows, cols) = (av.rows(), av.cols());
        check_index("pair_add", &left, rows)?;
        check_index("pair_add", &right, rows)?;
        let (ad, bd) = (av.data(), bv.data());
        let mut out = Vec::with_capacity(left.len() * cols);
        for (&i, &j) in left.iter().zip(right.iter()) {
            out.extend(
                ad[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(&bd[j * cols..(j + 1) * cols])
                    .map(|(p, q)| p + q),
            );
        }
        let t = Tensor::matrix(left.len(), cols, out)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(
            "pair_add",
            t,
            Op::PairAdd {
                a,
                b,
                left,
                right,
            },
            needs,
        )
    }

    /// `out[n, k] = <x[n, k-block], w[k-block]>` for `x: N × (heads·F)`, `w` of `heads·F` values.
    pub fn block_dot(&mut self, a: Var, w: Var, heads: usize) -> Result<Var> {
        let x = self.value(a);
        let wv = self.value(w);
        let (rows, cols) = (x.rows(), x.cols());
        let f = head_width("block_dot", cols, heads)?;
        if wv.len() != cols {
            return Err(Error::shape(
                "block_dot",
                format!("weight has {} values, expected {cols}", wv.len()),
            ));
        }
        let (d, wd) = (x.data(), wv.data());
        let mut out = vec![0.0; rows * heads];
        for n in 0..rows {
            let xr = &d[n * cols..(n + 1) * cols];
            for k in 0..heads {
                let s = k * f;
                out[n * heads + k] = xr[s..s + f]
                    .iter()
                    .zip(&wd[s..s + f])
                    .map(|(p, q)| p * q)
                    .sum();
            }
        }
        let t = Tensor::matrix(rows, heads, out)?;
        let needs = self.needs(a) || self.needs(w);
        self.push("block_dot", t, Op::BlockDot { x: a, w, heads }, needs)
    }

    /// Weighted neighborhood sum:
    /// `out[center[e], k-block] += coef[e, k] * x[neighbor[e], k-block]`.
    pub fn aggregate(
        &mut self,
        coef: Var,
        a: Var,
        center: Arc<[usize]>,
        neighbor: Arc<[usize]>,
        num_nodes: usize,
        heads: usize,
    ) -> Result<Var> {
        let (cv, x) = (self.value(coef), self.value(a));
        let (rows, cols) = (x.rows(), x.cols());
        let f = head_width("aggregate", cols, heads)?;
        if center.len() != neighbor.len() || cv.rows() != center.len() || cv.cols() != heads {
            return Err(Error::shape(
                "aggregate",
                format!(
                    "coefficients {:?} for {} edges and {heads} heads",
                    cv.shape(),
                    center.len()
                ),
            ));
        }
        check_index("aggregate", &center, num_nodes)?;
        check_index("aggregate", &neighbor, rows)?;
        let (cd, d) = (cv.data(), x.data());
        let mut out = vec![0.0; num_nodes * cols];
        if f > 0 {
            for ((&i, &j), ck) in center.iter().zip(neighbor.iter()).zip(cd.chunks_exact(heads)) {
                let xj = &d[j * cols..(j + 1) * cols];
                let oi = &mut out[i * cols..(i + 1) * cols];
                for ((oh, xh), &c) in oi.chunks_exact_mut(f).zip(xj.chunks_exact(f)).zip(ck) {
                    for (o, v) in oh.iter_mut().zip(xh) {
                        *o += c * v;
                    }
                }
            }
        }
        let t = Tensor::matrix(num_nodes, cols, out)?;
        let needs = self.needs(coef) || self.needs(a);
        self.push(
            "aggregate",
            t,
            Op::Aggregate {
                coef,
                x: a,
                center,
                neighbor,
                heads,
            },
            needs,
        )
    }

    /// Softmax within groups of rows sharing a segment id, independently per column.
    pub fn segment_softmax(
        &mut self,
        a: Var,
        segments: Arc<[usize]>,
        num_segments: usize,
    ) -> Result<Var> {
        self.softmax_impl(a, segments, num_segments, None)
    }

    /// `segment_softmax(leaky_relu(a, slope))` without materializing the activation.
    pub fn leaky_segment_softmax(
        &mut self,
        a: Var,
        segments: Arc<[usize]>,
        num_segments: usize,
        slope: f64,
    ) -> Result<Var> {
        self.softmax_impl(a, segments, num_segments, Some(slope))
    }

    fn softmax_impl(
        &mut self,
        a: Var,
        segments: Arc<[usize]>,
        num_segments: usize,
        slope: Option<f64>,
    ) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        if segments.len() != rows {
            return Err(Error::shape(
                "segment_softmax",
                format!("{} segment ids for {rows} rows", segments.len()),
            ));
        }
        check_index("segment_softmax", &segments, num_segments)?;
        let out = softmax_values(x.data(), rows, cols, &segments, num_segments, slope);
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let needs = self.needs(a);
        self.push(
            "segment_softmax",
            t,
            Op::SegmentSoftmax {
                x: a,
                segments,
                num_segments,
                slope,
            },
            needs,
        )
    }

    /// Mean over head blocks: `R × (heads·F) → R × F`.
    pub fn block_mean(&mut self, a: Var, heads: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        let f = head_width("block_mean", cols, heads)?;
        let d = x.data();
        let inv = 1.0 / heads as f64;
        let mut out = vec![0.0; rows * f];
        for r in 0..rows {
            for k in 0..heads {
                for c in 0..f {
                    out[r * f + c] += d[r * cols + k * f + c] * inv;
                }
            }
        }
        let t = Tensor::matrix(rows, f, out)?;
        let needs = self.needs(a);
        self.push("block_mean", t, Op::BlockMean { x: a, heads }, needs)
    }

    /// Mean softmax cross-entropy of the selected rows against class ids.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        rows: Arc<[usize]>,
        labels: Arc<[usize]>,
    ) -> Result<Var> {
        let x = self.value(logits);
        let (n, c) = (x.rows(), x.cols());
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} rows with {} labels", rows.len(), labels.len()),
            ));
        }
        check_index("softmax_cross_entropy", &rows, n)?;
        check_index("softmax_cross_entropy", &labels, c)?;
        let mut probs = vec![0.0; rows.len() * c];
        let mut loss = 0.0;
        for (t, (&r, &y)) in rows.iter().zip(labels.iter()).enumerate() {
            let z = x.row(r);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
            let lse = m + sum.ln();
            loss += lse - z[y];
            for (p, v) in probs[t * c..(t + 1) * c].iter_mut().zip(z) {
                *p = (v - lse).exp();
            }
        }
        loss /= rows.len() as f64;
        let needs = self.needs(logits);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                rows,
                labels,
                probs,
            },
            needs,
        )
    }

    /// Mean binary cross-entropy with logits over every (selected row, class) entry;
    /// `targets` holds `rows.len() × C` values in {0, 1}.
    pub fn sigmoid_bce(
        &mut self,
        logits: Var,
        rows: Arc<[usize]>,
        targets: Arc<[f64]>,
    ) -> Result<Var> {
        let x = self.value(logits);
        let (n, c) = (x.rows(), x.cols());
        if rows.is_empty() || targets.len() != rows.len() * c {
            return Err(Error::shape(
                "sigmoid_bce",
                format!(
                    "{} targets for {} rows of width {c}",
                    targets.len(),
                    rows.len()
                ),
            ));
        }
        check_index("sigmoid_bce", &rows, n)?;
        let mut loss = 0.0;
        for (t, &r) in rows.iter().enumerate() {
            for (z, y) in x.row(r).iter().zip(&targets[t * c..(t + 1) * c]) {
                // y·softplus(−z) + (1−y)·softplus(z)
                loss += y * softplus(-z) + (1.0 - y) * softplus(*z);
            }
        }
        loss /= (rows.len() * c) as f64;
        let needs = self.needs(logits);
        self.push(
            "sigmoid_bce",
            Tensor::scalar(loss),
            Op::SigmoidBce {
                logits,
                rows,
                targets,
            },
            needs,
        )
    }

    /// Mean binary cross-entropy of probabilities clamped to `[eps, 1 − eps]`.
    pub fn binary_cross_entropy(
        &mut self,
        probs: Var,
        targets: Arc<[f64]>,
        eps: f64,
    ) -> Result<Var> {
        let p = self.value(probs);
        if p.is_empty() || p.len() != targets.len() {
            return Err(Error::shape(
                "binary_cross_entropy",
                format!("{} probabilities, {} targets", p.len(), targets.len()),
            ));
        }
        let loss = -p
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(&q, &y)| {
                let q = q.clamp(eps, 1.0 - eps);
                y * q.ln() + (1.0 - y) * (1.0 - q).ln()
            })
            .sum::<f64>()
            / p.len() as f64;
        let needs = self.needs(probs);
        self.push(
            "binary_cross_entropy",
            Tensor::scalar(loss),
            Op::BinaryCrossEntropy {
                probs,
                targets,
                eps,
            },
            needs,
        )
    }

    /// Reverse pass from a scalar loss; populates the grad slot of every
    /// `requires_grad` leaf reachable from it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!(
                    "loss must be scalar, shape is {:?}",
                    self.value(loss).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backward_node(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.set_grad(g);
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        // Lazily allocates the input's gradient buffer and hands it to `f`.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let n = nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(buf);
        };
        // Reduces a broadcast gradient back onto an operand of length 1 if needed.
        let reduce = |buf: &mut [f64], contrib: &dyn Fn(usize) -> f64| {
            if buf.len() == 1 && g.len() != 1 {
                buf[0] += (0..g.len()).map(contrib).sum::<f64>();
            } else {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b += contrib(k);
                }
            }
        };
        // buf[k] += f(g[k], other[k]) over equal-length buffers.
        let zip_acc = |buf: &mut [f64], other: &[f64], f: &dyn Fn(f64, f64) -> f64| {
            for ((b, &gk), &o) in buf.iter_mut().zip(g).zip(other) {
                *b += f(gk, o);
            }
        };
        let val = |v: Var| &nodes[v.0].value;
        let bcast = |d: &[f64], k: usize| if d.len() == 1 { d[0] } else { d[k] };

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                acc(*a, &mut |buf| gemm(m, n, k, g, false, bv.data(), true, buf));
                acc(*b, &mut |buf| gemm(k, m, n, av.data(), true, g, false, buf));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |buf| reduce(buf, &|k| g[k]));
                acc(*b, &mut |buf| reduce(buf, &|k| g[k]));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| reduce(buf, &|k| g[k]));
                acc(*b, &mut |buf| reduce(buf, &|k| -g[k]));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |buf| {
                    if bd.len() == buf.len() {
                        zip_acc(buf, bd, &|gk, y| gk * y)
                    } else {
                        reduce(buf, &|k| g[k] * bcast(bd, k))
                    }
                });
                acc(*b, &mut |buf| {
                    if ad.len() == buf.len() {
                        zip_acc(buf, ad, &|gk, x| gk * x)
                    } else {
                        reduce(buf, &|k| g[k] * bcast(ad, k))
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |buf| {
                for (b, gk) in buf.iter_mut().zip(g) {
                    *b += c * gk;
                }
            }),
            Op::LeakyRelu(a, slope) => {
                let x = val(*a).data();
                acc(*a, &mut |buf| {
                    zip_acc(buf, x, &|gk, xk| if xk > 0.0 { gk } else { slope * gk })
                })
            }
            Op::Elu(a) => {
                let x = val(*a).data();
                let y = out.data();
                acc(*a, &mut |buf| {
                    for (((b, &gk), &xk), &yk) in buf.iter_mut().zip(g).zip(x).zip(y) {
                        *b += if xk > 0.0 { gk } else { gk * (yk + 1.0) };
                    }
                })
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(*a, &mut |buf| zip_acc(buf, y, &|gk, yk| gk * yk * (1.0 - yk)))
            }
            Op::Log(a) => {
                let x = val(*a).data();
                acc(*a, &mut |buf| zip_acc(buf, x, &|gk, xk| gk / xk))
            }
            Op::Exp(a) => {
                let y = out.data();
                acc(*a, &mut |buf| zip_acc(buf, y, &|gk, yk| gk * yk))
            }
            Op::Dropout(a, mask) => acc(*a, &mut |buf| zip_acc(buf, mask, &|gk, m| gk * m)),
            Op::Sum(a) => acc(*a, &mut |buf| {
                for b in buf.iter_mut() {
                    *b += g[0];
                }
            }),
            Op::Mean(a) => acc(*a, &mut |buf| {
                let s = g[0] / buf.len() as f64;
                for b in buf.iter_mut() {
                    *b += s;
                }
            }),
            Op::SumSquares(a) => {
                let x = val(*a).data();
                acc(*a, &mut |buf| {
                    for (b, xk) in buf.iter_mut().zip(x) {
                        *b += 2.0 * xk * g[0];
                    }
                })
            }
            Op::SliceCols { x, start } => {
                let cols = val(*x).cols();
                let width = out.cols();
                if width == 0 {
                    return;
                }
                acc(*x, &mut |buf| {
                    for (brow, grow) in buf.chunks_exact_mut(cols).zip(g.chunks_exact(width)) {
                        for (b, gk) in brow[*start..start + width].iter_mut().zip(grow) {
                            *b += gk;
                        }
                    }
                })
            }
            Op::GatherRows { x, index } => {
                let cols = out.cols();
                if cols == 0 {
                    return;
                }
                acc(*x, &mut |buf| {
                    for (&src, grow) in index.iter().zip(g.chunks_exact(cols)) {
                        for (b, gk) in buf[src * cols..(src + 1) * cols].iter_mut().zip(grow) {
                            *b += gk;
                        }
                    }
                })
            }
            Op::EdgeDot {
                x,
                left,
                right,
                heads,
                scale,
            } => {
                let xv = val(*x);
                let cols = xv.cols();
                let f = cols / heads;
                let d = xv.data();
                acc(*x, &mut |buf| {
                    // d(x_p·x_q) reaches row p through x_q and row q through x_p
                    let mut push = |dst: usize, src: usize, ge: &[f64]| {
                        let xs = &d[src * cols..(src + 1) * cols];
                        let bd = &mut buf[dst * cols..(dst + 1) * cols];
                        for ((bk, xk), &gk) in bd.chunks_exact_mut(f).zip(xs.chunks_exact(f)).zip(ge) {
                            let s = scale * gk;
                            for (b, v) in bk.iter_mut().zip(xk) {
                                *b += s * v;
                            }
                        }
                    };
                    for ((&p, &q), ge) in left.iter().zip(right.iter()).zip(g.chunks_exact(*heads)) {
                        push(p, q, ge);
                        push(q, p, ge);
                    }
                })
            }
            Op::BlockDot { x, w, heads } => {
                let (xv, wv) = (val(*x), val(*w));
                let cols = xv.cols();
                let f = cols / heads;
                let (d, wd) = (xv.data(), wv.data());
                acc(*x, &mut |buf| {
                    for (brow, grow) in buf.chunks_exact_mut(cols).zip(g.chunks_exact(*heads)) {
                        for ((bk, wk), &gk) in brow.chunks_exact_mut(f).zip(wd.chunks_exact(f)).zip(grow) {
                            for (b, wc) in bk.iter_mut().zip(wk) {
                                *b += gk * wc;
                            }
                        }
                    }
                });
                acc(*w, &mut |buf| {
                    for (xrow, grow) in d.chunks_exact(cols).zip(g.chunks_exact(*heads)) {
                        for ((bk, xk), &gk) in buf.chunks_exact_mut(f).zip(xrow.chunks_exact(f)).zip(grow) {
                            for (b, xc) in bk.iter_mut().zip(xk) {
                                *b += gk * xc;
                            }
                        }
                    }
                });
            }
            Op::Aggregate {
                coef,
                x,
                center,
                neighbor,
                heads,
            } => {
                let (cv, xv) = (val(*coef), val(*x));
                let cols = xv.cols();
                let f = cols / heads;
                let (cd, d) = (cv.data(), xv.data());
                acc(*coef, &mut |buf| {
                    for ((&ci, &nj), bk) in center.iter().zip(neighbor.iter()).zip(buf.chunks_exact_mut(*heads)) {
                        let gi = &g[ci * cols..(ci + 1) * cols];
                        let xj = &d[nj * cols..(nj + 1) * cols];
                        for ((b, gh), xh) in bk.iter_mut().zip(gi.chunks_exact(f)).zip(xj.chunks_exact(f)) {
                            *b += dot(gh, xh);
                        }
                    }
                });
                acc(*x, &mut |buf| {
                    for ((&ci, &nj), ck) in center.iter().zip(neighbor.iter()).zip(cd.chunks_exact(*heads)) {
                        let gi = &g[ci * cols..(ci + 1) * cols];
                        let bj = &mut buf[nj * cols..(nj + 1) * cols];
                        for ((bh, gh), &c) in bj.chunks_exact_mut(f).zip(gi.chunks_exact(f)).zip(ck) {
                            if c == 0.0 {
                                continue;
                            }
                            for (b, gv) in bh.iter_mut().zip(gh) {
                                *b += c * gv;
                            }
                        }
                    }
                });
            }
            Op::PairAdd {
                a,
                b,
                left,
                right,
            } => {
                let cols = out.cols();
                if cols == 0 {
                    return;
                }
                for (v, index) in [(*a, left), (*b, right)] {
                    acc(v, &mut |buf| {
                        for (&src, grow) in index.iter().zip(g.chunks_exact(cols)) {
                            for (bv, gk) in buf[src * cols..(src + 1) * cols].iter_mut().zip(grow) {
                                *bv += gk;
                            }
                        }
                    });
                }
            }
            Op::SegmentSoftmax {
                x,
                segments,
                num_segments,
                slope,
            } => {
                let cols = out.cols();
                if cols == 0 {
                    return;
                }
                let y = out.data();
                let xd = val(*x).data();
                // dy/dx = y·(g − Σ_segment g·y), times the leaky slope on the negative side
                let apply = |buf: &mut [f64], range: std::ops::Range<usize>, dots: &[f64]| {
                    let span = range.start * cols..range.end * cols;
                    for (((brow, grow), yrow), xrow) in buf[span.clone()]
                        .chunks_exact_mut(cols)
                        .zip(g[span.clone()].chunks_exact(cols))
                        .zip(y[span.clone()].chunks_exact(cols))
                        .zip(xd[span].chunks_exact(cols))
                    {
                        for ((((b, &gk), &yk), &xk), &dk) in
                            brow.iter_mut().zip(grow).zip(yrow).zip(xrow).zip(dots)
                        {
                            let v = yk * (gk - dk);
                            *b += match slope {
                                Some(sl) if xk <= 0.0 => sl * v,
                                _ => v,
                            };
                        }
                    }
                };
                if let Some(runs) = sorted_runs(segments) {
                    let mut dots = vec![0.0; cols];
                    acc(*x, &mut |buf| {
                        for &(a, b) in &runs {
                            dots.fill(0.0);
                            for (grow, yrow) in g[a * cols..b * cols]
                                .chunks_exact(cols)
                                .zip(y[a * cols..b * cols].chunks_exact(cols))
                            {
                                for ((dk, gk), yk) in dots.iter_mut().zip(grow).zip(yrow) {
                                    *dk += gk * yk;
                                }
                            }
                            apply(buf, a..b, &dots);
                        }
                    });
                } else {
                    let mut dots = vec![0.0; num_segments * cols];
                    for ((grow, yrow), &s) in g.chunks_exact(cols).zip(y.chunks_exact(cols)).zip(segments.iter()) {
                        for ((dk, gk), yk) in dots[s * cols..(s + 1) * cols].iter_mut().zip(grow).zip(yrow) {
                            *dk += gk * yk;
                        }
                    }
                    acc(*x, &mut |buf| {
                        for (r, &s) in segments.iter().enumerate() {
                            apply(buf, r..r + 1, &dots[s * cols..(s + 1) * cols]);
                        }
                    });
                }
            }
            Op::BlockMean { x, heads } => {
                let cols = val(*x).cols();
                let f = out.cols();
                if f == 0 {
                    return;
                }
                let inv = 1.0 / *heads as f64;
                acc(*x, &mut |buf| {
                    for (brow, grow) in buf.chunks_exact_mut(cols).zip(g.chunks_exact(f)) {
                        for bk in brow.chunks_exact_mut(f) {
                            for (b, gk) in bk.iter_mut().zip(grow) {
                                *b += gk * inv;
                            }
                        }
                    }
                })
            }
            Op::SoftmaxCrossEntropy {
                logits,
                rows,
                labels,
                probs,
            } => {
                let c = val(*logits).cols();
                let s = g[0] / rows.len() as f64;
                acc(*logits, &mut |buf| {
                    for (t, (&r, &y)) in rows.iter().zip(labels.iter()).enumerate() {
                        for j in 0..c {
                            let ind = if j == y { 1.0 } else { 0.0 };
                            buf[r * c + j] += s * (probs[t * c + j] - ind);
                        }
                    }
                })
            }
            Op::SigmoidBce {
                logits,
                rows,
                targets,
            } => {
                let xv = val(*logits);
                let c = xv.cols();
                let s = g[0] / (rows.len() * c) as f64;
                acc(*logits, &mut |buf| {
                    for (t, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            let z = xv.data()[r * c + j];
                            buf[r * c + j] += s * (sigmoid(z) - targets[t * c + j]);
                        }
                    }
                })
            }
            Op::BinaryCrossEntropy {
                probs,
                targets,
                eps,
            } => {
                let p = val(*probs).data();
                let s = g[0] / p.len() as f64;
                acc(*probs, &mut |buf| {
                    for ((b, &q), &y) in buf.iter_mut().zip(p).zip(targets.iter()) {
                        if q < *eps || q > 1.0 - eps {
                            continue;
                        }
                        *b += -s * (y / q - (1.0 - y) / (1.0 - q));
                    }
                })
            }
        }
    }
}

/// Maximal runs of equal ids as `start..end` row ranges, or `None` when the
/// ids ever decrease (CSR center lists are always sorted).
fn sorted_runs(segments: &[usize]) -> Option<Vec<(usize, usize)>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for r in 1..=segments.len() {
        if r == segments.len() || segments[r] != segments[start] {
            if r < segments.len() && segments[r] < segments[start] {
                return None;
            }
            runs.push((start, r));
            start = r;
        }
    }
    Some(runs)
}

#[inline]
fn leaky(v: f64, slope: Option<f64>) -> f64 {
    match slope {
        Some(s) if v <= 0.0 => s * v,
        _ => v,
    }
}

/// Stable per-segment softmax on raw buffers; shared with the attention code.
pub(crate) fn segment_softmax_values(
    x: &[f64],
    rows: usize,
    cols: usize,
    segments: &[usize],
    num_segments: usize,
) -> Vec<f64> {
    softmax_values(x, rows, cols, segments, num_segments, None)
}

/// Softmax of `leaky(x)` per segment and column.
fn softmax_values(
    x: &[f64],
    rows: usize,
    cols: usize,
    segments: &[usize],
    num_segments: usize,
    slope: Option<f64>,
) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    if cols == 0 {
        return out;
    }
    if let Some(runs) = sorted_runs(segments) {
        let mut max = vec![0.0; cols];
        let mut sum = vec![0.0; cols];
        for (a, b) in runs {
            let xs = &x[a * cols..b * cols];
            let os = &mut out[a * cols..b * cols];
            max.fill(f64::NEG_INFINITY);
            for row in xs.chunks_exact(cols) {
                for (m, &v) in max.iter_mut().zip(row) {
                    *m = m.max(leaky(v, slope));
                }
            }
            sum.fill(0.0);
            for (orow, row) in os.chunks_exact_mut(cols).zip(xs.chunks_exact(cols)) {
                for (((o, &v), m), s) in orow.iter_mut().zip(row).zip(&max).zip(sum.iter_mut()) {
                    let e = (leaky(v, slope) - m).exp();
                    *o = e;
                    *s += e;
                }
            }
            for orow in os.chunks_exact_mut(cols) {
                for (o, s) in orow.iter_mut().zip(&sum) {
                    *o /= s;
                }
            }
        }
        return out;
    }
    let mut max = vec![f64::NEG_INFINITY; num_segments * cols];
    for (row, &s) in x.chunks_exact(cols).zip(segments) {
        for (m, &v) in max[s * cols..(s + 1) * cols].iter_mut().zip(row) {
            *m = m.max(leaky(v, slope));
        }
    }
    let mut sum = vec![0.0; num_segments * cols];
    for ((orow, row), &s) in out.chunks_exact_mut(cols).zip(x.chunks_exact(cols)).zip(segments) {
        let ms = &max[s * cols..(s + 1) * cols];
        for (((o, &v), m), sm) in orow
            .iter_mut()
            .zip(row)
            .zip(ms)
            .zip(sum[s * cols..(s + 1) * cols].iter_mut())
        {
            let e = (leaky(v, slope) - m).exp();
            *o = e;
            *sm += e;
        }
    }
    for (orow, &s) in out.chunks_exact_mut(cols).zip(segments) {
        for (o, sm) in orow.iter_mut().zip(&sum[s * cols..(s + 1) * cols]) {
            *o /= sm;
        }
    }
    out
}
