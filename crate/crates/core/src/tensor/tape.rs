use std::sync::Arc;

use rand::Rng;

use super::kernels;
use super::nn::{Mode, RunningStats};
use super::{Result, Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix stored as `(row, col, weight)` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<F> {
    rows: usize,
    cols: usize,
    entries: Vec<(u32, u32, F)>,
}

impl<F: Scalar> SparseMatrix<F> {
    pub fn new(rows: usize, cols: usize, entries: Vec<(u32, u32, F)>) -> Result<Self> {
        if let Some(&(r, c, _)) = entries
            .iter()
            .find(|(r, c, _)| *r as usize >= rows || *c as usize >= cols)
        {
            return Err(TensorError::Contract(format!(
                "sparse entry ({r}, {c}) outside {rows}x{cols}"
            )));
        }
        Ok(SparseMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(u32, u32, F)] {
        &self.entries
    }

    /// `self * x` for a dense `x`.
    pub fn apply(&self, x: &[F], x_cols: usize) -> Vec<F> {
        let mut out = vec![F::zero(); self.rows * x_cols];
        for &(r, c, w) in &self.entries {
            let (r, c) = (r as usize, c as usize);
            let src = &x[c * x_cols..(c + 1) * x_cols];
            let dst = &mut out[r * x_cols..(r + 1) * x_cols];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + w * s;
            }
        }
        out
    }

    /// `self^T * g` for a dense `g`.
    fn apply_transposed(&self, g: &[F], g_cols: usize) -> Vec<F> {
        let mut out = vec![F::zero(); self.cols * g_cols];
        for &(r, c, w) in &self.entries {
            let (r, c) = (r as usize, c as usize);
            let src = &g[r * g_cols..(r + 1) * g_cols];
            let dst = &mut out[c * g_cols..(c + 1) * g_cols];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + w * s;
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddRow(Var, Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SumAll(Var),
    SegmentSum(Var, Vec<usize>),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    LogEps(Var, F),
    Softmax(Var),
    LogSoftmax(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<F>,
        inv_std: Vec<F>,
        batch_stats: bool,
    },
    Dropout(Var, Vec<F>),
    GatherRows(Var, Vec<usize>),
    SpMm(Arc<SparseMatrix<F>>, Var),
}

impl<F> Op<F> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "elementwise_mul",
            Op::Scale(..) => "scale",
            Op::AddRow(..) => "add_row",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SumAll(..) => "sum",
            Op::SegmentSum(..) => "sum_rows",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Exp(..) => "exp",
            Op::LogEps(..) => "log",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::BatchNorm { .. } => "batchnorm_1d",
            Op::Dropout(..) => "dropout",
            Op::GatherRows(..) => "gather_rows",
            Op::SpMm(..) => "sparse_matmul",
        }
    }
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Records operations in execution order; inputs always precede outputs.
#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

/// Gradients of a scalar loss with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, var: Var) -> Option<&Tensor<F>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn same_shape(op: &'static str, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let (m, k, n) = (x.rows(), x.cols(), y.cols());
        let out = Tensor::from_vec(m, n, kernels::matmul(x.data(), y.data(), m, k, n))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(TensorError::Shape {
                op: "matmul_nt",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let (m, k, n) = (x.rows(), x.cols(), y.rows());
        let out = Tensor::from_vec(m, n, kernels::matmul_nt(x.data(), y.data(), m, k, n))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulNt(a, b), rg))
    }

    fn zip(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(op_name, x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::from_vec(x.rows(), x.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |p, q| p + q)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |p, q| p - q)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("elementwise_mul", a, b, |p, q| p * q)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: F) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Adds a `1 x c` row to every row of an `r x c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(row));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(TensorError::Shape {
                op: "add_row",
                lhs: x.shape(),
                rhs: b.shape(),
            });
        }
        let c = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b.data()[i % c])
            .collect();
        let out = Tensor::from_vec(x.rows(), c, data)?;
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Side-by-side concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(TensorError::Shape {
                op: "concat_cols",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let mut data = Vec::with_capacity(x.len() + y.len());
        for r in 0..x.rows() {
            data.extend_from_slice(x.row(r));
            data.extend_from_slice(y.row(r));
        }
        let out = Tensor::from_vec(x.rows(), x.cols() + y.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Stacks `b` below `a`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(TensorError::Shape {
                op: "concat_rows",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let mut data = x.data().to_vec();
        data.extend_from_slice(y.data());
        let out = Tensor::from_vec(x.rows() + y.rows(), x.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatRows(a, b), rg))
    }

    /// Sum of every entry, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum::<F>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::SumAll(a), rg)
    }

    /// Column sums over all rows: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let rows = self.value(a).rows();
        self.segment_sum_rows(a, &[0, rows])
    }

    /// Sums contiguous row blocks. `offsets` holds block boundaries, starting
    /// at 0 and ending at the row count; the output has one row per block.
    pub fn segment_sum_rows(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let valid = offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == x.rows()
            && offsets.windows(2).all(|w| w[0] <= w[1]);
        if !valid {
            return Err(TensorError::Contract(format!(
                "segment offsets {offsets:?} do not partition {} rows",
                x.rows()
            )));
        }
        let c = x.cols();
        let segments = offsets.len() - 1;
        let mut data = vec![F::zero(); segments * c];
        for s in 0..segments {
            let dst = &mut data[s * c..(s + 1) * c];
            for r in offsets[s]..offsets[s + 1] {
                for (d, &v) in dst.iter_mut().zip(x.row(r)) {
                    *d = *d + v;
                }
            }
        }
        let out = Tensor::from_vec(segments, c, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SegmentSum(a, offsets.to_vec()), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(F::zero()));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(kernels::softplus);
        let rg = self.rg(a);
        self.push(out, Op::Softplus(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.exp());
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    /// `ln(x + floor)`.
    pub fn log_eps(&mut self, a: Var, floor: F) -> Var {
        let out = self.value(a).map(|x| (x + floor).ln());
        let rg = self.rg(a);
        self.push(out, Op::LogEps(a, floor), rg)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), x.cols());
        let c = x.cols();
        for r in 0..x.rows() {
            kernels::softmax_row(x.row(r), &mut out.data_mut()[r * c..(r + 1) * c]);
        }
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), x.cols());
        let c = x.cols();
        for r in 0..x.rows() {
            kernels::log_softmax_row(x.row(r), &mut out.data_mut()[r * c..(r + 1) * c]);
        }
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmax(a), rg)
    }

    /// Batch normalization over rows with per-column statistics.
    ///
    /// In training mode the batch mean and biased variance normalize the input
    /// and the running estimates are updated; in eval mode the running
    /// estimates are used and the op is a fixed affine map.
    pub fn batchnorm_1d(
        &mut self,
        a: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<F>,
        mode: Mode,
    ) -> Result<Var> {
        let x = self.value(a);
        let (n, c) = (x.rows(), x.cols());
        for p in [gamma, beta] {
            let t = self.value(p);
            if t.shape() != [1, c] {
                return Err(TensorError::Shape {
                    op: "batchnorm_1d",
                    lhs: x.shape(),
                    rhs: t.shape(),
                });
            }
        }
        if stats.mean.len() != c {
            return Err(TensorError::Contract(format!(
                "batchnorm running stats track {} features, input has {c}",
                stats.mean.len()
            )));
        }
        if n == 0 {
            return Err(TensorError::Contract("batchnorm on an empty batch".into()));
        }
        let eps = stats.eps;
        let batch_stats = mode == Mode::Train;
        let (mean, var) = if batch_stats {
            let nf = F::from_f64(n as f64);
            let mut mean = vec![F::zero(); c];
            for r in 0..n {
                for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nf);
            let mut var = vec![F::zero(); c];
            for r in 0..n {
                for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s = *s + (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s = *s / nf);
            stats.update(&mean, &var, n);
            (mean, var)
        } else {
            (stats.mean.clone(), stats.var.clone())
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut normalized = Vec::with_capacity(n * c);
        for r in 0..n {
            for (j, &v) in x.row(r).iter().enumerate() {
                normalized.push((v - mean[j]) * inv_std[j]);
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let data = normalized
            .iter()
            .enumerate()
            .map(|(i, &h)| g[i % c] * h + b[i % c])
            .collect();
        let out = Tensor::from_vec(n, c, data)?;
        let rg = self.rg(a) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::BatchNorm {
                x: a,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            },
            rg,
        ))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and rescales
    /// survivors by `1/(1-p)` in training mode; identity in eval mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(a);
        }
        let keep = F::from_f64(1.0 / (1.0 - p));
        let x = self.value(a);
        let mask: Vec<F> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.rows()) {
            return Err(TensorError::Contract(format!(
                "row {bad} outside table of {} rows",
                t.rows()
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(indices.len(), t.cols(), data)?;
        let rg = self.rg(table);
        Ok(self.push(out, Op::GatherRows(table, indices.to_vec()), rg))
    }

    /// `adjacency * x` with a constant sparse left operand.
    pub fn sparse_matmul(&mut self, adjacency: Arc<SparseMatrix<F>>, x: Var) -> Result<Var> {
        let v = self.value(x);
        if adjacency.cols() != v.rows() {
            return Err(TensorError::Shape {
                op: "sparse_matmul",
                lhs: [adjacency.rows(), adjacency.cols()],
                rhs: v.shape(),
            });
        }
        let out = Tensor::from_vec(adjacency.rows(), v.cols(), adjacency.apply(v.data(), v.cols()))?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SpMm(adjacency, x), rg))
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for every leaf
    /// recorded with [`Tape::leaf`] and clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<F>> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<F>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            let name = node.op.name();
            for (input, contribution) in self.local_grads(i, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                if contribution.iter().any(|x| !x.is_finite()) {
                    return Err(TensorError::NonFinite { op: name });
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, &c)| *a = *a + c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let out = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match (g, &node.op) {
                    (Some(g), Op::Leaf) if node.requires_grad => {
                        Some(Tensor::from_vec(node.value.rows(), node.value.cols(), g).expect("grad shape"))
                    }
                    _ => None,
                }
            })
            .collect();
        self.nodes.clear();
        Ok(Gradients { grads: out })
    }

    /// Gradient contributions of node `i` to each of its inputs.
    fn local_grads(&self, i: usize, g: &[F]) -> Result<Vec<(Var, Vec<F>)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, w) = (val(*a), val(*b));
                let (m, k, n) = (x.rows(), x.cols(), w.cols());
                if needs(*a) {
                    out.push((*a, kernels::matmul_nt(g, w.data(), m, n, k)));
                }
                if needs(*b) {
                    out.push((*b, kernels::matmul_tn(x.data(), g, m, k, n)));
                }
            }
            Op::MatMulNt(a, b) => {
                let (x, w) = (val(*a), val(*b));
                let (m, k, n) = (x.rows(), x.cols(), w.rows());
                if needs(*a) {
                    out.push((*a, kernels::matmul(g, w.data(), m, n, k)));
                }
                if needs(*b) {
                    out.push((*b, kernels::matmul_tn(g, x.data(), m, n, k)));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|&v| -v).collect()));
            }
            Op::Mul(a, b) => {
                let (x, w) = (val(*a), val(*b));
                out.push((*a, g.iter().zip(w.data()).map(|(&d, &q)| d * q).collect()));
                out.push((*b, g.iter().zip(x.data()).map(|(&d, &p)| d * p).collect()));
            }
            Op::Scale(a, f) => out.push((*a, g.iter().map(|&d| d * *f).collect())),
            Op::AddRow(a, row) => {
                out.push((*a, g.to_vec()));
                if needs(*row) {
                    let c = y.cols();
                    let mut acc = vec![F::zero(); c];
                    for (k, &d) in g.iter().enumerate() {
                        acc[k % c] = acc[k % c] + d;
                    }
                    out.push((*row, acc));
                }
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (val(*a).cols(), val(*b).cols());
                let mut ga = Vec::with_capacity(y.rows() * ca);
                let mut gb = Vec::with_capacity(y.rows() * cb);
                for r in 0..y.rows() {
                    let row = &g[r * (ca + cb)..(r + 1) * (ca + cb)];
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                out.push((*a, ga));
                out.push((*b, gb));
            }
            Op::ConcatRows(a, b) => {
                let split = val(*a).len();
                out.push((*a, g[..split].to_vec()));
                out.push((*b, g[split..].to_vec()));
            }
            Op::SumAll(a) => out.push((*a, vec![g[0]; val(*a).len()])),
            Op::SegmentSum(a, offsets) => {
                let c = y.cols();
                let mut ga = vec![F::zero(); val(*a).len()];
                for s in 0..offsets.len() - 1 {
                    let src = &g[s * c..(s + 1) * c];
                    for r in offsets[s]..offsets[s + 1] {
                        ga[r * c..(r + 1) * c].copy_from_slice(src);
                    }
                }
                out.push((*a, ga));
            }
            Op::Relu(a) => {
                let x = val(*a);
                out.push((
                    *a,
                    g.iter()
                        .zip(x.data())
                        .map(|(&d, &v)| if v > F::zero() { d } else { F::zero() })
                        .collect(),
                ));
            }
            Op::Softplus(a) => {
                let x = val(*a);
                out.push((*a, g.iter().zip(x.data()).map(|(&d, &v)| d * kernels::sigmoid(v)).collect()));
            }
            Op::Exp(a) => out.push((*a, g.iter().zip(y.data()).map(|(&d, &e)| d * e).collect())),
            Op::LogEps(a, floor) => {
                let x = val(*a);
                out.push((*a, g.iter().zip(x.data()).map(|(&d, &v)| d / (v + *floor)).collect()));
            }
            Op::Softmax(a) => {
                let c = y.cols();
                let mut ga = vec![F::zero(); y.len()];
                for r in 0..y.rows() {
                    let (s, d) = (&y.data()[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    let dot: F = s.iter().zip(d).map(|(&p, &q)| p * q).sum();
                    for j in 0..c {
                        ga[r * c + j] = s[j] * (d[j] - dot);
                    }
                }
                out.push((*a, ga));
            }
            Op::LogSoftmax(a) => {
                let c = y.cols();
                let mut ga = vec![F::zero(); y.len()];
                for r in 0..y.rows() {
                    let (ls, d) = (&y.data()[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    let total: F = d.iter().copied().sum();
                    for j in 0..c {
                        ga[r * c + j] = d[j] - ls[j].exp() * total;
                    }
                }
                out.push((*a, ga));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            } => {
                let (n, c) = (y.rows(), y.cols());
                let gam = val(*gamma).data();
                let mut d_gamma = vec![F::zero(); c];
                let mut d_beta = vec![F::zero(); c];
                for k in 0..n * c {
                    d_gamma[k % c] = d_gamma[k % c] + g[k] * normalized[k];
                    d_beta[k % c] = d_beta[k % c] + g[k];
                }
                if needs(*x) {
                    let mut dx = vec![F::zero(); n * c];
                    if *batch_stats {
                        let nf = F::from_f64(n as f64);
                        // d_norm = g * gamma; dx = inv_std/n * (n d_norm - sum d_norm - xhat sum(d_norm xhat))
                        let mut sum_d = vec![F::zero(); c];
                        let mut sum_dx = vec![F::zero(); c];
                        for k in 0..n * c {
                            let dn = g[k] * gam[k % c];
                            sum_d[k % c] = sum_d[k % c] + dn;
                            sum_dx[k % c] = sum_dx[k % c] + dn * normalized[k];
                        }
                        for k in 0..n * c {
                            let j = k % c;
                            let dn = g[k] * gam[j];
                            dx[k] = inv_std[j] / nf * (nf * dn - sum_d[j] - normalized[k] * sum_dx[j]);
                        }
                    } else {
                        for k in 0..n * c {
                            dx[k] = g[k] * gam[k % c] * inv_std[k % c];
                        }
                    }
                    out.push((*x, dx));
                }
                out.push((*gamma, d_gamma));
                out.push((*beta, d_beta));
            }
            Op::Dropout(a, mask) => out.push((*a, g.iter().zip(mask).map(|(&d, &m)| d * m).collect())),
            Op::GatherRows(table, indices) => {
                let t = val(*table);
                let c = t.cols();
                let mut gt = vec![F::zero(); t.len()];
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..c {
                        gt[i * c + j] = gt[i * c + j] + g[r * c + j];
                    }
                }
                out.push((*table, gt));
            }
            Op::SpMm(adjacency, x) => out.push((*x, adjacency.apply_transposed(g, y.cols()))),
        }
        Ok(out)
    }
}
