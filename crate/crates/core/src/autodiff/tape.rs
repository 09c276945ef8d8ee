use super::tensor::Tensor;
use crate::special::{digamma, ln_gamma, trigamma};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op} expects {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {0} does not belong to this tape")]
    InvalidNode(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Index of a node on the [`Tape`] that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded on a tape.
///
/// Binary elementwise ops broadcast singleton rows/columns.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Abs,
    Log,
    Exp,
    Sqrt,
    Softplus,
    Sigmoid,
    Lgamma,
    Digamma,
    /// Elementwise power with a constant exponent.
    Powf(f64),
    Scale(f64),
    /// Sum of all entries, 1×1 result.
    Sum,
    /// Per-row sum, r×1 result.
    SumRows,
    /// Per-column sum, 1×c result.
    SumCols,
    /// Log-sum-exp over all entries, 1×1 result.
    LogSumExp,
    /// Per-row log-sum-exp, r×1 result.
    LogSumExpRows,
    Dot,
    MatMul,
    ConcatCols,
    ConcatRows,
    SliceCols { start: usize, len: usize },
    SliceRows { start: usize, len: usize },
    Reshape { rows: usize, cols: usize },
    /// Tiles the whole matrix `n` times vertically.
    RepeatRows(usize),
    Transpose,
    StopGradient,
    /// Elementwise node whose local partials w.r.t. each input were
    /// computed outside the tape (implicit reparameterization).
    Implicit { partials: Vec<Tensor> },
}

impl Op {
    /// Parses the name of a parameter-free opcode.
    pub fn from_name(name: &str) -> Result<Op> {
        Ok(match name {
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "div" => Op::Div,
            "neg" => Op::Neg,
            "abs" => Op::Abs,
            "log" => Op::Log,
            "exp" => Op::Exp,
            "sqrt" => Op::Sqrt,
            "softplus" => Op::Softplus,
            "sigmoid" => Op::Sigmoid,
            "lgamma" => Op::Lgamma,
            "digamma" => Op::Digamma,
            "sum" => Op::Sum,
            "sum_rows" => Op::SumRows,
            "sum_cols" => Op::SumCols,
            "logsumexp" => Op::LogSumExp,
            "logsumexp_rows" => Op::LogSumExpRows,
            "dot" => Op::Dot,
            "matmul" | "matvec" => Op::MatMul,
            "concat" | "concat_cols" => Op::ConcatCols,
            "concat_rows" => Op::ConcatRows,
            "transpose" => Op::Transpose,
            "stop_gradient" => Op::StopGradient,
            other => return Err(AutodiffError::UnknownOpcode(other.to_string())),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Abs => "abs",
            Op::Log => "log",
            Op::Exp => "exp",
            Op::Sqrt => "sqrt",
            Op::Softplus => "softplus",
            Op::Sigmoid => "sigmoid",
            Op::Lgamma => "lgamma",
            Op::Digamma => "digamma",
            Op::Powf(_) => "pow",
            Op::Scale(_) => "scale",
            Op::Sum => "sum",
            Op::SumRows => "sum_rows",
            Op::SumCols => "sum_cols",
            Op::LogSumExp => "logsumexp",
            Op::LogSumExpRows => "logsumexp_rows",
            Op::Dot => "dot",
            Op::MatMul => "matmul",
            Op::ConcatCols => "concat_cols",
            Op::ConcatRows => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::Reshape { .. } => "reshape",
            Op::RepeatRows(_) => "repeat_rows",
            Op::Transpose => "transpose",
            Op::StopGradient => "stop_gradient",
            Op::Implicit { .. } => "implicit",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::Leaf => Some(0),
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Dot | Op::MatMul => Some(2),
            Op::ConcatCols | Op::ConcatRows | Op::Implicit { .. } => None,
            _ => Some(1),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
}

/// Append-only record of a single forward pass.
///
/// Every input of node `i` has an index below `i`, so a reverse sweep over
/// the node list is a valid topological order for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Tensor>,
}

/// Result of [`Tape::backward`]: one gradient per node reached from the output.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`; zero-shaped like `like` when the node was unreached.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }

    /// Scalar gradient (0 when unreached).
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.get(id).map(|g| g.item()).unwrap_or(0.0)
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.rows(), b.rows()), dim(a.cols(), b.cols())) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AutodiffError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        }),
    }
}

fn binary(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (r, c) = broadcast_shape(op, a, b)?;
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::new(r, c, data));
    }
    Ok(Tensor::from_fn(r, c, |i, j| f(a.bget(i, j), b.bget(i, j))))
}

fn unary_checked(
    op: &'static str,
    a: &Tensor,
    valid: impl Fn(f64) -> bool,
    f: impl Fn(f64) -> f64,
) -> Result<Tensor> {
    if let Some(&bad) = a.data().iter().find(|&&v| !valid(v)) {
        return Err(AutodiffError::Domain { op, value: bad });
    }
    Ok(a.map(f))
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log Σ exp(v)`; `-∞` for an empty or all-`-∞` slice.
/// Chain-rule product where a zero cotangent wins over an infinite local
/// derivative: entries that carry no weight (say, a log-weight at `-inf`)
/// must not poison their inputs with `0 · inf`.
fn chain(upstream: f64, local: f64) -> f64 {
    if upstream == 0.0 {
        0.0
    } else {
        upstream * local
    }
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn forward(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    if let Some(n) = op.arity() {
        if inputs.len() != n {
            return Err(AutodiffError::Arity {
                op: op.name(),
                expected: n,
                got: inputs.len(),
            });
        }
    }
    let a = || inputs[0];
    Ok(match op {
        Op::Leaf => unreachable!("leaves are created with Tape::leaf"),
        Op::Add => binary("add", a(), inputs[1], |x, y| x + y)?,
        Op::Sub => binary("sub", a(), inputs[1], |x, y| x - y)?,
        Op::Mul => binary("mul", a(), inputs[1], |x, y| x * y)?,
        Op::Div => binary("div", a(), inputs[1], |x, y| x / y)?,
        Op::Neg => a().map(|x| -x),
        Op::Abs => a().map(f64::abs),
        Op::Log => unary_checked("log", a(), |x| x > 0.0, f64::ln)?,
        Op::Exp => a().map(f64::exp),
        Op::Sqrt => unary_checked("sqrt", a(), |x| x > 0.0, f64::sqrt)?,
        Op::Softplus => a().map(softplus),
        Op::Sigmoid => a().map(sigmoid),
        Op::Lgamma => unary_checked("lgamma", a(), |x| x > 0.0, ln_gamma)?,
        Op::Digamma => unary_checked("digamma", a(), |x| x > 0.0, digamma)?,
        Op::Powf(p) => {
            let p = *p;
            if p.fract() != 0.0 {
                unary_checked("pow", a(), |x| x > 0.0, |x| x.powf(p))?
            } else {
                a().map(|x| x.powf(p))
            }
        }
        Op::Scale(s) => {
            let s = *s;
            a().map(|x| x * s)
        }
        Op::Sum => Tensor::scalar(a().sum()),
        Op::SumRows => {
            let t = a();
            Tensor::column((0..t.rows()).map(|i| t.row_slice(i).iter().sum()).collect())
        }
        Op::SumCols => {
            let t = a();
            Tensor::from_fn(1, t.cols(), |_, j| (0..t.rows()).map(|i| t.get(i, j)).sum())
        }
        Op::LogSumExp => Tensor::scalar(logsumexp(a().data())),
        Op::LogSumExpRows => {
            let t = a();
            Tensor::column((0..t.rows()).map(|i| logsumexp(t.row_slice(i))).collect())
        }
        Op::Dot => {
            let (x, y) = (a(), inputs[1]);
            if x.len() != y.len() {
                return Err(AutodiffError::Shape {
                    op: "dot",
                    lhs: x.shape(),
                    rhs: y.shape(),
                });
            }
            Tensor::scalar(x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum())
        }
        Op::MatMul => {
            let (x, y) = (a(), inputs[1]);
            if x.cols() != y.rows() {
                return Err(AutodiffError::Shape {
                    op: "matmul",
                    lhs: x.shape(),
                    rhs: y.shape(),
                });
            }
            x.matmul(y)
        }
        Op::ConcatCols => {
            let rows = inputs.first().map(|t| t.rows()).unwrap_or(0);
            for t in inputs {
                if t.rows() != rows {
                    return Err(AutodiffError::Shape {
                        op: "concat_cols",
                        lhs: inputs[0].shape(),
                        rhs: t.shape(),
                    });
                }
            }
            let cols: usize = inputs.iter().map(|t| t.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for t in inputs {
                    data.extend_from_slice(t.row_slice(i));
                }
            }
            Tensor::new(rows, cols, data)
        }
        Op::ConcatRows => {
            let cols = inputs.first().map(|t| t.cols()).unwrap_or(0);
            for t in inputs {
                if t.cols() != cols {
                    return Err(AutodiffError::Shape {
                        op: "concat_rows",
                        lhs: inputs[0].shape(),
                        rhs: t.shape(),
                    });
                }
            }
            let rows: usize = inputs.iter().map(|t| t.rows()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for t in inputs {
                data.extend_from_slice(t.data());
            }
            Tensor::new(rows, cols, data)
        }
        Op::SliceCols { start, len } => {
            let t = a();
            if start + len > t.cols() {
                return Err(AutodiffError::Shape {
                    op: "slice_cols",
                    lhs: t.shape(),
                    rhs: (*start, *len),
                });
            }
            Tensor::from_fn(t.rows(), *len, |i, j| t.get(i, start + j))
        }
        Op::SliceRows { start, len } => {
            let t = a();
            if start + len > t.rows() {
                return Err(AutodiffError::Shape {
                    op: "slice_rows",
                    lhs: t.shape(),
                    rhs: (*start, *len),
                });
            }
            Tensor::new(*len, t.cols(), t.data()[start * t.cols()..(start + len) * t.cols()].to_vec())
        }
        Op::Reshape { rows, cols } => {
            let t = a();
            if rows * cols != t.len() {
                return Err(AutodiffError::Shape {
                    op: "reshape",
                    lhs: t.shape(),
                    rhs: (*rows, *cols),
                });
            }
            Tensor::new(*rows, *cols, t.data().to_vec())
        }
        Op::RepeatRows(n) => {
            let t = a();
            let mut data = Vec::with_capacity(n * t.len());
            for _ in 0..*n {
                data.extend_from_slice(t.data());
            }
            Tensor::new(n * t.rows(), t.cols(), data)
        }
        Op::Transpose => a().transpose(),
        Op::StopGradient => a().clone(),
        Op::Implicit { .. } => unreachable!("implicit nodes are created with Tape::implicit"),
    })
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

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(AutodiffError::InvalidNode(id.0))
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs });
        self.values.push(value);
        id
    }

    /// Records an input (parameter or constant) node.
    pub fn leaf(&mut self, value: impl Into<Tensor>) -> NodeId {
        self.push(Op::Leaf, Vec::new(), value.into())
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.leaf(Tensor::scalar(value))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.values[id.0].item()
    }

    /// Records `op` applied to `inputs`, computing the forward value.
    pub fn record(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        for &id in inputs {
            self.check(id)?;
        }
        if matches!(op, Op::Leaf | Op::Implicit { .. }) {
            return Err(AutodiffError::UnknownOpcode(format!(
                "{} cannot be recorded directly",
                op.name()
            )));
        }
        let value = {
            let vals: Vec<&Tensor> = inputs.iter().map(|id| &self.values[id.0]).collect();
            forward(&op, &vals)?
        };
        Ok(self.push(op, inputs.to_vec(), value))
    }

    /// Records an elementwise node with externally supplied value and local
    /// partials (one tensor per input, each shaped like `value`).
    pub fn implicit(&mut self, inputs: &[NodeId], value: Tensor, partials: Vec<Tensor>) -> Result<NodeId> {
        if inputs.len() != partials.len() {
            return Err(AutodiffError::Arity {
                op: "implicit",
                expected: inputs.len(),
                got: partials.len(),
            });
        }
        for (&id, p) in inputs.iter().zip(&partials) {
            self.check(id)?;
            if p.shape() != value.shape() {
                return Err(AutodiffError::Shape {
                    op: "implicit",
                    lhs: value.shape(),
                    rhs: p.shape(),
                });
            }
            let in_shape = self.values[id.0].shape();
            broadcast_shape("implicit", &self.values[id.0], &value).and_then(|s| {
                if s == value.shape() {
                    Ok(())
                } else {
                    Err(AutodiffError::Shape {
                        op: "implicit",
                        lhs: value.shape(),
                        rhs: in_shape,
                    })
                }
            })?;
        }
        Ok(self.push(Op::Implicit { partials }, inputs.to_vec(), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul, &[a, b])
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Div, &[a, b])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Neg, &[a])
    }
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Abs, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Log, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp, &[a])
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sqrt, &[a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Softplus, &[a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sigmoid, &[a])
    }
    pub fn lgamma(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Lgamma, &[a])
    }
    pub fn digamma(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Digamma, &[a])
    }
    pub fn powf(&mut self, a: NodeId, p: f64) -> Result<NodeId> {
        self.record(Op::Powf(p), &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Powf(2.0), &[a])
    }
    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.record(Op::Scale(s), &[a])
    }
    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let c = self.constant(s);
        self.add(a, c)
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum, &[a])
    }
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SumRows, &[a])
    }
    pub fn sum_cols(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SumCols, &[a])
    }
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::LogSumExp, &[a])
    }
    pub fn logsumexp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::LogSumExpRows, &[a])
    }
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Dot, &[a, b])
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul, &[a, b])
    }
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.record(Op::ConcatCols, parts)
    }
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.record(Op::ConcatRows, parts)
    }
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::SliceCols { start, len }, &[a])
    }
    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::SliceRows { start, len }, &[a])
    }
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        self.record(Op::Reshape { rows, cols }, &[a])
    }
    pub fn repeat_rows(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        self.record(Op::RepeatRows(n), &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Transpose, &[a])
    }

    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::StopGradient, &[a])
    }

    /// Mean over all entries.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// `log (1/n) Σ exp(a_i)` over all entries.
    pub fn logmeanexp(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len() as f64;
        let l = self.logsumexp(a)?;
        self.add_scalar(l, -n.ln())
    }

    /// Per-row `log (1/c) Σ_j exp(a_ij)`.
    pub fn logmeanexp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).cols() as f64;
        let l = self.logsumexp_rows(a)?;
        self.add_scalar(l, -n.ln())
    }

    /// Reverse sweep from `output`, seeded with ones (the gradient of the sum
    /// of `output`'s entries). Fan-out contributions are summed.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        self.check(output)?;
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        let out_val = &self.values[output.0];
        grads[output.0] = Some(Tensor::filled(out_val.rows(), out_val.cols(), 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !matches!(node.op, Op::Leaf | Op::StopGradient) {
                let contributions = self.local_backward(i, &g);
                for (input, contrib) in node.inputs.iter().zip(contributions) {
                    let Some(contrib) = contrib else { continue };
                    match &mut grads[input.0] {
                        Some(acc) => acc.add_assign(&contrib),
                        slot @ None => *slot = Some(contrib),
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradient contributions of node `i` to each of its inputs, shaped like
    /// the inputs.
    fn local_backward(&self, i: usize, g: &Tensor) -> Vec<Option<Tensor>> {
        let node = &self.nodes[i];
        let out = &self.values[i];
        let inp = |k: usize| &self.values[node.inputs[k].0];
        let elementwise = |f: &dyn Fn(f64, f64) -> f64| -> Tensor {
            // f(input value, output value) -> local derivative
            let x = inp(0);
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&xv, &yv), &gv)| chain(gv, f(xv, yv)))
                .collect();
            Tensor::new(x.rows(), x.cols(), data)
        };
        match &node.op {
            Op::Leaf | Op::StopGradient => vec![],
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                let (a, b) = (inp(0), inp(1));
                let (r, c) = out.shape();
                let mut ga = Tensor::zeros(r, c);
                let mut gb = Tensor::zeros(r, c);
                for ii in 0..r {
                    for jj in 0..c {
                        let gv = g.get(ii, jj);
                        let (x, y) = (a.bget(ii, jj), b.bget(ii, jj));
                        let (da, db) = match node.op {
                            Op::Add => (1.0, 1.0),
                            Op::Sub => (1.0, -1.0),
                            Op::Mul => (y, x),
                            _ => (1.0 / y, -x / (y * y)),
                        };
                        ga.set(ii, jj, chain(gv, da));
                        gb.set(ii, jj, chain(gv, db));
                    }
                }
                vec![
                    Some(ga.reduce_to(a.rows(), a.cols())),
                    Some(gb.reduce_to(b.rows(), b.cols())),
                ]
            }
            Op::Neg => vec![Some(g.map(|v| -v))],
            Op::Abs => vec![Some(elementwise(&|x, _| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }))],
            Op::Log => vec![Some(elementwise(&|x, _| 1.0 / x))],
            Op::Exp => vec![Some(elementwise(&|_, y| y))],
            Op::Sqrt => vec![Some(elementwise(&|_, y| 0.5 / y))],
            Op::Softplus => vec![Some(elementwise(&|x, _| sigmoid(x)))],
            Op::Sigmoid => vec![Some(elementwise(&|_, y| y * (1.0 - y)))],
            Op::Lgamma => vec![Some(elementwise(&|x, _| digamma(x)))],
            Op::Digamma => vec![Some(elementwise(&|x, _| trigamma(x)))],
            Op::Powf(p) => {
                let p = *p;
                vec![Some(elementwise(&|x, _| p * x.powf(p - 1.0)))]
            }
            Op::Scale(s) => {
                let s = *s;
                vec![Some(g.map(|v| v * s))]
            }
            Op::Sum => {
                let x = inp(0);
                vec![Some(Tensor::filled(x.rows(), x.cols(), g.item()))]
            }
            Op::SumRows => {
                let x = inp(0);
                vec![Some(Tensor::from_fn(x.rows(), x.cols(), |r, _| g.get(r, 0)))]
            }
            Op::SumCols => {
                let x = inp(0);
                vec![Some(Tensor::from_fn(x.rows(), x.cols(), |_, c| g.get(0, c)))]
            }
            Op::LogSumExp => {
                let x = inp(0);
                let y = out.item();
                let gv = g.item();
                let data = if y == f64::NEG_INFINITY {
                    vec![0.0; x.len()]
                } else {
                    x.data().iter().map(|&v| gv * (v - y).exp()).collect()
                };
                vec![Some(Tensor::new(x.rows(), x.cols(), data))]
            }
            Op::LogSumExpRows => {
                let x = inp(0);
                vec![Some(Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    let y = out.get(r, 0);
                    if y == f64::NEG_INFINITY {
                        0.0
                    } else {
                        g.get(r, 0) * (x.get(r, c) - y).exp()
                    }
                }))]
            }
            Op::Dot => {
                let (a, b) = (inp(0), inp(1));
                let gv = g.item();
                vec![Some(b.map(|v| v * gv).reshape_like(a)), Some(a.map(|v| v * gv).reshape_like(b))]
            }
            Op::MatMul => {
                let (a, b) = (inp(0), inp(1));
                vec![Some(g.matmul_t(b)), Some(a.t_matmul(g))]
            }
            Op::ConcatCols => {
                let mut offset = 0;
                node.inputs
                    .iter()
                    .map(|id| {
                        let t = &self.values[id.0];
                        let start = offset;
                        offset += t.cols();
                        Some(Tensor::from_fn(t.rows(), t.cols(), |r, c| g.get(r, start + c)))
                    })
                    .collect()
            }
            Op::ConcatRows => {
                let mut offset = 0;
                node.inputs
                    .iter()
                    .map(|id| {
                        let t = &self.values[id.0];
                        let start = offset * t.cols();
                        offset += t.rows();
                        Some(Tensor::new(t.rows(), t.cols(), g.data()[start..start + t.len()].to_vec()))
                    })
                    .collect()
            }
            Op::SliceCols { start, len } => {
                let x = inp(0);
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    for c in 0..*len {
                        gx.set(r, start + c, g.get(r, c));
                    }
                }
                vec![Some(gx)]
            }
            Op::SliceRows { start, len } => {
                let x = inp(0);
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                let w = x.cols();
                gx.data_mut()[start * w..(start + len) * w].copy_from_slice(g.data());
                vec![Some(gx)]
            }
            Op::Reshape { .. } => {
                let x = inp(0);
                vec![Some(Tensor::new(x.rows(), x.cols(), g.data().to_vec()))]
            }
            Op::RepeatRows(n) => {
                let x = inp(0);
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                for k in 0..*n {
                    let block = &g.data()[k * x.len()..(k + 1) * x.len()];
                    for (a, b) in gx.data_mut().iter_mut().zip(block) {
                        *a += b;
                    }
                }
                vec![Some(gx)]
            }
            Op::Transpose => vec![Some(g.transpose())],
            Op::Implicit { partials } => node
                .inputs
                .iter()
                .zip(partials)
                .map(|(id, p)| {
                    let x = &self.values[id.0];
                    let full = Tensor::new(
                        p.rows(),
                        p.cols(),
                        p.data().iter().zip(g.data()).map(|(a, &b)| chain(b, *a)).collect(),
                    );
                    Some(full.reduce_to(x.rows(), x.cols()))
                })
                .collect(),
        }
    }

    /// Recomputes every non-leaf value from the leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.values.len());
        for (node, stored) in self.nodes.iter().zip(&self.values) {
            let v = match node.op {
                Op::Leaf | Op::Implicit { .. } => stored.clone(),
                _ => {
                    let ins: Vec<&Tensor> = node.inputs.iter().map(|id| &values[id.0]).collect();
                    forward(&node.op, &ins)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Input ids of a node (for invariant checks).
    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }
}

impl Tensor {
    fn reshape_like(self, like: &Tensor) -> Tensor {
        Tensor::new(like.rows(), like.cols(), self.into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad1(f: impl Fn(&mut Tape, NodeId) -> Result<NodeId>, x: f64) -> (f64, f64) {
        let mut tape = Tape::new();
        let xn = tape.constant(x);
        let y = f(&mut tape, xn).unwrap();
        let g = tape.backward(y).unwrap();
        (tape.scalar(y), g.scalar(xn))
    }

    #[test]
    fn log_local_partial() {
        let (_, g) = grad1(|t, x| t.log(x), 2.0);
        assert_eq!(g, 0.5);
    }

    #[test]
    fn square_and_softplus() {
        let (v, g) = grad1(|t, x| t.mul(x, x), 3.0);
        assert_eq!((v, g), (9.0, 6.0));
        let (_, g) = grad1(|t, x| t.softplus(x), 0.0);
        assert_eq!(g, 0.5);
    }

    #[test]
    fn logsumexp_symmetric_pair() {
        let mut tape = Tape::new();
        let x = tape.constant(1.0);
        let y = tape.constant(1.0);
        let v = tape.concat_cols(&[x, y]).unwrap();
        let l = tape.logsumexp(v).unwrap();
        let g = tape.backward(l).unwrap();
        assert!((g.scalar(x) - 0.5).abs() < 1e-15 && (g.scalar(y) - 0.5).abs() < 1e-15);

        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::row(vec![0.0, 0.0]));
        let l = tape.logsumexp(z).unwrap();
        assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_does_not_overflow() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::row(vec![1000.0, 1000.0]));
        let l = tape.logsumexp(z).unwrap();
        let expected = 1000.0 + 2f64.ln();
        assert!((tape.scalar(l) - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }

    #[test]
    fn stop_gradient_freezes_factor() {
        let (v, g) = grad1(
            |t, x| {
                let s = t.stop_gradient(x)?;
                t.mul(x, s)
            },
            3.0,
        );
        assert_eq!((v, g), (9.0, 3.0));
        let (_, g) = grad1(|t, x| t.stop_gradient(x), 1.7);
        assert_eq!(g, 0.0);
        let (_, g) = grad1(
            |t, x| {
                let sp = t.softplus(x)?;
                let s = t.stop_gradient(sp)?;
                t.add(s, x)
            },
            0.0,
        );
        assert_eq!(g, 1.0);
    }

    #[test]
    fn domain_errors_carry_value() {
        let mut tape = Tape::new();
        let x = tape.constant(-2.0);
        assert_eq!(
            tape.log(x).unwrap_err(),
            AutodiffError::Domain { op: "log", value: -2.0 }
        );
        let z = tape.constant(0.0);
        assert!(matches!(tape.sqrt(z), Err(AutodiffError::Domain { op: "sqrt", .. })));
    }

    #[test]
    fn unknown_opcode_rejected() {
        assert!(matches!(Op::from_name("tanhh"), Err(AutodiffError::UnknownOpcode(_))));
        assert_eq!(Op::from_name("log").unwrap(), Op::Log);
    }

    #[test]
    fn broadcasting_gradients_reduce() {
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(Tensor::row(vec![10.0, 20.0]));
        let s = tape.add(m, b).unwrap();
        let t = tape.sum(s).unwrap();
        let g = tape.backward(t).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(g.get(m).unwrap().data(), &[1.0; 4]);
    }
}
