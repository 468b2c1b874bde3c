//! Reverse-mode automatic differentiation over a define-by-run tape.
//!
//! Every operation records its inputs and enough saved state to produce
//! vector-Jacobian products on the way back. Backward visits nodes in
//! reverse creation order (which is a reverse topological order, since an
//! op can only consume already-created variables) exactly once, with plain
//! sequential accumulation, so gradients are bit-deterministic.
//!
//! Subgradient conventions, chosen once and relied on by the loss terms:
//! `relu`/`abs` at 0 -> 0, `row_norm` at the origin -> 0, `max_reduce`
//! routes its gradient to the first maximal element.

use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use super::AutodiffError;

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape_id: u64,
    index: usize,
}

/// Backward function of a custom primitive: receives the output cotangent,
/// returns one optional gradient per declared input.
pub type CustomBackward = Rc<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Relu(usize),
    Abs(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Softplus(usize),
    Sigmoid(usize),
    MaxReduce(usize),
    MaxAxis0(usize),
    MeanReduce(usize),
    SumReduce(usize),
    SumAxis1(usize),
    RowNorm(usize),
    RowCross(usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    Concat(Vec<usize>),
    Slice { input: usize, start: usize, len: usize },
    Custom { inputs: Vec<usize>, backward: CustomBackward },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether a tracked parameter is upstream of this node.
    tracked: bool,
}

/// A recording of one forward computation.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
}

/// Per-variable gradients produced by [`Tape::backward`].
pub struct Gradients {
    tape_id: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape_id != self.tape_id {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }
}

/// How two elementwise operands line up.
enum Broadcast {
    Same,
    /// rhs is a scalar
    ScalarRhs,
    /// lhs is a scalar
    ScalarLhs,
    /// lhs is (N, M), rhs is (M,)
    RowRhs,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Registers a tracked leaf parameter.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers an untracked constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var {
            tape_id: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var, op: &'static str) -> Result<usize, AutodiffError> {
        if v.tape_id != self.id {
            return Err(AutodiffError::WrongTape { op });
        }
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        Ok(v.index)
    }

    fn t(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    fn binary_broadcast(
        &self,
        op: &'static str,
        a: usize,
        b: usize,
    ) -> Result<Broadcast, AutodiffError> {
        let (sa, sb) = (self.t(a).shape(), self.t(b).shape());
        if sa == sb {
            Ok(Broadcast::Same)
        } else if self.t(b).numel() == 1 {
            Ok(Broadcast::ScalarRhs)
        } else if self.t(a).numel() == 1 {
            Ok(Broadcast::ScalarLhs)
        } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            Ok(Broadcast::RowRhs)
        } else {
            Err(AutodiffError::Shape {
                op,
                detail: format!("{sa:?} vs {sb:?}"),
            })
        }
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var, AutodiffError> {
        let ia = self.check(a, name)?;
        let ib = self.check(b, name)?;
        let bc = self.binary_broadcast(name, ia, ib)?;
        let (ta, tb) = (self.t(ia), self.t(ib));
        let value = match bc {
            Broadcast::Same => Tensor::new(
                ta.shape().to_vec(),
                ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
            )
            .unwrap(),
            Broadcast::ScalarRhs => {
                let y = tb.data()[0];
                ta.map(|x| f(x, y))
            }
            Broadcast::ScalarLhs => {
                let x = ta.data()[0];
                tb.map(|y| f(x, y))
            }
            Broadcast::RowRhs => {
                let cols = tb.numel();
                let data = ta
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, tb.data()[i % cols]))
                    .collect();
                Tensor::new(ta.shape().to_vec(), data).unwrap()
            }
        };
        let tracked = self.nodes[ia].tracked || self.nodes[ib].tracked;
        Ok(self.push(value, op(ia, ib), tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("div", a, b, |x, y| x / y, Op::Div)
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: impl Fn(usize) -> Op,
    ) -> Result<Var, AutodiffError> {
        let ia = self.check(a, name)?;
        let value = self.t(ia).map(f);
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(value, op(ia), tracked))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("neg", a, |x| -x, Op::Neg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary("scale", a, |x| c * x, |i| Op::Scale(i, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("abs", a, f64::abs, Op::Abs)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("tanh", a, f64::tanh, Op::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("exp", a, f64::exp, Op::Exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("log", a, f64::ln, Op::Log)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("square", a, |x| x * x, Op::Square)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, AutodiffError> {
        // numerically stable log(1 + e^x)
        self.unary(
            "softplus",
            a,
            |x| {
                if x > 30.0 {
                    x
                } else if x < -30.0 {
                    x.exp()
                } else {
                    x.exp().ln_1p()
                }
            },
            Op::Softplus,
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("sigmoid", a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "matmul")?;
        let ib = self.check(b, "matmul")?;
        let (ta, tb) = (self.t(ia), self.t(ib));
        let (sa, sb) = (ta.shape(), tb.shape());
        let Some((r, k, c)) = mm_dims(sa, sb) else {
            return Err(AutodiffError::Shape {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        };
        let mut out = vec![0.0; r * c];
        let da = ta.data();
        let db = tb.data();
        for i in 0..r {
            for l in 0..k {
                let x = da[i * k + l];
                if x == 0.0 {
                    continue;
                }
                for j in 0..c {
                    out[i * c + j] += x * db[l * c + j];
                }
            }
        }
        let shape = match (sa.len(), sb.len()) {
            (1, 2) => vec![c],
            (2, 1) => vec![r],
            _ => vec![r, c],
        };
        let value = Tensor::new(shape, out).unwrap();
        let tracked = self.nodes[ia].tracked || self.nodes[ib].tracked;
        Ok(self.push(value, Op::Matmul(ia, ib), tracked))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "transpose")?;
        let ta = self.t(ia);
        if ta.shape().len() != 2 {
            return Err(AutodiffError::Shape {
                op: "transpose",
                detail: format!("{:?}", ta.shape()),
            });
        }
        let (r, c) = (ta.shape()[0], ta.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = ta.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out).unwrap();
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(value, Op::Transpose(ia), tracked))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "reshape")?;
        let value = self.t(ia).reshaped(shape)?;
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(value, Op::Reshape(ia), tracked))
    }

    pub fn max_reduce(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "max_reduce")?;
        let m = self
            .t(ia)
            .data()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(Tensor::scalar(m), Op::MaxReduce(ia), tracked))
    }

    /// Column-wise max of a 2-D tensor: (N, M) -> (M,). The gradient routes
    /// to the first maximal row per column.
    pub fn max_axis0(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "max_axis0")?;
        let t = self.t(ia);
        if t.shape().len() != 2 || t.shape()[0] == 0 {
            return Err(AutodiffError::Shape {
                op: "max_axis0",
                detail: format!("{:?}", t.shape()),
            });
        }
        let (n, m) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![f64::NEG_INFINITY; m];
        for i in 0..n {
            for j in 0..m {
                out[j] = out[j].max(t.data()[i * m + j]);
            }
        }
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(Tensor::vector(out), Op::MaxAxis0(ia), tracked))
    }

    pub fn mean_reduce(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "mean_reduce")?;
        let t = self.t(ia);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(Tensor::scalar(m), Op::MeanReduce(ia), tracked))
    }

    pub fn sum_reduce(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "sum_reduce")?;
        let s = self.t(ia).data().iter().sum::<f64>();
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(Tensor::scalar(s), Op::SumReduce(ia), tracked))
    }

    /// Sums a 2-D tensor along axis 1: (N, M) -> (N,).
    pub fn sum_axis1(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "sum_axis1")?;
        let t = self.t(ia);
        if t.shape().len() != 2 {
            return Err(AutodiffError::Shape {
                op: "sum_axis1",
                detail: format!("{:?}", t.shape()),
            });
        }
        let (n, m) = (t.shape()[0], t.shape()[1]);
        let data = (0..n)
            .map(|i| t.data()[i * m..(i + 1) * m].iter().sum())
            .collect();
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(Tensor::vector(data), Op::SumAxis1(ia), tracked))
    }

    /// Euclidean norm along the last axis: (N, M) -> (N,) or (M,) -> scalar.
    pub fn row_norm(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "row_norm")?;
        let t = self.t(ia);
        let value = match t.shape().len() {
            1 => Tensor::scalar(t.data().iter().map(|x| x * x).sum::<f64>().sqrt()),
            2 => {
                let (n, m) = (t.shape()[0], t.shape()[1]);
                Tensor::vector(
                    (0..n)
                        .map(|i| {
                            t.data()[i * m..(i + 1) * m]
                                .iter()
                                .map(|x| x * x)
                                .sum::<f64>()
                                .sqrt()
                        })
                        .collect(),
                )
            }
            _ => {
                return Err(AutodiffError::Shape {
                    op: "row_norm",
                    detail: format!("{:?}", t.shape()),
                })
            }
        };
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(value, Op::RowNorm(ia), tracked))
    }

    /// Row-wise cross product of two (N, 3) tensors (or two 3-vectors).
    pub fn row_cross(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "row_cross")?;
        let ib = self.check(b, "row_cross")?;
        let (ta, tb) = (self.t(ia), self.t(ib));
        if ta.shape() != tb.shape() || ta.cols() != 3 {
            return Err(AutodiffError::Shape {
                op: "row_cross",
                detail: format!("{:?} x {:?}", ta.shape(), tb.shape()),
            });
        }
        let n = ta.rows();
        let mut out = vec![0.0; n * 3];
        for i in 0..n {
            let x = &ta.data()[i * 3..i * 3 + 3];
            let y = &tb.data()[i * 3..i * 3 + 3];
            out[i * 3] = x[1] * y[2] - x[2] * y[1];
            out[i * 3 + 1] = x[2] * y[0] - x[0] * y[2];
            out[i * 3 + 2] = x[0] * y[1] - x[1] * y[0];
        }
        let value = Tensor::new(ta.shape().to_vec(), out).unwrap();
        let tracked = self.nodes[ia].tracked || self.nodes[ib].tracked;
        Ok(self.push(value, Op::RowCross(ia, ib), tracked))
    }

    /// Selects rows of a 2-D tensor by index; duplicates allowed.
    pub fn gather_rows(&mut self, a: Var, rows: Rc<Vec<usize>>) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "gather_rows")?;
        let t = self.t(ia);
        if t.shape().len() != 2 {
            return Err(AutodiffError::Shape {
                op: "gather_rows",
                detail: format!("{:?}", t.shape()),
            });
        }
        let (n, m) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(rows.len() * m);
        for &r in rows.iter() {
            if r >= n {
                return Err(AutodiffError::Shape {
                    op: "gather_rows",
                    detail: format!("row {r} out of {n}"),
                });
            }
            out.extend_from_slice(&t.data()[r * m..(r + 1) * m]);
        }
        let value = Tensor::new(vec![rows.len(), m], out).unwrap();
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(value, Op::GatherRows(ia, rows), tracked))
    }

    /// Concatenates along axis 0. 1-D inputs chain into a longer vector,
    /// 2-D inputs with equal column counts stack rows.
    pub fn concat(&mut self, vars: &[Var]) -> Result<Var, AutodiffError> {
        if vars.is_empty() {
            return Err(AutodiffError::Shape {
                op: "concat",
                detail: "no inputs".into(),
            });
        }
        let mut idxs = Vec::with_capacity(vars.len());
        for &v in vars {
            idxs.push(self.check(v, "concat")?);
        }
        let first = self.t(idxs[0]);
        let ndim = first.shape().len();
        let cols = if ndim == 2 { first.shape()[1] } else { 0 };
        let mut data = Vec::new();
        let mut rows = 0;
        for &i in &idxs {
            let t = self.t(i);
            if t.shape().len() != ndim || (ndim == 2 && t.shape()[1] != cols) {
                return Err(AutodiffError::Shape {
                    op: "concat",
                    detail: format!("{:?} vs {:?}", first.shape(), t.shape()),
                });
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let shape = if ndim == 2 { vec![rows, cols] } else { vec![rows] };
        let value = Tensor::new(shape, data).unwrap();
        let tracked = idxs.iter().any(|&i| self.nodes[i].tracked);
        Ok(self.push(value, Op::Concat(idxs), tracked))
    }

    /// Takes `len` consecutive entries (1-D) or rows (2-D) starting at `start`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let ia = self.check(a, "slice")?;
        let t = self.t(ia);
        let (n, m) = match t.shape().len() {
            1 => (t.shape()[0], 1),
            2 => (t.shape()[0], t.shape()[1]),
            _ => {
                return Err(AutodiffError::Shape {
                    op: "slice",
                    detail: format!("{:?}", t.shape()),
                })
            }
        };
        if start + len > n {
            return Err(AutodiffError::Shape {
                op: "slice",
                detail: format!("[{start}, {start}+{len}) out of {n}"),
            });
        }
        let data = t.data()[start * m..(start + len) * m].to_vec();
        let shape = if t.shape().len() == 2 {
            vec![len, m]
        } else {
            vec![len]
        };
        let value = Tensor::new(shape, data).unwrap();
        let tracked = self.nodes[ia].tracked;
        Ok(self.push(
            value,
            Op::Slice {
                input: ia,
                start,
                len,
            },
            tracked,
        ))
    }

    /// Records a custom primitive with caller-supplied forward value and
    /// backward function (one gradient slot per input, aligned with `inputs`).
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        backward: CustomBackward,
    ) -> Result<Var, AutodiffError> {
        let mut idxs = Vec::with_capacity(inputs.len());
        for &v in inputs {
            idxs.push(self.check(v, "custom")?);
        }
        let tracked = idxs.iter().any(|&i| self.nodes[i].tracked);
        Ok(self.push(
            value,
            Op::Custom {
                inputs: idxs,
                backward,
            },
            tracked,
        ))
    }

    /// Reverse pass from a scalar loss. Consumes the tape: further ops or a
    /// second backward without a fresh forward are usage errors.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        if loss.tape_id != self.id {
            return Err(AutodiffError::WrongTape { op: "backward" });
        }
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        if !self.nodes[loss.index].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.nodes[loss.index].value.shape().to_vec(),
            });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(Tensor::ones(self.nodes[loss.index].value.shape()));
        for i in (0..=loss.index).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.accumulate_inputs(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape_id: self.id,
            grads,
        })
    }

    fn accumulate_inputs(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let contribs: Vec<(usize, Tensor)> = match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::Add(a, b) => {
                let ga = self.reduce_to(*a, g.clone());
                let gb = self.reduce_to(*b, g.clone());
                vec![(*a, ga), (*b, gb)]
            }
            Op::Sub(a, b) => {
                let ga = self.reduce_to(*a, g.clone());
                let gb = self.reduce_to(*b, g.map(|x| -x));
                vec![(*a, ga), (*b, gb)]
            }
            Op::Mul(a, b) => {
                let ga = self.reduce_to(*a, self.broadcast_mul(g, *b));
                let gb = self.reduce_to(*b, self.broadcast_mul(g, *a));
                vec![(*a, ga), (*b, gb)]
            }
            Op::Div(a, b) => {
                // g / b  and  -g * a / b^2
                let tb = self.t(*b);
                let ta = self.t(*a);
                let ga_full = self.broadcast_binary(g, tb, |gx, y| gx / y);
                let ga = self.reduce_to(*a, ga_full);
                let gb_full = {
                    let num = self.broadcast_binary(g, ta, |gx, x| gx * x);
                    self.broadcast_binary(&num, tb, |n, y| -n / (y * y))
                };
                let gb = self.reduce_to(*b, gb_full);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Neg(a) => vec![(*a, g.map(|x| -x))],
            Op::Scale(a, c) => {
                let c = *c;
                vec![(*a, g.map(|x| c * x))]
            }
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Matmul(a, b) => {
                let ta = self.t(*a);
                let tb = self.t(*b);
                let (r, k, c) = mm_dims(ta.shape(), tb.shape()).expect("checked at forward");
                let gd = g.data();
                // dA = G B^T
                let mut ga = vec![0.0; r * k];
                for i2 in 0..r {
                    for j in 0..c {
                        let gij = gd[i2 * c + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for l in 0..k {
                            ga[i2 * k + l] += gij * tb.data()[l * c + j];
                        }
                    }
                }
                // dB = A^T G
                let mut gb = vec![0.0; k * c];
                for i2 in 0..r {
                    for l in 0..k {
                        let ail = ta.data()[i2 * k + l];
                        if ail == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            gb[l * c + j] += ail * gd[i2 * c + j];
                        }
                    }
                }
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga).unwrap()),
                    (*b, Tensor::new(tb.shape().to_vec(), gb).unwrap()),
                ]
            }
            Op::Transpose(a) => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut out = vec![0.0; r * c];
                for i2 in 0..r {
                    for j in 0..c {
                        out[j * r + i2] = g.data()[i2 * c + j];
                    }
                }
                vec![(*a, Tensor::new(vec![c, r], out).unwrap())]
            }
            Op::Reshape(a) => {
                let shape = self.t(*a).shape().to_vec();
                vec![(*a, g.reshaped(shape).unwrap())]
            }
            Op::Relu(a) => {
                let ta = self.t(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(&gx, &x)| if x > 0.0 { gx } else { 0.0 })
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data).unwrap())]
            }
            Op::Abs(a) => {
                let ta = self.t(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(&gx, &x)| {
                        if x > 0.0 {
                            gx
                        } else if x < 0.0 {
                            -gx
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data).unwrap())]
            }
            Op::Tanh(a) => {
                let out = &self.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gx, &y)| gx * (1.0 - y * y))
                    .collect();
                vec![(*a, Tensor::new(out.shape().to_vec(), data).unwrap())]
            }
            Op::Exp(a) => {
                let out = &self.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gx, &y)| gx * y)
                    .collect();
                vec![(*a, Tensor::new(out.shape().to_vec(), data).unwrap())]
            }
            Op::Log(a) => {
                let ta = self.t(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(&gx, &x)| gx / x)
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data).unwrap())]
            }
            Op::Square(a) => {
                let ta = self.t(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(&gx, &x)| gx * 2.0 * x)
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data).unwrap())]
            }
            Op::Softplus(a) => {
                let ta = self.t(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(&gx, &x)| gx / (1.0 + (-x).exp()))
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data).unwrap())]
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gx, &y)| gx * y * (1.0 - y))
                    .collect();
                vec![(*a, Tensor::new(out.shape().to_vec(), data).unwrap())]
            }
            Op::MaxReduce(a) => {
                let ta = self.t(*a);
                let m = self.nodes[i].value.item();
                let mut out = vec![0.0; ta.numel()];
                // first maximal element takes the whole gradient
                if let Some(pos) = ta.data().iter().position(|&x| x == m) {
                    out[pos] = g.item();
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), out).unwrap())]
            }
            Op::MaxAxis0(a) => {
                let ta = self.t(*a);
                let (n, m) = (ta.shape()[0], ta.shape()[1]);
                let out_vals = self.nodes[i].value.data();
                let mut gd = vec![0.0; ta.numel()];
                for j in 0..m {
                    for r in 0..n {
                        if ta.data()[r * m + j] == out_vals[j] {
                            gd[r * m + j] = g.data()[j];
                            break;
                        }
                    }
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), gd).unwrap())]
            }
            Op::MeanReduce(a) => {
                let ta = self.t(*a);
                let n = ta.numel() as f64;
                let gi = g.item() / n;
                vec![(
                    *a,
                    Tensor::new(ta.shape().to_vec(), vec![gi; ta.numel()]).unwrap(),
                )]
            }
            Op::SumReduce(a) => {
                let ta = self.t(*a);
                let gi = g.item();
                vec![(
                    *a,
                    Tensor::new(ta.shape().to_vec(), vec![gi; ta.numel()]).unwrap(),
                )]
            }
            Op::SumAxis1(a) => {
                let ta = self.t(*a);
                let (n, m) = (ta.shape()[0], ta.shape()[1]);
                let mut out = vec![0.0; n * m];
                for i2 in 0..n {
                    for j in 0..m {
                        out[i2 * m + j] = g.data()[i2];
                    }
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), out).unwrap())]
            }
            Op::RowNorm(a) => {
                let ta = self.t(*a);
                let out = &self.nodes[i].value;
                let m = ta.cols();
                let n = ta.rows();
                let mut gd = vec![0.0; ta.numel()];
                for r in 0..n {
                    let norm = out.data()[r];
                    if norm == 0.0 {
                        continue; // subgradient 0 at the origin
                    }
                    let gr = g.data()[r];
                    for j in 0..m {
                        gd[r * m + j] = gr * ta.data()[r * m + j] / norm;
                    }
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), gd).unwrap())]
            }
            Op::RowCross(a, b) => {
                // d/da (a x b)^T g = b x g ; d/db = g x a
                let ta = self.t(*a);
                let tb = self.t(*b);
                let n = ta.rows();
                let mut ga = vec![0.0; n * 3];
                let mut gb = vec![0.0; n * 3];
                for r in 0..n {
                    let bv = &tb.data()[r * 3..r * 3 + 3];
                    let av = &ta.data()[r * 3..r * 3 + 3];
                    let gv = &g.data()[r * 3..r * 3 + 3];
                    ga[r * 3] = bv[1] * gv[2] - bv[2] * gv[1];
                    ga[r * 3 + 1] = bv[2] * gv[0] - bv[0] * gv[2];
                    ga[r * 3 + 2] = bv[0] * gv[1] - bv[1] * gv[0];
                    gb[r * 3] = gv[1] * av[2] - gv[2] * av[1];
                    gb[r * 3 + 1] = gv[2] * av[0] - gv[0] * av[2];
                    gb[r * 3 + 2] = gv[0] * av[1] - gv[1] * av[0];
                }
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga).unwrap()),
                    (*b, Tensor::new(tb.shape().to_vec(), gb).unwrap()),
                ]
            }
            Op::GatherRows(a, rows) => {
                let ta = self.t(*a);
                let m = ta.shape()[1];
                let mut out = vec![0.0; ta.numel()];
                for (ri, &r) in rows.iter().enumerate() {
                    for j in 0..m {
                        out[r * m + j] += g.data()[ri * m + j];
                    }
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), out).unwrap())]
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                let mut contribs = Vec::with_capacity(parts.len());
                for &p in parts {
                    let tp = self.t(p);
                    let cnt = tp.numel();
                    let data = g.data()[offset..offset + cnt].to_vec();
                    offset += cnt;
                    contribs.push((p, Tensor::new(tp.shape().to_vec(), data).unwrap()));
                }
                contribs
            }
            Op::Slice { input, start, len } => {
                let ta = self.t(*input);
                let m = if ta.shape().len() == 2 { ta.shape()[1] } else { 1 };
                let mut out = vec![0.0; ta.numel()];
                out[start * m..(start + len) * m].copy_from_slice(g.data());
                vec![(*input, Tensor::new(ta.shape().to_vec(), out).unwrap())]
            }
            Op::Custom { inputs, backward } => {
                let gs = backward(g);
                inputs
                    .iter()
                    .zip(gs)
                    .filter_map(|(&inp, gt)| gt.map(|t| (inp, t)))
                    .collect()
            }
        };
        for (target, contrib) in contribs {
            if !self.nodes[target].tracked {
                continue;
            }
            match &mut grads[target] {
                Some(acc) => {
                    for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        }
    }

    /// Multiplies the (full-shape) gradient elementwise with the value of
    /// node `other`, broadcasting `other` the same way the forward op did.
    fn broadcast_mul(&self, g: &Tensor, other: usize) -> Tensor {
        self.broadcast_binary(g, self.t(other), |gx, y| gx * y)
    }

    fn broadcast_binary(&self, g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        if other.shape() == g.shape() {
            Tensor::new(
                g.shape().to_vec(),
                g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect(),
            )
            .unwrap()
        } else if other.numel() == 1 {
            let y = other.data()[0];
            g.map(|x| f(x, y))
        } else {
            // row-broadcast: g is (N, M), other is (M,)
            let m = other.numel();
            Tensor::new(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, other.data()[i % m]))
                    .collect(),
            )
            .unwrap()
        }
    }

    /// Reduces a full-output-shape gradient back to the shape of node `target`
    /// by summing over broadcast dimensions.
    fn reduce_to(&self, target: usize, g: Tensor) -> Tensor {
        let ts = self.t(target).shape().to_vec();
        if ts == g.shape() {
            return g;
        }
        if self.t(target).numel() == 1 {
            let s: f64 = g.data().iter().sum();
            return Tensor::new(ts, vec![s]).unwrap();
        }
        // row-broadcast case: sum over rows
        let m = self.t(target).numel();
        let mut out = vec![0.0; m];
        for (i, &x) in g.data().iter().enumerate() {
            out[i % m] += x;
        }
        Tensor::new(ts, out).unwrap()
    }
}

/// Matmul dimensions `(r, k, c)`. A 1-D left operand acts as a row vector,
/// a 1-D right operand as a column vector.
fn mm_dims(sa: &[usize], sb: &[usize]) -> Option<(usize, usize, usize)> {
    let (r, k1) = match sa.len() {
        1 => (1, sa[0]),
        2 => (sa[0], sa[1]),
        _ => return None,
    };
    let (k2, c) = match sb.len() {
        1 => (sb[0], 1),
        2 => (sb[0], sb[1]),
        _ => return None,
    };
    if k1 != k2 || (sa.len() == 1 && sb.len() == 1) {
        return None;
    }
    Some((r, k1, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences against the analytic backward pass.
    /// `build` must be a pure function of the parameter tensors.
    fn fd_check(
        build: &dyn Fn(&mut Tape, &[Var]) -> Var,
        inputs: &[Tensor],
        h: f64,
        rel_tol: f64,
    ) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();

        let eval = |perturbed: &[Tensor]| -> f64 {
            let mut t = Tape::new();
            let vs: Vec<Var> = perturbed.iter().map(|x| t.param(x.clone())).collect();
            let l = build(&mut t, &vs);
            t.value(l).item()
        };

        for (pi, input) in inputs.iter().enumerate() {
            let g = grads
                .get(vars[pi])
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(input.shape()));
            for e in 0..input.numel() {
                let mut plus = inputs.to_vec();
                plus[pi].data_mut()[e] += h;
                let mut minus = inputs.to_vec();
                minus[pi].data_mut()[e] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = g.data()[e];
                let denom = fd.abs().max(a.abs()).max(1e-6);
                assert!(
                    (a - fd).abs() / denom < rel_tol,
                    "param {pi} elem {e}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .unwrap()
    }

    #[test]
    fn mean_reduce_backward_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![3.0, -1.0, 2.0, 8.0]));
        let m = tape.mean_reduce(x).unwrap();
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn sum_loss_gives_all_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = tape.sum_reduce(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_at_zero_has_zero_subgradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.0, 1.0, -1.0]));
        let r = tape.relu(x).unwrap();
        let s = tape.sum_reduce(r).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn matmul_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(&mut rng, &[5, 4]);
        let b = rand_tensor(&mut rng, &[4, 3]);
        fd_check(
            &|t, v| {
                let m = t.matmul(v[0], v[1]).unwrap();
                t.sum_reduce(m).unwrap()
            },
            &[a, b],
            1e-6,
            1e-6,
        );
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let x = rand_tensor(&mut rng, &[6]);
            // keep away from kinks of relu/abs and log's domain edge
            let x_safe = x.map(|v| if v.abs() < 0.1 { v + 0.2 } else { v });
            let x_pos = x.map(|v| v.abs() + 0.5);
            let y = rand_tensor(&mut rng, &[6]);
            let m = rand_tensor(&mut rng, &[4, 3]);
            let n3 = rand_tensor(&mut rng, &[4, 3]);
            let row = rand_tensor(&mut rng, &[3]);

            let unaries: Vec<(&str, Box<dyn Fn(&mut Tape, Var) -> Var>)> = vec![
                ("relu", Box::new(|t: &mut Tape, v| t.relu(v).unwrap())),
                ("abs", Box::new(|t: &mut Tape, v| t.abs(v).unwrap())),
                ("tanh", Box::new(|t: &mut Tape, v| t.tanh(v).unwrap())),
                ("exp", Box::new(|t: &mut Tape, v| t.exp(v).unwrap())),
                ("square", Box::new(|t: &mut Tape, v| t.square(v).unwrap())),
                ("softplus", Box::new(|t: &mut Tape, v| t.softplus(v).unwrap())),
                ("sigmoid", Box::new(|t: &mut Tape, v| t.sigmoid(v).unwrap())),
                ("neg", Box::new(|t: &mut Tape, v| t.neg(v).unwrap())),
                ("scale", Box::new(|t: &mut Tape, v| t.scale(v, -1.7).unwrap())),
            ];
            for (_, op) in &unaries {
                fd_check(
                    &|t, v| {
                        let u = op(t, v[0]);
                        t.sum_reduce(u).unwrap()
                    },
                    &[x_safe.clone()],
                    1e-6,
                    1e-4,
                );
            }
            fd_check(
                &|t, v| {
                    let u = t.log(v[0]).unwrap();
                    t.sum_reduce(u).unwrap()
                },
                &[x_pos.clone()],
                1e-6,
                1e-4,
            );
            // binary elementwise
            fd_check(
                &|t, v| {
                    let a = t.add(v[0], v[1]).unwrap();
                    let b = t.mul(a, v[0]).unwrap();
                    let c = t.sub(b, v[1]).unwrap();
                    t.mean_reduce(c).unwrap()
                },
                &[x_safe.clone(), y.clone()],
                1e-6,
                1e-4,
            );
            // div with denominator away from zero
            fd_check(
                &|t, v| {
                    let d = t.div(v[0], v[1]).unwrap();
                    t.sum_reduce(d).unwrap()
                },
                &[x_safe.clone(), x_pos.clone()],
                1e-6,
                1e-4,
            );
            // row broadcast add + mul
            fd_check(
                &|t, v| {
                    let a = t.add(v[0], v[1]).unwrap();
                    let b = t.mul(a, v[1]).unwrap();
                    t.sum_reduce(b).unwrap()
                },
                &[m.clone(), row.clone()],
                1e-6,
                1e-4,
            );
            // reductions, norms, transpose, reshape, slicing, concat
            fd_check(
                &|t, v| {
                    let tr = t.transpose(v[0]).unwrap();
                    let rn = t.row_norm(tr).unwrap();
                    t.sum_reduce(rn).unwrap()
                },
                &[m.clone()],
                1e-6,
                1e-4,
            );
            fd_check(
                &|t, v| {
                    let c = t.row_cross(v[0], v[1]).unwrap();
                    let n = t.row_norm(c).unwrap();
                    t.sum_reduce(n).unwrap()
                },
                &[m.clone(), n3.clone()],
                1e-6,
                1e-4,
            );
            fd_check(
                &|t, v| {
                    let s1 = t.slice(v[0], 1, 2).unwrap();
                    let s2 = t.slice(v[0], 0, 2).unwrap();
                    let c = t.concat(&[s1, s2]).unwrap();
                    let sq = t.square(c).unwrap();
                    let sa = t.sum_axis1(sq).unwrap();
                    t.mean_reduce(sa).unwrap()
                },
                &[m.clone()],
                1e-6,
                1e-4,
            );
            fd_check(
                &|t, v| {
                    let g = t.gather_rows(v[0], Rc::new(vec![0, 2, 2, 1])).unwrap();
                    let s = t.square(g).unwrap();
                    t.sum_reduce(s).unwrap()
                },
                &[m.clone()],
                1e-6,
                1e-4,
            );
            // max over distinct values
            if trial % 2 == 0 {
                fd_check(
                    &|t, v| {
                        let sq = t.square(v[0]).unwrap();
                        t.max_reduce(sq).unwrap()
                    },
                    &[Tensor::vector(vec![0.3, -0.9, 0.5, 0.2, -0.1, 0.7])],
                    1e-6,
                    1e-4,
                );
            }
        }
    }

    #[test]
    fn mlp_loss_matches_finite_differences_on_every_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, &[5]);
        let w1 = rand_tensor(&mut rng, &[5, 8]);
        let b1 = rand_tensor(&mut rng, &[8]);
        let w2 = rand_tensor(&mut rng, &[8, 2]);
        let b2 = rand_tensor(&mut rng, &[2]);
        let target = rand_tensor(&mut rng, &[2]);
        let xc = x.clone();
        let tc = target.clone();
        fd_check(
            &move |t, v| {
                let input = t.constant(xc.clone());
                let h = t.matmul(input, v[0]).unwrap();
                let h = t.add(h, v[1]).unwrap();
                let h = t.tanh(h).unwrap();
                let o = t.matmul(h, v[2]).unwrap();
                let o = t.add(o, v[3]).unwrap();
                let tgt = t.constant(tc.clone());
                let d = t.sub(o, tgt).unwrap();
                let sq = t.square(d).unwrap();
                t.mean_reduce(sq).unwrap()
            },
            &[w1, b1, w2, b2],
            1e-6,
            1e-4,
        );
    }

    #[test]
    fn double_backward_is_a_usage_error() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0]));
        let s = tape.sum_reduce(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(AutodiffError::TapeConsumed)));
    }

    #[test]
    fn ops_after_backward_are_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0]));
        let s = tape.sum_reduce(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.add(x, x), Err(AutodiffError::TapeConsumed)));
    }

    #[test]
    fn cross_tape_vars_are_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = t1.param(Tensor::scalar(1.0));
        let b = t2.param(Tensor::scalar(2.0));
        assert!(matches!(t1.add(a, b), Err(AutodiffError::WrongTape { .. })));
        assert!(matches!(t2.backward(a), Err(AutodiffError::WrongTape { .. })));
    }

    #[test]
    fn shape_mismatch_names_the_op() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        match tape.add(a, b) {
            Err(AutodiffError::Shape { op, .. }) => assert_eq!(op, "add"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(
            tape.backward(x),
            Err(AutodiffError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.param(Tensor::vector(vec![0.3, -0.7, 1.1, 0.5]));
            let w = tape.param(Tensor::matrix(4, 4, (0..16).map(|i| (i as f64) * 0.1 - 0.8).collect()).unwrap());
            let h = tape.matmul(x, w).unwrap();
            let h = tape.tanh(h).unwrap();
            let l = tape.sum_reduce(h).unwrap();
            let g = tape.backward(l).unwrap();
            (g.get(x).unwrap().data().to_vec(), g.get(w).unwrap().data().to_vec())
        };
        assert_eq!(run(), run());
    }

}
