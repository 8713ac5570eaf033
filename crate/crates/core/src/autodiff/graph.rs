//! Define-by-run computation graph over dense matrices.
//!
//! Every value is a 2-D matrix (`[rows, cols]`); scalars are `1 x 1`, row
//! vectors `1 x n`. Element-wise binary operations broadcast a `1 x n`,
//! `m x 1` or `1 x 1` operand against a full matrix. The graph is rebuilt for
//! every step and dropped afterwards.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Relu6(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    SumRows(Var),
    LogMeanExp(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Clamp(Var, T, T),
    Gather(Var, Vec<usize>),
    StopGradient,
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation. Create leaves with [`Graph::param`] or
/// [`Graph::constant`], combine them, then call [`Graph::backward`].
#[derive(Debug, Clone, Default)]
pub struct Graph<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to every node that needs one.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f64> {
    grads: Vec<Option<Array2<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; zeros when no path from `v` reaches the loss.
    pub fn get(&self, v: Var) -> Array2<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Array2<T> {
        self.grads[v.0].take().unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

fn shape_of<T>(a: &Array2<T>) -> (usize, usize) {
    a.dim()
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, n) | (n, 1) => Some(n),
        _ => None,
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    match (broadcast_dim(a.0, b.0), broadcast_dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::DimensionMismatch(format!("cannot broadcast {a:?} with {b:?}"))),
    }
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to<T: Scalar>(grad: Array2<T>, shape: (usize, usize)) -> Array2<T> {
    let mut g = grad;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn zip_broadcast<T: Scalar>(a: &Array2<T>, b: &Array2<T>, f: impl Fn(T, T) -> T) -> Result<Array2<T>> {
    let shape = broadcast_shape(a.dim(), b.dim())?;
    let av = a.broadcast(shape).expect("checked shape");
    let bv = b.broadcast(shape).expect("checked shape");
    Ok(Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y)))
}

fn softmax_rows<T: Scalar>(x: ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total: T = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

fn log_softmax_rows<T: Scalar>(x: ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Array2<T>, op: Op<T>) -> Var {
        let ng = self.nodes[x.0].needs_grad;
        self.push(value, op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, value: Array2<T>, op: Op<T>) -> Var {
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(value, op, ng)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: T) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape_of(&self.nodes[v.0].value)
    }

    /// Value of a `1 x 1` node.
    pub fn scalar_value(&self, v: Var) -> T {
        let val = &self.nodes[v.0].value;
        debug_assert_eq!(val.dim(), (1, 1));
        val[(0, 0)]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.ncols() != bv.nrows() {
            return Err(Error::DimensionMismatch(format!("matmul {:?} x {:?}", av.dim(), bv.dim())));
        }
        let value = av.dot(bv);
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = zip_broadcast(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y)?;
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = zip_broadcast(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y)?;
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = zip_broadcast(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y)?;
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = zip_broadcast(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x / y)?;
        Ok(self.binary(a, b, value, Op::Div(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v * c);
        self.unary(x, value, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -T::one())
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v + c);
        self.unary(x, value, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v.max(T::zero()));
        self.unary(x, value, Op::Relu(x))
    }

    pub fn relu6(&mut self, x: Var) -> Var {
        let six = T::of(6.0);
        let value = self.nodes[x.0].value.mapv(|v| v.max(T::zero()).min(six));
        self.unary(x, value, Op::Relu6(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(T::tanh);
        self.unary(x, value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| T::one() / (T::one() + (-v).exp()));
        self.unary(x, value, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(T::exp);
        self.unary(x, value, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if let Some(bad) = xv.iter().find(|&&v| !(v > T::zero())) {
            return Err(Error::OutOfRange(format!("log of non-positive value {bad}")));
        }
        let value = xv.mapv(T::ln);
        Ok(self.unary(x, value, Op::Log(x)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v * v);
        self.unary(x, value, Op::Square(x))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.nodes[x.0].value.view());
        self.unary(x, value, Op::Softmax(x))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let value = log_softmax_rows(self.nodes[x.0].value.view());
        self.unary(x, value, Op::LogSoftmax(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.nodes[x.0].value.sum());
        self.unary(x, value, Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let value = Array2::from_elem((1, 1), xv.sum() / T::of_usize(xv.len()));
        self.unary(x, value, Op::MeanAll(x))
    }

    /// Sums each row: `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.unary(x, value, Op::SumCols(x))
    }

    /// Sums each column: `[m, n] -> [1, n]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.unary(x, value, Op::SumRows(x))
    }

    /// `ln mean(exp(x))` over all entries, computed stably.
    pub fn log_mean_exp(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().copied().fold(T::neg_infinity(), T::max);
        let mean = xv.iter().map(|&v| (v - max).exp()).sum::<T>() / T::of_usize(xv.len());
        let value = Array2::from_elem((1, 1), max + mean.ln());
        self.unary(x, value, Op::LogMeanExp(x))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(p) => self.nodes[p.0].value.nrows(),
            None => return Err(Error::DimensionMismatch("concat of nothing".into())),
        };
        if parts.iter().any(|p| self.nodes[p.0].value.nrows() != rows) {
            return Err(Error::DimensionMismatch("concat row counts differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let ng = parts.iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push(value, Op::Concat(parts.to_vec()), ng))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if start + len > xv.ncols() {
            return Err(Error::DimensionMismatch(format!("slice {start}..{} of {} columns", start + len, xv.ncols())));
        }
        let value = xv.slice(ndarray::s![.., start..start + len]).to_owned();
        Ok(self.unary(x, value, Op::Slice(x, start)))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v.max(lo).min(hi));
        self.unary(x, value, Op::Clamp(x, lo, hi))
    }

    /// Picks `x[i, idx[i]]` per row: `[m, n] -> [m, 1]`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if idx.len() != xv.nrows() {
            return Err(Error::DimensionMismatch(format!("gather with {} indices for {} rows", idx.len(), xv.nrows())));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= xv.ncols()) {
            return Err(Error::OutOfRange(format!("gather index {bad} >= {}", xv.ncols())));
        }
        let value = Array2::from_shape_fn((idx.len(), 1), |(i, _)| xv[(i, idx[i])]);
        Ok(self.unary(x, value, Op::Gather(x, idx.to_vec())))
    }

    /// Passes the value through and blocks the gradient.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.push(value, Op::StopGradient, false)
    }

    /// Value of `forward`, gradient routed to `through` unchanged
    /// (`through + sg(forward - through)`).
    pub fn straight_through(&mut self, forward: Var, through: Var) -> Result<Var> {
        let delta = self.sub(forward, through)?;
        let delta = self.stop_gradient(delta);
        let out = self.add(through, delta)?;
        // exact forward value, free of the rounding in through + (forward - through)
        self.nodes[out.0].value = self.nodes[forward.0].value.clone();
        Ok(out)
    }

    /// Reverse pass from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::DimensionMismatch(format!("backward needs a scalar loss, got {shape:?}")));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Array2<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let acc = |v: Var, contrib: Array2<T>, grads: &mut Vec<Option<Array2<T>>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                let contrib = reduce_to(contrib, self.shape(v));
                match &mut grads[v.0] {
                    Some(existing) => *existing += &contrib,
                    slot @ None => *slot = Some(contrib),
                }
            };
            let val = &node.value;
            match &node.op {
                Op::Leaf | Op::StopGradient => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        acc(*a, g.dot(&bv.t()), &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        acc(*b, av.t().dot(&g), &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.mapv(|v| -v), &mut grads);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        acc(*a, zip_broadcast(&g, bv, |x, y| x * y)?, &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        acc(*b, zip_broadcast(&g, av, |x, y| x * y)?, &mut grads);
                    }
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    if self.nodes[a.0].needs_grad {
                        acc(*a, zip_broadcast(&g, bv, |x, y| x / y)?, &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        // d(a/b)/db = -(a/b)/b
                        let gv = Zip::from(&g).and(val).map_collect(|&x, &q| -x * q);
                        acc(*b, zip_broadcast(&gv, bv, |x, y| x / y)?, &mut grads);
                    }
                }
                Op::Scale(x, c) => acc(*x, g.mapv(|v| v * *c), &mut grads),
                Op::AddScalar(x) => acc(*x, g, &mut grads),
                Op::Relu(x) => {
                    let d = Zip::from(&g).and(val).map_collect(|&gi, &y| if y > T::zero() { gi } else { T::zero() });
                    acc(*x, d, &mut grads);
                }
                Op::Relu6(x) => {
                    let six = T::of(6.0);
                    let xv = self.value(*x);
                    let d = Zip::from(&g)
                        .and(xv)
                        .map_collect(|&gi, &v| if v > T::zero() && v < six { gi } else { T::zero() });
                    acc(*x, d, &mut grads);
                }
                Op::Tanh(x) => {
                    let d = Zip::from(&g).and(val).map_collect(|&gi, &y| gi * (T::one() - y * y));
                    acc(*x, d, &mut grads);
                }
                Op::Sigmoid(x) => {
                    let d = Zip::from(&g).and(val).map_collect(|&gi, &y| gi * y * (T::one() - y));
                    acc(*x, d, &mut grads);
                }
                Op::Exp(x) => {
                    let d = Zip::from(&g).and(val).map_collect(|&gi, &y| gi * y);
                    acc(*x, d, &mut grads);
                }
                Op::Log(x) => {
                    let d = Zip::from(&g).and(self.value(*x)).map_collect(|&gi, &v| gi / v);
                    acc(*x, d, &mut grads);
                }
                Op::Square(x) => {
                    let two = T::of(2.0);
                    let d = Zip::from(&g).and(self.value(*x)).map_collect(|&gi, &v| two * gi * v);
                    acc(*x, d, &mut grads);
                }
                Op::Softmax(x) => {
                    // dx = y * (g - <g, y>)
                    let mut d = Zip::from(&g).and(val).map_collect(|&gi, &y| gi * y);
                    let dots = d.sum_axis(Axis(1));
                    Zip::from(d.rows_mut()).and(val.rows()).and(&dots).for_each(|mut drow, yrow, &dot| {
                        Zip::from(&mut drow).and(&yrow).for_each(|dv, &y| *dv -= y * dot);
                    });
                    acc(*x, d, &mut grads);
                }
                Op::LogSoftmax(x) => {
                    // dx = g - softmax * sum(g)
                    let sums = g.sum_axis(Axis(1));
                    let mut d = g.clone();
                    Zip::from(d.rows_mut()).and(val.rows()).and(&sums).for_each(|mut drow, lrow, &s| {
                        Zip::from(&mut drow).and(&lrow).for_each(|dv, &l| *dv -= l.exp() * s);
                    });
                    acc(*x, d, &mut grads);
                }
                Op::SumAll(x) => {
                    let d = Array2::from_elem(self.shape(*x), g[(0, 0)]);
                    acc(*x, d, &mut grads);
                }
                Op::MeanAll(x) => {
                    let shape = self.shape(*x);
                    let d = Array2::from_elem(shape, g[(0, 0)] / T::of_usize(shape.0 * shape.1));
                    acc(*x, d, &mut grads);
                }
                Op::SumCols(x) | Op::SumRows(x) => {
                    let shape = self.shape(*x);
                    let d = g.broadcast(shape).expect("reduced axis broadcasts").to_owned();
                    acc(*x, d, &mut grads);
                }
                Op::LogMeanExp(x) => {
                    let xv = self.value(*x);
                    let lme = val[(0, 0)];
                    let n = T::of_usize(xv.len());
                    let d = xv.mapv(|v| g[(0, 0)] * (v - lme).exp() / n);
                    acc(*x, d, &mut grads);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        let d = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        acc(*p, d, &mut grads);
                        start += w;
                    }
                }
                Op::Slice(x, start) => {
                    let mut d = Array2::zeros(self.shape(*x));
                    let w = g.ncols();
                    d.slice_mut(ndarray::s![.., *start..*start + w]).assign(&g);
                    acc(*x, d, &mut grads);
                }
                Op::Clamp(x, lo, hi) => {
                    let d = Zip::from(&g).and(self.value(*x)).map_collect(|&gi, &v| {
                        if v >= *lo && v <= *hi {
                            gi
                        } else {
                            T::zero()
                        }
                    });
                    acc(*x, d, &mut grads);
                }
                Op::Gather(x, idx) => {
                    let mut d = Array2::zeros(self.shape(*x));
                    for (r, &j) in idx.iter().enumerate() {
                        d[(r, j)] = g[(r, 0)];
                    }
                    acc(*x, d, &mut grads);
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        // only leaves keep their gradients; intermediates were consumed above
        Ok(Gradients { grads, shapes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn square_gradient_at_three() {
        let mut g = Graph::<f64>::new();
        let x = g.param(array![[3.0]]);
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x)[(0, 0)], 6.0);
    }

    #[test]
    fn mean_gradient_is_one_over_n() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Array2::from_elem((2, 5), 1.0));
        let m = g.mean(x);
        let grads = g.backward(m).unwrap();
        assert!(grads.get(x).iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn identity_matmul_returns_input() {
        let mut g = Graph::<f64>::new();
        let id = g.constant(Array2::eye(2));
        let v = g.constant(array![[1.5], [-2.0]]);
        let out = g.matmul(id, v).unwrap();
        assert_eq!(g.value(out), &array![[1.5], [-2.0]]);
        let bad = g.constant(array![[1.0, 2.0, 3.0]]);
        assert!(g.matmul(id, bad).is_err());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Array2::zeros((1, 3)));
        let y = g.softmax(x);
        assert!(g.value(y).iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn stop_gradient_blocks_and_passes_value() {
        // L = ||sg(a) - b||^2: dL/da = 0, dL/db = -2 (a - b)
        let mut g = Graph::<f64>::new();
        let a = g.param(array![[1.0, -2.0, 0.5]]);
        let b = g.param(array![[0.25, 1.0, 2.0]]);
        let sa = g.stop_gradient(a);
        assert_eq!(g.value(sa), g.value(a));
        let d = g.sub(sa, b).unwrap();
        let sq = g.square(d);
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(a).iter().all(|&v| v == 0.0));
        let expected = array![[-1.5, 6.0, 3.0]];
        assert_eq!(grads.get(b), expected);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Array2::zeros((2, 2)));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut g = Graph::<f64>::new();
        let x = g.param(array![[1.0, 0.0]]);
        assert!(matches!(g.log(x), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn broadcast_mismatch_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Array2::zeros((2, 3)));
        let b = g.param(Array2::zeros((3, 2)));
        assert!(g.add(a, b).is_err());
        let row = g.param(Array2::zeros((1, 3)));
        let sum = g.add(a, row).unwrap();
        assert_eq!(g.shape(sum), (2, 3));
    }

    #[test]
    fn straight_through_value_and_gradient() {
        let mut g = Graph::<f64>::new();
        let f = g.param(array![[0.2, 0.4]]);
        let q = g.constant(array![[1.0, -1.0]]);
        let st = g.straight_through(q, f).unwrap();
        assert_eq!(g.value(st), &array![[1.0, -1.0]]);
        let s = g.sum(st);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(f), array![[1.0, 1.0]]);
    }
}
