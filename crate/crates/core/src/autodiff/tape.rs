use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU32, Ordering};

use super::tensor::{dot, gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
    Relu,
    Log,
    Exp,
    Sqrt,
    Recip,
    Square,
    Acos,
    Asin,
    Clamp(f64, f64),
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Relu => "relu",
            Unary::Log => "log",
            Unary::Exp => "exp",
            Unary::Sqrt => "sqrt",
            Unary::Recip => "recip",
            Unary::Square => "square",
            Unary::Acos => "acos",
            Unary::Asin => "asin",
            Unary::Clamp(..) => "clamp",
        }
    }

    fn check_domain(self, x: f64) -> Result<()> {
        let ok = match self {
            Unary::Log => x > 0.0,
            Unary::Sqrt => x >= 0.0,
            Unary::Recip => x != 0.0,
            Unary::Acos | Unary::Asin => (-1.0..=1.0).contains(&x),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(self.name(), format!("argument {x} outside domain")))
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Relu => x.max(0.0),
            Unary::Log => x.ln(),
            Unary::Exp => x.exp(),
            Unary::Sqrt => x.sqrt(),
            Unary::Recip => 1.0 / x,
            Unary::Square => x * x,
            Unary::Acos => x.acos(),
            Unary::Asin => x.asin(),
            Unary::Clamp(lo, hi) => x.clamp(lo, hi),
        }
    }

    /// d(out)/d(in) given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        // Floor for 1 - x² so acos/asin stay finite at the ends of [-1, 1].
        const EDGE: f64 = 1e-12;
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Log => 1.0 / x,
            Unary::Exp => y,
            Unary::Sqrt => 0.5 / y,
            Unary::Recip => -y * y,
            Unary::Square => 2.0 * x,
            Unary::Acos => -1.0 / (1.0 - x * x).max(EDGE).sqrt(),
            Unary::Asin => 1.0 / (1.0 - x * x).max(EDGE).sqrt(),
            Unary::Clamp(lo, hi) => {
                if x >= lo && x <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
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

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Affine(usize, f64),
    Unary(usize, Unary),
    MatMul(usize, usize),
    Transpose(usize),
    Gather(usize, Rc<[usize]>),
    Scatter {
        src: usize,
        targets: Rc<[usize]>,
        weights: Rc<[f64]>,
    },
    CircCorr(usize, usize),
    RowSum(usize),
    Sum(usize),
    Mean(usize),
    RowLogSumExp {
        src: usize,
        exclude_diag: bool,
    },
    Pick(usize, Rc<[usize]>),
    Conv {
        z: usize,
        r: usize,
        kernels: usize,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Reverse-mode recording of tensor operations.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and `backward` walks it from the end.
pub struct Tape {
    id: u32,
    nodes: RefCell<Vec<Node>>,
    spent: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the variable does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index()).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            spent: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, t: Tensor) -> Var {
        self.push_unchecked(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var {
        self.push_unchecked(t, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.index()].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.index()].value.shape().to_vec()
    }

    fn push_unchecked(&self, t: Tensor, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(t),
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            idx: (nodes.len() - 1) as u32,
        }
    }

    fn push(&self, name: &'static str, t: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if !t.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].needs_grad)
        };
        Ok(self.push_unchecked(t, op, needs_grad))
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::ForeignVar);
        }
        Ok(v.index())
    }

    fn binary_same(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize, Rc<Tensor>, Rc<Tensor>)> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        Ok((ia, ib, va, vb))
    }

    fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary_same("add", a, b)?;
        self.push(
            "add",
            Self::zip_with(&va, &vb, |x, y| x + y),
            Op::Add(ia, ib),
            &[ia, ib],
        )
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary_same("sub", a, b)?;
        self.push(
            "sub",
            Self::zip_with(&va, &vb, |x, y| x - y),
            Op::Sub(ia, ib),
            &[ia, ib],
        )
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary_same("mul", a, b)?;
        self.push(
            "mul",
            Self::zip_with(&va, &vb, |x, y| x * y),
            Op::Mul(ia, ib),
            &[ia, ib],
        )
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary_same("div", a, b)?;
        if vb.data().contains(&0.0) {
            return Err(Error::domain("div", "division by zero"));
        }
        self.push(
            "div",
            Self::zip_with(&va, &vb, |x, y| x / y),
            Op::Div(ia, ib),
            &[ia, ib],
        )
    }

    /// Adds a bias vector to every row of `a`.
    pub fn add_row(&self, a: Var, bias: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(bias)?);
        let (va, vb) = (self.value(a), self.value(bias));
        let (rows, cols) = va.dims2();
        if vb.len() != cols {
            return Err(Error::shape(
                "add_row",
                format!("bias of {} for {cols} columns", vb.len()),
            ));
        }
        let mut out = (*va).clone();
        for r in 0..rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        self.push("add_row", out, Op::AddRow(ia, ib), &[ia, ib])
    }

    /// Multiplies row i of `a` by `col[i]`.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var> {
        let (ia, ic) = (self.check(a)?, self.check(col)?);
        let (va, vc) = (self.value(a), self.value(col));
        let rows = va.rows();
        if vc.len() != rows {
            return Err(Error::shape(
                "mul_col",
                format!("column of {} for {rows} rows", vc.len()),
            ));
        }
        let mut out = (*va).clone();
        for r in 0..rows {
            let s = vc.data()[r];
            out.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        self.push("mul_col", out, Op::MulCol(ia, ic), &[ia, ic])
    }

    /// `scale * a + shift`.
    pub fn affine(&self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let va = self.value(a);
        let data = va.data().iter().map(|x| scale * x + shift).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push("affine", out, Op::Affine(ia, scale), &[ia])
    }

    pub fn scale(&self, a: Var, s: f64) -> Result<Var> {
        self.affine(a, s, 0.0)
    }

    pub fn unary(&self, a: Var, kind: Unary) -> Result<Var> {
        let ia = self.check(a)?;
        let va = self.value(a);
        let mut data = Vec::with_capacity(va.len());
        for &x in va.data() {
            kind.check_domain(x)?;
            data.push(kind.apply(x));
        }
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push(kind.name(), out, Op::Unary(ia, kind), &[ia])
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Tanh)
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Result<Var> {
        self.unary(a, Unary::LeakyRelu(slope))
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Relu)
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Log)
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Exp)
    }

    pub fn sqrt(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Sqrt)
    }

    pub fn recip(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Recip)
    }

    pub fn square(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Square)
    }

    pub fn acos(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Acos)
    }

    pub fn asin(&self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Asin)
    }

    /// Gradient is zero wherever the input lies outside `[lo, hi]`.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, Unary::Clamp(lo, hi))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 {
            return Err(Error::shape("matmul", "operands must be matrices"));
        }
        let (m, k) = va.dims2();
        let (k2, n) = vb.dims2();
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(va.data(), vb.data(), &mut out, m, k, n);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(ia, ib), &[ia, ib])
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let va = self.value(a);
        let (m, n) = va.dims2();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = va.data()[i * n + j];
            }
        }
        self.push("transpose", Tensor::new(vec![n, m], out)?, Op::Transpose(ia), &[ia])
    }

    /// `x · wᵀ`, i.e. `W x` applied to every row of `x`.
    pub fn linear(&self, x: Var, w: Var) -> Result<Var> {
        let wt = self.transpose(w)?;
        self.matmul(x, wt)
    }

    /// Rows `idx[0], idx[1], …` of `a`, stacked.
    pub fn gather_rows(&self, a: Var, idx: impl Into<Rc<[usize]>>) -> Result<Var> {
        let ia = self.check(a)?;
        let idx: Rc<[usize]> = idx.into();
        let va = self.value(a);
        let (rows, cols) = va.dims2();
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &r in idx.iter() {
            if r >= rows {
                return Err(Error::shape("gather_rows", format!("row {r} of {rows}")));
            }
            out.extend_from_slice(va.row(r));
        }
        self.push(
            "gather_rows",
            Tensor::new(vec![idx.len(), cols], out)?,
            Op::Gather(ia, idx),
            &[ia],
        )
    }

    /// `out[targets[i]] += weights[i] * a[i]` into a zero matrix of `out_rows` rows.
    pub fn scatter_rows(
        &self,
        a: Var,
        targets: impl Into<Rc<[usize]>>,
        weights: impl Into<Rc<[f64]>>,
        out_rows: usize,
    ) -> Result<Var> {
        let ia = self.check(a)?;
        let (targets, weights): (Rc<[usize]>, Rc<[f64]>) = (targets.into(), weights.into());
        let va = self.value(a);
        let (rows, cols) = va.dims2();
        if targets.len() != rows || weights.len() != rows {
            return Err(Error::shape(
                "scatter_rows",
                format!("{rows} rows, {} targets, {} weights", targets.len(), weights.len()),
            ));
        }
        let mut out = vec![0.0; out_rows * cols];
        for (i, (&t, &w)) in targets.iter().zip(weights.iter()).enumerate() {
            if t >= out_rows {
                return Err(Error::shape("scatter_rows", format!("target {t} of {out_rows}")));
            }
            let dst = &mut out[t * cols..(t + 1) * cols];
            for (d, s) in dst.iter_mut().zip(va.row(i)) {
                *d += w * s;
            }
        }
        let op = Op::Scatter {
            src: ia,
            targets,
            weights,
        };
        self.push("scatter_rows", Tensor::new(vec![out_rows, cols], out)?, op, &[ia])
    }

    /// Row-wise circular correlation: `out[k] = Σ_i a[i] · b[(i + k) mod d]`.
    pub fn circular_correlation(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary_same("circular_correlation", a, b)?;
        let (rows, d) = va.dims2();
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let (ar, br) = (va.row(r), vb.row(r));
            let o = &mut out[r * d..(r + 1) * d];
            for (k, ok) in o.iter_mut().enumerate() {
                let mut s = 0.0;
                for (i, &ai) in ar.iter().enumerate() {
                    s += ai * br[(i + k) % d];
                }
                *ok = s;
            }
        }
        let out = Tensor::new(va.shape().to_vec(), out)?;
        self.push("circular_correlation", out, Op::CircCorr(ia, ib), &[ia, ib])
    }

    /// Sum of each row, as an n×1 column.
    pub fn row_sum(&self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let va = self.value(a);
        let rows = va.rows();
        let out: Vec<f64> = (0..rows).map(|r| va.row(r).iter().sum()).collect();
        self.push("row_sum", Tensor::new(vec![rows, 1], out)?, Op::RowSum(ia), &[ia])
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(ia), &[ia])
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(ia), &[ia])
    }

    /// `log Σ_j exp(a[i, j])` per row; with `exclude_diag` the j = i term is skipped.
    pub fn row_logsumexp(&self, a: Var, exclude_diag: bool) -> Result<Var> {
        let ia = self.check(a)?;
        let va = self.value(a);
        let (rows, cols) = va.dims2();
        if cols == 0 || (exclude_diag && cols < 2) {
            return Err(Error::shape("row_logsumexp", "not enough columns"));
        }
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                let row = va.row(r);
                let keep = |j: usize| !(exclude_diag && j == r);
                let m = (0..cols)
                    .filter(|&j| keep(j))
                    .map(|j| row[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..cols).filter(|&j| keep(j)).map(|j| (row[j] - m).exp()).sum();
                m + s.ln()
            })
            .collect();
        let op = Op::RowLogSumExp { src: ia, exclude_diag };
        self.push("row_logsumexp", Tensor::new(vec![rows, 1], out)?, op, &[ia])
    }

    /// `out[i] = a[i, cols[i]]`, as an n×1 column.
    pub fn pick(&self, a: Var, cols: impl Into<Rc<[usize]>>) -> Result<Var> {
        let ia = self.check(a)?;
        let cols: Rc<[usize]> = cols.into();
        let va = self.value(a);
        let (rows, ncols) = va.dims2();
        if cols.len() != rows {
            return Err(Error::shape("pick", format!("{} indices for {rows} rows", cols.len())));
        }
        let mut out = Vec::with_capacity(rows);
        for (r, &c) in cols.iter().enumerate() {
            if c >= ncols {
                return Err(Error::shape("pick", format!("column {c} of {ncols}")));
            }
            out.push(va.get2(r, c));
        }
        self.push("pick", Tensor::new(vec![rows, 1], out)?, Op::Pick(ia, cols), &[ia])
    }

    /// Same-padded 1-D convolution over the two-row map `[z; r]`.
    ///
    /// `z` and `r` are B×d, `kernels` is C×2×w with odd w. Output is B×(C·d),
    /// channel-major within each row:
    /// `out[b, c·d + i] = Σ_row Σ_k kernels[c, row, k] · x_row[b, i + k − (w − 1)/2]`.
    pub fn conv_same(&self, z: Var, r: Var, kernels: Var) -> Result<Var> {
        let (iz, ir, ik) = (self.check(z)?, self.check(r)?, self.check(kernels)?);
        let (vz, vr, vk) = (self.value(z), self.value(r), self.value(kernels));
        if vz.shape() != vr.shape() {
            return Err(Error::shape(
                "conv_same",
                format!("{:?} vs {:?}", vz.shape(), vr.shape()),
            ));
        }
        let ks = vk.shape();
        if ks.len() != 3 || ks[1] != 2 || ks[2] % 2 == 0 {
            return Err(Error::shape(
                "conv_same",
                format!("kernel shape {ks:?}, expected C×2×odd"),
            ));
        }
        let (channels, width) = (ks[0], ks[2]);
        let (batch, d) = vz.dims2();
        let half = (width / 2) as isize;
        let mut out = vec![0.0; batch * channels * d];
        for b in 0..batch {
            let rows = [vz.row(b), vr.row(b)];
            for c in 0..channels {
                let o = &mut out[(b * channels + c) * d..(b * channels + c + 1) * d];
                for (row, x) in rows.iter().enumerate() {
                    for k in 0..width {
                        let w = vk.data()[(c * 2 + row) * width + k];
                        let shift = k as isize - half;
                        for (i, oi) in o.iter_mut().enumerate() {
                            let j = i as isize + shift;
                            if j >= 0 && (j as usize) < d {
                                *oi += w * x[j as usize];
                            }
                        }
                    }
                }
            }
        }
        let op = Op::Conv {
            z: iz,
            r: ir,
            kernels: ik,
        };
        self.push(
            "conv_same",
            Tensor::new(vec![batch, channels * d], out)?,
            op,
            &[iz, ir, ik],
        )
    }

    /// Reverse pass from a scalar `loss`. A tape can be differentiated once.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let il = self.check(loss)?;
        if self.spent.get() {
            return Err(Error::TapeSpent);
        }
        let nodes = self.nodes.borrow();
        let lv = &nodes[il].value;
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        self.spent.set(true);

        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[il] = Some(vec![1.0]);

        for i in (0..=il).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(&nodes, node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| {
                g.filter(|_| n.needs_grad)
                    .map(|g| Tensor::new(n.value.shape().to_vec(), g).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }
}

fn acc<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], idx: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[idx].needs_grad {
        return None;
    }
    let len = nodes[idx].value.len();
    Some(grads[idx].get_or_insert_with(|| vec![0.0; len]))
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    match &node.op {
        Op::Leaf | Op::Constant => {}
        Op::Add(a, b) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                gb.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            if let Some(ga) = acc(nodes, grads, *a) {
                for ((x, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                    *x += gi * bi;
                }
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                for ((x, gi), ai) in gb.iter_mut().zip(g).zip(va) {
                    *x += gi * ai;
                }
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            if let Some(ga) = acc(nodes, grads, *a) {
                for ((x, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                    *x += gi / bi;
                }
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                for (((x, gi), ai), bi) in gb.iter_mut().zip(g).zip(va).zip(vb) {
                    *x -= gi * ai / (bi * bi);
                }
            }
        }
        Op::AddRow(a, bias) => {
            let cols = val(*a).cols();
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = acc(nodes, grads, *bias) {
                for row in g.chunks(cols) {
                    gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::MulCol(a, col) => {
            let va = val(*a);
            let vc = val(*col).data();
            let cols = va.cols();
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, (grow, gi)) in ga.chunks_mut(cols).zip(g.chunks(cols)).enumerate() {
                    grow.iter_mut().zip(gi).for_each(|(x, y)| *x += y * vc[r]);
                }
            }
            if let Some(gc) = acc(nodes, grads, *col) {
                for (r, gi) in g.chunks(cols).enumerate() {
                    gc[r] += dot(gi, va.row(r));
                }
            }
        }
        Op::Affine(a, s) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += s * y);
            }
        }
        Op::Unary(a, kind) => {
            let va = val(*a).data();
            let out = node.value.data();
            if let Some(ga) = acc(nodes, grads, *a) {
                for (((x, gi), xi), yi) in ga.iter_mut().zip(g).zip(va).zip(out) {
                    if *gi != 0.0 {
                        *x += gi * kind.derivative(*xi, *yi);
                    }
                }
            }
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (m, k) = va.dims2();
            let n = vb.cols();
            if let Some(ga) = acc(nodes, grads, *a) {
                gemm_nt_acc(g, vb.data(), ga, m, n, k);
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                gemm_tn_acc(va.data(), g, gb, m, k, n);
            }
        }
        Op::Transpose(a) => {
            let (m, n) = val(*a).dims2();
            if let Some(ga) = acc(nodes, grads, *a) {
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] += g[j * m + i];
                    }
                }
            }
        }
        Op::Gather(a, idx) => {
            let cols = val(*a).cols();
            if let Some(ga) = acc(nodes, grads, *a) {
                for (i, &r) in idx.iter().enumerate() {
                    let dst = &mut ga[r * cols..(r + 1) * cols];
                    dst.iter_mut()
                        .zip(&g[i * cols..(i + 1) * cols])
                        .for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Scatter { src, targets, weights } => {
            let cols = val(*src).cols();
            if let Some(ga) = acc(nodes, grads, *src) {
                for (i, (&t, &w)) in targets.iter().zip(weights.iter()).enumerate() {
                    let dst = &mut ga[i * cols..(i + 1) * cols];
                    dst.iter_mut()
                        .zip(&g[t * cols..(t + 1) * cols])
                        .for_each(|(x, y)| *x += w * y);
                }
            }
        }
        Op::CircCorr(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (rows, d) = va.dims2();
            if let Some(ga) = acc(nodes, grads, *a) {
                for r in 0..rows {
                    let (br, gr) = (vb.row(r), &g[r * d..(r + 1) * d]);
                    for i in 0..d {
                        let mut s = 0.0;
                        for (k, gk) in gr.iter().enumerate() {
                            s += gk * br[(i + k) % d];
                        }
                        ga[r * d + i] += s;
                    }
                }
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                for r in 0..rows {
                    let (ar, gr) = (va.row(r), &g[r * d..(r + 1) * d]);
                    for j in 0..d {
                        let mut s = 0.0;
                        for (k, gk) in gr.iter().enumerate() {
                            s += gk * ar[(j + d - k) % d];
                        }
                        gb[r * d + j] += s;
                    }
                }
            }
        }
        Op::RowSum(a) => {
            let cols = val(*a).cols();
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, row) in ga.chunks_mut(cols).enumerate() {
                    row.iter_mut().for_each(|x| *x += g[r]);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::Mean(a) => {
            let n = val(*a).len() as f64;
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().for_each(|x| *x += g[0] / n);
            }
        }
        Op::RowLogSumExp { src, exclude_diag } => {
            let va = val(*src);
            let cols = va.cols();
            let out = node.value.data();
            if let Some(ga) = acc(nodes, grads, *src) {
                for (r, grow) in ga.chunks_mut(cols).enumerate() {
                    let row = va.row(r);
                    for (j, x) in grow.iter_mut().enumerate() {
                        if *exclude_diag && j == r {
                            continue;
                        }
                        *x += g[r] * (row[j] - out[r]).exp();
                    }
                }
            }
        }
        Op::Pick(a, cols) => {
            let ncols = val(*a).cols();
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, &c) in cols.iter().enumerate() {
                    ga[r * ncols + c] += g[r];
                }
            }
        }
        Op::Conv { z, r, kernels } => {
            let (vz, vr, vk) = (val(*z), val(*r), val(*kernels));
            let ks = vk.shape();
            let (channels, width) = (ks[0], ks[2]);
            let (batch, d) = vz.dims2();
            let half = (width / 2) as isize;
            let mut gz = vec![0.0; batch * d];
            let mut gr = vec![0.0; batch * d];
            let mut gk = vec![0.0; vk.len()];
            for b in 0..batch {
                let xs = [vz.row(b), vr.row(b)];
                for c in 0..channels {
                    let go = &g[(b * channels + c) * d..(b * channels + c + 1) * d];
                    for (row, x) in xs.iter().enumerate() {
                        let gin = if row == 0 { &mut gz } else { &mut gr };
                        for k in 0..width {
                            let widx = (c * 2 + row) * width + k;
                            let w = vk.data()[widx];
                            let shift = k as isize - half;
                            let mut gw = 0.0;
                            for (i, &goi) in go.iter().enumerate() {
                                let j = i as isize + shift;
                                if j < 0 || j as usize >= d {
                                    continue;
                                }
                                let j = j as usize;
                                gw += goi * x[j];
                                gin[b * d + j] += goi * w;
                            }
                            gk[widx] += gw;
                        }
                    }
                }
            }
            for (idx, local) in [(*z, gz), (*r, gr), (*kernels, gk)] {
                if let Some(dst) = acc(nodes, grads, idx) {
                    dst.iter_mut().zip(&local).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
}
