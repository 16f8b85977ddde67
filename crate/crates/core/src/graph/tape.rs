use super::lstm::{self, LstmCache, LstmWeights};
use super::params::{ParamId, ParamStore};
use super::real::{gemm, MatRef};
use super::sinc;
use super::spectral::{multires_stft_loss_grad, StftResolution};
use super::{GraphError, Real, Tensor};

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Output at `t` sees inputs `t - (K-1)d ..= t`.
    Causal,
    /// Taps centred on `t`; `K` must be odd.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub dilation: usize,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Self {
            kernel,
            dilation,
            mode: ConvMode::Causal,
        }
    }

    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self {
            kernel,
            dilation,
            mode: ConvMode::Same,
        }
    }

    /// Time offset of tap `k` relative to the output position.
    pub fn offset(&self, k: usize) -> isize {
        let d = self.dilation as isize;
        match self.mode {
            ConvMode::Causal => -((self.kernel - 1 - k) as isize) * d,
            ConvMode::Same => (k as isize - (self.kernel / 2) as isize) * d,
        }
    }
}

/// Parameters of one LSTM direction: `wih [In, 4H]`, `whh [H, 4H]`,
/// `b [1, 4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub wih: Var,
    pub whh: Var,
    pub b: Var,
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Gated(Var),
    Repeat {
        x: Var,
        factor: usize,
    },
    Concat(Var, Var),
    Sum(Var),
    Mean(Var),
    BiLstm {
        x: Var,
        fw: LstmVars,
        bw: LstmVars,
        cache: Box<[LstmCache<T>; 2]>,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        lse: Vec<T>,
    },
    StftLoss {
        x: Var,
        grad: Vec<f64>,
    },
    SincLowpass {
        cutoff: Var,
        deriv: Vec<f64>,
    },
    FrameFir {
        x: Var,
        coefs: Var,
        hop: usize,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Dense { .. } => "dense",
            Op::Conv1d { .. } => "conv1d",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Gated(_) => "gated",
            Op::Repeat { .. } => "repeat",
            Op::Concat(..) => "concat",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::BiLstm { .. } => "bilstm",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
            Op::StftLoss { .. } => "stft_loss",
            Op::SincLowpass { .. } => "sinc_lowpass",
            Op::FrameFir { .. } => "frame_fir",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Tape of eagerly evaluated nodes. Building a node runs its forward
/// pass; [`Graph::backward`] walks the tape in reverse.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    scope: String,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            scope: String::from("<root>"),
        }
    }

    /// Label attached to shape errors raised by subsequently added nodes.
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// depends on a parameter and was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn shape_err(&self, op: &'static str, message: String) -> GraphError {
        GraphError::Shape {
            node: self.nodes.len(),
            op,
            scope: self.scope.clone(),
            message,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shp(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        let (r, c) = p.matrix_shape();
        self.push(Tensor::from_vec(r, c, p.data.clone()), Op::Param(id), true)
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<bool, GraphError> {
        let (sa, sb) = (self.shp(a), self.shp(b));
        if sa == sb {
            Ok(false)
        } else if sb.0 == 1 && sb.1 == sa.1 {
            Ok(true)
        } else {
            Err(self.shape_err(op, format!("operands {}x{} and {}x{}", sa.0, sa.1, sb.0, sb.1)))
        }
    }

    fn binary(&mut self, op: Op<T>, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Var, GraphError> {
        let bc = self.broadcast(op.name(), a, b)?;
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let cols = va.cols;
        let data = va
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb.data[if bc { i % cols } else { i }]))
            .collect();
        let value = Tensor::from_vec(va.rows, cols, data);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, op, ng))
    }

    /// Elementwise sum; `b` may be a single row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.binary(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.binary(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.binary(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = &self.nodes[a.0].value;
        let value = Tensor::from_vec(v.rows, v.cols, v.data.iter().map(|&x| x * c).collect());
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    fn unary(&mut self, op: Op<T>, a: Var, f: impl Fn(T) -> T) -> Var {
        let v = &self.nodes[a.0].value;
        let value = Tensor::from_vec(v.rows, v.cols, v.data.iter().map(|&x| f(x)).collect());
        let ng = self.ng(a);
        self.push(value, op, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh(a), a, |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu(a), a, |x| x.max(T::zero()))
    }

    fn check_bias(&self, op: &'static str, b: Option<Var>, cols: usize) -> Result<(), GraphError> {
        if let Some(b) = b {
            let s = self.shp(b);
            if s != (1, cols) {
                return Err(self.shape_err(op, format!("bias is {}x{}, expected 1x{cols}", s.0, s.1)));
            }
        }
        Ok(())
    }

    fn bias_rows(&self, b: Option<Var>, rows: usize, cols: usize) -> Vec<T> {
        match b {
            Some(b) => self.nodes[b.0].value.data.repeat(rows),
            None => vec![T::zero(); rows * cols],
        }
    }

    /// `x [T, In] · w [In, Out] + b [1, Out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, GraphError> {
        let ((t, n_in), (wi, n_out)) = (self.shp(x), self.shp(w));
        if n_in != wi {
            return Err(self.shape_err("dense", format!("input has {n_in} columns, weight is {wi}x{n_out}")));
        }
        self.check_bias("dense", b, n_out)?;
        let mut y = self.bias_rows(b, t, n_out);
        gemm(
            T::one(),
            MatRef::new(&self.nodes[x.0].value.data, t, n_in),
            MatRef::new(&self.nodes[w.0].value.data, n_in, n_out),
            T::one(),
            &mut y,
            n_out,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(Tensor::from_vec(t, n_out, y), Op::Dense { x, w, b }, ng))
    }

    /// Dilated 1-D convolution over time. `w` holds `[K, In, Out]` folded
    /// to `[K*In, Out]`; samples outside the sequence are zero.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var, GraphError> {
        let ((t, n_in), (wr, n_out)) = (self.shp(x), self.shp(w));
        if spec.kernel == 0 || spec.dilation == 0 {
            return Err(self.shape_err("conv1d", "kernel and dilation must be positive".into()));
        }
        if spec.mode == ConvMode::Same && spec.kernel.is_multiple_of(2) {
            return Err(self.shape_err("conv1d", "same-mode kernel must be odd".into()));
        }
        if wr != spec.kernel * n_in {
            return Err(self.shape_err(
                "conv1d",
                format!("weight has {wr} rows, expected kernel {} x {n_in} inputs", spec.kernel),
            ));
        }
        self.check_bias("conv1d", b, n_out)?;
        let mut y = self.bias_rows(b, t, n_out);
        let xv = &self.nodes[x.0].value.data;
        let wv = &self.nodes[w.0].value.data;
        for k in 0..spec.kernel {
            let Some((t0, n, src)) = conv_range(t, spec.offset(k)) else { continue };
            gemm(
                T::one(),
                MatRef::new(&xv[src * n_in..], n, n_in),
                MatRef::new(&wv[k * n_in * n_out..], n_in, n_out),
                T::one(),
                &mut y[t0 * n_out..],
                n_out,
            );
        }
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(Tensor::from_vec(t, n_out, y), Op::Conv1d { x, w, b, spec }, ng))
    }

    /// `tanh(a[:, :C]) * sigmoid(a[:, C:])` for `a` of width `2C`.
    pub fn gated(&mut self, a: Var) -> Result<Var, GraphError> {
        let (t, c2) = self.shp(a);
        if c2 % 2 != 0 {
            return Err(self.shape_err("gated", format!("width {c2} is odd")));
        }
        let c = c2 / 2;
        let av = &self.nodes[a.0].value.data;
        let mut y = Vec::with_capacity(t * c);
        for r in 0..t {
            let row = &av[r * c2..(r + 1) * c2];
            y.extend((0..c).map(|j| row[j].tanh() * sigmoid(row[c + j])));
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::from_vec(t, c, y), Op::Gated(a), ng))
    }

    /// Repeats every row `factor` times (frame-rate to sample-rate).
    pub fn repeat_rows(&mut self, x: Var, factor: usize) -> Result<Var, GraphError> {
        if factor == 0 {
            return Err(self.shape_err("repeat", "factor must be positive".into()));
        }
        let v = &self.nodes[x.0].value;
        let mut y = Vec::with_capacity(v.len() * factor);
        for r in 0..v.rows {
            for _ in 0..factor {
                y.extend_from_slice(v.row(r));
            }
        }
        let value = Tensor::from_vec(v.rows * factor, v.cols, y);
        let ng = self.ng(x);
        Ok(self.push(value, Op::Repeat { x, factor }, ng))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        let ((ra, ca), (rb, cb)) = (self.shp(a), self.shp(b));
        if ra != rb {
            return Err(self.shape_err("concat", format!("row counts {ra} and {rb} differ")));
        }
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut y = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            y.extend_from_slice(va.row(r));
            y.extend_from_slice(vb.row(r));
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::from_vec(ra, ca + cb, y), Op::Concat(a, b), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().copied().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.data.iter().copied().sum::<T>() / T::from_f(v.len().max(1) as f64);
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Bidirectional LSTM; output `[T, 2H]` with the forward direction in
    /// the first `H` columns.
    pub fn bilstm(&mut self, x: Var, fw: LstmVars, bw: LstmVars) -> Result<Var, GraphError> {
        let (t, n_in) = self.shp(x);
        let (_, g4) = self.shp(fw.b);
        if g4 % 4 != 0 || g4 == 0 {
            return Err(self.shape_err("bilstm", format!("bias width {g4} is not 4H")));
        }
        let h = g4 / 4;
        for (dir, vars) in [("forward", fw), ("backward", bw)] {
            let want = [(vars.wih, (n_in, g4)), (vars.whh, (h, g4)), (vars.b, (1, g4))];
            for (v, s) in want {
                if self.shp(v) != s {
                    let got = self.shp(v);
                    return Err(self.shape_err(
                        "bilstm",
                        format!("{dir} weight is {}x{}, expected {}x{}", got.0, got.1, s.0, s.1),
                    ));
                }
            }
        }
        let xv = &self.nodes[x.0].value.data;
        let run = |vars: LstmVars, reverse| {
            let w = LstmWeights {
                wih: &self.nodes[vars.wih.0].value.data,
                whh: &self.nodes[vars.whh.0].value.data,
                b: &self.nodes[vars.b.0].value.data,
            };
            lstm::forward(xv, t, n_in, &w, h, reverse)
        };
        let cf = run(fw, false);
        let cb = run(bw, true);
        let mut y = Vec::with_capacity(t * 2 * h);
        for r in 0..t {
            y.extend_from_slice(&cf.h[r * h..(r + 1) * h]);
            y.extend_from_slice(&cb.h[r * h..(r + 1) * h]);
        }
        let ng = [x, fw.wih, fw.whh, fw.b, bw.wih, bw.whh, bw.b].iter().any(|&v| self.ng(v));
        let op = Op::BiLstm {
            x,
            fw,
            bw,
            cache: Box::new([cf, cb]),
        };
        Ok(self.push(Tensor::from_vec(t, 2 * h, y), op, ng))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, GraphError> {
        let (t, v) = self.shp(logits);
        if targets.len() != t || t == 0 {
            return Err(self.shape_err("softmax_cross_entropy", format!("{} targets for {t} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= v) {
            return Err(self.shape_err("softmax_cross_entropy", format!("target class {bad} outside 0..{v}")));
        }
        let lv = &self.nodes[logits.0].value;
        let mut lse = Vec::with_capacity(t);
        let mut nll = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            let row = lv.row(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&x| (x - m).exp()).sum();
            let l = m + z.ln();
            nll += (l - row[target]).to_f();
            lse.push(l);
        }
        let value = Tensor::scalar(T::from_f(nll / t as f64));
        let ng = self.ng(logits);
        let op = Op::SoftmaxCe {
            logits,
            targets: targets.to_vec(),
            lse,
        };
        Ok(self.push(value, op, ng))
    }

    /// Multi-resolution log-magnitude STFT distance between the column
    /// `x [T, 1]` and a fixed target.
    pub fn stft_loss(&mut self, x: Var, target: &[T], resolutions: &[StftResolution]) -> Result<Var, GraphError> {
        let (t, c) = self.shp(x);
        if c != 1 || t != target.len() {
            return Err(self.shape_err(
                "stft_loss",
                format!("signal is {t}x{c}, target has {} samples", target.len()),
            ));
        }
        let xs: Vec<f64> = self.nodes[x.0].value.data.iter().map(|v| v.to_f()).collect();
        let ts: Vec<f64> = target.iter().map(|v| v.to_f()).collect();
        let (loss, grad) = multires_stft_loss_grad(&xs, &ts, resolutions);
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(T::from_f(loss)), Op::StftLoss { x, grad }, ng))
    }

    /// Per-row Hamming-windowed sinc low-pass design from cutoffs in Hz,
    /// `[F, 1] -> [F, taps]`.
    pub fn sinc_lowpass(&mut self, cutoff: Var, taps: usize, sample_rate: f64) -> Result<Var, GraphError> {
        let (f, c) = self.shp(cutoff);
        if c != 1 || taps.is_multiple_of(2) {
            return Err(self.shape_err("sinc_lowpass", format!("cutoff is {f}x{c}, taps {taps}")));
        }
        let window = sinc::hamming(taps);
        let mut coefs = Vec::with_capacity(f * taps);
        let mut deriv = Vec::with_capacity(f * taps);
        for &fc in &self.nodes[cutoff.0].value.data {
            let (h, dh) = sinc::sinc_lowpass(fc.to_f(), taps, sample_rate, &window);
            coefs.extend(h.into_iter().map(T::from_f));
            deriv.extend(dh);
        }
        let ng = self.ng(cutoff);
        Ok(self.push(Tensor::from_vec(f, taps, coefs), Op::SincLowpass { cutoff, deriv }, ng))
    }

    /// Filters `x [T, 1]` with a centred FIR that changes every `hop`
    /// samples: row `f` of `coefs [F, taps]` applies to samples
    /// `f*hop .. (f+1)*hop`.
    pub fn frame_fir(&mut self, x: Var, coefs: Var, hop: usize) -> Result<Var, GraphError> {
        let ((t, c), (f, taps)) = (self.shp(x), self.shp(coefs));
        if c != 1 || hop == 0 || f * hop != t {
            return Err(self.shape_err(
                "frame_fir",
                format!("signal {t}x{c} does not match {f} frames of hop {hop}"),
            ));
        }
        let xs: Vec<f64> = self.nodes[x.0].value.data.iter().map(|v| v.to_f()).collect();
        let cs: Vec<f64> = self.nodes[coefs.0].value.data.iter().map(|v| v.to_f()).collect();
        let y = sinc::frame_fir(&xs, &cs, taps, hop).into_iter().map(T::from_f).collect();
        let ng = self.ng(x) || self.ng(coefs);
        Ok(self.push(Tensor::from_vec(t, 1, y), Op::FrameFir { x, coefs, hop }, ng))
    }

    /// Reverse pass from the scalar `loss`. Parameter grads in `store` are
    /// zeroed first, then receive the gradient of every parameter node
    /// reachable from `loss`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<(), GraphError> {
        let node = self.nodes.get(loss.0).ok_or(GraphError::NotForwarded(loss.0))?;
        if node.value.len() != 1 {
            return Err(GraphError::NonScalarLoss {
                node: loss.0,
                rows: node.value.rows,
                cols: node.value.cols,
            });
        }
        store.zero_grads();
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.backprop_node(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                for (d, &v) in store.get_mut(*id).grad.iter_mut().zip(g) {
                    *d += v;
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let out = &nodes[i].value;
        macro_rules! acc {
            ($v:expr) => {
                slot(nodes, grads, $v)
            };
        }
        let one = T::one();
        match &nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(nodes[i].op, Op::Sub(..)) { -one } else { one };
                if let Some(da) = acc!(*a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                }
                if let Some(db) = acc!(*b) {
                    let n = db.len();
                    for (k, &x) in g.iter().enumerate() {
                        db[k % n] += sign * x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let nb = vb.len();
                if let Some(da) = acc!(*a) {
                    for (k, d) in da.iter_mut().enumerate() {
                        *d += g[k] * vb.data[k % nb];
                    }
                }
                if let Some(db) = acc!(*b) {
                    for (k, &x) in g.iter().enumerate() {
                        db[k % nb] += x * va.data[k];
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(da) = acc!(*a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d += x * *c);
                }
            }
            Op::Dense { x, w, b } => {
                let ((t, n_in), n_out) = (val(*x).shape(), out.cols);
                let gm = MatRef::new(g, t, n_out);
                if let Some(dx) = acc!(*x) {
                    gemm(one, gm, MatRef::new(&val(*w).data, n_in, n_out).t(), one, dx, n_in);
                }
                if let Some(dw) = acc!(*w) {
                    gemm(one, MatRef::new(&val(*x).data, t, n_in).t(), gm, one, dw, n_out);
                }
                if let Some(db) = b.and_then(|b| slot(nodes, grads, b)) {
                    col_sums_into(g, n_out, db);
                }
            }
            Op::Conv1d { x, w, b, spec } => {
                let ((t, n_in), n_out) = (val(*x).shape(), out.cols);
                let (xv, wv) = (&val(*x).data, &val(*w).data);
                if let Some(dx) = acc!(*x) {
                    for k in 0..spec.kernel {
                        let Some((t0, n, src)) = conv_range(t, spec.offset(k)) else { continue };
                        gemm(
                            one,
                            MatRef::new(&g[t0 * n_out..], n, n_out),
                            MatRef::new(&wv[k * n_in * n_out..], n_in, n_out).t(),
                            one,
                            &mut dx[src * n_in..],
                            n_in,
                        );
                    }
                }
                if let Some(dw) = acc!(*w) {
                    for k in 0..spec.kernel {
                        let Some((t0, n, src)) = conv_range(t, spec.offset(k)) else { continue };
                        gemm(
                            one,
                            MatRef::new(&xv[src * n_in..], n, n_in).t(),
                            MatRef::new(&g[t0 * n_out..], n, n_out),
                            one,
                            &mut dw[k * n_in * n_out..],
                            n_out,
                        );
                    }
                }
                if let Some(db) = b.and_then(|b| slot(nodes, grads, b)) {
                    col_sums_into(g, n_out, db);
                }
            }
            Op::Tanh(a) => {
                if let Some(da) = acc!(*a) {
                    for ((d, &y), &x) in da.iter_mut().zip(&out.data).zip(g) {
                        *d += x * (one - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = acc!(*a) {
                    for ((d, &y), &x) in da.iter_mut().zip(&out.data).zip(g) {
                        *d += x * y * (one - y);
                    }
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                if let Some(da) = acc!(*a) {
                    for ((d, &v), &x) in da.iter_mut().zip(&va.data).zip(g) {
                        if v > T::zero() {
                            *d += x;
                        }
                    }
                }
            }
            Op::Gated(a) => {
                let va = val(*a);
                let (c2, c) = (va.cols, out.cols);
                if let Some(da) = acc!(*a) {
                    for r in 0..va.rows {
                        for j in 0..c {
                            let th = va.data[r * c2 + j].tanh();
                            let sg = sigmoid(va.data[r * c2 + c + j]);
                            let gx = g[r * c + j];
                            da[r * c2 + j] += gx * sg * (one - th * th);
                            da[r * c2 + c + j] += gx * th * sg * (one - sg);
                        }
                    }
                }
            }
            Op::Repeat { x, factor } => {
                let cols = out.cols;
                if let Some(dx) = acc!(*x) {
                    for (r, row) in g.chunks_exact(cols).enumerate() {
                        let base = (r / factor) * cols;
                        for (d, &v) in dx[base..base + cols].iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Concat(a, b) => {
                let (ca, cb) = (val(*a).cols, val(*b).cols);
                if let Some(da) = acc!(*a) {
                    for (r, row) in g.chunks_exact(ca + cb).enumerate() {
                        for (d, &v) in da[r * ca..(r + 1) * ca].iter_mut().zip(&row[..ca]) {
                            *d += v;
                        }
                    }
                }
                if let Some(db) = acc!(*b) {
                    for (r, row) in g.chunks_exact(ca + cb).enumerate() {
                        for (d, &v) in db[r * cb..(r + 1) * cb].iter_mut().zip(&row[ca..]) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = acc!(*a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(da) = acc!(*a) {
                    let s = g[0] / T::from_f(da.len().max(1) as f64);
                    da.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::BiLstm { x, fw, bw, cache } => {
                let (t, n_in) = val(*x).shape();
                let h = out.cols / 2;
                for (dir, (vars, reverse)) in [(*fw, false), (*bw, true)].into_iter().enumerate() {
                    let w = LstmWeights {
                        wih: &val(vars.wih).data,
                        whh: &val(vars.whh).data,
                        b: &val(vars.b).data,
                    };
                    let gr = lstm::backward(&val(*x).data, t, n_in, &w, h, reverse, &cache[dir], g, 2 * h, dir * h);
                    for (v, d) in [(*x, &gr.dx), (vars.wih, &gr.dwih), (vars.whh, &gr.dwhh), (vars.b, &gr.db)] {
                        if let Some(dv) = acc!(v) {
                            dv.iter_mut().zip(d).for_each(|(a, &b)| *a += b);
                        }
                    }
                }
            }
            Op::SoftmaxCe { logits, targets, lse } => {
                let lv = val(*logits);
                let v = lv.cols;
                let s = g[0] / T::from_f(targets.len() as f64);
                if let Some(dl) = acc!(*logits) {
                    for (r, &target) in targets.iter().enumerate() {
                        let row = lv.row(r);
                        for j in 0..v {
                            let p = (row[j] - lse[r]).exp();
                            let y = if j == target { one } else { T::zero() };
                            dl[r * v + j] += s * (p - y);
                        }
                    }
                }
            }
            Op::StftLoss { x, grad } => {
                if let Some(dx) = acc!(*x) {
                    let s = g[0].to_f();
                    dx.iter_mut().zip(grad).for_each(|(d, &v)| *d += T::from_f(s * v));
                }
            }
            Op::SincLowpass { cutoff, deriv } => {
                let taps = out.cols;
                if let Some(dc) = acc!(*cutoff) {
                    for (f, d) in dc.iter_mut().enumerate() {
                        let s: f64 = (0..taps).map(|j| g[f * taps + j].to_f() * deriv[f * taps + j]).sum();
                        *d += T::from_f(s);
                    }
                }
            }
            Op::FrameFir { x, coefs, hop } => {
                let taps = val(*coefs).cols;
                let xs: Vec<f64> = val(*x).data.iter().map(|v| v.to_f()).collect();
                let cs: Vec<f64> = val(*coefs).data.iter().map(|v| v.to_f()).collect();
                let gs: Vec<f64> = g.iter().map(|v| v.to_f()).collect();
                let (dx, dc) = sinc::frame_fir_backward(&xs, &cs, taps, *hop, &gs);
                for (v, d) in [(*x, dx), (*coefs, dc)] {
                    if let Some(dv) = acc!(v) {
                        dv.iter_mut().zip(d).for_each(|(a, b)| *a += T::from_f(b));
                    }
                }
            }
        }
    }
}

fn slot<'a, T: Real>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut [T]> {
    if nodes[v.0].needs_grad {
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]))
    } else {
        None
    }
}

/// For a tap at `offset`, the output rows `t0 .. t0+n` that read input
/// rows `src .. src+n`.
fn conv_range(t: usize, offset: isize) -> Option<(usize, usize, usize)> {
    let t0 = (-offset).max(0) as usize;
    let t1 = (t as isize - offset).min(t as isize);
    if t1 <= t0 as isize {
        return None;
    }
    let n = t1 as usize - t0;
    Some((t0, n, (t0 as isize + offset) as usize))
}

fn col_sums_into<T: Real>(g: &[T], cols: usize, out: &mut [T]) {
    for row in g.chunks_exact(cols) {
        for (d, &v) in out.iter_mut().zip(row) {
            *d += v;
        }
    }
}
