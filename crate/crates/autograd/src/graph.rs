use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::conv::{self, ConvGeometry, ConvShape};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Recip(usize),
    Log(usize),
    Exp(usize),
    Sqrt(usize),
    Sigmoid(usize),
    Relu(usize),
    Clamp(usize, f64, f64),
    SumAll(usize),
    BroadcastAll(usize),
    SumPerSample(usize),
    BroadcastPerSample(usize),
    SumToChannel(usize),
    BroadcastChannel(usize),
    SumSpatial(usize),
    BroadcastSpatial(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Concat(usize, usize),
    Slice { src: usize, start: usize },
    Pad { src: usize, start: usize },
    Conv(usize, usize, ConvShape),
    ConvT(usize, usize, ConvShape),
    ConvW(usize, usize, ConvShape),
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | Concat(a, b) => [Some(a), Some(b)],
            Conv(a, b, _) | ConvT(a, b, _) | ConvW(a, b, _) => [Some(a), Some(b)],
            Scale(a, _) | AddScalar(a) | Recip(a) | Log(a) | Exp(a) | Sqrt(a) | Sigmoid(a) | Relu(a) => {
                [Some(a), None]
            }
            Clamp(a, _, _) | SumAll(a) | BroadcastAll(a) | SumPerSample(a) | BroadcastPerSample(a) => [Some(a), None],
            SumToChannel(a) | BroadcastChannel(a) | SumSpatial(a) | BroadcastSpatial(a) => [Some(a), None],
            Transpose(a) | Reshape(a) => [Some(a), None],
            Slice { src, .. } | Pad { src, .. } => [Some(src), None],
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Append-only computation tape. Gradients are recorded as ordinary nodes,
/// so they can be differentiated again.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// `(outer, channels, inner)` split around axis 1.
fn axis1_split(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "axis-1 op on rank-{} tensor", shape.len());
    (shape[0], shape[1], shape[2..].iter().product())
}

fn dims3(shape: &[usize]) -> [usize; 3] {
    assert_eq!(shape.len(), 5, "expected [batch, channels, d, h, w], got {shape:?}");
    [shape[2], shape[3], shape[4]]
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// A leaf node. Whether it is differentiated depends only on the `wrt`
    /// list passed to [`Graph::grad`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(v))
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// The returned vars live on this graph and may themselves be
    /// differentiated. Inputs that `output` does not depend on get zeros.
    pub fn grad<'g>(&'g self, output: Var<'g>, wrt: &[Var<'g>]) -> Vec<Var<'g>> {
        assert_eq!(output.value().numel(), 1, "grad() needs a scalar output");
        let n = output.id + 1;
        let mut needs = vec![false; n];
        for w in wrt {
            if w.id < n {
                needs[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for id in 0..n {
                if !needs[id] {
                    needs[id] = nodes[id].op.inputs().iter().flatten().any(|&i| needs[i]);
                }
            }
        }
        let mut grads: Vec<Option<Var<'g>>> = vec![None; n];
        grads[output.id] = Some(self.constant(Tensor::full(output.value().shape(), 1.0)));
        for id in (0..n).rev() {
            if !needs[id] {
                continue;
            }
            let Some(g) = grads[id] else { continue };
            let op = self.nodes.borrow()[id].op.clone();
            let me = Var { graph: self, id };
            for (input, gi) in self.vjp(me, &op, g, &needs) {
                grads[input] = Some(match grads[input] {
                    Some(acc) => acc + gi,
                    None => gi,
                });
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => g,
                None => self.constant(Tensor::zeros(w.value().shape())),
            })
            .collect()
    }

    fn vjp<'g>(&'g self, me: Var<'g>, op: &Op, g: Var<'g>, needs: &[bool]) -> Vec<(usize, Var<'g>)> {
        let var = |id: usize| Var { graph: self, id };
        let want = |id: usize| needs[id];
        let mut out = Vec::with_capacity(2);
        let mut emit = |id: usize, f: &dyn Fn() -> Var<'g>| {
            if want(id) {
                out.push((id, f()));
            }
        };
        use Op::*;
        match *op {
            Leaf => {}
            Add(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g);
            }
            Sub(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g.scale(-1.0));
            }
            Mul(a, b) => {
                emit(a, &|| g * var(b));
                emit(b, &|| g * var(a));
            }
            Scale(a, c) => emit(a, &|| g.scale(c)),
            AddScalar(a) => emit(a, &|| g),
            Recip(a) => emit(a, &|| g * (me * me).scale(-1.0)),
            Log(a) => emit(a, &|| g * var(a).recip()),
            Exp(a) => emit(a, &|| g * me),
            Sqrt(a) => emit(a, &|| g * me.recip().scale(0.5)),
            Sigmoid(a) => emit(a, &|| g * me * me.scale(-1.0).add_scalar(1.0)),
            Relu(a) => emit(a, &|| {
                let mask = var(a).value().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                g * self.constant(mask)
            }),
            Clamp(a, lo, hi) => emit(a, &|| {
                let mask = var(a).value().map(|v| if v > lo && v < hi { 1.0 } else { 0.0 });
                g * self.constant(mask)
            }),
            SumAll(a) => emit(a, &|| g.broadcast_all(var(a).value().shape())),
            BroadcastAll(a) => emit(a, &|| g.sum_all()),
            SumPerSample(a) => emit(a, &|| g.broadcast_per_sample(var(a).value().shape())),
            BroadcastPerSample(a) => emit(a, &|| g.sum_per_sample()),
            SumToChannel(a) => emit(a, &|| g.broadcast_channel(var(a).value().shape())),
            BroadcastChannel(a) => emit(a, &|| g.sum_to_channel()),
            SumSpatial(a) => emit(a, &|| g.broadcast_spatial(dims3(var(a).value().shape()))),
            BroadcastSpatial(a) => emit(a, &|| g.sum_spatial()),
            MatMul(a, b) => {
                emit(a, &|| g.matmul(var(b).transpose()));
                emit(b, &|| var(a).transpose().matmul(g));
            }
            Transpose(a) => emit(a, &|| g.transpose()),
            Reshape(a) => emit(a, &|| g.reshape(var(a).value().shape())),
            Concat(a, b) => {
                let ca = var(a).value().shape()[1];
                let cb = var(b).value().shape()[1];
                emit(a, &|| g.slice_channels(0, ca));
                emit(b, &|| g.slice_channels(ca, cb));
            }
            Slice { src, start } => {
                let total = var(src).value().shape()[1];
                emit(src, &|| g.pad_channels(start, total));
            }
            Pad { src, start } => {
                let len = var(src).value().shape()[1];
                emit(src, &|| g.slice_channels(start, len));
            }
            Conv(x, w, cs) => {
                emit(x, &|| self.conv_t_raw(g, var(w), cs));
                emit(w, &|| self.conv_w_raw(var(x), g, cs));
            }
            ConvT(gy, w, cs) => {
                emit(gy, &|| self.conv_raw(g, var(w), cs));
                emit(w, &|| self.conv_w_raw(g, var(gy), cs));
            }
            ConvW(x, gy, cs) => {
                emit(x, &|| self.conv_t_raw(var(gy), g, cs));
                emit(gy, &|| self.conv_raw(var(x), g, cs));
            }
        }
        out
    }

    fn conv_raw<'g>(&'g self, x: Var<'g>, w: Var<'g>, cs: ConvShape) -> Var<'g> {
        let y = conv::conv_forward(x.value().data(), w.value().data(), &cs);
        let shape = vec![cs.batch, cs.cout, cs.out[0], cs.out[1], cs.out[2]];
        self.push(Tensor::new(shape, y), Op::Conv(x.id, w.id, cs))
    }

    fn conv_t_raw<'g>(&'g self, gy: Var<'g>, w: Var<'g>, cs: ConvShape) -> Var<'g> {
        let x = conv::conv_transpose(gy.value().data(), w.value().data(), &cs);
        let shape = vec![cs.batch, cs.cin, cs.dims[0], cs.dims[1], cs.dims[2]];
        self.push(Tensor::new(shape, x), Op::ConvT(gy.id, w.id, cs))
    }

    fn conv_w_raw<'g>(&'g self, x: Var<'g>, gy: Var<'g>, cs: ConvShape) -> Var<'g> {
        let w = conv::conv_weight(x.value().data(), gy.value().data(), &cs);
        let k = cs.geo.kernel;
        self.push(Tensor::new(vec![cs.cout, cs.cin, k, k, k], w), Op::ConvW(x.id, gy.id, cs))
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Scalar value of a one-element var.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Copy of the value with no history.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant((*self.value()).clone())
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let v = self.value().map(f);
        self.graph.push(v, op)
    }

    fn binary(&self, other: Var<'g>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'g> {
        let v = self.value().zip(&other.value(), f);
        self.graph.push(v, op)
    }

    pub fn scale(&self, c: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, c), |v| v * c)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'g> {
        self.unary(Op::AddScalar(self.id), |v| v + c)
    }

    pub fn recip(&self) -> Var<'g> {
        self.unary(Op::Recip(self.id), |v| 1.0 / v)
    }

    pub fn ln(&self) -> Var<'g> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn exp(&self) -> Var<'g> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn sqrt(&self) -> Var<'g> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn square(&self) -> Var<'g> {
        *self * *self
    }

    pub fn sigmoid(&self) -> Var<'g> {
        self.unary(Op::Sigmoid(self.id), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn relu(&self) -> Var<'g> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'g> {
        self.unary(Op::Clamp(self.id, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum_all(&self) -> Var<'g> {
        let s = self.value().sum();
        self.graph.push(Tensor::scalar(s), Op::SumAll(self.id))
    }

    pub fn mean_all(&self) -> Var<'g> {
        let n = self.value().numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    pub fn broadcast_all(&self, shape: &[usize]) -> Var<'g> {
        let v = self.value().item();
        self.graph.push(Tensor::full(shape, v), Op::BroadcastAll(self.id))
    }

    /// `[b, ...] -> [b]`.
    pub fn sum_per_sample(&self) -> Var<'g> {
        let t = self.value();
        let b = t.shape()[0];
        let inner = t.numel() / b;
        let data = t.data().chunks(inner.max(1)).map(|c| c.iter().sum()).collect();
        self.graph.push(Tensor::new(vec![b], data), Op::SumPerSample(self.id))
    }

    pub fn mean_per_sample(&self) -> Var<'g> {
        let t = self.value();
        let inner = (t.numel() / t.shape()[0]) as f64;
        self.sum_per_sample().scale(1.0 / inner)
    }

    /// `[b] -> shape` where `shape[0] == b`.
    pub fn broadcast_per_sample(&self, shape: &[usize]) -> Var<'g> {
        let t = self.value();
        assert_eq!(t.shape(), &shape[..1]);
        let inner: usize = shape[1..].iter().product();
        let data = t.data().iter().flat_map(|&v| std::iter::repeat_n(v, inner)).collect();
        self.graph.push(Tensor::new(shape.to_vec(), data), Op::BroadcastPerSample(self.id))
    }

    /// `[b, c, ...] -> [c]`.
    pub fn sum_to_channel(&self) -> Var<'g> {
        let t = self.value();
        let (outer, c, inner) = axis1_split(t.shape());
        let mut out = vec![0.0; c];
        for o in 0..outer {
            for (ch, acc) in out.iter_mut().enumerate() {
                let start = (o * c + ch) * inner;
                *acc += t.data()[start..start + inner].iter().sum::<f64>();
            }
        }
        self.graph.push(Tensor::new(vec![c], out), Op::SumToChannel(self.id))
    }

    /// `[c] -> [b, c, ...]`.
    pub fn broadcast_channel(&self, shape: &[usize]) -> Var<'g> {
        let t = self.value();
        let (outer, c, inner) = axis1_split(shape);
        assert_eq!(t.shape(), &[c]);
        let mut data = Vec::with_capacity(outer * c * inner);
        for _ in 0..outer {
            for &v in t.data() {
                data.extend(std::iter::repeat_n(v, inner));
            }
        }
        self.graph.push(Tensor::new(shape.to_vec(), data), Op::BroadcastChannel(self.id))
    }

    /// Adds a per-channel bias `[c]` to `[b, c, ...]`.
    pub fn add_bias(&self, bias: Var<'g>) -> Var<'g> {
        *self + bias.broadcast_channel(&self.shape())
    }

    /// `[b, c, d, h, w] -> [b, c]`.
    pub fn sum_spatial(&self) -> Var<'g> {
        let t = self.value();
        let (outer, c, inner) = axis1_split(t.shape());
        let data = t.data().chunks(inner).map(|s| s.iter().sum()).collect();
        self.graph.push(Tensor::new(vec![outer, c], data), Op::SumSpatial(self.id))
    }

    /// `[b, c] -> [b, c, d, h, w]`.
    pub fn broadcast_spatial(&self, dims: [usize; 3]) -> Var<'g> {
        let t = self.value();
        assert_eq!(t.shape().len(), 2);
        let inner: usize = dims.iter().product();
        let data = t.data().iter().flat_map(|&v| std::iter::repeat_n(v, inner)).collect();
        let shape = vec![t.shape()[0], t.shape()[1], dims[0], dims[1], dims[2]];
        self.graph.push(Tensor::new(shape, data), Op::BroadcastSpatial(self.id))
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&self, other: Var<'g>) -> Var<'g> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape().len(), 2);
        assert_eq!(b.shape().len(), 2);
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        assert_eq!(b.shape()[0], k, "matmul inner dims {:?} x {:?}", a.shape(), b.shape());
        let mut c = vec![0.0; m * n];
        conv::gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut c);
        self.graph.push(Tensor::new(vec![m, n], c), Op::MatMul(self.id, other.id))
    }

    pub fn transpose(&self) -> Var<'g> {
        let t = self.value();
        assert_eq!(t.shape().len(), 2);
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.data()[i * n + j];
            }
        }
        self.graph.push(Tensor::new(vec![n, m], out), Op::Transpose(self.id))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'g> {
        let t = (*self.value()).clone().reshape(shape);
        self.graph.push(t, Op::Reshape(self.id))
    }

    /// Concatenate along axis 1.
    pub fn concat_channels(&self, other: Var<'g>) -> Var<'g> {
        let (a, b) = (self.value(), other.value());
        let (outer, ca, inner) = axis1_split(a.shape());
        let (outer_b, cb, inner_b) = axis1_split(b.shape());
        assert_eq!((outer, inner), (outer_b, inner_b), "concat {:?} with {:?}", a.shape(), b.shape());
        let mut data = Vec::with_capacity(outer * (ca + cb) * inner);
        for o in 0..outer {
            data.extend_from_slice(&a.data()[o * ca * inner..(o + 1) * ca * inner]);
            data.extend_from_slice(&b.data()[o * cb * inner..(o + 1) * cb * inner]);
        }
        let mut shape = a.shape().to_vec();
        shape[1] = ca + cb;
        self.graph.push(Tensor::new(shape, data), Op::Concat(self.id, other.id))
    }

    /// Channels `start..start + len` along axis 1.
    pub fn slice_channels(&self, start: usize, len: usize) -> Var<'g> {
        let t = self.value();
        let (outer, c, inner) = axis1_split(t.shape());
        assert!(start + len <= c);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let s = (o * c + start) * inner;
            data.extend_from_slice(&t.data()[s..s + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[1] = len;
        self.graph.push(Tensor::new(shape, data), Op::Slice { src: self.id, start })
    }

    /// Zero-pads axis 1 to `total` channels, placing `self` at `start`.
    pub fn pad_channels(&self, start: usize, total: usize) -> Var<'g> {
        let t = self.value();
        let (outer, c, inner) = axis1_split(t.shape());
        assert!(start + c <= total);
        let mut data = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let d = (o * total + start) * inner;
            data[d..d + c * inner].copy_from_slice(&t.data()[o * c * inner..(o + 1) * c * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[1] = total;
        self.graph.push(Tensor::new(shape, data), Op::Pad { src: self.id, start })
    }

    /// 3D convolution of `self [b, cin, d, h, w]` with `w [cout, cin, k, k, k]`.
    pub fn conv3d(&self, w: Var<'g>, geo: ConvGeometry) -> Var<'g> {
        let xs = self.shape();
        let ws = w.shape();
        assert_eq!(ws.len(), 5, "conv weight must be [cout, cin, k, k, k]");
        assert_eq!(xs[1], ws[1], "conv channel mismatch: input {xs:?}, weight {ws:?}");
        assert_eq!(ws[2], geo.kernel);
        let dims = dims3(&xs);
        let out = geo.output_dims(dims).expect("kernel larger than padded input");
        let cs = ConvShape {
            batch: xs[0],
            cin: xs[1],
            cout: ws[0],
            dims,
            out,
            geo,
        };
        self.graph.conv_raw(*self, w, cs)
    }

    /// Transposed convolution: the adjoint of [`Var::conv3d`] whose forward
    /// maps `out_dims` to the spatial size of `self`. `w` is `[cin_self, cout, k, k, k]`.
    pub fn conv_transpose3d(&self, w: Var<'g>, geo: ConvGeometry, out_dims: [usize; 3]) -> Var<'g> {
        let xs = self.shape();
        let ws = w.shape();
        assert_eq!(ws.len(), 5);
        assert_eq!(xs[1], ws[0], "deconv channel mismatch: input {xs:?}, weight {ws:?}");
        assert_eq!(
            geo.output_dims(out_dims).as_ref(),
            Some(&dims3(&xs)),
            "deconv output dims {out_dims:?} inconsistent with input {xs:?}"
        );
        let cs = ConvShape {
            batch: xs[0],
            cin: ws[1],
            cout: ws[0],
            dims: out_dims,
            out: dims3(&xs),
            geo,
        };
        self.graph.conv_t_raw(*self, w, cs)
    }
}

impl<'g> std::ops::Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Add(self.id, rhs.id), |a, b| a + b)
    }
}

impl<'g> std::ops::Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Sub(self.id, rhs.id), |a, b| a - b)
    }
}

impl<'g> std::ops::Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Mul(self.id, rhs.id), |a, b| a * b)
    }
}

impl<'g> std::ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}
