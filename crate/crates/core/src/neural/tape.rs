//! Reverse-mode differentiation over a recorded tape.
//!
//! Only the operations the estimator network needs are supported. Tensors are
//! dense, row-major `f64` with the batch as the leading dimension.

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape {shape:?} vs {} values", data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// 3×3 kernel, stride 1, zero padding 1. Keeps the im2col buffer of
    /// every batch item for the backward pass.
    Conv3x3 { input: Var, weight: Var, bias: Var, cols: Vec<f64> },
    Silu { input: Var },
    /// 2×2 average pooling, ceil mode: edge windows average the cells that
    /// exist.
    AvgPool2 { input: Var },
    Flatten { input: Var },
    /// `y = x Wᵀ + b`.
    Linear { input: Var, weight: Var, bias: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients by node, as returned by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

/// `C (m×n) (+)= A (m×k) · B (k×n)` where either operand may be read
/// transposed from its row-major storage.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the strides can reach.
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
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn im2col(x: &[f64], c_in: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for c in 0..c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * hw;
                for i in 0..h {
                    let si = i as isize + ky as isize - 1;
                    for j in 0..w {
                        let sj = j as isize + kx as isize - 1;
                        cols[row + i * w + j] = if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                            x[(c * h + si as usize) * w + sj as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], c_in: usize, h: usize, w: usize, dx: &mut [f64]) {
    let hw = h * w;
    for c in 0..c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * hw;
                for i in 0..h {
                    let si = i as isize + ky as isize - 1;
                    if si < 0 || si as usize >= h {
                        continue;
                    }
                    for j in 0..w {
                        let sj = j as isize + kx as isize - 1;
                        if sj >= 0 && (sj as usize) < w {
                            dx[(c * h + si as usize) * w + sj as usize] += cols[row + i * w + j];
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// `x: [B, Cin, H, W]`, `weight: [Cout, Cin, 3, 3]`, `bias: [Cout]`.
    pub fn conv3x3(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let x = self.value(input);
        let (b, c_in, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let wt = self.value(weight);
        let c_out = wt.dim(0);
        assert_eq!(wt.shape, vec![c_out, c_in, 3, 3]);
        let bs = &self.value(bias).data;
        let (hw, k) = (h * w, c_in * 9);
        let mut cols = vec![0.0; b * k * hw];
        let mut out = vec![0.0; b * c_out * hw];
        for n in 0..b {
            let col = &mut cols[n * k * hw..(n + 1) * k * hw];
            im2col(&x.data[n * c_in * hw..(n + 1) * c_in * hw], c_in, h, w, col);
            let y = &mut out[n * c_out * hw..(n + 1) * c_out * hw];
            for (o, row) in y.chunks_mut(hw).enumerate() {
                row.fill(bs[o]);
            }
            gemm(c_out, k, hw, &wt.data, false, col, false, y, true);
        }
        self.push(Tensor::new(vec![b, c_out, h, w], out), Op::Conv3x3 { input, weight, bias, cols })
    }

    /// `x · logistic(x)`.
    pub fn silu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data.iter().map(|&v| v * logistic(v)).collect();
        let shape = x.shape.clone();
        self.push(Tensor::new(shape, data), Op::Silu { input })
    }

    pub fn avg_pool2(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
        let mut out = vec![0.0; b * c * ho * wo];
        for plane in 0..b * c {
            let src = &x.data[plane * h * w..(plane + 1) * h * w];
            for i in 0..ho {
                for j in 0..wo {
                    let (i1, j1) = ((2 * i + 2).min(h), (2 * j + 2).min(w));
                    let mut acc = 0.0;
                    for si in 2 * i..i1 {
                        for sj in 2 * j..j1 {
                            acc += src[si * w + sj];
                        }
                    }
                    out[(plane * ho + i) * wo + j] = acc / ((i1 - 2 * i) * (j1 - 2 * j)) as f64;
                }
            }
        }
        self.push(Tensor::new(vec![b, c, ho, wo], out), Op::AvgPool2 { input })
    }

    /// `[B, ...] → [B, prod(...)]`.
    pub fn flatten(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let b = x.dim(0);
        let value = Tensor::new(vec![b, x.len() / b.max(1)], x.data.clone());
        self.push(value, Op::Flatten { input })
    }

    /// `x: [B, in]`, `weight: [out, in]`, `bias: [out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let x = self.value(input);
        let wt = self.value(weight);
        let (b, n_in, n_out) = (x.dim(0), x.dim(1), wt.dim(0));
        assert_eq!(wt.shape, vec![n_out, n_in]);
        let bs = &self.value(bias).data;
        let mut out = Vec::with_capacity(b * n_out);
        for _ in 0..b {
            out.extend_from_slice(bs);
        }
        gemm(b, n_in, n_out, &x.data, false, &wt.data, true, &mut out, true);
        self.push(Tensor::new(vec![b, n_out], out), Op::Linear { input, weight, bias })
    }

    /// Propagates `seed = ∂L/∂output` back through the tape.
    pub fn backward(&self, output: Var, seed: Tensor) -> Grads {
        assert_eq!(seed.shape, self.value(output).shape);
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        let accumulate = |grads: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        };
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv3x3 { input, weight, bias, cols } => {
                    let x = self.value(*input);
                    let wt = self.value(*weight);
                    let (b, c_in, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
                    let c_out = wt.dim(0);
                    let (hw, k) = (h * w, c_in * 9);
                    let mut dw = Tensor::zeros(wt.shape.clone());
                    let mut db = Tensor::zeros(vec![c_out]);
                    let mut dx = Tensor::zeros(x.shape.clone());
                    let mut dcol = vec![0.0; k * hw];
                    for n in 0..b {
                        let dy = &g.data[n * c_out * hw..(n + 1) * c_out * hw];
                        let col = &cols[n * k * hw..(n + 1) * k * hw];
                        gemm(c_out, hw, k, dy, false, col, true, &mut dw.data, true);
                        for (o, row) in dy.chunks(hw).enumerate() {
                            db.data[o] += row.iter().sum::<f64>();
                        }
                        gemm(k, c_out, hw, &wt.data, true, dy, false, &mut dcol, false);
                        col2im_add(&dcol, c_in, h, w, &mut dx.data[n * c_in * hw..(n + 1) * c_in * hw]);
                    }
                    accumulate(&mut grads, *weight, dw);
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *input, dx);
                }
                Op::Silu { input } => {
                    let x = self.value(*input);
                    let data = x
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&v, &gy)| {
                            let s = logistic(v);
                            gy * s * (1.0 + v * (1.0 - s))
                        })
                        .collect();
                    accumulate(&mut grads, *input, Tensor::new(x.shape.clone(), data));
                }
                Op::AvgPool2 { input } => {
                    let x = self.value(*input);
                    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
                    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
                    let mut dx = Tensor::zeros(x.shape.clone());
                    for plane in 0..b * c {
                        for i in 0..ho {
                            for j in 0..wo {
                                let (i1, j1) = ((2 * i + 2).min(h), (2 * j + 2).min(w));
                                let share = g.data[(plane * ho + i) * wo + j] / ((i1 - 2 * i) * (j1 - 2 * j)) as f64;
                                for si in 2 * i..i1 {
                                    for sj in 2 * j..j1 {
                                        dx.data[(plane * h + si) * w + sj] += share;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::Flatten { input } => {
                    let shape = self.value(*input).shape.clone();
                    accumulate(&mut grads, *input, Tensor::new(shape, g.data));
                }
                Op::Linear { input, weight, bias } => {
                    let x = self.value(*input);
                    let wt = self.value(*weight);
                    let (b, n_in, n_out) = (x.dim(0), x.dim(1), wt.dim(0));
                    let mut dw = Tensor::zeros(wt.shape.clone());
                    gemm(n_out, b, n_in, &g.data, true, &x.data, false, &mut dw.data, false);
                    let mut db = Tensor::zeros(vec![n_out]);
                    for row in g.data.chunks(n_out) {
                        for (acc, v) in db.data.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    let mut dx = Tensor::zeros(x.shape.clone());
                    gemm(b, n_out, n_in, &g.data, false, &wt.data, false, &mut dx.data, false);
                    accumulate(&mut grads, *weight, dw);
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *input, dx);
                }
            }
        }
        Grads(grads)
    }
}
