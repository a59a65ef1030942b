//! Minimal reverse-mode differentiation tape.
//!
//! A `Tape` records a DAG of tensor operations during a forward pass; nodes are
//! appended in topological order, so `backward` is a single reverse sweep over
//! node ids. One tape per forward/backward pass, single-threaded within a pass.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::tensor::Tensor;

type Vjp<R> = Box<dyn Fn(&Tensor<R>) -> Tensor<R>>;

struct Node<R: Real> {
    value: Tensor<R>,
    requires_grad: bool,
    /// (parent id, vector-Jacobian product). `None` when the parent does not
    /// require a gradient.
    parents: Vec<(usize, Option<Vjp<R>>)>,
}

pub struct Tape<R: Real> {
    nodes: Rc<RefCell<Vec<Node<R>>>>,
}

impl<R: Real> Clone for Tape<R> {
    fn clone(&self) -> Self {
        Tape {
            nodes: Rc::clone(&self.nodes),
        }
    }
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<R>, parents: Vec<(usize, Option<Vjp<R>>)>) -> Var<R> {
        let requires_grad = parents.iter().any(|(_, v)| v.is_some());
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            parents,
        });
        Var {
            tape: self.clone(),
            id,
        }
    }

    pub fn leaf(&self, value: Tensor<R>, requires_grad: bool) -> Var<R> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            parents: Vec::new(),
        });
        Var {
            tape: self.clone(),
            id,
        }
    }

    pub fn constant(&self, value: Tensor<R>) -> Var<R> {
        self.leaf(value, false)
    }
}

#[derive(Clone)]
pub struct Var<R: Real> {
    tape: Tape<R>,
    id: usize,
}

impl<R: Real> Var<R> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &Tape<R> {
        &self.tape
    }

    pub fn value(&self) -> Tensor<R> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn needs(&self) -> bool {
        self.requires_grad()
    }

    fn unary(&self, value: Tensor<R>, vjp: impl Fn(&Tensor<R>) -> Tensor<R> + 'static) -> Var<R> {
        let parents = if self.needs() {
            vec![(self.id, Some(Box::new(vjp) as Vjp<R>))]
        } else {
            vec![(self.id, None)]
        };
        self.tape.push(value, parents)
    }

    pub fn add(&self, other: &Var<R>) -> Result<Var<R>> {
        let (a, b) = (self.value(), other.value());
        let out = a.add(&b)?;
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        parents.push((
            self.id,
            self.needs()
                .then(|| Box::new(move |g: &Tensor<R>| g.reduce_to(&sa)) as Vjp<R>),
        ));
        parents.push((
            other.id,
            other
                .needs()
                .then(|| Box::new(move |g: &Tensor<R>| g.reduce_to(&sb)) as Vjp<R>),
        ));
        Ok(self.tape.push(out, parents))
    }

    pub fn sub(&self, other: &Var<R>) -> Result<Var<R>> {
        let (a, b) = (self.value(), other.value());
        let out = a.sub(&b)?;
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        parents.push((
            self.id,
            self.needs()
                .then(|| Box::new(move |g: &Tensor<R>| g.reduce_to(&sa)) as Vjp<R>),
        ));
        parents.push((
            other.id,
            other
                .needs()
                .then(|| Box::new(move |g: &Tensor<R>| g.neg().reduce_to(&sb)) as Vjp<R>),
        ));
        Ok(self.tape.push(out, parents))
    }

    pub fn mul(&self, other: &Var<R>) -> Result<Var<R>> {
        let (a, b) = (self.value(), other.value());
        let out = a.mul(&b)?;
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        let (ac, bc) = (a.clone(), b.clone());
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        parents.push((
            self.id,
            self.needs()
                .then(|| Box::new(move |g: &Tensor<R>| g.mul(&bc).unwrap().reduce_to(&sa)) as Vjp<R>),
        ));
        parents.push((
            other.id,
            other
                .needs()
                .then(|| Box::new(move |g: &Tensor<R>| g.mul(&ac).unwrap().reduce_to(&sb)) as Vjp<R>),
        ));
        Ok(self.tape.push(out, parents))
    }

    pub fn scale(&self, c: R) -> Var<R> {
        let out = self.value().scale(c);
        self.unary(out, move |g| g.scale(c))
    }

    pub fn neg(&self) -> Var<R> {
        self.scale(-R::one())
    }

    pub fn add_const_scalar(&self, c: R) -> Var<R> {
        let out = self.value().map(|x| x + c);
        self.unary(out, |g| g.clone())
    }

    pub fn matmul(&self, other: &Var<R>) -> Result<Var<R>> {
        let (a, b) = (self.value(), other.value());
        let out = a.matmul(&b)?;
        let (ac, bc) = (a.clone(), b.clone());
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        parents.push((
            self.id,
            self.needs().then(|| {
                Box::new(move |g: &Tensor<R>| g.matmul(&bc.transpose().unwrap()).unwrap()) as Vjp<R>
            }),
        ));
        parents.push((
            other.id,
            other.needs().then(|| {
                Box::new(move |g: &Tensor<R>| ac.transpose().unwrap().matmul(g).unwrap()) as Vjp<R>
            }),
        ));
        Ok(self.tape.push(out, parents))
    }

    pub fn transpose(&self) -> Result<Var<R>> {
        let out = self.value().transpose()?;
        Ok(self.unary(out, |g| g.transpose().unwrap()))
    }

    pub fn abs(&self) -> Var<R> {
        let a = self.value();
        let sign = a.signum0();
        self.unary(a.abs(), move |g| g.mul(&sign).unwrap())
    }

    /// Elementwise sign as a constant: the derivative is zero almost
    /// everywhere, so the result does not require a gradient.
    pub fn sign(&self) -> Var<R> {
        self.tape.constant(self.value().signum0())
    }

    pub fn relu(&self) -> Var<R> {
        let a = self.value();
        let mask = a.map(|x| if x > R::zero() { R::one() } else { R::zero() });
        self.unary(a.relu(), move |g| g.mul(&mask).unwrap())
    }

    pub fn exp(&self) -> Var<R> {
        let y = self.value().exp();
        let yc = y.clone();
        self.unary(y, move |g| g.mul(&yc).unwrap())
    }

    pub fn ln(&self) -> Var<R> {
        let a = self.value();
        let inv = a.map(|x| R::one() / x);
        self.unary(a.ln(), move |g| g.mul(&inv).unwrap())
    }

    pub fn sin(&self) -> Var<R> {
        let a = self.value();
        let c = a.cos();
        self.unary(a.sin(), move |g| g.mul(&c).unwrap())
    }

    pub fn cos(&self) -> Var<R> {
        let a = self.value();
        let s = a.sin().neg();
        self.unary(a.cos(), move |g| g.mul(&s).unwrap())
    }

    pub fn sigmoid(&self) -> Var<R> {
        let y = self.value().sigmoid();
        let yc = y.clone();
        self.unary(y, move |g| {
            g.mul(&yc.mul(&yc.map(|v| R::one() - v)).unwrap()).unwrap()
        })
    }

    /// |x|^p for constant integer p >= 1.
    pub fn powi_abs(&self, p: i32) -> Var<R> {
        let a = self.value();
        let y = a.powi_abs(p);
        let deriv = a.map(|x| {
            let s = if x > R::zero() {
                R::one()
            } else if x < R::zero() {
                -R::one()
            } else {
                R::zero()
            };
            real::<R>(p as f64) * x.abs().powi(p - 1) * s
        });
        self.unary(y, move |g| g.mul(&deriv).unwrap())
    }

    pub fn softmax_rows(&self) -> Var<R> {
        let y = self.value().softmax_rows();
        let yc = y.clone();
        self.unary(y, move |g| {
            // dx = y * (g - rowsum(g * y))
            let (m, n) = (yc.rows(), yc.cols());
            let mut out = vec![R::zero(); m * n];
            for i in 0..m {
                let mut rs = R::zero();
                for j in 0..n {
                    rs = rs + g.data()[i * n + j] * yc.data()[i * n + j];
                }
                for j in 0..n {
                    out[i * n + j] = yc.data()[i * n + j] * (g.data()[i * n + j] - rs);
                }
            }
            Tensor::new(vec![m, n], out).unwrap()
        })
    }

    pub fn layer_norm(&self, gamma: &Var<R>, beta: &Var<R>, eps: R) -> Result<Var<R>> {
        let x = self.value();
        let gv = gamma.value();
        let bv = beta.value();
        let y = x.layer_norm(&gv, &bv, eps)?;
        let (m, n) = (x.rows(), x.cols());
        let nr = real::<R>(n as f64);
        // Cache xhat and 1/sigma per row.
        let mut xhat = vec![R::zero(); m * n];
        let mut inv_sigma = vec![R::zero(); m];
        for i in 0..m {
            let row = &x.data()[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<R>() / nr;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() / nr;
            let inv = R::one() / (var + eps).sqrt();
            inv_sigma[i] = inv;
            for j in 0..n {
                xhat[i * n + j] = (row[j] - mean) * inv;
            }
        }
        let xhat = Tensor::new(vec![m, n], xhat).unwrap();
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        {
            let xhat = xhat.clone();
            let gv = gv.clone();
            let inv_sigma = inv_sigma.clone();
            parents.push((
                self.id,
                self.needs().then(|| {
                    Box::new(move |g: &Tensor<R>| {
                        let mut out = vec![R::zero(); m * n];
                        for i in 0..m {
                            let mut mean_dxhat = R::zero();
                            let mut mean_dxhat_xhat = R::zero();
                            for j in 0..n {
                                let d = g.data()[i * n + j] * gv.data()[j];
                                mean_dxhat = mean_dxhat + d;
                                mean_dxhat_xhat = mean_dxhat_xhat + d * xhat.data()[i * n + j];
                            }
                            mean_dxhat = mean_dxhat / nr;
                            mean_dxhat_xhat = mean_dxhat_xhat / nr;
                            for j in 0..n {
                                let d = g.data()[i * n + j] * gv.data()[j];
                                out[i * n + j] = (d
                                    - mean_dxhat
                                    - xhat.data()[i * n + j] * mean_dxhat_xhat)
                                    * inv_sigma[i];
                            }
                        }
                        Tensor::new(vec![m, n], out).unwrap()
                    }) as Vjp<R>
                }),
            ));
        }
        {
            let xhat = xhat.clone();
            let gshape = gamma.shape();
            parents.push((
                gamma.id,
                gamma.needs().then(|| {
                    Box::new(move |g: &Tensor<R>| {
                        g.mul(&xhat).unwrap().col_sum().reshape(gshape.clone()).unwrap()
                    }) as Vjp<R>
                }),
            ));
        }
        {
            let bshape = beta.shape();
            parents.push((
                beta.id,
                beta.needs().then(|| {
                    Box::new(move |g: &Tensor<R>| g.col_sum().reshape(bshape.clone()).unwrap())
                        as Vjp<R>
                }),
            ));
        }
        Ok(self.tape.push(y, parents))
    }

    /// Per-channel max over windows of `stride` rows; gradient routes only to
    /// the argmax positions (ties to lowest index).
    pub fn max_pool_stride(&self, stride: usize) -> Result<Var<R>> {
        let x = self.value();
        let (y, arg) = x.max_pool_stride(stride)?;
        let n_rows = x.rows();
        let n = x.cols();
        Ok(self.unary(y, move |g| {
            let mut out = vec![R::zero(); n_rows * n];
            for (k, &src) in arg.iter().enumerate() {
                let j = k % n;
                out[src * n + j] = out[src * n + j] + g.data()[k];
            }
            Tensor::new(vec![n_rows, n], out).unwrap()
        }))
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<R>> {
        let x = self.value();
        let y = x.gather_rows(idx)?;
        let n_rows = x.rows();
        let idx = idx.to_vec();
        Ok(self.unary(y, move |g| g.scatter_add_rows(&idx, n_rows)))
    }

    /// Fixed linear combination of rows: output row i is
    /// `sum_j weights[i*k+j] * x[idx[i*k+j]]`. Used for inverse-distance
    /// upsampling, where the weights depend only on coordinates.
    pub fn weighted_gather_rows(&self, idx: &[usize], weights: &[R], k: usize) -> Result<Var<R>> {
        if idx.len() != weights.len() || idx.len() % k != 0 {
            return Err(Error::Shape(
                "weighted_gather_rows: index/weight layout mismatch".into(),
            ));
        }
        let x = self.value();
        let (src_rows, c) = (x.rows(), x.cols());
        let n = idx.len() / k;
        let mut out = vec![R::zero(); n * c];
        for i in 0..n {
            for j in 0..k {
                let src = idx[i * k + j];
                if src >= src_rows {
                    return Err(Error::Shape("weighted_gather_rows: index out of range".into()));
                }
                let w = weights[i * k + j];
                for ch in 0..c {
                    out[i * c + ch] = out[i * c + ch] + w * x.data()[src * c + ch];
                }
            }
        }
        let out = Tensor::new(vec![n, c], out)?;
        let idx = idx.to_vec();
        let weights = weights.to_vec();
        Ok(self.unary(out, move |g| {
            let mut back = vec![R::zero(); src_rows * c];
            for i in 0..n {
                for j in 0..k {
                    let src = idx[i * k + j];
                    let w = weights[i * k + j];
                    for ch in 0..c {
                        back[src * c + ch] = back[src * c + ch] + w * g.data()[i * c + ch];
                    }
                }
            }
            Tensor::new(vec![src_rows, c], back).unwrap()
        }))
    }

    pub fn repeat_rows_interleave(&self, k: usize) -> Var<R> {
        let y = self.value().repeat_rows_interleave(k);
        self.unary(y, move |g| g.sum_row_groups(k))
    }

    /// y = x / sqrt(sum_row(x^2) + eps), per row.
    pub fn row_l2_normalize(&self, eps: R) -> Var<R> {
        let x = self.value();
        let y = x.row_l2_normalize(eps);
        let xc = x.clone();
        let (m, n) = (x.rows(), x.cols());
        self.unary(y, move |g| {
            let mut out = vec![R::zero(); m * n];
            for i in 0..m {
                let row = &xc.data()[i * n..(i + 1) * n];
                let grow = &g.data()[i * n..(i + 1) * n];
                let s: R = row.iter().map(|&v| v * v).sum();
                let r = (s + eps).sqrt();
                let r3 = r * r * r;
                let dot: R = row.iter().zip(grow.iter()).map(|(&a, &b)| a * b).sum();
                for j in 0..n {
                    out[i * n + j] = grow[j] / r - row[j] * dot / r3;
                }
            }
            Tensor::new(vec![m, n], out).unwrap()
        })
    }

    pub fn sum(&self) -> Var<R> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let y = Tensor::scalar(x.sum());
        self.unary(y, move |g| Tensor::full(&shape, g.data()[0]))
    }

    /// Mean cross-entropy of row-wise logits against integer labels.
    pub fn cross_entropy_mean(&self, labels: &[usize]) -> Result<Var<R>> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        if labels.len() != m {
            return Err(Error::Shape(format!(
                "cross_entropy_mean: {m} rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::Data(format!(
                "cross_entropy_mean: label {bad} out of range for {n} classes"
            )));
        }
        let soft = x.softmax_rows();
        let mut loss = R::zero();
        for (i, &l) in labels.iter().enumerate() {
            loss = loss - soft.at(i, l).ln();
        }
        let mr = real::<R>(m as f64);
        loss = loss / mr;
        let labels = labels.to_vec();
        Ok(self.unary(Tensor::scalar(loss), move |g| {
            let gs = g.data()[0];
            let mut out = soft.scale(gs / mr);
            for (i, &l) in labels.iter().enumerate() {
                let v = out.at(i, l);
                out.set(i, l, v - gs / mr);
            }
            out
        }))
    }

    pub fn concat_rows(parts: &[Var<R>]) -> Result<Var<R>> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_rows: no inputs".into()));
        }
        let tape = parts[0].tape.clone();
        let values: Vec<Tensor<R>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<R>> = values.iter().collect();
        let out = Tensor::concat_rows(&refs)?;
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        let mut offset = 0usize;
        for (p, v) in parts.iter().zip(values.iter()) {
            let rows = v.rows();
            let cols = v.cols();
            let start = offset;
            parents.push((
                p.id,
                p.needs().then(|| {
                    Box::new(move |g: &Tensor<R>| {
                        let idx: Vec<usize> = (start..start + rows).collect();
                        g.gather_rows(&idx).unwrap().reshape(vec![rows, cols]).unwrap()
                    }) as Vjp<R>
                }),
            ));
            offset += rows;
        }
        Ok(tape.push(out, parents))
    }

    pub fn concat_cols(parts: &[Var<R>]) -> Result<Var<R>> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols: no inputs".into()));
        }
        let tape = parts[0].tape.clone();
        let values: Vec<Tensor<R>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<R>> = values.iter().collect();
        let out = Tensor::concat_cols(&refs)?;
        let total_cols = out.cols();
        let m = out.rows();
        let mut parents: Vec<(usize, Option<Vjp<R>>)> = Vec::new();
        let mut offset = 0usize;
        for (p, v) in parts.iter().zip(values.iter()) {
            let cols = v.cols();
            let start = offset;
            parents.push((
                p.id,
                p.needs().then(|| {
                    Box::new(move |g: &Tensor<R>| {
                        let mut out = vec![R::zero(); m * cols];
                        for i in 0..m {
                            for j in 0..cols {
                                out[i * cols + j] = g.data()[i * total_cols + start + j];
                            }
                        }
                        Tensor::new(vec![m, cols], out).unwrap()
                    }) as Vjp<R>
                }),
            ));
            offset += cols;
        }
        Ok(tape.push(out, parents))
    }
}

pub struct Gradients<R: Real> {
    grads: Vec<Option<Tensor<R>>>,
}

impl<R: Real> Gradients<R> {
    /// Gradient of the loss w.r.t. `var`; zeros when the variable lies on no
    /// path to the loss.
    pub fn get(&self, var: &Var<R>) -> Tensor<R> {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&var.shape()),
        }
    }
}

/// Reverse sweep from a scalar loss node. Nodes are id-ordered topologically by
/// construction, so a single reverse pass accumulates all gradients.
pub fn backward<R: Real>(loss: &Var<R>) -> Result<Gradients<R>> {
    let nodes = loss.tape.nodes.borrow();
    let lv = &nodes[loss.id].value;
    if !lv.is_scalar() {
        return Err(Error::Shape(format!(
            "backward requires a scalar loss, got shape {:?}",
            lv.shape()
        )));
    }
    let mut grads: Vec<Option<Tensor<R>>> = vec![None; nodes.len()];
    grads[loss.id] = Some(Tensor::full(lv.shape(), R::one()));
    for id in (0..=loss.id).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &nodes[id];
        for (pid, vjp) in &node.parents {
            if let Some(vjp) = vjp {
                let contrib = vjp(&g);
                grads[*pid] = Some(match grads[*pid].take() {
                    Some(acc) => acc.add(&contrib)?,
                    None => contrib,
                });
            }
        }
        grads[id] = Some(g);
    }
    Ok(Gradients { grads })
}
