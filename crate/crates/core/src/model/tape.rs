//! Reverse-mode automatic differentiation over row-major matrices.
//!
//! A [`Tape`] records one forward pass. Parameters live in a [`ParamStore`]
//! and are borrowed rather than copied onto the tape; [`Tape::backward`]
//! returns their gradients as [`Grads`].

use ndarray::{concatenate, s, Array1, Array2, Axis, Zip};

pub type ParamId = usize;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }
}

/// Per-parameter gradients; `None` for parameters the graph never touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Option<Array2<f64>>>);

impl Grads {
    pub fn empty(n: usize) -> Self {
        Grads(vec![None; n])
    }

    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            if let Some(b) = b {
                match a {
                    Some(a) => *a += b,
                    None => *a = Some(b.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.0.iter_mut().flatten() {
            g.mapv_inplace(|v| v * c);
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.0[id].as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    Softmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Unfold(Var, usize),
    MeanRows(Var, Vec<bool>),
    Mul(Var, Array2<f64>),
    CrossEntropy(Var, usize, Array2<f64>),
    SquaredError(Var, f64),
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
    scope: usize,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-5;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    scopes: Vec<String>,
    scope: usize,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            scopes: vec!["input".to_string()],
            scope: 0,
        }
    }

    /// Names the layer that subsequent nodes belong to, for diagnostics.
    pub fn set_scope(&mut self, name: &str) {
        self.scopes.push(name.to_string());
        self.scope = self.scopes.len() - 1;
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            scope: self.scope,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(p) => self.store.get(p),
            _ => n.value.as_ref().expect("non-parameter nodes hold values"),
        }
    }

    /// Scope of the first node holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        (0..self.nodes.len())
            .find(|&i| self.value(Var(i)).iter().any(|v| !v.is_finite()))
            .map(|i| self.scopes[self.nodes[i].scope].as_str())
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            scope: self.scope,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a 1×n row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddBias(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise layer normalization with learned 1×n scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let centered = xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|c| c * c).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * inv_std.view().insert_axis(Axis(1));
        let y = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Row-wise softmax; columns with `mask[j] == false` get probability 0.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let keep = |j: usize| mask.is_none_or(|m| m[j]);
            let max = row
                .iter()
                .enumerate()
                .filter(|(j, _)| keep(*j))
                .map(|(_, &x)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, x) in row.iter_mut().enumerate() {
                *x = if keep(j) { (*x - max).exp() } else { 0.0 };
                sum += *x;
            }
            if sum > 0.0 {
                row.mapv_inplace(|x| x / sum);
            }
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Sliding windows for a same-padded 1-D convolution: row `t` of the
    /// T×(kD) result is `[x[t-h], ..., x[t+h]]` with `h = k/2` and zeros
    /// outside the sequence.
    pub fn unfold(&mut self, a: Var, k: usize) -> Var {
        let x = self.value(a);
        let (t_len, d) = x.dim();
        let h = k / 2;
        let mut out = Array2::zeros((t_len, k * d));
        for t in 0..t_len {
            for j in 0..k {
                let src = t + j;
                if src >= h && src - h < t_len {
                    out.slice_mut(s![t, j * d..(j + 1) * d]).assign(&x.row(src - h));
                }
            }
        }
        self.push(out, Op::Unfold(a, k))
    }

    /// Mean over the rows selected by `mask`, as a 1×n row.
    pub fn mean_rows(&mut self, a: Var, mask: &[bool]) -> Var {
        let x = self.value(a);
        let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
        let mut acc = Array1::zeros(x.ncols());
        for (row, &m) in x.rows().into_iter().zip(mask) {
            if m {
                acc += &row;
            }
        }
        let v = (acc / n).insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a, mask.to_vec()))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::Mul(a, c))
    }

    /// Softmax cross-entropy of 1×C logits against class `target`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let z = self.value(logits);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = z.mapv(|v| (v - max).exp());
        let sum = e.sum();
        let p = e / sum;
        let loss = -(p[[0, target]].ln());
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy(logits, target, p),
        )
    }

    pub fn squared_error(&mut self, pred: Var, target: f64) -> Var {
        let d = self.value(pred)[[0, 0]] - target;
        self.push(Array2::from_elem((1, 1), d * d), Op::SquaredError(pred, target))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Array2<f64>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        let mut out = Grads::empty(self.store.len());
        grads[loss.0] = Some(Array2::ones(self.value(loss).raw_dim()));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>) {
            match &mut grads[v.0] {
                Some(g) => *g += &d,
                slot => *slot = Some(d),
            }
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => match &mut out.0[*p] {
                    Some(t) => *t += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddBias(a, b) => {
                    acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::Gelu(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| *d *= gelu_grad(x));
                    acc(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.ncols() as f64;
                    acc(
                        &mut grads,
                        *gamma,
                        (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                    acc(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * self.value(*gamma);
                    let m1 = dxhat.sum_axis(Axis(1)) / n;
                    let m2 = (&dxhat * xhat).sum_axis(Axis(1)) / n;
                    let mut dx = dxhat;
                    for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
                        let xr = xhat.row(r);
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = inv_std[r] * (*v - m1[r] - xr[c] * m2[r]);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let dot = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let d = y * &(g - &dot);
                    acc(&mut grads, *a, d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        acc(&mut grads, p, g.slice(s![off..off + h, ..]).to_owned());
                        off += h;
                    }
                }
                Op::Unfold(a, k) => {
                    let (t_len, d) = self.value(*a).dim();
                    let h = k / 2;
                    let mut dx = Array2::zeros((t_len, d));
                    for t in 0..t_len {
                        for j in 0..*k {
                            let src = t + j;
                            if src >= h && src - h < t_len {
                                let mut row = dx.row_mut(src - h);
                                row += &g.slice(s![t, j * d..(j + 1) * d]);
                            }
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::MeanRows(a, mask) => {
                    let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    let gr = g.row(0).mapv(|v| v / n);
                    for (mut row, &m) in d.rows_mut().into_iter().zip(mask) {
                        if m {
                            row.assign(&gr);
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Mul(a, c) => acc(&mut grads, *a, g * c),
                Op::CrossEntropy(a, target, p) => {
                    let mut d = p.clone();
                    d[[0, *target]] -= 1.0;
                    acc(&mut grads, *a, d * g[[0, 0]]);
                }
                Op::SquaredError(a, target) => {
                    let diff = self.value(*a)[[0, 0]] - target;
                    acc(&mut grads, *a, Array2::from_elem((1, 1), 2.0 * diff * g[[0, 0]]));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Central differences over every parameter entry of a scalar function.
    fn check(store: &mut ParamStore, f: impl Fn(&mut Tape) -> Var) {
        let grads = {
            let mut t = Tape::new(store);
            let l = f(&mut t);
            t.backward(l)
        };
        let h = 1e-6;
        for p in 0..store.len() {
            for idx in 0..store.get(p).len() {
                let (r, c) = (idx / store.get(p).ncols(), idx % store.get(p).ncols());
                let orig = store.get(p)[[r, c]];
                let mut eval = |v: f64| {
                    store.get_mut(p)[[r, c]] = v;
                    let mut t = Tape::new(store);
                    let l = f(&mut t);
                    t.value(l)[[0, 0]]
                };
                let num = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                store.get_mut(p)[[r, c]] = orig;
                let ana = grads.get(p).map_or(0.0, |g| g[[r, c]]);
                let err = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-7);
                assert!(err < 1e-5, "{} [{r},{c}]: {ana} vs {num}", store.name(p));
            }
        }
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::default();
        let x = store.add("x", random(&mut rng, 4, 6));
        let w = store.add("w", random(&mut rng, 18, 5));
        let b = store.add("b", random(&mut rng, 1, 5));
        let g = store.add("g", random(&mut rng, 1, 5));
        let be = store.add("be", random(&mut rng, 1, 5));
        let k = store.add("k", random(&mut rng, 3, 5));
        let mask = [true, false, true];
        check(&mut store, |t| {
            let xv = t.param(x);
            let u = t.unfold(xv, 3);
            let wv = t.param(w);
            let h = t.matmul(u, wv);
            let bv = t.param(b);
            let h = t.add_bias(h, bv);
            let h = t.gelu(h);
            let (gv, bev) = (t.param(g), t.param(be));
            let h = t.layer_norm(h, gv, bev);
            let kv = t.param(k);
            let sc = t.matmul_nt(h, kv);
            let sc = t.scale(sc, 0.7);
            let p = t.softmax(sc, Some(&mask));
            let o = t.matmul(p, kv);
            let o2 = t.add(o, h);
            let a = t.slice_cols(o2, 1, 3);
            let bb = t.slice_cols(o2, 0, 2);
            let c = t.concat_cols(&[a, bb]);
            let extra = a_row(t, a);
            let c = t.concat_rows(&[c, extra]);
            let c = t.mul_const(c, Array2::from_elem((5, 5), 1.5));
            let m = t.mean_rows(c, &[true, true, false, true, true]);
            t.cross_entropy(m, 2)
        });
    }

    fn a_row(t: &mut Tape, a: Var) -> Var {
        let full = t.concat_cols(&[a, a]);
        let five = t.slice_cols(full, 0, 5);
        t.mean_rows(five, &[true, false, true, true])
    }

    #[test]
    fn squared_error_gradient() {
        let mut store = ParamStore::default();
        let p = store.add("p", array![[0.3], [0.9]]);
        check(&mut store, |t| {
            let v = t.param(p);
            let m = t.mean_rows(v, &[true, true]);
            t.squared_error(m, 2.0)
        });
    }

    #[test]
    fn masked_softmax_ignores_masked_columns() {
        let store = ParamStore::default();
        let mut t = Tape::new(&store);
        let a = t.leaf(array![[1.0, 100.0, 2.0]]);
        let p = t.softmax(a, Some(&[true, false, true]));
        let v = t.value(p).clone();
        assert_eq!(v[[0, 1]], 0.0);
        assert!((v[[0, 0]] + v[[0, 2]] - 1.0).abs() < 1e-12);
        let reduced = t.leaf(array![[1.0, 2.0]]);
        let q = t.softmax(reduced, None);
        assert!((t.value(q)[[0, 1]] - v[[0, 2]]).abs() < 1e-15);
    }

    #[test]
    fn non_finite_values_are_attributed_to_their_scope() {
        let store = ParamStore::default();
        let mut t = Tape::new(&store);
        let a = t.leaf(array![[1.0]]);
        t.set_scope("blowup");
        t.scale(a, f64::INFINITY);
        assert_eq!(t.first_non_finite(), Some("blowup"));
    }
}
