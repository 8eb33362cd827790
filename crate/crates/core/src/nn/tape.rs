//! Reverse-mode differentiation over 2-D arrays.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! read in place from a [`Params`] store, never copied; their gradients
//! are accumulated straight into a [`Grads`] buffer by [`Tape::backward`].

use ndarray::{s, Array2, Axis, Zip};

use super::{Params, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a + b` with `b` a single row broadcast down `a`.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    /// `out[dst] += w * src[s]` for each `(dst, s, w)`.
    Mix(Var, Vec<(usize, usize, T)>),
    /// Each row of `x` scaled by the matching entry of column `c`.
    MulCol(Var, Var),
    SegmentSoftmax(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    CosineRows(Var, Var),
    /// `sum_i max(0, margin - pos_i + neg_i)`.
    Hinge(Var, Var, T),
}

struct Node<T> {
    op: Op<T>,
    value: Option<Array2<T>>,
}

/// Per-parameter gradients, `None` where a parameter was not used.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub tensors: Vec<Option<Array2<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, id: usize) -> Option<&Array2<T>> {
        self.tensors[id].as_ref()
    }
}

pub struct Tape<'p, T: Real> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    fn push(&mut self, op: Op<T>, value: Array2<T>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params.tensors[*i],
            (_, Some(x)) => x,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn param(&mut self, id: usize) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id] = Some(v);
        v
    }

    pub fn constant(&mut self, x: Array2<T>) -> Var {
        self.push(Op::Leaf, x)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), y)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let y = self.value(a) + self.value(row);
        self.push(Op::AddRow(a, row), y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), y)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(T::tanh);
        self.push(Op::Tanh(a), y)
    }

    /// Sparse row mixing into a `rows_out`-row result; covers gathers,
    /// row selection, neighbour sums, segment sums and means.
    pub fn mix(&mut self, src: Var, rows_out: usize, triples: Vec<(usize, usize, T)>) -> Var {
        let x = self.value(src);
        let mut y = Array2::zeros((rows_out, x.ncols()));
        for &(d, s, w) in &triples {
            y.row_mut(d).scaled_add(w, &x.row(s));
        }
        self.push(Op::Mix(src, triples), y)
    }

    pub fn mul_col(&mut self, x: Var, c: Var) -> Var {
        debug_assert_eq!(self.value(c).ncols(), 1);
        let y = self.value(x) * self.value(c);
        self.push(Op::MulCol(x, c), y)
    }

    /// Softmax of a column within each segment (`seg[i]` is row i's
    /// segment; rows of one segment need not be contiguous).
    pub fn segment_softmax(&mut self, x: Var, seg: Vec<usize>) -> Var {
        let v = self.value(x);
        debug_assert_eq!(v.ncols(), 1);
        let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![T::neg_infinity(); n_seg];
        for (i, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(v[[i, 0]]);
        }
        let mut y = Array2::zeros(v.raw_dim());
        let mut sum = vec![T::zero(); n_seg];
        for (i, &s) in seg.iter().enumerate() {
            let e = (v[[i, 0]] - max[s]).exp();
            y[[i, 0]] = e;
            sum[s] += e;
        }
        for (i, &s) in seg.iter().enumerate() {
            y[[i, 0]] /= sum[s];
        }
        self.push(Op::SegmentSoftmax(x, seg), y)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let y = ndarray::concatenate(Axis(0), &views).expect("matching column counts");
        self.push(Op::ConcatRows(parts.to_vec()), y)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let y = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols(x, start), y)
    }

    /// Row-wise cosine similarity as a column. Norms are floored at a tiny
    /// epsilon so a zero row yields 0 rather than NaN.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let mut y = Array2::zeros((va.nrows(), 1));
        for i in 0..va.nrows() {
            let (ra, rb) = (va.row(i), vb.row(i));
            y[[i, 0]] = ra.dot(&rb) / (norm(ra.dot(&ra)) * norm(rb.dot(&rb)));
        }
        self.push(Op::CosineRows(a, b), y)
    }

    pub fn hinge(&mut self, pos: Var, neg: Var, margin: T) -> Var {
        let total = Zip::from(self.value(pos))
            .and(self.value(neg))
            .fold(T::zero(), |acc, &p, &n| acc + (margin - p + n).max(T::zero()));
        self.push(Op::Hinge(pos, neg, margin), Array2::from_elem((1, 1), total))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Array2<T>>> = vec![None; self.params.len()];
        grads[loss.0] = Some(Array2::ones(self.value(loss).raw_dim()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let mut acc = |v: Var, d: Array2<T>| {
                if let Op::Param(p) = self.nodes[v.0].op {
                    add_into(&mut pgrads[p], d);
                } else {
                    add_into(&mut grads[v.0], d);
                }
            };
            match &self.nodes[id].op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(*a, g);
                    acc(*row, gr);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.mapv(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(id));
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(y)
                        .for_each(|g, &y| *g = *g * y * (T::one() - y));
                    acc(*a, ga);
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(id));
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(y)
                        .for_each(|g, &y| *g *= T::one() - y * y);
                    acc(*a, ga);
                }
                Op::Mix(src, triples) => {
                    let mut gs = Array2::zeros(self.value(*src).raw_dim());
                    for &(d, s, w) in triples {
                        gs.row_mut(s).scaled_add(w, &g.row(d));
                    }
                    acc(*src, gs);
                }
                Op::MulCol(x, c) => {
                    let gx = &g * self.value(*c);
                    let gc = (&g * self.value(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*x, gx);
                    acc(*c, gc);
                }
                Op::SegmentSoftmax(x, seg) => {
                    let y = self.value(Var(id));
                    let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![T::zero(); n_seg];
                    for (i, &s) in seg.iter().enumerate() {
                        dot[s] += g[[i, 0]] * y[[i, 0]];
                    }
                    let mut gx = Array2::zeros(y.raw_dim());
                    for (i, &s) in seg.iter().enumerate() {
                        gx[[i, 0]] = y[[i, 0]] * (g[[i, 0]] - dot[s]);
                    }
                    acc(*x, gx);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        acc(*p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::SliceCols(x, start) => {
                    let mut gx = Array2::zeros(self.value(*x).raw_dim());
                    gx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(*x, gx);
                }
                Op::CosineRows(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let y = self.value(Var(id));
                    let mut ga = Array2::zeros(va.raw_dim());
                    let mut gb = Array2::zeros(vb.raw_dim());
                    for i in 0..va.nrows() {
                        let (ra, rb) = (va.row(i), vb.row(i));
                        let (na, nb) = (norm(ra.dot(&ra)), norm(rb.dot(&rb)));
                        let (c, gi) = (y[[i, 0]], g[[i, 0]]);
                        // dc/da = b/(|a||b|) - c a/|a|^2
                        Zip::from(ga.row_mut(i))
                            .and(&ra)
                            .and(&rb)
                            .for_each(|o, &x, &z| *o = gi * (z / (na * nb) - c * x / (na * na)));
                        Zip::from(gb.row_mut(i))
                            .and(&ra)
                            .and(&rb)
                            .for_each(|o, &x, &z| *o = gi * (x / (na * nb) - c * z / (nb * nb)));
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Hinge(pos, neg, margin) => {
                    let gi = g[[0, 0]];
                    let (vp, vn) = (self.value(*pos), self.value(*neg));
                    let mut gp = Array2::zeros(vp.raw_dim());
                    let mut gn = Array2::zeros(vn.raw_dim());
                    Zip::from(&mut gp)
                        .and(&mut gn)
                        .and(vp)
                        .and(vn)
                        .for_each(|gp, gn, &p, &n| {
                            if *margin - p + n > T::zero() {
                                *gp = -gi;
                                *gn = gi;
                            }
                        });
                    acc(*pos, gp);
                    acc(*neg, gn);
                }
            }
        }
        Grads { tensors: pgrads }
    }
}

fn add_into<T: Real>(slot: &mut Option<Array2<T>>, d: Array2<T>) {
    match slot {
        Some(x) => *x += &d,
        None => *slot = Some(d),
    }
}

fn norm<T: Real>(sq: T) -> T {
    sq.sqrt().max(T::from_f64(1e-12).unwrap())
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of d(sum of op output weighted by `w`)/dx
    /// for every entry of every parameter.
    fn check(params: &Params<f64>, f: impl Fn(&mut Tape<'_, f64>) -> Var) {
        let tape_loss = |p: &Params<f64>| {
            let mut t = Tape::new(p);
            let out = f(&mut t);
            t.value(out)[[0, 0]]
        };
        let mut t = Tape::new(params);
        let out = f(&mut t);
        let grads = t.backward(out);
        let eps = 1e-6;
        for (pi, tensor) in params.tensors.iter().enumerate() {
            for idx in 0..tensor.len() {
                let (r, c) = (idx / tensor.ncols(), idx % tensor.ncols());
                let mut p = params.clone();
                p.tensors[pi][[r, c]] += eps;
                let up = tape_loss(&p);
                p.tensors[pi][[r, c]] -= 2.0 * eps;
                let down = tape_loss(&p);
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.get(pi).map_or(0.0, |g| g[[r, c]]);
                assert!(
                    (numeric - analytic).abs() < 1e-6,
                    "param {pi} [{r},{c}]: numeric {numeric} analytic {analytic}"
                );
            }
        }
    }

    fn params(ts: Vec<Array2<f64>>) -> Params<f64> {
        let mut p = Params::default();
        for (i, t) in ts.into_iter().enumerate() {
            p.push(format!("p{i}"), t);
        }
        p
    }

    /// Reduces any output to a scalar through a fixed random projection.
    fn reduce(t: &mut Tape<'_, f64>, y: Var) -> Var {
        let (n, m) = t.value(y).dim();
        let w = Array2::from_shape_fn((m, 1), |(i, _)| 0.3 + 0.17 * i as f64);
        let w = t.constant(w);
        let col = t.matmul(y, w);
        let ones = t.constant(Array2::ones((1, n)));
        t.matmul(ones, col)
    }

    #[test]
    fn elementwise_and_matmul_grads() {
        let p = params(vec![
            array![[0.1, -0.4, 0.3], [0.7, 0.2, -0.5]],
            array![[0.3, 0.1], [-0.2, 0.4], [0.5, -0.6]],
            array![[0.05, -0.1, 0.2]],
        ]);
        check(&p, |t| {
            let (a, b, r) = (t.param(0), t.param(1), t.param(2));
            let ab = t.matmul(a, b);
            let s = t.sigmoid(ab);
            let th = t.tanh(a);
            let ar = t.add_row(th, r);
            let m = t.mul(ar, a);
            let d = t.sub(m, a);
            let mm = t.matmul(d, b);
            let sum = t.add(mm, s);
            reduce(t, sum)
        });
    }

    #[test]
    fn mixing_slicing_and_concat_grads() {
        let p = params(vec![
            array![[0.1, -0.4, 0.3, 0.2], [0.7, 0.2, -0.5, 0.1], [0.0, 0.3, 0.9, -0.2]],
            array![[0.5], [-0.3], [1.2]],
        ]);
        check(&p, |t| {
            let (x, c) = (t.param(0), t.param(1));
            let m = t.mix(x, 2, vec![(0, 1, 0.5), (0, 2, 0.5), (1, 0, 2.0), (1, 1, -1.0)]);
            let sl = t.slice_cols(x, 1, 2);
            let cat = t.concat_rows(&[sl, sl]);
            let sc = t.mul_col(x, c);
            let sm = t.segment_softmax(c, vec![0, 1, 0]);
            let sc2 = t.mul_col(x, sm);
            let a = reduce(t, m);
            let b = reduce(t, cat);
            let d = reduce(t, sc);
            let e = reduce(t, sc2);
            let ab = t.add(a, b);
            let de = t.add(d, e);
            t.add(ab, de)
        });
    }

    #[test]
    fn cosine_and_hinge_grads() {
        let p = params(vec![
            array![[0.1, -0.4, 0.3], [0.7, 0.2, -0.5]],
            array![[0.3, 0.1, 0.9], [-0.2, 0.4, 0.1]],
            array![[-0.6, 0.2, 0.4], [0.1, 0.8, -0.3]],
        ]);
        check(&p, |t| {
            let (a, b, c) = (t.param(0), t.param(1), t.param(2));
            let pos = t.cosine_rows(a, b);
            let neg = t.cosine_rows(a, c);
            t.hinge(pos, neg, 0.6)
        });
    }

    #[test]
    fn segment_softmax_normalizes_per_segment() {
        let p = params(vec![array![[1.0], [2.0], [3.0], [-1.0]]]);
        let mut t = Tape::new(&p);
        let x = t.param(0);
        let y = t.segment_softmax(x, vec![0, 1, 0, 1]);
        let v = t.value(y);
        assert!((v[[0, 0]] + v[[2, 0]] - 1.0).abs() < 1e-12);
        assert!((v[[1, 0]] + v[[3, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let p = params(vec![array![[1.0, 0.0]], array![[0.0, 1.0]]]);
        let mut t = Tape::new(&p);
        let (a, b) = (t.param(0), t.param(1));
        let pos = t.cosine_rows(a, a);
        let neg = t.cosine_rows(a, b);
        let loss = t.hinge(pos, neg, 0.6);
        assert_eq!(t.value(loss)[[0, 0]], 0.0);
        let g = t.backward(loss);
        for i in 0..2 {
            assert!(g.get(i).unwrap().iter().all(|&x| x == 0.0));
        }
    }
}
