//! Minimal reverse-mode differentiation over row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed leaves, so inference never copies weights.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};
use std::sync::Arc;

pub type Mat = Array2<f64>;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    /// `out[segs[k]] += x[rows[k]] / counts[segs[k]]`
    SegmentMean {
        x: Var,
        rows: Arc<Vec<usize>>,
        segs: Arc<Vec<usize>>,
        counts: Vec<usize>,
    },
    /// Row softmax restricted to columns of the same group as the row.
    GroupSoftmax(Var, Arc<Vec<usize>>),
}

struct Entry {
    value: Option<Mat>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p [Mat],
    entries: Vec<Entry>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Tape {
            params,
            entries: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Mat {
        let e = &self.entries[v.0];
        match (&e.value, &e.op) {
            (Some(m), _) => m,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("non-parameter entry without value"),
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.entries.push(Entry {
            value: Some(value),
            op,
        });
        Var(self.entries.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.entries.push(Entry {
            value: None,
            op: Op::Param(index),
        });
        Var(self.entries.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulNt(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { LEAKY_SLOPE * x });
        self.push(v, Op::LeakyRelu(a))
    }

    /// Per-row normalisation followed by an elementwise affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / cols;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let v = self.value(a).slice(s![.., lo..hi]).to_owned();
        self.push(v, Op::SliceCols(a, lo, hi))
    }

    /// Mean of selected rows per segment; empty segments give zero rows.
    pub fn segment_mean(&mut self, x: Var, rows: Arc<Vec<usize>>, segs: Arc<Vec<usize>>, num_segs: usize) -> Var {
        debug_assert_eq!(rows.len(), segs.len());
        let xv = self.value(x);
        let mut counts = vec![0usize; num_segs];
        for &g in segs.iter() {
            counts[g] += 1;
        }
        let mut out = Mat::zeros((num_segs, xv.ncols()));
        for (&r, &g) in rows.iter().zip(segs.iter()) {
            let k = 1.0 / counts[g] as f64;
            out.row_mut(g).scaled_add(k, &xv.row(r));
        }
        self.push(out, Op::SegmentMean { x, rows, segs, counts })
    }

    /// Row gather: `out[i] = x[rows[i]]`.
    pub fn gather(&mut self, x: Var, rows: Arc<Vec<usize>>) -> Var {
        let n = rows.len();
        let segs = Arc::new((0..n).collect());
        self.segment_mean(x, rows, segs, n)
    }

    pub fn group_softmax(&mut self, x: Var, groups: Arc<Vec<usize>>) -> Var {
        let xv = self.value(x);
        let mut out = Mat::zeros(xv.raw_dim());
        for i in 0..xv.nrows() {
            let g = groups[i];
            let max = (0..xv.ncols())
                .filter(|&j| groups[j] == g)
                .map(|j| xv[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..xv.ncols() {
                if groups[j] == g {
                    let e = (xv[[i, j]] - max).exp();
                    out[[i, j]] = e;
                    sum += e;
                }
            }
            out.row_mut(i).mapv_inplace(|v| v / sum);
        }
        self.push(out, Op::GroupSoftmax(x, groups))
    }

    /// Propagates `seed` (gradient of the loss w.r.t. `out`) back to the
    /// parameters. Returns one gradient per parameter, zero if unused.
    pub fn backward(&self, out: Var, seed: Mat) -> Vec<Mat> {
        let mut grads: Vec<Option<Mat>> = (0..self.entries.len()).map(|_| None).collect();
        let mut pgrads: Vec<Mat> = self.params.iter().map(|p| Mat::zeros(p.raw_dim())).collect();
        grads[out.0] = Some(seed);
        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let acc = |grads: &mut Vec<Option<Mat>>, v: Var, d: Mat| match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            };
            match &self.entries[id].op {
                Op::Const => {}
                Op::Param(i) => pgrads[*i] += &g,
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
                Op::AddRow(a, r) => {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *r, dr);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g * *k),
                Op::LeakyRelu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d *= LEAKY_SLOPE;
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let dbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dgain = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * self.value(*gain);
                    let n = xhat.ncols() as f64;
                    let mut dx = Mat::zeros(xhat.raw_dim());
                    for i in 0..xhat.nrows() {
                        let dh = dxhat.row(i);
                        let h = xhat.row(i);
                        let sum = dh.sum();
                        let dot = dh.dot(&h);
                        let is = inv_std[i];
                        for j in 0..xhat.ncols() {
                            dx[[i, j]] = is / n * (n * dh[j] - sum - h[j] * dot);
                        }
                    }
                    acc(&mut grads, *bias, dbias);
                    acc(&mut grads, *gain, dgain);
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut lo = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., lo..lo + w]).to_owned());
                        lo += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut lo = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        acc(&mut grads, p, g.slice(s![lo..lo + h, ..]).to_owned());
                        lo += h;
                    }
                }
                Op::SliceCols(a, lo, hi) => {
                    let mut d = Mat::zeros(self.value(*a).raw_dim());
                    d.slice_mut(s![.., *lo..*hi]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::SegmentMean { x, rows, segs, counts } => {
                    let mut d = Mat::zeros(self.value(*x).raw_dim());
                    for (&r, &s) in rows.iter().zip(segs.iter()) {
                        d.row_mut(r).scaled_add(1.0 / counts[s] as f64, &g.row(s));
                    }
                    acc(&mut grads, *x, d);
                }
                Op::GroupSoftmax(x, groups) => {
                    let y = self.entries[id].value.as_ref().expect("softmax has a value");
                    let mut d = Mat::zeros(y.raw_dim());
                    for i in 0..y.nrows() {
                        let dot = g.row(i).dot(&y.row(i));
                        for j in 0..y.ncols() {
                            if groups[j] == groups[i] {
                                d[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
                            }
                        }
                    }
                    acc(&mut grads, *x, d);
                }
            }
        }
        pgrads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` over every parameter entry.
    fn check(params: Vec<Mat>, f: impl Fn(&mut Tape) -> Var) {
        let tape_loss = |ps: &[Mat]| {
            let mut t = Tape::new(ps);
            let out = f(&mut t);
            t.value(out).sum()
        };
        let mut t = Tape::new(&params);
        let out = f(&mut t);
        let seed = Mat::ones(t.value(out).raw_dim());
        let grads = t.backward(out, seed);
        let h = 1e-6;
        for (pi, p) in params.iter().enumerate() {
            for idx in 0..p.len() {
                let mut plus = params.clone();
                plus[pi].as_slice_mut().unwrap()[idx] += h;
                let mut minus = params.clone();
                minus[pi].as_slice_mut().unwrap()[idx] -= h;
                let fd = (tape_loss(&plus) - tape_loss(&minus)) / (2.0 * h);
                let an = grads[pi].as_slice().unwrap()[idx];
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "param {pi}[{idx}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn segment_mean_examples() {
        let params = vec![array![[1.0, 3.0], [3.0, 5.0]]];
        let mut t = Tape::new(&params);
        let x = t.param(0);
        let m = t.segment_mean(x, Arc::new(vec![0, 1, 0]), Arc::new(vec![0, 0, 2]), 3);
        assert_eq!(t.value(m), &array![[2.0, 4.0], [0.0, 0.0], [1.0, 3.0]]);
    }

    #[test]
    fn matmul_chain_gradients() {
        let params = vec![
            array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.7]],
            array![[0.2, 0.1], [-0.3, 0.6], [0.5, -0.4]],
            array![[0.05, -0.1]],
        ];
        check(params, |t| {
            let a = t.param(0);
            let b = t.param(1);
            let c = t.param(2);
            let ab = t.matmul(a, b);
            let z = t.add_row(ab, c);
            let z = t.leaky_relu(z);
            let y = t.matmul_nt(z, b);
            let y = t.scale(y, 1.5);
            t.sub(y, a)
        });
    }

    #[test]
    fn layer_norm_gradients() {
        let params = vec![
            array![[0.3, -0.2, 0.5, 1.0], [0.1, 0.4, -0.7, 0.2]],
            array![[1.1, 0.9, -0.5, 0.3]],
            array![[0.1, 0.0, -0.2, 0.4]],
            array![[0.7, -1.3, 0.2, 0.9], [0.4, 0.4, -0.1, 0.3]],
        ];
        check(params, |t| {
            let x = t.param(0);
            let g = t.param(1);
            let b = t.param(2);
            let w = t.param(3);
            let y = t.layer_norm(x, g, b);
            // Non-uniform downstream weights so the loss is not shift invariant.
            let y2 = t.add(y, w);
            let y3 = t.leaky_relu(y2);
            let y4 = t.concat_cols(&[y3, y]);
            t.slice_cols(y4, 1, 6)
        });
    }

    #[test]
    fn gather_concat_softmax_gradients() {
        let params = vec![
            array![[0.3, -0.2], [0.1, 0.4], [-0.6, 0.9]],
            array![[1.0, 0.5, -0.3], [0.2, -0.1, 0.8]],
        ];
        check(params, |t| {
            let x = t.param(0);
            let w = t.param(1);
            let s = t.matmul_nt(x, x);
            let p = t.group_softmax(s, Arc::new(vec![0, 0, 1]));
            let px = t.matmul(p, x);
            let rows = t.concat_rows(&[px, x]);
            let m = t.segment_mean(rows, Arc::new(vec![0, 3, 4, 5, 2]), Arc::new(vec![0, 0, 1, 1, 2]), 4);
            let g = t.gather(m, Arc::new(vec![2, 0, 0, 3]));
            let out = t.matmul(g, w);
            let out = t.leaky_relu(out);
            t.matmul_nt(out, w)
        });
    }
}
