use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;

use super::params::{Gradients, ParamId, ParameterStore};
use super::sigmoid;
use crate::error::{Error, Result};

/// One LSTM layer with gate blocks `[input | forget | cell | output]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Array3<f64>,
    /// Gate activations `(T, B, 4H)`.
    gates: Array3<f64>,
    /// tanh of the unmasked new cell state.
    tanh_c: Array3<f64>,
    c: Array3<f64>,
    pub h: Array3<f64>,
    mask: Option<Array2<f64>>,
}

impl LstmLayer {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let w_x = store.insert_uniform(format!("{prefix}.w_x"), input_dim, 4 * hidden, rng)?;
        let w_h = store.insert_uniform(format!("{prefix}.w_h"), hidden, 4 * hidden, rng)?;
        let b = store.insert_zeros(format!("{prefix}.b"), 4 * hidden)?;
        Ok(LstmLayer { input_dim, hidden, w_x, w_h, b })
    }

    pub fn forward(&self, store: &ParameterStore, x: ArrayView3<f64>, mask: Option<&Array2<f64>>) -> Result<(Array3<f64>, LstmCache)> {
        let (steps, batch, input) = x.dim();
        if input != self.input_dim {
            return Err(Error::shape(format!("LSTM expects input width {}, got {input}", self.input_dim)));
        }
        if let Some(m) = mask {
            if m.dim() != (steps, batch) {
                return Err(Error::shape("LSTM mask shape does not match the sequence"));
            }
        }
        let hd = self.hidden;
        let w_x = store.mat(self.w_x);
        let w_h = store.mat(self.w_h);
        let b = store.vec(self.b);

        let x = x.as_standard_layout().into_owned();
        let flat = x.view().into_shape_with_order((steps * batch, input)).expect("contiguous");
        let mut gates = flat.dot(&w_x);
        gates += &b;
        let mut gates = gates.into_shape_with_order((steps, batch, 4 * hd)).expect("contiguous");

        let mut tanh_c = Array3::zeros((steps, batch, hd));
        let mut c = Array3::zeros((steps, batch, hd));
        let mut h = Array3::zeros((steps, batch, hd));
        let mut h_prev = Array2::<f64>::zeros((batch, hd));
        let mut c_prev = Array2::<f64>::zeros((batch, hd));

        for t in 0..steps {
            let mut g_t = gates.index_axis_mut(Axis(0), t);
            general_mat_mul(1.0, &h_prev, &w_h, 1.0, &mut g_t);
            g_t.slice_mut(s![.., ..2 * hd]).mapv_inplace(sigmoid);
            g_t.slice_mut(s![.., 2 * hd..3 * hd]).mapv_inplace(f64::tanh);
            g_t.slice_mut(s![.., 3 * hd..]).mapv_inplace(sigmoid);
            let (i_g, rest) = g_t.view().split_at(Axis(1), hd);
            let (f_g, rest) = rest.split_at(Axis(1), hd);
            let (c_g, o_g) = rest.split_at(Axis(1), hd);
            let mut c_t = c.index_axis_mut(Axis(0), t);
            Zip::from(&mut c_t)
                .and(&f_g)
                .and(&c_prev)
                .and(&i_g)
                .and(&c_g)
                .for_each(|c, &f, &cp, &i, &g| *c = f * cp + i * g);
            let mut tc_t = tanh_c.index_axis_mut(Axis(0), t);
            Zip::from(&mut tc_t).and(&c_t).for_each(|tc, &c| *tc = c.tanh());
            let mut h_t = h.index_axis_mut(Axis(0), t);
            Zip::from(&mut h_t).and(&o_g).and(&tc_t).for_each(|h, &o, &tc| *h = o * tc);
            if let Some(m) = mask {
                for (bi, &mv) in m.row(t).iter().enumerate() {
                    if mv == 0.0 {
                        h_t.row_mut(bi).assign(&h_prev.row(bi));
                        c_t.row_mut(bi).assign(&c_prev.row(bi));
                    }
                }
            }
            h_prev.assign(&h_t);
            c_prev.assign(&c_t);
        }
        let out = h.clone();
        Ok((out, LstmCache { x, gates, tanh_c, c, h, mask: mask.cloned() }))
    }

    pub fn backward(&self, store: &ParameterStore, cache: &LstmCache, d_out: ArrayView3<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array3<f64>> {
        let (steps, batch, hd) = cache.h.dim();
        let w_h = store.mat(self.w_h);
        let zeros = Array2::<f64>::zeros((batch, hd));
        let mut da = Array3::<f64>::zeros((steps, batch, 4 * hd));
        let mut dh_next = Array2::<f64>::zeros((batch, hd));
        let mut dc_next = Array2::<f64>::zeros((batch, hd));
        let mut dh = Array2::<f64>::zeros((batch, hd));
        let mut dc = Array2::<f64>::zeros((batch, hd));

        for t in (0..steps).rev() {
            let c_prev = if t > 0 { cache.c.index_axis(Axis(0), t - 1) } else { zeros.view() };
            Zip::from(&mut dh).and(&d_out.index_axis(Axis(0), t)).and(&dh_next).for_each(|d, &a, &b| *d = a + b);
            dc.assign(&dc_next);

            let mut carry_h = None;
            let mut carry_c = None;
            if let Some(m) = &cache.mask {
                let row = m.row(t);
                if row.iter().any(|&v| v == 0.0) {
                    let mut ch = Array2::<f64>::zeros((batch, hd));
                    let mut cc = Array2::<f64>::zeros((batch, hd));
                    for (bi, &mv) in row.iter().enumerate() {
                        if mv == 0.0 {
                            ch.row_mut(bi).assign(&dh.row(bi));
                            cc.row_mut(bi).assign(&dc.row(bi));
                            dh.row_mut(bi).fill(0.0);
                            dc.row_mut(bi).fill(0.0);
                        }
                    }
                    carry_h = Some(ch);
                    carry_c = Some(cc);
                }
            }

            let g_t = cache.gates.index_axis(Axis(0), t);
            let (i_g, rest) = g_t.split_at(Axis(1), hd);
            let (f_g, rest) = rest.split_at(Axis(1), hd);
            let (c_g, o_g) = rest.split_at(Axis(1), hd);
            let tc_t = cache.tanh_c.index_axis(Axis(0), t);

            // dc += dh · o · (1 − tanh²c)
            Zip::from(&mut dc)
                .and(&dh)
                .and(&o_g)
                .and(&tc_t)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));

            let mut da_t = da.index_axis_mut(Axis(0), t);
            let (mut da_i, rest) = da_t.view_mut().split_at(Axis(1), hd);
            let (mut da_f, rest) = rest.split_at(Axis(1), hd);
            let (mut da_g, mut da_o) = rest.split_at(Axis(1), hd);
            Zip::from(&mut da_i).and(&dc).and(&c_g).and(&i_g).for_each(|o, &dc, &g, &i| *o = dc * g * i * (1.0 - i));
            Zip::from(&mut da_f).and(&dc).and(&c_prev).and(&f_g).for_each(|o, &dc, &cp, &f| *o = dc * cp * f * (1.0 - f));
            Zip::from(&mut da_g).and(&dc).and(&i_g).and(&c_g).for_each(|o, &dc, &i, &g| *o = dc * i * (1.0 - g * g));
            Zip::from(&mut da_o).and(&dh).and(&tc_t).and(&o_g).for_each(|o, &dh, &tc, &og| *o = dh * tc * og * (1.0 - og));

            Zip::from(&mut dc_next).and(&dc).and(&f_g).for_each(|o, &dc, &f| *o = dc * f);
            general_mat_mul(1.0, &da_t, &w_h.t(), 0.0, &mut dh_next);
            if let Some(ch) = carry_h {
                dh_next += &ch;
            }
            if let Some(cc) = carry_c {
                dc_next += &cc;
            }
        }

        let da2 = da.view().into_shape_with_order((steps * batch, 4 * hd)).expect("contiguous");
        let x2 = cache.x.view().into_shape_with_order((steps * batch, self.input_dim)).expect("contiguous");
        general_mat_mul(1.0, &x2.t(), &da2, 1.0, &mut grads.mat_mut(self.w_x));
        grads.vec_mut(self.b).scaled_add(1.0, &da2.sum_axis(Axis(0)));
        let mut h_prev_all = Array3::<f64>::zeros((steps, batch, hd));
        if steps > 1 {
            h_prev_all.slice_mut(s![1.., .., ..]).assign(&cache.h.slice(s![..steps - 1, .., ..]));
        }
        let hp2 = h_prev_all.view().into_shape_with_order((steps * batch, hd)).expect("contiguous");
        general_mat_mul(1.0, &hp2.t(), &da2, 1.0, &mut grads.mat_mut(self.w_h));
        if !need_dx {
            return None;
        }
        let dx = da2.dot(&store.mat(self.w_x).t());
        Some(dx.into_shape_with_order((steps, batch, self.input_dim)).expect("contiguous"))
    }

    pub fn cell(&self, store: &ParameterStore, x: ArrayView1<f64>, h_prev: ArrayView1<f64>, c_prev: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        lstm_cell(x, h_prev, c_prev, store.mat(self.w_x), store.mat(self.w_h), store.vec(self.b))
    }
}

/// A single LSTM step for one sample: returns `(h, c)`.
pub fn lstm_cell(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    w_x: ArrayView2<f64>,
    w_h: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let hd = h_prev.len();
    if c_prev.len() != hd || w_x.dim() != (x.len(), 4 * hd) || w_h.dim() != (hd, 4 * hd) || b.len() != 4 * hd {
        return Err(Error::shape("lstm_cell: inconsistent dimensions"));
    }
    let pre = |col: usize| -> f64 {
        let mut a = b[col];
        for i in 0..x.len() {
            a += x[i] * w_x[[i, col]];
        }
        for i in 0..hd {
            a += h_prev[i] * w_h[[i, col]];
        }
        a
    };
    let mut h = Array1::zeros(hd);
    let mut c = Array1::zeros(hd);
    for j in 0..hd {
        let i_g = sigmoid(pre(j));
        let f_g = sigmoid(pre(hd + j));
        let g_g = pre(2 * hd + j).tanh();
        let o_g = sigmoid(pre(3 * hd + j));
        c[j] = f_g * c_prev[j] + i_g * g_g;
        h[j] = o_g * c[j].tanh();
    }
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(input: usize, hidden: usize, seed: u64) -> (LstmLayer, ParameterStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new(seed);
        let l = LstmLayer::new(&mut store, "l", input, hidden, &mut rng).unwrap();
        (l, store)
    }

    #[test]
    fn zero_parameters_zero_state() {
        let (l, mut store) = layer(2, 3, 0);
        for id in store.ids().collect::<Vec<_>>() {
            store.values_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let (h, c) = l.cell(&store, arr1(&[0.3, 0.9]).view(), Array1::zeros(3).view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(h, Array1::<f64>::zeros(3));
        assert_eq!(c, Array1::<f64>::zeros(3));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let (l, mut store) = layer(2, 3, 0);
        for id in store.ids().collect::<Vec<_>>() {
            store.values_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        store.values_mut(l.b)[3..6].iter_mut().for_each(|v| *v = 1e6);
        let c_prev = arr1(&[0.5, -2.0, 1.25]);
        let (_, c) = l.cell(&store, arr1(&[1.0, -1.0]).view(), arr1(&[0.1, 0.2, 0.3]).view(), c_prev.view()).unwrap();
        for j in 0..3 {
            assert!((c[j] - c_prev[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_forward_matches_cell_steps() {
        let (l, store) = layer(3, 4, 5);
        let x = Array::from_shape_fn((6, 2, 3), |(t, b, i)| ((t * 5 + b * 2 + i) as f64 * 0.61).cos());
        let (out, _) = l.forward(&store, x.view(), None).unwrap();
        for b in 0..2 {
            let mut h = Array1::<f64>::zeros(4);
            let mut c = Array1::<f64>::zeros(4);
            for t in 0..6 {
                let (h2, c2) = l.cell(&store, x.slice(s![t, b, ..]), h.view(), c.view()).unwrap();
                h = h2;
                c = c2;
                for j in 0..4 {
                    assert!((h[j] - out[[t, b, j]]).abs() < 1e-13);
                }
            }
        }
    }
}
