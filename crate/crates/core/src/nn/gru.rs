use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;

use super::params::{Gradients, ParamId, ParameterStore};
use super::sigmoid;
use crate::error::{Error, Result};

/// One GRU layer.
///
/// Gate blocks are laid out `[update | reset | candidate]` along the columns of
/// `w_x` (input × 3H), `w_h` (H × 3H) and `b` (3H). The reset gate acts on the
/// previous state before the recurrent candidate product:
///
/// ```text
/// z  = σ(x·Wz + h·Uz + bz)
/// r  = σ(x·Wr + h·Ur + br)
/// h~ = tanh(x·Wh + (r ⊙ h)·Uh + bh)
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruLayer {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

/// Forward activations kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct GruCache {
    x: Array3<f64>,
    z: Array3<f64>,
    r: Array3<f64>,
    cand: Array3<f64>,
    /// r ⊙ h_prev
    rh: Array3<f64>,
    /// Hidden state after every step.
    pub h: Array3<f64>,
    mask: Option<Array2<f64>>,
}

impl GruLayer {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let w_x = store.insert_uniform(format!("{prefix}.w_x"), input_dim, 3 * hidden, rng)?;
        let w_h = store.insert_uniform(format!("{prefix}.w_h"), hidden, 3 * hidden, rng)?;
        let b = store.insert_zeros(format!("{prefix}.b"), 3 * hidden)?;
        Ok(GruLayer { input_dim, hidden, w_x, w_h, b })
    }

    /// Runs the layer over a `(T, B, input)` sequence from a zero state.
    ///
    /// With a `(T, B)` mask of zeros and ones, masked steps carry the previous state.
    pub fn forward(&self, store: &ParameterStore, x: ArrayView3<f64>, mask: Option<&Array2<f64>>) -> Result<(Array3<f64>, GruCache)> {
        let (steps, batch, input) = x.dim();
        if input != self.input_dim {
            return Err(Error::shape(format!("GRU expects input width {}, got {input}", self.input_dim)));
        }
        if let Some(m) = mask {
            if m.dim() != (steps, batch) {
                return Err(Error::shape("GRU mask shape does not match the sequence"));
            }
        }
        let hd = self.hidden;
        let w_x = store.mat(self.w_x);
        let w_h = store.mat(self.w_h);
        let b = store.vec(self.b);
        let u_zr = w_h.slice(s![.., ..2 * hd]);
        let u_c = w_h.slice(s![.., 2 * hd..]);

        let x = x.as_standard_layout().into_owned();
        let flat = x.view().into_shape_with_order((steps * batch, input)).expect("contiguous");
        let mut xw = flat.dot(&w_x);
        xw += &b;
        let xw = xw.into_shape_with_order((steps, batch, 3 * hd)).expect("contiguous");

        let mut z = Array3::zeros((steps, batch, hd));
        let mut r = Array3::zeros((steps, batch, hd));
        let mut cand = Array3::zeros((steps, batch, hd));
        let mut rh = Array3::zeros((steps, batch, hd));
        let mut h = Array3::zeros((steps, batch, hd));
        let mut h_prev = Array2::<f64>::zeros((batch, hd));
        let mut hu = Array2::<f64>::zeros((batch, 2 * hd));
        let mut rhu = Array2::<f64>::zeros((batch, hd));

        for t in 0..steps {
            let xw_t = xw.index_axis(Axis(0), t);
            general_mat_mul(1.0, &h_prev, &u_zr, 0.0, &mut hu);
            let mut z_t = z.index_axis_mut(Axis(0), t);
            let mut r_t = r.index_axis_mut(Axis(0), t);
            Zip::from(&mut z_t)
                .and(&xw_t.slice(s![.., ..hd]))
                .and(&hu.slice(s![.., ..hd]))
                .for_each(|z, &a, &u| *z = sigmoid(a + u));
            Zip::from(&mut r_t)
                .and(&xw_t.slice(s![.., hd..2 * hd]))
                .and(&hu.slice(s![.., hd..]))
                .for_each(|r, &a, &u| *r = sigmoid(a + u));
            let mut rh_t = rh.index_axis_mut(Axis(0), t);
            Zip::from(&mut rh_t).and(&r_t).and(&h_prev).for_each(|o, &r, &h| *o = r * h);
            general_mat_mul(1.0, &rh_t, &u_c, 0.0, &mut rhu);
            let mut c_t = cand.index_axis_mut(Axis(0), t);
            Zip::from(&mut c_t)
                .and(&xw_t.slice(s![.., 2 * hd..]))
                .and(&rhu)
                .for_each(|c, &a, &u| *c = (a + u).tanh());
            let mut h_t = h.index_axis_mut(Axis(0), t);
            Zip::from(&mut h_t)
                .and(&z_t)
                .and(&c_t)
                .and(&h_prev)
                .for_each(|h, &z, &c, &hp| *h = hp + z * (c - hp));
            if let Some(m) = mask {
                for (bi, &mv) in m.row(t).iter().enumerate() {
                    if mv == 0.0 {
                        h_t.row_mut(bi).assign(&h_prev.row(bi));
                    }
                }
            }
            h_prev.assign(&h_t);
        }
        let out = h.clone();
        Ok((out, GruCache { x, z, r, cand, rh, h, mask: mask.cloned() }))
    }

    /// Backpropagates `d_out` (gradient w.r.t. every output state) through time.
    ///
    /// Parameter gradients are accumulated into `grads`; the input gradient is
    /// returned when `need_dx` is set.
    pub fn backward(&self, store: &ParameterStore, cache: &GruCache, d_out: ArrayView3<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array3<f64>> {
        let (steps, batch, hd) = cache.h.dim();
        let w_h = store.mat(self.w_h);
        let u_zr = w_h.slice(s![.., ..2 * hd]);
        let u_c = w_h.slice(s![.., 2 * hd..]);

        let mut da = Array3::<f64>::zeros((steps, batch, 3 * hd));
        let mut dh_next = Array2::<f64>::zeros((batch, hd));
        let zeros = Array2::<f64>::zeros((batch, hd));
        let mut dh = Array2::<f64>::zeros((batch, hd));
        let mut dh_prev = Array2::<f64>::zeros((batch, hd));
        let mut drh = Array2::<f64>::zeros((batch, hd));

        for t in (0..steps).rev() {
            let h_prev = if t > 0 { cache.h.index_axis(Axis(0), t - 1) } else { zeros.view() };
            Zip::from(&mut dh).and(&d_out.index_axis(Axis(0), t)).and(&dh_next).for_each(|d, &a, &b| *d = a + b);

            let mut carry = None;
            if let Some(m) = &cache.mask {
                let row = m.row(t);
                if row.iter().any(|&v| v == 0.0) {
                    let mut c = Array2::<f64>::zeros((batch, hd));
                    for (bi, &mv) in row.iter().enumerate() {
                        if mv == 0.0 {
                            c.row_mut(bi).assign(&dh.row(bi));
                            dh.row_mut(bi).fill(0.0);
                        }
                    }
                    carry = Some(c);
                }
            }

            let z_t = cache.z.index_axis(Axis(0), t);
            let r_t = cache.r.index_axis(Axis(0), t);
            let c_t = cache.cand.index_axis(Axis(0), t);
            let mut da_t = da.index_axis_mut(Axis(0), t);
            {
                let (mut da_zr, mut da_c) = da_t.view_mut().split_at(Axis(1), 2 * hd);
                let (mut da_z, _) = da_zr.view_mut().split_at(Axis(1), hd);
                Zip::from(&mut da_z)
                    .and(&dh)
                    .and(&c_t)
                    .and(&h_prev)
                    .and(&z_t)
                    .for_each(|o, &d, &c, &hp, &z| *o = d * (c - hp) * z * (1.0 - z));
                Zip::from(&mut da_c)
                    .and(&dh)
                    .and(&z_t)
                    .and(&c_t)
                    .for_each(|o, &d, &z, &c| *o = d * z * (1.0 - c * c));
                Zip::from(&mut dh_prev).and(&dh).and(&z_t).for_each(|o, &d, &z| *o = d * (1.0 - z));
                general_mat_mul(1.0, &da_c, &u_c.t(), 0.0, &mut drh);
            }
            {
                let mut da_r = da_t.slice_mut(s![.., hd..2 * hd]);
                Zip::from(&mut da_r)
                    .and(&drh)
                    .and(&h_prev)
                    .and(&r_t)
                    .for_each(|o, &g, &hp, &r| *o = g * hp * r * (1.0 - r));
            }
            Zip::from(&mut dh_prev).and(&drh).and(&r_t).for_each(|o, &g, &r| *o += g * r);
            general_mat_mul(1.0, &da_t.slice(s![.., ..2 * hd]), &u_zr.t(), 1.0, &mut dh_prev);
            if let Some(c) = carry {
                dh_prev += &c;
            }
            std::mem::swap(&mut dh_next, &mut dh_prev);
        }

        let da2 = da.view().into_shape_with_order((steps * batch, 3 * hd)).expect("contiguous");
        let x2 = cache.x.view().into_shape_with_order((steps * batch, self.input_dim)).expect("contiguous");
        general_mat_mul(1.0, &x2.t(), &da2, 1.0, &mut grads.mat_mut(self.w_x));
        grads.vec_mut(self.b).scaled_add(1.0, &da2.sum_axis(Axis(0)));

        // previous states, shifted by one step with a zero initial state
        let mut h_prev_all = Array3::<f64>::zeros((steps, batch, hd));
        if steps > 1 {
            h_prev_all.slice_mut(s![1.., .., ..]).assign(&cache.h.slice(s![..steps - 1, .., ..]));
        }
        let hp2 = h_prev_all.view().into_shape_with_order((steps * batch, hd)).expect("contiguous");
        let rh2 = cache.rh.view().into_shape_with_order((steps * batch, hd)).expect("contiguous");
        {
            let mut gw = grads.mat_mut(self.w_h);
            general_mat_mul(1.0, &hp2.t(), &da2.slice(s![.., ..2 * hd]), 1.0, &mut gw.slice_mut(s![.., ..2 * hd]));
            general_mat_mul(1.0, &rh2.t(), &da2.slice(s![.., 2 * hd..]), 1.0, &mut gw.slice_mut(s![.., 2 * hd..]));
        }
        if !need_dx {
            return None;
        }
        let dx = da2.dot(&store.mat(self.w_x).t());
        Some(dx.into_shape_with_order((steps, batch, self.input_dim)).expect("contiguous"))
    }

    /// One step for a single sample; see [`gru_cell`].
    pub fn cell(&self, store: &ParameterStore, x: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> Result<Array1<f64>> {
        gru_cell(x, h_prev, store.mat(self.w_x), store.mat(self.w_h), store.vec(self.b))
    }
}

/// A single GRU step written out gate by gate.
pub fn gru_cell(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    w_x: ArrayView2<f64>,
    w_h: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let hd = h_prev.len();
    if w_x.dim() != (x.len(), 3 * hd) || w_h.dim() != (hd, 3 * hd) || b.len() != 3 * hd {
        return Err(Error::shape(format!(
            "gru_cell: x {} h {} w_x {:?} w_h {:?} b {}",
            x.len(),
            hd,
            w_x.dim(),
            w_h.dim(),
            b.len()
        )));
    }
    let affine = |k: usize, j: usize, rec: &dyn Fn(usize) -> f64| -> f64 {
        let col = k * hd + j;
        let mut a = b[col];
        for i in 0..x.len() {
            a += x[i] * w_x[[i, col]];
        }
        for i in 0..hd {
            a += rec(i) * w_h[[i, col]];
        }
        a
    };
    let z: Vec<f64> = (0..hd).map(|j| sigmoid(affine(0, j, &|i| h_prev[i]))).collect();
    let r: Vec<f64> = (0..hd).map(|j| sigmoid(affine(1, j, &|i| h_prev[i]))).collect();
    let cand: Vec<f64> = (0..hd).map(|j| affine(2, j, &|i| r[i] * h_prev[i]).tanh()).collect();
    Ok((0..hd).map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * cand[j]).collect())
}
