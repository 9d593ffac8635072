use ndarray::{concatenate, s, Array, Array2, Array3, ArrayView2, ArrayView3, Axis, Dimension};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, Dense, DenseCache};
use super::gru::{GruCache, GruLayer};
use super::lstm::{LstmCache, LstmLayer};
use super::params::{Gradients, ParameterStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentStackConfig {
    pub cell_kind: CellKind,
    pub layers: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub bidirectional: bool,
}

impl RecurrentStackConfig {
    /// Three unidirectional GRU layers of 28 units.
    pub fn timegan_default(input_dim: usize) -> Self {
        RecurrentStackConfig { cell_kind: CellKind::Gru, layers: 3, hidden: 28, input_dim, bidirectional: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.input_dim == 0 {
            return Err(Error::validation(format!("recurrent stack needs positive sizes, got {self:?}")));
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of each output step (hidden × directions).
    pub fn output_dim(&self) -> usize {
        self.hidden * self.directions()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Gru(GruLayer),
    Lstm(LstmLayer),
}

#[derive(Clone, Debug)]
enum CellCache {
    Gru(GruCache),
    Lstm(LstmCache),
}

impl Cell {
    fn forward(&self, store: &ParameterStore, x: ArrayView3<f64>, mask: Option<&Array2<f64>>) -> Result<(Array3<f64>, CellCache)> {
        Ok(match self {
            Cell::Gru(l) => {
                let (h, c) = l.forward(store, x, mask)?;
                (h, CellCache::Gru(c))
            }
            Cell::Lstm(l) => {
                let (h, c) = l.forward(store, x, mask)?;
                (h, CellCache::Lstm(c))
            }
        })
    }

    fn backward(&self, store: &ParameterStore, cache: &CellCache, d: ArrayView3<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array3<f64>> {
        match (self, cache) {
            (Cell::Gru(l), CellCache::Gru(c)) => l.backward(store, c, d, grads, need_dx),
            (Cell::Lstm(l), CellCache::Lstm(c)) => l.backward(store, c, d, grads, need_dx),
            _ => unreachable!("cache kind follows cell kind"),
        }
    }
}

/// Stacked (optionally bidirectional) recurrent layers.
///
/// The backward direction reads each sample reversed within its own length,
/// so right-padding never reaches the start of the reversed pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentStack {
    pub config: RecurrentStackConfig,
    cells: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    caches: Vec<Vec<CellCache>>,
    lengths: Option<Vec<usize>>,
    steps: usize,
    batch: usize,
}

/// Per-step outputs `(T, B, D)` and the final state of each direction `(B, D)`.
#[derive(Clone, Debug)]
pub struct StackOutput {
    pub seq: Array3<f64>,
    pub last: Array2<f64>,
}

/// Reverses each sample's first `len` steps in time and zeroes the rest.
///
/// Without lengths the whole sequence is reversed.
pub fn reverse_within(x: ArrayView3<f64>, lengths: Option<&[usize]>) -> Array3<f64> {
    let (steps, batch, _) = x.dim();
    let mut out = Array3::zeros(x.dim());
    for b in 0..batch {
        let len = lengths.map_or(steps, |l| l[b]);
        for t in 0..len {
            out.slice_mut(s![t, b, ..]).assign(&x.slice(s![len - 1 - t, b, ..]));
        }
    }
    out
}

fn length_mask(lengths: &[usize], steps: usize) -> Array2<f64> {
    Array2::from_shape_fn((steps, lengths.len()), |(t, b)| if t < lengths[b] { 1.0 } else { 0.0 })
}

impl RecurrentStack {
    pub fn new(store: &mut ParameterStore, prefix: &str, config: RecurrentStackConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut cells = Vec::with_capacity(config.layers);
        for layer in 0..config.layers {
            let input = if layer == 0 { config.input_dim } else { config.output_dim() };
            let mut dirs = Vec::new();
            for d in 0..config.directions() {
                let name = format!("{prefix}.l{layer}.{}", if d == 0 { "fwd" } else { "bwd" });
                dirs.push(match config.cell_kind {
                    CellKind::Gru => Cell::Gru(GruLayer::new(store, &name, input, config.hidden, rng)?),
                    CellKind::Lstm => Cell::Lstm(LstmLayer::new(store, &name, input, config.hidden, rng)?),
                });
            }
            cells.push(dirs);
        }
        Ok(RecurrentStack { config, cells })
    }

    /// Runs the stack over `(T, B, input)`; `lengths` marks the valid prefix of each sample.
    pub fn forward(&self, store: &ParameterStore, x: ArrayView3<f64>, lengths: Option<&[usize]>) -> Result<(StackOutput, StackCache)> {
        let (steps, batch, _) = x.dim();
        if steps == 0 || batch == 0 {
            return Err(Error::shape("recurrent stack needs a nonempty sequence batch"));
        }
        if let Some(l) = lengths {
            if l.len() != batch || l.iter().any(|&n| n == 0 || n > steps) {
                return Err(Error::shape("sequence lengths must be in 1..=T, one per sample"));
            }
        }
        let mask = lengths.map(|l| length_mask(l, steps));
        let hd = self.config.hidden;
        let mut cur = x.to_owned();
        let mut caches = Vec::with_capacity(self.cells.len());
        let mut last = Array2::zeros((batch, 0));
        for dirs in &self.cells {
            let mut outs = Vec::with_capacity(dirs.len());
            let mut layer_caches = Vec::with_capacity(dirs.len());
            let mut lasts = Vec::with_capacity(dirs.len());
            for (d, cell) in dirs.iter().enumerate() {
                let (out, cache) = if d == 0 {
                    cell.forward(store, cur.view(), mask.as_ref())?
                } else {
                    let rev = reverse_within(cur.view(), lengths);
                    cell.forward(store, rev.view(), mask.as_ref())?
                };
                lasts.push(out.index_axis(Axis(0), steps - 1).to_owned());
                outs.push(if d == 0 { out } else { reverse_within(out.view(), lengths) });
                layer_caches.push(cache);
            }
            cur = if outs.len() == 1 {
                outs.pop().expect("one direction")
            } else {
                concatenate(Axis(2), &outs.iter().map(|o| o.view()).collect::<Vec<_>>()).expect("same T, B")
            };
            last = concatenate(Axis(1), &lasts.iter().map(|o| o.view()).collect::<Vec<_>>()).expect("same B");
            debug_assert_eq!(last.ncols(), hd * dirs.len());
            caches.push(layer_caches);
        }
        Ok((
            StackOutput { seq: cur, last },
            StackCache { caches, lengths: lengths.map(<[usize]>::to_vec), steps, batch },
        ))
    }

    /// Backpropagates gradients w.r.t. the per-step outputs and/or the final states.
    pub fn backward(
        &self,
        store: &ParameterStore,
        cache: &StackCache,
        d_seq: Option<ArrayView3<f64>>,
        d_last: Option<ArrayView2<f64>>,
        grads: &mut Gradients,
        need_dx: bool,
    ) -> Option<Array3<f64>> {
        let hd = self.config.hidden;
        let dirs_n = self.config.directions();
        let lengths = cache.lengths.as_deref();
        let (steps, batch) = (cache.steps, cache.batch);
        let mut d_cur = match d_seq {
            Some(d) => d.to_owned(),
            None => Array3::zeros((steps, batch, hd * dirs_n)),
        };
        let top = self.cells.len() - 1;
        for layer in (0..self.cells.len()).rev() {
            let want_dx = need_dx || layer > 0;
            let mut dx_total: Option<Array3<f64>> = None;
            for (d, cell) in self.cells[layer].iter().enumerate() {
                let part = d_cur.slice(s![.., .., d * hd..(d + 1) * hd]);
                let mut part = if d == 0 { part.to_owned() } else { reverse_within(part, lengths) };
                if layer == top {
                    if let Some(dl) = d_last {
                        let mut row = part.index_axis_mut(Axis(0), steps - 1);
                        row += &dl.slice(s![.., d * hd..(d + 1) * hd]);
                    }
                }
                let dx = cell.backward(store, &cache.caches[layer][d], part.view(), grads, want_dx);
                if let Some(dx) = dx {
                    let dx = if d == 0 { dx } else { reverse_within(dx.view(), lengths) };
                    dx_total = Some(match dx_total {
                        Some(acc) => acc + dx,
                        None => dx,
                    });
                }
            }
            match dx_total {
                Some(dx) => d_cur = dx,
                None => return None,
            }
        }
        Some(d_cur)
    }
}

/// A recurrent stack followed by a dense head.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceNet {
    pub stack: RecurrentStack,
    pub head: Dense,
}

#[derive(Clone, Debug)]
pub struct SequenceNetCache {
    stack: StackCache,
    head: DenseCache,
    steps: usize,
    batch: usize,
}

impl SequenceNet {
    pub fn new(store: &mut ParameterStore, config: RecurrentStackConfig, output_dim: usize, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        let width = config.output_dim();
        let stack = RecurrentStack::new(store, "rnn", config, rng)?;
        let head = Dense::new(store, "head", width, output_dim, activation, rng)?;
        Ok(SequenceNet { stack, head })
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim
    }
}

/// Row-major copy of `a` unless it already is.
fn standard<D: Dimension>(a: Array<f64, D>) -> Array<f64, D> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

impl SequenceNet {
    /// Applies the head at every step: `(T, B, in) → (T, B, out)`.
    pub fn forward_steps(&self, store: &ParameterStore, x: ArrayView3<f64>) -> Result<(Array3<f64>, SequenceNetCache)> {
        let (steps, batch, _) = x.dim();
        let (out, stack) = self.stack.forward(store, x, None)?;
        let width = out.seq.dim().2;
        let flat = standard(out.seq).into_shape_with_order((steps * batch, width)).expect("contiguous");
        let (y, head) = self.head.forward(store, flat.view())?;
        let y = standard(y).into_shape_with_order((steps, batch, self.head.output_dim)).expect("contiguous");
        Ok((y, SequenceNetCache { stack, head, steps, batch }))
    }

    pub fn backward_steps(&self, store: &ParameterStore, cache: &SequenceNetCache, dy: ArrayView3<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array3<f64>> {
        let (steps, batch) = (cache.steps, cache.batch);
        let dy = dy.as_standard_layout();
        let dy2 = dy.view().into_shape_with_order((steps * batch, self.head.output_dim)).expect("contiguous");
        let dh = self.head.backward(store, &cache.head, dy2, grads, true).expect("requested");
        let dh = standard(dh).into_shape_with_order((steps, batch, self.head.input_dim)).expect("contiguous");
        self.stack.backward(store, &cache.stack, Some(dh.view()), None, grads, need_dx)
    }

    /// Applies the head to the final state only: `(T, B, in) → (B, out)`.
    pub fn forward_last(&self, store: &ParameterStore, x: ArrayView3<f64>, lengths: Option<&[usize]>) -> Result<(Array2<f64>, SequenceNetCache)> {
        let (steps, batch, _) = x.dim();
        let (out, stack) = self.stack.forward(store, x, lengths)?;
        let (y, head) = self.head.forward(store, out.last.view())?;
        Ok((y, SequenceNetCache { stack, head, steps, batch }))
    }

    pub fn backward_last(&self, store: &ParameterStore, cache: &SequenceNetCache, dy: ArrayView2<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array3<f64>> {
        let dh = self.head.backward(store, &cache.head, dy, grads, true).expect("requested");
        self.stack.backward(store, &cache.stack, None, Some(dh.view()), grads, need_dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reverse_within_respects_lengths() {
        let x = Array::from_shape_fn((4, 2, 1), |(t, b, _)| (10 * b + t) as f64);
        let r = reverse_within(x.view(), Some(&[4, 2]));
        assert_eq!(r.slice(s![.., 0, 0]).to_vec(), vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(r.slice(s![.., 1, 0]).to_vec(), vec![11.0, 10.0, 0.0, 0.0]);
    }

    #[test]
    fn bidirectional_final_state_ignores_padding() {
        let cfg = RecurrentStackConfig { cell_kind: CellKind::Lstm, layers: 1, hidden: 3, input_dim: 1, bidirectional: true };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::new(4);
        let stack = RecurrentStack::new(&mut store, "s", cfg, &mut rng).unwrap();
        let short = Array::from_shape_vec((3, 1, 1), vec![0.2, 0.9, 0.4]).unwrap();
        let mut padded = Array3::zeros((6, 1, 1));
        padded.slice_mut(s![..3, .., ..]).assign(&short);
        padded[[4, 0, 0]] = 7.0; // garbage beyond the valid length
        let (a, _) = stack.forward(&store, short.view(), None).unwrap();
        let (b, _) = stack.forward(&store, padded.view(), Some(&[3])).unwrap();
        for j in 0..6 {
            assert!((a.last[[0, j]] - b.last[[0, j]]).abs() < 1e-14);
        }
    }
}
