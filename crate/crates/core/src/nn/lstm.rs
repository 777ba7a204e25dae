//! Gated recurrent cell over a fixed-length sequence of frames.
//!
//! The four gate matrices are stored stacked in one `[4h x (in + h)]` weight
//! so a step costs a single matrix product; [`LstmCell::gate`] exposes each
//! block. Row order is input, forget, output, candidate.

use ndarray::{s, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{col_sums, hcat, init_xavier, Mat, NnError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `[4h x (in + h)]`, gate blocks stacked by rows.
    pub w: Mat,
    /// `[1 x 4h]`
    pub b: Mat,
    input: usize,
    hidden: usize,
}

/// Per-step intermediates kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    z: Vec<Mat>,
    i: Vec<Mat>,
    f: Vec<Mat>,
    o: Vec<Mat>,
    g: Vec<Mat>,
    c_prev: Vec<Mat>,
    tanh_c: Vec<Mat>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl LstmCell {
    /// Xavier gate weights; forget-gate bias starts at 1.
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Mat::zeros((4 * hidden, input + hidden));
        for k in 0..4 {
            w.slice_mut(s![k * hidden..(k + 1) * hidden, ..])
                .assign(&init_xavier(hidden, input + hidden, rng));
        }
        let mut b = Mat::zeros((1, 4 * hidden));
        b.slice_mut(s![.., hidden..2 * hidden]).fill(1.0);
        Self { w, b, input, hidden }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Mat::zeros((4 * hidden, input + hidden)),
            b: Mat::zeros((1, 4 * hidden)),
            input,
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn gate(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let k = gate as usize;
        self.w.slice(s![k * self.hidden..(k + 1) * self.hidden, ..])
    }

    pub fn gate_bias(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let k = gate as usize;
        self.b.slice(s![.., k * self.hidden..(k + 1) * self.hidden])
    }

    fn check_step(&self, x: &Mat, h: &Mat, c: &Mat) -> Result<(), NnError> {
        let batch = x.nrows();
        if x.ncols() != self.input {
            return Err(NnError::Shape {
                op: "lstm_step input",
                left: x.dim(),
                right: (batch, self.input),
            });
        }
        for (m, op) in [(h, "lstm_step hidden"), (c, "lstm_step cell")] {
            if m.dim() != (batch, self.hidden) {
                return Err(NnError::Shape {
                    op,
                    left: m.dim(),
                    right: (batch, self.hidden),
                });
            }
        }
        Ok(())
    }

    /// One recurrence step; returns `(h, c)` and the step intermediates.
    #[allow(clippy::type_complexity)]
    fn step_cached(&self, x: &Mat, h_prev: &Mat, c_prev: &Mat) -> Result<(Mat, Mat, [Mat; 6]), NnError> {
        self.check_step(x, h_prev, c_prev)?;
        let hd = self.hidden;
        let z = hcat(&[x, h_prev])?;
        let pre = z.dot(&self.w.t()) + &self.b;
        let i = pre.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = pre.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let o = pre.slice(s![.., 2 * hd..3 * hd]).mapv(sigmoid);
        let g = pre.slice(s![.., 3 * hd..4 * hd]).mapv(f64::tanh);
        let c = &f * c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        Ok((h, c, [z, i, f, o, g, tanh_c]))
    }

    pub fn step(&self, x: &Mat, h_prev: &Mat, c_prev: &Mat) -> Result<(Mat, Mat), NnError> {
        self.step_cached(x, h_prev, c_prev).map(|(h, c, _)| (h, c))
    }

    /// Runs the sequence from zero state and returns the final hidden state.
    pub fn forward_sequence(&self, xs: &[Mat]) -> Result<Mat, NnError> {
        self.forward_sequence_cached(xs).map(|(h, _)| h)
    }

    pub fn forward_sequence_cached(&self, xs: &[Mat]) -> Result<(Mat, LstmCache), NnError> {
        let batch = xs.first().map(|x| x.nrows()).unwrap_or(0);
        let mut h = Mat::zeros((batch, self.hidden));
        let mut c = Mat::zeros((batch, self.hidden));
        let k = xs.len();
        let mut cache = LstmCache {
            z: Vec::with_capacity(k),
            i: Vec::with_capacity(k),
            f: Vec::with_capacity(k),
            o: Vec::with_capacity(k),
            g: Vec::with_capacity(k),
            c_prev: Vec::with_capacity(k),
            tanh_c: Vec::with_capacity(k),
        };
        for x in xs {
            let (h_next, c_next, [z, i, f, o, g, tanh_c]) = self.step_cached(x, &h, &c)?;
            cache.z.push(z);
            cache.i.push(i);
            cache.f.push(f);
            cache.o.push(o);
            cache.g.push(g);
            cache.c_prev.push(c);
            cache.tanh_c.push(tanh_c);
            h = h_next;
            c = c_next;
        }
        Ok((h, cache))
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state. Accumulates into `grads`; returns per-step input gradients.
    pub fn backward_sequence_into(
        &self,
        cache: &LstmCache,
        dh_final: &Mat,
        grads: &mut LstmCell,
    ) -> Result<Vec<Mat>, NnError> {
        let k = cache.z.len();
        let hd = self.hidden;
        let batch = dh_final.nrows();
        if dh_final.ncols() != hd || (k > 0 && cache.z[0].nrows() != batch) {
            return Err(NnError::Shape {
                op: "lstm_backward",
                left: dh_final.dim(),
                right: (cache.z.first().map(|z| z.nrows()).unwrap_or(0), hd),
            });
        }
        let mut dh = dh_final.clone();
        let mut dc = Mat::zeros((batch, hd));
        let mut dxs = vec![Mat::zeros((batch, self.input)); k];
        for t in (0..k).rev() {
            let (i, f, o, g) = (&cache.i[t], &cache.f[t], &cache.o[t], &cache.g[t]);
            let tanh_c = &cache.tanh_c[t];
            dc += &(&dh * o * &tanh_c.mapv(|v| 1.0 - v * v));
            let mut dpre = Mat::zeros((batch, 4 * hd));
            // Gate pre-activation gradients.
            let da_i = &dc * g * &i.mapv(|v| v * (1.0 - v));
            let da_f = &dc * &cache.c_prev[t] * &f.mapv(|v| v * (1.0 - v));
            let da_o = &dh * tanh_c * &o.mapv(|v| v * (1.0 - v));
            let da_g = &dc * i * &g.mapv(|v| 1.0 - v * v);
            dpre.slice_mut(s![.., 0..hd]).assign(&da_i);
            dpre.slice_mut(s![.., hd..2 * hd]).assign(&da_f);
            dpre.slice_mut(s![.., 2 * hd..3 * hd]).assign(&da_o);
            dpre.slice_mut(s![.., 3 * hd..4 * hd]).assign(&da_g);
            grads.w += &dpre.t().dot(&cache.z[t]);
            grads.b += &col_sums(&dpre);
            let dz = dpre.dot(&self.w);
            dxs[t] = dz.slice(s![.., 0..self.input]).to_owned();
            dh = dz.slice(s![.., self.input..]).to_owned();
            dc = &dc * f;
        }
        Ok(dxs)
    }
}

impl Params for LstmCell {
    fn tensors(&self) -> Vec<&Mat> {
        vec![&self.w, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.w, &mut self.b]
    }
}
