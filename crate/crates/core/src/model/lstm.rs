//! Batched LSTM layer with hand-written forward and backward passes.
//!
//! Shapes: inputs per step are `(batch, in)`, hidden state `(batch, width)`,
//! gate pre-activations `(batch, 4 * width)` in gate order
//! `[input, forget, candidate, output]`. Initial hidden and cell states are
//! zero. The backward pass is ordinary backpropagation through time; it
//! receives an external gradient on every step's hidden output (the decoder
//! only feeds the last step, upper layers feed all steps) and returns
//! parameter gradients plus the gradient on each step's input.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Views into the flat parameter vector for one layer.
pub(crate) struct LayerParams<'a> {
    pub wx: ArrayView2<'a, f64>,
    pub wh: ArrayView2<'a, f64>,
    pub b: ArrayView1<'a, f64>,
}

pub(crate) struct StepCache {
    x: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c_prev: Array2<f64>,
    h_prev: Array2<f64>,
    tanh_c: Array2<f64>,
}

pub(crate) struct LayerCache {
    steps: Vec<StepCache>,
    batch: usize,
    width: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the layer over all steps; returns the per-step hidden outputs and
/// the cache needed by [`lstm_layer_backward`].
pub(crate) fn lstm_layer_forward(
    params: &LayerParams,
    xs: &[Array2<f64>],
) -> (Vec<Array2<f64>>, LayerCache) {
    let batch = xs.first().map(|x| x.nrows()).unwrap_or(0);
    let width = params.wh.nrows();
    let mut h = Array2::<f64>::zeros((batch, width));
    let mut c = Array2::<f64>::zeros((batch, width));
    let mut hs = Vec::with_capacity(xs.len());
    let mut steps = Vec::with_capacity(xs.len());

    for x in xs {
        let mut gates = x.dot(&params.wx) + h.dot(&params.wh);
        gates += &params.b;

        let i = gates.slice(ndarray::s![.., 0..width]).mapv(sigmoid);
        let f = gates.slice(ndarray::s![.., width..2 * width]).mapv(sigmoid);
        let g = gates.slice(ndarray::s![.., 2 * width..3 * width]).mapv(f64::tanh);
        let o = gates.slice(ndarray::s![.., 3 * width..4 * width]).mapv(sigmoid);

        let c_prev = c.clone();
        let h_prev = h.clone();
        c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        h = &o * &tanh_c;

        hs.push(h.clone());
        steps.push(StepCache {
            x: x.clone(),
            i,
            f,
            g,
            o,
            c_prev,
            h_prev,
            tanh_c,
        });
    }
    (hs, LayerCache { steps, batch, width })
}

pub(crate) struct LayerGradients {
    pub dwx: Array2<f64>,
    pub dwh: Array2<f64>,
    pub db: Array1<f64>,
    /// Gradient on each step's input, for the layer below.
    pub dxs: Vec<Array2<f64>>,
}

/// Backpropagation through time for one layer. `dh_ext[t]` is the gradient
/// arriving at the hidden output of step `t` from outside the layer.
pub(crate) fn lstm_layer_backward(
    params: &LayerParams,
    cache: &LayerCache,
    dh_ext: &[Array2<f64>],
) -> LayerGradients {
    let width = cache.width;
    let in_dim = params.wx.nrows();
    let mut dwx = Array2::<f64>::zeros((in_dim, 4 * width));
    let mut dwh = Array2::<f64>::zeros((width, 4 * width));
    let mut db = Array1::<f64>::zeros(4 * width);
    let mut dxs = vec![Array2::<f64>::zeros((cache.batch, in_dim)); cache.steps.len()];

    let mut dh_next = Array2::<f64>::zeros((cache.batch, width));
    let mut dc_next = Array2::<f64>::zeros((cache.batch, width));

    for (t, step) in cache.steps.iter().enumerate().rev() {
        let dh = &dh_ext[t] + &dh_next;

        let d_o = &dh * &step.tanh_c;
        let dc = &dh * &step.o * &step.tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;

        let d_i = &dc * &step.g;
        let d_f = &dc * &step.c_prev;
        let d_g = &dc * &step.i;
        dc_next = &dc * &step.f;

        // Through the gate nonlinearities to the pre-activations.
        let da_i = d_i * &step.i * &step.i.mapv(|v| 1.0 - v);
        let da_f = d_f * &step.f * &step.f.mapv(|v| 1.0 - v);
        let da_g = d_g * &step.g.mapv(|v| 1.0 - v * v);
        let da_o = d_o * &step.o * &step.o.mapv(|v| 1.0 - v);

        let mut da = Array2::<f64>::zeros((cache.batch, 4 * width));
        da.slice_mut(ndarray::s![.., 0..width]).assign(&da_i);
        da.slice_mut(ndarray::s![.., width..2 * width]).assign(&da_f);
        da.slice_mut(ndarray::s![.., 2 * width..3 * width]).assign(&da_g);
        da.slice_mut(ndarray::s![.., 3 * width..4 * width]).assign(&da_o);

        dwx += &step.x.t().dot(&da);
        dwh += &step.h_prev.t().dot(&da);
        db += &da.sum_axis(Axis(0));

        dxs[t] = da.dot(&params.wx.t());
        dh_next = da.dot(&params.wh.t());
    }

    LayerGradients { dwx, dwh, db, dxs }
}
