//! Forward and backward kernels of the fused network operators.
//!
//! Feature maps are `(m, k, C)`: assets × time × channels, row-major.
//! Weights are `(C_out, C_in, K)`.

use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub rows: usize,
    pub time: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

/// `w[o][c][j]` rearranged to `wt[j][o][c]` so the inner loop is contiguous.
fn transpose_kernel(w: &[f64], d: ConvDims) -> Vec<f64> {
    let mut wt = vec![0.0; w.len()];
    for o in 0..d.c_out {
        for c in 0..d.c_in {
            for j in 0..d.kernel {
                wt[(j * d.c_out + o) * d.c_in + c] = w[(o * d.c_in + c) * d.kernel + j];
            }
        }
    }
    wt
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[i,τ,o] = b[o] + Σ_j Σ_c w[o,c,j] · x[i, τ - (K-1-j)·dil, c]`, zero
/// for negative time indices (left padding `(K-1)·dil`).
pub(crate) fn causal_conv_forward(x: &[f64], w: &[f64], b: &[f64], d: ConvDims, dilation: usize) -> Vec<f64> {
    let wt = transpose_kernel(w, d);
    let mut out = vec![0.0; d.rows * d.time * d.c_out];
    for i in 0..d.rows {
        for tau in 0..d.time {
            let o_base = (i * d.time + tau) * d.c_out;
            out[o_base..o_base + d.c_out].copy_from_slice(b);
            for j in 0..d.kernel {
                let lag = (d.kernel - 1 - j) * dilation;
                if lag > tau {
                    continue;
                }
                let x_base = (i * d.time + tau - lag) * d.c_in;
                let xs = &x[x_base..x_base + d.c_in];
                for o in 0..d.c_out {
                    let w_base = (j * d.c_out + o) * d.c_in;
                    out[o_base + o] += dot(&wt[w_base..w_base + d.c_in], xs);
                }
            }
        }
    }
    out
}

pub(crate) fn causal_conv_backward(x: &[f64], w: &[f64], g: &[f64], d: ConvDims, dilation: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; d.c_out];
    for i in 0..d.rows {
        for tau in 0..d.time {
            let g_base = (i * d.time + tau) * d.c_out;
            let gs = &g[g_base..g_base + d.c_out];
            for (acc, gv) in db.iter_mut().zip(gs) {
                *acc += gv;
            }
            for j in 0..d.kernel {
                let lag = (d.kernel - 1 - j) * dilation;
                if lag > tau {
                    continue;
                }
                let x_base = (i * d.time + tau - lag) * d.c_in;
                for (o, &go) in gs.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for c in 0..d.c_in {
                        let wi = (o * d.c_in + c) * d.kernel + j;
                        dx[x_base + c] += go * w[wi];
                        dw[wi] += go * x[x_base + c];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Convolution along the asset axis with kernel height `K` and SAME zero
/// padding (`pad_top = (K-1)/2`), independently at every time step:
/// `out[i,τ,o] = b[o] + Σ_j Σ_c w[o,c,j] · x[i + j - pad_top, τ, c]`.
pub(crate) fn corr_conv_forward(x: &[f64], w: &[f64], b: &[f64], d: ConvDims) -> Vec<f64> {
    let wt = transpose_kernel(w, d);
    let pad_top = (d.kernel - 1) / 2;
    let mut out = vec![0.0; d.rows * d.time * d.c_out];
    for i in 0..d.rows {
        for tau in 0..d.time {
            let o_base = (i * d.time + tau) * d.c_out;
            out[o_base..o_base + d.c_out].copy_from_slice(b);
            for j in 0..d.kernel {
                let src = i + j;
                if src < pad_top || src - pad_top >= d.rows {
                    continue;
                }
                let x_base = ((src - pad_top) * d.time + tau) * d.c_in;
                let xs = &x[x_base..x_base + d.c_in];
                for o in 0..d.c_out {
                    let w_base = (j * d.c_out + o) * d.c_in;
                    out[o_base + o] += dot(&wt[w_base..w_base + d.c_in], xs);
                }
            }
        }
    }
    out
}

pub(crate) fn corr_conv_backward(x: &[f64], w: &[f64], g: &[f64], d: ConvDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pad_top = (d.kernel - 1) / 2;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; d.c_out];
    for i in 0..d.rows {
        for tau in 0..d.time {
            let g_base = (i * d.time + tau) * d.c_out;
            let gs = &g[g_base..g_base + d.c_out];
            for (acc, gv) in db.iter_mut().zip(gs) {
                *acc += gv;
            }
            for j in 0..d.kernel {
                let src = i + j;
                if src < pad_top || src - pad_top >= d.rows {
                    continue;
                }
                let x_base = ((src - pad_top) * d.time + tau) * d.c_in;
                for (o, &go) in gs.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for c in 0..d.c_in {
                        let wi = (o * d.c_in + c) * d.kernel + j;
                        dx[x_base + c] += go * w[wi];
                        dw[wi] += go * x[x_base + c];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Valid convolution spanning the whole time axis (`K = k`), one output per
/// row: `out[i,o] = b[o] + Σ_τ Σ_c w[o,c,τ] · x[i,τ,c]`.
pub(crate) fn time_conv_forward(x: &[f64], w: &[f64], b: &[f64], d: ConvDims) -> Vec<f64> {
    let wt = transpose_kernel(w, d);
    let mut out = vec![0.0; d.rows * d.c_out];
    for i in 0..d.rows {
        let o_base = i * d.c_out;
        out[o_base..o_base + d.c_out].copy_from_slice(b);
        for tau in 0..d.time {
            let x_base = (i * d.time + tau) * d.c_in;
            let xs = &x[x_base..x_base + d.c_in];
            for o in 0..d.c_out {
                let w_base = (tau * d.c_out + o) * d.c_in;
                out[o_base + o] += dot(&wt[w_base..w_base + d.c_in], xs);
            }
        }
    }
    out
}

pub(crate) fn time_conv_backward(x: &[f64], w: &[f64], g: &[f64], d: ConvDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; d.c_out];
    for i in 0..d.rows {
        let gs = &g[i * d.c_out..(i + 1) * d.c_out];
        for (acc, gv) in db.iter_mut().zip(gs) {
            *acc += gv;
        }
        for tau in 0..d.time {
            let x_base = (i * d.time + tau) * d.c_in;
            for (o, &go) in gs.iter().enumerate() {
                for c in 0..d.c_in {
                    let wi = (o * d.c_in + c) * d.kernel + tau;
                    dx[x_base + c] += go * w[wi];
                    dw[wi] += go * x[x_base + c];
                }
            }
        }
    }
    (dx, dw, db)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-step activations kept for backpropagation through time.
#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    /// `(rows, time, 4H)`: post-activation gates i, f, g, o.
    gates: Vec<f64>,
    /// `(rows, time + 1, H)`: cell states, index 0 is the zero initial state.
    cells: Vec<f64>,
    /// `(rows, time + 1, H)`: hidden states, index 0 is zero.
    hidden: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmDims {
    pub rows: usize,
    pub time: usize,
    pub input: usize,
    pub hidden: usize,
}

/// Shared-weight LSTM over each row of `x: (rows, time, input)`, zero
/// initial state, gate order i, f, g, o. Returns the last hidden state of
/// every row, `(rows, H)`.
pub(crate) fn lstm_forward(x: &[f64], w_ih: &[f64], w_hh: &[f64], b: &[f64], d: LstmDims) -> (Vec<f64>, LstmCache) {
    let h4 = 4 * d.hidden;
    let hs = d.hidden;
    let mut gates = vec![0.0; d.rows * d.time * h4];
    let mut cells = vec![0.0; d.rows * (d.time + 1) * hs];
    let mut hidden = vec![0.0; d.rows * (d.time + 1) * hs];
    let mut z = vec![0.0; h4];
    for r in 0..d.rows {
        for t in 0..d.time {
            let xs = &x[(r * d.time + t) * d.input..(r * d.time + t + 1) * d.input];
            let h_prev_base = (r * (d.time + 1) + t) * hs;
            let h_prev = &hidden[h_prev_base..h_prev_base + hs];
            for (q, zq) in z.iter_mut().enumerate() {
                *zq = b[q] + dot(&w_ih[q * d.input..(q + 1) * d.input], xs) + dot(&w_hh[q * hs..(q + 1) * hs], h_prev);
            }
            let g_base = (r * d.time + t) * h4;
            let next = h_prev_base + hs;
            for u in 0..hs {
                let ig = sigmoid(z[u]);
                let fg = sigmoid(z[hs + u]);
                let gg = z[2 * hs + u].tanh();
                let og = sigmoid(z[3 * hs + u]);
                gates[g_base + u] = ig;
                gates[g_base + hs + u] = fg;
                gates[g_base + 2 * hs + u] = gg;
                gates[g_base + 3 * hs + u] = og;
                let c = fg * cells[h_prev_base + u] + ig * gg;
                cells[next + u] = c;
                hidden[next + u] = og * c.tanh();
            }
        }
    }
    let mut out = vec![0.0; d.rows * hs];
    for r in 0..d.rows {
        let last = (r * (d.time + 1) + d.time) * hs;
        out[r * hs..(r + 1) * hs].copy_from_slice(&hidden[last..last + hs]);
    }
    (out, LstmCache { gates, cells, hidden })
}

/// Gradients `(dx, dW_ih, dW_hh, db)` given `g = ∂L/∂h_last`.
pub(crate) fn lstm_backward(
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    cache: &LstmCache,
    g: &[f64],
    d: LstmDims,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let h4 = 4 * d.hidden;
    let hs = d.hidden;
    let mut dx = vec![0.0; x.len()];
    let mut dw_ih = vec![0.0; w_ih.len()];
    let mut dw_hh = vec![0.0; w_hh.len()];
    let mut db = vec![0.0; h4];
    let mut dz = vec![0.0; h4];
    for r in 0..d.rows {
        let mut dh = g[r * hs..(r + 1) * hs].to_vec();
        let mut dc = vec![0.0; hs];
        for t in (0..d.time).rev() {
            let g_base = (r * d.time + t) * h4;
            let prev = (r * (d.time + 1) + t) * hs;
            let cur = prev + hs;
            for u in 0..hs {
                let ig = cache.gates[g_base + u];
                let fg = cache.gates[g_base + hs + u];
                let gg = cache.gates[g_base + 2 * hs + u];
                let og = cache.gates[g_base + 3 * hs + u];
                let tc = cache.cells[cur + u].tanh();
                let d_o = dh[u] * tc;
                dc[u] += dh[u] * og * (1.0 - tc * tc);
                let d_i = dc[u] * gg;
                let d_g = dc[u] * ig;
                let d_f = dc[u] * cache.cells[prev + u];
                dz[u] = d_i * ig * (1.0 - ig);
                dz[hs + u] = d_f * fg * (1.0 - fg);
                dz[2 * hs + u] = d_g * (1.0 - gg * gg);
                dz[3 * hs + u] = d_o * og * (1.0 - og);
                dc[u] *= fg;
            }
            let xs_base = (r * d.time + t) * d.input;
            let h_prev = &cache.hidden[prev..prev + hs];
            for v in dh.iter_mut() {
                *v = 0.0;
            }
            for (q, &dzq) in dz.iter().enumerate() {
                if dzq == 0.0 {
                    continue;
                }
                db[q] += dzq;
                for c in 0..d.input {
                    dw_ih[q * d.input + c] += dzq * x[xs_base + c];
                    dx[xs_base + c] += dzq * w_ih[q * d.input + c];
                }
                for u in 0..hs {
                    dw_hh[q * hs + u] += dzq * h_prev[u];
                    dh[u] += dzq * w_hh[q * hs + u];
                }
            }
        }
    }
    (dx, dw_ih, dw_hh, db)
}

/// Inverted-dropout mask: kept units scaled by `1/(1-rate)`.
pub(crate) fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}
