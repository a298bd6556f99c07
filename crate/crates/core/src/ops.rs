//! Differentiable primitives with explicit forward/backward pairs.
//!
//! There is no tape: the classifier is a fixed pipeline, so every primitive
//! exposes its adjoint directly and the model wires them together by hand.
//! All forwards validate shapes and reject non-finite outputs instead of
//! letting NaNs travel.

use crate::error::{Error, Result};
use crate::tensor::{dot, matmul, matmul_at, matmul_bt, Tensor};

fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

// ---------------------------------------------------------------------------
// Affine
// ---------------------------------------------------------------------------

/// `y = x·W + b` for `x[m×d_in]`, `W[d_in×d_out]`, `b[d_out]`.
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.cols() != w.rows() {
        return Err(shape_err("affine_forward", x, w));
    }
    if b.len() != w.cols() {
        return Err(shape_err("affine_forward", w, b));
    }
    let mut y = matmul(x, w);
    for i in 0..y.rows() {
        for (v, bv) in y.row_mut(i).iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    y.ensure_finite("affine_forward")?;
    Ok(y)
}

/// Gradients of [`affine_forward`]: returns `(grad_x, grad_w, grad_b)`.
pub fn affine_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let grad_x = matmul_bt(grad_out, w);
    let grad_w = matmul_at(x, grad_out);
    let mut grad_b = Tensor::zeros(&[w.cols()]);
    for i in 0..grad_out.rows() {
        for (g, go) in grad_b.data_mut().iter_mut().zip(grad_out.row(i)) {
            *g += go;
        }
    }
    (grad_x, grad_w, grad_b)
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.grad = None;
    y.data_mut().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    y
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    g.grad = None;
    for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
        if *xv <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// One direction's LSTM weights. Gate order along the 4H axis is i, f, g, o.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[d_in × 4H]`
    pub wx: Tensor,
    /// `[H × 4H]`
    pub wh: Tensor,
    /// `[4H]`
    pub b: Tensor,
}

impl LstmParams {
    pub fn hidden_size(&self) -> usize {
        self.wh.rows()
    }

    pub fn input_size(&self) -> usize {
        self.wx.rows()
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        LstmParams {
            wx: Tensor::zeros(&[d_in, 4 * hidden]),
            wh: Tensor::zeros(&[hidden, 4 * hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn zeros_like(other: &LstmParams) -> Self {
        LstmParams::zeros(other.input_size(), other.hidden_size())
    }
}

/// Activated gate values kept for the backward pass of one step.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard LSTM cell: `c_t = f⊙c_prev + i⊙g`, `h_t = o⊙tanh(c_t)`.
///
/// `preact` must already hold `x_t·Wx + h_prev·Wh + b` for the four gates.
fn lstm_step_from_preact(
    preact: &[f64],
    c_prev: &[f64],
    hidden: usize,
) -> (Vec<f64>, Vec<f64>, LstmStepCache) {
    let mut i = vec![0.0; hidden];
    let mut f = vec![0.0; hidden];
    let mut g = vec![0.0; hidden];
    let mut o = vec![0.0; hidden];
    for j in 0..hidden {
        i[j] = sigmoid(preact[j]);
        f[j] = sigmoid(preact[hidden + j]);
        g[j] = preact[2 * hidden + j].tanh();
        o[j] = sigmoid(preact[3 * hidden + j]);
    }
    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = o[j] * tanh_c[j];
    }
    let cache = LstmStepCache {
        i,
        f,
        g,
        o,
        c_prev: c_prev.to_vec(),
        c: c.clone(),
        tanh_c,
    };
    (h, c, cache)
}

/// Single LSTM cell step from raw inputs. Returns `(h_t, c_t, cache)`.
pub fn lstm_cell_forward(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmParams,
) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
    let hidden = p.hidden_size();
    if x_t.len() != p.input_size() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::Shape {
            op: "lstm_cell_forward",
            lhs: vec![x_t.len(), h_prev.len(), c_prev.len()],
            rhs: vec![p.input_size(), hidden, hidden],
        });
    }
    // accumulate x·Wx first, then add b, then h·Wh: the exact operation
    // order the bilstm scan uses, so a length-1 scan is bitwise identical
    let mut xsum = vec![0.0f64; 4 * hidden];
    for (col, &xv) in x_t.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (pa, wv) in xsum.iter_mut().zip(p.wx.row(col)) {
            *pa += xv * wv;
        }
    }
    let mut preact = p.b.data().to_vec();
    for (pa, xv) in preact.iter_mut().zip(xsum.iter()) {
        *pa += xv;
    }
    for (col, &hv) in h_prev.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        for (pa, wv) in preact.iter_mut().zip(p.wh.row(col)) {
            *pa += hv * wv;
        }
    }
    let (h, c, cache) = lstm_step_from_preact(&preact, c_prev, hidden);
    if h.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            op: "lstm_cell_forward",
            msg: "non-finite state".into(),
        });
    }
    Ok((h, c, cache))
}

/// Adjoint of one cell step.
///
/// Takes the incoming `dh`, the recurrent `dc` from the next step, the cached
/// gate activations and the step inputs; accumulates parameter gradients into
/// `grads` and returns `(dx_t, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_backward(
    x_t: &[f64],
    h_prev: &[f64],
    cache: &LstmStepCache,
    dh: &[f64],
    dc_next: &[f64],
    p: &LstmParams,
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = p.hidden_size();
    let mut da = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for j in 0..hidden {
        let do_ = dh[j] * cache.tanh_c[j];
        let dc = dc_next[j] + dh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
        let di = dc * cache.g[j];
        let df = dc * cache.c_prev[j];
        let dg = dc * cache.i[j];
        dc_prev[j] = dc * cache.f[j];
        da[j] = di * cache.i[j] * (1.0 - cache.i[j]);
        da[hidden + j] = df * cache.f[j] * (1.0 - cache.f[j]);
        da[2 * hidden + j] = dg * (1.0 - cache.g[j] * cache.g[j]);
        da[3 * hidden + j] = do_ * cache.o[j] * (1.0 - cache.o[j]);
    }
    // dWx += x^T da, dWh += h_prev^T da, db += da
    for (col, &xv) in x_t.iter().enumerate() {
        if xv != 0.0 {
            for (gw, &dav) in grads.wx.row_mut(col).iter_mut().zip(da.iter()) {
                *gw += xv * dav;
            }
        }
    }
    for (col, &hv) in h_prev.iter().enumerate() {
        if hv != 0.0 {
            for (gw, &dav) in grads.wh.row_mut(col).iter_mut().zip(da.iter()) {
                *gw += hv * dav;
            }
        }
    }
    for (gb, &dav) in grads.b.data_mut().iter_mut().zip(da.iter()) {
        *gb += dav;
    }
    let mut dx = vec![0.0; p.input_size()];
    for (col, dv) in dx.iter_mut().enumerate() {
        *dv = dot(p.wx.row(col), &da);
    }
    let mut dh_prev = vec![0.0; hidden];
    for (col, dv) in dh_prev.iter_mut().enumerate() {
        *dv = dot(p.wh.row(col), &da);
    }
    (dx, dh_prev, dc_prev)
}

/// Everything the BiLSTM backward pass needs to replay the scan.
pub struct BilstmCache {
    fwd_steps: Vec<LstmStepCache>,
    bwd_steps: Vec<LstmStepCache>,
    /// h states with the initial zero state prepended, per direction.
    fwd_h: Vec<Vec<f64>>,
    bwd_h: Vec<Vec<f64>>,
}

/// Bidirectional scan: output row `t` is `[h_fwd_t ⊕ h_bwd_t]`, shape `[n×2H]`.
pub fn bilstm_forward(
    seq: &Tensor,
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<(Tensor, BilstmCache)> {
    let n = seq.rows();
    if n == 0 || seq.is_empty() {
        return Err(Error::Data("bilstm on empty sequence".into()));
    }
    let hidden = fwd.hidden_size();
    if bwd.hidden_size() != hidden || fwd.input_size() != seq.cols() || bwd.input_size() != seq.cols()
    {
        return Err(shape_err("bilstm_forward", seq, &fwd.wx));
    }
    // x·Wx for every timestep at once, per direction.
    let xf = matmul(seq, &fwd.wx);
    let xb = matmul(seq, &bwd.wx);

    let run = |xw: &Tensor, p: &LstmParams, order: Vec<usize>| -> Result<(Vec<LstmStepCache>, Vec<Vec<f64>>)> {
        let mut steps = Vec::with_capacity(n);
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        hs.push(vec![0.0; hidden]);
        let mut c = vec![0.0; hidden];
        for &t in &order {
            let h_prev = hs.last().unwrap().clone();
            let mut preact = p.b.data().to_vec();
            for (pa, xv) in preact.iter_mut().zip(xw.row(t)) {
                *pa += xv;
            }
            for (col, &hv) in h_prev.iter().enumerate() {
                if hv != 0.0 {
                    for (pa, wv) in preact.iter_mut().zip(p.wh.row(col)) {
                        *pa += hv * wv;
                    }
                }
            }
            let (h, c_new, cache) = lstm_step_from_preact(&preact, &c, hidden);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    op: "bilstm_forward",
                    msg: "non-finite hidden state".into(),
                });
            }
            c = c_new;
            hs.push(h);
            steps.push(cache);
        }
        Ok((steps, hs))
    };

    let (fwd_steps, fwd_h) = run(&xf, fwd, (0..n).collect())?;
    let (bwd_steps, bwd_h) = run(&xb, bwd, (0..n).rev().collect())?;

    let mut out = Tensor::zeros(&[n, 2 * hidden]);
    for t in 0..n {
        let row = out.row_mut(t);
        row[..hidden].copy_from_slice(&fwd_h[t + 1]);
        // bwd_h[k+1] is the state after processing timestep n-1-k
        row[hidden..].copy_from_slice(&bwd_h[n - t]);
    }
    Ok((
        out,
        BilstmCache {
            fwd_steps,
            bwd_steps,
            fwd_h,
            bwd_h,
        },
    ))
}

/// Unwind one direction's scan: gate gradients are computed step by step
/// (the `dh_prev` recursion is inherently sequential) but the parameter and
/// input gradients are deferred into whole-sequence matmuls.
#[allow(clippy::too_many_arguments)]
fn lstm_direction_backward(
    seq: &Tensor,
    d_out: &Tensor,
    p: &LstmParams,
    steps: &[LstmStepCache],
    hs: &[Vec<f64>],
    reverse: bool,
    half: usize,
    grads: &mut LstmParams,
    d_seq: &mut Tensor,
) {
    let n = seq.rows();
    let hidden = p.hidden_size();
    let mut da_mat = Tensor::zeros(&[n, 4 * hidden]);
    let mut hprev_mat = Tensor::zeros(&[n, hidden]);
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for k in (0..n).rev() {
        let t = if reverse { n - 1 - k } else { k };
        let cache = &steps[k];
        let mut da = vec![0.0; 4 * hidden];
        let d_row = &d_out.row(t)[half * hidden..(half + 1) * hidden];
        let mut dc_prev = vec![0.0; hidden];
        for j in 0..hidden {
            let dh = d_row[j] + dh_next[j];
            let do_ = dh * cache.tanh_c[j];
            let dc = dc_next[j] + dh * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
            let di = dc * cache.g[j];
            let df = dc * cache.c_prev[j];
            let dg = dc * cache.i[j];
            dc_prev[j] = dc * cache.f[j];
            da[j] = di * cache.i[j] * (1.0 - cache.i[j]);
            da[hidden + j] = df * cache.f[j] * (1.0 - cache.f[j]);
            da[2 * hidden + j] = dg * (1.0 - cache.g[j] * cache.g[j]);
            da[3 * hidden + j] = do_ * cache.o[j] * (1.0 - cache.o[j]);
        }
        for (col, dv) in dh_next.iter_mut().enumerate() {
            *dv = dot(p.wh.row(col), &da);
        }
        dc_next = dc_prev;
        da_mat.row_mut(t).copy_from_slice(&da);
        hprev_mat.row_mut(t).copy_from_slice(&hs[k]);
    }
    grads.wx.add_from(&matmul_at(seq, &da_mat));
    grads.wh.add_from(&matmul_at(&hprev_mat, &da_mat));
    for t in 0..n {
        for (gb, &dav) in grads.b.data_mut().iter_mut().zip(da_mat.row(t)) {
            *gb += dav;
        }
    }
    d_seq.add_from(&matmul_bt(&da_mat, &p.wx));
}

/// Adjoint of [`bilstm_forward`]: returns `d_seq` and accumulates into the
/// two parameter-gradient holders.
pub fn bilstm_backward(
    seq: &Tensor,
    fwd: &LstmParams,
    bwd: &LstmParams,
    cache: &BilstmCache,
    d_out: &Tensor,
    gfwd: &mut LstmParams,
    gbwd: &mut LstmParams,
) -> Tensor {
    let n = seq.rows();
    let mut d_seq = Tensor::zeros(&[n, seq.cols()]);
    lstm_direction_backward(
        seq,
        d_out,
        fwd,
        &cache.fwd_steps,
        &cache.fwd_h,
        false,
        0,
        gfwd,
        &mut d_seq,
    );
    lstm_direction_backward(
        seq,
        d_out,
        bwd,
        &cache.bwd_steps,
        &cache.bwd_h,
        true,
        1,
        gbwd,
        &mut d_seq,
    );
    d_seq
}

// ---------------------------------------------------------------------------
// Self-attention
// ---------------------------------------------------------------------------

/// Single-head scaled dot-product projections.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `[d × d_k]`
    pub wq: Tensor,
    /// `[d × d_k]`
    pub wk: Tensor,
    /// `[d × d_v]`
    pub wv: Tensor,
}

impl AttentionParams {
    pub fn zeros(d: usize, d_k: usize, d_v: usize) -> Self {
        AttentionParams {
            wq: Tensor::zeros(&[d, d_k]),
            wk: Tensor::zeros(&[d, d_k]),
            wv: Tensor::zeros(&[d, d_v]),
        }
    }

    pub fn zeros_like(p: &AttentionParams) -> Self {
        AttentionParams::zeros(p.wq.rows(), p.wq.cols(), p.wv.cols())
    }
}

pub struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Tensor,
}

/// `softmax(QKᵀ/√d_k)·V` over all positions of one sequence, shape `[n×d_v]`.
pub fn self_attention_forward(
    h: &Tensor,
    p: &AttentionParams,
) -> Result<(Tensor, AttentionCache)> {
    if h.rows() == 0 {
        return Err(Error::Data("self_attention on empty sequence".into()));
    }
    if h.cols() != p.wq.rows() {
        return Err(shape_err("self_attention_forward", h, &p.wq));
    }
    let q = matmul(h, &p.wq);
    let k = matmul(h, &p.wk);
    let v = matmul(h, &p.wv);
    let scale = 1.0 / (p.wq.cols() as f64).sqrt();
    let mut scores = matmul_bt(&q, &k);
    scores.data_mut().iter_mut().for_each(|s| *s *= scale);
    let attn = row_softmax(&scores)?;
    let out = matmul(&attn, &v);
    out.ensure_finite("self_attention_forward")?;
    Ok((out, AttentionCache { q, k, v, attn }))
}

/// Adjoint of [`self_attention_forward`]: returns `d_h` and accumulates the
/// three projection gradients.
pub fn self_attention_backward(
    h: &Tensor,
    p: &AttentionParams,
    cache: &AttentionCache,
    d_out: &Tensor,
    grads: &mut AttentionParams,
) -> Tensor {
    let scale = 1.0 / (p.wq.cols() as f64).sqrt();
    let dv = matmul_at(&cache.attn, d_out);
    let d_attn = matmul_bt(d_out, &cache.v);
    // softmax rows: ds = a ⊙ (da − <a, da>)
    let n = cache.attn.rows();
    let mut d_scores = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let a = cache.attn.row(i);
        let da = d_attn.row(i);
        let inner = dot(a, da);
        for (j, out) in d_scores.row_mut(i).iter_mut().enumerate() {
            *out = a[j] * (da[j] - inner) * scale;
        }
    }
    let dq = matmul(&d_scores, &cache.k);
    let dk = matmul_at(&d_scores, &cache.q);
    grads.wq.add_from(&matmul_at(h, &dq));
    grads.wk.add_from(&matmul_at(h, &dk));
    grads.wv.add_from(&matmul_at(h, &dv));
    let mut dh = matmul_bt(&dq, &p.wq);
    let dh_k = matmul_bt(&dk, &p.wk);
    let dh_v = matmul_bt(&dv, &p.wv);
    for ((a, b), c) in dh
        .data_mut()
        .iter_mut()
        .zip(dh_k.data())
        .zip(dh_v.data())
    {
        *a += b + c;
    }
    dh
}

// ---------------------------------------------------------------------------
// Pooling, softmax, loss
// ---------------------------------------------------------------------------

/// Column-wise mean of `[n×d]`, shape `[d]`.
pub fn mean_pool_forward(q: &Tensor) -> Result<Tensor> {
    let n = q.rows();
    if n == 0 || q.is_empty() {
        return Err(Error::Data("mean_pool on empty sequence".into()));
    }
    let d = q.cols();
    let mut out = Tensor::zeros(&[d]);
    for i in 0..n {
        for (o, v) in out.data_mut().iter_mut().zip(q.row(i)) {
            *o += v;
        }
    }
    out.data_mut().iter_mut().for_each(|v| *v /= n as f64);
    Ok(out)
}

/// Adjoint of [`mean_pool_forward`].
pub fn mean_pool_backward(n: usize, d_out: &Tensor) -> Tensor {
    let d = d_out.len();
    let mut g = Tensor::zeros(&[n, d]);
    let inv = 1.0 / n as f64;
    for i in 0..n {
        for (o, v) in g.row_mut(i).iter_mut().zip(d_out.data()) {
            *o = v * inv;
        }
    }
    g
}

/// Max-subtracted row softmax.
pub fn row_softmax(logits: &Tensor) -> Result<Tensor> {
    let mut out = logits.clone();
    out.grad = None;
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out.ensure_finite("row_softmax")?;
    Ok(out)
}

/// Mean cross-entropy over the batch with a numerically stable log-sum-exp.
///
/// Returns `(loss, grad_logits)` where `grad = (softmax(logits) − onehot)/m`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let m = logits.rows();
    let k = logits.cols();
    if labels.len() != m {
        return Err(Error::Data(format!(
            "softmax_xent: {} logit rows vs {} labels",
            m,
            labels.len()
        )));
    }
    for &y in labels {
        if y >= k {
            return Err(Error::Label {
                label: y,
                num_classes: k,
            });
        }
    }
    let mut grad = Tensor::zeros(&[m, k]);
    let mut loss = 0.0;
    for i in 0..m {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - row[labels[i]];
        let grow = grad.row_mut(i);
        for (j, g) in grow.iter_mut().enumerate() {
            *g = (row[j] - log_z).exp() / m as f64;
        }
        grow[labels[i]] -= 1.0 / m as f64;
    }
    loss /= m as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            op: "softmax_xent",
            msg: format!("non-finite loss {loss}"),
        });
    }
    Ok((loss, grad))
}
