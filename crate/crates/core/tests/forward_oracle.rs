//! Independent forward-pass oracle: the whole fused prediction is
//! recomputed here with plain nested loops over the checkpoint's parameter
//! tensors, sharing no code with the library's ops, and compared against
//! `fuse_predict` on a seeded trained model.

use wdjm_core::corpus::Dataset;
use wdjm_core::embed::{Embedder, EmbedderSpec};
use wdjm_core::features::{extract, WideFeatures};
use wdjm_core::model::{fuse_predict, ModelMode, WideDeepConfig, WideDeepModel};
use wdjm_core::ops::LstmParams;
use wdjm_core::synth::{generate_synthetic, SynthConfig};
use wdjm_core::tensor::Tensor;
use wdjm_core::train::{train, TrainConfig};

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn vec_mat(v: &[f64], m: &Mat) -> Vec<f64> {
    let cols = m[0].len();
    let mut out = vec![0.0; cols];
    for (x, row) in v.iter().zip(m.iter()) {
        for (o, w) in out.iter_mut().zip(row.iter()) {
            *o += x * w;
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm_scan(inputs: &[Vec<f64>], p: &LstmParams, hidden: usize) -> Vec<Vec<f64>> {
    let wx = to_mat(&p.wx);
    let wh = to_mat(&p.wh);
    let b = p.b.data().to_vec();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut states = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut pre = b.clone();
        for (pa, v) in pre.iter_mut().zip(vec_mat(x, &wx)) {
            *pa += v;
        }
        for (pa, v) in pre.iter_mut().zip(vec_mat(&h, &wh)) {
            *pa += v;
        }
        let mut h_new = vec![0.0; hidden];
        let mut c_new = vec![0.0; hidden];
        for j in 0..hidden {
            let i_g = sigmoid(pre[j]);
            let f_g = sigmoid(pre[hidden + j]);
            let g_g = pre[2 * hidden + j].tanh();
            let o_g = sigmoid(pre[3 * hidden + j]);
            c_new[j] = f_g * c[j] + i_g * g_g;
            h_new[j] = o_g * c_new[j].tanh();
        }
        h = h_new.clone();
        c = c_new;
        states.push(h_new);
    }
    states
}

fn row_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn naive_forward(model: &WideDeepModel, wf: &WideFeatures, embedded: &Tensor) -> Vec<f64> {
    let cfg = &model.config;
    let k = cfg.num_classes;
    let hidden = cfg.lstm_hidden;

    // wide head
    let z: Vec<f64> = wf
        .x_c
        .iter()
        .zip(model.norm_mean.iter().zip(model.norm_std.iter()))
        .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
        .collect();
    let proj = to_mat(&model.proj);
    let mut dense = vec![0.0; cfg.d_proj];
    for &hot in &wf.hot {
        for (d, w) in dense.iter_mut().zip(proj[hot].iter()) {
            *d += w;
        }
    }
    let mut x_wide = z;
    x_wide.extend(dense);
    let mut h1 = vec_mat(&x_wide, &to_mat(&model.wide1_w));
    for (v, b) in h1.iter_mut().zip(model.wide1_b.data()) {
        *v = (*v + b).max(0.0);
    }
    let mut wide_logits = vec_mat(&h1, &to_mat(&model.wide2_w));
    for (v, b) in wide_logits.iter_mut().zip(model.wide2_b.data()) {
        *v += b;
    }

    // deep head
    let rows: Vec<Vec<f64>> = (0..embedded.rows()).map(|i| embedded.row(i).to_vec()).collect();
    let fwd_states = lstm_scan(&rows, &model.lstm_fwd, hidden);
    let rev_rows: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
    let bwd_states = lstm_scan(&rev_rows, &model.lstm_bwd, hidden);
    let n = rows.len();
    let h_seq: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let mut row = fwd_states[t].clone();
            row.extend(bwd_states[n - 1 - t].clone());
            row
        })
        .collect();

    let wq = to_mat(&model.attn.wq);
    let wk = to_mat(&model.attn.wk);
    let wv = to_mat(&model.attn.wv);
    let q: Vec<Vec<f64>> = h_seq.iter().map(|h| vec_mat(h, &wq)).collect();
    let key: Vec<Vec<f64>> = h_seq.iter().map(|h| vec_mat(h, &wk)).collect();
    let v: Vec<Vec<f64>> = h_seq.iter().map(|h| vec_mat(h, &wv)).collect();
    let scale = 1.0 / (cfg.attn_dim as f64).sqrt();
    let mut pooled = vec![0.0; cfg.attn_dim];
    for qi in &q {
        let scores: Vec<f64> = key
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let attn = row_softmax(&scores);
        for (j, &a) in attn.iter().enumerate() {
            for (p, &vv) in pooled.iter_mut().zip(v[j].iter()) {
                *p += a * vv / n as f64;
            }
        }
    }

    let mut h = pooled;
    let last = model.deep.len() - 1;
    for (i, (w, b)) in model.deep.iter().enumerate() {
        let mut next = vec_mat(&h, &to_mat(w));
        for (val, bias) in next.iter_mut().zip(b.data()) {
            *val += bias;
            if i < last {
                *val = val.max(0.0);
            }
        }
        h = next;
    }
    let deep_logits = h;

    let fused: Vec<f64> = (0..k).map(|i| wide_logits[i] + deep_logits[i]).collect();
    row_softmax(&fused)
}

#[test]
fn fuse_predict_matches_independent_forward() {
    // small seeded corpus, briefly trained so the parameters are generic
    let cfg = SynthConfig {
        n_samples: 120,
        num_classes: 3,
        ..SynthConfig::default()
    };
    let (ds, _) = generate_synthetic(&cfg, 77).unwrap();
    let mut mcfg = WideDeepConfig::new(3, ModelMode::WideDeep).with_lstm_hidden(6);
    mcfg.d_proj = 5;
    mcfg.wide_hidden = 7;
    mcfg.deep_hidden = vec![9, 6, 5];
    mcfg.embedder = EmbedderSpec::hashed(11);
    let tc = TrainConfig {
        max_epochs: 3,
        patience: 2,
        batch_size: 32,
        deterministic: true,
        seed: 13,
        ..TrainConfig::default()
    };
    let (model, _) = train(&ds, &ds, &mcfg, &tc).unwrap();
    let embedder = Embedder::new(model.config.embedder.clone()).unwrap();

    let check = |ds: &Dataset| {
        for sample in ds.samples.iter().take(25) {
            let library = fuse_predict(&model, &embedder, sample).unwrap();
            let wf = extract(sample, &model.config.catalog).unwrap();
            let emb = embedder.embed_sample(sample).unwrap();
            let oracle = naive_forward(&model, &wf, &emb);
            for (a, b) in library.iter().zip(oracle.iter()) {
                assert!(
                    (a - b).abs() < 1e-12,
                    "{}: {library:?} vs {oracle:?}",
                    sample.sample_id
                );
            }
        }
    };
    check(&ds);
}
