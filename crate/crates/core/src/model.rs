//! The Wide & Deep classifier and its two single-component ablations.
//!
//! Wide path: z-scored continuous features concatenated with the dense
//! projection of the one-hot counts, through a 2-layer head. Deep path:
//! utterance embeddings through a BiLSTM, single-head self-attention, mean
//! pooling and a 4-layer head. The heads' log odds are summed element-wise
//! before the softmax.
//!
//! Checkpoints are a single binary container: magic `WDJM`, version, a
//! canonical-JSON header (config, seed, normalization stats, parameter
//! manifest), then raw little-endian f64 blobs in declared order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::QuestionSample;
use crate::embed::{Embedder, EmbedderSpec};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureCatalog, WideFeatures};
use crate::ops::{
    affine_backward, affine_forward, bilstm_backward, bilstm_forward, mean_pool_backward,
    mean_pool_forward, relu_backward, relu_forward, row_softmax, self_attention_backward,
    self_attention_forward, AttentionCache, AttentionParams, BilstmCache, LstmParams,
};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WDJM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    WideOnly,
    DeepOnly,
    WideDeep,
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelMode::WideOnly => "wide",
            ModelMode::DeepOnly => "deep",
            ModelMode::WideDeep => "wd",
        };
        f.write_str(name)
    }
}

/// Architecture description; every width is recorded so a checkpoint fully
/// reproduces the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideDeepConfig {
    pub num_classes: usize,
    /// Width of the dense projection of the one-hot counts.
    pub d_proj: usize,
    /// Hidden width of the 2-layer wide head.
    pub wide_hidden: usize,
    /// BiLSTM hidden size per direction.
    pub lstm_hidden: usize,
    /// Attention query/key and value width (defaults to the BiLSTM output).
    pub attn_dim: usize,
    /// Hidden widths of the 4-layer deep head (exactly 3 entries).
    pub deep_hidden: Vec<usize>,
    pub mode: ModelMode,
    pub embedder: EmbedderSpec,
    pub catalog: FeatureCatalog,
}

impl WideDeepConfig {
    pub fn new(num_classes: usize, mode: ModelMode) -> Self {
        let lstm_hidden = 64;
        WideDeepConfig {
            num_classes,
            d_proj: 64,
            wide_hidden: 64,
            lstm_hidden,
            attn_dim: 2 * lstm_hidden,
            deep_hidden: vec![128, 64, 32],
            mode,
            embedder: EmbedderSpec::default(),
            catalog: FeatureCatalog::default(),
        }
    }

    pub fn with_lstm_hidden(mut self, hidden: usize) -> Self {
        self.lstm_hidden = hidden;
        self.attn_dim = 2 * hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.deep_hidden.len() != 3 {
            return Err(Error::Config(format!(
                "deep head needs exactly 3 hidden widths (4 affine layers), got {}",
                self.deep_hidden.len()
            )));
        }
        if self.d_proj == 0 || self.wide_hidden == 0 || self.lstm_hidden == 0 || self.attn_dim == 0
        {
            return Err(Error::Config("zero-width layer".into()));
        }
        self.embedder.validate()?;
        self.catalog.validate()
    }

    /// Width of the wide head input: 13 continuous + projected counts.
    pub fn x_wide_len(&self) -> usize {
        self.catalog.continuous.len() + self.d_proj
    }
}

/// All learnable parameters plus the extraction/normalization state needed
/// to reproduce predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct WideDeepModel {
    pub config: WideDeepConfig,
    /// Seed the parameters were initialized with.
    pub seed: u64,
    /// Train-split mean of each continuous feature.
    pub norm_mean: Vec<f64>,
    /// Train-split standard deviation; 0 passes the feature through as 0.
    pub norm_std: Vec<f64>,
    pub proj: Tensor,
    pub wide1_w: Tensor,
    pub wide1_b: Tensor,
    pub wide2_w: Tensor,
    pub wide2_b: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    pub attn: AttentionParams,
    pub deep: Vec<(Tensor, Tensor)>,
}

fn init_uniform(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let fan_in = shape[0].max(1);
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.range(-bound, bound)).collect())
        .expect("shape/product consistent")
}

impl WideDeepModel {
    /// Seeded initialization: `uniform(±1/√fan_in)` weights, zero biases.
    pub fn init(config: WideDeepConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed).substream("model-init");
        let k = config.num_classes;
        let x_d_len = config.catalog.x_d_len();
        let n_cont = config.catalog.continuous.len();
        let d_e = config.embedder.dim() + 2;
        let d_lstm_out = 2 * config.lstm_hidden;

        let proj = init_uniform(&mut rng, &[x_d_len, config.d_proj]);
        let wide1_w = init_uniform(&mut rng, &[config.x_wide_len(), config.wide_hidden]);
        let wide1_b = Tensor::zeros(&[config.wide_hidden]);
        let wide2_w = init_uniform(&mut rng, &[config.wide_hidden, k]);
        let wide2_b = Tensor::zeros(&[k]);

        let mut lstm = |d_in: usize| LstmParams {
            wx: init_uniform(&mut rng, &[d_in, 4 * config.lstm_hidden]),
            wh: init_uniform(&mut rng, &[config.lstm_hidden, 4 * config.lstm_hidden]),
            b: Tensor::zeros(&[4 * config.lstm_hidden]),
        };
        let lstm_fwd = lstm(d_e);
        let lstm_bwd = lstm(d_e);

        let attn = AttentionParams {
            wq: init_uniform(&mut rng, &[d_lstm_out, config.attn_dim]),
            wk: init_uniform(&mut rng, &[d_lstm_out, config.attn_dim]),
            wv: init_uniform(&mut rng, &[d_lstm_out, config.attn_dim]),
        };

        let widths: Vec<usize> = std::iter::once(config.attn_dim)
            .chain(config.deep_hidden.iter().copied())
            .chain(std::iter::once(k))
            .collect();
        let deep = widths
            .windows(2)
            .map(|w| {
                (
                    init_uniform(&mut rng, &[w[0], w[1]]),
                    Tensor::zeros(&[w[1]]),
                )
            })
            .collect();

        Ok(WideDeepModel {
            seed,
            norm_mean: vec![0.0; n_cont],
            norm_std: vec![1.0; n_cont],
            proj,
            wide1_w,
            wide1_b,
            wide2_w,
            wide2_b,
            lstm_fwd,
            lstm_bwd,
            attn,
            deep,
            config,
        })
    }

    /// Parameter tensors in the declared checkpoint order.
    pub fn param_order() -> &'static [&'static str] {
        &[
            "proj", "wide1_w", "wide1_b", "wide2_w", "wide2_b", "lstm_fwd_wx", "lstm_fwd_wh",
            "lstm_fwd_b", "lstm_bwd_wx", "lstm_bwd_wh", "lstm_bwd_b", "attn_wq", "attn_wk",
            "attn_wv", "deep0_w", "deep0_b", "deep1_w", "deep1_b", "deep2_w", "deep2_b",
            "deep3_w", "deep3_b",
        ]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.proj,
            &self.wide1_w,
            &self.wide1_b,
            &self.wide2_w,
            &self.wide2_b,
            &self.lstm_fwd.wx,
            &self.lstm_fwd.wh,
            &self.lstm_fwd.b,
            &self.lstm_bwd.wx,
            &self.lstm_bwd.wh,
            &self.lstm_bwd.b,
            &self.attn.wq,
            &self.attn.wk,
            &self.attn.wv,
        ];
        for (w, b) in &self.deep {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = vec![
            &mut self.proj,
            &mut self.wide1_w,
            &mut self.wide1_b,
            &mut self.wide2_w,
            &mut self.wide2_b,
            &mut self.lstm_fwd.wx,
            &mut self.lstm_fwd.wh,
            &mut self.lstm_fwd.b,
            &mut self.lstm_bwd.wx,
            &mut self.lstm_bwd.wh,
            &mut self.lstm_bwd.b,
            &mut self.attn.wq,
            &mut self.attn.wk,
            &mut self.attn.wv,
        ];
        for (w, b) in &mut self.deep {
            v.push(w);
            v.push(b);
        }
        v
    }

    /// Copy parameter values from an index-aligned tensor list.
    pub fn set_params(&mut self, values: &[Tensor]) {
        let mut mine = self.params_mut();
        assert_eq!(mine.len(), values.len());
        for (dst, src) in mine.iter_mut().zip(values.iter()) {
            assert_eq!(dst.shape(), src.shape());
            dst.data_mut().copy_from_slice(src.data());
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Store train-split normalization statistics.
    pub fn set_normalization(&mut self, mean: Vec<f64>, std: Vec<f64>) {
        assert_eq!(mean.len(), self.norm_mean.len());
        assert_eq!(std.len(), self.norm_std.len());
        self.norm_mean = mean;
        self.norm_std = std;
    }

    fn normalize(&self, x_c: &[f64]) -> Vec<f64> {
        x_c.iter()
            .zip(self.norm_mean.iter().zip(self.norm_std.iter()))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

/// Gradient holder mirroring [`WideDeepModel`]'s parameters; tensor values
/// are the accumulated gradients.
#[derive(Debug, Clone)]
pub struct WideDeepGrads {
    pub proj: Tensor,
    pub wide1_w: Tensor,
    pub wide1_b: Tensor,
    pub wide2_w: Tensor,
    pub wide2_b: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    pub attn: AttentionParams,
    pub deep: Vec<(Tensor, Tensor)>,
}

impl WideDeepGrads {
    pub fn zeros_like(model: &WideDeepModel) -> Self {
        let zl = |t: &Tensor| Tensor::zeros(t.shape());
        WideDeepGrads {
            proj: zl(&model.proj),
            wide1_w: zl(&model.wide1_w),
            wide1_b: zl(&model.wide1_b),
            wide2_w: zl(&model.wide2_w),
            wide2_b: zl(&model.wide2_b),
            lstm_fwd: LstmParams::zeros_like(&model.lstm_fwd),
            lstm_bwd: LstmParams::zeros_like(&model.lstm_bwd),
            attn: AttentionParams::zeros_like(&model.attn),
            deep: model.deep.iter().map(|(w, b)| (zl(w), zl(b))).collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.proj,
            &self.wide1_w,
            &self.wide1_b,
            &self.wide2_w,
            &self.wide2_b,
            &self.lstm_fwd.wx,
            &self.lstm_fwd.wh,
            &self.lstm_fwd.b,
            &self.lstm_bwd.wx,
            &self.lstm_bwd.wh,
            &self.lstm_bwd.b,
            &self.attn.wq,
            &self.attn.wk,
            &self.attn.wv,
        ];
        for (w, b) in &self.deep {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = vec![
            &mut self.proj,
            &mut self.wide1_w,
            &mut self.wide1_b,
            &mut self.wide2_w,
            &mut self.wide2_b,
            &mut self.lstm_fwd.wx,
            &mut self.lstm_fwd.wh,
            &mut self.lstm_fwd.b,
            &mut self.lstm_bwd.wx,
            &mut self.lstm_bwd.wh,
            &mut self.lstm_bwd.b,
            &mut self.attn.wq,
            &mut self.attn.wk,
            &mut self.attn.wv,
        ];
        for (w, b) in &mut self.deep {
            v.push(w);
            v.push(b);
        }
        v
    }

    /// Fixed-order accumulation of another gradient set.
    pub fn add_assign(&mut self, other: &WideDeepGrads) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.add_from(src);
        }
    }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

pub struct WideCache {
    x_wide: Tensor,
    pre1: Tensor,
    hidden: Tensor,
    hot: Vec<usize>,
}

pub struct DeepCache {
    embedded: Tensor,
    bilstm_out: Tensor,
    bilstm: BilstmCache,
    attn_out: Tensor,
    attn: AttentionCache,
    mlp_inputs: Vec<Tensor>,
    mlp_pre: Vec<Tensor>,
}

pub struct ForwardCache {
    pub wide: Option<WideCache>,
    pub deep: Option<DeepCache>,
}

/// Wide head: `softmax⁻¹`-side logits from the 25 features.
pub fn wide_forward(model: &WideDeepModel, wf: &WideFeatures) -> Result<(Tensor, WideCache)> {
    let n_cont = model.config.catalog.continuous.len();
    if wf.x_c.len() != n_cont || wf.x_d.len() != model.proj.rows() {
        return Err(Error::FeatureMismatch {
            expected: n_cont + model.proj.rows(),
            got: wf.x_c.len() + wf.x_d.len(),
        });
    }
    let z = model.normalize(&wf.x_c);
    // x_d* via row-gather: the one-hot blocks pick one projection row each
    let d_proj = model.config.d_proj;
    let mut x_wide = Tensor::zeros(&[1, n_cont + d_proj]);
    x_wide.row_mut(0)[..n_cont].copy_from_slice(&z);
    for &hot_idx in &wf.hot {
        let prow = model.proj.row(hot_idx);
        for (dst, src) in x_wide.row_mut(0)[n_cont..].iter_mut().zip(prow) {
            *dst += src;
        }
    }
    let pre1 = affine_forward(&x_wide, &model.wide1_w, &model.wide1_b)?;
    let hidden = relu_forward(&pre1);
    let logits = affine_forward(&hidden, &model.wide2_w, &model.wide2_b)?;
    Ok((
        logits,
        WideCache {
            x_wide,
            pre1,
            hidden,
            hot: wf.hot.clone(),
        },
    ))
}

pub fn wide_backward(
    model: &WideDeepModel,
    cache: &WideCache,
    d_logits: &Tensor,
    grads: &mut WideDeepGrads,
) {
    let (d_hidden, d_w2, d_b2) = affine_backward(&cache.hidden, &model.wide2_w, d_logits);
    grads.wide2_w.add_from(&d_w2);
    grads.wide2_b.add_from(&d_b2);
    let d_pre1 = relu_backward(&cache.pre1, &d_hidden);
    let (d_x_wide, d_w1, d_b1) = affine_backward(&cache.x_wide, &model.wide1_w, &d_pre1);
    grads.wide1_w.add_from(&d_w1);
    grads.wide1_b.add_from(&d_b1);
    // gradient of the gathered projection rows
    let n_cont = model.config.catalog.continuous.len();
    let d_proj_part = &d_x_wide.row(0)[n_cont..];
    for &hot_idx in &cache.hot {
        for (dst, src) in grads.proj.row_mut(hot_idx).iter_mut().zip(d_proj_part) {
            *dst += src;
        }
    }
}

/// Deep head: embeddings → BiLSTM → self-attention → mean-pool → 4-layer MLP.
pub fn deep_forward(model: &WideDeepModel, embedded: &Tensor) -> Result<(Tensor, DeepCache)> {
    if embedded.rows() == 0 {
        return Err(Error::Data("deep_forward on empty sample".into()));
    }
    let (bilstm_out, bilstm_cache) = bilstm_forward(embedded, &model.lstm_fwd, &model.lstm_bwd)?;
    let (attn_out, attn_cache) = self_attention_forward(&bilstm_out, &model.attn)?;
    let pooled = mean_pool_forward(&attn_out)?;
    let mut h = Tensor::from_vec(&[1, pooled.len()], pooled.data().to_vec())?;
    let mut mlp_inputs = Vec::with_capacity(model.deep.len());
    let mut mlp_pre = Vec::with_capacity(model.deep.len());
    let last = model.deep.len() - 1;
    for (i, (w, b)) in model.deep.iter().enumerate() {
        mlp_inputs.push(h.clone());
        let pre = affine_forward(&h, w, b)?;
        mlp_pre.push(pre.clone());
        h = if i < last { relu_forward(&pre) } else { pre };
    }
    Ok((
        h,
        DeepCache {
            embedded: embedded.clone(),
            bilstm_out,
            bilstm: bilstm_cache,
            attn_out,
            attn: attn_cache,
            mlp_inputs,
            mlp_pre,
        },
    ))
}

pub fn deep_backward(
    model: &WideDeepModel,
    cache: &DeepCache,
    d_logits: &Tensor,
    grads: &mut WideDeepGrads,
) {
    let last = model.deep.len() - 1;
    let mut d = d_logits.clone();
    for i in (0..model.deep.len()).rev() {
        if i < last {
            d = relu_backward(&cache.mlp_pre[i], &d);
        }
        let (d_in, d_w, d_b) = affine_backward(&cache.mlp_inputs[i], &model.deep[i].0, &d);
        grads.deep[i].0.add_from(&d_w);
        grads.deep[i].1.add_from(&d_b);
        d = d_in;
    }
    let d_pooled = Tensor::vector(d.row(0));
    let d_attn_out = mean_pool_backward(cache.attn_out.rows(), &d_pooled);
    let d_bilstm_out = self_attention_backward(
        &cache.bilstm_out,
        &model.attn,
        &cache.attn,
        &d_attn_out,
        &mut grads.attn,
    );
    bilstm_backward(
        &cache.embedded,
        &model.lstm_fwd,
        &model.lstm_bwd,
        &cache.bilstm,
        &d_bilstm_out,
        &mut grads.lstm_fwd,
        &mut grads.lstm_bwd,
    );
}

/// Mode-aware fused logits from precomputed inputs.
///
/// `wf` may be omitted in `DeepOnly` mode, `embedded` in `WideOnly` mode.
pub fn forward_cached(
    model: &WideDeepModel,
    wf: Option<&WideFeatures>,
    embedded: Option<&Tensor>,
) -> Result<(Tensor, ForwardCache)> {
    let k = model.config.num_classes;
    let mut logits = Tensor::zeros(&[1, k]);
    let mut cache = ForwardCache {
        wide: None,
        deep: None,
    };
    let need = |what: &str| Error::Config(format!("{} input required in {} mode", what, model.config.mode));
    if model.config.mode != ModelMode::DeepOnly {
        let wf = wf.ok_or_else(|| need("wide-feature"))?;
        let (lw, wc) = wide_forward(model, wf)?;
        logits.add_from(&lw);
        cache.wide = Some(wc);
    }
    if model.config.mode != ModelMode::WideOnly {
        let emb = embedded.ok_or_else(|| need("embedding"))?;
        let (ld, dc) = deep_forward(model, emb)?;
        logits.add_from(&ld);
        cache.deep = Some(dc);
    }
    Ok((logits, cache))
}

/// Route the fused-logit gradient into whichever heads ran.
pub fn backward_cached(
    model: &WideDeepModel,
    cache: &ForwardCache,
    d_logits: &Tensor,
    grads: &mut WideDeepGrads,
) {
    if let Some(wc) = &cache.wide {
        wide_backward(model, wc, d_logits, grads);
    }
    if let Some(dc) = &cache.deep {
        deep_backward(model, dc, d_logits, grads);
    }
}

/// End-to-end prediction for one sample: features and embeddings are
/// derived from the model's own catalog and embedder spec.
pub fn fuse_predict(
    model: &WideDeepModel,
    embedder: &Embedder,
    sample: &QuestionSample,
) -> Result<Vec<f64>> {
    let wf = if model.config.mode != ModelMode::DeepOnly {
        Some(extract(sample, &model.config.catalog)?)
    } else {
        None
    };
    let emb = if model.config.mode != ModelMode::WideOnly {
        Some(embedder.embed_sample(sample)?)
    } else {
        None
    };
    let (logits, _) = forward_cached(model, wf.as_ref(), emb.as_ref())?;
    let probs = row_softmax(&logits)?;
    Ok(probs.row(0).to_vec())
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParamInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: WideDeepConfig,
    seed: u64,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
    params: Vec<ParamInfo>,
}

pub fn save_model_bytes(model: &WideDeepModel) -> Result<Vec<u8>> {
    let params = model.params();
    let header = CheckpointHeader {
        config: model.config.clone(),
        seed: model.seed,
        norm_mean: model.norm_mean.clone(),
        norm_std: model.norm_std.clone(),
        params: WideDeepModel::param_order()
            .iter()
            .zip(params.iter())
            .map(|(name, t)| ParamInfo {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Data(format!("header: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_model_bytes(bytes: &[u8]) -> Result<WideDeepModel> {
    let mut cursor = std::io::Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| Error::Corrupted("file shorter than magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut version = [0u8; 2];
    cursor
        .read_exact(&mut version)
        .map_err(|_| Error::Corrupted("missing version".into()))?;
    let version = u16::from_le_bytes(version);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "checkpoint version {version}, supported {CHECKPOINT_VERSION}"
        )));
    }
    let mut len = [0u8; 4];
    cursor
        .read_exact(&mut len)
        .map_err(|_| Error::Corrupted("missing header length".into()))?;
    let mut header_json = vec![0u8; u32::from_le_bytes(len) as usize];
    cursor
        .read_exact(&mut header_json)
        .map_err(|_| Error::Corrupted("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Corrupted(format!("header json: {e}")))?;
    header.config.validate()?;

    let mut model = WideDeepModel::init(header.config, header.seed)?;
    model.norm_mean = header.norm_mean;
    model.norm_std = header.norm_std;
    if model.norm_mean.len() != model.config.catalog.continuous.len()
        || model.norm_std.len() != model.norm_mean.len()
    {
        return Err(Error::Corrupted("normalization stats length".into()));
    }
    {
        let mut params = model.params_mut();
        if header.params.len() != params.len() {
            return Err(Error::Corrupted(format!(
                "expected {} parameter tensors, header lists {}",
                params.len(),
                header.params.len()
            )));
        }
        for (t, info) in params.iter_mut().zip(header.params.iter()) {
            if t.shape() != info.shape.as_slice() {
                return Err(Error::Corrupted(format!(
                    "parameter {} shape {:?}, expected {:?}",
                    info.name,
                    info.shape,
                    t.shape()
                )));
            }
            let mut buf = [0u8; 8];
            for v in t.data_mut().iter_mut() {
                cursor
                    .read_exact(&mut buf)
                    .map_err(|_| Error::Corrupted(format!("truncated blob for {}", info.name)))?;
                *v = f64::from_le_bytes(buf);
            }
        }
    }
    let mut trailing = Vec::new();
    cursor.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(Error::Corrupted(format!(
            "{} trailing bytes after parameter blobs",
            trailing.len()
        )));
    }
    for t in model.params() {
        t.ensure_finite("load_model")?;
    }
    Ok(model)
}

pub fn save_model(model: &WideDeepModel, path: &Path) -> Result<()> {
    let bytes = save_model_bytes(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<WideDeepModel> {
    let bytes = std::fs::read(path)?;
    load_model_bytes(&bytes)
}
