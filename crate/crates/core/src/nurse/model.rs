//! The three-branch fusion network: forward and backward passes on plain
//! `Vec<f64>` tensors.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, MFE_LEN, SFE_LEN};

/// Which feature branches feed the fusion layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Branches {
    pub mfe: bool,
    pub sfe: bool,
    pub tfe: bool,
}

impl Branches {
    pub const ALL: Branches = Branches {
        mfe: true,
        sfe: true,
        tfe: true,
    };

    /// The seven non-empty subsets, single branches first.
    pub fn subsets() -> Vec<Branches> {
        let b = |mfe, sfe, tfe| Branches { mfe, sfe, tfe };
        vec![
            b(true, false, false),
            b(false, true, false),
            b(false, false, true),
            b(true, true, false),
            b(true, false, true),
            b(false, true, true),
            Branches::ALL,
        ]
    }

    pub fn label(self) -> String {
        if self == Branches::ALL {
            return "NURSE".into();
        }
        let parts: Vec<&str> = [(self.mfe, "MFE"), (self.sfe, "SFE"), (self.tfe, "TFE")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        parts.join("+")
    }

    pub fn is_empty(self) -> bool {
        !(self.mfe || self.sfe || self.tfe)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NurseConfig {
    pub embedding_dim: usize,
    pub conv_channels: usize,
    pub conv_filter: usize,
    pub tfe_fc: usize,
    pub sfe_fc: usize,
    pub sfe_dropout: f64,
    pub mfe_fc: usize,
    pub mfe_dropout: f64,
    pub fusion_fc: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub branches: Branches,
    /// Weight each example inversely to its class frequency.
    pub class_weighted: bool,
}

impl NurseConfig {
    pub fn new(embedding_dim: usize) -> Self {
        NurseConfig {
            embedding_dim,
            conv_channels: 32,
            conv_filter: 2,
            tfe_fc: 64,
            sfe_fc: 32,
            sfe_dropout: 0.3,
            mfe_fc: 16,
            mfe_dropout: 0.25,
            fusion_fc: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            branches: Branches::ALL,
            class_weighted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        let sizes = [
            self.conv_channels,
            self.conv_filter,
            self.tfe_fc,
            self.sfe_fc,
            self.mfe_fc,
            self.fusion_fc,
            self.batch_size,
        ];
        if sizes.contains(&0) {
            return bad("layer sizes and batch size must be positive");
        }
        if self.branches.tfe && self.embedding_dim < self.conv_filter {
            return bad("embedding dimension shorter than the convolution filter");
        }
        for p in [self.sfe_dropout, self.mfe_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad("dropout rates must lie in [0, 1)");
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.branches.is_empty() {
            return bad("at least one branch is required");
        }
        Ok(())
    }

    /// Width of the concatenated branch outputs.
    pub fn fusion_inputs(&self) -> usize {
        let b = self.branches;
        usize::from(b.tfe) * self.tfe_fc + usize::from(b.sfe) * self.sfe_fc + usize::from(b.mfe) * self.mfe_fc
    }
}

/// Fully connected layer, `w` row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn he(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        Dense {
            inputs,
            outputs,
            w: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.inputs)
            .zip(&self.b)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, want_dx: bool) -> Vec<f64> {
        let mut dx = if want_dx { vec![0.0; self.inputs] } else { Vec::new() };
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = o * self.inputs..(o + 1) * self.inputs;
            for (gw, xi) in grad.w[row.clone()].iter_mut().zip(x) {
                *gw += g * xi;
            }
            if want_dx {
                for (d, w) in dx.iter_mut().zip(&self.w[row]) {
                    *d += g * w;
                }
            }
        }
        dx
    }
}

/// Single-input-channel 1-D convolution without padding; `w` is
/// `channels x width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub channels: usize,
    pub width: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv1d {
    fn zeros(channels: usize, width: usize) -> Self {
        Conv1d {
            channels,
            width,
            w: vec![0.0; channels * width],
            b: vec![0.0; channels],
        }
    }

    fn he(channels: usize, width: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / width as f64).sqrt()).expect("positive std");
        Conv1d {
            channels,
            width,
            w: (0..channels * width).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; channels],
        }
    }

    /// ReLU then global max-pool for every channel: `(pooled, argmax)`.
    fn forward_pool(&self, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let len = x.len() + 1 - self.width;
        let mut pooled = Vec::with_capacity(self.channels);
        let mut arg = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let w = &self.w[c * self.width..(c + 1) * self.width];
            let (mut best, mut best_t) = (f64::NEG_INFINITY, 0);
            for t in 0..len {
                let z = self.b[c] + w.iter().zip(&x[t..]).map(|(w, x)| w * x).sum::<f64>();
                if z > best {
                    best = z;
                    best_t = t;
                }
            }
            // relu and max commute
            pooled.push(best.max(0.0));
            arg.push(best_t);
        }
        (pooled, arg)
    }
}

/// Network parameters. Absent branches are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub conv: Option<Conv1d>,
    pub tfe_fc: Option<Dense>,
    pub sfe_fc: Option<Dense>,
    pub mfe_fc: Option<Dense>,
    pub fusion: Dense,
    pub output: Dense,
}

/// Standardized inputs of one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub mfe: Vec<f64>,
    pub sfe: Vec<f64>,
    pub tfe: Vec<f64>,
}

/// Inverted-dropout multipliers (0 or `1/(1-p)`) for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Masks {
    pub sfe: Vec<f64>,
    pub mfe: Vec<f64>,
}

struct Trace {
    pooled: Vec<f64>,
    pool_arg: Vec<usize>,
    tfe_pre: Vec<f64>,
    sfe_pre: Vec<f64>,
    mfe_pre: Vec<f64>,
    concat: Vec<f64>,
    fusion_pre: Vec<f64>,
    fusion_out: Vec<f64>,
    probs: [f64; 2],
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

fn relu_grad(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(dy)
        .map(|(p, d)| if *p > 0.0 { *d } else { 0.0 })
        .collect()
}

fn softmax2(z: &[f64]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let (a, b) = ((z[0] - m).exp(), (z[1] - m).exp());
    [a / (a + b), b / (a + b)]
}

pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy on the core probability `p` for target `t` in {0, 1}.
pub fn bce(p: f64, t: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

impl Network {
    pub fn init(cfg: &NurseConfig, rng: &mut impl Rng) -> Self {
        let b = cfg.branches;
        let conv = b.tfe.then(|| Conv1d::he(cfg.conv_channels, cfg.conv_filter, rng));
        let tfe_fc = b.tfe.then(|| Dense::he(cfg.conv_channels, cfg.tfe_fc, rng));
        let sfe_fc = b.sfe.then(|| Dense::he(SFE_LEN, cfg.sfe_fc, rng));
        let mfe_fc = b.mfe.then(|| Dense::he(MFE_LEN, cfg.mfe_fc, rng));
        Network {
            conv,
            tfe_fc,
            sfe_fc,
            mfe_fc,
            fusion: Dense::he(cfg.fusion_inputs(), cfg.fusion_fc, rng),
            output: Dense::he(cfg.fusion_fc, 2, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            conv: self.conv.as_ref().map(|c| Conv1d::zeros(c.channels, c.width)),
            tfe_fc: self.tfe_fc.as_ref().map(|d| Dense::zeros(d.inputs, d.outputs)),
            sfe_fc: self.sfe_fc.as_ref().map(|d| Dense::zeros(d.inputs, d.outputs)),
            mfe_fc: self.mfe_fc.as_ref().map(|d| Dense::zeros(d.inputs, d.outputs)),
            fusion: Dense::zeros(self.fusion.inputs, self.fusion.outputs),
            output: Dense::zeros(self.output.inputs, self.output.outputs),
        }
    }

    /// Every parameter tensor by name, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut out = Vec::new();
        if let Some(c) = &self.conv {
            out.push(("conv.w", &c.w));
            out.push(("conv.b", &c.b));
        }
        let dense = [
            ("tfe_fc.w", "tfe_fc.b", &self.tfe_fc),
            ("sfe_fc.w", "sfe_fc.b", &self.sfe_fc),
            ("mfe_fc.w", "mfe_fc.b", &self.mfe_fc),
        ];
        for (wn, bn, d) in dense {
            if let Some(d) = d {
                out.push((wn, &d.w));
                out.push((bn, &d.b));
            }
        }
        out.push(("fusion.w", &self.fusion.w));
        out.push(("fusion.b", &self.fusion.b));
        out.push(("output.w", &self.output.w));
        out.push(("output.b", &self.output.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        if let Some(c) = &mut self.conv {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        for d in [&mut self.tfe_fc, &mut self.sfe_fc, &mut self.mfe_fc]
            .into_iter()
            .flatten()
        {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out.push(&mut self.fusion.w);
        out.push(&mut self.fusion.b);
        out.push(&mut self.output.w);
        out.push(&mut self.output.b);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    fn trace(&self, x: &Sample, masks: Option<&Masks>) -> Trace {
        let mut concat = Vec::with_capacity(self.fusion.inputs);
        let (mut pooled, mut pool_arg, mut tfe_pre) = (Vec::new(), Vec::new(), Vec::new());
        if let (Some(conv), Some(fc)) = (&self.conv, &self.tfe_fc) {
            (pooled, pool_arg) = conv.forward_pool(&x.tfe);
            tfe_pre = fc.forward(&pooled);
            concat.extend(relu(&tfe_pre));
        }
        let mut branch = |fc: &Option<Dense>, input: &[f64], mask: Option<&Vec<f64>>| -> Vec<f64> {
            let Some(fc) = fc else { return Vec::new() };
            let pre = fc.forward(input);
            let mut out = relu(&pre);
            if let Some(m) = mask {
                for (o, k) in out.iter_mut().zip(m) {
                    *o *= k;
                }
            }
            concat.extend(out);
            pre
        };
        let sfe_pre = branch(&self.sfe_fc, &x.sfe, masks.map(|m| &m.sfe));
        let mfe_pre = branch(&self.mfe_fc, &x.mfe, masks.map(|m| &m.mfe));
        let fusion_pre = self.fusion.forward(&concat);
        let fusion_out = relu(&fusion_pre);
        let logits = self.output.forward(&fusion_out);
        Trace {
            pooled,
            pool_arg,
            tfe_pre,
            sfe_pre,
            mfe_pre,
            concat,
            fusion_pre,
            fusion_out,
            probs: softmax2(&logits),
        }
    }

    /// Class probabilities `(core, compromised)`. Dropout applies only when
    /// masks are given.
    pub fn forward(&self, x: &Sample, masks: Option<&Masks>) -> [f64; 2] {
        self.trace(x, masks).probs
    }

    fn backward(&self, x: &Sample, masks: Option<&Masks>, t: &Trace, dlogits: [f64; 2], grad: &mut Network) {
        let d_fusion_out = self.output.backward(&t.fusion_out, &dlogits, &mut grad.output, true);
        let d_fusion_pre = relu_grad(&t.fusion_pre, &d_fusion_out);
        let d_concat = self.fusion.backward(&t.concat, &d_fusion_pre, &mut grad.fusion, true);

        let mut offset = 0;
        if let (Some(conv), Some(fc)) = (&self.conv, &self.tfe_fc) {
            let d = &d_concat[offset..offset + fc.outputs];
            offset += fc.outputs;
            let d_pre = relu_grad(&t.tfe_pre, d);
            let d_pooled = fc.backward(&t.pooled, &d_pre, grad.tfe_fc.as_mut().expect("same shape"), true);
            let gc = grad.conv.as_mut().expect("same shape");
            for c in 0..conv.channels {
                if t.pooled[c] <= 0.0 || d_pooled[c] == 0.0 {
                    continue;
                }
                let at = t.pool_arg[c];
                gc.b[c] += d_pooled[c];
                for f in 0..conv.width {
                    gc.w[c * conv.width + f] += d_pooled[c] * x.tfe[at + f];
                }
            }
        }
        let mut branch =
            |fc: &Option<Dense>, g: &mut Option<Dense>, pre: &[f64], input: &[f64], mask: Option<&Vec<f64>>| {
                let Some(fc) = fc else { return };
                let mut d = d_concat[offset..offset + fc.outputs].to_vec();
                offset += fc.outputs;
                if let Some(m) = mask {
                    for (x, k) in d.iter_mut().zip(m) {
                        *x *= k;
                    }
                }
                let d_pre = relu_grad(pre, &d);
                fc.backward(input, &d_pre, g.as_mut().expect("same shape"), false);
            };
        branch(
            &self.sfe_fc,
            &mut grad.sfe_fc,
            &t.sfe_pre,
            &x.sfe,
            masks.map(|m| &m.sfe),
        );
        branch(
            &self.mfe_fc,
            &mut grad.mfe_fc,
            &t.mfe_pre,
            &x.mfe,
            masks.map(|m| &m.mfe),
        );
    }

    /// Weighted mean cross-entropy of a batch and its parameter gradient.
    /// `targets[i]` is 1 for core; the mean divides by the batch size.
    pub fn loss_and_grad(
        &self,
        xs: &[&Sample],
        targets: &[f64],
        weights: &[f64],
        masks: Option<&[Masks]>,
    ) -> (f64, Network) {
        let mut grad = self.zeros_like();
        let n = xs.len() as f64;
        let mut loss = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let m = masks.map(|m| &m[i]);
            let t = self.trace(x, m);
            let p = t.probs[0];
            loss += weights[i] * bce(p, targets[i]);
            // d loss / d logit0 = p - t through the two-way softmax; zero once clamped
            let g = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                weights[i] * (p - targets[i]) / n
            } else {
                0.0
            };
            self.backward(x, m, &t, [g, -g], &mut grad);
        }
        (loss / n, grad)
    }

    pub fn loss(&self, xs: &[&Sample], targets: &[f64], weights: &[f64], masks: Option<&[Masks]>) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, x)| weights[i] * bce(self.forward(x, masks.map(|m| &m[i]))[0], targets[i]))
            .sum::<f64>()
            / n
    }

    pub fn sample_masks(&self, cfg: &NurseConfig, rng: &mut impl Rng) -> Masks {
        let draw = |n: usize, p: f64, rng: &mut dyn rand::RngCore| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                .collect()
        };
        Masks {
            sfe: draw(self.sfe_fc.as_ref().map_or(0, |d| d.outputs), cfg.sfe_dropout, rng),
            mfe: draw(self.mfe_fc.as_ref().map_or(0, |d| d.outputs), cfg.mfe_dropout, rng),
        }
    }
}

/// Per-feature z-score constants over the concatenated `mfe | sfe | tfe`
/// input. Constant features get scale 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

fn concat(fv: &FeatureVector) -> impl Iterator<Item = f64> + '_ {
    fv.mfe.iter().chain(&fv.sfe).chain(&fv.tfe).copied()
}

impl Standardizer {
    pub fn fit(rows: &[&FeatureVector]) -> Self {
        let width = rows.first().map_or(0, |r| r.mfe.len() + r.sfe.len() + r.tfe.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(concat(r)) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; width];
        for r in rows {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(concat(r)) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, fv: &FeatureVector, embedding_dim: usize) -> Result<Sample> {
        if fv.mfe.len() != MFE_LEN || fv.sfe.len() != SFE_LEN || fv.tfe.len() != embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: MFE_LEN + SFE_LEN + embedding_dim,
                found: fv.mfe.len() + fv.sfe.len() + fv.tfe.len(),
            });
        }
        let z: Vec<f64> = concat(fv)
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        Ok(Sample {
            mfe: z[..MFE_LEN].to_vec(),
            sfe: z[MFE_LEN..MFE_LEN + SFE_LEN].to_vec(),
            tfe: z[MFE_LEN + SFE_LEN..].to_vec(),
        })
    }
}

/// A trained classifier: configuration, parameters and input scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NurseModel {
    pub config: NurseConfig,
    pub network: Network,
    pub standardizer: Standardizer,
    pub best_epoch: usize,
    pub best_loss: f64,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: NurseModel,
}

impl NurseModel {
    pub fn prepare(&self, fv: &FeatureVector) -> Result<Sample> {
        self.standardizer.apply(fv, self.config.embedding_dim)
    }

    /// `(core, compromised)` probabilities. In train mode dropout masks are
    /// drawn from `rng`.
    pub fn forward(&self, fv: &FeatureVector, train_mode: bool, rng: &mut impl Rng) -> Result<[f64; 2]> {
        let x = self.prepare(fv)?;
        let masks = train_mode.then(|| self.network.sample_masks(&self.config, rng));
        Ok(self.network.forward(&x, masks.as_ref()))
    }

    /// Core-class probability in inference mode.
    pub fn predict(&self, fv: &FeatureVector) -> Result<f64> {
        Ok(self.network.forward(&self.prepare(fv)?, None)[0])
    }

    /// Mean unweighted cross-entropy over labelled examples, inference mode.
    pub fn loss(&self, batch: &[FeatureVector]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut total = 0.0;
        for fv in batch {
            let label = fv
                .label
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no label", fv.user_id)))?;
            total += bce(self.predict(fv)?, f64::from(u8::from(label.is_core())));
        }
        Ok(total / batch.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::Parse {
            path: "<model>".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_owned(),
                line,
                message,
            },
            other => other,
        })
    }
}
