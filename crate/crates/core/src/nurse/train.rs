//! Mini-batch SGD with momentum and best-loss checkpointing.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::nurse::model::{Network, NurseConfig, NurseModel, Sample, Standardizer};
use crate::seed;

/// Trains on labelled feature vectors. Identical inputs and seeds give
/// bit-identical parameters. The returned parameters are the ones with the
/// lowest full training loss seen after any epoch (or at initialization).
pub fn train(features: &[FeatureVector], cfg: &NurseConfig) -> Result<NurseModel> {
    cfg.validate()?;
    let rows: Vec<&FeatureVector> = features.iter().collect();
    let mut targets = Vec::with_capacity(rows.len());
    for fv in &rows {
        let label = fv
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no label", fv.user_id)))?;
        targets.push(f64::from(u8::from(label.is_core())));
    }
    let positives = targets.iter().filter(|&&t| t == 1.0).count();
    if positives == 0 || positives == targets.len() {
        return Err(Error::SingleClass);
    }
    let n = targets.len() as f64;
    let weights: Vec<f64> = targets
        .iter()
        .map(|&t| {
            if !cfg.class_weighted {
                1.0
            } else if t == 1.0 {
                n / (2.0 * positives as f64)
            } else {
                n / (2.0 * (targets.len() - positives) as f64)
            }
        })
        .collect();

    let standardizer = Standardizer::fit(&rows);
    let samples: Vec<Sample> = rows
        .iter()
        .map(|fv| standardizer.apply(fv, cfg.embedding_dim))
        .collect::<Result<_>>()?;
    let all: Vec<&Sample> = samples.iter().collect();

    let mut net = Network::init(cfg, &mut seed::rng(cfg.seed, "nurse-init"));
    let mut rng = seed::rng(cfg.seed, "nurse-train");
    let mut velocity = net.zeros_like();
    let mut best = (net.loss(&all, &targets, &weights, None), net.clone(), 0usize);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&Sample> = batch.iter().map(|&i| &samples[i]).collect();
            let ts: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let ws: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
            let masks: Vec<_> = batch.iter().map(|_| net.sample_masks(cfg, &mut rng)).collect();
            let (_, grad) = net.loss_and_grad(&xs, &ts, &ws, Some(&masks));
            let grads = grad.tensors();
            for ((param, vel), (_, g)) in net.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(grads) {
                for ((p, v), g) in param.iter_mut().zip(vel.iter_mut()).zip(g) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                    *p += *v;
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::Invariant(format!("non-finite parameters after epoch {epoch}")));
        }
        let loss = net.loss(&all, &targets, &weights, None);
        if loss < best.0 {
            best = (loss, net.clone(), epoch);
        }
    }
    log::debug!("nurse: best loss {:.6} at epoch {}", best.0, best.2);
    Ok(NurseModel {
        config: cfg.clone(),
        network: best.1,
        standardizer,
        best_epoch: best.2,
        best_loss: best.0,
    })
}
