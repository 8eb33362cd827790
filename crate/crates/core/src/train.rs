//! Joint training of the graph and query encoders with a margin ranking
//! loss and one in-batch negative per pair.

use std::ops::ControlFlow;

use ndarray::{Array2, ArrayView1, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{batch_loss, cosine, GraphBatch, GraphInput, Grads, Model, ModelConfig, NnError, Params, Real, Tape};
use crate::prepare::Example;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("need at least two pairs per batch to draw a negative")]
    BatchTooSmall,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Every knob of a training run; loadable from TOML where missing keys
/// take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Pairs per mini-batch; negatives are drawn from the same batch.
    pub batch_size: usize,
    /// Ranking margin.
    pub margin: f64,
    pub learning_rate: f64,
    /// Decoupled (AdamW) weight decay.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Largest graph-label vocabulary, reserved tokens included.
    pub ir_vocab_size: usize,
    /// Largest query vocabulary, reserved tokens included.
    pub query_vocab_size: usize,
    /// Write a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    /// Fraction of training pairs held out for early stopping (0: off).
    pub validation_fraction: f64,
    /// Epochs without validation MRR improvement before stopping.
    pub patience: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            margin: 0.6,
            learning_rate: 3e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 200,
            seed: 17,
            ir_vocab_size: 15_000,
            query_vocab_size: 10_000,
            checkpoint_every: 0,
            validation_fraction: 0.0,
            patience: 10,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.margin <= 0.0 {
            return bad("margin must be positive");
        }
        if self.learning_rate < 0.0 {
            return bad("learning_rate must be non-negative");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if self.ir_vocab_size < 2 || self.query_vocab_size < 2 {
            return bad("vocabulary sizes must be at least 2");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `max(0, margin - cos(c, d+) + cos(c, d-))`.
pub fn ranking_loss<T: Real>(
    c: ArrayView1<'_, T>,
    d_pos: ArrayView1<'_, T>,
    d_neg: ArrayView1<'_, T>,
    margin: T,
) -> Result<T, NnError> {
    Ok((margin - cosine(c, d_pos)? + cosine(c, d_neg)?).max(T::zero()))
}

/// Uniform draw from `0..len` excluding `index`.
pub fn sample_negative<R: Rng>(len: usize, index: usize, rng: &mut R) -> Result<usize, TrainError> {
    if len < 2 {
        return Err(TrainError::BatchTooSmall);
    }
    let j = rng.gen_range(0..len - 1);
    Ok(if j >= index { j + 1 } else { j })
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &Params<f32>) -> Self {
        AdamW {
            m: params.tensors.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            v: params.tensors.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            t: 0,
        }
    }

    /// One update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut Params<f32>, grads: &Grads<f32>, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, wd, eps) = (cfg.learning_rate as f32, cfg.weight_decay as f32, cfg.adam_eps as f32);
        for (i, p) in params.tensors.iter_mut().enumerate() {
            let Some(g) = grads.get(i) else { continue };
            Zip::from(p)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let step = (*m / c1) / ((*v / c2).sqrt() + eps);
                    *p -= lr * (step + wd * *p);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    /// Summed batch losses divided by the number of pairs.
    pub mean_loss: f64,
    /// MRR on the held-out split, when one is configured.
    pub validation_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The final model, or the best one on the held-out split when early
    /// stopping is enabled.
    pub model: Model<f32>,
    pub loss_curve: Vec<f64>,
    /// Held-out MRR per epoch (empty without a held-out split).
    pub validation_curve: Vec<f64>,
    /// 1-based epoch of the returned model.
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        loss_csv(&self.loss_curve)
    }
}

pub fn loss_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in curve.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    s
}

/// Batch boundaries over `n` shuffled items. A trailing batch of one
/// (which could not draw a negative) joins the previous batch.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

/// MRR of each example's query retrieving its own graph among all the
/// given examples; tied scores rank the target last.
pub fn retrieval_mrr(model: &Model<f32>, examples: &[Example]) -> Result<f64, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let graphs: Vec<&GraphInput> = examples.iter().map(|e| &e.graph).collect();
    let queries: Vec<Vec<u32>> = examples.iter().map(|e| e.query.clone()).collect();
    let code = model.embed_graphs(&graphs);
    let desc = model.embed_queries(&queries)?;
    let mut total = 0.0;
    for (i, d) in desc.rows().into_iter().enumerate() {
        let scores: Vec<f32> = code
            .rows()
            .into_iter()
            .map(|c| cosine(c, d).unwrap_or(f32::NEG_INFINITY))
            .collect();
        let rank = scores.iter().enumerate().filter(|&(j, &s)| j != i && s >= scores[i]).count() + 1;
        total += 1.0 / rank as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Seeded split into (training, held-out) example indices.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    if fraction <= 0.0 {
        return (idx, Vec::new());
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    let held = ((n as f64 * fraction).round() as usize).max(1).min(n);
    let rest = idx.split_off(held);
    (rest, idx)
}

/// Runs up to `cfg.epochs` epochs. `on_epoch` sees every epoch's report
/// and the current model and may stop training early by returning
/// `ControlFlow::Break`. With a held-out fraction, the held-out pairs are
/// excluded from training, scored after every epoch, and training stops
/// after `patience` epochs without improvement.
pub fn train(
    examples: &[Example],
    mut model: Model<f32>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport, &Model<f32>) -> ControlFlow<()>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let (train_idx, held_idx) = holdout_split(examples.len(), cfg.validation_fraction, cfg.seed);
    if train_idx.len() < 2 {
        return Err(TrainError::BatchTooSmall);
    }
    let held: Vec<Example> = held_idx.iter().map(|&i| examples[i].clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(&model.params);
    let mut order = train_idx;
    let mut curve = Vec::new();
    let mut validation_curve = Vec::new();
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let margin = cfg.margin as f32;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for (bi, range) in batch_ranges(order.len(), cfg.batch_size).into_iter().enumerate() {
            let idx = &order[range];
            let graphs: Vec<&GraphInput> = idx.iter().map(|&i| &examples[i].graph).collect();
            let queries: Vec<Vec<u32>> = idx.iter().map(|&i| examples[i].query.clone()).collect();
            let negatives = (0..idx.len())
                .map(|i| sample_negative(idx.len(), i, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let batch = GraphBatch::new(&graphs);
            let mut tape = Tape::new(&model.params);
            let loss = batch_loss(&mut tape, &model, &batch, &queries, &negatives, margin)?;
            let value = tape.value(loss)[[0, 0]] as f64;
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    loss: value,
                });
            }
            let grads = tape.backward(loss);
            drop(tape);
            opt.step(&mut model.params, &grads, cfg);
            total += value;
        }
        let validation_mrr = if held.is_empty() {
            None
        } else {
            Some(retrieval_mrr(&model, &held)?)
        };
        let report = EpochReport {
            epoch,
            mean_loss: total / order.len() as f64,
            validation_mrr,
        };
        match validation_mrr {
            Some(v) => log::info!("epoch {epoch}: mean loss {:.6}, held-out MRR {v:.4}", report.mean_loss),
            None => log::info!("epoch {epoch}: mean loss {:.6}", report.mean_loss),
        }
        curve.push(report.mean_loss);
        let mut stop = on_epoch(&report, &model).is_break();
        if let Some(v) = validation_mrr {
            validation_curve.push(v);
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, epoch, model.clone()));
            } else if epoch - best.as_ref().unwrap().1 >= cfg.patience {
                log::info!("no held-out improvement for {} epochs, stopping", cfg.patience);
                stop = true;
            }
        }
        if stop {
            break;
        }
    }
    let (model, best_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, curve.len()),
    };
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
        validation_curve,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vfg::EdgeKind;
    use ndarray::array;

    #[test]
    fn ranking_loss_examples() {
        // cos+ = 1, cos- = 0
        let c = array![1.0, 0.0];
        let l = ranking_loss(c.view(), array![2.0, 0.0].view(), array![0.0, 1.0].view(), 0.6).unwrap();
        assert_eq!(l, 0.0);
        // cos+ = 0.2, cos- = 0.5
        let c = array![1.0, 0.0];
        let dp = array![0.2, (1.0f64 - 0.04).sqrt()];
        let dn = array![0.5, (1.0f64 - 0.25).sqrt()];
        let l = ranking_loss(c.view(), dp.view(), dn.view(), 0.6).unwrap();
        assert!((l - 0.9).abs() < 1e-12);
        // cos+ = cos-
        let l = ranking_loss(c.view(), dp.view(), dp.view(), 0.6).unwrap();
        assert!((l - 0.6).abs() < 1e-12);
        assert_eq!(
            ranking_loss(array![0.0, 0.0].view(), dp.view(), dn.view(), 0.6),
            Err(NnError::ZeroVector)
        );
    }

    #[test]
    fn zero_margin_same_negative_is_zero() {
        let c = array![0.3, -0.2];
        let d = array![0.1, 0.4];
        assert_eq!(ranking_loss(c.view(), d.view(), d.view(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_negative(2, 0, &mut rng).unwrap(), 1);
        assert_eq!(sample_negative(1, 0, &mut rng), Err(TrainError::BatchTooSmall));
        let a: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            (0..20).map(|_| sample_negative(16, 3, &mut r).unwrap()).collect()
        };
        let b: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            (0..20).map(|_| sample_negative(16, 3, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn negatives_are_uniform() {
        // chi-squared over 15 alternatives, 10^5 draws; 14 dof, p = 0.001
        // critical value 36.12
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 16];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_negative(16, 7, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[7], 0);
        let expected = draws as f64 / 15.0;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 7)
            .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 36.12, "chi2 = {chi2}");
    }

    #[test]
    fn batching_merges_singletons() {
        assert_eq!(batch_ranges(33, 16), vec![0..16, 16..33]);
        assert_eq!(batch_ranges(34, 16), vec![0..16, 16..32, 32..34]);
        assert_eq!(batch_ranges(5, 16), vec![0..5]);
    }

    #[test]
    fn config_from_toml() {
        let cfg = TrainConfig::from_toml("epochs = 3\n[model]\nhidden_dim = 32\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.model.hidden_dim, 32);
        assert_eq!(cfg.model.embed_dim, 300);
        assert_eq!(cfg.batch_size, 16);
        assert!(TrainConfig::from_toml("batch_size = 1\n").is_err());
        assert!(TrainConfig::from_toml("bogus = 1\n").is_err());
    }

    fn toy() -> (Vec<Example>, Model<f32>, TrainConfig) {
        let examples: Vec<Example> = (0..6)
            .map(|i| Example {
                graph: GraphInput {
                    node_tokens: vec![vec![2 + i as u32], vec![3 + i as u32]],
                    edges: vec![(0, 1, EdgeKind::Data)],
                },
                query: vec![2 + i as u32, 9, 0, 0],
            })
            .collect();
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 5,
            learning_rate: 1e-2,
            model: ModelConfig {
                embed_dim: 8,
                hidden_dim: 8,
                ggnn_steps: 2,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let model = Model::new(cfg.model.clone(), 12, 12, 1);
        (examples, model, cfg)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (ex, model, mut cfg) = toy();
        cfg.learning_rate = 0.0;
        cfg.weight_decay = 0.0;
        let out = train(&ex, model.clone(), &cfg, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(out.model.params, model.params);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (ex, model, cfg) = toy();
        let a = train(&ex, model.clone(), &cfg, |_, _| ControlFlow::Continue(())).unwrap();
        let b = train(&ex, model, &cfg, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.loss_curve.len(), 5);
        assert!(a.loss_curve.iter().all(|&l| (0.0..=cfg.margin + 2.0).contains(&l)));
    }

    #[test]
    fn observer_can_stop_early() {
        let (ex, model, cfg) = toy();
        let out = train(&ex, model, &cfg, |r, _| {
            if r.epoch == 2 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(out.loss_curve.len(), 2);
        assert!(out.loss_csv().starts_with("epoch,mean_loss\n1,"));
    }

    #[test]
    fn held_out_split_stops_early_and_keeps_best() {
        let (mut ex, model, mut cfg) = toy();
        ex.extend(ex.clone());
        cfg.validation_fraction = 0.25;
        cfg.patience = 2;
        cfg.epochs = 40;
        cfg.learning_rate = 0.0;
        cfg.weight_decay = 0.0;
        // nothing changes, so the first epoch stays best and training stops
        // `patience` epochs later
        let out = train(&ex, model.clone(), &cfg, |r, _| {
            assert!(r.validation_mrr.is_some());
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(out.loss_curve.len(), 3);
        assert_eq!(out.validation_curve.len(), 3);
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.model.params, model.params);
        let (tr, held) = holdout_split(12, 0.25, cfg.seed);
        assert_eq!((tr.len(), held.len()), (9, 3));
        let mut all: Vec<usize> = tr.into_iter().chain(held).collect();
        all.sort();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn retrieval_mrr_ranks_ties_last() {
        let (ex, model, _) = toy();
        let mrr = retrieval_mrr(&model, &ex).unwrap();
        assert!((0.0..=1.0).contains(&mrr));
        let same: Vec<Example> = (0..4).map(|_| ex[0].clone()).collect();
        // four identical pairs tie everywhere: every target ranks 4th
        assert!((retrieval_mrr(&model, &same).unwrap() - 0.25).abs() < 1e-12);
    }
}
