//! Mini-batch training shared by every model: per-example gradients in
//! parallel, ordered reduction, global-norm clipping, Adam, per-epoch
//! validation and best-checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::kernel::{Adam, AdamConfig, Gradients, Graph, ParamSet, Real, Var};
use crate::parallel::{try_map_indexed, Execution};

/// Loss of one example: a scalar node plus the number of predictions it sums
/// over (the per-token normaliser).
pub struct Loss {
    pub value: Var,
    pub count: usize,
}

pub trait Trainable<F: Real>: Sync {
    type Item: Sync;

    fn params(&self) -> &ParamSet<F>;
    fn params_mut(&mut self) -> &mut ParamSet<F>;
    fn loss(&self, g: &mut Graph<'_, F>, item: &Self::Item) -> Result<Loss>;
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_start_epoch: usize,
    pub lr_decay_repeat: bool,
    pub clip_norm: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub exec: Execution,
    /// Stop once the eval-mode training perplexity drops below this.
    pub target_train_perplexity: Option<f64>,
    /// Also measure eval-mode training loss each epoch.
    pub eval_train: bool,
}

impl FitOptions {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        let t = &c.train;
        FitOptions {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_decay: t.lr_decay,
            lr_decay_start_epoch: t.lr_decay_start_epoch,
            lr_decay_repeat: t.lr_decay_repeat,
            clip_norm: t.clip_norm,
            adam: AdamConfig {
                beta1: t.adam_beta1,
                beta2: t.adam_beta2,
                eps: t.adam_eps,
            },
            seed: c.seed,
            exec: Execution::default(),
            target_train_perplexity: None,
            eval_train: false,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_decay_start_epoch {
            self.lr
        } else if self.lr_decay_repeat {
            self.lr * self.lr_decay.powi((epoch - self.lr_decay_start_epoch) as i32)
        } else {
            self.lr * self.lr_decay
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-prediction loss over the epoch's batches, dropout on.
    pub train_loss: f64,
    /// Eval-mode mean loss on the training set, when requested.
    pub train_eval_loss: Option<f64>,
    pub valid_loss: Option<f64>,
    pub valid_perplexity: Option<f64>,
    pub grad_norm: f64,
}

impl EpochLog {
    /// Perplexity used for checkpoint selection: validation when available,
    /// otherwise eval-mode training, otherwise the running training loss.
    pub fn selection_perplexity(&self) -> f64 {
        self.valid_perplexity
            .or(self.train_eval_loss.map(f64::exp))
            .unwrap_or(self.train_loss.exp())
    }
}

pub struct FitOutcome<F> {
    pub log: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_params: ParamSet<F>,
}

impl<F> FitOutcome<F> {
    pub fn best(&self) -> &EpochLog {
        &self.log[self.best_epoch - 1]
    }
}

/// Summed loss and prediction count over `items`, eval mode.
pub fn evaluate<F: Real, M: Trainable<F>>(model: &M, items: &[M::Item], exec: Execution) -> Result<(f64, usize)> {
    let parts = try_map_indexed(exec, items, |_, item| {
        let mut g = Graph::new(model.params());
        let l = model.loss(&mut g, item)?;
        Ok::<_, Error>((g.scalar(l.value).as_f64(), l.count))
    })?;
    Ok(parts.into_iter().fold((0.0, 0), |(s, n), (l, c)| (s + l, n + c)))
}

/// Mean per-prediction loss; errors on an empty set.
pub fn mean_loss<F: Real, M: Trainable<F>>(model: &M, items: &[M::Item], exec: Execution) -> Result<f64> {
    let (sum, n) = evaluate(model, items, exec)?;
    if n == 0 {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(sum / n as f64)
}

/// Gradients of the summed loss over `batch`, dropout on. Example `i` uses
/// dropout seed `seeds[i]`.
pub fn batch_gradients<F: Real, M: Trainable<F>>(
    model: &M,
    batch: &[&M::Item],
    seeds: &[u64],
    exec: Execution,
) -> Result<(Gradients<F>, f64, usize)> {
    let parts = try_map_indexed(exec, batch, |i, item| {
        let mut g = Graph::training(model.params(), seeds[i]);
        let l = model.loss(&mut g, item)?;
        let grads = g.backward(l.value);
        Ok::<_, Error>((grads, g.scalar(l.value).as_f64(), l.count))
    })?;
    let mut total = Gradients::for_params(model.params());
    let (mut loss, mut count) = (0.0, 0);
    for (g, l, c) in parts {
        total.accumulate(&g);
        loss += l;
        count += c;
    }
    Ok((total, loss, count))
}

fn example_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(index as u64)
}

/// Trains `model` in place and returns the per-epoch log and the parameters
/// with the lowest selection perplexity (earliest on ties). `model` is left
/// holding those best parameters.
pub fn fit<F: Real, M: Trainable<F>>(
    model: &mut M,
    train: &[M::Item],
    valid: &[M::Item],
    opts: &FitOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome<F>> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    let mut adam = Adam::new(model.params(), opts.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log: Vec<EpochLog> = Vec::new();
    let mut best: Option<(usize, f64, ParamSet<F>)> = None;

    for epoch in 1..=opts.epochs {
        let lr = opts.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut count, mut norm_sum, mut batches) = (0.0, 0usize, 0.0, 0usize);
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let items: Vec<&M::Item> = chunk.iter().map(|&i| &train[i]).collect();
            let seeds: Vec<u64> = chunk.iter().map(|&i| example_seed(opts.seed, epoch, i)).collect();
            let (mut grads, loss, n) = batch_gradients(model, &items, &seeds, opts.exec)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            if n == 0 {
                continue;
            }
            grads.scale(F::lit(1.0 / n as f64));
            let norm = grads.clip_global_norm(F::lit(opts.clip_norm)).as_f64();
            adam.step(model.params_mut(), &mut grads, lr);
            loss_sum += loss;
            count += n;
            norm_sum += norm;
            batches += 1;
        }
        let train_loss = loss_sum / count.max(1) as f64;
        let train_eval_loss = if opts.eval_train || (valid.is_empty() && opts.target_train_perplexity.is_some()) {
            Some(mean_loss(model, train, opts.exec)?)
        } else {
            None
        };
        let valid_loss = if valid.is_empty() {
            None
        } else {
            Some(mean_loss(model, valid, opts.exec)?)
        };
        for l in [Some(train_loss), train_eval_loss, valid_loss].into_iter().flatten() {
            if !l.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batches,
                    loss: l,
                });
            }
        }
        let entry = EpochLog {
            epoch,
            lr,
            train_loss,
            train_eval_loss,
            valid_loss,
            valid_perplexity: valid_loss.map(f64::exp),
            grad_norm: norm_sum / batches.max(1) as f64,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.4e} train loss {train_loss:.4} valid ppl {}",
            entry
                .valid_perplexity
                .map_or_else(|| "-".to_string(), |p| format!("{p:.4}"))
        );
        on_epoch(&entry);
        let score = entry.selection_perplexity();
        if best.as_ref().is_none_or(|(_, s, _)| score < *s) {
            best = Some((epoch, score, model.params().clone()));
        }
        log.push(entry);
        if let (Some(target), Some(l)) = (opts.target_train_perplexity, train_eval_loss) {
            if l.exp() < target {
                break;
            }
        }
    }
    let (best_epoch, _, best_params) = best.expect("at least one epoch ran");
    model.params_mut().load_from(&best_params)?;
    Ok(FitOutcome {
        log,
        best_epoch,
        best_params,
    })
}
