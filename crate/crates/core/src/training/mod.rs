//! Mini-batch Adam training on click labels with validation-AUC early stopping.

pub mod adam;
pub mod batch;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use batch::{batch_gradients, bce, mean_bce, BatchOutput, Example, PROB_CLAMP};

use crate::data::split_indices_by_time;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::Model;
use crate::pipeline::Prepared;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub max_steps: usize,
    /// Evaluations without a validation-AUC improvement before stopping.
    pub patience: usize,
    pub eval_every: usize,
    /// Negatives sampled per positive; 0 keeps every impression negative.
    pub negative_ratio: usize,
    /// Share of impressions, latest by timestamp, held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 512,
            dropout: 0.1,
            max_steps: 600_000,
            patience: 5,
            eval_every: 1000,
            negative_ratio: 0,
            val_fraction: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.eval_every == 0 || self.patience == 0 {
            return Err(Error::Config("eval_every and patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub val_auc: Option<f64>,
    pub val_mrr: Option<f64>,
    pub wall_ms: u128,
}

pub fn write_log<W: Write>(rows: &[LogRow], mut out: W) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    writeln!(out, "step,loss,val_auc,val_mrr,wall_ms")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{},{},{}",
            r.step,
            r.loss,
            opt(r.val_auc),
            opt(r.val_mrr),
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn save_log(rows: &[LogRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_log(rows, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

/// Train/validation impression indices into a [`Prepared`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    pub fn by_time(prepared: &Prepared, val_fraction: f64) -> Self {
        let keys: Vec<(i64, &str)> = prepared
            .impressions
            .iter()
            .map(|i| (i.timestamp, i.id.as_str()))
            .collect();
        let (train, val) = split_indices_by_time(&keys, val_fraction);
        Self { train, val }
    }
}

/// Every positive with `ratio` sampled negatives from its impression, or all
/// candidates when `ratio` is 0.
pub fn build_examples(
    prepared: &Prepared,
    impressions: &[usize],
    ratio: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Example> {
    let mut out = Vec::new();
    for &k in impressions {
        let imp = &prepared.impressions[k];
        let ex = |&(candidate, label): &(usize, u8)| Example {
            impression: k,
            candidate,
            label,
        };
        if ratio == 0 {
            out.extend(imp.candidates.iter().map(ex));
            continue;
        }
        let negatives: Vec<&(usize, u8)> = imp.candidates.iter().filter(|c| c.1 == 0).collect();
        for pos in imp.candidates.iter().filter(|c| c.1 > 0) {
            out.push(ex(pos));
            out.extend(negatives.choose_multiple(rng, ratio).map(|c| ex(c)));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation AUC (the initial ones if none improved).
    pub model: Model,
    pub log: Vec<LogRow>,
    /// Training loss of every step, in order.
    pub step_losses: Vec<f64>,
    pub steps_run: usize,
    pub best_step: usize,
    pub best_val: Option<EvalReport>,
    pub stopped_early: bool,
}

pub fn validation_report(model: &Model, prepared: &Prepared, val: &[usize]) -> Result<EvalReport> {
    Ok(evaluate(&prepared.ranked(model, val)?, false))
}

/// Trains `model` in place of a copy and returns the best-validation parameters.
pub fn train(model: Model, prepared: &Prepared, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    model.check_shapes()?;
    if split.train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut examples = build_examples(prepared, &split.train, config.negative_ratio, &mut rng);
    if examples.is_empty() {
        return Err(Error::Invalid(
            "training impressions contain no candidates".into(),
        ));
    }

    let start = Instant::now();
    let mut current = model.clone();
    let mut best = model;
    let mut best_val: Option<EvalReport> = None;
    let mut best_step = 0;
    let mut adam = Adam::new(&current.weights);
    let mut log = Vec::new();
    let mut step_losses = Vec::with_capacity(config.max_steps.min(1 << 20));
    let mut since_eval = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;
    let mut cursor = examples.len();

    for step in 1..=config.max_steps {
        if cursor + config.batch_size > examples.len() {
            if config.negative_ratio > 0 {
                examples = build_examples(prepared, &split.train, config.negative_ratio, &mut rng);
            }
            examples.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(examples.len());
        let batch = &examples[cursor..end];
        cursor = end;

        let mut grads = current.weights.zeros_like();
        let mut stats = current.norm.clone();
        let out = batch_gradients(
            &current,
            &mut stats,
            prepared,
            batch,
            config.dropout,
            &mut rng,
            &mut grads,
        );
        if !out.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                dump: dump_batch(prepared, batch, &out.probabilities),
            });
        }
        current.norm = stats;
        adam.update(&mut current.weights, &grads, config.learning_rate);
        step_losses.push(out.loss);
        since_eval.push(out.loss);

        if step % config.eval_every == 0 || step == config.max_steps {
            let report = if split.val.is_empty() {
                None
            } else {
                Some(validation_report(&current, prepared, &split.val)?)
            };
            let val_auc = report.as_ref().and_then(|r| r.auc);
            log.push(LogRow {
                step,
                loss: since_eval.iter().sum::<f64>() / since_eval.len() as f64,
                val_auc,
                val_mrr: report.as_ref().and_then(|r| r.mrr),
                wall_ms: start.elapsed().as_millis(),
            });
            since_eval.clear();
            let best_auc = best_val.as_ref().and_then(|r| r.auc);
            // Without a validation set the latest parameters are kept.
            let improved = match (val_auc, best_auc) {
                _ if split.val.is_empty() => true,
                (Some(a), Some(b)) => a > b,
                (Some(_), None) => true,
                (None, _) => false,
            };
            tracing::debug!(step, ?val_auc, improved, "validation");
            if improved {
                best = current.clone();
                best_val = report;
                best_step = step;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    stopped_early = step < config.max_steps;
                    break;
                }
            }
        }
    }

    Ok(TrainOutcome {
        model: best,
        log,
        steps_run: step_losses.len(),
        step_losses,
        best_step,
        best_val,
        stopped_early,
    })
}

fn dump_batch(prepared: &Prepared, batch: &[Example], probabilities: &[f64]) -> String {
    let rows: Vec<serde_json::Value> = batch
        .iter()
        .zip(probabilities)
        .map(|(ex, p)| {
            serde_json::json!({
                "impression": prepared.impressions[ex.impression].id,
                "candidate": prepared.article_ids[ex.candidate],
                "label": ex.label,
                "probability": p,
            })
        })
        .collect();
    serde_json::Value::Array(rows).to_string()
}
