use std::io::Write;
use std::path::{Path, PathBuf};

use hat_tensor::{Element, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{l1_loss, Adam};
use super::schedule::{Phase, Schedule};
use crate::checkpoint::Checkpoint;
use crate::data::{augment_pair, psnr_y, ImageBuffer, Pair};
use crate::error::{Error, Result};
use crate::model::HatModel;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub schedule: Schedule,
    pub batch: usize,
    /// LQ patch side.
    pub patch: usize,
    pub augment: bool,
    pub seed: u64,
    /// Validation PSNR every this many steps (0 disables).
    pub val_every: u64,
    /// Checkpoint every this many steps (0 disables periodic saves).
    pub checkpoint_every: u64,
}

impl TrainConfig {
    /// Reference schedule of `phase` compressed to `steps`.
    pub fn for_phase(phase: Phase, steps: u64) -> Self {
        Self {
            phase,
            schedule: Schedule::reference(phase).rescaled(steps),
            batch: 4,
            patch: 64,
            augment: true,
            seed: 0,
            val_every: 0,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch == 0 || self.patch == 0 {
            return Err(Error::config("batch size and patch size must be positive"));
        }
        Ok(())
    }
}

/// One logged optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub val_psnr: Option<f64>,
}

impl StepRecord {
    pub fn log_line(&self) -> String {
        let mut s = format!("step={} lr={} loss={}", self.step, self.lr, self.loss);
        if let Some(p) = self.val_psnr {
            s.push_str(&format!(" val_psnr={p}"));
        }
        s
    }
}

/// Where and how often a run reports.
#[derive(Default)]
pub struct RunOutputs<'a> {
    pub log: Option<&'a mut dyn Write>,
    pub checkpoint: Option<PathBuf>,
    pub validation: &'a [Pair],
}

pub struct Trainer<T: Element> {
    pub model: HatModel<T>,
    pub optim: Adam<T>,
    pub config: TrainConfig,
    /// Completed optimizer steps.
    pub step: u64,
}

fn stack<T: Element>(items: &[ImageBuffer]) -> Result<Tensor<T>> {
    let first = &items[0];
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(items.len() * c * h * w);
    for img in items {
        data.extend(img.to_tensor::<T>().into_vec());
    }
    Ok(Tensor::new([items.len(), c, h, w], data)?)
}

const META_PREFIX: &str = "train.";

impl<T: Element> Trainer<T> {
    /// Fresh optimizer on `model`; fine-tuning must start from a checkpoint.
    pub fn new(model: HatModel<T>, config: TrainConfig) -> Result<Self> {
        if config.phase == Phase::Finetune {
            return Err(Error::config("fine-tuning starts from a pre-trained checkpoint"));
        }
        Self::start(model, config)
    }

    /// Fine-tunes the weights stored in `pretrained` with a fresh optimizer.
    pub fn finetune(pretrained: &Checkpoint<T>, config: TrainConfig) -> Result<Self> {
        Self::start(pretrained.model()?, config)
    }

    fn start(model: HatModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optim = Adam::new(model.params());
        Ok(Self { model, optim, config, step: 0 })
    }

    pub fn lr(&self) -> f64 {
        self.config.schedule.lr_at(self.step)
    }

    /// The batch for the step about to run; a function of seed and step only.
    pub fn batch(&self, pairs: &[Pair]) -> Result<(Tensor<T>, Tensor<T>)> {
        if pairs.is_empty() {
            return Err(Error::data("no training pairs"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.step);
        let (mut lqs, mut hqs) = (Vec::new(), Vec::new());
        for _ in 0..self.config.batch {
            let pair = &pairs[rng.random_range(0..pairs.len())];
            let (lq, hq) = pair.sample_patch(self.config.patch, &mut rng)?;
            let code = if self.config.augment { rng.random_range(0..8u8) } else { 0 };
            let (lq, hq) = augment_pair(&lq, &hq, code);
            lqs.push(lq);
            hqs.push(hq);
        }
        Ok((stack(&lqs)?, stack(&hqs)?))
    }

    /// One optimizer step; returns the loss before the update.
    pub fn train_step(&mut self, pairs: &[Pair]) -> Result<StepRecord> {
        let (lq, hq) = self.batch(pairs)?;
        let lr = self.lr();
        let tape = Tape::new();
        let bound = self.model.params().bind(&tape, true);
        let pred = self.model.forward(&bound, &tape.constant(lq))?;
        let loss = l1_loss(&pred, &tape.constant(hq))?;
        let value = loss.value().item().as_f64();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {}", self.step)));
        }
        let grads = bound.gradients(&tape.backward(&loss)?);
        if let Some((path, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient for `{path}` at step {}", self.step)));
        }
        self.optim.update(self.model.params_mut(), &grads, lr)?;
        self.step += 1;
        Ok(StepRecord { step: self.step, lr, loss: value, val_psnr: None })
    }

    /// Mean luma PSNR of the model on whole images, border crop = scale.
    pub fn evaluate(&self, pairs: &[Pair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::data("no evaluation pairs"));
        }
        let mut total = 0.0;
        for pair in pairs {
            let out = self.model.infer(&pair.lq.to_tensor::<T>())?;
            let sr = ImageBuffer::from_tensor(&out, 0)?;
            total += psnr_y(&sr, &pair.hq, self.model.config().scale)?;
        }
        Ok(total / pairs.len() as f64)
    }

    /// Trains until `self.step == until`, logging each step. A non-finite loss
    /// aborts the run and leaves the last saved checkpoint untouched.
    pub fn run(&mut self, pairs: &[Pair], until: u64, out: &mut RunOutputs<'_>) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        while self.step < until {
            let mut rec = self.train_step(pairs)?;
            let every = self.config.val_every;
            if every > 0 && self.step.is_multiple_of(every) && !out.validation.is_empty() {
                rec.val_psnr = Some(self.evaluate(out.validation)?);
            }
            if let Some(log) = out.log.as_deref_mut() {
                writeln!(log, "{}", rec.log_line()).map_err(|e| Error::io(Path::new("<log>"), e))?;
            }
            let every = self.config.checkpoint_every;
            if let Some(path) = &out.checkpoint {
                if (every > 0 && self.step.is_multiple_of(every)) || self.step == until {
                    self.checkpoint()?.save(path)?;
                }
            }
            records.push(rec);
        }
        Ok(records)
    }

    /// Model, optimizer moments, schedule position and data seed.
    pub fn checkpoint(&self) -> Result<Checkpoint<T>> {
        let mut ck = Checkpoint::from_model(&self.model);
        ck.put_optim_group("m", &self.optim.m);
        ck.put_optim_group("v", &self.optim.v);
        let c = &self.config;
        let mut put = |k: &str, v: String| {
            ck.meta.insert(format!("{META_PREFIX}{k}"), v);
        };
        put("step", self.step.to_string());
        put("phase", c.phase.to_string());
        put("batch", c.batch.to_string());
        put("patch", c.patch.to_string());
        put("augment", c.augment.to_string());
        put("seed", c.seed.to_string());
        put("val_every", c.val_every.to_string());
        put("checkpoint_every", c.checkpoint_every.to_string());
        put("adam.step", self.optim.step.to_string());
        put("adam.beta1", self.optim.beta1.to_string());
        put("adam.beta2", self.optim.beta2.to_string());
        put("adam.eps", self.optim.eps.to_string());
        for (k, v) in c.schedule.to_kv() {
            put(&format!("schedule.{k}"), v);
        }
        Ok(ck)
    }

    /// Restores a run saved by [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint<T>) -> Result<Self> {
        let get = |k: &str| ck.meta.get(&format!("{META_PREFIX}{k}")).cloned();
        let field = |k: &str| {
            get(k).ok_or_else(|| Error::Checkpoint(format!("`{META_PREFIX}{k}` missing; not a training checkpoint")))
        };
        fn parse<V: std::str::FromStr>(k: &str, raw: String) -> Result<V> {
            raw.parse().map_err(|_| Error::Checkpoint(format!("`{META_PREFIX}{k}` has bad value `{raw}`")))
        }
        let config = TrainConfig {
            phase: parse("phase", field("phase")?)?,
            schedule: Schedule::from_kv(|k| get(&format!("schedule.{k}")))?,
            batch: parse("batch", field("batch")?)?,
            patch: parse("patch", field("patch")?)?,
            augment: parse("augment", field("augment")?)?,
            seed: parse("seed", field("seed")?)?,
            val_every: parse("val_every", field("val_every")?)?,
            checkpoint_every: parse("checkpoint_every", field("checkpoint_every")?)?,
        };
        let model = ck.model()?;
        let optim = Adam {
            beta1: parse("adam.beta1", field("adam.beta1")?)?,
            beta2: parse("adam.beta2", field("adam.beta2")?)?,
            eps: parse("adam.eps", field("adam.eps")?)?,
            step: parse("adam.step", field("adam.step")?)?,
            m: ck.optim_group("m"),
            v: ck.optim_group("v"),
        };
        for (path, p) in model.params().iter() {
            let ok =
                |g: &std::collections::BTreeMap<String, Tensor<T>>| g.get(path).is_some_and(|t| t.shape() == p.shape());
            if !ok(&optim.m) || !ok(&optim.v) {
                return Err(Error::Checkpoint(format!("optimizer state for `{path}` missing or misshapen")));
            }
        }
        Ok(Self { model, optim, config, step: parse("step", field("step")?)? })
    }
}
