use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Scratch,
    Pretrain,
    Finetune,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Scratch => "scratch",
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(Phase::Scratch),
            "pretrain" => Ok(Phase::Pretrain),
            "finetune" => Ok(Phase::Finetune),
            _ => Err(Error::config(format!("unknown phase `{s}` (scratch, pretrain, finetune)"))),
        }
    }
}

/// Step learning rate: `initial * decay^(milestones <= step)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub initial_lr: f64,
    pub milestones: Vec<u64>,
    pub decay: f64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(initial_lr: f64, milestones: Vec<u64>, total_steps: u64) -> Result<Self> {
        let s = Self { initial_lr, milestones, decay: 0.5, total_steps };
        s.validate()?;
        Ok(s)
    }

    /// Full-length tables: 500K steps from scratch, 800K of pre-training and
    /// 250K of fine-tuning.
    pub fn reference(phase: Phase) -> Self {
        let (lr, milestones, total): (f64, &[u64], u64) = match phase {
            Phase::Scratch => (2e-4, &[250_000, 400_000, 450_000, 475_000], 500_000),
            Phase::Pretrain => (2e-4, &[300_000, 500_000, 650_000, 700_000, 750_000], 800_000),
            Phase::Finetune => (1e-5, &[125_000, 200_000, 230_000, 240_000], 250_000),
        };
        Self { initial_lr: lr, milestones: milestones.to_vec(), decay: 0.5, total_steps: total }
    }

    /// The same table compressed to `total` steps; milestones that collide
    /// after rounding are dropped.
    pub fn rescaled(&self, total: u64) -> Self {
        let mut milestones: Vec<u64> = Vec::new();
        for &m in &self.milestones {
            let r = ((m as f64 * total as f64 / self.total_steps as f64).round() as u64).max(1);
            if milestones.last().is_none_or(|&last| r > last) && r <= total {
                milestones.push(r);
            }
        }
        Self { initial_lr: self.initial_lr, milestones, decay: self.decay, total_steps: total }
    }

    pub fn with_initial_lr(mut self, lr: f64) -> Self {
        self.initial_lr = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be positive", self.initial_lr)));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("milestones must be strictly increasing"));
        }
        if self.milestones.last().is_some_and(|&m| m > self.total_steps) {
            return Err(Error::config("milestones must not exceed the total step count"));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= step).count();
        self.initial_lr * self.decay.powi(passed as i32)
    }

    /// `key=value` pairs for checkpoint meta data.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let ms: Vec<String> = self.milestones.iter().map(u64::to_string).collect();
        vec![
            ("initial_lr".into(), self.initial_lr.to_string()),
            ("milestones".into(), ms.join(",")),
            ("decay".into(), self.decay.to_string()),
            ("total_steps".into(), self.total_steps.to_string()),
        ]
    }

    pub fn from_kv(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let field = |k: &str| get(k).ok_or_else(|| Error::Checkpoint(format!("schedule field `{k}` missing")));
        let num = |k: &str| -> Result<f64> {
            field(k)?.parse().map_err(|_| Error::Checkpoint(format!("schedule field `{k}` is not a number")))
        };
        let raw = field("milestones")?;
        let milestones = raw
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Checkpoint(format!("bad milestone `{s}`"))))
            .collect::<Result<Vec<u64>>>()?;
        let s = Self {
            initial_lr: num("initial_lr")?,
            milestones,
            decay: num("decay")?,
            total_steps: num("total_steps")? as u64,
        };
        s.validate()?;
        Ok(s)
    }
}
