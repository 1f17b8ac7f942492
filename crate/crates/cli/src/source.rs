use std::path::Path;

use hat_core::checkpoint::Checkpoint;
use hat_core::model::{preset, HatModel, ModelConfig};
use hat_core::{Error, Result};
use hat_tensor::Element;

use crate::args::{ConfigArgs, ModelArgs};

impl ConfigArgs {
    pub fn given(&self) -> bool {
        self.preset.is_some() || self.config.is_some() || !self.overrides.is_empty()
    }

    /// Preset (default `hat`), then the config file, then `--set` overrides.
    pub fn resolve(&self) -> Result<ModelConfig> {
        self.resolve_or("hat")
    }

    pub fn resolve_or(&self, default_preset: &str) -> Result<ModelConfig> {
        let mut cfg = preset(self.preset.as_deref().unwrap_or(default_preset))?;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg = ModelConfig::parse_text(&text, &cfg)?;
        }
        for item in &self.overrides {
            let (k, v) =
                item.split_once('=').ok_or_else(|| Error::config(format!("override `{item}` is not KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelArgs {
    pub fn load<T: Element>(&self) -> Result<HatModel<T>> {
        match &self.checkpoint {
            Some(path) => {
                if self.config.given() {
                    return Err(Error::config(
                        "--checkpoint carries its own configuration; drop --preset/--config/--set",
                    ));
                }
                load_checkpoint::<T>(path)?.model()
            }
            None => HatModel::new(self.config.resolve()?, self.seed),
        }
    }
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<Checkpoint<T>> {
    Checkpoint::<T>::load_cast(path)
}
