//! Name-keyed registries for interchangeable strategies.
//!
//! Each registry maps a stable name to a constructor producing a boxed trait
//! object from string options, so the CLI and config files can select an
//! implementation at runtime.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Free-form `key=value` options handed to a constructor.
#[derive(Clone, Debug, Default)]
pub struct Options(BTreeMap<String, String>);

impl Options {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.0
            .get(key)
            .map(|raw| raw.parse().map_err(|_| Error::config(format!("option `{key}`: cannot parse `{raw}`"))))
            .transpose()
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

pub type Constructor<T> = fn(&Options) -> Result<Box<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, (Constructor<T>, &'static str)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, about: &'static str, ctor: Constructor<T>) -> &mut Self {
        self.entries.insert(name, (ctor, about));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn describe(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.iter().map(|(k, (_, about))| (*k, *about))
    }

    pub fn build(&self, name: &str, options: &Options) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some((ctor, _)) => ctor(options),
            None => Err(Error::UnknownEntry {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}
