//! Tab-separated LQ/HQ pair lists.

use std::path::{Path, PathBuf};

use super::image::ImageBuffer;
use super::patch::Pair;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub lq: PathBuf,
    pub hq: PathBuf,
    pub scale: usize,
}

/// `# key=value ...` header lines followed by `lq<TAB>hq<TAB>scale` records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairManifest {
    /// Header text without the leading `# `, e.g. `degradation=bicubic scale=2`.
    pub degradation: String,
    pub records: Vec<Record>,
}

impl PairManifest {
    /// Parses manifest text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut out = PairManifest::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if let Some(header) = line.strip_prefix('#') {
                if out.degradation.is_empty() {
                    out.degradation = header.trim().to_string();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [lq, hq, scale] = fields[..] else {
                return Err(Error::data(format!("manifest line {}: expected 3 tab-separated fields", n + 1)));
            };
            let scale = scale
                .trim()
                .parse()
                .ok()
                .filter(|&s: &usize| s >= 1)
                .ok_or_else(|| Error::data(format!("manifest line {}: bad scale `{scale}`", n + 1)))?;
            out.records.push(Record { lq: base.join(lq), hq: base.join(hq), scale });
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Serializes with paths relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let mut s = String::new();
        if !self.degradation.is_empty() {
            s.push_str(&format!("# {}\n", self.degradation));
        }
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        for r in &self.records {
            s.push_str(&format!("{}\t{}\t{}\n", rel(&r.lq), rel(&r.hq), r.scale));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        std::fs::write(path, self.to_text(base)).map_err(|e| Error::io(path, e))
    }

    /// Reads every pair, checking `hq = scale x lq`.
    pub fn load_pairs(&self) -> Result<Vec<Pair>> {
        self.records
            .iter()
            .map(|r| {
                let pair = Pair::new(ImageBuffer::read_png(&r.lq)?, ImageBuffer::read_png(&r.hq)?, r.scale);
                pair.map_err(|e| Error::data(format!("{}: {e}", r.lq.display())))
            })
            .collect()
    }
}
