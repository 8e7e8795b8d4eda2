use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::Adagrad;
use super::params::ParamSet;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "cycletrans-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

/// Container shared by every network: named arrays plus enough metadata to
/// rebuild the architecture and detect a vocabulary mismatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub dtype: String,
    pub vocab_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub params: ParamSet,
    pub optimizer: Option<Adagrad>,
}

impl Checkpoint {
    pub fn new(
        kind: &str,
        vocab_hash: &str,
        seed: u64,
        config: serde_json::Value,
        params: ParamSet,
        optimizer: Option<Adagrad>,
    ) -> Self {
        Checkpoint {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            kind: kind.into(),
            dtype: "f64".into(),
            vocab_hash: vocab_hash.into(),
            seed,
            config,
            params,
            optimizer,
        }
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted save never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut w, self)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ck.format != FORMAT_TAG {
            return Err(Error::Checkpoint(format!("not a checkpoint: format `{}`", ck.format)));
        }
        if ck.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        if ck.dtype != "f64" {
            return Err(Error::Checkpoint(format!("unsupported dtype `{}`", ck.dtype)));
        }
        Ok(ck)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }
}
