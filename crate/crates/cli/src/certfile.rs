//! Versioned JSON persistence of synthesized certificates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use satchain::Certificate;

use crate::config::{read_text, SynthSettings};
use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "satchain-certificate";
pub const SCHEMA_VERSION: u32 = 1;

/// How the sampled constants were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMeta {
    /// Deterministic low-discrepancy sequence; there is no random seed.
    pub sequence: String,
    pub sphere_samples: usize,
    pub refine_top: usize,
    pub settings: SynthSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub schema: String,
    pub version: u32,
    pub n: usize,
    pub saturation: String,
    pub sampling: SamplingMeta,
    pub certificate: Certificate,
}

impl CertificateFile {
    pub fn new(certificate: Certificate, settings: &SynthSettings) -> Self {
        CertificateFile {
            schema: SCHEMA.into(),
            version: SCHEMA_VERSION,
            n: certificate.n(),
            saturation: certificate.sat.name.clone(),
            sampling: SamplingMeta {
                sequence: "halton".into(),
                sphere_samples: settings.samples,
                refine_top: settings.refine_top,
                settings: settings.clone(),
            },
            certificate,
        }
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Config(format!("certificate encoding: {e}")))
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
            version: u32,
        }
        let bad = |m: String| CliError::Config(format!("certificate: {m}"));
        let head: Header = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if head.schema != SCHEMA || head.version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema `{}` v{} does not match `{SCHEMA}` v{SCHEMA_VERSION}",
                head.schema, head.version
            )));
        }
        let mut file: CertificateFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        file.certificate.refresh();
        if file.certificate.n() != file.n {
            return Err(bad(format!("n = {} but the controller has {}", file.n, file.certificate.n())));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}
