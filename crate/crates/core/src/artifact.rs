//! Versioned on-disk artifacts with lineage fingerprints.
//!
//! Every artifact embeds the full pipeline configuration that produced it,
//! the fingerprints of its parents, and its own sha-256 fingerprint over
//! (schema, version, config, parents, payload). Loads verify integrity;
//! downstream stages verify parent fingerprints before trusting a chain.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub schema: String,
    pub version: u32,
    pub config: PipelineConfig,
    pub parents: BTreeMap<String, String>,
    pub fingerprint: String,
    pub payload: T,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn fingerprint_of<T: Serialize>(
    schema: &str,
    config: &PipelineConfig,
    parents: &BTreeMap<String, String>,
    payload: &T,
) -> Result<String> {
    let bytes = serde_json::to_vec(&(schema, ARTIFACT_VERSION, config, parents, payload))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex(&hasher.finalize()))
}

/// Serialize, fingerprint, and write an artifact; returns the fingerprint.
pub fn save<T: Serialize>(
    path: &Path,
    schema: &str,
    config: &PipelineConfig,
    parents: BTreeMap<String, String>,
    payload: &T,
) -> Result<String> {
    let fingerprint = fingerprint_of(schema, config, &parents, payload)?;
    let artifact = Artifact {
        schema: schema.to_string(),
        version: ARTIFACT_VERSION,
        config: config.clone(),
        parents,
        fingerprint: fingerprint.clone(),
        payload,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut writer, &artifact)?;
    use std::io::Write;
    writer.flush()?;
    Ok(fingerprint)
}

/// Load an artifact, checking schema name and fingerprint integrity.
pub fn load<T: DeserializeOwned + Serialize>(path: &Path, schema: &str) -> Result<Artifact<T>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Artifact(format!(
            "cannot open {} (run the producing subcommand first): {e}",
            path.display()
        ))
    })?;
    let artifact: Artifact<T> = serde_json::from_reader(std::io::BufReader::new(file))?;
    if artifact.schema != schema {
        return Err(Error::Artifact(format!(
            "{} holds a '{}' artifact, expected '{schema}'",
            path.display(),
            artifact.schema
        )));
    }
    if artifact.version != ARTIFACT_VERSION {
        return Err(Error::Artifact(format!(
            "{} has artifact version {}, this build reads {ARTIFACT_VERSION}",
            path.display(),
            artifact.version
        )));
    }
    let expect = fingerprint_of(schema, &artifact.config, &artifact.parents, &artifact.payload)?;
    if expect != artifact.fingerprint {
        return Err(Error::Artifact(format!(
            "{} is corrupt: fingerprint mismatch",
            path.display()
        )));
    }
    Ok(artifact)
}

/// Check that `child` names `parent_fingerprint` under `parent_name`.
pub fn require_parent<T>(
    child: &Artifact<T>,
    parent_name: &str,
    parent_fingerprint: &str,
) -> Result<()> {
    match child.parents.get(parent_name) {
        Some(fp) if fp == parent_fingerprint => Ok(()),
        Some(fp) => Err(Error::Lineage(format!(
            "'{}' artifact was built from {parent_name} {}, but the loaded {parent_name} is {}",
            child.schema,
            &fp[..12.min(fp.len())],
            &parent_fingerprint[..12.min(parent_fingerprint.len())]
        ))),
        None => Err(Error::Lineage(format!(
            "'{}' artifact does not record a {parent_name} parent",
            child.schema
        ))),
    }
}
