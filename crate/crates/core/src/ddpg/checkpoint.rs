//! Policy files: one JSON header line, then the online and target parameters
//! as little-endian f64 values in tensor order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DdpgError, Networks, Policy, PolicyConfig};
use crate::nn::Params;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    policy: PolicyConfig,
    shapes: Vec<(usize, usize)>,
    values: usize,
    #[serde(default)]
    echo: serde_json::Value,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

pub fn write_policy<W: Write>(policy: &Policy, mut out: W) -> Result<(), DdpgError> {
    let header = Header {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        policy: policy.config.clone(),
        shapes: policy.online.shapes(),
        values: policy.online.num_params(),
        echo: policy.echo.clone(),
    };
    let line = serde_json::to_string(&header).map_err(|e| DdpgError::Checkpoint(e.to_string()))?;
    writeln!(out, "{line}")?;
    for net in [&policy.online, &policy.target] {
        for v in net.flatten() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_policy<R: BufRead>(mut input: R) -> Result<Policy, DdpgError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    if line.trim().is_empty() {
        return Err(DdpgError::Checkpoint("missing header".into()));
    }
    let probe: VersionProbe =
        serde_json::from_str(&line).map_err(|e| DdpgError::Checkpoint(format!("bad header: {e}")))?;
    if probe.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(DdpgError::CheckpointVersion {
            found: probe.schema_version,
            expected: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    let header: Header =
        serde_json::from_str(&line).map_err(|e| DdpgError::Checkpoint(format!("bad header: {e}")))?;

    // Build a template with the recorded architecture, then overwrite it.
    let mut online = Networks::new(&header.policy, &mut ChaCha8Rng::seed_from_u64(0));
    if online.shapes() != header.shapes || online.num_params() != header.values {
        return Err(DdpgError::Checkpoint(
            "tensor manifest does not match the recorded architecture".into(),
        ));
    }
    let mut target = online.clone();
    for net in [&mut online, &mut target] {
        let mut bytes = vec![0u8; header.values * 8];
        input
            .read_exact(&mut bytes)
            .map_err(|_| DdpgError::Checkpoint("truncated parameter payload".into()))?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        net.assign_flat(&values)?;
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(DdpgError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok(Policy {
        config: header.policy,
        online,
        target,
        echo: header.echo,
    })
}

pub fn save_policy(policy: &Policy, path: &Path) -> Result<(), DdpgError> {
    write_policy(policy, BufWriter::new(File::create(path)?))
}

pub fn load_policy(path: &Path) -> Result<Policy, DdpgError> {
    read_policy(BufReader::new(File::open(path)?))
}
