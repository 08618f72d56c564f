use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    network: Network,
}

/// Writes the network as versioned JSON. Floats round-trip exactly.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint {
        version: CHECKPOINT_VERSION,
        network: net.clone(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    let net = ck.network;
    super::Network::new(net.layers.clone(), net.task)?;
    for p in net.parameters() {
        if p.len() != p.shape().iter().product::<usize>() {
            return Err(Error::shape(
                "load_checkpoint",
                "parameter data does not match shape",
            ));
        }
    }
    Ok(net)
}
