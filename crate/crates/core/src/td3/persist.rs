//! Bundle persistence: one network file per network plus a TOML manifest.
//! The replay buffer is not persisted.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentBundle, AgentConfig, ReplayBuffer, Td3Error};
use crate::neural::{Critic, Mlp};
use crate::Channel;

pub const MANIFEST_FILE: &str = "manifest.toml";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub agent: Channel,
    pub seed: u64,
    pub episodes: u64,
    pub updates: u64,
    pub env_steps: u64,
    /// Hash of the scenario configuration the bundle was trained under.
    pub config_hash: String,
    /// Episode return trace file next to the manifest, if written.
    pub trace_csv: Option<String>,
    pub config: AgentConfig,
}

fn persist_err(e: impl std::fmt::Display) -> Td3Error {
    Td3Error::Persist(e.to_string())
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Td3Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(persist_err)?;
    tmp.write_all(bytes).map_err(persist_err)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644));
    }
    tmp.as_file().sync_all().map_err(persist_err)?;
    tmp.persist(path).map_err(persist_err)?;
    Ok(())
}

fn net_bytes(f: impl FnOnce(&mut BufWriter<&mut Vec<u8>>) -> Result<(), crate::neural::NeuralError>) -> Result<Vec<u8>, Td3Error> {
    let mut out = Vec::new();
    {
        let mut w = BufWriter::new(&mut out);
        f(&mut w)?;
        w.flush().map_err(persist_err)?;
    }
    Ok(out)
}

pub fn save_bundle(dir: &Path, bundle: &AgentBundle, config_hash: &str, trace_csv: Option<&str>) -> Result<(), Td3Error> {
    fs::create_dir_all(dir).map_err(persist_err)?;
    write_atomic(&dir.join("actor.evnn"), &net_bytes(|w| bundle.actor.write_to(w))?)?;
    write_atomic(&dir.join("target_actor.evnn"), &net_bytes(|w| bundle.target_actor.write_to(w))?)?;
    for (name, c) in [
        ("critic1", &bundle.critic1),
        ("critic2", &bundle.critic2),
        ("target_critic1", &bundle.target_critic1),
        ("target_critic2", &bundle.target_critic2),
    ] {
        write_atomic(&dir.join(format!("{name}.evnn")), &net_bytes(|w| c.write_to(w))?)?;
    }
    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        agent: bundle.which,
        seed: bundle.seed,
        episodes: bundle.episodes,
        updates: bundle.updates,
        env_steps: bundle.env_steps,
        config_hash: config_hash.to_string(),
        trace_csv: trace_csv.map(str::to_string),
        config: bundle.config,
    };
    let text = toml::to_string(&manifest).map_err(persist_err)?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

fn read_mlp(path: &Path) -> Result<Mlp, Td3Error> {
    let f = fs::File::open(path).map_err(|e| persist_err(format!("{}: {e}", path.display())))?;
    Ok(Mlp::read_from(&mut BufReader::new(f))?)
}

fn read_critic(path: &Path) -> Result<Critic, Td3Error> {
    let f = fs::File::open(path).map_err(|e| persist_err(format!("{}: {e}", path.display())))?;
    Ok(Critic::read_from(&mut BufReader::new(f))?)
}

pub fn load_manifest(dir: &Path) -> Result<BundleManifest, Td3Error> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| persist_err(format!("{}: {e}", path.display())))?;
    let m: BundleManifest = toml::from_str(&text).map_err(persist_err)?;
    if m.format_version != FORMAT_VERSION {
        return Err(persist_err(format!("unsupported bundle format {}", m.format_version)));
    }
    Ok(m)
}

/// Load a bundle; its replay buffer starts empty.
pub fn load_bundle(dir: &Path, expected: Option<Channel>) -> Result<(AgentBundle, BundleManifest), Td3Error> {
    let m = load_manifest(dir)?;
    if let Some(e) = expected {
        if e != m.agent {
            return Err(Td3Error::WrongAgent { expected: e, found: m.agent });
        }
    }
    let bundle = AgentBundle {
        which: m.agent,
        config: m.config,
        actor: read_mlp(&dir.join("actor.evnn"))?,
        target_actor: read_mlp(&dir.join("target_actor.evnn"))?,
        critic1: read_critic(&dir.join("critic1.evnn"))?,
        critic2: read_critic(&dir.join("critic2.evnn"))?,
        target_critic1: read_critic(&dir.join("target_critic1.evnn"))?,
        target_critic2: read_critic(&dir.join("target_critic2.evnn"))?,
        buffer: ReplayBuffer::new(m.config.buffer_capacity),
        updates: m.updates,
        env_steps: m.env_steps,
        episodes: m.episodes,
        seed: m.seed,
    };
    if bundle.actor.specs() != crate::neural::actor_specs().as_slice() {
        return Err(persist_err("actor topology does not match"));
    }
    Ok((bundle, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_networks() {
        let dir = tempfile::tempdir().unwrap();
        let b = AgentBundle::new(Channel::Ev, AgentConfig::for_agent(Channel::Ev), 21);
        save_bundle(dir.path(), &b, "abc", Some("trace.csv")).unwrap();
        let (back, m) = load_bundle(dir.path(), Some(Channel::Ev)).unwrap();
        assert_eq!(back.actor, b.actor);
        assert_eq!(back.critic2, b.critic2);
        assert_eq!(back.config, b.config);
        assert_eq!(m.config_hash, "abc");
        assert!(matches!(load_bundle(dir.path(), Some(Channel::Pv)), Err(Td3Error::WrongAgent { .. })));
    }
}
