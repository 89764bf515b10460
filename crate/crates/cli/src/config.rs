//! Flat TOML config: engine and world fields side by side. `rng_seed`
//! seeds both.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use broker_assign::{EngineConfig, WorldConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub world: WorldConfig,
}

fn keys_of<S: Serialize>(value: &S) -> BTreeSet<String> {
    match toml::Value::try_from(value) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn section<D: DeserializeOwned>(table: toml::Table, what: &str) -> CliResult<D> {
    toml::Value::Table(table).try_into().map_err(|e| CliError::Usage(format!("{what} config: {e}")))
}

pub fn parse(text: &str) -> CliResult<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let engine_keys = keys_of(&EngineConfig::default());
    let world_keys = keys_of(&WorldConfig::default());
    let (mut engine, mut world) = (toml::Table::new(), toml::Table::new());
    for (k, v) in table {
        let (in_engine, in_world) = (engine_keys.contains(&k), world_keys.contains(&k));
        if !in_engine && !in_world {
            return Err(CliError::Usage(format!("unknown config key `{k}`")));
        }
        if in_engine {
            engine.insert(k.clone(), v.clone());
        }
        if in_world {
            world.insert(k, v);
        }
    }
    let cfg = RunConfig { engine: section(engine, "engine")?, world: section(world, "world")? };
    cfg.engine.validate()?;
    cfg.world.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => parse(&fs::read_to_string(p).map_err(|e| io_err(p, e))?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_split_between_sections() {
        let c = parse("alpha = 0.5\nn_brokers = 12\nrng_seed = 9\n").unwrap();
        assert_eq!(c.engine.alpha, 0.5);
        assert_eq!(c.world.n_brokers, 12);
        assert_eq!((c.engine.rng_seed, c.world.rng_seed), (9, 9));
        assert_eq!(c.engine.beta, EngineConfig::default().beta);
    }

    #[test]
    fn unknown_key_named() {
        let err = parse("alpah = 1.0").unwrap_err();
        assert!(err.to_string().contains("alpah"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_value_is_usage_error() {
        assert_eq!(parse("delta = 3.0").unwrap_err().exit_code(), 2);
        assert_eq!(parse("n_brokers = \"many\"").unwrap_err().exit_code(), 2);
    }
}
