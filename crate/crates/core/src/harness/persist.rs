//! Model checkpoints: parameters in the tensor file format plus the model
//! configuration as a TOML sidecar next to it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_params, save_params};
use crate::error::Result;
use crate::transformer::{Model, ModelConfig};

/// `<path>.toml`, holding the [`ModelConfig`].
pub fn config_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

pub fn checkpoint_save(model: &Model, path: &Path) -> Result<()> {
    save_params(path, &model.params)?;
    fs::write(config_path(path), model.config.to_toml()?)?;
    Ok(())
}

/// Loads parameters into a freshly built model of `config`. A tensor whose
/// shape disagrees with the config is reported by name.
pub fn checkpoint_load_with(path: &Path, config: ModelConfig) -> Result<Model> {
    let stored = load_params(path)?;
    let mut model = Model::new(config, 0)?;
    model.params.load_from(&stored)?;
    Ok(model)
}

pub fn checkpoint_load(path: &Path) -> Result<Model> {
    let config = ModelConfig::from_toml(&fs::read_to_string(config_path(path))?)?;
    checkpoint_load_with(path, config)
}
