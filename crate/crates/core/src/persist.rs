//! Model checkpoints: the binary tensor format with the model config as
//! its JSON header.

use std::path::Path;

use laqg_autodiff::checkpoint;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::model::{build_model, Model};

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let config = serde_json::to_value(&model.config).map_err(|e| ModelError::Data(e.to_string()))?;
    checkpoint::save(path, &config, &model.store)?;
    Ok(())
}

/// Rebuilds the architecture from the stored config, then validates and
/// copies every tensor.
pub fn load_model(path: &Path) -> Result<Model> {
    let ckpt = checkpoint::load(path)?;
    let config: ModelConfig = serde_json::from_value(ckpt.config.clone())
        .map_err(|e| ModelError::Data(format!("checkpoint config: {e}")))?;
    let mut model = build_model(&config, 0)?;
    ckpt.restore_into(&mut model.store)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Family;

    #[test]
    fn round_trip_restores_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = build_model(&ModelConfig::tiny(Family::LstmCopy, 20), 5).unwrap();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.config, model.config);
        for ((_, n1, a), (_, n2, b)) in model.store.iter().zip(back.store.iter()) {
            assert_eq!(n1, n2);
            assert!(a.max_abs_diff(b) < 1e-6);
            assert_eq!(a.data().iter().map(|&v| v as f32).collect::<Vec<_>>(), b.to_f32_vec());
        }
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = build_model(&ModelConfig::tiny(Family::Transformer, 20), 5).unwrap();
        let mut cfg = serde_json::to_value(&model.config).unwrap();
        cfg["d_ffn"] = serde_json::json!(16);
        laqg_autodiff::checkpoint::save(&path, &cfg, &model.store).unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::Checkpoint(_))));
    }
}
