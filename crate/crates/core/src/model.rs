//! Model configuration, parameter initialization and the shared error type of
//! the learned pipeline (encoders, alignment, matching heads).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::tensor::{ModelParams, ParamsError, TensorError};
use crate::{alignment, encoder2d, encoder3d, matching};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("argument error: {0}")]
    Argument(String),
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T, ModelError> {
    Err(ModelError::Config(msg.into()))
}

/// Dimensions and constants of the learned matcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square side the query image is resized to before encoding.
    pub input_size: usize,
    /// Output channels of the three point-encoder stages; the last is `C_c`.
    pub enc3d_channels: [usize; 3],
    /// Base grid cell as a fraction of the scene bounding-box diagonal.
    pub base_cell_divisor: f64,
    /// Channels of the four image-encoder blocks.
    pub enc2d_channels: [usize; 4],
    pub c_coarse: usize,
    pub c_fine: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub align_layers: usize,
    /// Dual-softmax temperature.
    pub tau: f64,
    pub theta_c: f64,
    /// Fine window side, in fine cells.
    pub window: usize,
    pub image_mean: [f64; 3],
    pub image_std: [f64; 3],
}

impl ModelConfig {
    /// Full-size dimensions: 480 px input, `C_c = 512`, `C_f = 128`.
    pub fn full() -> Self {
        Self {
            input_size: 480,
            enc3d_channels: [128, 256, 512],
            base_cell_divisor: 256.0,
            enc2d_channels: [128, 192, 256, 512],
            c_coarse: 512,
            c_fine: 128,
            heads: 4,
            ff_mult: 2,
            align_layers: 4,
            tau: 0.1,
            theta_c: 0.3,
            window: 5,
            image_mean: [0.5; 3],
            image_std: [0.25; 3],
        }
    }

    /// Desk-scale dimensions used by the synthetic benchmark.
    pub fn toy() -> Self {
        Self {
            input_size: 64,
            enc3d_channels: [16, 32, 64],
            base_cell_divisor: 64.0,
            enc2d_channels: [16, 32, 64, 64],
            c_coarse: 64,
            c_fine: 32,
            // About three scene points share each 8 px patch at this size, so
            // the dual-softmax mass of a correct row rarely reaches 0.3.
            theta_c: 0.15,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_size == 0 || self.input_size % 8 != 0 {
            return config_err(format!("input_size {} is not a positive multiple of 8", self.input_size));
        }
        if self.enc3d_channels[2] != self.c_coarse {
            return config_err("last point-encoder stage must output c_coarse channels");
        }
        if self.enc2d_channels.iter().chain(&self.enc3d_channels).any(|&c| c == 0) {
            return config_err("channel counts must be positive");
        }
        if self.heads == 0 || self.c_coarse % self.heads != 0 || self.c_fine % self.heads != 0 {
            return config_err(format!(
                "heads {} must divide c_coarse {} and c_fine {}",
                self.heads, self.c_coarse, self.c_fine
            ));
        }
        if self.window % 2 == 0 {
            return config_err("window must be odd");
        }
        if !(self.tau > 0.0 && self.base_cell_divisor > 0.0) {
            return config_err("tau and base_cell_divisor must be positive");
        }
        if self.image_std.iter().any(|&s| s <= 0.0) {
            return config_err("image_std must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        serde_json::from_str(s).map_err(|e| ModelError::Config(e.to_string()))
    }
}

const META_KEY: &str = "model_config";

/// Fresh randomly initialized weights for every module, seeded.
pub fn init_params<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::new();
    encoder3d::init(&mut p, cfg, &mut rng)?;
    encoder2d::init(&mut p, cfg, &mut rng)?;
    alignment::init(&mut p, cfg, &mut rng)?;
    matching::init(&mut p, cfg, &mut rng)?;
    p.meta.insert(META_KEY.to_string(), cfg.to_json());
    Ok(p)
}

/// The configuration a parameter set was created with.
pub fn stored_config<T: Real>(p: &ModelParams<T>) -> Result<ModelConfig, ModelError> {
    match p.meta.get(META_KEY) {
        Some(s) => ModelConfig::from_json(s),
        None => config_err("parameter file carries no model configuration"),
    }
}
