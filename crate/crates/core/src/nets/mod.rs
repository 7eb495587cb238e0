//! Forecasting networks built on the autodiff graph.

pub mod attention;
pub mod baseline;
pub mod config;
pub mod convlstm;
mod init;
pub mod sma;
pub mod unet;
pub mod weather;

use serde::{Deserialize, Serialize};

pub use attention::Attention;
pub use baseline::ConvLstmBaseline;
pub use config::{ConvLstmConfig, ModelConfig, ModelKind, SmaConfig, SoftmaxAxis, UNetConfig};
pub use convlstm::{ConvLstmCell, LayerState};
pub use sma::Sma;
pub use unet::UNet;
pub use weather::WeatherModel;

use crate::autograd::{Graph, ParamStore, Var};
use crate::datastore::Batch;
use crate::error::{Error, Result};

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[B, T_out, M, N]`, normalized target units.
    pub prediction: Var,
    /// Attention weights `[B, d, M, N]` per input step; empty for models
    /// without attention.
    pub attention: Vec<Var>,
}

/// A trainable model mapping a normalized batch to target predictions.
pub trait Forecaster: Send + Sync {
    fn kind(&self) -> ModelKind;
    /// Number of input frames the model reads.
    fn t_in(&self) -> usize;
    fn t_out(&self) -> usize;
    /// Number of input features the model was built for.
    fn features(&self) -> usize;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn config_json(&self) -> serde_json::Value;
    fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<ForwardOutput>;
}

pub(crate) fn check_batch<F: Forecaster + ?Sized>(
    model: &F,
    batch: &Batch,
    all_features: bool,
) -> Result<()> {
    let (_, t, d, _, _) = batch.inputs.dim();
    if t != model.t_in() {
        return Err(Error::Shape(format!(
            "{} reads {} input frames, batch has {t}",
            model.kind(),
            model.t_in()
        )));
    }
    if all_features && d != model.features() {
        return Err(Error::Shape(format!(
            "{} was built for {} features, batch has {d}",
            model.kind(),
            model.features()
        )));
    }
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

/// Hyperparameters of every model family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub weather_model: ModelConfig,
    pub convlstm: ConvLstmConfig,
    pub unet: UNetConfig,
    pub sma: SmaConfig,
}

impl ModelsConfig {
    pub fn t_in(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::WeatherModel => self.weather_model.t_in,
            ModelKind::Convlstm => self.convlstm.t_in,
            ModelKind::Unet => self.unet.t_in,
            ModelKind::Sma => self.sma.t_in,
        }
    }

    pub fn t_out(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::WeatherModel => self.weather_model.t_out,
            ModelKind::Convlstm => self.convlstm.t_out,
            ModelKind::Unet => self.unet.t_out,
            ModelKind::Sma => self.sma.t_out,
        }
    }

    /// Overrides the initialization seed of every family.
    pub fn with_init_seed(mut self, seed: u64) -> Self {
        self.weather_model.init_seed = seed;
        self.convlstm.init_seed = seed;
        self.unet.init_seed = seed;
        self.sma.init_seed = seed;
        self
    }
}

pub fn build_model(kind: ModelKind, cfg: &ModelsConfig, features: usize) -> Result<Box<dyn Forecaster>> {
    Ok(match kind {
        ModelKind::WeatherModel => Box::new(WeatherModel::new(cfg.weather_model.clone(), features)?),
        ModelKind::Convlstm => Box::new(ConvLstmBaseline::new(cfg.convlstm.clone(), features)?),
        ModelKind::Unet => Box::new(UNet::new(cfg.unet.clone(), features)?),
        ModelKind::Sma => Box::new(Sma::new(cfg.sma.clone(), features)?),
    })
}
