use serde::{Deserialize, Serialize};

use crate::autograd::SoftmaxOver;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxAxis {
    /// Per cell, across features.
    Feature,
    /// Per feature, across all cells.
    Spatial,
}

impl From<SoftmaxAxis> for SoftmaxOver {
    fn from(a: SoftmaxAxis) -> Self {
        match a {
            SoftmaxAxis::Feature => SoftmaxOver::Channels,
            SoftmaxAxis::Spatial => SoftmaxOver::Plane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    WeatherModel,
    Convlstm,
    Unet,
    Sma,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::WeatherModel,
        ModelKind::Convlstm,
        ModelKind::Unet,
        ModelKind::Sma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::WeatherModel => "weather_model",
            ModelKind::Convlstm => "convlstm",
            ModelKind::Unet => "unet",
            ModelKind::Sma => "sma",
        }
    }

    /// Models with recurrent state, whose gradients are clipped.
    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelKind::WeatherModel | ModelKind::Convlstm)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (expected one of weather_model, convlstm, unet, sma)"
                ))
            })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Attention ConvLSTM encoder-decoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub encoder_kernels: Vec<usize>,
    pub decoder_kernels: Vec<usize>,
    pub attention_q: usize,
    pub attention_kernel: usize,
    /// `(mid, out)` channels of the two output convolutions.
    pub output_conv_channels: (usize, usize),
    pub output_kernel: usize,
    pub softmax_axis: SoftmaxAxis,
    pub t_in: usize,
    pub t_out: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![32, 32, 16],
            decoder_hidden: vec![16, 32, 32],
            encoder_kernels: vec![5, 3, 1],
            decoder_kernels: vec![3, 3, 1],
            attention_q: 5,
            attention_kernel: 3,
            output_conv_channels: (5, 1),
            output_kernel: 3,
            softmax_axis: SoftmaxAxis::Feature,
            t_in: 10,
            t_out: 10,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.encoder_hidden.len();
        if k == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.decoder_hidden.len() != k
            || self.encoder_kernels.len() != k
            || self.decoder_kernels.len() != k
        {
            return Err(Error::Config(
                "encoder/decoder hidden and kernel lists must have equal length".into(),
            ));
        }
        let reversed: Vec<usize> = self.encoder_hidden.iter().rev().copied().collect();
        if reversed != self.decoder_hidden {
            return Err(Error::Config(format!(
                "decoder_hidden {:?} must be encoder_hidden {:?} reversed",
                self.decoder_hidden, self.encoder_hidden
            )));
        }
        let kernels = self
            .encoder_kernels
            .iter()
            .chain(&self.decoder_kernels)
            .chain([&self.attention_kernel, &self.output_kernel]);
        for &kk in kernels {
            if kk % 2 == 0 {
                return Err(Error::Config(format!("kernel sizes must be odd, got {kk}")));
            }
        }
        if self.encoder_hidden.contains(&0) || self.attention_q == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.output_conv_channels.0 == 0 || self.output_conv_channels.1 != 1 {
            return Err(Error::Config(
                "output convolutions must have a positive middle width and 1 output channel".into(),
            ));
        }
        if self.t_in == 0 || self.t_out == 0 {
            return Err(Error::Config("T_in and T_out must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stacked ConvLSTM encoder-decoder baseline without attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvLstmConfig {
    pub encoder_hidden: Vec<usize>,
    pub encoder_kernels: Vec<usize>,
    pub t_in: usize,
    pub t_out: usize,
    pub init_seed: u64,
}

impl Default for ConvLstmConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![1, 16, 32],
            encoder_kernels: vec![5, 3, 1],
            t_in: 10,
            t_out: 10,
            init_seed: 0,
        }
    }
}

impl ConvLstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_hidden.is_empty() || self.encoder_hidden.len() != self.encoder_kernels.len() {
            return Err(Error::Config(
                "baseline hidden and kernel lists must be nonempty and of equal length".into(),
            ));
        }
        if self.encoder_kernels.iter().any(|k| k % 2 == 0) || self.encoder_hidden.contains(&0) {
            return Err(Error::Config("baseline kernels must be odd and widths positive".into()));
        }
        if self.t_in == 0 || self.t_out == 0 {
            return Err(Error::Config("T_in and T_out must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    /// Channels after the first double convolution; doubled at each level.
    pub base_channels: usize,
    pub depth: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub init_seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            depth: 4,
            t_in: 10,
            t_out: 10,
            init_seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.depth == 0 || self.t_in == 0 || self.t_out == 0 {
            return Err(Error::Config("U-Net sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmaConfig {
    pub t_in: usize,
    pub t_out: usize,
    pub init_seed: u64,
}

impl Default for SmaConfig {
    fn default() -> Self {
        Self {
            t_in: 30,
            t_out: 10,
            init_seed: 0,
        }
    }
}

impl SmaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_in == 0 || self.t_out == 0 {
            return Err(Error::Config("T_in and T_out must be >= 1".into()));
        }
        Ok(())
    }
}
