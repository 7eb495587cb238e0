//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use forecast_core::datastore::{Fractions, GridSchema, SynthConfig};
use forecast_core::nets::{ModelKind, ModelsConfig};
use forecast_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Relative data paths are resolved against this directory when set.
pub const DATA_ROOT_ENV: &str = "FORECAST_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Models trained or evaluated, by name.
    pub models: Vec<String>,
    pub data: DataConfig,
    pub synthetic: Option<SyntheticConfig>,
    pub splits: SplitConfig,
    pub nets: ModelsConfig,
    pub train: TrainConfig,
    pub interpolate: InterpolateConfig,
    pub flow: FlowConfig,
    pub eda: EdaConfig,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
    pub plot: PlotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/latest"),
            models: vec![ModelKind::WeatherModel.name().to_string()],
            data: DataConfig::default(),
            synthetic: None,
            splits: SplitConfig::default(),
            nets: ModelsConfig::default(),
            train: TrainConfig::default(),
            interpolate: InterpolateConfig::default(),
            flow: FlowConfig::default(),
            eda: EdaConfig::default(),
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// NetCDF-3 or portable grid file.
    pub grid: Option<PathBuf>,
    /// Station CSV.
    pub stations: Option<PathBuf>,
    /// Grid whose coordinates the stations are interpolated onto.
    pub template: Option<PathBuf>,
    pub target: String,
    /// Features to read; defaults to every feature of a portable file or
    /// the reanalysis schema for NetCDF.
    pub schema: Option<GridSchema>,
    /// Station sampling interval; inferred when absent.
    pub station_step_hours: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            grid: None,
            stations: None,
            template: None,
            target: "temperature".into(),
            schema: None,
            station_step_hours: None,
        }
    }
}

/// Generated blob data, used when no grid file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    pub len_time: usize,
    pub features: usize,
    pub seed: u64,
    pub noise: f64,
    pub step_hours: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            len_time: 400,
            features: 3,
            seed: 0,
            noise: 0.1,
            step_hours: 3,
        }
    }
}

impl SyntheticConfig {
    pub fn to_synth(&self) -> SynthConfig {
        let mut c = SynthConfig::new(self.height, self.width, self.len_time, self.features, self.seed);
        c.noise = self.noise;
        c.step_hours = self.step_hours;
        c
    }
}

/// Calendar windows (`window_months`/`stride_months`) unless step counts
/// are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub window_months: u32,
    pub stride_months: u32,
    pub window_steps: Option<usize>,
    pub stride_steps: Option<usize>,
    pub fractions: Fractions,
    /// Keep only the first N experiments.
    pub max_experiments: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            window_months: 24,
            stride_months: 6,
            window_steps: None,
            stride_steps: None,
            fractions: Fractions::default(),
            max_experiments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpolateConfig {
    pub candidates: Vec<f64>,
}

impl Default for InterpolateConfig {
    fn default() -> Self {
        Self {
            candidates: forecast_core::interpolate::DEFAULT_CANDIDATES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// Defaults to the target feature.
    pub feature: Option<String>,
    pub start: usize,
    /// Number of transitions analysed.
    pub transitions: usize,
    /// Seed of the random sign-flip matrix.
    pub sign_seed: u64,
    pub scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            feature: None,
            start: 0,
            transitions: 4,
            sign_seed: 0,
            scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdaConfig {
    /// `[row, col]`; defaults to the grid centre.
    pub cell: Option<[usize; 2]>,
    pub feature: Option<String>,
    pub lags: Vec<usize>,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            cell: None,
            feature: None,
            lags: vec![1, 2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub checkpoint: Option<PathBuf>,
    /// Index of the first input frame; defaults to the last full window.
    pub start: Option<usize>,
    /// Overrides the model's horizon for recursive models.
    pub t_out: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Directory holding `expNN_<model>.ckpt` files from `train`.
    pub checkpoints: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    pub enabled: bool,
    /// Pixels per grid cell in heatmaps.
    pub cell_px: u32,
    /// Every k-th flow vector is drawn.
    pub quiver_step: usize,
    /// Directory re-rendered by `plot`; defaults to the output directory.
    pub run_dir: Option<PathBuf>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            cell_px: 8,
            quiver_step: 2,
            run_dir: None,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("{}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies overrides, propagates the seed and resolves data paths.
    pub fn effective(mut self, o: &Overrides, data_root: Option<&Path>) -> Result<Self, CliError> {
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(m) = &o.model {
            self.models = m.split(',').map(|s| s.trim().to_string()).collect();
        }
        self.train.seed = self.seed;
        self.nets = self.nets.clone().with_init_seed(self.seed);
        if let Some(root) = data_root {
            for p in [
                &mut self.data.grid,
                &mut self.data.stations,
                &mut self.data.template,
                &mut self.predict.checkpoint,
                &mut self.evaluate.checkpoints,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = root.join(&*p);
                }
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_kinds()?;
        self.train.validate()?;
        self.nets.weather_model.validate()?;
        self.nets.convlstm.validate()?;
        self.nets.unet.validate()?;
        self.nets.sma.validate()?;
        if self.interpolate.candidates.is_empty() || self.interpolate.candidates.iter().any(|p| !(*p > 0.0)) {
            return Err(CliError::config("interpolate.candidates must be positive and nonempty"));
        }
        if !(self.flow.scale > 0.0) {
            return Err(CliError::config("flow.scale must be positive"));
        }
        if self.plot.cell_px == 0 {
            return Err(CliError::config("plot.cell_px must be >= 1"));
        }
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, CliError> {
        if self.models.is_empty() {
            return Err(CliError::config("no model selected"));
        }
        self.models
            .iter()
            .map(|m| ModelKind::parse(m).map_err(CliError::from))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
