//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tension_core::beamsearch::{DiversityMode, SearchParams};
use tension_core::tension::TensionWeights;
use tension_core::voiceleading::VlVariant;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tension", version, about = "Tonal tension analysis and tension-guided symbolic music generation")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-bar tension curve, per-chord components and key of MIDI files.
    Analyze(AnalyzeArgs),
    /// Train an n-gram model bundle on a directory of MIDI files.
    Train(TrainArgs),
    /// Generate pieces that follow a target tension curve.
    Generate(GenerateArgs),
    /// Score generated pieces against a targets file.
    Evaluate(EvaluateArgs),
    /// Pick representative target curves from a corpus.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// MIDI files to analyze.
    /// MIDI files to analyze.
    #[arg(required = true, value_name = "MIDI")]
    pub inputs: Vec<PathBuf>,
    /// Directory for the per-file curve, chord table, JSON and plot.
    #[arg(short, long, default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Weight overrides, e.g. `dissonance=10,voice_leading=1`.
    #[arg(long, value_name = "LIST")]
    pub weights: Option<String>,
    /// Voice-leading tension form: monotone or printed.
    #[arg(long)]
    pub vl_variant: Option<VlVariant>,
    /// Also write a targets file for `evaluate` covering all inputs.
    #[arg(long, value_name = "FILE")]
    pub targets: Option<PathBuf>,
    /// Take bins, tension settings and similarity scale from a bundle.
    #[arg(long, value_name = "FILE")]
    pub bundle: Option<PathBuf>,
    /// Skip the SVG plot.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of MIDI files.
    #[arg(value_name = "CORPUS_DIR")]
    pub corpus: PathBuf,
    /// Bundle file to write.
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
    /// Write a JSON-lines manifest of the kept files.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// N-gram order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Additive smoothing constant.
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Voice-leading tension form: monotone or printed.
    #[arg(long)]
    pub vl_variant: Option<VlVariant>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Bundle written by `train`.
    #[arg(long, value_name = "FILE")]
    pub bundle: PathBuf,
    /// Target curve, CSV (`bar_index,tension`) or JSON.
    #[arg(long, value_name = "FILE")]
    pub target: PathBuf,
    /// Reference piece supplying per-bar controls and diversity statistics.
    #[arg(long, value_name = "MIDI")]
    pub reference: PathBuf,
    /// Directory for candidates, report, targets and overlay plot.
    #[arg(short, long, default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Voice-leading tension form: monotone or printed.
    #[arg(long)]
    pub vl_variant: Option<VlVariant>,
    /// Skip the SVG overlay.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SearchArgs {
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bars to generate [default: 8].
    #[arg(long)]
    pub bars: Option<usize>,
    /// Beams kept per step [default: 8].
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Nucleus mass [default: 0.9].
    #[arg(long)]
    pub nucleus_p: Option<f64>,
    /// Sampling temperature [default: 0.9].
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Weight of the diversity term in token scoring [default: 0.7].
    #[arg(long)]
    pub diversity_weight: Option<f64>,
    /// Weight of tension similarity; 0 disables guidance [default: 4.0].
    #[arg(long)]
    pub tension_weight: Option<f64>,
    /// Target variance at or below which similarity uses absolute differences [default: 0.001].
    #[arg(long)]
    pub variance_threshold: Option<f64>,
    /// Diversity scoring: reference or raw [default: reference].
    #[arg(long)]
    pub diversity_mode: Option<DiversityMode>,
    /// Candidates written [default: 3].
    #[arg(long)]
    pub final_candidates: Option<usize>,
}

impl SearchArgs {
    pub fn apply(&self, params: &mut SearchParams) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        params.seed = self.seed.unwrap_or(params.seed);
        params.max_bars = self.bars.unwrap_or(params.max_bars);
        params.beam_width = self.beam_width.unwrap_or(params.beam_width);
        params.final_candidates = self.final_candidates.unwrap_or(params.final_candidates);
        params.diversity_mode = self.diversity_mode.unwrap_or(params.diversity_mode);
        set(&mut params.nucleus_p, self.nucleus_p);
        set(&mut params.temperature, self.temperature);
        set(&mut params.diversity_weight, self.diversity_weight);
        set(&mut params.tension_weight, self.tension_weight);
        set(&mut params.variance_threshold, self.variance_threshold);
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of generated MIDI files.
    #[arg(value_name = "GENERATED_DIR")]
    pub generated: PathBuf,
    /// Targets file written by `analyze --targets` or `generate`.
    #[arg(value_name = "TARGETS")]
    pub targets: PathBuf,
    /// Directory for evaluation.json and metrics.csv [default: GENERATED_DIR].
    #[arg(short, long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Label of the model column in the metrics table.
    #[arg(long, default_value = "n-gram")]
    pub model: String,
    /// Label of the inference column in the metrics table.
    #[arg(long, default_value = "dual-beam")]
    pub inference: String,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Directory of MIDI files.
    #[arg(value_name = "CORPUS_DIR")]
    pub corpus: PathBuf,
    /// Number of curves to emit.
    #[arg(short = 'n', long, default_value_t = 5)]
    pub count: usize,
    /// Length of the curves in bars; shorter pieces are skipped.
    #[arg(long, default_value_t = 8)]
    pub bars: usize,
    /// Directory for the curve CSVs and plots.
    #[arg(short, long, default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Voice-leading tension form: monotone or printed.
    #[arg(long)]
    pub vl_variant: Option<VlVariant>,
    /// Skip the SVG plots.
    #[arg(long)]
    pub no_plot: bool,
}

/// Parses `name=value` pairs over the defaults of `base`.
pub fn parse_weights(list: &str, base: TensionWeights<f64>) -> Result<TensionWeights<f64>, CliError> {
    let mut w = base;
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item.split_once('=').ok_or_else(|| CliError::input(format!("weight {item:?}: expected name=value")))?;
        let v: f64 = value.trim().parse().map_err(|_| CliError::input(format!("weight {item:?}: bad number")))?;
        let slot = match name.trim() {
            "prev" => &mut w.prev,
            "key" => &mut w.key,
            "func" => &mut w.func,
            "dissonance" => &mut w.dissonance,
            "voice_leading" | "vl" => &mut w.voice_leading,
            other => return Err(CliError::input(format!("unknown weight {other:?}"))),
        };
        *slot = v;
    }
    w.validate().map_err(|e| CliError::input(e.to_string()))?;
    Ok(w)
}

/// Configuration file, or defaults.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}
