//! The subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use tension_core::beamsearch::{GenerationReport, SearchParams};
use tension_core::evalmetrics::{evaluate_sample, summarize, table_row, targets_from_reference, EvalReport, TargetsFile, BatchSummary, TABLE_HEADER, TARGETS_VERSION};
use tension_core::midi::{write_midi, write_manifest, ManifestEntry};
use tension_core::music::{Key, Piece};
use tension_core::seqmodel::{BridgeModel, ModelBundle, SequenceModel};
use tension_core::tension::{default_scale_ref, format_sig9, ChordTension, SimilarityConfig, TensionCurve, TensionModel, TensionWeights};
use tension_core::tokens::{build_bucket_edges, canonicalize, encode};

use crate::args::{parse_weights, AnalyzeArgs, Cli, Command, CurvesArgs, EvaluateArgs, GenerateArgs, TrainArgs};
use crate::config::{RunConfig, TensionSettings, BRIDGE_ARGS_ENV, BRIDGE_ENV};
use crate::curves::{k_medoids, z_normalize};
use crate::error::CliError;
use crate::pipeline::{
    fit_bars, generation_targets, load_bundle, load_corpus, load_midi, midi_files, prepare, read_curve, read_file, run_generation, tension_model,
    train_bundle, write_file,
};
use crate::svg::{line_plot, Series};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    run_to(cli, &mut std::io::stdout().lock())
}

/// Runs a command with its summary lines written to `out`.
pub fn run_to(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut config = crate::args::load_config(cli)?;
    match &cli.command {
        Command::Analyze(a) => analyze(a, &mut config, stdout),
        Command::Train(a) => train(a, &mut config, stdout),
        Command::Generate(a) => generate(a, &mut config, stdout),
        Command::Evaluate(a) => evaluate(a, stdout),
        Command::Curves(a) => curves(a, &mut config, stdout),
    }
}

fn json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("out").to_string()
}

/// Analysis of one file as written to `<stem>.json`; also readable as a
/// curve file.
#[derive(Serialize)]
struct AnalysisFile<'a> {
    file: String,
    key: Key,
    weights: TensionWeights<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale_ref: Option<f64>,
    curve: Vec<f64>,
    chords: &'a [ChordTension<f64>],
}

fn chords_csv(chords: &[ChordTension<f64>]) -> String {
    let mut out = String::from("bar,start,end,key,d_prev,d_key,d_func,dissonance,voice_leading,combined\n");
    for c in chords {
        let t = &c.components;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.bar,
            c.start,
            c.end,
            c.key,
            format_sig9(t.d_prev),
            format_sig9(t.d_key),
            format_sig9(t.d_func),
            format_sig9(t.dissonance),
            format_sig9(t.voice_leading),
            format_sig9(t.combined)
        );
    }
    out
}

fn analyze(args: &AnalyzeArgs, config: &mut RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let bundle = args.bundle.as_deref().map(load_bundle).transpose()?;
    if let Some(b) = &bundle {
        config.tokenizer = b.tokenizer;
        config.tension = TensionSettings::from_config(&b.tension);
    }
    if let Some(v) = args.vl_variant {
        config.tension.vl_variant = v;
    }
    if let Some(list) = &args.weights {
        config.tension.weights = parse_weights(list, config.tension.weights)?;
    }
    let model = tension_model(config)?;
    let prepared = args
        .inputs
        .par_iter()
        .map(|path| {
            let piece = load_midi(path)?;
            match prepare(&piece, config)? {
                Some(p) if !p.bars.is_empty() => Ok(p),
                _ => Err(CliError::input(format!("{}: no chord tracks", path.display()))),
            }
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let scale_ref = bundle.as_ref().map(|b| b.scale_ref);
    let mut analyses = Vec::with_capacity(prepared.len());
    for (path, piece) in args.inputs.iter().zip(&prepared) {
        let analysis = model.analyze(piece)?;
        let name = stem(path);
        let base = args.out_dir.join(&name);
        write_file(&base.with_extension("csv"), analysis.curve.to_csv())?;
        write_file(&args.out_dir.join(format!("{name}.chords.csv")), chords_csv(&analysis.chords))?;
        let file = AnalysisFile {
            file: path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
            key: analysis.key,
            weights: config.tension.weights,
            scale_ref,
            curve: analysis.curve.rounded(),
            chords: &analysis.chords,
        };
        write_file(&base.with_extension("json"), json_pretty(&file)?)?;
        if !args.no_plot {
            let svg = line_plot(&format!("{name} ({})", analysis.key), &[Series { label: "tension", values: &analysis.curve.values }]);
            write_file(&base.with_extension("svg"), svg)?;
        }
        writeln!(stdout, "{}: key {}, {} bars", path.display(), analysis.key, analysis.curve.values.len())?;
        analyses.push(analysis);
    }
    if let Some(targets_path) = &args.targets {
        let tok = &config.tokenizer;
        let (edges, bins) = match &bundle {
            Some(b) => (b.density_edges.clone(), tok.density_bins),
            None => {
                let counts: Vec<f64> =
                    prepared.iter().flat_map(|p| &p.bars).filter(|b| !b.notes.is_empty()).map(|b| b.notes.len() as f64).collect();
                (build_bucket_edges(if counts.is_empty() { &[0.0] } else { &counts }, tok.density_bins as usize)?, tok.density_bins)
            }
        };
        let all: Vec<f64> = analyses.iter().flat_map(|a| a.curve.values.iter().copied()).collect();
        let similarity = SimilarityConfig {
            variance_threshold: config.search.variance_threshold,
            scale_ref: scale_ref.unwrap_or_else(|| default_scale_ref(&all)),
        };
        let samples = args
            .inputs
            .iter()
            .zip(&prepared)
            .map(|(path, piece)| {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                Ok(targets_from_reference(name, piece, None, &model, &edges, bins, tok.grid.positions_per_quarter)?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let file = TargetsFile {
            version: TARGETS_VERSION,
            positions_per_quarter: tok.grid.positions_per_quarter,
            density_edges: edges,
            density_bins: bins,
            tension: config.tension.to_config(),
            similarity,
            samples,
        };
        write_file(targets_path, file.to_json())?;
    }
    Ok(())
}

fn train(args: &TrainArgs, config: &mut RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    if let Some(o) = args.order {
        config.train.order = o;
    }
    if let Some(s) = args.smoothing {
        config.train.smoothing = s;
    }
    if let Some(v) = args.vl_variant {
        config.tension.vl_variant = v;
    }
    config.validate()?;
    let (corpus, mut stats) = load_corpus(&args.corpus, config)?;
    if stats.files == 0 {
        return Err(CliError::input(format!("empty corpus: no MIDI files in {}", args.corpus.display())));
    }
    if corpus.is_empty() {
        return Err(CliError::input(format!(
            "empty corpus: none of {} files passed the chord-track filter (min_polyphony {})",
            stats.files, config.train.min_polyphony
        )));
    }
    let pieces: Vec<Piece> = corpus.iter().map(|c| c.piece.clone()).collect();
    let bundle = train_bundle(&pieces, config)?;
    stats.tokens = pieces.iter().map(|p| encode(p, &config.tokenizer).map(|t| t.len())).sum::<Result<usize, _>>()?;
    write_file(&args.output, bundle.to_bytes())?;
    if let Some(manifest) = &args.manifest {
        let model = tension_model(config)?;
        let entries = corpus
            .iter()
            .map(|c| {
                Ok(ManifestEntry {
                    path: c.name.clone(),
                    bar_count: c.piece.bars.len(),
                    key_estimate: Some(model.analyze(&c.piece)?.key.to_string()),
                    retained_tracks: c.retained_tracks.clone(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        write_file(manifest, write_manifest(&entries))?;
    }
    writeln!(stdout, "{}", serde_json::to_string(&stats).map_err(|e| CliError::Internal(e.to_string()))?)?;
    Ok(())
}

/// The external model named by the environment or the config, if any.
fn bridge_model(config: &RunConfig, bundle: &ModelBundle) -> Result<Option<BridgeModel>, CliError> {
    let (command, args) = match std::env::var(BRIDGE_ENV).ok().filter(|c| !c.trim().is_empty()) {
        Some(cmd) => {
            let args = std::env::var(BRIDGE_ARGS_ENV).map(|a| a.split_whitespace().map(String::from).collect()).unwrap_or_default();
            (cmd, args)
        }
        None => match &config.bridge.command {
            Some(cmd) => (cmd.clone(), config.bridge.args.clone()),
            None => return Ok(None),
        },
    };
    log::info!("using external model {command}");
    let timeout = Duration::from_secs_f64(config.bridge.timeout_secs);
    Ok(Some(BridgeModel::spawn(&command, &args, bundle.vocabulary()?, timeout)?))
}

#[derive(Serialize)]
struct ReportFile<'a> {
    key: Key,
    #[serde(flatten)]
    report: &'a GenerationReport,
}

fn generate(args: &GenerateArgs, config: &mut RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut params: SearchParams = config.search;
    args.search.apply(&mut params);
    params.validate().map_err(|e| CliError::input(e.to_string()))?;
    let mut bundle = load_bundle(&args.bundle)?;
    if let Some(v) = args.vl_variant {
        bundle.tension.vl_variant = v;
    }
    let target = read_curve(&args.target)?;
    if target.len() < params.max_bars {
        return Err(CliError::input(format!(
            "target curve has {} bars but {} were requested",
            target.len(),
            params.max_bars
        )));
    }
    let reference = load_midi(&args.reference)?;
    let bridge = bridge_model(config, &bundle)?;
    let model: &dyn SequenceModel = match &bridge {
        Some(b) => b,
        None => &bundle.model,
    };
    let out = run_generation(&bundle, model, &reference, &target, &params, config.train.min_polyphony)?;
    drop(bridge);

    let tension = TensionModel::new(bundle.tension.clone())?;
    let tok = &bundle.tokenizer;
    let mut samples = Vec::with_capacity(out.pieces.len());
    for (i, piece) in out.pieces.iter().enumerate() {
        let name = format!("candidate_{}.mid", i + 1);
        write_file(&args.out_dir.join(&name), write_midi(piece)?)?;
        samples.push(generation_targets(
            &name,
            &out.reference,
            &target,
            params.max_bars,
            out.key,
            &tension,
            &bundle.density_edges,
            tok.density_bins,
            tok.grid.positions_per_quarter,
        )?);
    }
    write_file(&args.out_dir.join("report.json"), json_pretty(&ReportFile { key: out.key, report: &out.report })?)?;
    let targets = TargetsFile {
        version: TARGETS_VERSION,
        positions_per_quarter: tok.grid.positions_per_quarter,
        density_edges: bundle.density_edges.clone(),
        density_bins: tok.density_bins,
        tension: bundle.tension.clone(),
        similarity: SimilarityConfig { variance_threshold: params.variance_threshold, scale_ref: bundle.scale_ref },
        samples,
    };
    write_file(&args.out_dir.join("targets.json"), targets.to_json())?;
    if !args.no_plot {
        let target_bars = &target[..params.max_bars];
        let labels: Vec<String> = (1..=out.report.candidates.len()).map(|i| format!("candidate {i}")).collect();
        let mut series = vec![Series { label: "target", values: target_bars }];
        series.extend(out.report.candidates.iter().zip(&labels).map(|(c, l)| Series { label: l, values: &c.bar_tensions }));
        write_file(&args.out_dir.join("overlay.svg"), line_plot("target vs. generated tension", &series))?;
    }
    for c in &out.report.candidates {
        writeln!(
            stdout,
            "candidate_{}.mid: score {:.6}, lm {:.6}, similarity {}",
            c.rank,
            c.final_score,
            c.lm_norm,
            c.tension_similarity.map_or("-".into(), |s| format!("{s:.6}"))
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluationFile<'a> {
    model: &'a str,
    inference: &'a str,
    bars: usize,
    summary: &'a BatchSummary,
    samples: &'a [EvalReport],
}

fn evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = String::from_utf8(read_file(&args.targets)?).map_err(|_| CliError::input("targets file is not UTF-8"))?;
    let targets = TargetsFile::from_json(&text)?;
    let files = midi_files(&args.generated)?;
    if files.is_empty() {
        return Err(CliError::input(format!("no MIDI files in {}", args.generated.display())));
    }
    if files.len() != targets.samples.len() {
        return Err(CliError::input(format!("{} MIDI files but {} targets", files.len(), targets.samples.len())));
    }
    let by_name: BTreeMap<&str, &Path> =
        files.iter().map(|p| (p.file_name().and_then(|n| n.to_str()).unwrap_or_default(), p.as_path())).collect();
    let reports = targets
        .samples
        .par_iter()
        .map(|sample| {
            let path = by_name.get(sample.name.as_str()).ok_or_else(|| CliError::input(format!("no generated file named {}", sample.name)))?;
            let piece = evaluation_piece(path, &targets)?;
            let piece = fit_bars(&piece, sample.tension.len())?;
            Ok(evaluate_sample(&piece, sample, &targets)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = summarize(&reports, targets.similarity.variance_threshold)?;
    let bars = targets.samples.iter().map(|s| s.tension.len()).max().unwrap_or(0);
    let csv = format!("{TABLE_HEADER}\n{}\n", table_row(&args.model, &args.inference, bars, &summary));
    let out_dir = args.out_dir.clone().unwrap_or_else(|| args.generated.clone());
    let file = EvaluationFile { model: &args.model, inference: &args.inference, bars, summary: &summary, samples: &reports };
    write_file(&out_dir.join("evaluation.json"), json_pretty(&file)?)?;
    write_file(&out_dir.join("metrics.csv"), &csv)?;
    write!(stdout, "{csv}")?;
    writeln!(
        stdout,
        "filtered tension: {} of {} samples (excluded: {} low-variance targets, {} negative), mean {:.6}, median {:.6}",
        summary.filtered_samples,
        summary.samples,
        summary.excluded_low_variance,
        summary.excluded_negative,
        summary.filtered_mean_correlation,
        summary.filtered_median_correlation
    )?;
    Ok(())
}

/// A file under evaluation, reduced to its chord tracks like the references
/// were; a piece without chord tracks is kept whole.
fn evaluation_piece(path: &Path, targets: &TargetsFile) -> Result<Piece, CliError> {
    let piece = load_midi(path)?;
    let config = RunConfig::default();
    let mut tokenizer = config.tokenizer;
    tokenizer.grid.positions_per_quarter = targets.positions_per_quarter;
    let config = RunConfig { tokenizer, ..config };
    match prepare(&piece, &config)? {
        Some(p) => Ok(p),
        None => {
            log::warn!("{}: no chord tracks, evaluating all tracks", path.display());
            Ok(canonicalize(&piece, &config.tokenizer)?)
        }
    }
}

fn curves(args: &CurvesArgs, config: &mut RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.count == 0 || args.bars == 0 {
        return Err(CliError::input("curve count and length must be positive"));
    }
    if let Some(v) = args.vl_variant {
        config.tension.vl_variant = v;
    }
    let (corpus, _) = load_corpus(&args.corpus, config)?;
    let model = tension_model(config)?;
    let mut named: Vec<(String, Vec<f64>)> = corpus
        .par_iter()
        .filter(|c| c.piece.bars.len() >= args.bars)
        .map(|c| Ok((c.name.clone(), model.piece_curve(&fit_bars(&c.piece, args.bars)?)?.values)))
        .collect::<Result<Vec<_>, CliError>>()?;
    named.retain(|(_, c)| c.iter().all(|v| v.is_finite()));
    if named.len() < args.count {
        return Err(CliError::input(format!(
            "only {} corpus curves of at least {} bars, {} requested",
            named.len(),
            args.bars,
            args.count
        )));
    }
    let shapes: Vec<Vec<f64>> = named.iter().map(|(_, c)| z_normalize(c)).collect();
    let medoids = k_medoids(&shapes, args.count);
    let mut series = Vec::new();
    for (i, &m) in medoids.iter().enumerate() {
        let (name, values) = &named[m];
        let curve = TensionCurve { values: values.clone(), silent: Vec::new() };
        let base = args.out_dir.join(format!("curve_{}", i + 1));
        write_file(&base.with_extension("csv"), curve.to_csv())?;
        if !args.no_plot {
            write_file(&base.with_extension("svg"), line_plot(&format!("curve {} ({name})", i + 1), &[Series { label: name, values }]))?;
        }
        writeln!(stdout, "curve_{}.csv: {name}", i + 1)?;
        series.push((format!("curve {}", i + 1), values.clone()));
    }
    if !args.no_plot {
        let s: Vec<Series> = series.iter().map(|(l, v)| Series { label: l, values: v }).collect();
        write_file(&args.out_dir.join("curves.svg"), line_plot("representative tension curves", &s))?;
    }
    Ok(())
}
