//! `reflect analyze`: decay curves over a directory of traces.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use reflect_core::metrics::{decay_curve, export_curve_csv, CiSpec, CurveMetric, LayerSelection};
use reflect_core::trace::read_trace;
use reflect_core::AttentionTrace64;

use crate::config::AppConfig;
use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// Positive-entry-normalized attention to visual tokens.
    Attn,
    /// Hellinger distance between paired next-token distributions.
    Vdm,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of trace JSON documents.
    #[arg(long, value_name = "DIR")]
    pub traces: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Layer subset: "all", "last", or comma-separated model layer ids.
    #[arg(long, default_value = "last", value_name = "SPEC")]
    pub layers: String,
    /// Position-bucket width; configured default when omitted.
    #[arg(long, value_name = "N")]
    pub bucket: Option<usize>,
    /// Output CSV path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Disable the bootstrap confidence band.
    #[arg(long)]
    pub no_ci: bool,
    /// Bootstrap resample count; configured default when omitted.
    #[arg(long, value_name = "N")]
    pub resamples: Option<usize>,
    /// Confidence level; configured default when omitted.
    #[arg(long, value_name = "FLOAT")]
    pub level: Option<f64>,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn parse_layers(spec: &str) -> Result<LayerSelection, AppError> {
    match spec.trim() {
        "all" => Ok(LayerSelection::All),
        "last" => Ok(LayerSelection::Last),
        list => {
            let ids = list
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<usize>()
                        .map_err(|_| AppError::Usage(format!("bad layer id {part:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if ids.is_empty() {
                return Err(AppError::Usage("empty layer list".into()));
            }
            Ok(LayerSelection::Ids(ids))
        }
    }
}

/// Reads every `*.json` in the directory (sorted by name), skipping invalid
/// documents with a diagnostic on stderr.
pub fn load_trace_dir(dir: &PathBuf) -> Result<Vec<AttentionTrace64>, AppError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut traces = Vec::new();
    for path in paths {
        let file = match std::fs::File::open(&path) {
            Ok(file) => file,
            Err(e) => {
                eprintln!("skipping {}: {e}", path.display());
                continue;
            }
        };
        match read_trace::<f64, _>(file) {
            Ok(trace) => traces.push(trace),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    Ok(traces)
}

pub fn cmd_analyze(args: &AnalyzeArgs, config: &AppConfig) -> Result<(), AppError> {
    let traces = load_trace_dir(&args.traces)?;
    if traces.is_empty() {
        return Err(AppError::Usage(format!(
            "no valid traces in {}",
            args.traces.display()
        )));
    }
    let layers = parse_layers(&args.layers)?;
    let bucket_size = args.bucket.unwrap_or(config.analyze.bucket_size);
    let metric = match args.metric {
        MetricArg::Attn => CurveMetric::VisualAttention,
        MetricArg::Vdm => CurveMetric::VisualDependency,
    };
    let ci = if args.no_ci {
        CiSpec::None
    } else {
        CiSpec::Bootstrap {
            resamples: args.resamples.unwrap_or(config.analyze.bootstrap_resamples),
            level: args.level.unwrap_or(config.analyze.confidence_level),
            seed: args.seed,
        }
    };
    let curve = decay_curve(&traces, metric, &layers, bucket_size, &ci)
        .map_err(|e| AppError::Usage(e.to_string()))?;

    std::fs::write(&args.out, export_curve_csv(&curve))
        .map_err(|e| AppError::Internal(format!("cannot write {}: {e}", args.out.display())))?;

    let first = curve.mean[0];
    let last = *curve.mean.last().expect("curve is non-empty");
    let summary = json!({
        "traces": traces.len(),
        "buckets": curve.len(),
        "first_bucket_mean": first,
        "last_bucket_mean": last,
        "ratio": last / first,
    });
    println!("{summary}");
    Ok(())
}
