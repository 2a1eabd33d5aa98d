//! `reflect synth`: synthetic trace fleets with closed-form decay profiles.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use reflect_core::synth::{
    generate_fleet, DecayProfile, FleetSpec, LenDistribution, ProfileShape, Spike,
};
use reflect_core::trace::write_trace_string;

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Constant,
    Exponential,
    Reflective,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub profile: ProfileArg,
    /// Attention level at position 1 (constant profiles hold it throughout).
    #[arg(long, default_value_t = 0.4)]
    pub initial: f64,
    /// Exponential decay rate; overridden by --drop-to/--drop-at.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Calibrate the rate so the value at --drop-at is this fraction of the
    /// initial level.
    #[arg(long, requires = "drop_at", value_name = "FRACTION")]
    pub drop_to: Option<f64>,
    #[arg(long, requires = "drop_to", value_name = "POSITION")]
    pub drop_at: Option<usize>,
    /// Reflective spike, "position:height"; repeatable.
    #[arg(long, value_name = "N:H")]
    pub spike: Vec<String>,
    /// Mean-preserving multiplicative noise amplitude in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed response length (mutually exclusive with --len-min/--len-max).
    #[arg(long, conflicts_with_all = ["len_min", "len_max"])]
    pub len: Option<usize>,
    #[arg(long, requires = "len_max")]
    pub len_min: Option<usize>,
    #[arg(long, requires = "len_min")]
    pub len_max: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub visual_tokens: usize,
    /// Skip distribution pairs (attention-only traces).
    #[arg(long)]
    pub no_dist_pairs: bool,
    /// Output directory; one JSON document per trace.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn parse_spike(text: &str) -> Result<Spike<f64>, AppError> {
    let (pos, height) = text
        .split_once(':')
        .ok_or_else(|| AppError::Usage(format!("bad spike {text:?}, expected N:H")))?;
    Ok(Spike {
        position: pos
            .trim()
            .parse()
            .map_err(|_| AppError::Usage(format!("bad spike position {pos:?}")))?,
        height: height
            .trim()
            .parse()
            .map_err(|_| AppError::Usage(format!("bad spike height {height:?}")))?,
    })
}

pub fn build_profile(args: &SynthArgs) -> Result<DecayProfile<f64>, AppError> {
    let rate = match (args.rate, args.drop_to, args.drop_at) {
        (_, Some(fraction), Some(position)) => {
            if !(0.0 < fraction && fraction < 1.0) {
                return Err(AppError::Usage("--drop-to must be in (0, 1)".into()));
            }
            if position < 2 {
                return Err(AppError::Usage("--drop-at must be >= 2".into()));
            }
            DecayProfile::rate_for_drop(fraction, position)
        }
        (Some(rate), _, _) => rate,
        (None, _, _) => 0.0,
    };
    let shape = match args.profile {
        ProfileArg::Constant => ProfileShape::Constant { value: args.initial },
        ProfileArg::Exponential => ProfileShape::Exponential {
            initial: args.initial,
            rate,
        },
        ProfileArg::Reflective => ProfileShape::Reflective {
            initial: args.initial,
            rate,
            spikes: args
                .spike
                .iter()
                .map(|s| parse_spike(s))
                .collect::<Result<Vec<_>, _>>()?,
        },
    };
    let profile = DecayProfile {
        shape,
        noise: args.noise,
    };
    profile
        .validate()
        .map_err(|e| AppError::Usage(e.to_string()))?;
    Ok(profile)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), AppError> {
    let profile = build_profile(args)?;
    let lengths = match (args.len, args.len_min, args.len_max) {
        (Some(len), _, _) => LenDistribution::Fixed(len),
        (None, Some(min), Some(max)) => LenDistribution::Uniform { min, max },
        (None, _, _) => LenDistribution::Fixed(300),
    };
    let spec = FleetSpec {
        count: args.count,
        lengths,
        num_layers: args.layers,
        num_visual_tokens: args.visual_tokens,
        dist_pairs: !args.no_dist_pairs,
    };
    let fleet =
        generate_fleet(&profile, &spec, args.seed).map_err(|e| AppError::Usage(e.to_string()))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| AppError::Usage(format!("cannot create {}: {e}", args.out.display())))?;
    for trace in &fleet {
        let path = args.out.join(format!("{}.json", trace.sample_id));
        let body = write_trace_string(trace).map_err(|e| AppError::Internal(e.to_string()))?;
        std::fs::write(&path, body)
            .map_err(|e| AppError::Internal(format!("cannot write {}: {e}", path.display())))?;
    }
    println!(
        "{}",
        json!({"written": fleet.len(), "dir": args.out.display().to_string(), "seed": args.seed})
    );
    Ok(())
}
