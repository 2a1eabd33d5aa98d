//! `reflect validate`: trace-document validation with per-file diagnostics.

use std::path::{Path, PathBuf};

use clap::Args;

use reflect_core::trace::read_trace;

use crate::AppError;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Trace files or directories of trace files.
    #[arg(required = true, value_name = "PATH")]
    pub paths: Vec<PathBuf>,
}

fn collect(paths: &[PathBuf]) -> Result<Vec<PathBuf>, AppError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", path.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

fn validate_one(path: &Path) -> Result<(), String> {
    let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
    read_trace::<f64, _>(file).map(|_| ()).map_err(|e| e.to_string())
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), AppError> {
    let files = collect(&args.paths)?;
    if files.is_empty() {
        return Err(AppError::Usage("no trace files to validate".into()));
    }
    let mut invalid = 0usize;
    for path in &files {
        match validate_one(path) {
            Ok(()) => println!("OK {}", path.display()),
            Err(diag) => {
                eprintln!("INVALID {}: {diag}", path.display());
                invalid += 1;
            }
        }
    }
    if invalid > 0 {
        return Err(AppError::Degenerate(format!(
            "{invalid} of {} documents failed validation",
            files.len()
        )));
    }
    Ok(())
}
