use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use orthodict::data::Normalization;
use orthodict::sbo::EnergyKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "orthodict", version, about = "Union-of-orthonormal-bases dictionary learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a dictionary and write it with its codes and a JSON report.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Code signals with a stored dictionary and report t_rep and RMSE.
    #[command(args_override_self = true)]
    Represent(RepresentArgs),
    /// Sweep K_max and/or atom counts and write a CSV table.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Sbo,
    Aksvd,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// PGM/PPM images to sample patches from, or a single .odm signal matrix.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub input: Vec<PathBuf>,
    /// Number of patches.
    #[arg(long = "m", default_value_t = 8192)]
    pub m: usize,
    /// Patch edge; signals have p = patch².
    #[arg(long, default_value_t = 8)]
    pub patch: usize,
    #[arg(long, default_value = "unit-range", value_parser = parse_normalization)]
    pub normalization: Normalization,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, env = "ORTHODICT_WORKERS")]
    pub workers: Option<usize>,
    /// Signals per parallel work unit.
    #[arg(long, default_value_t = 256)]
    pub chunk_size: usize,
    /// key=value file; flags on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SboArgs {
    #[arg(long, default_value_t = 8)]
    pub s0: usize,
    #[arg(long, default_value_t = 5)]
    pub k0: usize,
    #[arg(long, default_value_t = 4096)]
    pub p0: usize,
    /// Alternating rounds per block training.
    #[arg(long = "r", default_value_t = 6)]
    pub r: usize,
    /// Worst-set size; defaults to max(p, m/16).
    #[arg(long)]
    pub worst: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub target: f64,
    #[arg(long, default_value = "squared-sum", value_parser = parse_energy)]
    pub energy: EnergyKind,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Algo::Sbo)]
    pub algo: Algo,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sbo: SboArgs,
    /// Maximum number of blocks (sbo).
    #[arg(long, default_value_t = 64)]
    pub kmax: usize,
    /// Number of atoms (aksvd).
    #[arg(long = "n", default_value_t = 128)]
    pub n: usize,
    /// Iterations (aksvd).
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RepresentArgs {
    /// Dictionary file written by `train`.
    #[arg(long)]
    pub dict: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Overrides the sparsity stored with the dictionary.
    #[arg(long)]
    pub s0: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the codes here.
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Write the JSON summary here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sbo: SboArgs,
    /// K_max values for SBO runs.
    #[arg(long, value_delimiter = ',')]
    pub kmax_list: Vec<usize>,
    /// Atom counts for AK-SVD runs.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    s.parse().map_err(|e: orthodict::Error| e.to_string())
}

fn parse_energy(s: &str) -> Result<EnergyKind, String> {
    s.parse().map_err(|e: orthodict::Error| e.to_string())
}

/// Turns `key = value` lines into `--key value` arguments. Blank lines and
/// lines starting with `#` are skipped.
pub fn config_args(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value, got {line:?}", no + 1))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() || k == "config" {
            return Err(format!("config line {}: invalid key {k:?}", no + 1));
        }
        out.push(format!("--{k}").into());
        out.push(v.trim().into());
    }
    Ok(out)
}

/// Finds the value of `--config` in raw arguments.
pub fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let a = config_args("# comment\n\nkmax = 16\nchunk_size=64\n").unwrap();
        assert_eq!(a, ["--kmax", "16", "--chunk-size", "64"].map(OsString::from));
        assert!(config_args("kmax 16").is_err());
        assert!(config_args("config = x").is_err());
    }

    #[test]
    fn finds_config_flag() {
        let args: Vec<OsString> = ["orthodict", "train", "--config=a.cfg"].map(Into::into).to_vec();
        assert_eq!(find_config(&args), Some(PathBuf::from("a.cfg")));
        let args: Vec<OsString> = ["x", "--config", "b"].map(Into::into).to_vec();
        assert_eq!(find_config(&args), Some(PathBuf::from("b")));
    }
}
