use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use orthodict::baseline::{aksvd_train, batch_omp, AksvdConfig};
use orthodict::data::{extract_patches_from_images, load_image, load_matrix, PatchConfig};
use orthodict::linalg::rmse;
use orthodict::persist::{self, Dictionary, StoredDictionary};
use orthodict::report::TrainReport;
use orthodict::sbo::{represent, sbo_train, SboConfig};
use orthodict::{Error, Matrix, SparseCodes};
use serde::Serialize;

use crate::args::{Algo, CompareArgs, DataArgs, RepresentArgs, RunArgs, SboArgs, TrainArgs};

/// The loop RMSE and the one recomputed from disk must agree this closely.
pub const RMSE_AGREEMENT: f64 = 1e-10;

pub fn workers(run: &RunArgs) -> Result<usize> {
    match run.workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into()).into()),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a dedicated pool of `run.workers` threads.
pub fn in_pool<T: Send>(run: &RunArgs, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers(run)?)
        .build()
        .context("building the worker pool")?;
    pool.install(f)
}

pub fn load_signals(data: &DataArgs) -> Result<Matrix> {
    if let [single] = data.input.as_slice() {
        if single.extension().is_some_and(|e| e == "odm") {
            return Ok(load_matrix(single)?);
        }
    }
    let images = data
        .input
        .iter()
        .map(load_image)
        .collect::<orthodict::Result<Vec<_>>>()?;
    let cfg = PatchConfig {
        patch_edge: data.patch,
        count: data.m,
        seed: data.seed,
        normalization: data.normalization,
    };
    Ok(extract_patches_from_images(&images, &cfg)?)
}

fn sbo_config(sbo: &SboArgs, kmax: usize, seed: u64, chunk_size: usize) -> SboConfig {
    SboConfig {
        s0: sbo.s0,
        k0: sbo.k0,
        p0: sbo.p0,
        rounds: sbo.r,
        worst: sbo.worst,
        k_max: kmax,
        target_error: sbo.target,
        energy: sbo.energy,
        seed,
        chunk_size,
    }
}

fn aksvd_config(atoms: usize, s0: usize, iters: usize, seed: u64, chunk_size: usize) -> AksvdConfig {
    AksvdConfig {
        atoms,
        s0,
        iterations: iters,
        seed,
        chunk_size,
    }
}

/// A trained dictionary with its codes and report.
pub struct Trained {
    pub stored: StoredDictionary,
    pub codes: SparseCodes,
    pub report: TrainReport,
}

pub fn train_model(y: &Matrix, args: &TrainArgs) -> Result<Trained> {
    let seed = args.data.seed;
    let chunk = args.run.chunk_size;
    Ok(match args.algo {
        Algo::Sbo => {
            let cfg = sbo_config(&args.sbo, args.kmax, seed, chunk);
            let out = sbo_train(y.view(), &cfg)?;
            Trained {
                stored: StoredDictionary {
                    dictionary: Dictionary::Union(out.dictionary),
                    s0: cfg.s0,
                    energy: Some(cfg.energy),
                },
                codes: out.representation.codes,
                report: out.report,
            }
        }
        Algo::Aksvd => {
            let cfg = aksvd_config(args.n, args.sbo.s0, args.iters, seed, chunk);
            let out = aksvd_train(y.view(), &cfg)?;
            Trained {
                stored: StoredDictionary {
                    dictionary: Dictionary::Overcomplete(out.dictionary),
                    s0: cfg.s0,
                    energy: None,
                },
                codes: out.codes,
                report: out.report,
            }
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub out: PathBuf,
    pub rmse: f64,
    pub rmse_loop: f64,
    pub report: TrainReport,
}

pub fn dict_path(out: &Path) -> PathBuf {
    out.join("dict.odm")
}

pub fn codes_path(out: &Path) -> PathBuf {
    out.join("codes.odm")
}

pub fn report_path(out: &Path) -> PathBuf {
    out.join("report.json")
}

/// `train`: writes `dict.odm`, `dict.meta.json`, `codes.odm` and
/// `report.json` into `args.out`. The reported RMSE is recomputed from the
/// files just written.
pub fn train(args: &TrainArgs) -> Result<TrainSummary> {
    let y = load_signals(&args.data)?;
    in_pool(&args.run, || {
        let mut trained = train_model(&y, args)?;
        let rmse_loop = trained
            .report
            .final_rmse()
            .ok_or_else(|| Error::Input("training produced no iterations".into()))?;

        std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        persist::save_dictionary(dict_path(&args.out), &trained.stored)?;
        persist::save_codes(codes_path(&args.out), &trained.codes)?;

        let stored = persist::load_dictionary(dict_path(&args.out))?;
        let codes = persist::load_codes(codes_path(&args.out))?;
        let rmse = rmse(y.view(), stored.dictionary.atoms(), &codes)?;
        // also fails on NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let agree = (rmse - rmse_loop).abs() <= RMSE_AGREEMENT * rmse_loop.max(1.0);
        if !agree {
            return Err(numerical(format!(
                "RMSE recomputed from disk ({rmse:e}) disagrees with the training loop ({rmse_loop:e})"
            )));
        }

        let mut config = serde_json::to_value(args).expect("args serialize");
        config["workers"] = rayon::current_num_threads().into();
        config["trainer"] = std::mem::take(&mut trained.report.config);
        trained.report.config = config;

        let summary = TrainSummary {
            out: args.out.clone(),
            rmse,
            rmse_loop,
            report: trained.report,
        };
        write_json(&report_path(&args.out), &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RepresentSummary {
    pub signals: usize,
    pub atoms: usize,
    pub s0: usize,
    pub workers: usize,
    pub t_rep: f64,
    pub rmse: f64,
}

/// One timed representation pass. Returns the codes and the elapsed seconds.
pub fn represent_once(y: &Matrix, stored: &StoredDictionary, s0: usize, chunk_size: usize) -> Result<(SparseCodes, f64)> {
    let dim = stored.dictionary.atoms().signal_dim();
    if y.rows() != dim {
        return Err(Error::Dimension {
            op: "represent",
            detail: format!("signals have p = {}, dictionary has p = {dim}", y.rows()),
        }
        .into());
    }
    if s0 == 0 || chunk_size == 0 {
        return Err(Error::Config("s0 and chunk-size must be at least 1".into()).into());
    }
    let t = Instant::now();
    let codes = match &stored.dictionary {
        Dictionary::Union(d) => {
            let energy = stored.energy.unwrap_or_default();
            represent(y.view(), d, s0, energy, chunk_size).codes
        }
        Dictionary::Overcomplete(d) => batch_omp(y.view(), d, s0, chunk_size).0,
    };
    Ok((codes, t.elapsed().as_secs_f64()))
}

/// `represent`: codes signals with a stored dictionary.
pub fn represent_cmd(args: &RepresentArgs) -> Result<RepresentSummary> {
    let stored = persist::load_dictionary(&args.dict)?;
    let y = load_signals(&args.data)?;
    let s0 = args.s0.unwrap_or(stored.s0);
    in_pool(&args.run, || {
        let (codes, t_rep) = represent_once(&y, &stored, s0, args.run.chunk_size)?;
        let rmse = rmse(y.view(), stored.dictionary.atoms(), &codes)?;
        if let Some(path) = &args.codes {
            persist::save_codes(path, &codes)?;
        }
        let summary = RepresentSummary {
            signals: y.cols(),
            atoms: stored.dictionary.atoms().atom_count(),
            s0,
            workers: rayon::current_num_threads(),
            t_rep,
            rmse,
        };
        if let Some(path) = &args.report {
            write_json(path, &summary)?;
        }
        Ok(summary)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub algo: Algo,
    /// K_max for SBO, atom count for AK-SVD.
    pub param: usize,
    pub t_learn: f64,
    pub t_rep: f64,
    pub rmse: f64,
    pub report: TrainReport,
}

pub const CSV_HEADER: &str = "algo,param,t_learn,t_rep,rmse";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let algo = match self.algo {
            Algo::Sbo => "sbo",
            Algo::Aksvd => "aksvd",
        };
        format!("{algo},{},{:.6},{:.6},{}", self.param, self.t_learn, self.t_rep, self.rmse)
    }
}

/// Trains one configuration, then times a single fresh representation pass
/// with the final dictionary. RMSE comes from the trained codes.
pub fn sweep_row(y: &Matrix, args: &TrainArgs) -> Result<SweepRow> {
    let trained = train_model(y, args)?;
    let (_, t_rep) = represent_once(y, &trained.stored, trained.stored.s0, args.run.chunk_size)?;
    let rmse = rmse(y.view(), trained.stored.dictionary.atoms(), &trained.codes)?;
    Ok(SweepRow {
        algo: args.algo,
        param: match args.algo {
            Algo::Sbo => args.kmax,
            Algo::Aksvd => args.n,
        },
        t_learn: trained.report.t_learn,
        t_rep,
        rmse,
        report: trained.report,
    })
}

/// The train configurations a sweep runs, SBO first.
pub fn sweep_plan(args: &CompareArgs) -> Result<Vec<TrainArgs>> {
    if args.kmax_list.is_empty() && args.n_list.is_empty() {
        return Err(Error::Config("empty sweep: give --kmax-list and/or --n-list".into()).into());
    }
    let base = |algo, kmax, n| TrainArgs {
        algo,
        data: args.data.clone(),
        sbo: args.sbo.clone(),
        kmax,
        n,
        iters: args.iters,
        run: args.run.clone(),
        out: PathBuf::new(),
    };
    let mut plan: Vec<TrainArgs> = args.kmax_list.iter().map(|&k| base(Algo::Sbo, k, 0)).collect();
    plan.extend(args.n_list.iter().map(|&n| base(Algo::Aksvd, 0, n)));
    Ok(plan)
}

pub fn compare_rows(y: &Matrix, args: &CompareArgs) -> Result<Vec<SweepRow>> {
    let plan = sweep_plan(args)?;
    in_pool(&args.run, || plan.iter().map(|t| sweep_row(y, t)).collect())
}

/// `compare`: runs the sweep and writes the CSV table.
pub fn compare(args: &CompareArgs) -> Result<Vec<SweepRow>> {
    sweep_plan(args)?;
    let y = load_signals(&args.data)?;
    let rows = compare_rows(&y, args)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(rows)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Marks an error as a numerical failure (exit code 3).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn numerical(msg: String) -> anyhow::Error {
    NumericalFailure(msg).into()
}
