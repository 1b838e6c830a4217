use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    derive_seed, group_by_block, represent, represent_new_block, worst_set, Representation,
    SboConfig, UnionDictionary,
};
use crate::error::{Error, Result};
use crate::linalg::{rmse, MatRef};
use crate::onb::{init_onb, train_onb, OrthoBlock};
use crate::report::{IterationRecord, TrainReport};

const TAG_INIT_SAMPLE: u64 = 1;
const TAG_INIT_BASIS: u64 = 2;
const TAG_NEW_BASIS: u64 = 3;

#[derive(Debug, Clone)]
pub struct SboOutcome {
    pub dictionary: UnionDictionary,
    pub representation: Representation,
    pub report: TrainReport,
}

fn check_signals(y: MatRef<'_>) -> Result<()> {
    if y.rows() == 0 || y.cols() == 0 {
        return Err(Error::Input(format!(
            "signal matrix is empty ({}x{})",
            y.rows(),
            y.cols()
        )));
    }
    if y.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("signal matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Trains `k0` blocks, each on its own random sample of `p0` signals.
///
/// Returns the dictionary and any warnings (sampling with replacement when
/// `p0` exceeds the number of signals).
pub fn sbo_init(y: MatRef<'_>, cfg: &SboConfig) -> Result<(UnionDictionary, Vec<String>)> {
    cfg.validate()?;
    check_signals(y)?;
    let m = y.cols();
    let mut warnings = Vec::new();
    let replace = cfg.p0 > m;
    if replace {
        warnings.push(format!(
            "p0 = {} exceeds the {m} available signals; initial samples drawn with replacement",
            cfg.p0
        ));
    }
    let blocks: Vec<Result<OrthoBlock>> = (0..cfg.k0)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_INIT_SAMPLE, b as u64));
            let mut picks: Vec<usize> = if replace {
                (0..cfg.p0).map(|_| rng.random_range(0..m)).collect()
            } else {
                index::sample(&mut rng, m, cfg.p0).into_vec()
            };
            picks.sort_unstable();
            let sub = y.to_owned().select_columns(&picks);
            let q0 = init_onb(sub.view(), derive_seed(cfg.seed, TAG_INIT_BASIS, b as u64))?;
            Ok(train_onb(sub.view(), &q0, cfg.s0, cfg.rounds)?.block)
        })
        .collect();
    let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((UnionDictionary::new(blocks)?, warnings))
}

/// Full SBO training loop.
///
/// After initialization, each iteration trains a new block on the worst
/// represented signals, re-represents, refines every block on the signals
/// that chose it and re-represents again. Stops when the RMSE reaches
/// `target_error` or the dictionary holds `k_max` blocks.
pub fn sbo_train(y: MatRef<'_>, cfg: &SboConfig) -> Result<SboOutcome> {
    cfg.validate()?;
    check_signals(y)?;
    let (p, m) = (y.rows(), y.cols());
    let w = cfg.worst_set_size(p, m);
    let mut echo = serde_json::to_value(cfg).expect("config serializes");
    echo["worst_effective"] = w.into();
    let mut report = TrainReport::new("sbo", echo, cfg.seed, p, m);

    let t_start = Instant::now();
    let (mut dict, warnings) = sbo_init(y, cfg)?;
    report.t_init = t_start.elapsed().as_secs_f64();
    report.warnings = warnings;

    let t_rep = Instant::now();
    let mut rep = represent(y, &dict, cfg.s0, cfg.energy, cfg.chunk_size);
    let rep_secs = t_rep.elapsed().as_secs_f64();
    let mut current = rmse(y, &dict, &rep.codes)?;
    report.iterations.push(IterationRecord {
        iteration: 0,
        size: dict.len(),
        rmse: current,
        elapsed_learn: t_start.elapsed().as_secs_f64(),
        elapsed_represent: rep_secs,
        idle_blocks: Vec::new(),
        max_defect: Some(dict.max_orthonormality_defect()),
    });

    let mut iteration = 0;
    while current > cfg.target_error && dict.len() < cfg.k_max {
        iteration += 1;
        let t_iter = Instant::now();
        let k = dict.len();

        // grow: new block from the worst-represented signals
        let worst = worst_set(&rep.assignments, w);
        let sub = y.to_owned().select_columns(&worst);
        let q0 = init_onb(sub.view(), derive_seed(cfg.seed, TAG_NEW_BASIS, k as u64))?;
        dict.push(train_onb(sub.view(), &q0, cfg.s0, cfg.rounds)?.block);

        let t = Instant::now();
        rep = represent_new_block(y, &dict, &rep, cfg.s0, cfg.energy, cfg.chunk_size);
        let mut rep_secs = t.elapsed().as_secs_f64();

        // refine each block on its own signals
        let groups = group_by_block(y, &rep.assignments, dict.len());
        let trained: Vec<Result<Option<OrthoBlock>>> = (0..dict.len())
            .into_par_iter()
            .map(|j| {
                let users = groups.block(j);
                if users.cols() == 0 {
                    return Ok(None);
                }
                Ok(Some(train_onb(users, dict.block(j), cfg.s0, cfg.rounds)?.block))
            })
            .collect();
        let mut idle = Vec::new();
        for (j, t) in trained.into_iter().enumerate() {
            match t? {
                Some(block) => dict.replace(j, block),
                None => idle.push(j),
            }
        }

        let t = Instant::now();
        rep = represent(y, &dict, cfg.s0, cfg.energy, cfg.chunk_size);
        rep_secs += t.elapsed().as_secs_f64();

        current = rmse(y, &dict, &rep.codes)?;
        report.iterations.push(IterationRecord {
            iteration,
            size: dict.len(),
            rmse: current,
            elapsed_learn: t_iter.elapsed().as_secs_f64(),
            elapsed_represent: rep_secs,
            idle_blocks: idle,
            max_defect: Some(dict.max_orthonormality_defect()),
        });
    }
    report.t_learn = t_start.elapsed().as_secs_f64();

    Ok(SboOutcome {
        dictionary: dict,
        representation: rep,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::sbo::EnergyKind;

    fn small_cfg() -> SboConfig {
        SboConfig {
            s0: 2,
            k0: 2,
            p0: 40,
            rounds: 3,
            worst: Some(20),
            k_max: 4,
            seed: 3,
            chunk_size: 16,
            ..Default::default()
        }
    }

    #[test]
    fn grows_to_k_max_with_zero_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = Matrix::gaussian(6, 150, &mut rng);
        let out = sbo_train(y.view(), &small_cfg()).unwrap();
        assert_eq!(out.dictionary.len(), 4);
        assert_eq!(out.report.iterations.len(), 3);
        assert!(out.dictionary.max_orthonormality_defect() <= 1e-8);
        let trace = out.report.rmse_trace();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{trace:?}");
        }
    }

    #[test]
    fn oversized_p0_warns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Matrix::gaussian(4, 10, &mut rng);
        let cfg = SboConfig {
            k_max: 2,
            ..small_cfg()
        };
        let (d, warnings) = sbo_init(y.view(), &cfg).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(warnings.len(), 1);
        let out = sbo_train(y.view(), &cfg).unwrap();
        assert_eq!(out.report.warnings.len(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        let y = Matrix::zeros(4, 0);
        assert!(sbo_train(y.view(), &small_cfg()).is_err());
        let mut y = Matrix::zeros(4, 3);
        y[(0, 0)] = f64::INFINITY;
        assert!(sbo_train(y.view(), &small_cfg()).is_err());
        let cfg = SboConfig {
            energy: EnergyKind::AbsSum,
            k0: 0,
            ..small_cfg()
        };
        assert!(matches!(
            sbo_train(Matrix::identity(4).view(), &cfg),
            Err(Error::Config(_))
        ));
    }
}
