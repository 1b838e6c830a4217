//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured values, then exits non-zero if any criterion failed that is not
//! listed in `KNOWN_FAILING`.
//!
//! The desk-scale runs use m = 8192 8×8 patches (p = 64) drawn with seed 1
//! from the four images in `data/images`, unit-range normalized.

use std::path::PathBuf;
use std::time::Instant;

use orthodict::baseline::{omp, OvercompleteDictionary};
use orthodict::data::{load_matrices, load_matrix, save_matrices, save_matrix};
use orthodict::linalg::{procrustes_polar, rmse};
use orthodict::onb::{init_onb, select_top, train_onb, OrthoBlock};
use orthodict::persist;
use orthodict::sbo::{represent, EnergyKind, UnionDictionary};
use orthodict::Matrix;
use orthodict_cli::commands::{self, SweepRow};
use orthodict_cli::{parse, run, Algo, CompareArgs, DataArgs, Outcome, RunArgs, SboArgs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail on this hardware for reasons analysed in the project
/// notes. They are still measured and printed as FAIL.
const KNOWN_FAILING: &[&str] = &["8a"];

const DESK_KMAX: [usize; 5] = [8, 16, 24, 32, 64];
/// Published desk-scale RMSE for the same sweep; the checks only require
/// agreement within a factor of two.
const REFERENCE_SBO_RMSE: [f64; 5] = [0.0268, 0.0245, 0.0240, 0.0238, 0.0235];
const REFERENCE_AKSVD_RMSE_N128: f64 = 0.0242;

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Check {
    Check { id, pass, detail }
}

fn images() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/images");
    ["camera.pgm", "astronaut.ppm", "coins.pgm", "chelsea.ppm"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

fn desk_data() -> DataArgs {
    DataArgs {
        input: images(),
        m: 8192,
        patch: 8,
        normalization: Default::default(),
        seed: 1,
    }
}

fn desk_sbo() -> SboArgs {
    SboArgs {
        s0: 8,
        k0: 5,
        p0: 4096,
        r: 6,
        worst: None,
        target: 0.0,
        energy: EnergyKind::SquaredSum,
    }
}

fn run_args(workers: Option<usize>) -> RunArgs {
    RunArgs {
        workers,
        chunk_size: 256,
        config: None,
    }
}

fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> Matrix {
    procrustes_polar(&Matrix::gaussian(p, p, rng)).unwrap()
}

fn naive_coefficients(q: &Matrix, y: &[f64]) -> Vec<f64> {
    (0..q.cols())
        .map(|i| (0..q.rows()).map(|r| q[(r, i)] * y[r]).sum())
        .collect()
}

fn trace_tp(q: &Matrix, p: &Matrix) -> f64 {
    let n = q.rows();
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..n {
            t += q[(j, i)] * p[(j, i)];
        }
    }
    t
}

fn nonincreasing(xs: &[f64], rel: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] * (1.0 + rel))
}

// criterion 1 is checked on the desk runs plus these fresh blocks
fn c1_orthonormality(rows: &[SweepRow]) -> Check {
    let mut worst = 0.0f64;
    let mut records = 0;
    for r in rows.iter().filter(|r| r.algo == Algo::Sbo) {
        for it in &r.report.iterations {
            worst = worst.max(it.max_defect.unwrap_or(f64::INFINITY));
            records += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for seed in 0..20 {
        let y = Matrix::gaussian(16, 40, &mut rng);
        let q0 = init_onb(y.view(), seed).unwrap();
        worst = worst.max(q0.matrix().orthonormality_defect());
        for rounds in 1..=6 {
            let q = train_onb(y.view(), &q0, 3, rounds).unwrap().block;
            worst = worst.max(q.matrix().orthonormality_defect());
            records += 1;
        }
    }
    check(
        "1",
        worst <= 1e-8,
        format!("max ‖QᵀQ−I‖_F = {worst:.3e} over {records} snapshots (bound 1e-8)"),
    )
}

fn c2_onb_monotone() -> Check {
    let mut bad = 0;
    let mut worst_ratio = 0.0f64;
    for inst in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + inst);
        let y = Matrix::gaussian(8, 256, &mut rng);
        let q0 = init_onb(y.view(), inst).unwrap();
        let e = train_onb(y.view(), &q0, 3, 6).unwrap().errors;
        for w in e.windows(2) {
            worst_ratio = worst_ratio.max(w[1] / w[0] - 1.0);
        }
        if !nonincreasing(&e, 1e-12) {
            bad += 1;
        }
    }
    check(
        "2",
        bad == 0,
        format!("{bad}/50 instances violate; largest relative increase {worst_ratio:.3e}"),
    )
}

fn c3_procrustes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut worst_gap = f64::INFINITY;
    for _ in 0..20 {
        let p = Matrix::gaussian(8, 8, &mut rng);
        let q = procrustes_polar(&p).unwrap();
        let tq = trace_tp(&q, &p);
        for _ in 0..1000 {
            let o = random_orthogonal(8, &mut rng);
            worst_gap = worst_gap.min(tq - trace_tp(&o, &p));
        }
    }
    check(
        "3",
        worst_gap >= -1e-10,
        format!("min trace(QᵀP) − trace(OᵀP) = {worst_gap:.3e} over 20×1000"),
    )
}

fn c4_represent_oracle() -> Check {
    let (p, k, m) = (4, 3, 100);
    let mut mismatches = 0;
    let mut cases = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let blocks: Vec<Matrix> = (0..k).map(|_| random_orthogonal(p, &mut rng)).collect();
        let d = UnionDictionary::new(blocks.iter().cloned().map(|q| OrthoBlock::new(q).unwrap()).collect()).unwrap();
        let y = Matrix::gaussian(p, m, &mut rng);
        for kind in [EnergyKind::SquaredSum, EnergyKind::AbsSum] {
            for s0 in 1..=3 {
                let rep = represent(y.view(), &d, s0, kind, 7);
                for j in 0..m {
                    cases += 1;
                    // brute force: every block, coefficients by plain loops
                    let mut best = (0, f64::NEG_INFINITY, Vec::new());
                    for (b, q) in blocks.iter().enumerate() {
                        let c = naive_coefficients(q, y.col(j));
                        let mut order: Vec<usize> = (0..p).collect();
                        order.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
                        let mut kept: Vec<usize> = order[..s0].to_vec();
                        kept.sort_unstable();
                        let e: f64 = kept.iter().map(|&i| kind.magnitude(c[i])).sum();
                        if e > best.1 {
                            best = (b, e, kept.iter().map(|&i| (b * p + i, c[i])).collect());
                        }
                    }
                    let (idx, val) = rep.codes.column(j);
                    let same_block = rep.assignments[j].block == best.0;
                    let same_support = idx.iter().copied().eq(best.2.iter().map(|t| t.0));
                    let same_values = val.iter().zip(&best.2).all(|(a, t)| (a - t.1).abs() <= 1e-12);
                    if !(same_block && same_support && same_values) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    check(
        "4",
        mismatches == 0,
        format!("{mismatches} mismatches in {cases} (signal, s0, energy) cases"),
    )
}

fn c5_coding_optimality() -> Check {
    let p = 6;
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for s0 in 1..=3usize {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + s0 as u64);
        for _ in 0..100 {
            let q = random_orthogonal(p, &mut rng);
            let y: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = naive_coefficients(&q, &y);
            let resid = |support: &[usize]| -> f64 {
                // least squares on an orthonormal support: project and subtract
                let mut r = y.clone();
                for &i in support {
                    for row in 0..p {
                        r[row] -= q[(row, i)] * c[i];
                    }
                }
                r.iter().map(|v| v * v).sum()
            };
            let (sel, _) = select_top(&c, s0);
            let got = resid(&sel);
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << p) {
                if mask.count_ones() as usize == s0 {
                    let s: Vec<usize> = (0..p).filter(|&i| mask >> i & 1 == 1).collect();
                    best = best.min(resid(&s));
                }
            }
            worst = worst.max(got - best);
            cases += 1;
        }
    }
    check(
        "5",
        worst <= 1e-12,
        format!("max excess residual² over brute force = {worst:.3e} on {cases} pairs"),
    )
}

fn c6_sbo_monotone(rows: &[SweepRow]) -> Check {
    let r = rows.iter().find(|r| r.algo == Algo::Sbo && r.param == 16).expect("K_max = 16 row");
    let trace = r.report.rmse_trace();
    check(
        "6",
        nonincreasing(&trace, 1e-12),
        format!(
            "K_max=16 trace over {} iterations: {:.5} → {:.5}",
            trace.len(),
            trace[0],
            trace[trace.len() - 1]
        ),
    )
}

fn c7_rmse_curve(rows: &[SweepRow]) -> Check {
    let rmse: Vec<f64> = DESK_KMAX
        .iter()
        .map(|&k| rows.iter().find(|r| r.algo == Algo::Sbo && r.param == k).expect("sweep row").rmse)
        .collect();
    let monotone = rmse.windows(2).all(|w| w[1] <= w[0]);
    let in_band = rmse
        .iter()
        .zip(REFERENCE_SBO_RMSE)
        .all(|(&got, want)| got >= 0.5 * want && got <= 2.0 * want);
    let shown: Vec<String> = rmse.iter().map(|v| format!("{v:.4}")).collect();
    check(
        "7",
        monotone && in_band,
        format!(
            "RMSE at K_max {:?} = [{}], non-increasing: {monotone}, within [0.5×, 2×] of reference: {in_band}",
            DESK_KMAX,
            shown.join(", ")
        ),
    )
}

fn c8_speed(rows: &[SweepRow]) -> (Check, Check) {
    let sbo = rows.iter().find(|r| r.algo == Algo::Sbo && r.param == 64).expect("K=64 row");
    let base = rows.iter().find(|r| r.algo == Algo::Aksvd && r.param == 256).expect("n=256 row");
    let ratio = base.t_rep / sbo.t_rep;
    (
        check(
            "8a",
            ratio >= 10.0,
            format!(
                "t_rep SBO(K=64) {:.4}s vs OMP(n=256) {:.4}s: {ratio:.2}× (need ≥ 10×)",
                sbo.t_rep, base.t_rep
            ),
        ),
        check(
            "8b",
            sbo.t_learn < base.t_learn,
            format!(
                "t_learn SBO(K_max=64) {:.2}s vs AK-SVD(n=256, 100 it) {:.2}s",
                sbo.t_learn, base.t_learn
            ),
        ),
    )
}

fn c9_determinism(dir: &std::path::Path) -> Check {
    let mut files = Vec::new();
    for w in [1, 8] {
        let out = dir.join(format!("w{w}"));
        let mut argv: Vec<String> = ["orthodict", "train", "--algo", "sbo"].map(String::from).to_vec();
        argv.push("--input".into());
        argv.extend(images().iter().map(|p| p.display().to_string()));
        for (k, v) in [
            ("--m", "8192"),
            ("--s0", "8"),
            ("--k0", "5"),
            ("--r", "6"),
            ("--kmax", "16"),
            ("--seed", "1"),
            ("--workers", if w == 1 { "1" } else { "8" }),
        ] {
            argv.push(k.into());
            argv.push(v.into());
        }
        argv.push("--out".into());
        argv.push(out.display().to_string());
        let cli = parse(argv.into_iter().map(Into::into).collect()).unwrap();
        match run(&cli).unwrap() {
            Outcome::Train(_) => {}
            _ => unreachable!(),
        }
        files.push((
            std::fs::read(out.join("dict.odm")).unwrap(),
            std::fs::read(out.join("dict.meta.json")).unwrap(),
        ));
    }
    let same = files[0] == files[1];
    check(
        "9",
        same,
        format!(
            "dict.odm ({} bytes) and dict.meta.json identical for 1 vs 8 workers: {same}",
            files[0].0.len()
        ),
    )
}

fn c10_baseline(rows: &[SweepRow]) -> (Check, Check) {
    let r = rows.iter().find(|r| r.algo == Algo::Aksvd && r.param == 128).expect("n=128 row");
    let lo = 0.5 * REFERENCE_AKSVD_RMSE_N128;
    let hi = 2.0 * REFERENCE_AKSVD_RMSE_N128;
    let a = check(
        "10a",
        r.rmse >= lo && r.rmse <= hi,
        format!("AK-SVD n=128 RMSE {:.4} (band [{lo:.4}, {hi:.4}])", r.rmse),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let p = 4 + case % 13;
        let s0 = 1 + case % p.min(6);
        let q = random_orthogonal(p, &mut rng);
        let block = OrthoBlock::new(q.clone()).unwrap();
        let d = OvercompleteDictionary::new(q).unwrap();
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; p];
        block.coefficients(&y, &mut c);
        let (idx, val) = select_top(&c, s0);
        let res = omp(&y, &d, s0);
        let mut order: Vec<usize> = (0..res.indices.len()).collect();
        order.sort_by_key(|&i| res.indices[i]);
        let got_idx: Vec<usize> = order.iter().map(|&i| res.indices[i]).collect();
        if got_idx != idx {
            mismatches += 1;
            continue;
        }
        for (&i, &v) in order.iter().zip(&val) {
            worst = worst.max((res.values[i] - v).abs());
        }
    }
    let b = check(
        "10b",
        mismatches == 0 && worst <= 1e-12,
        format!("{mismatches}/1000 support mismatches, max |value diff| {worst:.3e}"),
    );
    (a, b)
}

fn c11_persistence(dir: &std::path::Path) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let mut mats = vec![
        Matrix::gaussian(7, 5, &mut rng),
        Matrix::from_col_major(1, 1, vec![2.5]).unwrap(),
        Matrix::from_col_major(2, 2, vec![f64::MIN_POSITIVE, -0.0, f64::MAX, 1e-310]).unwrap(),
        Matrix::zeros(3, 0),
    ];
    mats[0][(0, 0)] = f64::EPSILON;
    let one = dir.join("one.odm");
    let many = dir.join("many.odm");
    save_matrix(&one, &mats[0]).unwrap();
    save_matrices(&many, &mats).unwrap();
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let back_one = load_matrix(&one).unwrap();
    let back_many = load_matrices(&many).unwrap();
    let matrices_exact = bits(&back_one) == bits(&mats[0])
        && back_many.len() == mats.len()
        && back_many
            .iter()
            .zip(&mats)
            .all(|(a, b)| a.shape() == b.shape() && bits(a) == bits(b));

    // the determinism run left a trained dictionary and its report behind
    let out = dir.join("w1");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let reported = report["rmse_loop"].as_f64().unwrap();
    let stored = persist::load_dictionary(out.join("dict.odm")).unwrap();
    let codes = persist::load_codes(out.join("codes.odm")).unwrap();
    let y = commands::load_signals(&desk_data()).unwrap();
    let from_files = rmse(y.view(), stored.dictionary.atoms(), &codes).unwrap();
    let (fresh_codes, _) = commands::represent_once(&y, &stored, stored.s0, 256).unwrap();
    let fresh = rmse(y.view(), stored.dictionary.atoms(), &fresh_codes).unwrap();

    let resaved = dir.join("resaved.odm");
    persist::save_dictionary(&resaved, &stored).unwrap();
    let dict_exact = std::fs::read(&resaved).unwrap() == std::fs::read(out.join("dict.odm")).unwrap();

    let d1 = (from_files - reported).abs();
    let d2 = (fresh - reported).abs();
    check(
        "11",
        matrices_exact && dict_exact && d1 <= 1e-12 && d2 <= 1e-12,
        format!(
            "matrices bit-exact: {matrices_exact}, dictionary re-save identical: {dict_exact}, \
             |RMSE(files) − report| = {d1:.1e}, |RMSE(fresh represent) − report| = {d2:.1e}"
        ),
    )
}

fn main() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut results = vec![
        c2_onb_monotone(),
        c3_procrustes(),
        c4_represent_oracle(),
        c5_coding_optimality(),
    ];

    // the desk sweep feeds criteria 1, 6, 7, 8 and 10a
    let sweep = CompareArgs {
        data: desk_data(),
        sbo: desk_sbo(),
        kmax_list: DESK_KMAX.to_vec(),
        n_list: vec![128, 256],
        iters: 100,
        run: run_args(None),
        out: None,
    };
    let y = commands::load_signals(&sweep.data).unwrap();
    let rows = commands::compare_rows(&y, &sweep).unwrap();
    for r in &rows {
        eprintln!(
            "  sweep {:?} {}: t_learn {:.2}s t_rep {:.4}s rmse {:.5}",
            r.algo, r.param, r.t_learn, r.t_rep, r.rmse
        );
    }

    results.insert(0, c1_orthonormality(&rows));
    results.push(c6_sbo_monotone(&rows));
    results.push(c7_rmse_curve(&rows));
    let (a, b) = c8_speed(&rows);
    results.push(a);
    results.push(b);
    results.push(c9_determinism(tmp.path()));
    let (a, b) = c10_baseline(&rows);
    results.push(a);
    results.push(b);
    results.push(c11_persistence(tmp.path()));

    let mut unexpected = Vec::new();
    for r in &results {
        let known = KNOWN_FAILING.contains(&r.id);
        let tag = match (r.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>3}: {tag}  {}", r.id, r.detail);
        if !r.pass && !known {
            unexpected.push(r.id);
        }
    }
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
