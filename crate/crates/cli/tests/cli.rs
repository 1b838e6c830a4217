use std::path::{Path, PathBuf};
use std::process::Command;

use orthodict::data::{save_matrix, save_pgm, GrayImage};
use orthodict::persist::{save_dictionary, Dictionary, StoredDictionary};
use orthodict::onb::OrthoBlock;
use orthodict::sbo::{EnergyKind, UnionDictionary};
use orthodict::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_orthodict"));
    c.env_remove("ORTHODICT_WORKERS");
    c
}

fn test_image(dir: &Path) -> PathBuf {
    let pixels: Vec<u8> = (0..48 * 40).map(|i| ((i * 7 + (i / 48) * 13) % 256) as u8).collect();
    let path = dir.join("img.pgm");
    save_pgm(&path, &GrayImage::new(48, 40, pixels).unwrap()).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_train(img: &Path, out: &Path) -> Command {
    let mut c = bin();
    c.args(["train", "--algo", "sbo", "--m", "300", "--patch", "4", "--s0", "2", "--k0", "2"])
        .args(["--p0", "100", "--r", "3", "--kmax", "4", "--seed", "3", "--chunk-size", "32"])
        .arg("--input")
        .arg(img)
        .arg("--out")
        .arg(out);
    c
}

#[test]
fn train_writes_artifacts_and_a_consistent_report() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let out = dir.path().join("run");
    run_ok(&mut small_train(&img, &out));
    for f in ["dict.odm", "dict.meta.json", "codes.odm", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let iterations = report["report"]["iterations"].as_array().unwrap();
    assert_eq!(iterations.last().unwrap()["size"], 4);
    assert!((report["rmse"].as_f64().unwrap() - report["rmse_loop"].as_f64().unwrap()).abs() <= 1e-10);
    assert_eq!(report["report"]["config"]["kmax"], 4);
    assert_eq!(report["report"]["config"]["run"]["chunk_size"], 32);

    // reloading reproduces the training RMSE
    let stdout = run_ok(
        bin()
            .args(["represent", "--m", "300", "--patch", "4", "--seed", "3", "--workers", "2"])
            .arg("--dict")
            .arg(out.join("dict.odm"))
            .arg("--input")
            .arg(&img),
    );
    let rep: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!((rep["rmse"].as_f64().unwrap() - report["rmse"].as_f64().unwrap()).abs() <= 1e-12);
    assert!(rep["t_rep"].as_f64().unwrap() > 0.0);
}

#[test]
fn aksvd_report_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let out = dir.path().join("ak");
    run_ok(
        bin()
            .args(["train", "--algo", "aksvd", "--m", "200", "--patch", "4", "--n", "24", "--iters", "5", "--s0", "2"])
            .arg("--input")
            .arg(&img)
            .arg("--out")
            .arg(&out),
    );
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["iterations"].as_array().unwrap().len(), 5);
    let meta = std::fs::read_to_string(out.join("dict.meta.json")).unwrap();
    assert!(meta.lines().next().unwrap().contains("\"kind\":\"overcomplete\""));
}

#[test]
fn worker_count_does_not_change_the_dictionary() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let mut files = Vec::new();
    for w in ["1", "8"] {
        let out = dir.path().join(format!("w{w}"));
        run_ok(small_train(&img, &out).args(["--workers", w]));
        files.push(std::fs::read(out.join("dict.odm")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn flags_override_the_config_file_and_env_sets_workers() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# sweep settings\nkmax = 3\nchunk_size = 16\n").unwrap();
    let out = dir.path().join("run");
    run_ok(
        small_train(&img, &out)
            .env("ORTHODICT_WORKERS", "3")
            .arg("--config")
            .arg(&cfg),
    );
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let config = &report["report"]["config"];
    // --kmax 4 and --chunk-size 32 are given as flags after the file's values
    assert_eq!(config["kmax"], 4);
    assert_eq!(config["run"]["chunk_size"], 32);
    assert_eq!(config["workers"], 3);

    let out2 = dir.path().join("run2");
    let mut c = bin();
    c.args(["train", "--m", "300", "--patch", "4", "--s0", "2", "--k0", "2", "--p0", "100", "--r", "3"])
        .arg("--input")
        .arg(&img)
        .arg("--out")
        .arg(&out2)
        .arg("--config")
        .arg(&cfg);
    run_ok(&mut c);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["config"]["kmax"], 3);
    assert_eq!(report["report"]["config"]["run"]["chunk_size"], 16);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let status = |c: &mut Command| c.output().unwrap().status.code();

    // empty sweep
    assert_eq!(status(bin().args(["compare", "--m", "100", "--patch", "4"]).arg("--input").arg(&img)), Some(2));
    // k0 above kmax
    assert_eq!(
        status(small_train(&img, &dir.path().join("x")).args(["--k0", "9"])),
        Some(2)
    );
    // unknown flag, missing file, bad config line
    assert_eq!(status(bin().args(["train", "--bogus"])), Some(2));
    assert_eq!(
        status(bin().args(["train", "--input", "/nonexistent.pgm", "--out"]).arg(dir.path().join("y"))),
        Some(2)
    );
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "kmax 4\n").unwrap();
    assert_eq!(
        status(small_train(&img, &dir.path().join("z")).arg("--config").arg(&cfg)),
        Some(2)
    );
    assert_eq!(
        status(small_train(&img, &dir.path().join("w")).args(["--workers", "0"])),
        Some(2)
    );
}

#[test]
fn represent_rejects_a_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let out = dir.path().join("run");
    run_ok(&mut small_train(&img, &out));
    let code = bin()
        .args(["represent", "--m", "50", "--patch", "5"])
        .arg("--dict")
        .arg(out.join("dict.odm"))
        .arg("--input")
        .arg(&img)
        .output()
        .unwrap()
        .status
        .code();
    assert_eq!(code, Some(2));
}

#[test]
fn identity_dictionary_codes_flat_patches_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.pgm");
    save_pgm(&flat, &GrayImage::new(20, 20, vec![140; 400]).unwrap()).unwrap();
    let dict = dir.path().join("id.odm");
    let stored = StoredDictionary {
        dictionary: Dictionary::Union(UnionDictionary::new(vec![OrthoBlock::identity(16)]).unwrap()),
        s0: 2,
        energy: Some(EnergyKind::SquaredSum),
    };
    save_dictionary(&dict, &stored).unwrap();
    let codes = dir.path().join("codes.odm");
    let stdout = run_ok(
        bin()
            .args(["represent", "--m", "64", "--patch", "4", "--normalization", "unit-range-dc-removed"])
            .arg("--dict")
            .arg(&dict)
            .arg("--input")
            .arg(&flat)
            .arg("--codes")
            .arg(&codes),
    );
    let rep: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(rep["rmse"].as_f64().unwrap(), 0.0);
    assert!(codes.exists());
}

#[test]
fn signals_can_come_from_an_odm_file() {
    let dir = tempfile::tempdir().unwrap();
    let y = Matrix::gaussian(6, 120, &mut ChaCha8Rng::seed_from_u64(2));
    let sig = dir.path().join("y.odm");
    save_matrix(&sig, &y).unwrap();
    let out = dir.path().join("run");
    run_ok(
        bin()
            .args(["train", "--s0", "2", "--k0", "1", "--p0", "50", "--kmax", "2", "--r", "2"])
            .arg("--input")
            .arg(&sig)
            .arg("--out")
            .arg(&out),
    );
    let meta = std::fs::read_to_string(out.join("dict.meta.json")).unwrap();
    assert!(meta.contains("\"signal_dim\":6"));
}

#[test]
fn compare_writes_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(dir.path());
    let csv = dir.path().join("sweep.csv");
    let args = |out: &Path| {
        let mut c = bin();
        c.args(["compare", "--m", "300", "--patch", "4", "--s0", "2", "--k0", "2", "--p0", "100", "--r", "3"])
            .args(["--kmax-list", "2,3,4", "--n-list", "20", "--iters", "3", "--seed", "5"])
            .arg("--input")
            .arg(&img)
            .arg("--out")
            .arg(out);
        c
    };
    run_ok(&mut args(&csv));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "algo,param,t_learn,t_rep,rmse");
    assert_eq!(lines.len(), 5);
    let rmse: Vec<f64> = lines[1..4].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(rmse.windows(2).all(|w| w[1] <= w[0]), "{rmse:?}");
    assert!(lines[4].starts_with("aksvd,20,"));

    // a rerun differs at most in the timing columns
    let csv2 = dir.path().join("sweep2.csv");
    run_ok(&mut args(&csv2));
    let strip = |t: &str| -> Vec<String> {
        t.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{},{}", f[0], f[1], f[4])
            })
            .collect()
    };
    assert_eq!(strip(&text), strip(&std::fs::read_to_string(&csv2).unwrap()));
}
