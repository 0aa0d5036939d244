use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn envlang(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_envlang"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("ENVLANG_WORKERS")
        .output()
        .expect("spawn envlang")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL_D2: &str = r#"
experiment = "truncgauss"
seed = 11
[truncgauss]
dim = 2
n_iter = 4000
chains = 2
write_samples = true
diagnostics_stride = 1000
[fig1]
gammas = [0.05, 0.3]
nodes = 60
"#;

const SMALL_TOMO: &str = r#"
experiment = "tomography"
seed = 7
[tomography]
size = 8
n_iter = 400
mse_stride = 50
trace_stride = 10
"#;

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    envlang(&args)
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn shipped_configs_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let out = envlang(&["validate", "--config", p.to_str().unwrap()]);
            assert_eq!(code(&out), 0, "{}: {}", p.display(), String::from_utf8_lossy(&out.stderr));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn truncated_gaussian_bundle_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d2.toml", SMALL_D2);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&run_into(&cfg, &a, &[])), 0);
    assert_eq!(code(&run_into(&cfg, &b, &["--workers", "1"])), 0);
    let files = dir_bytes(&a);
    assert_eq!(files, dir_bytes(&b));
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    for expected in [
        "boxplot_d2.csv",
        "fig1_mean.csv",
        "fig1_var.csv",
        "samples_myula.csv",
        "samples_fbula.csv",
        "samples_gibbs.csv",
        "diagnostics_myula.csv",
        "diagnostics_fbula.csv",
        "summary_d2.csv",
    ] {
        assert!(names.contains(&expected), "missing {expected}: {names:?}");
    }
    assert!(!names.iter().any(|n| n.starts_with(".tmp")), "stray temporary file");

    assert_eq!(code(&run_into(&cfg, &c, &["--seed", "12"])), 0);
    assert_ne!(fs::read(a.join("boxplot_d2.csv")).unwrap(), fs::read(c.join("boxplot_d2.csv")).unwrap());
}

#[test]
fn csv_files_have_headers_and_round_trip_floats() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d2.toml", SMALL_D2);
    let out = tmp.path().join("o");
    assert_eq!(code(&run_into(&cfg, &out, &[])), 0);

    let (header, rows) = csv_rows(&out.join("fig1_mean.csv"));
    assert_eq!(header, ["gamma", "truth", "myula", "fbula", "refinement_change"]);
    assert_eq!(rows.len(), 2);
    // FB is not defined at gamma = 0.3 for this target.
    assert!(!rows[0][3].is_empty() && rows[1][3].is_empty());

    let (header, rows) = csv_rows(&out.join("boxplot_d2.csv"));
    assert_eq!(header, ["method", "chain", "x1", "x2"]);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        for cell in &r[2..] {
            let (mantissa, _) = cell.split_once('e').expect("scientific notation");
            let digits = mantissa.chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 17, "{cell}");
            cell.parse::<f64>().unwrap();
        }
    }
    let (_, samples) = csv_rows(&out.join("samples_fbula.csv"));
    assert_eq!(samples.len(), 2 * 3600);
}

#[test]
fn tomography_bundle() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tomo.toml", SMALL_TOMO);
    let out = tmp.path().join("t");
    let res = run_into(&cfg, &out, &[]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&out.join("tomo_logpi.csv"));
    assert_eq!(header, ["iteration", "myula", "fbula"]);
    assert_eq!(rows.len(), 40);
    let (_, mse) = csv_rows(&out.join("tomo_mse.csv"));
    assert!(!mse.is_empty());
    for name in ["tomo_truth.pgm", "tomo_posterior_mean_myula.pgm", "tomo_posterior_mean_fbula.pgm"] {
        let img = fs::read(out.join(name)).unwrap();
        assert!(img.starts_with(b"P5\n8 8\n65535\n"), "{name}");
        assert_eq!(img.len(), b"P5\n8 8\n65535\n".len() + 2 * 64);
    }
    let again = tmp.path().join("t2");
    assert_eq!(code(&run_into(&cfg, &again, &["--seed", "7"])), 0);
    assert_eq!(dir_bytes(&out), dir_bytes(&again));
}

#[test]
fn distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let unknown = write_config(tmp.path(), "u.toml", "experiment = \"mala\"\n");
    assert_eq!(code(&run_into(&unknown, &out, &[])), 3);
    assert_eq!(code(&envlang(&["validate", "--config", unknown.to_str().unwrap()])), 3);

    let bad_gamma = write_config(tmp.path(), "g.toml", &SMALL_D2.replace("n_iter = 4000", "n_iter = 4000\ngamma = 0.25"));
    assert_eq!(code(&run_into(&bad_gamma, &out, &[])), 4);
    let bad_h = write_config(tmp.path(), "h.toml", &SMALL_D2.replace("n_iter = 4000", "n_iter = 4000\nh = -0.1"));
    assert_eq!(code(&run_into(&bad_h, &out, &[])), 4);

    let good = write_config(tmp.path(), "d2.toml", SMALL_D2);
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, b"").unwrap();
    assert_eq!(code(&run_into(&good, &blocker.join("sub"), &[])), 5);

    let malformed = write_config(tmp.path(), "m.toml", "experiment = \n");
    assert_eq!(code(&run_into(&malformed, &out, &[])), 2);
    let typo = write_config(tmp.path(), "t.toml", "experiment = \"truncgauss\"\nseeed = 1\n");
    assert_eq!(code(&run_into(&typo, &out, &[])), 2);
    assert_eq!(code(&envlang(&["run", "--config", tmp.path().join("missing.toml").to_str().unwrap()])), 2);
    // Validation never writes output.
    assert!(!out.exists());
}

fn theory(dir: &Path, gammas: &str) -> (Output, PathBuf) {
    let cfg = write_config(
        dir,
        "theory.toml",
        &format!("[theory]\ndim = 2\ngammas = {gammas}\nmethod = \"quadrature\"\nnodes = 80\n"),
    );
    let out = dir.join("th");
    let res = envlang(&["theory", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (res, out)
}

#[test]
fn theory_report_rows() {
    let tmp = TempDir::new().unwrap();
    let (res, out) = theory(tmp.path(), "[0.2, 0.1, 0.05]");
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&out.join("theory_bounds.csv"));
    assert_eq!(rows.len(), 3);
    let bound = header.iter().position(|h| h == "bound").unwrap();
    let c4 = header.iter().position(|h| h == "c4").unwrap();
    for r in &rows {
        assert_eq!(r[1], "true");
        let b: f64 = r[bound].parse().unwrap();
        assert!(b.is_finite() && b > 0.0);
        assert_eq!(r[c4].parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(String::from_utf8_lossy(&res.stdout).lines().filter(|l| l.trim_start().starts_with("0.")).count(), 3);
}

#[test]
fn theory_marks_inadmissible_gamma() {
    let tmp = TempDir::new().unwrap();
    let (res, out) = theory(tmp.path(), "[0.3, 0.1]");
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stderr).contains("invalid"));
    let (_, rows) = csv_rows(&out.join("theory_bounds.csv"));
    assert_eq!(rows[0][1], "false");
    assert_eq!(rows[1][1], "true");
}

#[test]
fn theory_rejects_empty_grid() {
    let tmp = TempDir::new().unwrap();
    let (res, out) = theory(tmp.path(), "[]");
    assert_eq!(code(&res), 2);
    assert!(!out.exists());
}
