//! End-to-end exercises of the command-line surface: file formats, exit
//! codes, determinism and solver wiring.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rpca(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpca"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn rpca")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).expect("read file")
}

fn gen_small(dir: &Path, prefix: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "gen", "--type", "a", "--n", "24", "--m", "24", "--rank", "2", "--rho", "0.1", "--seed",
        "7", "--out-prefix", prefix,
    ];
    args.extend_from_slice(extra);
    let out = rpca(&args, dir);
    assert_eq!(code(&out), 0, "gen failed: {}", String::from_utf8_lossy(&out.stderr));
    dir.join(prefix)
}

#[test]
fn gen_writes_consistent_deterministic_files() {
    let tmp = TempDir::new().unwrap();
    gen_small(tmp.path(), "inst", &[]);
    for suffix in [".y", ".z", ".e", ".omega"] {
        assert!(tmp.path().join(format!("inst{suffix}")).exists());
    }
    // y = z + e as written.
    let y = rpca_core::io::read_matrix(&tmp.path().join("inst.y")).unwrap();
    let z = rpca_core::io::read_matrix(&tmp.path().join("inst.z")).unwrap();
    let e = rpca_core::io::read_matrix(&tmp.path().join("inst.e")).unwrap();
    for ((a, b), c) in y.iter().zip(z.iter()).zip(e.iter()) {
        assert_eq!(*a, b + c);
    }
    // Same flags produce identical bytes.
    gen_small(tmp.path(), "again", &[]);
    for suffix in [".y", ".z", ".e", ".omega"] {
        assert_eq!(
            read(&tmp.path().join(format!("inst{suffix}"))),
            read(&tmp.path().join(format!("again{suffix}"))),
            "mismatch on {suffix}"
        );
    }
}

#[test]
fn gen_rejects_bad_rank_with_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = rpca(
        &[
            "gen", "--type", "a", "--n", "100", "--m", "100", "--rank", "200", "--rho", "0.1",
            "--seed", "1", "--out-prefix", "x",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_flags_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = rpca(&["gen", "--frobnicate"], tmp.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn solve_pb_then_compare_recovers() {
    let tmp = TempDir::new().unwrap();
    gen_small(tmp.path(), "inst", &[]);
    let out = rpca(
        &[
            "solve", "--method", "pb", "--in", "inst.y", "--out-z", "zhat.mat", "--out-e",
            "ehat.mat",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("method=pb iters="), "summary line: {stdout}");
    assert!(stdout.contains("converged=true"));

    let cmp = rpca(&["compare", "--a", "inst.z", "--b", "zhat.mat"], tmp.path());
    assert_eq!(code(&cmp), 0);
    let text = String::from_utf8_lossy(&cmp.stdout);
    let value: f64 = text.trim().strip_prefix("nrmse=").unwrap().parse().unwrap();
    assert!(value < 1e-3, "nrmse {value}");
}

#[test]
fn solve_mc_requires_omega_and_uses_it() {
    let tmp = TempDir::new().unwrap();
    gen_small(tmp.path(), "inst", &[]);
    let out = rpca(
        &["solve", "--method", "mc", "--in", "inst.y", "--out-z", "zmc.mat"],
        tmp.path(),
    );
    assert_eq!(code(&out), 1, "mc without omega must be an argument error");

    let out = rpca(
        &[
            "solve", "--method", "mc", "--in", "inst.y", "--out-z", "zmc.mat", "--omega",
            "inst.omega",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cmp = rpca(&["compare", "--a", "inst.z", "--b", "zmc.mat"], tmp.path());
    let text = String::from_utf8_lossy(&cmp.stdout);
    let value: f64 = text.trim().strip_prefix("nrmse=").unwrap().parse().unwrap();
    assert!(value < 1e-3, "mc nrmse {value}");
}

#[test]
fn solve_zero_matrix_exit_3_for_norm_requiring_methods() {
    let tmp = TempDir::new().unwrap();
    let zeros = ndarray::Array2::<f64>::zeros((6, 6));
    rpca_core::io::write_matrix(&tmp.path().join("zero.mat"), &zeros).unwrap();
    let out = rpca(
        &["solve", "--method", "pcp", "--in", "zero.mat", "--out-z", "z.mat"],
        tmp.path(),
    );
    assert_eq!(code(&out), 3);
    // The pseudo-Bayesian solver handles a zero observation trivially.
    let out = rpca(
        &["solve", "--method", "pb", "--in", "zero.mat", "--out-z", "z.mat"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
}

#[test]
fn unreadable_input_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = rpca(
        &["solve", "--method", "pb", "--in", "missing.mat", "--out-z", "z.mat"],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
    std::fs::write(tmp.path().join("garbage.mat"), "2 2\n1 2\nbroken").unwrap();
    let out = rpca(
        &["solve", "--method", "pb", "--in", "garbage.mat", "--out-z", "z.mat"],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn strict_nonconvergence_exit_4() {
    let tmp = TempDir::new().unwrap();
    gen_small(tmp.path(), "inst", &[]);
    let out = rpca(
        &[
            "solve", "--method", "pcp", "--in", "inst.y", "--out-z", "z.mat", "--max-iters", "1",
            "--strict",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 4);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("converged=false"));
}

#[test]
fn compare_trivials_and_shape_mismatch() {
    let tmp = TempDir::new().unwrap();
    gen_small(tmp.path(), "inst", &[]);
    let out = rpca(&["compare", "--a", "inst.y", "--b", "inst.y"], tmp.path());
    assert_eq!(code(&out), 0);
    let v: f64 = String::from_utf8_lossy(&out.stdout)
        .trim()
        .strip_prefix("nrmse=")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(v, 0.0);

    // Estimate of all zeros scores exactly 1.
    let zeros = ndarray::Array2::<f64>::zeros((24, 24));
    rpca_core::io::write_matrix(&tmp.path().join("zeros.mat"), &zeros).unwrap();
    let out = rpca(&["compare", "--a", "inst.y", "--b", "zeros.mat"], tmp.path());
    let v: f64 = String::from_utf8_lossy(&out.stdout)
        .trim()
        .strip_prefix("nrmse=")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(v, 1.0);

    let small = ndarray::Array2::<f64>::zeros((3, 3));
    rpca_core::io::write_matrix(&tmp.path().join("small.mat"), &small).unwrap();
    let out = rpca(&["compare", "--a", "inst.y", "--b", "small.mat"], tmp.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_deterministic_across_jobs_and_env() {
    let tmp = TempDir::new().unwrap();
    let common = [
        "bench",
        "--grid-rho",
        "0.1:0.2:0.1",
        "--grid-rank",
        "0.1:0.2:0.1",
        "--n",
        "14",
        "--m",
        "14",
        "--trials",
        "2",
        "--methods",
        "pcp,mc",
        "--data",
        "a",
        "--seed",
        "11",
    ];
    let mut args1: Vec<&str> = common.to_vec();
    args1.extend_from_slice(&["--out", "r1.csv", "--jobs", "1"]);
    assert_eq!(code(&rpca(&args1, tmp.path())), 0);
    let mut args4: Vec<&str> = common.to_vec();
    args4.extend_from_slice(&["--out", "r4.csv", "--jobs", "4"]);
    assert_eq!(code(&rpca(&args4, tmp.path())), 0);

    let strip = |p: &Path| {
        rpca_core::bench::csv_without_seconds(&String::from_utf8(read(p)).unwrap())
    };
    assert_eq!(strip(&tmp.path().join("r1.csv")), strip(&tmp.path().join("r4.csv")));

    // RPCA_JOBS env var supplies the default worker count.
    let out = Command::new(env!("CARGO_BIN_EXE_rpca"))
        .args({
            let mut a: Vec<&str> = common.to_vec();
            a.extend_from_slice(&["--out", "renv.csv"]);
            a
        })
        .env("RPCA_JOBS", "3")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 0);
    assert_eq!(strip(&tmp.path().join("r1.csv")), strip(&tmp.path().join("renv.csv")));

    // Header and row count.
    let text = String::from_utf8(read(&tmp.path().join("r1.csv"))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), rpca_core::bench::CSV_HEADER);
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);
}

#[test]
fn bench_rejects_malformed_grid() {
    let tmp = TempDir::new().unwrap();
    let out = rpca(
        &[
            "bench", "--grid-rho", "0.5:0.1:0.1", "--grid-rank", "0.1:0.2:0.1", "--n", "10",
            "--m", "10", "--trials", "1", "--out", "x.csv",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    let out = rpca(
        &[
            "bench", "--grid-rho", "nonsense", "--grid-rank", "0.1:0.2:0.1", "--n", "10", "--m",
            "10", "--trials", "1", "--out", "x.csv",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_writes_success_grids() {
    let tmp = TempDir::new().unwrap();
    let out = rpca(
        &[
            "bench",
            "--grid-rho",
            "0.1:0.2:0.1",
            "--grid-rank",
            "0.1:0.1:0.1",
            "--n",
            "12",
            "--m",
            "12",
            "--trials",
            "1",
            "--methods",
            "mc",
            "--seed",
            "3",
            "--out",
            "r.csv",
            "--grid-out",
            "g",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = String::from_utf8(read(&tmp.path().join("g.mc.grid"))).unwrap();
    assert_eq!(grid.lines().count(), 2);
    for line in grid.lines() {
        assert_eq!(line.split('\t').count(), 1);
    }
}
