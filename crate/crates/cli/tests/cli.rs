use std::fs;
use std::path::Path;

use pto_adjust_cli::{cmd_reproduce, cmd_run, cmd_verify, exit, run_cli, RunManifest, RunOverrides, Scope};

fn overrides(reps: Option<usize>, threads: Option<usize>) -> RunOverrides {
    RunOverrides { reps, seed: None, threads }
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn noiseless_run_writes_exact_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "preset = \"fig2/theta3sigma10\"\n[experiment]\nnoise_var = 0\nreplications = 1\n");
    let out = dir.path().join("res.csv");
    cmd_run(&cfg, &out, &overrides(None, Some(1))).unwrap();
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,pto,oracle,dd,boot"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 10);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(*row, format!("{},1.0,0.0,0.0,0.0", 10 * (k + 1)));
    }
    assert!(!csv.contains('\r'));
}

#[test]
fn manifest_records_seed_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "preset = \"fig4/theta3sigma1\"\n[experiment]\nn_grid = [10]\nseed = 99\n");
    let out = dir.path().join("res.csv");
    cmd_run(&cfg, &out, &overrides(Some(4), None)).unwrap();
    let text = fs::read_to_string(dir.path().join("res.csv.manifest.json")).unwrap();
    let m: RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(m.seed, 99);
    assert_eq!(m.config.replications, 4);
    assert_eq!(m.config_digest, pto_adjust_cli::config_digest(&m.config));
    assert_eq!(m.diagnostics.len(), 1);
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "preset = \"fig2/theta5sigma15\"\n[experiment]\nn_grid = [10, 40]\nreplications = 24\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    cmd_run(&cfg, &a, &overrides(None, Some(1))).unwrap();
    cmd_run(&cfg, &b, &overrides(None, Some(3))).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn reproduce_fig3_omits_the_plugin_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut o = overrides(Some(2), None);
    o.seed = Some(5);
    let files = cmd_reproduce("fig3", dir.path(), &o).unwrap();
    assert_eq!(files.len(), 4);
    for f in files {
        let csv = fs::read_to_string(&f).unwrap();
        assert!(csv.starts_with("n,pto,oracle,boot\n"), "{}", f.display());
        assert_eq!(csv.lines().count(), 11);
    }
}

#[test]
fn reproduce_fig4_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(["pto-adjust", "reproduce", "fig4", "--reps", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, exit::OK);
    for name in ["theta3sigma0p5", "theta3sigma1", "theta5sigma0p5", "theta5sigma1"] {
        let csv = fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        assert!(csv.starts_with("n,pto,oracle,dd,boot\n"));
    }
}

#[test]
fn verify_constants_reports_each_family() {
    let mut buf = Vec::new();
    cmd_verify(Scope::Constants, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains("C linear ") && l.contains("-6.0")));
    assert!(text.lines().any(|l| l.contains("C log-linear") && l.contains("-4.0")));
    assert!(text.lines().any(|l| l.contains("gamma=2") && l.contains("-5.0")));
    assert!(!text.contains("FAIL"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let out = out.to_str().unwrap();
    let run = |cfg: &Path| run_cli(["pto-adjust", "run", "--config", cfg.to_str().unwrap(), "--out", out]);

    assert_eq!(run(&dir.path().join("absent.toml")), exit::IO);
    assert_eq!(run(&write(dir.path(), "bad.toml", "[experiment]\nreplications = -3\n")), exit::USAGE);
    assert_eq!(run(&write(dir.path(), "unknown.toml", "preset = \"fig7/x\"\n")), exit::USAGE);
    assert_eq!(run_cli(["pto-adjust", "reproduce", "fig9", "--out", out]), exit::USAGE);
    assert_eq!(run_cli(["pto-adjust", "frobnicate"]), exit::USAGE);
    assert_eq!(run_cli(["pto-adjust", "verify", "--scope", "multi"]), exit::OK);

    let blocked = write(dir.path(), "file", "");
    let good = write(dir.path(), "good.toml", "preset = \"fig2/theta3sigma10\"\n[experiment]\nn_grid = [10]\nreplications = 1\n");
    let into_file = blocked.join("o.csv");
    let code = run_cli(["pto-adjust", "run", "--config", good.to_str().unwrap(), "--out", into_file.to_str().unwrap()]);
    assert_eq!(code, exit::IO);
}
