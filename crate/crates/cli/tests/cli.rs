//! End-to-end tests of the `fatiguefit` binary: artifact layout, manifest
//! contents, byte-level determinism, ranking rules, and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fatiguefit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, want: i32) {
    let got = out.status.code().expect("no signal");
    assert_eq!(
        got,
        want,
        "exit {got}, wanted {want}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Five stress levels, groups, and a hard ceiling that censors the lowest
/// level. Lives follow 10^(7.2 - 1.8 log10(s - 38)) with fixed noise, so
/// every run of the suite sees identical bytes.
fn write_dataset(dir: &Path) -> PathBuf {
    let noise = [
        0.31, -0.88, 1.42, -0.05, 0.67, -1.21, 0.14, 0.92, -0.49, 1.77, -1.63, 0.38, -0.27, 0.81,
        -1.02, 0.55, 1.18, -0.71, 0.03, -1.44, 0.96, -0.16, 0.44, -0.93, 1.30, 0.22, -0.58, 0.74,
        -1.85, 0.09, 0.63, -0.34, 1.07, -0.80, 0.47, -1.29, 0.29, 0.85, -0.11, 1.52, -0.66, 0.18,
        -0.97, 0.52, 1.23, -0.42, 0.07, -1.11, 0.70, 0.36, -0.23, 0.89, -0.60, 1.35, -0.08, 0.59,
        -1.38, 0.25, 0.78, -0.52,
    ];
    let levels = [(41.0, "g1"), (45.0, "g1"), (55.0, "g2"), (75.0, "g2"), (105.0, "g3")];
    let ceiling = 8.0e5;
    let mut csv = String::from("s_max,cycles,runout,group\n");
    let mut k = 0usize;
    for (s, g) in levels {
        for _ in 0..12 {
            let y = 7.2 - 1.8 * (s - 38.0f64).log10() + 0.25 * noise[k];
            k += 1;
            let n = 10f64.powf(y);
            if n >= ceiling {
                csv.push_str(&format!("{s},{ceiling},1,{g}\n"));
            } else {
                csv.push_str(&format!("{s},{n:.1},0,{g}\n"));
            }
        }
    }
    let path = dir.join("lives.csv");
    fs::write(&path, csv).expect("write dataset");
    path
}

fn sha256_hex(path: &Path) -> String {
    let bytes = fs::read(path).expect("read for hashing");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn fit_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "fit", "--data", data, "--model", "Ia", "--starts", "8", "--out", out,
    ]
}

#[test]
fn fit_is_deterministic_and_manifested() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let data_s = data.to_str().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");

    let ra = run(&fit_args(data_s, out_a.to_str().unwrap()));
    assert_code(&ra, 0);
    let rb = run(&fit_args(data_s, out_b.to_str().unwrap()));
    assert_code(&rb, 0);

    let fit_a = fs::read(out_a.join("fit.json")).unwrap();
    let fit_b = fs::read(out_b.join("fit.json")).unwrap();
    assert_eq!(fit_a, fit_b, "same flags and seed must give identical bytes");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["dataset"]["sha256"], sha256_hex(&data));
    assert_eq!(manifest["outputs"], serde_json::json!(["fit.json"]));
    assert_eq!(manifest["seed"], 0);
    let args: Vec<String> = manifest["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(args.contains(&"--model".to_string()) && args.contains(&"Ia".to_string()));

    let artifact: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("fit.json")).unwrap()).unwrap();
    assert_eq!(artifact["model"], "Ia");
    assert_eq!(artifact["fit"]["converged"], true);
    assert_eq!(artifact["fit"]["m"], 60);
}

#[test]
fn icompare_sorts_by_aic_and_breaks_ties_by_fewer_parameters() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("fit");
    let r = run(&fit_args(data.to_str().unwrap(), out.to_str().unwrap()));
    assert_code(&r, 0);

    // A second artifact with one more parameter and exactly one more unit of
    // log-likelihood has the same AIC; the smaller model must rank first.
    let mut rival: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    let loglik = rival["fit"]["loglik"].as_f64().unwrap();
    rival["fit"]["loglik"] = serde_json::json!(loglik + 1.0);
    rival["fit"]["k"] = serde_json::json!(5);
    rival["model"] = serde_json::json!("Ib");
    let rival_path = tmp.path().join("rival.json");
    fs::write(&rival_path, serde_json::to_string_pretty(&rival).unwrap()).unwrap();

    let cmp_out = tmp.path().join("cmp");
    let r = run(&[
        "icompare",
        rival_path.to_str().unwrap(),
        out.join("fit.json").to_str().unwrap(),
        "--out",
        cmp_out.to_str().unwrap(),
    ]);
    assert_code(&r, 0);

    let table = fs::read_to_string(cmp_out.join("icompare.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "model,k,m,loglik,aic,bic,aicc");
    assert_eq!(lines.len(), 3);
    assert!(
        lines[1].starts_with("Ia,4,") && lines[2].starts_with("Ib,5,"),
        "tied AIC must rank the smaller model first:\n{table}"
    );
}

#[test]
fn icompare_rejects_fits_of_different_datasets() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("fit");
    let r = run(&fit_args(data.to_str().unwrap(), out.to_str().unwrap()));
    assert_code(&r, 0);

    let mut other: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    other["dataset"]["sha256"] = serde_json::json!("0".repeat(64));
    let other_path = tmp.path().join("other.json");
    fs::write(&other_path, serde_json::to_string(&other).unwrap()).unwrap();

    let r = run(&[
        "icompare",
        out.join("fit.json").to_str().unwrap(),
        other_path.to_str().unwrap(),
        "--out",
        tmp.path().join("cmp").to_str().unwrap(),
    ]);
    assert_code(&r, 3);

    // A single artifact is not a comparison.
    let r = run(&[
        "icompare",
        out.join("fit.json").to_str().unwrap(),
        "--out",
        tmp.path().join("cmp2").to_str().unwrap(),
    ]);
    assert_code(&r, 2);
}

#[test]
fn profile_writes_grid_sized_curve() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("prof");
    let r = run(&[
        "profile",
        "--data",
        data.to_str().unwrap(),
        "--model",
        "Ia",
        "--param",
        "a3",
        "--grid",
        "25:40:16",
        "--starts",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&r, 0);

    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "a3,profile_loglik,normalized");
    assert_eq!(lines.len(), 17, "header plus one row per grid point");
    assert!(lines[1].starts_with("25,"));
    assert!(lines[16].starts_with("40,"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"], serde_json::json!(["profile.csv", "fit.json"]));

    let r = run(&[
        "profile",
        "--data",
        data.to_str().unwrap(),
        "--model",
        "Ia",
        "--param",
        "b1",
        "--grid",
        "25:40:16",
        "--out",
        tmp.path().join("bad").to_str().unwrap(),
    ]);
    assert_code(&r, 2);
}

#[test]
fn bootstrap_writes_one_row_per_parameter() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("boot");
    let r = run(&[
        "bootstrap",
        "--data",
        data.to_str().unwrap(),
        "--model",
        "Ia",
        "--reps",
        "20",
        "--level",
        "0.9",
        "--stratify-by",
        "group",
        "--starts",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&r, 0);

    let csv = fs::read_to_string(out.join("bootstrap.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,estimate,lower,upper");
    assert_eq!(lines.len(), 5, "four parameters for model Ia");
    assert!(lines[1].starts_with("a1,"));
    assert!(lines[4].starts_with("tau_or_alpha,"));

    let r = run(&[
        "bootstrap",
        "--data",
        data.to_str().unwrap(),
        "--model",
        "Ia",
        "--reps",
        "1",
        "--out",
        tmp.path().join("bad").to_str().unwrap(),
    ]);
    assert_code(&r, 2);
}

#[test]
fn curves_and_survival_read_saved_fits() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("fit");
    let r = run(&fit_args(data.to_str().unwrap(), out.to_str().unwrap()));
    assert_code(&r, 0);
    let fit_json = out.join("fit.json");

    let curves_out = tmp.path().join("curves");
    let r = run(&[
        "curves",
        "--fit",
        fit_json.to_str().unwrap(),
        "--probs",
        "0.1,0.9",
        "--grid",
        "20:120:6",
        "--out",
        curves_out.to_str().unwrap(),
    ]);
    assert_code(&r, 0);
    let csv = fs::read_to_string(curves_out.join("curves.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "probability,s_eq,cycles");
    assert_eq!(lines.len(), 13, "two probabilities over six stresses");
    assert!(
        csv.contains(",inf"),
        "stresses at or below the fitted limit must print inf:\n{csv}"
    );

    let surv_out = tmp.path().join("surv");
    let r = run(&[
        "survival",
        "--fit",
        fit_json.to_str().unwrap(),
        "--smax",
        "60",
        "--grid",
        "1e2:1e6:9",
        "--out",
        surv_out.to_str().unwrap(),
    ]);
    assert_code(&r, 0);
    let csv = fs::read_to_string(surv_out.join("survival.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "cycles,survival");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("100,"));
    assert!(lines[9].starts_with("1000000,"));

    // Survival values must not increase along the cycle grid.
    let vals: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{vals:?}");
}

#[test]
fn pplot_writes_positions_and_quantiles() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("pplot");
    let r = run(&[
        "pplot",
        "--data",
        data.to_str().unwrap(),
        "--model",
        "IIIa",
        "--life-scale",
        "log",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&r, 0);
    let csv = fs::read_to_string(out.join("pplot.csv")).unwrap();
    assert!(csv.starts_with("position,empirical,fitted\n"));
    assert!(csv.lines().count() > 30);
}

#[test]
fn flag_and_data_errors_use_distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("x");
    let out_s = out.to_str().unwrap();
    let data_s = data.to_str().unwrap();

    // Unknown model name: flag error.
    let r = run(&["fit", "--data", data_s, "--model", "IV", "--out", out_s]);
    assert_code(&r, 2);

    // Unknown stress transform: flag error.
    let r = run(&[
        "fit", "--data", data_s, "--model", "Ia", "--stress", "goodman", "--out", out_s,
    ]);
    assert_code(&r, 2);

    // Malformed grid: flag error.
    let r = run(&[
        "profile", "--data", data_s, "--model", "Ia", "--grid", "10-company", "--out", out_s,
    ]);
    assert_code(&r, 2);

    // Missing file: data error.
    let r = run(&[
        "fit",
        "--data",
        tmp.path().join("absent.csv").to_str().unwrap(),
        "--model",
        "Ia",
        "--out",
        out_s,
    ]);
    assert_code(&r, 3);

    // A stress_ratio column under the identity transform is contradictory:
    // data error.
    let ambiguous = tmp.path().join("ambiguous.csv");
    fs::write(
        &ambiguous,
        "s_max,stress_ratio,cycles,runout\n100,-1,5000,0\n100,-1,7000,0\n90,-1,20000,0\n",
    )
    .unwrap();
    let r = run(&[
        "fit",
        "--data",
        ambiguous.to_str().unwrap(),
        "--model",
        "Ia",
        "--out",
        out_s,
    ]);
    assert_code(&r, 3);

    // Nothing but run-outs cannot identify a life model: data error.
    let censored = tmp.path().join("censored.csv");
    fs::write(&censored, "s_max,cycles,runout\n100,5000,1\n90,8000,1\n").unwrap();
    let r = run(&["fit", "--data", censored.to_str().unwrap(), "--model", "Ia", "--out", out_s]);
    assert_code(&r, 3);
}
