//! Command implementations. Each op loads its inputs, runs the library,
//! writes artifact files plus a manifest into `--out`, and reports errors
//! with an exit class attached (see `CliError`).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use fatiguefit_core::curves::{
    probability_plot, quantile_curve, survival_curve, CurveError, LifeScale,
};
use fatiguefit_core::data::{load_dataset, ColumnMap, FatigueDataset};
use fatiguefit_core::inference::{bootstrap_ci, profile_fatigue_limit, IcReport};
use fatiguefit_core::likelihood::{LogBase, ModelName, ModelSpec};
use fatiguefit_core::mle::{fit, FitConfig, FitError};
use fatiguefit_core::stress::TransformKind;

use crate::manifest::{dataset_ref, FitArtifact, RunManifest};

/// Exit classes: 2 flag/usage problems, 3 data problems, 4 convergence
/// problems, 1 anything else. Clap's own parse errors also exit 2.
pub struct CliError {
    pub code: u8,
    pub err: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, err: anyhow::anyhow!(msg.into()) }
    }

    pub fn data(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, err: err.into() }
    }

    pub fn convergence(msg: impl Into<String>) -> Self {
        Self { code: 4, err: anyhow::anyhow!(msg.into()) }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        Self { code: 1, err }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self { code: 1, err: err.into() }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn fit_error(err: FitError) -> CliError {
    match err {
        FitError::Data(e) => CliError::data(e),
        e @ (FitError::NoFeasibleStart { .. } | FitError::AllReplicatesFailed { .. }) => {
            CliError { code: 4, err: e.into() }
        }
    }
}

fn curve_error(err: CurveError) -> CliError {
    match err {
        CurveError::BadProbability(_)
        | CurveError::NonPositiveStress(_)
        | CurveError::NonPositiveCycles(_)
        | CurveError::Stress(_) => CliError { code: 2, err: err.into() },
        CurveError::Io(e) => e.into(),
        other => CliError::data(other),
    }
}

/// Shared model and dataset flags for the fitting commands.
pub struct ModelInputs {
    pub data: PathBuf,
    pub model: ModelName,
    pub stress: TransformKind,
    pub log_base: LogBase,
    pub seed: u64,
    pub starts: usize,
    pub map: Vec<String>,
    pub out: PathBuf,
}

impl ModelInputs {
    fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.model, self.stress, self.log_base)
    }

    fn fit_config(&self) -> CliResult<FitConfig> {
        if self.starts == 0 {
            return Err(CliError::usage("--starts must be at least 1"));
        }
        Ok(FitConfig {
            n_starts: self.starts,
            seed: self.seed,
            ..FitConfig::default()
        })
    }

    fn load(&self) -> CliResult<FatigueDataset> {
        let columns = column_map(&self.map)?;
        load_dataset(&self.data, &columns).map_err(CliError::data)
    }
}

fn column_map(pairs: &[String]) -> CliResult<ColumnMap> {
    let mut parsed = Vec::with_capacity(pairs.len());
    for p in pairs {
        let Some((k, v)) = p.split_once('=') else {
            return Err(CliError::usage(format!(
                "--map expects NAME=HEADER, got {p:?}"
            )));
        };
        parsed.push((k.trim().to_string(), v.trim().to_string()));
    }
    ColumnMap::default()
        .with_overrides(&parsed)
        .map_err(|e| CliError::usage(e.to_string()))
}

fn ensure_out_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, body: &str) -> CliResult {
    fs::write(dir.join(name), body)
        .with_context(|| format!("cannot write {}", dir.join(name).display()))?;
    Ok(())
}

/// Shortest f64 text that parses back to the same value; `inf`/`-inf`/`nan`
/// spelled out, matching the library's CSV writers.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:?}")
    }
}

fn read_artifact(path: &Path) -> CliResult<FitArtifact> {
    let body = fs::read_to_string(path)
        .with_context(|| format!("cannot read fit artifact {}", path.display()))?;
    let artifact: FitArtifact = serde_json::from_str(&body)
        .map_err(|e| CliError::data(anyhow::anyhow!("{} is not a fit artifact: {e}", path.display())))?;
    Ok(artifact)
}

fn write_fit_artifact(
    dir: &Path,
    name: &str,
    model: ModelName,
    dataset: &crate::manifest::DatasetRef,
    fitted: &fatiguefit_core::mle::FittedModel,
) -> CliResult {
    let artifact = FitArtifact {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        model: model.label().to_string(),
        dataset: dataset.clone(),
        fit: fitted.clone(),
    };
    let mut body = serde_json::to_string_pretty(&artifact).map_err(anyhow::Error::from)?;
    body.push('\n');
    write_text(dir, name, &body)
}

/// `lo:hi:count` into an inclusive grid; geometric spacing when `log` is set
/// (used for cycle grids, which span decades).
fn parse_grid(s: &str, log: bool) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(CliError::usage(format!("--grid expects LO:HI:COUNT, got {s:?}")));
    };
    let lo: f64 = lo.parse().map_err(|_| CliError::usage(format!("bad grid start {lo:?}")))?;
    let hi: f64 = hi.parse().map_err(|_| CliError::usage(format!("bad grid end {hi:?}")))?;
    let count: usize = count
        .parse()
        .map_err(|_| CliError::usage(format!("bad grid count {count:?}")))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CliError::usage(format!("grid needs LO < HI, got {s:?}")));
    }
    if count < 2 {
        return Err(CliError::usage("grid needs at least 2 points"));
    }
    if log && lo <= 0.0 {
        return Err(CliError::usage("a geometric grid needs LO > 0"));
    }
    let n = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            // Endpoints stay exact; exp(ln x) would perturb them.
            if i == 0 {
                return lo;
            }
            if i == count - 1 {
                return hi;
            }
            let t = i as f64 / n;
            if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect())
}

fn parse_probs(s: &str) -> CliResult<Vec<f64>> {
    let mut probs = Vec::new();
    for part in s.split(',') {
        let p: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad probability {part:?}")))?;
        if !(p > 0.0 && p < 1.0) {
            return Err(CliError::usage(format!(
                "probabilities must lie strictly between 0 and 1, got {p}"
            )));
        }
        probs.push(p);
    }
    if probs.is_empty() {
        return Err(CliError::usage("--probs needs at least one probability"));
    }
    Ok(probs)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

pub fn cmd_fit(inputs: &ModelInputs) -> CliResult {
    let data = inputs.load()?;
    let spec = inputs.spec();
    let cfg = inputs.fit_config()?;
    let fitted = fit(&data, &spec, &cfg).map_err(fit_error)?;

    ensure_out_dir(&inputs.out)?;
    let dataset = dataset_ref(&inputs.data)?;
    write_fit_artifact(&inputs.out, "fit.json", inputs.model, &dataset, &fitted)?;

    let mut manifest = RunManifest::new("fit", dataset);
    manifest.spec = Some(spec);
    manifest.fit_config = Some(cfg);
    manifest.seed = Some(cfg.seed);
    manifest.outputs = vec!["fit.json".into()];
    manifest.write(&inputs.out)?;

    println!(
        "fit {} on {}: logL = {}, k = {}, m = {}",
        inputs.model.label(),
        data.name,
        fmt_f64(fitted.loglik),
        fitted.k,
        fitted.m
    );
    if !fitted.converged {
        return Err(CliError::convergence(format!(
            "fit did not converge after {} restarts; artifacts were still written to {}",
            fitted.n_restarts_used,
            inputs.out.display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// icompare
// ---------------------------------------------------------------------------

pub fn cmd_icompare(fit_paths: &[PathBuf], out: &Path) -> CliResult {
    if fit_paths.len() < 2 {
        return Err(CliError::usage("icompare needs at least two fit artifacts"));
    }
    let artifacts: Vec<FitArtifact> =
        fit_paths.iter().map(|p| read_artifact(p)).collect::<CliResult<_>>()?;
    let first = &artifacts[0].dataset;
    for (path, a) in fit_paths.iter().zip(&artifacts).skip(1) {
        if a.dataset.sha256 != first.sha256 {
            return Err(CliError::data(anyhow::anyhow!(
                "{} was fit to a different dataset ({} vs {})",
                path.display(),
                a.dataset.path,
                first.path
            )));
        }
    }

    let mut rows: Vec<(String, IcReport)> = artifacts
        .iter()
        .map(|a| (a.model.clone(), IcReport::of(&a.fit)))
        .collect();
    // AIC ascending at the 0.1 precision the table is read at, then fewer
    // parameters on ties, then the exact AIC and the name for stability.
    rows.sort_by(|(na, ra), (nb, rb)| {
        let key = |r: &IcReport| (r.aic * 10.0).round() as i64;
        key(ra)
            .cmp(&key(rb))
            .then(ra.k.cmp(&rb.k))
            .then(ra.aic.total_cmp(&rb.aic))
            .then(na.cmp(nb))
    });

    let mut csv = String::from("model,k,m,loglik,aic,bic,aicc\n");
    for (name, r) in &rows {
        let aicc = r.aicc.map(fmt_f64).unwrap_or_default();
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{aicc}\n",
            r.k,
            r.m,
            fmt_f64(r.loglik),
            fmt_f64(r.aic),
            fmt_f64(r.bic)
        ));
    }
    ensure_out_dir(out)?;
    write_text(out, "icompare.csv", &csv)?;

    let mut manifest = RunManifest::new("icompare", first.clone());
    manifest.outputs = vec!["icompare.csv".into()];
    manifest.write(out)?;

    print!("{csv}");
    Ok(())
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

pub fn cmd_profile(inputs: &ModelInputs, param: &str, grid_spec: &str) -> CliResult {
    if !param.eq_ignore_ascii_case("a3") {
        return Err(CliError::usage(format!(
            "only the fatigue limit A3 can be profiled, got --param {param:?}"
        )));
    }
    let grid = parse_grid(grid_spec, false)?;
    let data = inputs.load()?;
    let spec = inputs.spec();
    let cfg = inputs.fit_config()?;
    let (curve, fitted) = profile_fatigue_limit(&data, &spec, &cfg, &grid).map_err(fit_error)?;

    ensure_out_dir(&inputs.out)?;
    let dataset = dataset_ref(&inputs.data)?;
    let mut csv = Vec::new();
    curve.to_csv(&mut csv).map_err(anyhow::Error::from)?;
    write_text(&inputs.out, "profile.csv", std::str::from_utf8(&csv).expect("csv is utf-8"))?;
    write_fit_artifact(&inputs.out, "fit.json", inputs.model, &dataset, &fitted)?;

    let mut manifest = RunManifest::new("profile", dataset);
    manifest.spec = Some(spec);
    manifest.fit_config = Some(cfg);
    manifest.seed = Some(cfg.seed);
    manifest.outputs = vec!["profile.csv".into(), "fit.json".into()];
    manifest.write(&inputs.out)?;

    println!(
        "profiled A3 over [{}, {}] in {} points; MLE a3 = {}, logL = {}",
        fmt_f64(grid[0]),
        fmt_f64(*grid.last().expect("grid has at least 2 points")),
        grid.len(),
        fmt_f64(curve.mle_a3),
        fmt_f64(curve.mle_loglik)
    );
    if !fitted.converged {
        return Err(CliError::convergence(
            "the full fit behind the profile did not converge; artifacts were still written",
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bootstrap
// ---------------------------------------------------------------------------

pub fn cmd_bootstrap(
    inputs: &ModelInputs,
    reps: usize,
    level: f64,
    stratify_by_group: bool,
) -> CliResult {
    if reps < 2 {
        return Err(CliError::usage("--reps must be at least 2"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::usage(format!(
            "--level must lie strictly between 0 and 1, got {level}"
        )));
    }
    let data = inputs.load()?;
    let spec = inputs.spec();
    let cfg = inputs.fit_config()?;
    let summary =
        bootstrap_ci(&data, &spec, &cfg, reps, level, stratify_by_group).map_err(fit_error)?;

    ensure_out_dir(&inputs.out)?;
    let mut csv = Vec::new();
    summary.to_csv(&mut csv).map_err(anyhow::Error::from)?;
    write_text(&inputs.out, "bootstrap.csv", std::str::from_utf8(&csv).expect("csv is utf-8"))?;

    let dataset = dataset_ref(&inputs.data)?;
    let mut manifest = RunManifest::new("bootstrap", dataset);
    manifest.spec = Some(spec);
    manifest.fit_config = Some(cfg);
    manifest.seed = Some(cfg.seed);
    manifest.outputs = vec!["bootstrap.csv".into()];
    manifest.write(&inputs.out)?;

    println!(
        "bootstrap {} reps at level {} ({} failed refits)",
        summary.reps, summary.level, summary.n_failed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

pub fn cmd_curves(fit_path: &Path, probs_spec: &str, grid_spec: &str, out: &Path) -> CliResult {
    let probs = parse_probs(probs_spec)?;
    let grid = parse_grid(grid_spec, false)?;
    let artifact = read_artifact(fit_path)?;

    let mut csv = String::from("probability,s_eq,cycles\n");
    for &p in &probs {
        let curve = quantile_curve(&artifact.fit, p, &grid).map_err(curve_error)?;
        for (s, n) in curve.s_eq.iter().zip(&curve.cycles) {
            csv.push_str(&format!("{},{},{}\n", fmt_f64(p), fmt_f64(*s), fmt_f64(*n)));
        }
    }
    ensure_out_dir(out)?;
    write_text(out, "curves.csv", &csv)?;

    let mut manifest = RunManifest::new("curves", artifact.dataset.clone());
    manifest.spec = Some(artifact.fit.spec);
    manifest.seed = Some(artifact.fit.seed);
    manifest.outputs = vec!["curves.csv".into()];
    manifest.write(out)?;

    println!(
        "{} quantile curve(s) over {} stress points written to {}",
        probs.len(),
        grid.len(),
        out.join("curves.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// survival
// ---------------------------------------------------------------------------

pub fn cmd_survival(
    fit_path: &Path,
    s_max: f64,
    stress_ratio: Option<f64>,
    grid_spec: &str,
    out: &Path,
) -> CliResult {
    let grid = parse_grid(grid_spec, true)?;
    let artifact = read_artifact(fit_path)?;
    let curve = survival_curve(&artifact.fit, s_max, stress_ratio, &grid).map_err(curve_error)?;

    ensure_out_dir(out)?;
    let mut csv = Vec::new();
    curve.to_csv(&mut csv).map_err(anyhow::Error::from)?;
    write_text(out, "survival.csv", std::str::from_utf8(&csv).expect("csv is utf-8"))?;

    let mut manifest = RunManifest::new("survival", artifact.dataset.clone());
    manifest.spec = Some(artifact.fit.spec);
    manifest.seed = Some(artifact.fit.seed);
    manifest.outputs = vec!["survival.csv".into()];
    manifest.write(out)?;

    if curve.below_limit {
        println!(
            "s_eq = {} sits at or below the fitted fatigue limit; survival is 1 everywhere",
            fmt_f64(curve.s_eq)
        );
    } else {
        println!("survival curve at s_eq = {} written", fmt_f64(curve.s_eq));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pplot
// ---------------------------------------------------------------------------

pub fn cmd_pplot(
    data_path: &Path,
    model: ModelName,
    life_scale: LifeScale,
    map: &[String],
    out: &Path,
) -> CliResult {
    let columns = column_map(map)?;
    let data = load_dataset(data_path, &columns).map_err(CliError::data)?;
    let plot = probability_plot(&data, model.family(), life_scale).map_err(curve_error)?;

    ensure_out_dir(out)?;
    let mut csv = Vec::new();
    plot.to_csv(&mut csv).map_err(anyhow::Error::from)?;
    write_text(out, "pplot.csv", std::str::from_utf8(&csv).expect("csv is utf-8"))?;

    let dataset = dataset_ref(data_path)?;
    let mut manifest = RunManifest::new("pplot", dataset);
    manifest.outputs = vec!["pplot.csv".into()];
    manifest.write(out)?;

    println!(
        "probability plot: {} failures, {} run-outs, correlation {}",
        plot.n_failures,
        plot.n_runouts,
        fmt_f64(plot.correlation)
    );
    Ok(())
}
