//! Experiment runners: one per manifest kind.  Each runner loads its inputs,
//! executes the library computation, writes plot-data files stamped with the
//! manifest digest, and returns the material for the run summary.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_bigint::BigInt;
use serde_json::{json, Map, Value};

use shellwalk::boundary::{verify_matrixnorm, BoundaryModel};
use shellwalk::discrepancy::{
    decay_rate_fit, diophantine_type, discrepancy_with_budget, etk_bound, max_fourier,
    walk_distribution, BoxScanMethod, DiscrepancyError,
};
use shellwalk::enumerate::{
    enumerate_ball, fit_critical_exponent, srw_measure, EnumerateError, EnumerationConfig,
};
use shellwalk::interval::rational_to_f64;
use shellwalk::matrix::{GroupElement, GroupPresentation};
use shellwalk::spectral::{build_shell_operator, operator_norm_estimate, SpectralError};
use shellwalk::torus::{
    classify_psi, ergodic_character_error, ergodic_character_error_mc, exponent_scan,
    log_count_slope, solve_shrinking_target_indexed, PsiRegime, PsiSpec, TargetFamily,
    TorusPoint,
};

use crate::emit::{ffmt, write_plot_file};
use crate::manifest::{
    BoundaryParams, CliError, DiscrepancyParams, EnumerateParams, ErgodicParams, ExponentParams,
    Manifest, PointSpec, ShrinkParams, SpectralParams,
};

/// Everything a runner contributes to the summary document.
struct Artifacts {
    outputs: Vec<String>,
    seeds: Map<String, Value>,
    budgets: Map<String, Value>,
    params_resolved: Value,
    notes: Map<String, Value>,
}

/// Executes one manifest and returns the path of the summary file.
pub fn run_experiment(
    manifest: &Manifest,
    base: &Path,
    threads: Option<usize>,
) -> Result<PathBuf, CliError> {
    manifest.check_kind()?;
    let digest = manifest.digest();
    let out_dir = resolve_path(base, &manifest.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let started = Instant::now();
    let ctx = Ctx { manifest, base, out_dir: &out_dir, digest: &digest };
    let artifacts = match manifest.kind.as_str() {
        "enumerate" => run_enumerate(&ctx)?,
        "exponent" => run_exponent(&ctx)?,
        "shrink" => run_shrink(&ctx)?,
        "spectral" => run_spectral(&ctx)?,
        "boundary" => run_boundary(&ctx)?,
        "discrepancy" => run_discrepancy(&ctx)?,
        "ergodic" => run_ergodic(&ctx)?,
        other => return Err(CliError::validation(format!("unknown experiment kind {other:?}"))),
    };
    let wall_time_ms = started.elapsed().as_millis() as u64;
    let summary = json!({
        "kind": manifest.kind,
        "manifest_digest": digest,
        "version": version_string(),
        "threads": threads,
        "wall_time_ms": wall_time_ms,
        "outputs": artifacts.outputs,
        "seeds": Value::Object(artifacts.seeds),
        "budgets": Value::Object(artifacts.budgets),
        "params_resolved": artifacts.params_resolved,
        "notes": Value::Object(artifacts.notes),
        "manifest": manifest,
    });
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, format!("{:#}\n", summary))?;
    Ok(summary_path)
}

struct Ctx<'a> {
    manifest: &'a Manifest,
    base: &'a Path,
    out_dir: &'a Path,
    digest: &'a str,
}

fn resolve_path(base: &Path, text: &str) -> PathBuf {
    let p = Path::new(text);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Build version: `git describe` when available, package version otherwise.
fn version_string() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| format!("git:{}", s.trim()))
        .unwrap_or_else(|| format!("pkg:{}", env!("CARGO_PKG_VERSION")))
}

fn load_group(ctx: &Ctx) -> Result<GroupPresentation, CliError> {
    let rel = ctx.manifest.group.as_ref().ok_or_else(|| {
        CliError::validation(format!("kind {:?} needs a group document", ctx.manifest.kind))
    })?;
    let path = resolve_path(ctx.base, rel);
    if !path.exists() {
        return Err(CliError::validation(format!("group file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(&path)?;
    GroupPresentation::from_json_str(&text)
        .map_err(|e| CliError::validation(format!("group {}: {e}", path.display())))
}

fn enumeration_config(max_elements: u64) -> Result<EnumerationConfig, CliError> {
    let max_elements = usize::try_from(max_elements)
        .map_err(|_| CliError::validation("max_elements does not fit the machine word"))?;
    Ok(EnumerationConfig { max_elements, ..Default::default() })
}

fn map_enumerate(e: EnumerateError) -> CliError {
    match e {
        EnumerateError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn map_spectral(e: SpectralError) -> CliError {
    match e {
        SpectralError::WindowBudget { .. } => CliError::Budget(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn map_discrepancy(e: DiscrepancyError) -> CliError {
    match e {
        DiscrepancyError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn point_seed(spec: &PointSpec, name: &str, seeds: &mut Map<String, Value>) {
    if let Some(s) = spec.seed {
        seeds.insert(name.into(), json!(s));
    }
}

fn resolve_or_zero(
    spec: &Option<PointSpec>,
    dim: usize,
    sqrt_bits: u32,
) -> Result<TorusPoint, CliError> {
    match spec {
        Some(s) => s.resolve(dim, sqrt_bits),
        None => Ok(TorusPoint::zero(dim)),
    }
}

fn matrix_json(g: &GroupElement) -> Value {
    let d = g.dim();
    Value::Array(
        (0..d)
            .map(|i| {
                Value::Array(
                    (0..d).map(|j| Value::String(g.entry(i, j).to_string())).collect(),
                )
            })
            .collect(),
    )
}

// ---- enumerate ------------------------------------------------------------

fn run_enumerate(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: EnumerateParams = ctx.manifest.typed_params()?;
    let p = load_group(ctx)?;
    let cfg = enumeration_config(params.max_elements)?;
    let ball = enumerate_ball(&p, params.radius, &cfg).map_err(map_enumerate)?;
    let table = ball.growth_table();
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|&(n, c)| vec![n.to_string(), c.to_string(), ffmt((c as f64).ln())])
        .collect();
    let file = write_plot_file(ctx.out_dir, "growth.csv", "growth", ctx.digest, &[], &rows)?;
    let mut notes = Map::new();
    if let Ok(fit) = fit_critical_exponent::<f64>(&table) {
        notes.insert("delta_fit".into(), json!(fit.delta));
        notes.insert("delta_confidence".into(), json!([fit.confidence.0, fit.confidence.1]));
    }
    notes.insert("elements".into(), json!(ball.count_at(params.radius)));
    let mut budgets = Map::new();
    budgets.insert("max_elements".into(), json!(params.max_elements));
    Ok(Artifacts {
        outputs: vec![file],
        seeds: Map::new(),
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}

// ---- exponent -------------------------------------------------------------

fn run_exponent(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: ExponentParams = ctx.manifest.typed_params()?;
    let p = load_group(ctx)?;
    let cfg = enumeration_config(params.max_elements)?;
    let ball = enumerate_ball(&p, params.radius, &cfg).map_err(map_enumerate)?;
    let dim = p.dim();
    let x = params.x.resolve(dim, params.sqrt_bits)?;
    let y = resolve_or_zero(&params.y, dim, params.sqrt_bits)?;
    let target = TargetFamily::ball(y);
    let scan = exponent_scan(&ball, &x, &target, &params.alphas)
        .map_err(CliError::validation)?;
    let mut rows = Vec::new();
    let mut alpha_notes = Vec::new();
    for (ai, &alpha) in scan.alphas.iter().enumerate() {
        for n in 0..=scan.max_radius as usize {
            rows.push(vec![
                n.to_string(),
                ffmt(alpha),
                scan.counts[ai][n].to_string(),
                scan.new_in_shell[ai][n].to_string(),
            ]);
        }
        alpha_notes.push(json!({
            "alpha": alpha,
            "unresolved": scan.unresolved[ai],
            "tail_slope": log_count_slope(&scan.counts[ai], 2, scan.max_radius as usize),
        }));
    }
    let mut seeds = Map::new();
    point_seed(&params.x, "x_seed", &mut seeds);
    if let Some(y_spec) = &params.y {
        point_seed(y_spec, "y_seed", &mut seeds);
    }
    let seed_pairs = seed_pairs(&seeds);
    let file = write_plot_file(
        ctx.out_dir,
        "exponent.csv",
        "exponent",
        ctx.digest,
        &seed_pairs,
        &rows,
    )?;
    let mut notes = Map::new();
    notes.insert("per_alpha".into(), Value::Array(alpha_notes));
    if let Ok(fit) = fit_critical_exponent::<f64>(&ball.growth_table()) {
        notes.insert("delta_fit".into(), json!(fit.delta));
    }
    let mut budgets = Map::new();
    budgets.insert("max_elements".into(), json!(params.max_elements));
    Ok(Artifacts {
        outputs: vec![file],
        seeds,
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}

fn seed_pairs(seeds: &Map<String, Value>) -> Vec<(&str, u64)> {
    seeds
        .iter()
        .filter_map(|(k, v)| v.as_u64().map(|n| (k.as_str(), n)))
        .collect()
}

// ---- shrink ---------------------------------------------------------------

fn run_shrink(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: ShrinkParams = ctx.manifest.typed_params()?;
    let p = load_group(ctx)?;
    let cfg = enumeration_config(params.max_elements)?;
    let ball = enumerate_ball(&p, params.max_radius, &cfg).map_err(map_enumerate)?;
    let dim = p.dim();
    let x = params.x.resolve(dim, params.sqrt_bits)?;
    let y = resolve_or_zero(&params.y, dim, params.sqrt_bits)?;
    let target = match params.target.as_str() {
        "ball" => TargetFamily::ball(y),
        "box" => TargetFamily::sup_box(y, true),
        other => {
            return Err(CliError::validation(format!(
                "unknown target family {other:?} (expected \"ball\" or \"box\")"
            )))
        }
    };
    let psi = PsiSpec::new(params.psi_a, params.psi_b).map_err(CliError::validation)?;
    let report = solve_shrinking_target_indexed(&ball, &x, &target, &psi)
        .map_err(CliError::validation)?;
    let rows: Vec<Vec<String>> = (0..=report.max_radius as usize)
        .map(|n| {
            vec![
                n.to_string(),
                report.counts[n].to_string(),
                report.new_in_shell[n].to_string(),
                if report.shell_has_solution[n] { "1".into() } else { "0".into() },
            ]
        })
        .collect();
    let mut seeds = Map::new();
    point_seed(&params.x, "x_seed", &mut seeds);
    if let Some(y_spec) = &params.y {
        point_seed(y_spec, "y_seed", &mut seeds);
    }
    let seed_pairs = seed_pairs(&seeds);
    let file =
        write_plot_file(ctx.out_dir, "shrink.csv", "shrink", ctx.digest, &seed_pairs, &rows)?;
    let witnesses: Vec<Value> = report
        .witnesses
        .iter()
        .map(|w| {
            json!({
                "radius": w.radius,
                "displacement": w.displacement,
                "distance": w.distance,
                "threshold": w.threshold,
                "borderline": w.borderline,
                "matrix": matrix_json(&w.element),
            })
        })
        .collect();
    let witness_doc = json!({
        "manifest_digest": ctx.digest,
        "count": witnesses.len(),
        "witnesses": witnesses,
    });
    std::fs::write(ctx.out_dir.join("witnesses.json"), format!("{:#}\n", witness_doc))?;
    let mut notes = Map::new();
    notes.insert("tested".into(), json!(report.tested));
    notes.insert("skipped_small_norm".into(), json!(report.skipped_small_norm));
    notes.insert("unresolved".into(), json!(report.unresolved.len()));
    notes.insert("solutions".into(), json!(report.counts[report.max_radius as usize]));
    if let Ok(fit) = fit_critical_exponent::<f64>(&ball.growth_table()) {
        notes.insert("delta_fit".into(), json!(fit.delta));
        let regime = match classify_psi(&psi, fit.delta) {
            PsiRegime::FiniteRegime => "finite",
            PsiRegime::InfiniteRegime => "infinite",
            PsiRegime::Gap => "gap",
        };
        notes.insert("psi_regime".into(), json!(regime));
    }
    let mut budgets = Map::new();
    budgets.insert("max_elements".into(), json!(params.max_elements));
    Ok(Artifacts {
        outputs: vec![file, "witnesses.json".into()],
        seeds,
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}

// ---- spectral -------------------------------------------------------------

fn run_spectral(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: SpectralParams = ctx.manifest.typed_params()?;
    if params.lengths.is_empty() {
        return Err(CliError::validation("spectral params: lengths must be nonempty"));
    }
    if params.lengths.iter().any(|&n| n == 0) {
        return Err(CliError::validation("spectral params: shell radius 0 has no measure"));
    }
    let p = load_group(ctx)?;
    let cfg = enumeration_config(params.max_elements)?;
    let max_len = *params.lengths.iter().max().expect("nonempty");
    let ball = enumerate_ball(&p, max_len, &cfg).map_err(map_enumerate)?;
    let delta = fit_critical_exponent::<f64>(&ball.growth_table()).map(|f| f.delta);
    let shells = ball.shells(1);
    let mut rows = Vec::new();
    let mut shell_notes = Vec::new();
    for &n in &params.lengths {
        let shell = shells
            .shells
            .iter()
            .find(|s| s.n == n)
            .ok_or_else(|| CliError::validation(format!("no elements in the radius-{n} shell")))?;
        let op = build_shell_operator(shell, params.window).map_err(map_spectral)?;
        let est = operator_norm_estimate::<f64>(&op, params.tol, params.max_iter, params.seed)
            .map_err(map_spectral)?;
        let envelope = delta.as_ref().map(|d| d * n as f64).unwrap_or(f64::NAN);
        rows.push(vec![
            n.to_string(),
            ffmt(est.value),
            ffmt(-2.0 * est.value.ln()),
            ffmt(envelope),
        ]);
        shell_notes.push(json!({
            "n": n,
            "atoms": shell.len(),
            "iterations": est.iterations,
            "converged": est.converged,
            "residual": est.residual,
        }));
    }
    let seed_list = [("norm_seed", params.seed)];
    let file =
        write_plot_file(ctx.out_dir, "spectral.csv", "spectral", ctx.digest, &seed_list, &rows)?;
    let mut notes = Map::new();
    notes.insert("per_shell".into(), Value::Array(shell_notes));
    if let Ok(d) = delta {
        notes.insert("delta_fit".into(), json!(d));
    }
    let mut seeds = Map::new();
    seeds.insert("norm_seed".into(), json!(params.seed));
    let mut budgets = Map::new();
    budgets.insert("max_elements".into(), json!(params.max_elements));
    budgets.insert("window".into(), json!(params.window));
    budgets.insert("max_iter".into(), json!(params.max_iter));
    Ok(Artifacts {
        outputs: vec![file],
        seeds,
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}

// ---- boundary -------------------------------------------------------------

fn run_boundary(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: BoundaryParams = ctx.manifest.typed_params()?;
    if params.pairs.is_empty() {
        return Err(CliError::validation("boundary params: pairs must be nonempty"));
    }
    // The boundary model needs no group document; an explicitly referenced
    // one must still exist.
    if ctx.manifest.group.is_some() {
        load_group(ctx)?;
    }
    let model =
        BoundaryModel::with_slack(params.rank, params.slack).map_err(CliError::validation)?;
    let report = verify_matrixnorm(&model, &params.pairs, params.dense_budget)
        .map_err(CliError::validation)?;
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            vec![
                c.r.to_string(),
                c.n.to_string(),
                ffmt(c.gershgorin_f64),
                ffmt(c.ratio),
                ffmt(c.dense_spectral.unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    let file = write_plot_file(ctx.out_dir, "boundary.csv", "boundary", ctx.digest, &[], &rows)?;
    let mut notes = Map::new();
    notes.insert("max_ratio".into(), json!(report.max_ratio));
    notes.insert(
        "dense_checked".into(),
        json!(report.checks.iter().filter(|c| c.dense_spectral.is_some()).count()),
    );
    let mut budgets = Map::new();
    budgets.insert("dense_budget".into(), json!(params.dense_budget));
    Ok(Artifacts {
        outputs: vec![file],
        seeds: Map::new(),
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}

// ---- discrepancy ----------------------------------------------------------

fn run_discrepancy(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: DiscrepancyParams = ctx.manifest.typed_params()?;
    let p = load_group(ctx)?;
    let mu = srw_measure(&p);
    let x = params.x.resolve(p.dim(), params.sqrt_bits)?;
    let mut rows = Vec::new();
    let mut methods: BTreeSet<&'static str> = BTreeSet::new();
    let mut fourier_samples = Vec::new();
    for k in 0..=params.steps {
        let nu = walk_distribution(&mu, &x, k, params.walk_budget).map_err(map_discrepancy)?;
        let mf = max_fourier(&nu, params.window).map_err(map_discrepancy)?;
        let etk = etk_bound(&nu, params.window).map_err(map_discrepancy)?;
        let disc = discrepancy_with_budget(&nu, params.scan_budget).map_err(map_discrepancy)?;
        methods.insert(match disc.method {
            BoxScanMethod::Exact => "exact",
            BoxScanMethod::FloatScan => "float-scan",
            BoxScanMethod::Grid => "grid",
        });
        rows.push(vec![k.to_string(), ffmt(mf), ffmt(etk.bound), ffmt(disc.value_f64)]);
        if k >= 1 {
            fourier_samples.push((k, mf));
        }
    }
    let mut seeds = Map::new();
    point_seed(&params.x, "x_seed", &mut seeds);
    let seed_list = seed_pairs(&seeds);
    let file = write_plot_file(ctx.out_dir, "decay.csv", "decay", ctx.digest, &seed_list, &rows)?;
    let verdict = diophantine_type(&x, params.q_cutoff).map_err(map_discrepancy)?;
    let decay = decay_rate_fit(&fourier_samples).map(|fit| {
        json!({
            "rate": fit.rate,
            "log_intercept": fit.log_intercept,
            "points": fit.points,
            "note": "least-squares fit, not a certified rate",
        })
    });
    let verdict_doc = json!({
        "manifest_digest": ctx.digest,
        "q_cutoff": verdict.q_cutoff,
        "m_estimate": if verdict.m_estimate.is_finite() { json!(verdict.m_estimate) } else { Value::Null },
        "rational": verdict.rational_at.is_some(),
        "rational_at": verdict.rational_at,
        "witnesses": verdict.witnesses.iter().map(|&(q, d)| json!([q, d])).collect::<Vec<_>>(),
        "fourier_decay": decay,
        "scan_methods": methods.iter().collect::<Vec<_>>(),
    });
    std::fs::write(ctx.out_dir.join("verdict.json"), format!("{:#}\n", verdict_doc))?;
    let mut budgets = Map::new();
    budgets.insert("walk_budget".into(), json!(params.walk_budget));
    budgets.insert("scan_budget".into(), json!(params.scan_budget));
    let mut notes = Map::new();
    notes.insert("scan_methods".into(), json!(methods.iter().collect::<Vec<_>>()));
    Ok(Artifacts {
        outputs: vec![file, "verdict.json".into()],
        seeds,
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}

// ---- ergodic --------------------------------------------------------------

fn run_ergodic(ctx: &Ctx) -> Result<Artifacts, CliError> {
    let params: ErgodicParams = ctx.manifest.typed_params()?;
    if params.samples < 2 {
        return Err(CliError::validation("ergodic params: samples must be at least 2"));
    }
    if params.freqs.is_empty() {
        return Err(CliError::validation("ergodic params: freqs must be nonempty"));
    }
    let p = load_group(ctx)?;
    if p.dim() != 2 {
        return Err(CliError::validation(format!(
            "ergodic plot layout supports dimension 2, group has dimension {}",
            p.dim()
        )));
    }
    let mut freqs = Vec::new();
    for f in &params.freqs {
        if f.len() != 2 {
            return Err(CliError::validation(format!(
                "ergodic params: frequency {f:?} must have 2 entries"
            )));
        }
        freqs.push((f[0], f[1], vec![BigInt::from(f[0]), BigInt::from(f[1])]));
    }
    let cfg = enumeration_config(params.max_elements)?;
    let ball = enumerate_ball(&p, params.radius, &cfg).map_err(map_enumerate)?;
    let shells = ball.shells(1);
    let mut rows = Vec::new();
    let mut worst_sigma = 0f64;
    for shell in &shells.shells {
        for (b1, b2, freq) in &freqs {
            let exact = ergodic_character_error(shell, freq).map_err(CliError::validation)?;
            let exact_f = rational_to_f64(&exact);
            let mc = ergodic_character_error_mc(shell, freq, params.samples, params.seed)
                .map_err(CliError::validation)?;
            if mc.stderr > 0.0 {
                worst_sigma = worst_sigma.max((exact_f - mc.mean).abs() / mc.stderr);
            }
            rows.push(vec![
                shell.n.to_string(),
                b1.to_string(),
                b2.to_string(),
                ffmt(exact_f),
                ffmt(mc.mean),
                ffmt(mc.stderr),
            ]);
        }
    }
    let seed_list = [("mc_seed", params.seed)];
    let file =
        write_plot_file(ctx.out_dir, "ergodic.csv", "ergodic", ctx.digest, &seed_list, &rows)?;
    let mut seeds = Map::new();
    seeds.insert("mc_seed".into(), json!(params.seed));
    let mut budgets = Map::new();
    budgets.insert("max_elements".into(), json!(params.max_elements));
    budgets.insert("samples".into(), json!(params.samples));
    let mut notes = Map::new();
    notes.insert("max_sigma_deviation".into(), json!(worst_sigma));
    notes.insert("empty_shells".into(), json!(shells.empty));
    Ok(Artifacts {
        outputs: vec![file],
        seeds,
        budgets,
        params_resolved: serde_json::to_value(&params).expect("params serialize"),
        notes,
    })
}
