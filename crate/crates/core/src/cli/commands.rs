use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::manifest::{manifest_path_for, RunManifest};
use super::render::{continuity_table, descriptive_tables, diffdisc_table, equilibrium_table, local_table};
use super::{
    data_error, parse_window, resolve_seed, CliError, EquilibriumArgs, EstimateArgs, Method,
    OutputFormat, ValidateArgs,
};
use crate::contest::{figure1_series, solve_equilibrium, verify_equilibrium, ContestParams};
use crate::data::{
    descriptive_table, group_compare, load_csv, parse_variables, write_csv, CsvOptions, Dataset,
    Regime, Variable,
};
use crate::rd::{
    self, diff_in_disc_estimate, rd_continuity_estimate, rd_local_estimate, select_window,
    write_plot_csv, ContinuitySpec, PermutationOptions, RdWindow, WindowSearch,
};
use crate::simulator::{simulate_dataset, SimulationConfig};
use crate::table::TextTable;
use crate::validation::{validation_report, ValidationOptions};

fn load_config(path: Option<&Path>) -> Result<SimulationConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            SimulationConfig::from_toml_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => SimulationConfig::default(),
    };
    cfg.seed = resolve_seed(cfg.seed)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("result serializes");
    write_text(path, &(text + "\n"))
}

fn render(tables: &[TextTable]) -> String {
    tables.iter().map(|t| format!("{t}\n")).collect()
}

fn load_data(path: &Path, regime: Option<Regime>) -> Result<Dataset, CliError> {
    let ds = load_csv(path, CsvOptions::default()).map_err(|e| data_error(path, e))?;
    Ok(match regime {
        Some(r) => ds.filter_regime(r),
        None => ds,
    })
}

fn parse_outcome(name: &str) -> Result<Variable, CliError> {
    name.parse().map_err(CliError::Config)
}

pub fn cmd_simulate(config_path: Option<&Path>, out_csv: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let ds = simulate_dataset(&cfg)?;
    write_csv(&ds, out_csv).map_err(|e| data_error(out_csv, e))?;
    let manifest_path = manifest_path_for(out_csv);
    let inputs: Vec<PathBuf> = config_path.map(Path::to_path_buf).into_iter().collect();
    RunManifest::build("simulate", &cfg, Some(cfg.seed), &inputs, &[out_csv.to_path_buf()])?
        .write(&manifest_path)?;
    println!("wrote {} rows to {}", ds.len(), out_csv.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateConfig<'a> {
    data: String,
    outcome: &'a str,
    method: Method,
    cutoff: f64,
    window: Option<String>,
    auto_window: bool,
    max_half_width: u32,
    bandwidth: Option<f64>,
    covariates: Vec<Variable>,
    permutations: usize,
    seed: u64,
    regime: Option<Regime>,
    continuity: &'a ContinuitySpec,
}

/// Where a single-result command sends its output.
struct Sink<'a> {
    command: &'a str,
    seed: u64,
    input: &'a Path,
    json_path: Option<&'a Path>,
    format: OutputFormat,
}

fn emit<T: Serialize>(sink: &Sink, config: &impl Serialize, result: &T, table: &str) -> Result<(), CliError> {
    let Sink { command, seed, input, json_path, format } = *sink;
    match format {
        OutputFormat::Text => print!("{table}"),
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(result).expect("result serializes")),
    }
    if let Some(path) = json_path {
        write_json(path, result)?;
        RunManifest::build(command, config, Some(seed), &[input.to_path_buf()], &[path.to_path_buf()])?
            .write(&manifest_path_for(path))?;
    }
    Ok(())
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let c = &args.common;
    let outcome = parse_outcome(&args.outcome)?;
    let covariates = match &args.covariates {
        Some(list) => parse_variables(list).map_err(CliError::Config)?,
        None => Vec::new(),
    };
    if args.method == Method::Diffdisc && c.regime.is_some() {
        return Err(CliError::Config("diffdisc needs both regimes; drop --regime".into()));
    }
    if c.permutations == 0 {
        return Err(CliError::Config("--permutations must be at least 1".into()));
    }
    let spec = ContinuitySpec {
        kernel: c.kernel,
        bandwidth: args.bandwidth,
        covariates: covariates.clone(),
        cluster: c.cluster,
    };
    let window = args.window.as_deref().map(|w| parse_window(w, c.cutoff)).transpose()?;
    let ds = load_data(&args.data, c.regime)?;
    let perms = PermutationOptions {
        n_permutations: c.permutations,
        seed: c.seed,
        ..PermutationOptions::default()
    };
    let config = EstimateConfig {
        data: args.data.display().to_string(),
        outcome: outcome.name(),
        method: args.method,
        cutoff: c.cutoff,
        window: args.window.clone(),
        auto_window: args.auto_window,
        max_half_width: args.max_half_width,
        bandwidth: args.bandwidth,
        covariates,
        permutations: c.permutations,
        seed: c.seed,
        regime: c.regime,
        continuity: &spec,
    };
    let label = c.regime.map_or("pooled".to_string(), |r| r.to_string());
    let sink = Sink {
        command: "estimate",
        seed: c.seed,
        input: &args.data,
        json_path: c.json.as_deref(),
        format: c.format,
    };
    match args.method {
        Method::Local => {
            let window = match window {
                Some(w) => w,
                None if args.auto_window => {
                    let search = WindowSearch {
                        max_half_width: args.max_half_width,
                        permutations: perms,
                        ..WindowSearch::default()
                    };
                    select_window(&ds, &Variable::COVARIATES, c.cutoff, &search)?.window
                }
                None => RdWindow::symmetric(c.cutoff, 1)?,
            };
            let res = rd_local_estimate(&ds, outcome, &window, &perms)?;
            let table = local_table("Local randomization RD", &[(label, res.clone())]).to_string();
            emit(&sink, &config, &res, &table)
        }
        Method::Continuity => {
            let res = rd_continuity_estimate(&ds, outcome, c.cutoff, &spec)?;
            let table = continuity_table("Continuity-based RD", &[(label, res.clone())]).to_string();
            emit(&sink, &config, &res, &table)
        }
        Method::Diffdisc => {
            let res = diff_in_disc_estimate(&ds, outcome, c.cutoff, &spec)?;
            let table = diffdisc_table("Difference in discontinuities", &[(label, res.clone())]).to_string();
            emit(&sink, &config, &res, &table)
        }
    }
}

fn default_windows(ds: &Dataset, cutoff: f64, perms: &PermutationOptions) -> Result<Vec<RdWindow>, CliError> {
    let smallest = RdWindow::symmetric(cutoff, 1)?;
    let search = WindowSearch {
        permutations: *perms,
        ..WindowSearch::default()
    };
    let selected = select_window(ds, &Variable::COVARIATES, cutoff, &search)?.window;
    Ok(if selected == smallest { vec![smallest] } else { vec![smallest, selected] })
}

fn validation_options(
    ds: &Dataset,
    cutoff: f64,
    windows: Option<Vec<RdWindow>>,
    perms: PermutationOptions,
    spec: ContinuitySpec,
    placebo_outcome: Variable,
) -> Result<ValidationOptions, CliError> {
    let windows = match windows {
        Some(w) => w,
        None => default_windows(ds, cutoff, &perms)?,
    };
    let mut opts = ValidationOptions::new(cutoff, windows);
    opts.permutations = perms;
    opts.continuity = spec;
    opts.placebo_outcome = placebo_outcome;
    Ok(opts)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let c = &args.common;
    let placebo_outcome = parse_outcome(&args.placebo_outcome)?;
    let windows = args
        .windows
        .as_deref()
        .map(|list| list.split(',').map(|w| parse_window(w, c.cutoff)).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let ds = load_data(&args.data, c.regime)?;
    let perms = PermutationOptions {
        n_permutations: c.permutations,
        seed: c.seed,
        ..PermutationOptions::default()
    };
    let spec = ContinuitySpec {
        kernel: c.kernel,
        bandwidth: args.bandwidth,
        covariates: Vec::new(),
        cluster: c.cluster,
    };
    let opts = validation_options(&ds, c.cutoff, windows, perms, spec.clone(), placebo_outcome)?;
    let report = validation_report(&ds, &opts)?;
    #[derive(Serialize)]
    struct ValidateConfig<'a> {
        data: String,
        cutoff: f64,
        windows: &'a [RdWindow],
        placebo_outcome: Variable,
        permutations: usize,
        seed: u64,
        regime: Option<Regime>,
        continuity: &'a ContinuitySpec,
    }
    let config = ValidateConfig {
        data: args.data.display().to_string(),
        cutoff: c.cutoff,
        windows: &opts.windows,
        placebo_outcome,
        permutations: c.permutations,
        seed: c.seed,
        regime: c.regime,
        continuity: &spec,
    };
    let sink = Sink {
        command: "validate",
        seed: c.seed,
        input: &args.data,
        json_path: c.json.as_deref(),
        format: c.format,
    };
    emit(&sink, &config, &report, &report.render_text())
}

pub fn cmd_equilibrium(args: &EquilibriumArgs) -> Result<(), CliError> {
    let params = ContestParams::new(args.prize, args.loss_penalty, args.win_bonus, args.salience)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let sol = solve_equilibrium(&params).map_err(|e| CliError::Config(e.to_string()))?;
    let check = verify_equilibrium(&params, args.verify_grid, None).map_err(|e| CliError::Config(e.to_string()))?;
    match args.format {
        OutputFormat::Text => {
            print!("{}", equilibrium_table(&sol));
            println!(
                "best-response check on {} grid points: max gain {:.3e} (tolerance {:.3e}) {}",
                check.grid_points,
                check.max_improvement(),
                check.tolerance,
                if check.passed { "passed" } else { "FAILED" }
            );
        }
        OutputFormat::Json => {
            let out = serde_json::json!({ "solution": sol, "verification": check });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
        }
    }
    if let Some(path) = &args.figure1 {
        write_figure1(path, params.loss_penalty, params.win_bonus, args.baseline_loss_slope, args.x_min, args.x_max, args.points)?;
    }
    Ok(())
}

fn write_figure1(path: &Path, d: f64, u: f64, slope: f64, x_min: f64, x_max: f64, points: usize) -> Result<(), CliError> {
    let series = figure1_series(d, u, slope, x_min, x_max, points).map_err(|e| CliError::Config(e.to_string()))?;
    let mut text = String::from("x,baseline,pos_expect,neg_expect\n");
    for p in series {
        text.push_str(&format!("{},{},{},{}\n", p.x, p.baseline, p.pos_expect, p.neg_expect));
    }
    write_text(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub artifacts: Vec<PathBuf>,
    pub summary_digest: String,
    pub manifest: PathBuf,
}

const REPLICATE_OUTCOMES: [Variable; 3] = [
    Variable::Advanced,
    Variable::Round1DistancePoints,
    Variable::Round1StylePoints,
];

const ADJUSTMENT: [Variable; 2] = [Variable::WcPointsBefore, Variable::HomeEvent];

/// Simulates both regimes and writes data, descriptives, local and
/// continuity-based estimates, the diff-in-disc, the validation battery,
/// plot series and a manifest into `out_dir`.
pub fn cmd_replicate(config_path: Option<&Path>, out_dir: &Path, permutations: usize) -> Result<ReplicateSummary, CliError> {
    if permutations == 0 {
        return Err(CliError::Config("--permutations must be at least 1".into()));
    }
    let cfg = load_config(config_path)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut artifacts: Vec<PathBuf> = Vec::new();
    let mut put = |name: &str, text: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        write_text(&path, &text)?;
        artifacts.push(path);
        Ok(())
    };
    let json = |v: &dyn erased::Json| v.to_json();

    let ds = simulate_dataset(&cfg)?;
    let mut buf = Vec::new();
    crate::data::write_csv_to(&ds, &mut buf).map_err(|e| data_error(&out_dir.join("data.csv"), e))?;
    put("data.csv", String::from_utf8(buf).expect("csv is utf-8"))?;
    put("config.toml", cfg.to_toml_string())?;

    let summaries = descriptive_table(&ds).map_err(|e| CliError::Estimator(e.to_string()))?;
    put("descriptives.json", json(&summaries))?;
    put("descriptives.txt", render(&descriptive_tables(&summaries)))?;

    let bins = group_compare(&ds, Variable::Advanced, 5, Regime::After).map_err(|e| CliError::Estimator(e.to_string()))?;
    let mut bins_csv = String::from("rank_lo,rank_hi,after_mean,before_mean,difference,welch_p\n");
    for b in &bins {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        bins_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.rank_lo,
            b.rank_hi,
            opt(b.first.mean),
            opt(b.second.mean),
            opt(b.difference),
            opt(b.welch.map(|w| w.p_value)),
        ));
    }
    put("advancement_by_rank_bin.csv", bins_csv)?;
    put("group_compare.json", json(&bins))?;

    let cutoff = cfg.cutoff();
    let perms = PermutationOptions {
        n_permutations: permutations,
        seed: cfg.seed,
        ..PermutationOptions::default()
    };
    let mut local_cols = Vec::new();
    let mut cont_cols = Vec::new();
    let mut selections = Vec::new();
    for regime in Regime::ALL {
        let sub = ds.filter_regime(regime);
        let search = WindowSearch {
            permutations: perms,
            ..WindowSearch::default()
        };
        let selection = select_window(&sub, &Variable::COVARIATES, cutoff, &search)?;
        let smallest = RdWindow::symmetric(cutoff, 1)?;
        let windows = if selection.window == smallest { vec![smallest] } else { vec![smallest, selection.window] };
        for outcome in REPLICATE_OUTCOMES {
            for &w in &windows {
                let r = rd_local_estimate(&sub, outcome, &w, &perms)?;
                local_cols.push((regime, format!("{regime} {w}"), r));
            }
            for covs in [Vec::new(), ADJUSTMENT.to_vec()] {
                let spec = ContinuitySpec {
                    covariates: covs.clone(),
                    ..ContinuitySpec::default()
                };
                let r = rd_continuity_estimate(&sub, outcome, cutoff, &spec)?;
                let label = if covs.is_empty() { regime.to_string() } else { format!("{regime} + covariates") };
                cont_cols.push((regime, label, r));
            }
        }
        let rows = rd::rd_plot_data(&sub, Variable::Advanced, cutoff, &selection.window, 3)?;
        let mut buf = Vec::new();
        write_plot_csv(&rows, &mut buf).map_err(|e| CliError::Estimator(e.to_string()))?;
        put(&format!("rd_plot_{regime}.csv"), String::from_utf8(buf).expect("csv is utf-8"))?;
        selections.push((regime, selection));
    }
    put("window_selection.json", json(&selections))?;
    put("local_randomization.json", json(&local_cols))?;
    let tables: Vec<TextTable> = Regime::ALL
        .iter()
        .map(|&g| local_table(&format!("Local randomization RD estimates ({g})"), &strip(g, &local_cols)))
        .collect();
    put("local_randomization.txt", render(&tables))?;
    put("continuity.json", json(&cont_cols))?;
    let tables: Vec<TextTable> = Regime::ALL
        .iter()
        .map(|&g| continuity_table(&format!("Continuity-based RD estimates ({g})"), &strip(g, &cont_cols)))
        .collect();
    put("continuity.txt", render(&tables))?;

    let mut dd_cols = Vec::new();
    for outcome in REPLICATE_OUTCOMES {
        for covs in [Vec::new(), ADJUSTMENT.to_vec()] {
            let spec = ContinuitySpec {
                covariates: covs.clone(),
                ..ContinuitySpec::default()
            };
            let r = diff_in_disc_estimate(&ds, outcome, cutoff, &spec)?;
            dd_cols.push((if covs.is_empty() { "no covariates".to_string() } else { "covariates".to_string() }, r));
        }
    }
    put("diffdisc.json", json(&dd_cols))?;
    put("diffdisc.txt", render(&[diffdisc_table("Difference in discontinuities", &dd_cols)]))?;

    for (regime, selection) in &selections {
        let sub = ds.filter_regime(*regime);
        let smallest = RdWindow::symmetric(cutoff, 1)?;
        let windows = if selection.window == smallest { vec![smallest] } else { vec![smallest, selection.window] };
        let opts = validation_options(&sub, cutoff, Some(windows), perms, ContinuitySpec::default(), Variable::Advanced)?;
        let report = validation_report(&sub, &opts)?;
        put(&format!("validation_{regime}.json"), json(&report))?;
        put(&format!("validation_{regime}.txt"), report.render_text())?;
    }

    let s = &cfg.structural;
    let params = ContestParams::new(s.prize, s.loss_penalty, s.win_bonus, 1).map_err(|e| CliError::Config(e.to_string()))?;
    let sol = solve_equilibrium(&params).map_err(|e| CliError::Config(e.to_string()))?;
    put("equilibrium.json", json(&sol))?;
    let fig1 = out_dir.join("figure1.csv");
    write_figure1(&fig1, s.loss_penalty, s.win_bonus, 2.25, -2.0, 2.0, 81)?;
    artifacts.push(fig1);

    let manifest_path = out_dir.join("manifest.json");
    let inputs: Vec<PathBuf> = config_path.map(Path::to_path_buf).into_iter().collect();
    let manifest = RunManifest::build("replicate", &cfg, Some(cfg.seed), &inputs, &artifacts)?;
    manifest.write(&manifest_path)?;
    Ok(ReplicateSummary {
        artifacts,
        summary_digest: manifest.summary_digest,
        manifest: manifest_path,
    })
}

fn strip<T: Clone>(regime: Regime, cols: &[(Regime, String, T)]) -> Vec<(String, T)> {
    cols.iter()
        .filter(|c| c.0 == regime)
        .map(|(_, l, r)| (l.clone(), r.clone()))
        .collect()
}

/// Object-safe JSON rendering for the artifact writer.
mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string_pretty(self).expect("artifact serializes") + "\n"
        }
    }
}
