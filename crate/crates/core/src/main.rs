use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Arg, ArgAction, ArgMatches, Command};

use moment_closure::harness::config::parse_config_with;
use moment_closure::harness::metrics::load_report;
use moment_closure::harness::pipeline::{
    closure_metrics, load_stage2_solution, run_stage1, run_stage2, stage2_metrics, stage2_quantities, METRICS_DIR,
    REPORT_NAME, STAGE1_DIR,
};
use moment_closure::harness::{
    config_to_text, emit_loss_history, emit_plot_data, load_or_run_reference, run_pipeline, run_reference,
    save_report, ExperimentConfig, MetricReport, PlotField, Snapshots, FIELDS,
};
use moment_closure::{Error, Result};

/// A failure tagged with the stage it came from.
struct Failure {
    stage: &'static str,
    error: Error,
}

trait Tag<T> {
    fn tag(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Tag<T> for Result<T> {
    fn tag(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| match error {
            Error::Stage { stage, source } => Failure { stage, error: *source },
            error => Failure { stage, error },
        })
    }
}

fn exit_code(stage: &str) -> u8 {
    match stage {
        "config" => 2,
        "reference" => 3,
        "stage1" => 4,
        "stage2" => 5,
        "metrics" => 6,
        "plot-data" => 7,
        _ => 1,
    }
}

fn config_args(cmd: Command) -> Command {
    let mut cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("configuration file"),
        )
        .arg(
            Arg::new("test")
                .long("test")
                .value_name("ID")
                .help("preset: test1 | test2 | test3 | custom (same as --experiment.test)"),
        )
        .arg(
            Arg::new("print-config")
                .long("print-config")
                .action(ArgAction::SetTrue)
                .help("print the resolved configuration before running"),
        );
    for f in FIELDS {
        let path = f.path();
        cmd = cmd.arg(
            Arg::new(path.clone())
                .long(path)
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help(f.help)
                .hide_short_help(true),
        );
    }
    cmd
}

fn cli() -> Command {
    let plot = Command::new("plot-data")
        .about("Write delimited tables of reference and Stage-2 fields")
        .arg(
            Arg::new("quantity")
                .long("quantity")
                .value_delimiter(',')
                .action(ArgAction::Append)
                .help("quantities such as m0, dx_m2, nn_m0, loss_history"),
        )
        .arg(
            Arg::new("time")
                .long("time")
                .value_delimiter(',')
                .value_parser(clap::value_parser!(f64))
                .action(ArgAction::Append)
                .help("snapshot times (default: metrics.eval_times)"),
        )
        .arg(
            Arg::new("delimiter")
                .long("delimiter")
                .default_value(",")
                .help("column separator, one character"),
        );
    Command::new("mclosure")
        .about("Two-stage learned moment closure for semiclassical Liouville dynamics")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(config_args(Command::new("reference").about("Run the kinetic reference solver and store snapshots")))
        .subcommand(config_args(Command::new("stage1").about("Train the Stage-1 closure networks")))
        .subcommand(config_args(Command::new("stage2").about("Train the Stage-2 moment networks")))
        .subcommand(config_args(Command::new("pipeline").about("Reference, both stages and the metric report")))
        .subcommand(config_args(Command::new("metrics").about("Recompute the metric report from stored artifacts")))
        .subcommand(config_args(plot))
}

fn load_config(m: &ArgMatches) -> std::result::Result<ExperimentConfig, Failure> {
    let text = match m.get_one::<String>("config") {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure {
            stage: "config",
            error: Error::Io {
                path: PathBuf::from(p),
                source: e,
            },
        })?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    if let Some(t) = m.get_one::<String>("test") {
        overrides.push(("experiment.test".to_string(), t.clone()));
    }
    for f in FIELDS {
        if let Some(v) = m.get_one::<String>(&f.path()) {
            overrides.push((f.path(), v.clone()));
        }
    }
    let cfg = parse_config_with(&text, &overrides).tag("config")?;
    if m.get_flag("print-config") {
        print!("{}", config_to_text(&cfg));
    }
    Ok(cfg)
}

fn describe(snaps: &Snapshots) -> String {
    let t = snaps.times();
    format!(
        "{} snapshots ({}D) at t = {:?} .. {:?}",
        snaps.len(),
        snaps.dim(),
        t.first().copied().unwrap_or(0.0),
        t.last().copied().unwrap_or(0.0)
    )
}

fn reference_cmd(cfg: &ExperimentConfig) -> std::result::Result<(), Failure> {
    let clock = Instant::now();
    let snaps = run_reference(cfg).tag("reference")?;
    println!(
        "reference: {} in {:.1} s -> {}",
        describe(&snaps),
        clock.elapsed().as_secs_f64(),
        cfg.experiment.outdir.join("reference").display()
    );
    Ok(())
}

fn stage1_cmd(cfg: &ExperimentConfig) -> std::result::Result<(), Failure> {
    let (snaps, hit) = load_or_run_reference(cfg).tag("reference")?;
    println!("reference: {}{}", describe(&snaps), if hit { " (cached)" } else { "" });
    let clock = Instant::now();
    let (closures, hit) = run_stage1(cfg, &snaps).tag("stage1")?;
    println!(
        "stage1: {} closure(s) in {:.1} s{}",
        closures.len(),
        clock.elapsed().as_secs_f64(),
        if hit { " (cached)" } else { "" }
    );
    let mut report = MetricReport::new(cfg.experiment.test.as_str(), &cfg.hash());
    for c in &closures {
        report.rows.extend(closure_metrics(cfg, &snaps, c).tag("metrics")?);
    }
    print!("{}", report.to_tables());
    Ok(())
}

fn stage2_cmd(cfg: &ExperimentConfig) -> std::result::Result<(), Failure> {
    let (snaps, _) = load_or_run_reference(cfg).tag("reference")?;
    let (closures, _) = match cfg.stage2.closure {
        moment_closure::harness::config::ClosureSource::Learned => run_stage1(cfg, &snaps).tag("stage1")?,
        _ => (Vec::new(), true),
    };
    let clock = Instant::now();
    let (sol, hit) = run_stage2(cfg, &snaps, &closures).tag("stage2")?;
    let last = sol.history.last().map_or(f64::NAN, |h| h.total);
    println!(
        "stage2: {} epochs, final loss {last:.4e}, {:.1} s{}",
        sol.epochs(),
        clock.elapsed().as_secs_f64(),
        if hit { " (cached)" } else { "" }
    );
    let mut report = MetricReport::new(cfg.experiment.test.as_str(), &cfg.hash());
    report.rows = stage2_metrics(cfg, &snaps, &sol).tag("metrics")?;
    print!("{}", report.to_tables());
    Ok(())
}

fn pipeline_cmd(cfg: &ExperimentConfig) -> std::result::Result<(), Failure> {
    let report = run_pipeline(cfg).tag("pipeline")?;
    print!("{}", report.to_tables());
    println!("report -> {}", cfg.experiment.outdir.join(METRICS_DIR).display());
    Ok(())
}

/// Report from whatever is stored: closures of the configured schemes and the
/// Stage-2 solution, each only if present.
fn metrics_cmd(cfg: &ExperimentConfig) -> std::result::Result<(), Failure> {
    let dir = cfg.experiment.outdir.join(METRICS_DIR);
    let (snaps, _) = load_or_run_reference(cfg).tag("reference")?;
    let mut report = MetricReport::new(cfg.experiment.test.as_str(), &cfg.hash());
    let s1 = cfg.experiment.outdir.join(STAGE1_DIR);
    for &id in &cfg.stage1.schemes {
        if let Ok((c, _)) = moment_closure::persist::load_closure(&s1, &format!("closure_{id}"), None) {
            report.rows.extend(closure_metrics(cfg, &snaps, &c).tag("metrics")?);
        }
    }
    if let Ok(sol) = load_stage2_solution(cfg) {
        report.rows.extend(stage2_metrics(cfg, &snaps, &sol).tag("metrics")?);
    }
    if report.rows.is_empty() {
        return Err(Failure {
            stage: "metrics",
            error: Error::InvalidArgument(format!(
                "no trained artifacts under {}",
                cfg.experiment.outdir.display()
            )),
        });
    }
    if let Ok(old) = load_report(&dir, REPORT_NAME) {
        report.timings = old.timings;
    }
    save_report(&dir, REPORT_NAME, &report).tag("metrics")?;
    print!("{}", report.to_tables());
    Ok(())
}

fn plot_cmd(cfg: &ExperimentConfig, m: &ArgMatches) -> std::result::Result<(), Failure> {
    let quantities: Vec<String> = m.get_many::<String>("quantity").map(|v| v.cloned().collect()).unwrap_or_default();
    let times: Vec<f64> = m
        .get_many::<f64>("time")
        .map(|v| v.copied().collect())
        .unwrap_or_else(|| cfg.metrics.eval_times.clone());
    let delim = m.get_one::<String>("delimiter").map_or(",", String::as_str);
    let mut chars = delim.chars();
    let (Some(d), None) = (chars.next(), chars.next()) else {
        return Err(Failure {
            stage: "plot-data",
            error: Error::InvalidArgument(format!("delimiter must be one character, got `{delim}`")),
        });
    };
    let out = cfg.experiment.outdir.join("plot");
    let (field_q, history): (Vec<String>, Vec<String>) =
        quantities.into_iter().partition(|q| q != "loss_history");
    let mut written = Vec::new();
    let solution = load_stage2_solution(cfg).ok();
    if !history.is_empty() {
        let sol = solution.as_ref().ok_or_else(|| Failure {
            stage: "plot-data",
            error: Error::InvalidArgument("loss_history needs a stored Stage-2 solution".into()),
        })?;
        written.push(emit_loss_history(&out, cfg.experiment.test.as_str(), &sol.history, d).tag("plot-data")?);
    }
    if !field_q.is_empty() {
        let (snaps, _) = load_or_run_reference(cfg).tag("reference")?;
        let mut fields = Vec::new();
        for &t in &times {
            let k = snaps.index_of(t).tag("plot-data")?;
            let mut f = match &snaps {
                Snapshots::OneD(s) => PlotField::from_1d(&s[k]),
                Snapshots::TwoD(s) => PlotField::from_2d(&s[k]),
            };
            if let Some(sol) = &solution {
                f.add_predictions(&sol.nets, stage2_quantities(snaps.dim())).tag("plot-data")?;
            }
            fields.push(f);
        }
        written.extend(emit_plot_data(&out, cfg.experiment.test.as_str(), &fields, &field_q, d).tag("plot-data")?);
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(m: &ArgMatches) -> std::result::Result<(), Failure> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = load_config(sub)?;
    match name {
        "reference" => reference_cmd(&cfg),
        "stage1" => stage1_cmd(&cfg),
        "stage2" => stage2_cmd(&cfg),
        "pipeline" => pipeline_cmd(&cfg),
        "metrics" => metrics_cmd(&cfg),
        "plot-data" => plot_cmd(&cfg, sub),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    match run(&m) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.error);
            ExitCode::from(exit_code(f.stage))
        }
    }
}
