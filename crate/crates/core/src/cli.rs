//! Command-line front end: `benchmark`, `explain` and `selftest`.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
//! benchmark finished with failed cells.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::dataset;
use crate::error::{Error, Result};
use crate::explain::{self, ExplainerConfig, Method};
use crate::fidelity::{self, EvalSpec, ModelParams, ModelSpec, SigmaSpec};
use crate::selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CELL_ERRORS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mlime", version, about = "Local explanation fidelity lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment grid from a config file.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (overrides the config; 0 = all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain one instance and report its fidelity.
    Explain {
        #[arg(long)]
        dataset: PathBuf,
        /// gnb, forest, mlp or external:<command>
        #[arg(long, value_parser = parse_model)]
        model: ModelSpec,
        /// lime, lemon or mlime
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Kernel width, or "default" for 0.75·√p.
        #[arg(long, value_parser = parse_sigma)]
        sigma: SigmaSpec,
        /// Row index in the dataset file (0-based, header excluded).
        #[arg(long)]
        instance: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional config supplying explainer, evaluation and model settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Directory receiving the report file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the analytic oracle checks.
    Selftest,
}

fn parse_model(s: &str) -> std::result::Result<ModelSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sigma(s: &str) -> std::result::Result<SigmaSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Benchmark { config, jobs, seed, out: out_dir } => {
            cmd_benchmark(&config, jobs, seed, out_dir.as_deref(), out)
        }
        Command::Explain { dataset, model, method, sigma, instance, seed, config, jobs, out: out_dir } => {
            let args = ExplainArgs { dataset, model, method, sigma, instance, seed, config, jobs, out: out_dir };
            cmd_explain(&args, out)
        }
        Command::Selftest => Ok(cmd_selftest(out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Runs the configured grid and writes `records.csv`, `summary.md`,
/// `resolved_config.toml`, `timings.csv` and `errors.csv` under the output
/// directory.
pub fn cmd_benchmark(
    config: &Path,
    jobs: Option<usize>,
    seed: Option<u64>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(o) = out_dir {
        cfg.out_dir = o.to_path_buf();
    }
    let datasets = cfg.load_datasets()?;
    let resolved = cfg.resolved_toml(&datasets)?;
    let grid = cfg.grid_spec(datasets)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("resolved_config.toml"), &resolved)?;

    let result = fidelity::run_grid(&grid, &cfg.eval_spec(), cfg.master_seed)?;
    let summary = fidelity::summarize(&result.records, result.errors.len());
    let markdown = summary.to_markdown();
    write_file(
        &cfg.out_dir.join("records.csv"),
        &fidelity::records_csv(&result.records, cfg.record_wall_time),
    )?;
    write_file(&cfg.out_dir.join("summary.md"), &markdown)?;
    write_file(&cfg.out_dir.join("timings.csv"), &fidelity::timings_csv(&result.records))?;
    write_file(&cfg.out_dir.join("errors.csv"), &fidelity::errors_csv(&result.errors))?;

    let _ = writeln!(out, "{markdown}");
    let _ = writeln!(
        out,
        "{} records, {} error rows, written to {}",
        result.records.len(),
        result.errors.len(),
        cfg.out_dir.display()
    );
    Ok(if result.errors.is_empty() { EXIT_OK } else { EXIT_CELL_ERRORS })
}

#[derive(Debug, Clone)]
pub struct ExplainArgs {
    pub dataset: PathBuf,
    pub model: ModelSpec,
    pub method: Method,
    pub sigma: SigmaSpec,
    pub instance: usize,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Explains one instance, prints the report and, with `out`, writes it to
/// `<out>/explain_<dataset>_<model>_<method>_<instance>.txt`.
pub fn cmd_explain(args: &ExplainArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    let ds = dataset::standardize(&dataset::load_csv(&args.dataset, None)?);
    ds.instance(args.instance)?;
    let p = ds.n_features();
    let sigma = args.sigma.resolve(p);

    let (params, defaults, mut eval) = match &cfg {
        Some(c) => (c.model_params(), c.explainer_defaults(), c.eval_spec()),
        None => (
            ModelParams::default(),
            fidelity::ExplainerDefaults::default(),
            EvalSpec::new(50_000, sigma, args.seed),
        ),
    };
    eval.sigma = sigma;
    eval.seed = args.seed;
    let ecfg: ExplainerConfig = defaults.config(args.method, sigma, p, args.seed);

    let jobs = args.jobs.or(cfg.as_ref().map(|c| c.jobs)).unwrap_or(0);
    let work = || -> Result<String> {
        let model = fidelity::fit_model(&args.model, &ds, &params, fidelity::model_seed(args.seed, 0, 0))?;
        let expl = explain::explain_instance(&ds, model.as_ref(), args.instance, &ecfg)?;
        let record = fidelity::evaluate_fidelity(&ds, model.as_ref(), &expl, &eval)?;
        Ok(explain::render_report(&ds, &args.model.name(), &expl, Some(&record)))
    };
    let report = if jobs == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?
            .install(work)?
    };
    let _ = write!(out, "{report}");
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let name = format!(
            "explain_{}_{}_{}_{}.txt",
            sanitize(&ds.name),
            sanitize(&args.model.name()),
            args.method,
            args.instance
        );
        write_file(&dir.join(name), &report)?;
    }
    Ok(EXIT_OK)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub fn cmd_selftest(out: &mut dyn Write) -> i32 {
    let report = selftest::run();
    let _ = write!(out, "{}", report.render());
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_USAGE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn selftest_passes() {
        let (code, out, _) = run_capture(&["mlime", "selftest"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    }

    #[test]
    fn invalid_method_is_usage_error() {
        let (code, _, err) = run_capture(&[
            "mlime", "explain", "--dataset", "x.csv", "--model", "gnb", "--method", "shap",
            "--sigma", "1", "--instance", "0",
        ]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("shap"));
    }

    #[test]
    fn missing_config_is_usage_error() {
        let (code, _, err) = run_capture(&["mlime", "benchmark", "--config", "/nonexistent.toml"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("nonexistent"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["mlime", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("benchmark"));
    }

    #[test]
    fn sanitized_names() {
        assert_eq!(sanitize("external:python3 m.py"), "external_python3_m.py");
    }
}
