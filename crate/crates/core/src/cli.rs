//! Command-line front end. `main` only forwards to [`run`].

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, CampaignConfig};
use crate::error::Error;
use crate::gradcheck::{self, Fault, GradCheckConfig};
use crate::harness::{self, figures, EnvChoice, ExperimentConfig, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that replaces the output directory.
pub const OUT_ENV: &str = "PREFOPT_OUT";

#[derive(Debug, Parser)]
#[command(name = "prefopt", version, about = "Preference-based policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, summary.json and figures/.
    Run(RunArgs),
    /// Run an experiment over several prompt-set sizes.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated prompt-set sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<usize>,
    },
    /// Randomized check of the RMB-PO regret bound on tabular instances.
    Prop1 {
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long, default_value_t = 6)]
        max_states: usize,
        #[arg(long, default_value_t = 5)]
        max_actions: usize,
        #[arg(long, default_value_t = 4)]
        max_pairs: usize,
        #[arg(long, default_value_t = 2021)]
        seed: u64,
        #[arg(long, default_value = "out/prop1")]
        out: PathBuf,
    },
    /// Compare every analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 2021)]
        seed: u64,
        #[arg(long, default_value_t = gradcheck::DEFAULT_INSTANCES)]
        instances: usize,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Action probabilities of each method over a state grid (linear envs, first seed).
    Profile(RunArgs),
    /// Re-check a serialized tabular instance, or re-run an artifact directory
    /// and compare its results.csv.
    Replay {
        #[arg(long, conflicts_with = "run", required_unless_present = "run")]
        instance: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    DpoLoss,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvArg {
    LinearMatched,
    LinearFlipped,
    Neural,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file; defaults for `--env` are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear-matched")]
    env: EnvArg,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 picks the number of cores. Does not affect results.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn line(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.out, "{}", s.as_ref());
    }

    fn error(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.err, "error: {}", s.as_ref());
    }

    fn warn(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.err, "warning: {}", s.as_ref());
    }
}

fn out_dir(given: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => given.to_path_buf(),
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(io.err, "{text}");
            } else {
                let _ = write!(io.out, "{text}");
            }
            return code;
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&mut io, &a, None),
        Command::Sweep { run, m } => cmd_run(&mut io, &run, Some(m)),
        Command::Prop1 {
            size,
            max_states,
            max_actions,
            max_pairs,
            seed,
            out,
        } => {
            let cfg = CampaignConfig {
                size,
                max_states,
                max_actions,
                max_pairs,
                seed,
                ..Default::default()
            };
            cmd_prop1(&mut io, &cfg, &out_dir(&out))
        }
        Command::Gradcheck {
            seed,
            instances,
            inject_fault,
        } => {
            let mut cfg = GradCheckConfig::new(seed);
            cfg.instances = instances;
            cfg.fault = inject_fault.map(|FaultArg::DpoLoss| Fault::DpoSign);
            cmd_gradcheck(&mut io, &cfg)
        }
        Command::Profile(a) => cmd_profile(&mut io, &a),
        Command::Replay { instance, run, jobs } => match (instance, run) {
            (Some(p), _) => cmd_replay_instance(&mut io, &p),
            (None, Some(dir)) => cmd_replay_run(&mut io, &dir, jobs),
            (None, None) => EXIT_USAGE,
        },
    }
}

fn load_config(io: &mut Io, a: &RunArgs) -> Result<ExperimentConfig, i32> {
    let base = match &a.config {
        Some(path) => fs::read_to_string(path).map_err(|e| {
            io.error(format!("cannot read config {}: {e}", path.display()));
            EXIT_USAGE
        })?,
        None => {
            let env = match a.env {
                EnvArg::LinearMatched => EnvChoice::LinearMatched,
                EnvArg::LinearFlipped => EnvChoice::LinearFlipped,
                EnvArg::Neural => EnvChoice::Neural,
            };
            ExperimentConfig::defaults(env).to_config_text()
        }
    };
    let cfg = ExperimentConfig::parse(&base, &a.overrides).and_then(|c| c.validate().map(|_| c));
    cfg.map_err(|e| {
        io.error(e.to_string());
        EXIT_USAGE
    })
}

fn print_summary(io: &mut Io, record: &RunRecord) {
    for s in &record.seeds {
        if let Some(acc) = s.reward_accuracy {
            io.line(format!("seed={} reward_acc={acc}", s.seed));
        }
    }
    for line in harness::summary_csv(record).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        io.line(format!(
            "method={} m={} seeds={} trimmed_gap={} mean_gap={} min_gap={} max_gap={}",
            f[0], f[1], f[2], f[3], f[4], f[5], f[6]
        ));
    }
    for w in &record.warnings {
        io.warn(w);
    }
}

fn execute(io: &mut Io, cfg: &ExperimentConfig, jobs: usize, dir: &Path) -> Result<RunRecord, i32> {
    let record = harness::run_experiment(cfg, jobs).map_err(|e| {
        io.error(e.to_string());
        EXIT_FAILURE
    })?;
    harness::write_artifacts(&record, dir).map_err(|e| {
        io.error(format!("writing artifacts to {}: {e}", dir.display()));
        EXIT_FAILURE
    })?;
    Ok(record)
}

fn cmd_run(io: &mut Io, a: &RunArgs, sweep: Option<Vec<usize>>) -> i32 {
    let mut cfg = match load_config(io, a) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(m) = sweep {
        cfg.m = m;
        if let Err(e) = cfg.validate() {
            io.error(e.to_string());
            return EXIT_USAGE;
        }
    }
    let dir = out_dir(&a.out);
    match execute(io, &cfg, a.jobs, &dir) {
        Ok(record) => {
            print_summary(io, &record);
            io.line(format!("artifacts {}", dir.display()));
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn cmd_profile(io: &mut Io, a: &RunArgs) -> i32 {
    let mut cfg = match load_config(io, a) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if !cfg.env.is_linear() {
        io.error("action profiles need a linear environment");
        return EXIT_USAGE;
    }
    cfg.seeds.truncate(1);
    let record = match harness::run_experiment(&cfg, a.jobs) {
        Ok(r) => r,
        Err(e) => {
            io.error(e.to_string());
            return EXIT_FAILURE;
        }
    };
    let profiles = record.profiles.as_ref().expect("linear runs carry profiles");
    let dir = out_dir(&a.out);
    let written = (|| -> Result<(), Error> {
        fs::create_dir_all(&dir)?;
        let k = profiles.optimal.ncols();
        let mut csv = String::from("method,state");
        for i in 0..k {
            csv.push_str(&format!(",p{i}"));
        }
        csv.push('\n');
        let rows = profiles
            .profiles
            .iter()
            .map(|(l, p)| (l.as_str(), p))
            .chain(std::iter::once(("optimal", &profiles.optimal)));
        for (label, probs) in rows {
            for (s, row) in profiles.grid.iter().zip(probs.rows()) {
                csv.push_str(&format!("{label},{s}"));
                for v in row {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
            }
        }
        fs::write(dir.join("profile.csv"), csv)?;
        fs::write(dir.join("action_profile.svg"), figures::action_profile_chart(profiles)?)?;
        fs::write(dir.join("config.cfg"), cfg.to_config_text())?;
        Ok(())
    })();
    if let Err(e) = written {
        io.error(e.to_string());
        return EXIT_FAILURE;
    }
    io.line(format!("seed={} grid={}", profiles.seed, profiles.grid.len()));
    io.line(format!("artifacts {}", dir.display()));
    EXIT_OK
}

fn cmd_prop1(io: &mut Io, cfg: &CampaignConfig, dir: &Path) -> i32 {
    let report = match analysis::run_campaign(cfg) {
        Ok(r) => r,
        Err(e) => {
            io.error(e.to_string());
            return EXIT_USAGE;
        }
    };
    let result = (|| -> Result<(), Error> {
        fs::create_dir_all(dir)?;
        let summary = serde_json::json!({
            "config": report.config,
            "instances": report.instances,
            "violations": report.violations.len(),
            "rmf_outside_reported_bound": report.rmf_outside_reported_bound,
            "max_regret_rmb": report.max_regret_rmb,
            "max_abs_telescope_residual": report.max_abs_telescope_residual,
        });
        fs::write(dir.join("prop1_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        if !report.violations.is_empty() {
            let cdir = dir.join("counterexamples");
            fs::create_dir_all(&cdir)?;
            for c in &report.violations {
                fs::write(
                    cdir.join(format!("instance_{:06}.json", c.index)),
                    serde_json::to_string_pretty(c)? + "\n",
                )?;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        io.error(e.to_string());
        return EXIT_FAILURE;
    }
    io.line(format!("instances={}", report.instances));
    io.line(format!("violations={}", report.violations.len()));
    io.line(format!("max_regret_rmb={}", report.max_regret_rmb));
    io.line(format!("rmf_outside_reported_bound={}", report.rmf_outside_reported_bound));
    io.line(format!("artifacts {}", dir.display()));
    if report.violations.is_empty() {
        EXIT_OK
    } else {
        for c in &report.violations {
            io.error(format!("bound violated on instance {}", c.index));
        }
        EXIT_FAILURE
    }
}

fn cmd_gradcheck(io: &mut Io, cfg: &GradCheckConfig) -> i32 {
    let reports = match gradcheck::run_all(cfg) {
        Ok(r) => r,
        Err(e) => {
            io.error(e.to_string());
            return EXIT_FAILURE;
        }
    };
    let mut ok = true;
    for r in &reports {
        io.line(format!(
            "{} {} instances={} coordinates={} max_rel_error={:.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.suite.name(),
            r.instances,
            r.coordinates,
            r.max_relative_error
        ));
        for m in &r.failures {
            ok = false;
            io.line(format!(
                "  mismatch {} instance={} coordinate={} analytic={} numeric={} rel_error={:.3e}",
                r.suite.name(),
                m.instance,
                m.coordinate,
                m.analytic,
                m.numeric,
                m.relative_error
            ));
        }
    }
    if ok {
        EXIT_OK
    } else {
        let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.name()).collect();
        io.error(format!("gradient check failed: {}", failed.join(", ")));
        EXIT_FAILURE
    }
}

fn cmd_replay_instance(io: &mut Io, path: &Path) -> i32 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            io.error(format!("cannot read {}: {e}", path.display()));
            return EXIT_USAGE;
        }
    };
    match analysis::replay(&text) {
        Ok(report) => {
            io.line(serde_json::to_string_pretty(&report).expect("serializable"));
            if report.holds && report.chain_holds() {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e @ (Error::Json(_) | Error::InvalidArgument(_))) => {
            io.error(e.to_string());
            EXIT_USAGE
        }
        Err(e) => {
            io.error(e.to_string());
            EXIT_FAILURE
        }
    }
}

fn cmd_replay_run(io: &mut Io, dir: &Path, jobs: usize) -> i32 {
    let read = |name: &str| fs::read_to_string(dir.join(name));
    let (text, expected) = match (read("config.cfg"), read("results.csv")) {
        (Ok(c), Ok(r)) => (c, r),
        _ => {
            io.error(format!("{} lacks config.cfg or results.csv", dir.display()));
            return EXIT_USAGE;
        }
    };
    let cfg = match ExperimentConfig::parse(&text, &[]) {
        Ok(c) => c,
        Err(e) => {
            io.error(e.to_string());
            return EXIT_USAGE;
        }
    };
    let record = match harness::run_experiment(&cfg, jobs) {
        Ok(r) => r,
        Err(e) => {
            io.error(e.to_string());
            return EXIT_FAILURE;
        }
    };
    if harness::results_csv(&record) == expected {
        io.line("replay identical");
        EXIT_OK
    } else {
        io.line("replay differs");
        EXIT_FAILURE
    }
}
