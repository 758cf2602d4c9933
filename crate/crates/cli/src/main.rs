use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use slacksched::engine::{simulate_with, Fault, SimOptions};
use slacksched::generators::{default_delta, gen_example1, gen_example2, gen_random, Range, RandomSpec};
use slacksched::harness::{run_checks, run_sweep, sweep_csv, CheckConfig, Family, GammaSpec, SweepSpec};
use slacksched::oracle::{optimal_nonmigratory, OracleLimit, RatioValue};
use slacksched::{Instance, PolicySpec, Rational};

/// Online scheduling with slack: simulate, solve offline, and compare.
#[derive(Parser, Debug)]
#[command(name = "slacksched", version)]
struct Cli {
    /// Seed for random generation, and the first seed of sweeps and checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the primary output here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Output format; `sweep` defaults to CSV, everything else to JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance file and list every violation.
    Validate { instance: PathBuf },
    /// Generate an instance.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Run an online policy on an instance.
    Simulate {
        instance: PathBuf,
        /// `two-threshold` or `single-threshold:<gamma>`.
        #[arg(long, default_value = "two-threshold")]
        policy: PolicySpec,
        /// Also write the schedule as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compute the offline non-migratory optimum.
    Oracle {
        instance: PathBuf,
        #[arg(long, env = "SCHED_ORACLE_CAP", default_value_t = 12)]
        cap: usize,
    },
    /// Optimum over a policy's finished weight on one instance.
    Ratio {
        instance: PathBuf,
        #[arg(long, default_value = "two-threshold")]
        policy: PolicySpec,
        #[arg(long, env = "SCHED_ORACLE_CAP", default_value_t = 12)]
        cap: usize,
    },
    /// Competitive ratios over a grid of ε values (CSV by default).
    Sweep(SweepArgs),
    /// Run the invariant suite; exits 1 if any invariant fails.
    Check {
        /// Number of random instances.
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        #[arg(long, default_value_t = 10)]
        max_jobs: usize,
        #[arg(long, env = "SCHED_ORACLE_CAP", default_value_t = 12)]
        cap: usize,
        #[arg(long, hide = true)]
        inject_skip_discards: bool,
    },
}

#[derive(Subcommand, Debug)]
enum GenCommand {
    /// Chain of jobs, each interrupting its predecessor.
    Example1 {
        #[arg(long)]
        eps: Rational,
        #[arg(long)]
        gamma: Rational,
        /// Defaults to min(ε, γ, εγ)/100.
        #[arg(long)]
        delta: Option<Rational>,
        #[arg(short)]
        n: usize,
    },
    /// A long job followed by a short heavy one.
    Example2 {
        #[arg(long)]
        eps: Rational,
        #[arg(long)]
        gamma: Rational,
        #[arg(long)]
        delta: Option<Rational>,
    },
    /// Random instance with slack on every eligible machine.
    Random(RandomArgs),
}

#[derive(Args, Debug)]
struct RandomArgs {
    #[arg(short, default_value_t = 8)]
    n: usize,
    #[arg(short, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value = "1/2")]
    eps: Rational,
    /// Processing-time range `lo:hi`.
    #[arg(long, default_value = "1:4", value_parser = parse_range)]
    size: Range,
    #[arg(long, default_value = "1:10", value_parser = parse_range)]
    weight: Range,
    /// Window stretch beyond the minimum slack, `lo:hi` with lo ≥ 1.
    #[arg(long, default_value = "1:2", value_parser = parse_range)]
    stretch: Range,
    #[arg(long, default_value = "10")]
    horizon: Rational,
    #[arg(long, default_value_t = 4)]
    granularity: u32,
}

impl RandomArgs {
    fn spec(&self, seed: u64) -> RandomSpec {
        RandomSpec {
            seed,
            jobs: self.n,
            machines: self.m,
            epsilon: self.eps.clone(),
            size: self.size.clone(),
            weight: self.weight.clone(),
            stretch: self.stretch.clone(),
            horizon: self.horizon.clone(),
            granularity: self.granularity,
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Comma-separated ε grid.
    #[arg(long, value_delimiter = ',', default_value = "1,1/2,1/4,1/8")]
    eps: Vec<Rational>,
    /// A constant or a multiple of ε: `1/2`, `eps`, `2eps`.
    #[arg(long, default_value = "eps")]
    gamma: GammaSpec,
    #[arg(long)]
    delta: Option<Rational>,
    #[arg(long, value_delimiter = ',', default_value = "two-threshold,single-threshold")]
    policies: Vec<PolicySpec>,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Chain length for example1 (the instance has one more job).
    #[arg(long, default_value_t = 4)]
    chain: usize,
    /// Jobs per random instance.
    #[arg(long, default_value_t = 8)]
    jobs: usize,
    /// Machines per random instance.
    #[arg(long, default_value_t = 2)]
    machines: usize,
    #[arg(long, env = "SCHED_ORACLE_CAP", default_value_t = 12)]
    cap: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Example1,
    Example2,
    Random,
}

fn parse_range(s: &str) -> Result<Range, String> {
    let (lo, hi) = s.split_once(':').unwrap_or((s, s));
    let parse = |t: &str| t.trim().parse::<Rational>().map_err(|e| e.to_string());
    Ok(Range::new(parse(lo)?, parse(hi)?))
}

fn limit(cap: usize) -> OracleLimit {
    OracleLimit { jobs: cap, ..OracleLimit::default() }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("{}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let mut text = text.to_owned();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_only(format: Format, what: &str) -> Result<()> {
    if format == Format::Csv {
        bail!("{what} has no CSV form; use --format json");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let out = cli.out.as_deref();
    let format = cli.format.unwrap_or(match cli.command {
        Command::Sweep(_) => Format::Csv,
        _ => Format::Json,
    });
    match &cli.command {
        Command::Validate { instance } => {
            let inst = read_instance(instance)?;
            let report = inst.validate();
            if !report.is_valid() {
                bail!("{} is invalid:\n{report}", instance.display());
            }
            emit(out, &format!("valid: {} jobs on {} machines", inst.jobs.len(), inst.machines))?;
        }
        Command::Gen(gen) => {
            json_only(format, "gen")?;
            let inst = match gen {
                GenCommand::Example1 { eps, gamma, delta, n } => {
                    let delta = delta.clone().unwrap_or_else(|| default_delta(eps, gamma));
                    gen_example1(eps, gamma, &delta, *n)?
                }
                GenCommand::Example2 { eps, gamma, delta } => {
                    let delta = delta.clone().unwrap_or_else(|| default_delta(eps, gamma));
                    gen_example2(eps, gamma, &delta)?
                }
                GenCommand::Random(args) => gen_random(&args.spec(cli.seed))?,
            };
            emit(out, &inst.to_json())?;
        }
        Command::Simulate { instance, policy, trace } => {
            let inst = read_instance(instance)?.validated()?;
            let policy = policy.build(&inst.epsilon, None)?;
            let outcome = simulate_with(&inst, &policy, &SimOptions::default())?;
            if let Some(path) = trace {
                fs::write(path, outcome.trace_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            match format {
                Format::Json => emit(out, &outcome.to_json())?,
                Format::Csv => emit(out, &outcome.trace_csv())?,
            }
        }
        Command::Oracle { instance, cap } => {
            let inst = read_instance(instance)?;
            let res = optimal_nonmigratory(&inst, &limit(*cap))?;
            match format {
                Format::Json => emit(out, &res.to_json())?,
                Format::Csv => {
                    let mut text = String::from("job,machine\n");
                    for (job, machine) in &res.assignment {
                        text.push_str(&format!("{job},{machine}\n"));
                    }
                    emit(out, &text)?
                }
            }
        }
        Command::Ratio { instance, policy, cap } => {
            let inst = read_instance(instance)?.validated()?;
            let policy = policy.build(&inst.epsilon, None)?;
            let res = optimal_nonmigratory(&inst, &limit(*cap))?;
            let outcome = simulate_with(&inst, &policy, &SimOptions::default())?;
            let ratio = RatioValue::of(&res.optimum, &outcome.weights.finished);
            match format {
                Format::Json => emit(
                    out,
                    &serde_json::to_string_pretty(&json!({
                        "policy": policy.to_string(),
                        "optimum": res.optimum,
                        "admitted": outcome.weights.admitted,
                        "finished": outcome.weights.finished,
                        "ratio": ratio.to_string(),
                    }))?,
                )?,
                Format::Csv => emit(
                    out,
                    &format!(
                        "policy,optimum,admitted,finished,ratio\n{policy},{},{},{},{ratio}",
                        res.optimum, outcome.weights.admitted, outcome.weights.finished
                    ),
                )?,
            }
        }
        Command::Sweep(args) => {
            let family = match args.family {
                FamilyArg::Example1 => Family::Example1 { n: args.chain },
                FamilyArg::Example2 => Family::Example2,
                FamilyArg::Random => Family::Random(RandomSpec {
                    jobs: args.jobs,
                    machines: args.machines,
                    ..RandomSpec::default()
                }),
            };
            let spec = SweepSpec {
                family,
                epsilons: args.eps.clone(),
                gamma: args.gamma.clone(),
                delta: args.delta.clone(),
                policies: args.policies.clone(),
                seeds: (cli.seed..cli.seed.saturating_add(args.seeds)).collect(),
                limit: limit(args.cap),
            };
            let rows = run_sweep(&spec)?;
            match format {
                Format::Csv => emit(out, &sweep_csv(&rows))?,
                Format::Json => emit(out, &serde_json::to_string_pretty(&rows)?)?,
            }
        }
        Command::Check { seeds, max_jobs, cap, inject_skip_discards } => {
            let config = CheckConfig {
                seeds: *seeds,
                first_seed: cli.seed,
                max_jobs: *max_jobs,
                limit: limit(*cap),
                fault: inject_skip_discards.then_some(Fault::SkipDiscards),
            };
            let report = run_checks(&config);
            match format {
                Format::Json => emit(out, &serde_json::to_string_pretty(&report)?)?,
                Format::Csv => bail!("check has no CSV form; use --format json"),
            }
            eprint!("{report}");
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
