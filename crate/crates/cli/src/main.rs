//! `cajal`: check, evaluate and compile programs, run the property suites and
//! the linking experiments.
//!
//! Exit status is 0 on success, 1 when a program fails to parse or typecheck
//! or a property fails, and 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cajal::compile::{check_target_env, compile as compile_derivation, compile_env, CompileMode};
use cajal::eval::{check_source_env, eval_counting, SourceEnv, DEFAULT_FUEL};
use cajal::experiments::{
    build_model, export_metrics, run_experiment, Budget, ExperimentConfig, ModelConfig, ModelKind, Task,
};
use cajal::gen::GenConfig;
use cajal::tensor::{reshape, Matrix, TargetEnv};
use cajal::verify::{run_suite, Property};
use cajal::{parse_expr, parse_program, typecheck, Derivation, Name, Program, Value};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

#[derive(Parser, Debug)]
#[command(name = "cajal", version, about = "Compile linear boolean programs to linear neurons")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Typecheck a program and print its type.
    Check { file: PathBuf },
    /// Evaluate a program to a value.
    Eval {
        file: PathBuf,
        /// Bind a free variable to a closed value, e.g. `x=tt`.
        #[arg(long = "env", value_name = "NAME=VALUE")]
        env: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Compile a program to a tensor.
    Compile {
        file: PathBuf,
        /// Bind a free variable to a closed value, compiled before use.
        #[arg(long = "env", value_name = "NAME=VALUE")]
        env: Vec<String>,
        /// Bind a free variable to a raw vector, e.g. `x=[0.3,0.7]`.
        #[arg(long = "env-vec", value_name = "NAME=[NUMBERS]")]
        env_vec: Vec<String>,
        #[arg(long, value_enum, default_value_t = Mode::Correct)]
        mode: Mode,
        /// Seed for `--mode random`.
        #[arg(long, env = "CAJAL_SEED", default_value_t = 0)]
        seed: u64,
        /// Write the tensor JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run property suites over generated programs.
    Verify {
        #[arg(value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, env = "CAJAL_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Maximum depth of generated programs.
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
    /// Train linked models on a synthetic classification task.
    Experiment {
        /// Comma-separated tasks: eq, xor, and, or.
        #[arg(long, value_delimiter = ',', default_value = "eq")]
        task: Vec<String>,
        /// Comma-separated model kinds: I, D, C, T.
        #[arg(long, value_delimiter = ',', default_value = "I,D,C,T")]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        lrs: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        batches: Vec<usize>,
        /// Number of seeds per configuration.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// First model seed; also seeds the data.
        #[arg(long, env = "CAJAL_SEED", default_value_t = 0)]
        seed: u64,
        /// Training steps per configuration (ignored with `--full`).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Four learning rates × four batch sizes with a fixed budget of ten epochs.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Correct,
    Hard,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    Behavior,
    Linearity,
    Closing,
    Termination,
    HardBranch,
}

impl Suite {
    fn properties(self) -> Vec<Property> {
        match self {
            Suite::All => Property::ALL.to_vec(),
            Suite::Behavior => vec![Property::Behavior],
            Suite::Linearity => vec![Property::Linearity],
            Suite::Closing => vec![Property::Closing],
            Suite::Termination => vec![Property::Termination],
            Suite::HardBranch => vec![Property::HardBranch],
        }
    }
}

enum Failure {
    /// The input or a checked property was wrong.
    Rejected(String),
    Usage(String),
}

type Outcome = Result<Output, Failure>;

/// What a successful command prints.
struct Output {
    text: String,
    json: Json,
    /// Some properties failed; print normally but exit 1.
    failed: bool,
}

impl Output {
    fn ok(text: String, json: Json) -> Self {
        Output { text, json, failed: false }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli.command) {
        Ok(out) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json output"));
            } else if !out.text.is_empty() {
                print!("{}", out.text);
            }
            ExitCode::from(if out.failed { 1 } else { 0 })
        }
        Err(f) => {
            let (code, msg) = match f {
                Failure::Rejected(m) => (1, m),
                Failure::Usage(m) => (2, m),
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&json!({ "error": msg })).expect("json output"));
            }
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Check { file } => check(&file),
        Command::Eval { file, env, fuel } => eval_cmd(&file, &env, fuel),
        Command::Compile { file, env, env_vec, mode, seed, out } => {
            compile_cmd(&file, &env, &env_vec, mode, seed, out.as_deref())
        }
        Command::Verify { suite, seed, count, depth } => verify(suite, seed, count, depth),
        Command::Experiment { task, models, lrs, batches, seeds, seed, steps, eval_every, out_dir, full } => {
            let tasks =
                task.iter().map(|t| t.parse::<Task>()).collect::<Result<Vec<_>, _>>().map_err(Failure::Usage)?;
            let models =
                models.iter().map(|m| m.parse::<ModelKind>()).collect::<Result<Vec<_>, _>>().map_err(Failure::Usage)?;
            let mut cfg = if full { ExperimentConfig::full() } else { ExperimentConfig::defaults() };
            cfg.models = models;
            if !lrs.is_empty() {
                cfg.lrs = lrs;
            }
            if !batches.is_empty() {
                cfg.batches = batches;
            }
            cfg.seeds = (seed..seed + seeds).collect();
            cfg.data.seed = seed;
            if let (Some(n), false) = (steps, full) {
                cfg.budget = Budget::Steps(n);
            }
            if let Some(k) = eval_every {
                cfg.eval_every = k;
            }
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            experiment(&tasks, &cfg, &out_dir)
        }
    }
}

fn load(file: &Path) -> Result<(Program, Derivation), Failure> {
    let src = fs::read_to_string(file).map_err(|e| Failure::Rejected(format!("{}: {e}", file.display())))?;
    let program = parse_program(&src).map_err(|e| Failure::Rejected(format!("{}:{e}", file.display())))?;
    let d = typecheck(&program.context, &program.expr)
        .map_err(|e| Failure::Rejected(format!("{}: {e}", file.display())))?;
    Ok((program, d))
}

fn check(file: &Path) -> Outcome {
    let (program, d) = load(file)?;
    Ok(Output::ok(format!("{}\n", d.ty), json!({ "context": program.context.to_string(), "type": d.ty.to_string() })))
}

fn split_binding(s: &str) -> Result<(Name, &str), Failure> {
    let (name, value) =
        s.split_once('=').ok_or_else(|| Failure::Usage(format!("binding `{s}` should look like NAME=VALUE")))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(Failure::Usage(format!("binding `{s}` has no name")));
    }
    Ok((Name::from(name), value.trim()))
}

fn source_env(bindings: &[String]) -> Result<SourceEnv, Failure> {
    let mut env = SourceEnv::new();
    for b in bindings {
        let (name, src) = split_binding(b)?;
        let e = parse_expr(src).map_err(|e| Failure::Usage(format!("value for `{name}`: {e}")))?;
        let v = Value::try_from(e).map_err(|_| Failure::Usage(format!("`{src}` is not a value")))?;
        if env.insert(name.clone(), v).is_some() {
            return Err(Failure::Usage(format!("`{name}` bound twice")));
        }
    }
    Ok(env)
}

fn eval_cmd(file: &Path, bindings: &[String], fuel: u64) -> Outcome {
    let (program, d) = load(file)?;
    let env = source_env(bindings)?;
    check_source_env(&program.context, &env).map_err(|e| Failure::Usage(e.to_string()))?;
    let (v, steps) = eval_counting(&d.expr, &env, fuel).map_err(|e| Failure::Rejected(e.to_string()))?;
    Ok(Output::ok(format!("{v}\n"), json!({ "value": v.to_string(), "type": d.ty.to_string(), "steps": steps })))
}

fn compile_cmd(
    file: &Path,
    bindings: &[String],
    vectors: &[String],
    mode: Mode,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    let (program, d) = load(file)?;
    let src = source_env(bindings)?;
    let mut env = TargetEnv::new();
    for (x, v) in &src {
        let ty = program
            .context
            .get(x)
            .ok_or_else(|| Failure::Usage(format!("`{x}` is not a free variable of the program")))?;
        let ctx = cajal::Context::from_bindings([(x.clone(), ty.clone())]).expect("single binding");
        let single = SourceEnv::from([(x.clone(), v.clone())]);
        let t = compile_env(&ctx, &single).map_err(|e| Failure::Usage(e.to_string()))?;
        env.extend(t);
    }
    for b in vectors {
        let (x, raw) = split_binding(b)?;
        let ty = program
            .context
            .get(&x)
            .ok_or_else(|| Failure::Usage(format!("`{x}` is not a free variable of the program")))?;
        let numbers: Vec<f64> =
            serde_json::from_str(raw).map_err(|_| Failure::Usage(format!("`{raw}` is not a list of numbers")))?;
        let t = reshape(&Matrix::column(&numbers), ty)
            .map_err(|_| Failure::Usage(format!("`{x}` has type {ty} and needs {} numbers", cajal::tensor::dim(ty))))?;
        if env.insert(x.clone(), t).is_some() {
            return Err(Failure::Usage(format!("`{x}` bound twice")));
        }
    }
    check_target_env(&program.context, &env).map_err(|e| Failure::Usage(e.to_string()))?;
    let mode = match mode {
        Mode::Correct => CompileMode::Correct,
        Mode::Hard => CompileMode::HardBranch,
        Mode::Random => CompileMode::TypePreservingRandom(seed),
    };
    let t = compile_derivation(&d, &env, mode).map_err(|e| Failure::Rejected(e.to_string()))?;
    let json = serde_json::to_value(t.to_json()).expect("tensor json");
    match out {
        Some(path) => {
            fs::write(path, t.to_json_string() + "\n")
                .map_err(|e| Failure::Rejected(format!("{}: {e}", path.display())))?;
            Ok(Output::ok(format!("wrote {}\n", path.display()), json))
        }
        None => {
            let mut text = format!("{}  {}x{}\n", t.ty(), t.shape().0, t.shape().1);
            for row in t.to_rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.6}")).collect();
                text.push_str(&format!("[{}]\n", cells.join(" ")));
            }
            Ok(Output::ok(text, json))
        }
    }
}

fn verify(suite: Suite, seed: u64, count: usize, depth: usize) -> Outcome {
    let cfg = GenConfig { seed, max_depth: depth, count, ..GenConfig::default() };
    cfg.validate().map_err(Failure::Usage)?;
    let reports: Vec<_> = suite.properties().into_iter().map(|p| run_suite(p, &cfg)).collect();
    let failed = reports.iter().any(|r| !r.ok());
    Ok(Output { text: reports.iter().map(|r| r.to_string()).collect(), json: json!({ "reports": reports }), failed })
}

fn experiment(tasks: &[Task], cfg: &ExperimentConfig, out_dir: &Path) -> Outcome {
    let mut text = String::new();
    let mut results = Vec::new();
    for &task in tasks {
        let series = run_experiment(task, cfg).map_err(|e| Failure::Rejected(e.to_string()))?;
        let dir = out_dir.join(task.name());
        let files = export_metrics(&series, &dir).map_err(|e| Failure::Rejected(e.to_string()))?;
        let summary = series.summary();
        let mut fidelity = serde_json::Map::new();
        let mut params = serde_json::Map::new();
        for &kind in &cfg.models {
            let mc = ModelConfig {
                kind,
                input_dim: cfg.data.dim,
                hidden: cfg.hidden,
                lr: cfg.lrs[0],
                batch: cfg.batches[0],
                seed: cfg.seeds[0],
                steps: 0,
                eval_every: 1,
            };
            let model = build_model(&mc, task).map_err(|e| Failure::Rejected(e.to_string()))?;
            params.insert(kind.to_string(), json!(model.param_count()));
            if let Some(f) = model.basis_fidelity() {
                fidelity.insert(kind.to_string(), json!(f));
            }
        }
        text.push_str(&format!("task {task}: wrote {}\n", files.csv.display()));
        for g in &summary.groups {
            text.push_str(&format!(
                "  {} lr {} batch {}: final accuracy {:.4} ± {:.4} over {} seeds{}\n",
                g.model,
                g.lr,
                g.batch,
                g.final_mean,
                g.final_std,
                g.seeds.len(),
                g.first_step_reaching(0.95).map_or(String::new(), |s| format!(", 0.95 by step {s}"))
            ));
        }
        results.push(json!({
            "task": task,
            "metrics_csv": files.csv,
            "summary_json": files.summary,
            "plot_svg": files.plot,
            "parameters": params,
            "basis_fidelity": fidelity,
            "summary": summary,
        }));
    }
    Ok(Output::ok(text, json!({ "experiments": results })))
}
