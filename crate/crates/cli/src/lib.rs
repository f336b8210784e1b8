//! Command-line driver for `affine-ocp`: solves catalog problems, runs the
//! regularity diagnostics and the convergence studies, and writes CSV/JSON
//! tables with run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use affine_ocp::euler::SweepConfig;
use affine_ocp::model::{catalog_names, catalog_params, lookup, lookup_oracle, Params};
use affine_ocp::{ContinuousTriple, ControlAffineProblem, Error};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

mod converge;
mod diagnose;
pub mod output;
mod perturb;
mod solve;

use output::num;

#[derive(Parser, Debug, Clone)]
#[command(
    name = "affine-ocp",
    version,
    about = "Euler discretization and regularity checks for control-affine optimal control"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Solve the discrete minimum principle and write the node values.
    Solve(solve::SolveArgs),
    /// Check switching structure, duality, coercivity and symmetry.
    Diagnose(diagnose::DiagnoseArgs),
    /// Convergence table against the closed-form or a fine reference.
    Converge(converge::ConvergeArgs),
    /// Uniform convergence over a seeded family of perturbed problems.
    Perturb(perturb::PerturbArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
    /// List catalog problems and their parameters.
    List,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded location.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, default_value = "example1")]
    pub problem: String,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Extra problem parameter, `name=value`; repeatable.
    #[arg(long = "param", value_parser = parse_key_value)]
    pub params: Vec<(String, f64)>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    /// Stopping tolerance on the control change.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_round: f64,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Output file; overrides `--out-dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output directory (default `$AFFINE_OCP_OUT_DIR`, else `.`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Strictly increasing list of step counts, `32,64,128`.
#[derive(Debug, Clone, PartialEq)]
pub struct NList(pub Vec<usize>);

fn parse_key_value(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("parameter {k}: '{v}' is not a number"))?;
    Ok((k.trim().to_string(), v))
}

pub fn parse_n_list(s: &str) -> Result<NList, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let n: usize = part
            .trim()
            .parse()
            .map_err(|_| format!("'{part}' is not a step count"))?;
        if n == 0 {
            return Err("N must be ≥ 1".into());
        }
        if out.last().is_some_and(|&last| n <= last) {
            return Err("N list must be strictly increasing".into());
        }
        out.push(n);
    }
    Ok(NList(out))
}

/// Why a command stopped. Maps onto the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, bad parameters, IO. Exit 1.
    Usage(String),
    /// The numerics did not deliver. Exit 2.
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::Divergence { .. } | Error::Infeasible { .. } => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("io: {e}"))
    }
}

pub(crate) type CmdResult = Result<i32, Failure>;

/// Stream handles and the argument vector shared by all commands.
pub(crate) struct Ctx<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub argv: Vec<String>,
}

impl Ctx<'_> {
    pub fn warn(&mut self, msg: &str) {
        let _ = writeln!(self.err, "warning: {msg}");
    }
}

/// A catalog problem with its resolved parameters.
pub(crate) struct Resolved {
    pub name: String,
    pub params: Params,
    pub problem: Arc<dyn ControlAffineProblem>,
    pub oracle: Option<Arc<dyn ContinuousTriple + Send + Sync>>,
}

impl ProblemArgs {
    pub(crate) fn resolve(&self) -> Result<Resolved, Failure> {
        let defaults =
            catalog_params(&self.problem).map_err(|e| Failure::Usage(format!("{e}\n{}", catalog_listing())))?;
        let mut given = Params::new();
        for (k, v) in &self.params {
            given.insert(k.clone(), *v);
        }
        if let Some(a) = self.alpha {
            given.insert("alpha".into(), a);
        }
        if let Some(b) = self.beta {
            given.insert("beta".into(), b);
        }
        let problem = lookup(&self.problem, &given)?;
        let oracle = lookup_oracle(&self.problem, &given)?;
        let mut params: Params = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        params.extend(given);
        Ok(Resolved {
            name: self.problem.clone(),
            params,
            problem,
            oracle,
        })
    }
}

impl SweepArgs {
    pub(crate) fn config(&self) -> Result<SweepConfig, Failure> {
        let c = SweepConfig {
            damping: self.damping,
            tol_control: self.tol,
            max_iterations: self.max_iter,
            tol_round: self.tol_round,
        };
        c.validate()?;
        Ok(c)
    }

    pub(crate) fn echo(&self) -> Value {
        json!({
            "damping": num(self.damping),
            "tol": num(self.tol),
            "max_iter": self.max_iter,
            "tol_round": num(self.tol_round),
        })
    }
}

pub fn catalog_listing() -> String {
    let mut s = String::from("available problems:");
    for name in catalog_names() {
        let params = catalog_params(name).unwrap_or(&[]);
        let list: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!("\n  {name} ({})", list.join(", ")));
    }
    s
}

/// Common manifest fields; commands add `grid`, `config` and `seeds`.
pub(crate) fn manifest(ctx: &Ctx, command: &str, problem: &Resolved, extra: Value) -> Value {
    let params: serde_json::Map<String, Value> = problem.params.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
    let mut m = json!({
        "command": command,
        "problem": { "name": problem.name, "params": params },
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": output::timestamp(),
        "argv": ctx.argv,
    });
    if let (Value::Object(base), Value::Object(more)) = (&mut m, extra) {
        base.extend(more);
    }
    m
}

pub(crate) fn write_output(ctx: &mut Ctx, path: &Path, contents: &str, manifest: &Value) -> Result<(), Failure> {
    let mpath = output::write_with_manifest(path, contents, manifest)?;
    let _ = writeln!(ctx.out, "wrote {}", path.display());
    let _ = writeln!(ctx.out, "wrote {}", mpath.display());
    Ok(())
}

/// Runs `argv` (without the program name) and returns the exit code.
pub fn run<S: AsRef<str>>(argv: &[S], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let argv: Vec<String> = argv.iter().map(|s| s.as_ref().to_string()).collect();
    let cli = match Cli::try_parse_from(std::iter::once("affine-ocp".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    let mut ctx = Ctx { out, err, argv };
    match dispatch(cli, &mut ctx) {
        Ok(code) => code,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Numerical(m) => m.clone(),
            };
            let _ = writeln!(ctx.err, "error: {msg}");
            f.code()
        }
    }
}

fn dispatch(cli: Cli, ctx: &mut Ctx) -> CmdResult {
    match cli.command {
        Command::Solve(a) => solve::run(a, ctx),
        Command::Diagnose(a) => diagnose::run(a, ctx),
        Command::Converge(a) => converge::run(a, ctx),
        Command::Perturb(a) => perturb::run(a, ctx),
        Command::Replay(a) => replay(a, ctx),
        Command::List => {
            let _ = writeln!(ctx.out, "{}", catalog_listing());
            Ok(0)
        }
    }
}

fn replay(args: ReplayArgs, ctx: &mut Ctx) -> CmdResult {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.manifest.display())))?;
    let m: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad manifest: {e}")))?;
    let argv: Vec<String> = m["argv"]
        .as_array()
        .and_then(|a| a.iter().map(|v| v.as_str().map(String::from)).collect())
        .ok_or_else(|| Failure::Usage("manifest has no argv".into()))?;
    let mut cli = Cli::try_parse_from(std::iter::once("affine-ocp".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Failure::Usage(format!("recorded arguments no longer parse: {e}")))?;
    if let Some(dir) = args.out_dir {
        let o = match &mut cli.command {
            Command::Solve(a) => &mut a.output,
            Command::Diagnose(a) => &mut a.output,
            Command::Converge(a) => &mut a.output,
            Command::Perturb(a) => &mut a.output,
            Command::Replay(_) | Command::List => {
                return Err(Failure::Usage("manifest records no runnable command".into()))
            }
        };
        o.out = o.out.as_ref().and_then(|p| p.file_name()).map(|f| dir.join(f));
        o.out_dir = Some(dir);
    }
    ctx.argv = argv;
    dispatch(cli, ctx)
}
