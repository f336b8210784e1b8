use affine_ocp::euler::sweep_solve;
use affine_ocp::pmp::{
    analyze_switching, coercivity_constant_remark, robust_switching_margin, RemarkBound, SwitchingConfig,
    SwitchingReport,
};
use affine_ocp::solution::sample_on_grid;
use affine_ocp::variation::{
    coercivity_probe, duality_check, linearize, LinearizationData, ProbeConfig, ProbeMode, ProbeSample,
};
use affine_ocp::{Error, ExtremalTriple, Grid, GridFunction, Interpolation};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::output::{json_pretty, num, resolve_path};
use crate::{manifest, write_output, CmdResult, Ctx, Failure, OutputArgs, ProblemArgs, SweepArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Switching,
    Duality,
    Coercivity,
    Symmetry,
}

impl Check {
    fn key(self) -> &'static str {
        match self {
            Check::Switching => "switching",
            Check::Duality => "duality",
            Check::Coercivity => "coercivity",
            Check::Symmetry => "symmetry",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    /// The closed-form extremal when the catalog has one, else the sweep.
    Auto,
    Oracle,
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Absolute,
    NormalCone,
}

#[derive(Args, Debug, Clone)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "switching,duality,coercivity,symmetry"
    )]
    pub checks: Vec<Check>,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub reference: Reference,
    #[arg(long, default_value_t = 0.5)]
    pub c0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma0: f64,
    /// Coercivity probe samples.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "absolute")]
    pub mode: Mode,
    /// Random piecewise-constant variations for the duality check.
    #[arg(long, default_value_t = 20)]
    pub duality_samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_duality: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol_sym: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub kappa_min: f64,
    /// Singular-arc threshold; default `1e-8 · max|σ|`.
    #[arg(long)]
    pub tol_sing: Option<f64>,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn switching_json(r: &SwitchingReport) -> Value {
    let edges: Vec<Value> = r
        .edges
        .iter()
        .map(|e| {
            json!({
                "edge_index": e.edge_index,
                "direction": e.direction,
                "zeros": e.zeros,
                "brackets": e.brackets.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
                "slopes_minus": e.slopes_minus,
                "slopes_plus": e.slopes_plus,
                "kappa": num(e.kappa),
                "tau": num(e.tau),
                "bang_bang": e.bang_bang,
                "singular": e.singular.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
                "min_abs": num(e.min_abs),
                "pass": e.pass,
            })
        })
        .collect();
    json!({
        "edges": edges,
        "zero_count": r.zero_count(),
        "kappa": num(r.kappa),
        "tau": num(r.tau),
        "bang_bang": r.bang_bang,
        "pass": r.pass,
    })
}

fn remark_json(b: RemarkBound) -> Value {
    match b {
        RemarkBound::Constant(c) => json!({ "constant": num(c) }),
        RemarkBound::NoSwitching { min_abs_sigma } => {
            json!({ "no_switching": true, "min_abs_sigma": num(min_abs_sigma) })
        }
    }
}

pub fn sample_json(s: &ProbeSample) -> Value {
    json!({
        "index": s.index,
        "family": s.family,
        "perturbation": num(s.perturbation),
        "norm": num(s.norm),
        "first_order": num(s.first_order),
        "gamma": num(s.gamma),
        "margin": num(s.margin),
        "delta_u": s.delta_u,
    })
}

/// Seeded piecewise-constant variation with 1 to 8 pieces, entries in `[−1, 1]`.
pub fn random_variation(grid: Grid, m: usize, seed: u64, index: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let pieces: usize = rng.gen_range(1..=8);
    let values: Vec<f64> = (0..pieces * m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let horizon = grid.horizon();
    GridFunction::from_fn(grid, m, Interpolation::PiecewiseConstant, |t, o| {
        let k = ((t / horizon * pieces as f64) as usize).min(pieces - 1);
        o.copy_from_slice(&values[k * m..(k + 1) * m]);
    })
}

fn skipped(reason: &str) -> Value {
    json!({ "status": "skipped", "reason": reason })
}

struct Outcome {
    report: Value,
    pass: Option<bool>,
}

fn status(pass: bool) -> Value {
    Value::String(if pass { "pass" } else { "fail" }.into())
}

pub fn run(args: DiagnoseArgs, ctx: &mut Ctx) -> CmdResult {
    let resolved = args.problem.resolve()?;
    let config = args.sweep.config()?;
    let p = &*resolved.problem;
    let grid = Grid::new(args.n, p.horizon())?;
    let mut checks: Vec<Check> = Vec::new();
    for c in &args.checks {
        if !checks.contains(c) {
            checks.push(*c);
        }
    }
    if checks.is_empty() {
        return Err(Failure::Usage("no checks requested".into()));
    }
    let mut warnings: Vec<String> = Vec::new();

    let (triple, source): (ExtremalTriple, &str) = match (args.reference, &resolved.oracle) {
        (Reference::Auto | Reference::Oracle, Some(o)) => (sample_on_grid(&**o, grid)?, "oracle"),
        (Reference::Oracle, None) => {
            return Err(Failure::Usage(format!(
                "problem {} has no closed-form extremal",
                resolved.name
            )));
        }
        (Reference::Auto | Reference::Sweep, _) => {
            let sol = sweep_solve(p, grid, &config, None)?;
            if !sol.converged {
                return Err(Failure::Numerical(format!(
                    "reference sweep did not converge in {} iterations",
                    sol.iterations
                )));
            }
            (sol.triple, "sweep")
        }
    };

    let sw_config = SwitchingConfig {
        tol_sing: args.tol_sing,
        kappa_min: args.kappa_min,
        ..SwitchingConfig::default()
    };
    let needs_switching = checks.iter().any(|c| matches!(c, Check::Switching | Check::Coercivity));
    let switching = if needs_switching {
        Some(analyze_switching(p, &triple, &sw_config)?)
    } else {
        None
    };
    let needs_lin = checks.iter().any(|c| !matches!(c, Check::Switching));
    let lin: Option<Result<LinearizationData, Error>> = needs_lin.then(|| linearize(p, &triple));
    if let Some(Err(e)) = &lin {
        if !matches!(e, Error::MissingCapability(_)) {
            return Err(e.clone().into());
        }
    }

    let mut reports = Map::new();
    let mut overall = true;
    for check in checks {
        let outcome = match check {
            Check::Switching => {
                let r = switching.as_ref().expect("computed above");
                let mut v = switching_json(r);
                let robust = robust_switching_margin(r, args.gamma0)?;
                v["robust"] = json!({
                    "gamma": num(args.gamma0),
                    "kappa_prime": num(robust.kappa_prime),
                    "tau_prime": num(robust.tau_prime),
                    "valid": robust.valid,
                });
                v["status"] = status(r.pass);
                Outcome {
                    report: v,
                    pass: Some(r.pass),
                }
            }
            Check::Duality => match &lin {
                Some(Ok(l)) => duality(l, &args)?,
                _ => missing(check, &lin, &mut warnings),
            },
            Check::Coercivity => match &lin {
                Some(Ok(l)) => coercivity(l, p.control_set(), switching.as_ref(), &args, &mut warnings)?,
                _ => missing(check, &lin, &mut warnings),
            },
            Check::Symmetry => match &lin {
                Some(Ok(l)) => {
                    let pass = l.symmetry_defect <= args.tol_sym && l.hessian_asymmetry <= args.tol_sym;
                    Outcome {
                        report: json!({
                            "symmetry_defect": num(l.symmetry_defect),
                            "hessian_asymmetry": num(l.hessian_asymmetry),
                            "tol": num(args.tol_sym),
                            "exact": l.symmetry_defect == 0.0 && l.hessian_asymmetry == 0.0,
                            "pass": pass,
                            "status": status(pass),
                        }),
                        pass: Some(pass),
                    }
                }
                _ => missing(check, &lin, &mut warnings),
            },
        };
        if let Some(pass) = outcome.pass {
            overall &= pass;
        }
        reports.insert(check.key().into(), outcome.report);
    }

    for w in &warnings {
        ctx.warn(w);
    }
    let report = json!({
        "problem": resolved.name,
        "n": args.n,
        "reference": source,
        "checks": reports,
        "pass": overall,
        "warnings": warnings,
    });
    let mut text = json_pretty(&report);
    text.push('\n');
    let name = format!("diagnose-{}.json", resolved.name);
    let path = resolve_path(args.output.out.as_deref(), args.output.out_dir.as_deref(), &name);
    let keys: Vec<&str> = args.checks.iter().map(|c| c.key()).collect();
    let man = manifest(
        ctx,
        "diagnose",
        &resolved,
        json!({
            "grid": { "n": args.n, "horizon": num(p.horizon()) },
            "config": {
                "sweep": args.sweep.echo(),
                "checks": keys,
                "reference": source,
                "c0": num(args.c0),
                "alpha0": num(args.alpha0),
                "gamma0": num(args.gamma0),
                "samples": args.samples,
                "mode": format!("{:?}", args.mode),
                "duality_samples": args.duality_samples,
                "tol_duality": num(args.tol_duality),
                "tol_sym": num(args.tol_sym),
                "kappa_min": num(args.kappa_min),
                "tol_sing": args.tol_sing.map(num),
            },
            "seeds": { "probe": args.seed, "duality": args.seed },
        }),
    );
    write_output(ctx, &path, &text, &man)?;
    let _ = writeln!(ctx.out, "pass: {overall}");
    Ok(if overall { 0 } else { 2 })
}

fn missing(check: Check, lin: &Option<Result<LinearizationData, Error>>, warnings: &mut Vec<String>) -> Outcome {
    let reason = match lin {
        Some(Err(e)) => e.to_string(),
        _ => "linearization unavailable".to_string(),
    };
    warnings.push(format!("{} skipped: {reason}", check.key()));
    Outcome {
        report: skipped(&reason),
        pass: None,
    }
}

fn duality(lin: &LinearizationData, args: &DiagnoseArgs) -> Result<Outcome, Failure> {
    let grid = lin.grid();
    let m = lin.control_dim();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let unit = GridFunction::uniform(grid, Interpolation::PiecewiseConstant, &vec![1.0; m]);
    let variations = std::iter::once(("unit", unit))
        .chain((0..args.duality_samples).map(|k| ("random", random_variation(grid, m, args.seed, k as u64))));
    for (k, (kind, du)) in variations.enumerate() {
        let d = duality_check(lin, &du)?;
        worst = worst.max(d.gap);
        rows.push(json!({ "index": k, "kind": kind, "lhs": num(d.lhs), "rhs": num(d.rhs), "gap": num(d.gap) }));
    }
    let pass = worst <= args.tol_duality;
    Ok(Outcome {
        report: json!({
            "samples": rows,
            "max_gap": num(worst),
            "tol": num(args.tol_duality),
            "seed": args.seed,
            "pass": pass,
            "status": status(pass),
        }),
        pass: Some(pass),
    })
}

fn coercivity(
    lin: &LinearizationData,
    set: &affine_ocp::Polytope,
    switching: Option<&SwitchingReport>,
    args: &DiagnoseArgs,
    warnings: &mut Vec<String>,
) -> Result<Outcome, Failure> {
    let config = ProbeConfig {
        c0: args.c0,
        alpha0: args.alpha0,
        gamma0: args.gamma0,
        samples: args.samples,
        seed: args.seed,
        mode: match args.mode {
            Mode::Absolute => ProbeMode::AbsoluteFirstOrder,
            Mode::NormalCone => ProbeMode::NormalCone,
        },
    };
    let r = coercivity_probe(lin, set, &config)?;
    if let Some(w) = r.warning {
        warnings.push(format!("coercivity: {w}"));
    }
    let pass = r.min_margin >= 0.0;
    let mut v = json!({
        "min_margin": num(r.min_margin),
        "min_ratio": num(r.min_ratio),
        "argmin_sample_norm": r.argmin.as_ref().map(|s| num(s.norm)),
        "samples": r.samples,
        "evaluations": r.evaluations,
        "seed": r.seed,
        "c0": num(r.c0),
        "alpha0": num(r.alpha0),
        "gamma0": num(r.gamma0),
        "mode": format!("{:?}", config.mode),
        "warning": r.warning,
        "pass": pass,
        "status": status(pass),
    });
    if let Some(s) = r.argmin.as_ref().filter(|_| !pass) {
        v["counterexample"] = sample_json(s);
    }
    if let Some(sw) = switching {
        match coercivity_constant_remark(sw, set) {
            Ok(b) => v["remark_bound"] = remark_json(b),
            Err(e) => v["remark_bound"] = json!({ "unavailable": e.to_string() }),
        }
    }
    Ok(Outcome {
        report: v,
        pass: Some(pass),
    })
}
