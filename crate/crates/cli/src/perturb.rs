use affine_ocp::perturb::{
    fine_reference, member_report, sample_family, FamilyReport, MemberReport, PerturbationSpec, PerturbedProblem,
    StudyConfig,
};
use affine_ocp::ContinuousTriple;
use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::converge::{footer, pool, row_json};
use crate::output::{json_pretty, num, opt, resolve_path};
use crate::{manifest, parse_n_list, write_output, CmdResult, Ctx, Failure, NList, OutputArgs, ProblemArgs, SweepArgs};

#[derive(Args, Debug, Clone)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Budget of `‖f̃ − f‖₁,∞ + ‖g̃ − g‖₁,∞`.
    #[arg(long, default_value_t = 1e-2)]
    pub rho: f64,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_n_list, default_value = "32,64,128,256,512,1024")]
    pub n_list: NList,
    /// Fraction of the budget spent on the dynamics.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long, default_value_t = 1.0)]
    pub max_frequency: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ball_radius: f64,
    #[arg(long, default_value_t = 16)]
    pub ref_factor: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn member_json(r: &MemberReport, m: &PerturbedProblem) -> Value {
    let terms: Vec<Value> = m
        .terms()
        .iter()
        .map(|t| {
            json!({
                "target": t.target.label(),
                "amplitude": num(t.amplitude),
                "frequency": t.frequency,
                "phase": num(t.phase),
            })
        })
        .collect();
    let (nf, ng) = m.budget();
    let mut v = json!({
        "index": r.index,
        "budget": num(r.budget),
        "budget_f": num(nf),
        "budget_g": num(ng),
        "c_pi": opt(r.c_pi),
        "distance_to_base": opt(r.distance_to_base),
        "in_ball": r.in_ball,
        "failure": r.failure.as_ref().map(|e| e.to_string()),
        "terms": terms,
    });
    if let Some(t) = &r.table {
        v["rows"] = Value::Array(t.rows.iter().map(row_json).collect());
        v["fit"] = footer(t);
    }
    v
}

pub fn family_json(rep: &FamilyReport, family: &[PerturbedProblem], split: f64) -> Value {
    let s = &rep.summary;
    json!({
        "rho": num(rep.rho),
        "seed": rep.seed,
        "count": rep.members.len(),
        "split": num(split),
        "n_list": rep.n_list,
        "summary": {
            "c_max": opt(s.c_max),
            "c_min": opt(s.c_min),
            "c_median": opt(s.c_median),
            "spread": opt(s.spread),
            "distance_median": opt(s.distance_median),
            "failed": s.failed,
            "outside_ball": s.outside_ball,
        },
        "members": rep.members.iter().zip(family).map(|(r, m)| member_json(r, m)).collect::<Vec<_>>(),
    })
}

pub fn run(args: PerturbArgs, ctx: &mut Ctx) -> CmdResult {
    let resolved = args.problem.resolve()?;
    let sweep = args.sweep.config()?;
    let n_list = &args.n_list.0;
    let max_n = *n_list
        .last()
        .ok_or_else(|| Failure::Usage("N list must not be empty".into()))?;
    if args.count == 0 {
        return Err(Failure::Usage("--count must be ≥ 1".into()));
    }
    let pool = pool(args.jobs)?;
    let base = resolved.problem.clone();

    let mut spec = PerturbationSpec::standard(&*base, args.rho, args.count, args.seed);
    spec.split = args.split;
    for g in &mut spec.basis {
        g.max_frequency = args.max_frequency;
    }
    let family = sample_family(base.clone(), &spec)?;
    let config = StudyConfig {
        sweep,
        ref_factor: args.ref_factor,
        ball_radius: args.ball_radius,
    };
    let fine;
    let reference: &(dyn ContinuousTriple + Sync) = match &resolved.oracle {
        Some(o) => &**o,
        None => {
            fine = fine_reference(&*base, args.ref_factor.max(1) * max_n, &sweep)?;
            &fine
        }
    };
    let members: Vec<MemberReport> = pool.install(|| {
        family
            .par_iter()
            .map(|m| member_report(m, reference, n_list, &config))
            .collect()
    });
    let report = FamilyReport::from_members(args.rho, args.seed, n_list, members);

    let mut text = json_pretty(&family_json(&report, &family, args.split));
    text.push('\n');
    let name = format!("perturb-{}.json", resolved.name);
    let path = resolve_path(args.output.out.as_deref(), args.output.out_dir.as_deref(), &name);
    let man = manifest(
        ctx,
        "perturb",
        &resolved,
        json!({
            "grid": { "n_list": n_list, "horizon": num(base.horizon()) },
            "config": {
                "sweep": args.sweep.echo(),
                "rho": num(args.rho),
                "count": args.count,
                "split": num(args.split),
                "max_frequency": num(args.max_frequency),
                "ball_radius": num(args.ball_radius),
                "ref_factor": args.ref_factor,
                "jobs": args.jobs,
            },
            "seeds": { "family": args.seed },
        }),
    );
    write_output(ctx, &path, &text, &man)?;

    let s = &report.summary;
    if let Some(spread) = s.spread {
        let _ = writeln!(
            ctx.out,
            "C spread {spread:.4}, median distance {:.4e}",
            s.distance_median.unwrap_or(f64::NAN)
        );
    }
    if !s.outside_ball.is_empty() {
        ctx.warn(&format!("members outside the ball: {:?}", s.outside_ball));
    }
    if s.failed.is_empty() {
        Ok(0)
    } else {
        for m in report.members.iter().filter(|m| m.failure.is_some()) {
            ctx.warn(&format!(
                "member {} failed: {}",
                m.index,
                m.failure.as_ref().expect("filtered")
            ));
        }
        Ok(2)
    }
}
