use affine_ocp::euler::{convergence_row, ConvergenceRow, ConvergenceTable, SweepConfig};
use affine_ocp::perturb::fine_reference;
use affine_ocp::{ContinuousTriple, ControlAffineProblem};
use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{csv_table, json_line, num, opt, resolve_path, Cell};
use crate::{manifest, parse_n_list, write_output, CmdResult, Ctx, Failure, NList, OutputArgs, ProblemArgs, SweepArgs};

#[derive(Args, Debug, Clone)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_parser = parse_n_list, default_value = "32,64,128,256,512,1024")]
    pub n_list: NList,
    /// Exit 2 when the fitted order falls below this.
    #[arg(long, default_value_t = 0.9)]
    pub min_order: f64,
    /// Without a closed form, the reference uses this many times the largest N.
    #[arg(long, default_value_t = 16)]
    pub ref_factor: usize,
    /// Worker threads; results are merged in N order.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub const HEADER: [&str; 7] = ["N", "h", "err_x_w11", "err_p_w11", "err_u_l1", "err_total", "converged"];

pub fn row_cells(r: &ConvergenceRow) -> Vec<Cell> {
    vec![
        Cell::Int(r.n),
        Cell::Float(r.h),
        Cell::Float(r.err_x_w11),
        Cell::Float(r.err_p_w11),
        Cell::Float(r.err_u_l1),
        Cell::Float(r.err_total),
        Cell::Bool(r.converged),
    ]
}

pub fn row_json(r: &ConvergenceRow) -> Value {
    json!({
        "N": r.n,
        "h": num(r.h),
        "err_x_w11": num(r.err_x_w11),
        "err_p_w11": num(r.err_p_w11),
        "err_u_l1": num(r.err_u_l1),
        "err_total": num(r.err_total),
        "converged": r.converged,
        "iterations": r.iterations,
    })
}

pub fn footer(t: &ConvergenceTable) -> Value {
    json!({
        "order": opt(t.fit.order),
        "constant_C": opt(t.fit.constant),
        "rows_used": t.fit.rows_used,
    })
}

/// The table in CSV form followed by one JSON footer line.
pub fn render(t: &ConvergenceTable) -> std::io::Result<String> {
    let header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<Cell>> = t.rows.iter().map(row_cells).collect();
    let mut text = csv_table(&header, &rows)?;
    text.push_str(&json_line(&footer(t)));
    text.push('\n');
    Ok(text)
}

pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be ≥ 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn study(
    pool: &rayon::ThreadPool,
    problem: &dyn ControlAffineProblem,
    reference: &(dyn ContinuousTriple + Sync),
    n_list: &[usize],
    config: &SweepConfig,
) -> Result<ConvergenceTable, Failure> {
    let rows: Vec<_> = pool.install(|| {
        n_list
            .par_iter()
            .map(|&n| convergence_row(problem, reference, n, config))
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ConvergenceTable::from_rows(rows))
}

pub fn run(args: ConvergeArgs, ctx: &mut Ctx) -> CmdResult {
    let resolved = args.problem.resolve()?;
    let config = args.sweep.config()?;
    let n_list = &args.n_list.0;
    if n_list.is_empty() {
        return Err(Failure::Usage("N list must not be empty".into()));
    }
    let max_n = *n_list.last().expect("nonempty");
    let pool = pool(args.jobs)?;
    let p = &*resolved.problem;

    let (table, reference) = match &resolved.oracle {
        Some(o) => (study(&pool, p, &**o, n_list, &config)?, "oracle".to_string()),
        None => {
            let steps = args.ref_factor.max(1) * max_n;
            let fine = fine_reference(p, steps, &config)?;
            (study(&pool, p, &fine, n_list, &config)?, format!("fine:{steps}"))
        }
    };

    let text = render(&table)?;
    let name = format!("converge-{}.csv", resolved.name);
    let path = resolve_path(args.output.out.as_deref(), args.output.out_dir.as_deref(), &name);
    let man = manifest(
        ctx,
        "converge",
        &resolved,
        json!({
            "grid": { "n_list": n_list, "horizon": num(p.horizon()) },
            "config": {
                "sweep": args.sweep.echo(),
                "min_order": num(args.min_order),
                "reference": reference,
                "ref_factor": args.ref_factor,
                "jobs": args.jobs,
            },
            "seeds": {},
        }),
    );
    write_output(ctx, &path, &text, &man)?;

    let unconverged: Vec<usize> = table.rows.iter().filter(|r| !r.converged).map(|r| r.n).collect();
    if !unconverged.is_empty() {
        ctx.warn(&format!("sweep did not converge for N = {unconverged:?}"));
    }
    match table.fit.order {
        None => {
            ctx.warn("order undefined: fewer than two usable rows");
            Ok(if unconverged.is_empty() { 0 } else { 2 })
        }
        Some(order) => {
            let _ = writeln!(
                ctx.out,
                "order {order:.4}, C {:.4e}",
                table.fit.constant.unwrap_or(f64::NAN)
            );
            if order >= args.min_order && unconverged.is_empty() {
                Ok(0)
            } else {
                if order < args.min_order {
                    ctx.warn(&format!("fitted order {order:.4} below {}", args.min_order));
                }
                Ok(2)
            }
        }
    }
}
