use affine_ocp::euler::{embed, sweep_solve};
use affine_ocp::Grid;
use clap::Args;
use serde_json::json;

use crate::output::{csv_table, num, resolve_path, Cell};
use crate::{manifest, write_output, CmdResult, Ctx, OutputArgs, ProblemArgs, SweepArgs};

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Number of Euler steps.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn columns(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|k| format!("{prefix}{k}")).collect()
    }
}

pub fn run(args: SolveArgs, ctx: &mut Ctx) -> CmdResult {
    let resolved = args.problem.resolve()?;
    let config = args.sweep.config()?;
    let p = &*resolved.problem;
    let grid = Grid::new(args.n, p.horizon())?;
    let sol = sweep_solve(p, grid, &config, None)?;
    let emb = embed(&sol.triple);
    let tr = &emb.triple;
    let sigma = tr.switching_at_nodes(p);
    let (n, m) = (p.state_dim(), p.control_dim());

    let mut header = vec!["t".to_string()];
    header.extend(columns("x", n));
    header.extend(columns("p", n));
    header.extend(columns("u", m));
    header.extend(columns("sigma", m));
    let rows: Vec<Vec<Cell>> = (0..=args.n)
        .map(|i| {
            // u is piecewise constant on [t_i, t_{i+1}); the last node repeats the last cell
            let u = tr.control.at(i.min(args.n - 1));
            let mut row = vec![Cell::Float(grid.node(i))];
            row.extend(tr.state.at(i).iter().map(|v| Cell::Float(*v)));
            row.extend(tr.costate.at(i).iter().map(|v| Cell::Float(*v)));
            row.extend(u.iter().map(|v| Cell::Float(*v)));
            row.extend(sigma.at(i).iter().map(|v| Cell::Float(*v)));
            row
        })
        .collect();
    let text = csv_table(&header, &rows)?;

    let name = format!("solve-{}.csv", resolved.name);
    let path = resolve_path(args.output.out.as_deref(), args.output.out_dir.as_deref(), &name);
    let man = manifest(
        ctx,
        "solve",
        &resolved,
        json!({
            "grid": { "n": args.n, "horizon": num(p.horizon()) },
            "config": { "sweep": args.sweep.echo() },
            "seeds": {},
            "result": {
                "converged": sol.converged,
                "iterations": sol.iterations,
                "final_change": num(sol.final_change),
                "stationarity": num(sol.stationarity),
                "unrounded": sol.unrounded,
            },
        }),
    );
    write_output(ctx, &path, &text, &man)?;
    if sol.converged {
        let _ = writeln!(ctx.out, "converged in {} iterations", sol.iterations);
        Ok(0)
    } else {
        ctx.warn(&format!(
            "sweep did not converge in {} iterations (last change {:e})",
            sol.iterations, sol.final_change
        ));
        Ok(2)
    }
}
