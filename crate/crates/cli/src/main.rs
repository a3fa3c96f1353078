use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use myelin::{CliError, Context, RunConfig};

/// Homogenized myelinated-axon experiments.
#[derive(Parser)]
#[command(name = "myelin", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// INI run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [run] out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; 0 picks automatically.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Seed for the randomized checks (overrides [run] seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Cell problem and effective conductivity.
    Cell,
    /// Node leak eigenvalue sweep against the closed form.
    Lambda,
    /// Homogenized cable simulation.
    Cable,
    /// Microscale runs compared with the cable.
    Verify,
    /// Write the cell mesh.
    MeshDump,
}

fn run(args: Args) -> Result<(), CliError> {
    let path = args.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let ctx = Context::new(cfg, args.out, args.jobs)?;
    match args.cmd {
        Cmd::Cell => {
            let r = myelin::cmd_cell(&ctx)?;
            let last = r.rows.last().unwrap();
            println!("a_eff = {:.10} (h = {}), without sheath {:.10}", last.a_eff, last.h, r.a_eff_without_sheath);
        }
        Cmd::Lambda => {
            let r = myelin::cmd_lambda(&ctx)?;
            println!("lambda_bar = {:.10}", r.lambda_bar);
            for x in &r.richardson {
                println!("delta = {}: extrapolated lambda/delta = {:.6} ({:+.2}%)", x.delta, x.ratio, 100.0 * x.relative_deviation);
            }
        }
        Cmd::Cable => {
            let r = myelin::cmd_cable(&ctx)?;
            if let Some(e) = r.max_error {
                println!("max error against the separable solution: {e:.3e}");
            }
            match r.front_speed {
                Some(c) => println!("front speed {c:.6}, peak {:.6}", r.peak_amplitude),
                None => println!("no front detected, peak {:.6}", r.peak_amplitude),
            }
        }
        Cmd::Verify => {
            let r = myelin::cmd_verify(&ctx)?;
            for x in &r.rows {
                println!("epsilon = {}: sup error {:.4e}, without lambda_bar {:.4e}", x.epsilon, x.sup_error, x.sup_error_without_lambda);
            }
            println!("monotone: {}, ablation larger: {}", r.monotone, r.ablation_larger);
        }
        Cmd::MeshDump => {
            let r = myelin::cmd_mesh_dump(&ctx)?;
            println!("{} vertices, {} triangles, min angle {:.1} deg", r.quality.n_vertices, r.quality.n_triangles, r.quality.min_angle_deg);
        }
    }
    println!("outputs in {}", ctx.out_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MYELIN_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
