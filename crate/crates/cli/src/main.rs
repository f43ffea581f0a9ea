//! Batch front-end for the synthesis library: loads a plant, runs the
//! requested computation, and writes deterministic CSV/JSON artifacts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use h2hinf::fixed_point::{
    contraction_ratio, gamma_inf_estimate, kkt_residual, run, FixedPointConfig, FixedPointOutcome,
};
use h2hinf::rational::{min_epsilon, rational_controller, RationalApproxConfig, RationalSpectrum};
use h2hinf::synthesis::{StateSpaceController, SynthesisContext};
use h2hinf::util::fmt_sig;
use h2hinf::{h2_norm, hinf_norm, FrequencyGrid, GridSpectrum, StateSpaceSystem};

#[derive(Parser)]
#[command(
    name = "h2hinf",
    about = "Quadratic-cost controller synthesis under a peak-gain budget",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Table of closed-loop norms: peak-gain proxy row, one mixed row per
    /// budget, low-order rows per requested order, and the unconstrained row.
    Norms(RunArgs),
    /// Per-frequency squared spectral norm of each synthesized closed loop.
    Spectrum(RunArgs),
    /// One-sweep contraction ratios of the weight iteration over seeded
    /// random spectrum pairs.
    Contraction(RunArgs),
    /// Rational fits of the converged disturbance weight at each requested
    /// order, with the resulting controller data.
    Approx(RunArgs),
    /// Full synthesis per budget: convergence data, optimality residuals,
    /// controller samples, and low-order realizations.
    Synth(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Plant description: a JSON file path, or a builtin name
    /// ("AC17", "scalar-demo").
    #[arg(long)]
    system: String,
    /// Peak-gain budget; repeat the flag for several budgets.
    #[arg(long = "gamma")]
    gammas: Vec<f64>,
    /// Frequency-grid size (power of two).
    #[arg(long, default_value_t = 1024)]
    grid: usize,
    /// Order of a rational weight fit; repeat for several orders.
    #[arg(long = "ra-order")]
    ra_orders: Vec<usize>,
    /// Base seed for randomized experiments.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write per-sweep convergence traces.
    #[arg(long)]
    trace: bool,
}

struct CliError {
    kind: String,
    message: String,
}

impl CliError {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<h2hinf::Error> for CliError {
    fn from(e: h2hinf::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("json", e.to_string())
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Norms(args) => cmd_norms(&args),
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Contraction(args) => cmd_contraction(&args),
        Command::Approx(args) => cmd_approx(&args),
        Command::Synth(args) => cmd_synth(&args),
    };
    if let Err(e) = result {
        let record = serde_json::json!({ "error": { "kind": e.kind, "message": e.message } });
        eprintln!("{record}");
        std::process::exit(1);
    }
}

fn load_system(name_or_path: &str) -> Result<StateSpaceSystem, CliError> {
    match name_or_path {
        "AC17" | "ac17" => {
            eprintln!(
                "warning: builtin AC17 has no canonical disturbance column; \
                 using Bw = Bu as a stand-in, so norms are not comparable to \
                 published benchmark tables"
            );
            Ok(StateSpaceSystem::ac17())
        }
        "scalar-demo" => Ok(StateSpaceSystem::scalar_demo()),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new("io", format!("cannot read plant file {path}: {e}")))?;
            Ok(StateSpaceSystem::from_json_str(&text)?)
        }
    }
}

struct Setup {
    ctx: SynthesisContext,
    gammas: Vec<f64>,
    ra_orders: Vec<usize>,
}

fn setup(args: &RunArgs) -> Result<Setup, CliError> {
    let sys = load_system(&args.system)?;
    let grid = FrequencyGrid::new(args.grid)?;
    let ctx = SynthesisContext::build(sys, grid)?;
    for g in &args.gammas {
        if g.is_nan() || *g <= 0.0 {
            return Err(CliError::new(
                "invalid_argument",
                format!("budgets must be positive, got {g}"),
            ));
        }
    }
    let mut gammas = args.gammas.clone();
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gammas.dedup();
    let mut ra_orders = args.ra_orders.clone();
    ra_orders.sort_unstable();
    ra_orders.dedup();
    std::fs::create_dir_all(&args.out)?;
    Ok(Setup {
        ctx,
        gammas,
        ra_orders,
    })
}

/// Write a file atomically (all-or-nothing) inside its target directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::new("io", format!("invalid output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        "{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Apply `f` to every item on its own thread, preserving input order.
fn map_parallel<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let f = &f;
    let mut slots: Vec<Option<R>> = items.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, item) in slots.iter_mut().zip(items) {
            scope.spawn(move || {
                *slot = Some(f(item));
            });
        }
    });
    slots.into_iter().map(|r| r.unwrap()).collect()
}

struct MixedRun {
    gamma: f64,
    outcome: FixedPointOutcome,
    fits: Vec<(usize, RationalSpectrum, GridSpectrum, StateSpaceController)>,
}

/// Run the synthesis for each budget (and fit each requested order) on its
/// own thread, propagating the first error in budget order.
fn mixed_runs(
    ctx: &SynthesisContext,
    gammas: &[f64],
    ra_orders: &[usize],
) -> Result<Vec<MixedRun>, CliError> {
    let results = map_parallel(gammas.to_vec(), |gamma| -> Result<MixedRun, CliError> {
        let outcome = run(ctx, &FixedPointConfig::new(gamma))?;
        let mut fits = Vec::new();
        for &m in ra_orders {
            let fit = min_epsilon(&outcome.state.weight, m, &RationalApproxConfig::default())?;
            let (k_grid, ctrl) = rational_controller(ctx, &fit)?;
            fits.push((m, fit, k_grid, ctrl));
        }
        Ok(MixedRun {
            gamma,
            outcome,
            fits,
        })
    });
    results.into_iter().collect()
}

fn cmd_norms(args: &RunArgs) -> Result<(), CliError> {
    let Setup {
        ctx,
        gammas,
        ra_orders,
    } = setup(args)?;

    let gamma_two = ctx.gamma_two()?;
    let gamma_inf = gamma_inf_estimate(&ctx)?;
    let runs = mixed_runs(&ctx, &gammas, &ra_orders)?;

    // (label, budget, hs norm, peak gain)
    let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
    let proxy = run(&ctx, &FixedPointConfig::new(gamma_inf))?;
    rows.push((
        "hinf_proxy".into(),
        gamma_inf,
        h2_norm(&proxy.closed_loop),
        hinf_norm(&proxy.closed_loop),
    ));
    for r in &runs {
        rows.push((
            "mixed".into(),
            r.gamma,
            h2_norm(&r.outcome.closed_loop),
            hinf_norm(&r.outcome.closed_loop),
        ));
        for (m, _, k_grid, _) in &r.fits {
            let t = ctx.closed_loop_with(k_grid)?;
            rows.push((format!("ra({m})"), r.gamma, h2_norm(&t), hinf_norm(&t)));
        }
    }
    let (k2_grid, _) = ctx.h2_optimal()?;
    let t2 = ctx.closed_loop_with(&k2_grid)?;
    rows.push(("h2".into(), gamma_two, h2_norm(&t2), hinf_norm(&t2)));

    let mut csv = String::from("row,gamma,hs_norm,peak_gain\n");
    for (label, gamma, hs, peak) in &rows {
        let _ = writeln!(
            csv,
            "{label},{},{},{}",
            fmt_sig(*gamma),
            fmt_sig(*hs),
            fmt_sig(*peak)
        );
    }
    write_atomic(&args.out.join("norms.csv"), csv.as_bytes())?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<12} {:>12} {:>12} {:>12}",
        "row", "gamma", "hs_norm", "peak_gain"
    );
    for (label, gamma, hs, peak) in &rows {
        let _ = writeln!(
            text,
            "{:<12} {:>12} {:>12} {:>12}",
            label,
            fmt_sig(*gamma),
            fmt_sig(*hs),
            fmt_sig(*peak)
        );
    }
    write_atomic(&args.out.join("norms.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn cmd_spectrum(args: &RunArgs) -> Result<(), CliError> {
    let Setup {
        ctx,
        gammas,
        ra_orders,
    } = setup(args)?;

    let gamma_inf = gamma_inf_estimate(&ctx)?;
    let runs = mixed_runs(&ctx, &gammas, &ra_orders)?;

    let power =
        |t: &GridSpectrum| -> Vec<f64> { (0..t.len()).map(|k| t.sigma_max(k).powi(2)).collect() };

    // (column name, per-node squared spectral norm)
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    let (k2_grid, _) = ctx.h2_optimal()?;
    curves.push(("h2".into(), power(&ctx.closed_loop_with(&k2_grid)?)));
    let proxy = run(&ctx, &FixedPointConfig::new(gamma_inf))?;
    curves.push(("hinf_proxy".into(), power(&proxy.closed_loop)));
    for r in &runs {
        let label = fmt_sig(r.gamma);
        curves.push((format!("mixed_{label}"), power(&r.outcome.closed_loop)));
        for (m, _, k_grid, _) in &r.fits {
            curves.push((
                format!("ra{m}_{label}"),
                power(&ctx.closed_loop_with(k_grid)?),
            ));
        }
    }

    let grid = ctx.grid;
    let mut csv = String::from("omega");
    for (name, _) in &curves {
        let _ = write!(csv, ",{name}");
    }
    csv.push('\n');
    for k in 0..grid.len() {
        let _ = write!(csv, "{}", fmt_sig(grid.omega(k)));
        for (_, values) in &curves {
            let _ = write!(csv, ",{}", fmt_sig(values[k]));
        }
        csv.push('\n');
    }
    write_atomic(&args.out.join("spectrum.csv"), csv.as_bytes())?;
    Ok(())
}

fn cmd_contraction(args: &RunArgs) -> Result<(), CliError> {
    let Setup { ctx, gammas, .. } = setup(args)?;

    let sweep_gammas = if gammas.is_empty() {
        let gamma_two = ctx.gamma_two()?;
        let gamma_inf = gamma_inf_estimate(&ctx)?;
        [0.4, 0.55, 0.7, 0.85, 0.95]
            .iter()
            .map(|s| gamma_inf + s * (gamma_two - gamma_inf))
            .collect()
    } else {
        gammas
    };

    let seeds: Vec<u64> = (args.seed..args.seed + 9).collect();
    let mut csv = String::from("gamma,seed,ratio\n");
    for &gamma in &sweep_gammas {
        let ratios = map_parallel(seeds.clone(), |seed| contraction_ratio(&ctx, gamma, seed));
        for (seed, ratio) in seeds.iter().zip(ratios) {
            let _ = writeln!(csv, "{},{seed},{}", fmt_sig(gamma), fmt_sig(ratio?));
        }
    }
    write_atomic(&args.out.join("contraction.csv"), csv.as_bytes())?;
    Ok(())
}

fn cmd_approx(args: &RunArgs) -> Result<(), CliError> {
    let Setup {
        ctx,
        gammas,
        ra_orders,
    } = setup(args)?;
    if gammas.is_empty() || ra_orders.is_empty() {
        return Err(CliError::new(
            "invalid_argument",
            "approx needs at least one --gamma and one --ra-order",
        ));
    }

    let runs = mixed_runs(&ctx, &gammas, &ra_orders)?;
    let mut records = Vec::new();
    for r in &runs {
        let mut fits = Vec::new();
        for (m, fit, k_grid, ctrl) in &r.fits {
            let t = ctx.closed_loop_with(k_grid)?;
            fits.push(serde_json::json!({
                "order": m,
                "target_eps": fit.target_eps,
                "achieved_eps": fit.achieved_eps,
                "numerator": fit.numerator.coeffs(),
                "denominator": fit.denominator.coeffs(),
                "controller": ctrl.to_json(),
                "hs_norm": h2_norm(&t),
                "peak_gain": hinf_norm(&t),
            }));
        }
        records.push(serde_json::json!({
            "gamma": r.gamma,
            "weight_sweeps": r.outcome.state.iterations,
            "fits": fits,
        }));
    }
    let body = serde_json::to_string_pretty(&records)?;
    write_atomic(&args.out.join("approx.json"), body.as_bytes())?;
    Ok(())
}

fn cmd_synth(args: &RunArgs) -> Result<(), CliError> {
    let Setup {
        ctx,
        gammas,
        ra_orders,
    } = setup(args)?;
    if gammas.is_empty() {
        return Err(CliError::new(
            "invalid_argument",
            "synth needs at least one --gamma",
        ));
    }

    let runs = mixed_runs(&ctx, &gammas, &ra_orders)?;
    for r in &runs {
        let label = fmt_sig(r.gamma);
        let report = kkt_residual(&ctx, &r.outcome, r.gamma)?;
        let mut realizations = Vec::new();
        for (m, fit, k_grid, ctrl) in &r.fits {
            let t = ctx.closed_loop_with(k_grid)?;
            realizations.push(serde_json::json!({
                "requested_order": m,
                "achieved_eps": fit.achieved_eps,
                "realization": ctrl.to_json(),
                "hs_norm": h2_norm(&t),
                "peak_gain": hinf_norm(&t),
            }));
        }
        let summary = serde_json::json!({
            "gamma": r.gamma,
            "sweeps": r.outcome.state.iterations,
            "residual": r.outcome.state.residual,
            "hs_norm": h2_norm(&r.outcome.closed_loop),
            "peak_gain": hinf_norm(&r.outcome.closed_loop),
            "optimality": report,
            "dual_vector": r.outcome.state.dual.iter().copied().collect::<Vec<f64>>(),
            "low_order": realizations,
        });
        let body = serde_json::to_string_pretty(&summary)?;
        write_atomic(
            &args.out.join(format!("synth_g{label}.json")),
            body.as_bytes(),
        )?;

        let mut samples = Vec::new();
        r.outcome.controller.to_csv(&mut samples)?;
        write_atomic(&args.out.join(format!("controller_g{label}.csv")), &samples)?;

        if args.trace {
            let mut lines = String::new();
            for record in &r.outcome.trace {
                let _ = writeln!(lines, "{}", serde_json::to_string(record)?);
            }
            write_atomic(
                &args.out.join(format!("trace_g{label}.jsonl")),
                lines.as_bytes(),
            )?;
        }
    }
    Ok(())
}
