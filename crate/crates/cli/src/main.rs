//! `hwctrl`: validate, plan, analyse, simulate and solve a network described
//! by one JSON model file.

mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use hwctrl::config::ModelSpec;
use hwctrl::ctmc::{build_nth_system, simulate_ctmc, CtmcConfig};
use hwctrl::elimination::{eliminate, extract_drift_form, solve_gmap, ControlPoint};
use hwctrl::hjb::{
    solve_constrained, solve_discounted, solve_ergodic, solve_fair, DualOptions, Grid, GridSpec, HjbSolution, Objective,
};
use hwctrl::network::{leaves, Leaves, Network};
use hwctrl::plan::{simplex_solve, solve_static_plan, StaticPlan};
use hwctrl::sim::{estimate_ergodic_cost, simulate_path, ErgodicEstimate, MarkovControl, SimConfig};
use hwctrl::stability::{
    scan_cones, stability_certificate, stabilizing_control, verify_geometric_drift, DriftReport, HypothesisReport,
    StabilityCertificate, DEFAULT_RADII, DEFAULT_SAMPLES,
};
use serde::{Deserialize, Serialize};

use error::CliError;
use output::{input_hash, Manifest, OutDir};

const PATH_ROWS: u64 = 10_000;
const CONE_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Validate,
    Plan,
    Drift,
    Gmap,
    Stability,
    Simulate,
    Ctmc,
    Solve,
}

#[derive(Debug, Parser)]
#[command(name = "hwctrl", version, about = "Diffusion control of many-server multiclass networks")]
struct Args {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON model file.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "HWCTRL_THREADS")]
    threads: Option<usize>,
    /// Half-width of the HJB grid box.
    #[arg(long)]
    radius: Option<f64>,
    /// HJB grid spacing.
    #[arg(long)]
    mesh: Option<f64>,
    /// `solve`: discount rate (one value) for the discounted problem.
    /// `gmap`: class totals `alpha_1,..,alpha_I` at which to evaluate Psi.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alpha: Vec<f64>,
    /// `gmap`: pool totals `beta_1,..,beta_J`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta: Vec<f64>,
    /// Impose the idleness budgets `constraints.delta` from the model file.
    #[arg(long, conflicts_with = "fair")]
    constrained: bool,
    /// Impose the idleness shares `constraints.theta` from the model file.
    #[arg(long)]
    fair: bool,
    /// Scale of the pre-limit system for `ctmc`.
    #[arg(long, default_value_t = 100.0)]
    n: f64,
    #[arg(long, default_value_t = 10_000.0)]
    horizon: f64,
    /// Euler step for `simulate`.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Control for `simulate` and `ctmc`: an `hjb_solution.json`; defaults to the stabilizing control.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Parameter override `key=value`, e.g. `lambda.1=2.5`, `mu.1.2=3`, `zeta.2=0`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValidateOutput {
    classes: usize,
    pools: usize,
    /// 1-based `(class, pool)` pairs.
    activities: Vec<(usize, usize)>,
    leaves: Leaves,
}

#[derive(Debug, Serialize, Deserialize)]
struct Labels {
    rows: Vec<String>,
    cols: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanOutput {
    plan: StaticPlan,
    /// Row and column labels of the matrices in `plan`.
    labels: Labels,
    lp_rho_star: f64,
    /// Largest gap between the tree solve and the LP allocation.
    lp_max_diff: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StabilityOutput {
    certificate: StabilityCertificate,
    drift_check: DriftReport,
    cone_two_sided: Result<HypothesisReport, String>,
    cone_one_sided: Result<HypothesisReport, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateOutput {
    control: String,
    config: SimConfig,
    estimate: ErgodicEstimate,
}

struct Loaded {
    bytes: Vec<u8>,
    model: ModelSpec,
    net: Network,
}

fn load(args: &Args) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(&args.spec).map_err(|e| CliError::io(&args.spec, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut model = ModelSpec::from_json(&text)?;
    for o in &args.overrides {
        model.apply_override(o)?;
    }
    let net = model.network()?;
    Ok(Loaded { bytes, model, net })
}

fn grid_spec(args: &Args, model: &ModelSpec, fallback: ControlPoint) -> GridSpec {
    let defaults = model.grid.map(|g| (g.radius, g.h)).unwrap_or((8.0, 0.25));
    GridSpec { radius: args.radius.unwrap_or(defaults.0), h: args.mesh.unwrap_or(defaults.1), fallback }
}

fn control(args: &Args, net: &Network) -> Result<(MarkovControl, String), CliError> {
    match &args.policy {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let sol: HjbSolution = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: not an HJB solution: {e}", path.display())))?;
            if sol.fallback.uc.len() != net.num_classes() || sol.fallback.us.len() != net.num_pools() {
                return Err(CliError::Usage("policy does not match the network dimensions".into()));
            }
            Ok((MarkovControl::Grid(Arc::new(sol.grid_policy())), path.display().to_string()))
        }
        None => Ok((MarkovControl::Constant(stabilizing_control(net)?), "stabilizing".into())),
    }
}

fn value_rows<'a>(grid: &'a Grid, v: &'a [f64], policy: &'a [ControlPoint]) -> impl Iterator<Item = Vec<f64>> + 'a {
    (0..grid.len()).map(move |c| {
        let mut row = grid.point(c);
        row.push(v[c]);
        row.extend_from_slice(&policy[c].uc);
        row.extend_from_slice(&policy[c].us);
        row
    })
}

fn value_header(ni: usize, nj: usize) -> Vec<String> {
    (1..=ni)
        .map(|i| format!("x{i}"))
        .chain(std::iter::once("V".to_string()))
        .chain((1..=ni).map(|i| format!("uc{i}")))
        .chain((1..=nj).map(|j| format!("us{j}")))
        .collect()
}

fn run(args: &Args, loaded: &Loaded, out: &mut OutDir) -> Result<serde_json::Value, CliError> {
    let Loaded { model, net, .. } = loaded;
    let (ni, nj) = (net.num_classes(), net.num_pools());
    if args.command == Command::Validate {
        let activities = net.edges().iter().map(|e| (e.class + 1, e.pool + 1)).collect();
        out.json("validate.json", &ValidateOutput { classes: ni, pools: nj, activities, leaves: leaves(net) })?;
        return Ok(serde_json::json!({}));
    }
    let plan = solve_static_plan(net)?;
    match args.command {
        Command::Validate => unreachable!(),
        Command::Plan => {
            let (lp, lp_rho_star) = simplex_solve(net)?;
            let lp_max_diff = plan
                .xi_star
                .iter()
                .zip(&lp)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            let labels = Labels {
                rows: (1..=ni).map(|i| format!("class {i}")).collect(),
                cols: (1..=nj).map(|j| format!("pool {j}")).collect(),
            };
            out.json("plan.json", &PlanOutput { plan, labels, lp_rho_star, lp_max_diff })?;
            Ok(serde_json::json!({}))
        }
        Command::Drift => {
            out.json("drift_form.json", &extract_drift_form(net, &plan)?)?;
            Ok(serde_json::json!({}))
        }
        Command::Gmap => {
            out.json("gmap.json", &eliminate(net))?;
            if args.alpha.is_empty() && args.beta.is_empty() {
                return Ok(serde_json::json!({}));
            }
            if args.alpha.len() != ni || args.beta.len() != nj {
                return Err(CliError::Usage(format!("gmap needs --alpha with {ni} values and --beta with {nj}")));
            }
            let psi = solve_gmap(net, &args.alpha, &args.beta)?;
            let header = vec!["class".to_string(), "pool".to_string(), "psi".to_string()];
            let rows = net.edges().iter().map(|e| vec![(e.class + 1) as f64, (e.pool + 1) as f64, psi[e.class][e.pool]]);
            out.csv("psi.csv", &header, rows)?;
            Ok(serde_json::json!({ "alpha": args.alpha, "beta": args.beta }))
        }
        Command::Stability => {
            let m = model.cost_or_default().m;
            let form = extract_drift_form(net, &plan)?;
            let certificate = stability_certificate(net, &plan, m)?;
            let drift_check = verify_geometric_drift(&form, &certificate, &DEFAULT_RADII, DEFAULT_SAMPLES)?;
            let cone = |two| scan_cones(&form, two, m, CONE_SAMPLES).map_err(|e| e.to_string());
            let header: Vec<String> = (1..=ni).map(|i| format!("x{i}")).collect();
            out.csv("stability_violations.csv", &header, drift_check.violations.clone())?;
            out.json(
                "stability.json",
                &StabilityOutput {
                    certificate,
                    drift_check,
                    cone_two_sided: cone(true),
                    cone_one_sided: cone(false),
                },
            )?;
            Ok(serde_json::json!({ "m": m }))
        }
        Command::Simulate => {
            let form = extract_drift_form(net, &plan)?;
            let spec = model.cost_or_default();
            let (ctrl, name) = control(args, net)?;
            let config = SimConfig::new(args.dt, args.horizon, args.seed, vec![0.0; ni]);
            let estimate = estimate_ergodic_cost(&form, &ctrl, &spec, model.constraints.as_ref(), &config)?;
            let stride = (config.steps() / PATH_ROWS).max(1);
            let path = simulate_path(&form, &ctrl, &spec, &config, stride)?;
            let header: Vec<String> = std::iter::once("t".to_string())
                .chain((1..=ni).map(|i| format!("x{i}")))
                .chain(std::iter::once("cost".to_string()))
                .collect();
            out.json("simulate.json", &SimulateOutput { control: name, config, estimate })?;
            out.csv("path.csv", &header, path)?;
            Ok(serde_json::json!({ "dt": args.dt, "horizon": args.horizon, "path_stride": stride }))
        }
        Command::Ctmc => {
            let spec = model.cost_or_default();
            let (ctrl, _) = control(args, net)?;
            let sys = build_nth_system(net, args.n)?;
            let est = simulate_ctmc(net, &plan, &sys, &ctrl, &spec, &CtmcConfig::new(args.horizon, args.seed))?;
            out.json("ctmc.json", &est)?;
            Ok(serde_json::json!({ "n": args.n, "horizon": args.horizon }))
        }
        Command::Solve => {
            let form = extract_drift_form(net, &plan)?;
            let spec = model.cost_or_default();
            let g = grid_spec(args, model, stabilizing_control(net)?);
            let grid = Grid::new(ni, g.radius, g.h)?;
            let settings = serde_json::json!({ "radius": g.radius, "mesh": g.h });
            if args.alpha.len() > 1 {
                return Err(CliError::Usage("solve takes a single --alpha".into()));
            }
            if let Some(&alpha) = args.alpha.first() {
                let sol = solve_discounted(&form, &Objective::Cost(spec), &g, alpha)?;
                out.json("hjb_discounted.json", &sol)?;
                out.csv("V.csv", &value_header(ni, nj), value_rows(&grid, &sol.v, &sol.policy))?;
                return Ok(serde_json::json!({ "radius": g.radius, "mesh": g.h, "alpha": alpha }));
            }
            let sol = if args.constrained || args.fair {
                let cons = model
                    .constraints
                    .clone()
                    .ok_or_else(|| CliError::Usage("the model file has no constraints block".into()))?;
                // idleness enters through the constraints, not the running cost
                let spec = spec.without_idleness();
                if args.fair {
                    let theta = cons.theta.ok_or_else(|| CliError::Usage("constraints.theta is missing".into()))?;
                    solve_fair(&form, &spec, &theta, &g, &DualOptions::default())?
                } else {
                    solve_constrained(&form, &spec, &cons, &g, &DualOptions::default())?
                }
            } else {
                solve_ergodic(&form, &Objective::Cost(spec), &g)?
            };
            out.json("hjb_solution.json", &sol)?;
            out.csv("V.csv", &value_header(ni, nj), value_rows(&grid, &sol.v, &sol.policy))?;
            Ok(settings)
        }
    }
}

fn command_name(c: Command) -> String {
    c.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn main() -> ExitCode {
    let args = Args::parse();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let result = (|| {
        if let Some(n) = args.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let loaded = load(&args)?;
        let mut out = OutDir::create(&args.out)?;
        let settings = run(&args, &loaded, &mut out)?;
        let manifest = Manifest {
            tool: "hwctrl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command_name(args.command),
            spec: args.spec.display().to_string(),
            input_sha256: input_hash(&loaded.bytes, &args.overrides),
            overrides: args.overrides.clone(),
            seed: args.seed,
            threads: rayon::current_num_threads(),
            settings,
            outputs: out.written().to_vec(),
            started_unix: started,
            wall_time_s: clock.elapsed().as_secs_f64(),
        };
        out.json("manifest.json", &manifest)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
