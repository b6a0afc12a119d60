//! `stark-lattice <mode> --config cfg.json [overrides]`
//!
//! Exit status: 0 on success, 2 for configuration or output errors, 3 for
//! numerical failures (including scans with more than 20% unconverged rows).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};
use stark_lattice_core::output::{emit, metadata, BesselTable, CollapseTable, CsvTable};
use stark_lattice_core::spectrum::central_band;
use stark_lattice_core::{
    bessel_j, build_lattice, collapse_predict, dispersion_analytic, find_collapses, initial_packet, kappa_grid,
    propagate, run_scan_width, width_analytic, Mode, RunConfig,
};

const MAX_UNCONVERGED_FRACTION: f64 = 0.2;
const THREADS_VAR: &str = "STARK_LATTICE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stark-lattice", version, about = "Wannier-Stark spectra of a tilted two-sublattice lattice")]
struct Cli {
    /// spectrum | scan-width | collapse | analytic | propagate | bessel
    mode: Mode,
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "F", allow_negative_numbers = true)]
    force: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    r: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    q: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    t1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t3: Option<f64>,
    #[arg(long)]
    kappa_points: Option<usize>,
    #[arg(long)]
    max_order: Option<u32>,
    /// CSV destination; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn numeric_err(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

impl Cli {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(config_err)?,
            None => RunConfig::new(self.mode),
        };
        cfg.mode = self.mode;
        if let Some(f) = self.force {
            cfg.force = Some(f);
        }
        if let Some(r) = self.r {
            cfg.tilt.r = r;
        }
        if let Some(q) = self.q {
            cfg.tilt.q = q;
        }
        if let Some(t) = self.t1 {
            cfg.lattice.t1 = t;
        }
        if let Some(t) = self.t2 {
            cfg.lattice.t2 = t;
        }
        if let Some(t) = self.t3 {
            cfg.lattice.t3 = t;
        }
        if let Some(n) = self.kappa_points {
            cfg.kappa_points = n;
        }
        if let Some(n) = self.max_order {
            cfg.max_order = n;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

fn default_output(mode: Mode) -> PathBuf {
    let name = serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    PathBuf::from(format!("{name}.csv"))
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>, Failure> {
    let Ok(text) = std::env::var(THREADS_VAR) else {
        return Ok(None);
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("{THREADS_VAR} must be a positive integer, got '{text}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map(Some).map_err(config_err)
}

/// Result table plus the JSON summary stored in the metadata.
type Outcome = (Box<dyn CsvTable + Send>, Value);

fn run_mode(cfg: &RunConfig) -> Result<Outcome, Failure> {
    match cfg.mode {
        Mode::Spectrum => {
            let tilt = cfg.tilt_at(cfg.single_force().map_err(config_err)?).map_err(config_err)?;
            let curve = central_band(&cfg.lattice, &tilt, cfg.kappa_points).map_err(numeric_err)?;
            let summary = json!({ "width": curve.width, "mean_energy": curve.mean_energy() });
            Ok((Box::new(curve), summary))
        }
        Mode::Analytic => {
            let tilt = cfg.tilt_at(cfg.single_force().map_err(config_err)?).map_err(config_err)?;
            let grid = kappa_grid(&tilt, cfg.kappa_points).map_err(config_err)?;
            let disp = dispersion_analytic(&cfg.lattice, &tilt, &grid, cfg.max_order).map_err(numeric_err)?;
            let summary = json!({
                "width": width_analytic(&disp),
                "order_used": disp.order_used,
                "branch_kind": format!("{:?}", disp.branch_kind),
            });
            Ok((Box::new(disp), summary))
        }
        Mode::ScanWidth => {
            let scan = run_scan_width(cfg).map_err(numeric_err)?;
            let fraction = scan.unconverged_fraction();
            if fraction > MAX_UNCONVERGED_FRACTION {
                return Err(Failure::Numerical(format!(
                    "{:.0}% of scan rows did not converge in the chain truncation",
                    100.0 * fraction
                )));
            }
            let summary = json!({ "rows": scan.rows.len(), "unconverged_fraction": fraction });
            Ok((Box::new(scan), summary))
        }
        Mode::Collapse => {
            let scan = run_scan_width(cfg).map_err(numeric_err)?;
            let fraction = scan.unconverged_fraction();
            if fraction > MAX_UNCONVERGED_FRACTION {
                return Err(Failure::Numerical(format!(
                    "{:.0}% of scan rows did not converge in the chain truncation",
                    100.0 * fraction
                )));
            }
            let found = find_collapses(cfg, &scan, cfg.collapse_threshold).map_err(numeric_err)?;
            let f_min = cfg.scan.map(|s| s.f_min).unwrap_or(1.0);
            let tilt = cfg.tilt_at(f_min).map_err(config_err)?;
            let k_max = found.len().max(1) as u32;
            // Diagonal and anti-diagonal directions have no series prediction.
            let predicted = collapse_predict(&cfg.lattice, &tilt, k_max).unwrap_or_default();
            let summary = json!({ "collapses": found.len(), "unconverged_fraction": fraction });
            Ok((Box::new(CollapseTable { found, predicted }), summary))
        }
        Mode::Propagate => {
            let force = cfg.single_force().map_err(config_err)?;
            let tilt = cfg.tilt_at(force).map_err(config_err)?;
            let dyn_cfg = cfg.dynamics.ok_or_else(|| Failure::Config("propagate needs 'dynamics'".into()))?;
            let (n1, n2) = dyn_cfg.extent;
            let lattice = build_lattice(&cfg.lattice, &tilt, n1, n2).map_err(config_err)?;
            let mut state = initial_packet(&lattice, dyn_cfg.packet).map_err(config_err)?;
            let traj = propagate(&mut state, &lattice, dyn_cfg.t_final, dyn_cfg.dt).map_err(numeric_err)?;
            let summary = json!({
                "ballistic_velocity": traj.ballistic_velocity,
                "velocity_r2": traj.velocity_r2,
                "velocity_reliable": traj.velocity_reliable,
                "norm_drift": traj.norm_drift,
                "energy_drift": traj.energy_drift,
            });
            Ok((Box::new(traj), summary))
        }
        Mode::Bessel => {
            let b = cfg.bessel.as_ref().ok_or_else(|| Failure::Config("bessel needs 'bessel'".into()))?;
            let step = if b.n_points > 1 { (b.z_max - b.z_min) / (b.n_points - 1) as f64 } else { 0.0 };
            let mut rows = Vec::with_capacity(b.orders.len() * b.n_points);
            for &order in &b.orders {
                for i in 0..b.n_points {
                    let z = b.z_min + step * i as f64;
                    rows.push((order, z, bessel_j(order, z).map_err(config_err)?));
                }
            }
            let summary = json!({ "rows": rows.len() });
            Ok((Box::new(BesselTable { rows }), summary))
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, Failure> {
    let cfg = cli.resolve()?;
    let pool = thread_pool()?;
    let start = Instant::now();
    let (table, summary) = match &pool {
        Some(pool) => pool.install(|| run_mode(&cfg))?,
        None => run_mode(&cfg)?,
    };
    let path = cfg.output.clone().unwrap_or_else(|| default_output(cfg.mode));
    write(table.as_ref(), &path, &cfg, start.elapsed().as_secs_f64(), summary)?;
    Ok(path)
}

fn write(table: &dyn CsvTable, path: &Path, cfg: &RunConfig, wall: f64, summary: Value) -> Result<(), Failure> {
    emit(table, path, &metadata(cfg, wall, summary)).map_err(config_err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let msg = match &failure {
                Failure::Config(m) => format!("configuration error: {m}"),
                Failure::Numerical(m) => format!("numerical failure: {m}"),
            };
            eprintln!("stark-lattice: {msg}");
            ExitCode::from(failure.code())
        }
    }
}
