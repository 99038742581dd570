//! Command-line front end: config ingestion, experiment orchestration, and
//! result emission.
//!
//! Exit codes: 0 on success, 1 on domain errors (degeneracies, singular
//! maps, polytope violations), 2 on config or IO errors.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use natocc::config::{ConfigError, RunConfig};
use natocc::dynamics::{
    compare_trajectories, evolve_exact, evolve_reduced, DynamicsError, ReducedState, SectorSystem,
    Trajectory,
};
use natocc::fock::enumerate_determinants;
use natocc::gpc::{
    constraints_from_sector_map, perturbation_response_batch, pinning_report, PinningTolerances,
    ResponseOptions, StateContext,
};
use natocc::linalg::{eigh, CMatrix};
use natocc::model::build_many_body_matrix;
use natocc::output;
use natocc::rdm::NaturalFrame;

#[derive(Parser)]
#[command(
    name = "natocc",
    version,
    about = "Natural-occupation-number dynamics for small fermionic lattice models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the sector amplitude map, its exact inverse, and the occupation
    /// functionals as JSON (and optionally as an aligned text table).
    SectorMap {
        #[arg(long)]
        config: String,
        /// Output file; defaults to <outdir>/<prefix>sector_map.json.
        #[arg(long)]
        output: Option<String>,
        /// Also print the aligned text rendering to stdout.
        #[arg(long)]
        text: bool,
    },
    /// Diagonalize the sector Hamiltonian and report the ground state.
    GroundState {
        #[arg(long)]
        config: String,
        #[arg(long)]
        output: Option<String>,
    },
    /// Pinning analysis of the sector ground state.
    Pinning {
        #[arg(long)]
        config: String,
        #[arg(long)]
        output: Option<String>,
    },
    /// Perturbation-response trials with random Hermitian perturbations.
    PerturbResponse {
        #[arg(long)]
        config: String,
        #[arg(long)]
        output: Option<String>,
    },
    /// Exact quench propagation; writes CSV and JSON trajectories.
    EvolveExact {
        #[arg(long)]
        config: String,
        /// Path prefix for <prefix>.csv / <prefix>.json.
        #[arg(long)]
        output_prefix: Option<String>,
    },
    /// Reduced quench propagation; writes CSV and JSON trajectories.
    EvolveReduced {
        #[arg(long)]
        config: String,
        #[arg(long)]
        output_prefix: Option<String>,
    },
    /// Deviation report between two trajectory CSV files.
    Compare {
        #[arg(long)]
        exact: String,
        #[arg(long)]
        reduced: String,
        #[arg(long)]
        output: Option<String>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn domain(module: &str, message: impl std::fmt::Display, hint: &str) -> Failure {
        Failure {
            code: 1,
            message: format!("error [{module}]: {message}\nhint: {hint}"),
        }
    }

    fn config(message: impl std::fmt::Display) -> Failure {
        Failure {
            code: 2,
            message: format!("error [config]: {message}"),
        }
    }

    fn io(message: impl std::fmt::Display) -> Failure {
        Failure {
            code: 2,
            message: format!("error [io]: {message}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        match e {
            ConfigError::Model(m) => m.into(),
            other => Failure::config(other),
        }
    }
}

impl From<natocc::model::ModelError> for Failure {
    fn from(e: natocc::model::ModelError) -> Failure {
        Failure::domain(
            "model",
            &e,
            "check L, boundary and basis settings; open chains need the site basis",
        )
    }
}

impl From<natocc::sector_map::SectorMapError> for Failure {
    fn from(e: natocc::sector_map::SectorMapError) -> Failure {
        Failure::domain(
            "sector_map",
            &e,
            "pick a symmetry sector with as many determinants as independent occupations, \
             or truncate the basis by pinning",
        )
    }
}

impl From<natocc::gpc::GpcError> for Failure {
    fn from(e: natocc::gpc::GpcError) -> Failure {
        Failure::domain(
            "gpc",
            &e,
            "perturbation analysis needs a nondegenerate gapped ground state",
        )
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Failure {
        match e {
            DynamicsError::Model(m) => m.into(),
            DynamicsError::SectorMap(s) => s.into(),
            DynamicsError::Rdm(r) => Failure::domain(
                "rdm",
                &r,
                "degenerate spectra can be split with perturb mode or a looser degeneracy_tol",
            ),
            other => {
                let hint = match other {
                    DynamicsError::DegenerateOccupations { .. } => {
                        "start from a state with nondegenerate occupations, or set \
                         dynamics.strict_degeneracy = false"
                    }
                    DynamicsError::GridMismatch => {
                        "compare trajectories produced on identical time grids"
                    }
                    _ => "check the dynamics block of the config",
                };
                Failure::domain("dynamics", &other, hint)
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("{}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn out_dir(config: &RunConfig) -> PathBuf {
    if let Ok(dir) = std::env::var("NATOCC_OUT_DIR") {
        return PathBuf::from(dir);
    }
    config
        .output
        .dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn out_path(config: &RunConfig, explicit: Option<String>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => PathBuf::from(p),
        None => {
            let prefix = config.output.prefix.clone().unwrap_or_default();
            out_dir(config).join(format!("{prefix}{name}"))
        }
    }
}

struct SectorSetup {
    system: SectorSystem,
    hamiltonian: CMatrix,
    ground_energy: f64,
    gap: f64,
    ground: Vec<Complex64>,
}

fn sector_setup(config: &RunConfig) -> Result<SectorSetup, Failure> {
    let dets = enumerate_determinants(config.particles, config.sites)
        .map_err(|e| Failure::domain("fock", e, "N must satisfy 0 <= N <= 2L"))?;
    let basis = natocc::fock::sector_filter(&dets, config.sector_label(), config.sites);
    if basis.is_empty() {
        return Err(Failure::domain(
            "fock",
            format!("sector {} is empty", config.sector_label()),
            "pick a magnetization and Bloch number realized by the basis",
        ));
    }
    let system = SectorSystem::for_lattice_sector(basis, config.sites)?;
    let ints = config.base_integrals()?;
    let hamiltonian = build_many_body_matrix(&system.basis, &ints);
    let (evals, evecs) = eigh(&hamiltonian);
    Ok(SectorSetup {
        ground_energy: evals[0],
        gap: evals[1] - evals[0],
        ground: evecs.column(0).iter().copied().collect(),
        system,
        hamiltonian,
    })
}

fn write_file(path: &std::path::Path, text: &str) -> Result<(), Failure> {
    output::write_text(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SectorMap {
            config,
            output: out,
            text,
        } => {
            let config = RunConfig::from_path(&config)?;
            let setup = sector_setup(&config)?;
            let doc = output::sector_map_json(&setup.system.map, &setup.system.constraints);
            let path = out_path(&config, out, "sector_map.json");
            write_file(&path, &serde_json::to_string_pretty(&doc).unwrap())?;
            if text {
                print!(
                    "{}",
                    output::sector_map_text(&setup.system.map, &setup.system.constraints)
                );
            }
            println!("sector map written to {}", path.display());
            Ok(())
        }
        Command::GroundState {
            config,
            output: out,
        } => {
            let config = RunConfig::from_path(&config)?;
            let setup = sector_setup(&config)?;
            let f: Vec<f64> = setup.ground.iter().map(|z| z.norm_sqr()).collect();
            let occupations = setup.system.map.occupations_from_amplitudes(&f);
            let doc = serde_json::json!({
                "energy": setup.ground_energy,
                "gap": setup.gap,
                "amplitudes": setup.ground.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                "f": f,
                "occupations": occupations,
                "basis": setup.system.basis.iter().map(|d| d.label()).collect::<Vec<_>>(),
            });
            let path = out_path(&config, out, "ground_state.json");
            write_file(&path, &serde_json::to_string_pretty(&doc).unwrap())?;
            println!(
                "ground state E = {} (gap {}) written to {}",
                setup.ground_energy,
                setup.gap,
                path.display()
            );
            Ok(())
        }
        Command::Pinning {
            config,
            output: out,
        } => {
            let config = RunConfig::from_path(&config)?;
            let setup = sector_setup(&config)?;
            let f: Vec<f64> = setup.ground.iter().map(|z| z.norm_sqr()).collect();
            let n = setup.system.map.occupations_from_amplitudes(&f);
            let constraints = constraints_from_sector_map(&setup.system.constraints);
            let orbital_map: Vec<usize> = (0..setup.system.norb).collect();
            let ctx = StateContext {
                psi: &setup.ground,
                basis: &setup.system.basis,
                orbital_map: &orbital_map,
            };
            let report =
                pinning_report(&n, &constraints, Some(&ctx), PinningTolerances::default())?;
            let path = out_path(&config, out, "pinning.json");
            write_file(
                &path,
                &serde_json::to_string_pretty(&output::pinning_report_json(&report)).unwrap(),
            )?;
            println!("pinning report written to {}", path.display());
            Ok(())
        }
        Command::PerturbResponse {
            config,
            output: out,
        } => {
            let config = RunConfig::from_path(&config)?;
            let setup = sector_setup(&config)?;
            let perturb = config.perturb.clone().unwrap_or_default();
            let dim = setup.system.dim();
            let mut rng = ChaCha12Rng::seed_from_u64(perturb.seed);
            let vs: Vec<CMatrix> = (0..perturb.trials)
                .map(|_| {
                    let m = CMatrix::from_fn(dim, dim, |_, _| {
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    });
                    (&m + m.adjoint()).scale(0.5)
                })
                .collect();
            let constraints = constraints_from_sector_map(&setup.system.constraints);
            let orbital_map: Vec<usize> = (0..setup.system.norb).collect();
            let opts = ResponseOptions {
                gap_tol: perturb.gap_tol,
                ..Default::default()
            };
            let mut all_tables = Vec::new();
            let mut all_hold = true;
            for constraint in &constraints.constraints {
                let tables = perturbation_response_batch(
                    &setup.hamiltonian,
                    &vs,
                    constraint,
                    &setup.system.basis,
                    &orbital_map,
                    &[perturb.lambda],
                    &opts,
                )?;
                all_hold &= tables
                    .iter()
                    .all(|t| t.points.iter().all(|p| p.bound_holds));
                all_tables.extend(tables);
            }
            let doc = serde_json::json!({
                "seed": perturb.seed,
                "trials": perturb.trials,
                "lambda": perturb.lambda,
                "all_bounds_hold": all_hold,
                "tables": output::response_tables_json(&all_tables),
            });
            let path = out_path(&config, out, "perturb_response.json");
            write_file(&path, &serde_json::to_string_pretty(&doc).unwrap())?;
            println!(
                "perturbation response ({} trials x {} constraints, bounds hold: {}) written to {}",
                perturb.trials,
                constraints.constraints.len(),
                all_hold,
                path.display()
            );
            Ok(())
        }
        Command::EvolveExact {
            config,
            output_prefix,
        } => {
            let config = RunConfig::from_path(&config)?;
            let setup = sector_setup(&config)?;
            let protocol = config.protocol()?;
            let grid = config.grid()?;
            let frame0 = NaturalFrame::reference(vec![0.0; setup.system.norb]);
            let traj = evolve_exact(
                &protocol,
                &setup.ground,
                &setup.system.basis,
                setup.system.norb,
                &grid,
                Some(&setup.system.constraints),
                Some(frame0),
            )?;
            emit_trajectory(&config, output_prefix, "exact", &traj)
        }
        Command::EvolveReduced {
            config,
            output_prefix,
        } => {
            let config = RunConfig::from_path(&config)?;
            let setup = sector_setup(&config)?;
            let protocol = config.protocol()?;
            let grid = config.grid()?;
            let init = ReducedState::from_sector_amplitudes(&setup.ground, &setup.system)?;
            let traj = evolve_reduced(
                &protocol,
                &init,
                &setup.system,
                &grid,
                &config.reduced_options(),
            )?;
            emit_trajectory(&config, output_prefix, "reduced", &traj)
        }
        Command::Compare {
            exact,
            reduced,
            output: out,
        } => {
            let read = |p: &str| -> Result<Trajectory, Failure> {
                let text =
                    std::fs::read_to_string(p).map_err(|e| Failure::io(format!("{p}: {e}")))?;
                output::parse_trajectory_csv(&text)
                    .map_err(|e| Failure::config(format!("{p}: {e}")))
            };
            let a = read(&exact)?;
            let b = read(&reduced)?;
            let report = compare_trajectories(&a, &b)?;
            let text = output::to_json_pretty(&report);
            match out {
                Some(path) => {
                    let path = PathBuf::from(path);
                    write_file(&path, &text)?;
                    println!("deviation report written to {}", path.display());
                }
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

fn emit_trajectory(
    config: &RunConfig,
    prefix: Option<String>,
    default_name: &str,
    traj: &Trajectory,
) -> Result<(), Failure> {
    let (csv_path, json_path) = match prefix {
        Some(p) => (
            PathBuf::from(format!("{p}.csv")),
            PathBuf::from(format!("{p}.json")),
        ),
        None => (
            out_path(config, None, &format!("{default_name}.csv")),
            out_path(config, None, &format!("{default_name}.json")),
        ),
    };
    write_file(&csv_path, &output::trajectory_csv(traj))?;
    write_file(
        &json_path,
        &serde_json::to_string_pretty(&output::trajectory_json(traj)).unwrap(),
    )?;
    println!(
        "{} trajectory ({} steps) written to {} and {}",
        traj.integrator,
        traj.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}
