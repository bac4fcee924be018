//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::kernel::DEFAULT_TRUNCATION_EPSILON;
use crate::operator::{assemble, build_lb, KernelSpec, LbOperator, DEFAULT_SUPPORT_MULTIPLIER};
use crate::output::{fmt_f64, write_csv};
use crate::pde::{
    exact_sphere_spectrum, field_errors, gaussian_bell, heat_solve, laplace_smooth, lb_spectrum,
    normal_angle_metric, spectrum_distance, sph_harmonic_y10, write_heat_csv, write_smoothing_csv,
    write_spectrum_csv, SmoothConfig, DEFAULT_HEAT_DT_FACTOR,
};
use crate::pointcloud::{
    estimate_normals, generate_sphere_nodes, load_cloud, mean_spacing, perturb_cloud, write_xyz,
    CloudFormat, Point, PointCloud, SphereLevel, DEFAULT_NORMAL_K,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CBF_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "cbf",
    version,
    about = "Laplace-Beltrami operator on point clouds with cylindrical basis functions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write octahedron-subdivision sphere nodes with normals.
    Sphere {
        #[arg(long)]
        level: u32,
        #[arg(long, short, default_value = "sphere.xyz")]
        output: PathBuf,
    },
    /// Estimate PCA normals and write the cloud with normals.
    Normals {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        format: Option<CloudFormat>,
        #[arg(long, short, default_value_t = DEFAULT_NORMAL_K)]
        k: usize,
        #[arg(long, short, default_value = "normals.xyz")]
        output: PathBuf,
    },
    /// Assemble A and B, write them in MatrixMarket format and report the
    /// condition estimate of A.
    Assemble {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Smallest eigenvalues of −LB compared with the exact sphere spectrum.
    Eigen {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        diag: DiagnosticArgs,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, short, default_value = "spectrum.csv")]
        output: PathBuf,
    },
    /// Forward Euler heat diffusion.
    Heat {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        diag: DiagnosticArgs,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        /// Time step; defaults to 0.1·h² with h the mean spacing.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        /// Initial condition. The error CSV is written only for `y10`,
        /// which has an analytic solution on the unit sphere.
        #[arg(long, value_enum, default_value_t = Initial::Y10)]
        initial: Initial,
        #[arg(long, value_parser = parse_point, default_value = "1,0,0")]
        bell_center: Point,
        #[arg(long, default_value_t = 10.0)]
        bell_amplitude: f64,
        #[arg(long, default_value_t = 4.0)]
        bell_width: f64,
        #[arg(long, default_value = "heat")]
        output_dir: PathBuf,
    },
    /// Iterative Laplacian smoothing with a normal-angle report.
    Smooth {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 60)]
        steps: usize,
        /// Step scale; defaults to 0.01·h².
        #[arg(long)]
        scale: Option<f64>,
        /// Displace points along their normals by up to this amount first.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        /// Build the operator once instead of every step.
        #[arg(long)]
        freeze_operator: bool,
        /// Reference cloud for the angle metric; a `--level` run uses the
        /// unperturbed sphere.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "smooth")]
        output_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Initial {
    Y10,
    Bell,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Use sphere nodes of this subdivision level (analytic normals).
    #[arg(long)]
    pub level: Option<u32>,
    /// Load a cloud from a file; missing normals are estimated.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Support radius as a multiple of the mean spacing.
    #[arg(long, conflicts_with_all = ["c", "rho"])]
    pub support_multiplier: Option<f64>,
    #[arg(long, conflicts_with_all = ["c", "rho"])]
    pub truncation_eps: Option<f64>,
    /// Explicit shape parameter; requires --rho.
    #[arg(long, requires = "rho")]
    pub c: Option<f64>,
    /// Explicit support radius (`inf` for a global kernel); requires --c.
    #[arg(long, requires = "c")]
    pub rho: Option<f64>,
    /// Input format when it cannot be inferred from the extension.
    #[arg(long)]
    pub format: Option<CloudFormat>,
    #[arg(long, default_value_t = DEFAULT_NORMAL_K)]
    pub normal_k: usize,
}

#[derive(Debug, Args)]
pub struct DiagnosticArgs {
    /// Also write A.mtx and B.mtx next to the outputs.
    #[arg(long)]
    pub dump_matrices: bool,
    /// Print the condition estimate of A.
    #[arg(long)]
    pub report_condition: bool,
}

impl KernelArgs {
    pub fn spec(&self) -> Result<KernelSpec> {
        match (self.c, self.rho) {
            (Some(c), Some(rho)) => Ok(KernelSpec::Explicit(KernelConfig::new(
                c,
                rho,
                DEFAULT_TRUNCATION_EPSILON,
            )?)),
            (None, None) => Ok(KernelSpec::Multiplier {
                multiplier: self
                    .support_multiplier
                    .unwrap_or(DEFAULT_SUPPORT_MULTIPLIER),
                truncation_epsilon: self.truncation_eps.unwrap_or(DEFAULT_TRUNCATION_EPSILON),
            }),
            _ => Err(Error::InvalidArgument(
                "--c and --rho must be given together".into(),
            )),
        }
    }
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] => Ok(Point::new(*x, *y, *z)),
        _ => Err(format!("expected x,y,z, got {s:?}")),
    }
}

fn load_source(
    source: &SourceArgs,
    format: Option<CloudFormat>,
    normal_k: usize,
) -> Result<PointCloud> {
    match (&source.level, &source.input) {
        (Some(level), _) => generate_sphere_nodes(SphereLevel::new(*level)?),
        (None, Some(path)) => {
            let cloud = read_cloud(path, format)?;
            if cloud.has_normals() {
                Ok(cloud)
            } else {
                estimate_normals(&cloud, normal_k)
            }
        }
        (None, None) => Err(Error::InvalidArgument(
            "one of --level or --input is required".into(),
        )),
    }
}

fn read_cloud(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud> {
    let format = format
        .or_else(|| CloudFormat::from_path(path))
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "cannot infer the format of {}; pass --format",
                path.display()
            ))
        })?;
    load_cloud(path, format)
}

fn build_operator(
    cloud: &PointCloud,
    kernel: &KernelArgs,
    diag: &DiagnosticArgs,
    dir: &Path,
) -> Result<LbOperator> {
    let cfg = kernel.spec()?.resolve(cloud)?;
    let (a, b) = assemble(cloud, &cfg)?;
    if diag.dump_matrices {
        a.matrix().write_matrix_market(dir.join("A.mtx"))?;
        b.matrix().write_matrix_market(dir.join("B.mtx"))?;
    }
    let op = build_lb(a, b)?;
    if let Some(w) = op.warning() {
        eprintln!("warning: {w}");
    }
    if diag.report_condition {
        println!("condition estimate: {:e}", op.condition_estimate());
    }
    Ok(op)
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Executes one command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sphere { level, output } => {
            let cloud = generate_sphere_nodes(SphereLevel::new(level)?)?;
            write_xyz(&output, &cloud)?;
            println!("wrote {} nodes to {}", cloud.len(), output.display());
        }
        Command::Normals {
            input,
            format,
            k,
            output,
        } => {
            let cloud = estimate_normals(&read_cloud(&input, format)?, k)?;
            write_xyz(&output, &cloud)?;
            println!(
                "wrote {} points with normals to {}",
                cloud.len(),
                output.display()
            );
        }
        Command::Assemble {
            source,
            kernel,
            output_dir,
        } => {
            let cloud = load_source(&source, kernel.format, kernel.normal_k)?;
            let diag = DiagnosticArgs {
                dump_matrices: true,
                report_condition: false,
            };
            let op = build_operator(&cloud, &kernel, &diag, &output_dir)?;
            let cfg = op.config();
            println!("n: {}", op.n());
            println!("nnz: {}", op.collocation().nnz());
            println!("c: {:e}", cfg.c());
            println!("rho: {:e}", cfg.support_radius());
            println!("condition estimate: {:e}", op.condition_estimate());
        }
        Command::Eigen {
            source,
            kernel,
            diag,
            m,
            output,
        } => {
            let cloud = load_source(&source, kernel.format, kernel.normal_k)?;
            let op = build_operator(&cloud, &kernel, &diag, &parent_dir(&output))?;
            let spectrum = lb_spectrum(&op, m)?;
            if spectrum.unreliable {
                eprintln!(
                    "warning: discarded imaginary parts up to {:e}; spectrum flagged unreliable",
                    spectrum.max_imag
                );
            }
            let exact = exact_sphere_spectrum(m);
            write_spectrum_csv(&output, &spectrum.computed, &exact)?;
            println!(
                "distance: {}",
                fmt_f64(spectrum_distance(&spectrum.computed, &exact)?)
            );
        }
        Command::Heat {
            source,
            kernel,
            diag,
            eps,
            t_end,
            dt,
            snapshot_every,
            initial,
            bell_center,
            bell_amplitude,
            bell_width,
            output_dir,
        } => {
            let cloud = load_source(&source, kernel.format, kernel.normal_k)?;
            let h = mean_spacing(cloud.points())?;
            let dt = dt.unwrap_or(DEFAULT_HEAT_DT_FACTOR * h * h);
            let op = build_operator(&cloud, &kernel, &diag, &output_dir)?;
            let u0 = match initial {
                Initial::Y10 => sph_harmonic_y10(&cloud),
                Initial::Bell => gaussian_bell(&cloud, &bell_center, bell_amplitude, bell_width),
            };
            let mut traj = heat_solve(&op, &u0, eps, t_end, dt, snapshot_every)?;
            traj.h = Some(h);
            for (step, u) in traj.steps.iter().zip(&traj.states) {
                write_field(&output_dir.join(format!("heat_{step:06}.csv")), &cloud, u)?;
            }
            if initial == Initial::Y10 {
                let rows: Vec<_> = traj
                    .times
                    .iter()
                    .zip(&traj.states)
                    .map(|(&t, u)| {
                        let decay = (-2.0 * eps * t).exp();
                        let exact: Vec<f64> = u0.iter().map(|v| v * decay).collect();
                        let (l2, linf) = field_errors(u, &exact);
                        (t, l2, linf)
                    })
                    .collect();
                write_heat_csv(output_dir.join("heat_errors.csv"), &rows)?;
                let (t, l2, _) = rows.last().expect("at least the initial row");
                println!("relative L2 error at t={t}: {}", fmt_f64(*l2));
            }
            println!("dt: {:e}, steps: {}", dt, traj.steps.last().unwrap_or(&0));
        }
        Command::Smooth {
            source,
            kernel,
            steps,
            scale,
            perturb,
            seed,
            snapshot_every,
            freeze_operator,
            reference,
            output_dir,
        } => {
            let base = load_source(&source, kernel.format, kernel.normal_k)?;
            let reference = match reference {
                Some(path) => Some(read_cloud(&path, kernel.format)?),
                None if source.level.is_some() => Some(base.clone()),
                None => None,
            };
            let start = if perturb > 0.0 {
                perturb_cloud(&base, perturb, seed)?
            } else {
                base
            };
            let cfg = SmoothConfig {
                kernel: kernel.spec()?,
                steps,
                scale,
                normal_k: kernel.normal_k,
                snapshot_every,
                freeze_operator,
            };
            let traj = laplace_smooth(&start, &cfg)?;
            for (step, cloud) in traj.steps.iter().zip(&traj.states) {
                write_xyz(output_dir.join(format!("smooth_{step:06}.xyz")), cloud)?;
            }
            if let Some(reference) = reference {
                let rows = traj
                    .steps
                    .iter()
                    .zip(&traj.states)
                    .map(|(&s, c)| normal_angle_metric(c, &reference).map(|m| (s, m)))
                    .collect::<Result<Vec<_>>>()?;
                write_smoothing_csv(output_dir.join("smoothing.csv"), &rows)?;
                for (s, m) in &rows {
                    println!("step {s}: mean angle {}", fmt_f64(m.mean));
                }
            }
        }
    }
    Ok(())
}

fn write_field(path: &Path, cloud: &PointCloud, u: &[f64]) -> Result<()> {
    let rows = cloud
        .points()
        .iter()
        .zip(u)
        .map(|(p, v)| vec![fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z), fmt_f64(*v)]);
    write_csv(path, &["x", "y", "z", "u"], rows)
}

/// Process exit status for an error. Usage errors from argument parsing
/// exit with 2.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::InvalidArgument(_) | Error::InvalidKernel(_) => 2,
        Error::Io { .. } => 3,
        Error::Parse { .. }
        | Error::TooFewPoints(_)
        | Error::DuplicatePoint { .. }
        | Error::NonUnitNormal { .. }
        | Error::MissingNormals
        | Error::InvalidNeighborCount { .. } => 4,
        Error::DegenerateNormal { .. } => 5,
        Error::SingularCollocation { .. } => 6,
        Error::BlowUp { .. } => 7,
        Error::Eigen(_) => 8,
        Error::DimensionMismatch { .. } | Error::IncompatibleMatrices(_) => 9,
        Error::StepFailed { .. } => 1,
    }
}

/// Applies `CBF_THREADS` to the rayon pool and the dense linear algebra.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("{THREADS_ENV}={value:?} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    faer::set_global_parallelism(if n == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(n)
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn explicit_kernel_conflicts_with_multiplier() {
        let r = Cli::try_parse_from([
            "cbf",
            "eigen",
            "--level",
            "2",
            "--c",
            "1",
            "--rho",
            "1",
            "--support-multiplier",
            "3",
        ]);
        assert!(r.is_err());
        let r = Cli::try_parse_from(["cbf", "eigen", "--level", "2", "--c", "1"]);
        assert!(r.is_err());
        let r = Cli::try_parse_from(["cbf", "eigen", "--level", "2", "--input", "x.xyz"]);
        assert!(r.is_err());
    }

    #[test]
    fn exit_codes_are_distinct_per_class() {
        let errors = [
            Error::InvalidArgument(String::new()),
            Error::io("x", std::io::Error::other("x")),
            Error::MissingNormals,
            Error::DegenerateNormal { index: 0 },
            Error::SingularCollocation { condition: 1.0 },
            Error::BlowUp { step: 1 },
            Error::Eigen(String::new()),
            Error::IncompatibleMatrices(String::new()),
        ];
        let mut codes: Vec<i32> = errors.iter().map(exit_code).collect();
        assert!(codes.iter().all(|&c| c != 0));
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errors.len());
        let wrapped = Error::StepFailed {
            step: 3,
            source: Box::new(Error::SingularCollocation { condition: 1.0 }),
        };
        assert_eq!(exit_code(&wrapped), 6);
    }

    #[test]
    fn point_parser() {
        assert_eq!(parse_point("1, 2,3").unwrap(), Point::new(1.0, 2.0, 3.0));
        assert!(parse_point("1,2").is_err());
    }
}
