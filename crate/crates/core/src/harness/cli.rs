//! `opfree` command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::io::{read_json, read_text, sibling, to_json_string, write_csv_with_provenance, write_json_with_provenance, Provenance};
use super::ks::{compare_density_curve, DensityCurve};
use super::rmt::{sample_rmt_spectrum, EnsembleSpec};
use crate::algebra::{c, AlgebraElement, CpMap, HalfPlanePoint, Side};
use crate::diagnostics::{delta_omega_spectrum, dvg_spectrum, jc_probe, nc_function_axioms_check, vq_derivative};
use crate::error::{Error, Result};
use crate::model::{OperatorDistribution, OperatorModel};
use crate::subordination::{residual_h, solve_omega, SolverConfig, SubordinationProblem, Variant};
use crate::transforms::{density_grid, linspace, r_transform_eval, read_density_csv, semicircular_convolve_g, ConvolutionPower, Subordinated};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "opfree", version, about = "Operator-valued free convolution toolkit")]
struct Cli {
    #[command(flatten)]
    solver: SolverFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
struct SolverFlags {
    /// Fixed-point tolerance (overrides the problem file).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Damping `d` in `w ← (1−d)f(w) + d·w`.
    #[arg(long, global = true)]
    damping: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, base: &SolverConfig) -> Result<SolverConfig> {
        let mut cfg = base.clone();
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        if let Some(d) = self.damping {
            cfg.damping = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Subordination function ω(b) of a problem.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral density of G_model∘ω on a grid, extrapolated in ε.
    Density {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        xmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        xmax: f64,
        #[arg(long)]
        steps: usize,
        /// Decreasing list, e.g. `1e-2,1e-3`.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a gnuplot data file next to the CSV.
        #[arg(long)]
        plot: bool,
    },
    /// ω_α(b) and G of the convolution power, for a problem with a power variant.
    Power {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// G of model ⊞ γ_β at a point.
    Convolve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        beta: PathBuf,
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// R-transform of the model (or of its α-power) at g in the lower half-plane.
    Rtransform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long)]
        alpha: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectrum certificates for Δω and, given q and u, for ∂_v g_q.
    Diagnose {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        b1: PathBuf,
        #[arg(long)]
        b2: PathBuf,
        #[arg(long)]
        q: Option<PathBuf>,
        #[arg(long)]
        u: Option<PathBuf>,
        /// Direction for the v_q derivative; the identity if omitted.
        #[arg(long)]
        c: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary Julia–Carathéodory probe along α + iyv.
    JcProbe {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        alpha: PathBuf,
        #[arg(long)]
        v: PathBuf,
        #[arg(long)]
        u: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ys: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// KS distance between a sampled ensemble and a density CSV.
    ValidateRmt {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        against: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Direct-sum and similarity defects of G, h and ω.
    Axioms {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Scalar matrix acting on levels.
        #[arg(long)]
        t: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Density { .. } => "density",
            Command::Power { .. } => "power",
            Command::Convolve { .. } => "convolve",
            Command::Rtransform { .. } => "rtransform",
            Command::Diagnose { .. } => "diagnose",
            Command::JcProbe { .. } => "jc-probe",
            Command::ValidateRmt { .. } => "validate-rmt",
            Command::Axioms { .. } => "axioms",
        }
    }
}

/// A point in `M_k(B)`: a full matrix, or `[re, im]` meaning `(re + i·im)·1`.
#[derive(Deserialize)]
#[serde(untagged)]
enum PointJson {
    Scalar([f64; 2]),
    Element(AlgebraElement),
}

fn read_element(path: &Path, n: usize, prov: &mut Provenance) -> Result<AlgebraElement> {
    match read_json::<PointJson>(path, prov)? {
        PointJson::Scalar([re, im]) => Ok(AlgebraElement::scalar(n, c(re, im))),
        PointJson::Element(e) => Ok(e),
    }
}

fn read_upper(path: &Path, n: usize, prov: &mut Provenance) -> Result<HalfPlanePoint> {
    HalfPlanePoint::new(read_element(path, n, prov)?, Side::Upper)
}

fn read_problem(path: &Path, flags: &SolverFlags, prov: &mut Provenance) -> Result<(SubordinationProblem, SolverConfig)> {
    let p: SubordinationProblem = read_json(path, prov)?;
    let cfg = flags.apply(p.solver())?;
    let p = p.with_solver(cfg.clone())?;
    Ok((p, cfg))
}

/// Writes to `--out` if given, else prints to stdout.
fn emit<T: Serialize>(out: Option<&Path>, result: &T, prov: &Provenance) -> Result<()> {
    match out {
        Some(path) => write_json_with_provenance(path, result, prov),
        None => {
            print!("{}", to_json_string(result)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SolveOut {
    omega: AlgebraElement,
    iterations: usize,
    residual: f64,
    converged: bool,
    residual_h: f64,
}

#[derive(Serialize)]
struct PowerOut {
    omega: AlgebraElement,
    g: AlgebraElement,
    iterations: usize,
    residual: f64,
    converged: bool,
}

#[derive(Serialize)]
struct ValueOut {
    value: AlgebraElement,
}

#[derive(Serialize)]
struct DiagnoseOut {
    delta_omega: crate::diagnostics::SpectrumCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    dvg: Option<crate::diagnostics::SpectrumCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vq_derivative: Option<crate::diagnostics::VqDerivative>,
}

#[derive(Serialize)]
struct RmtOut {
    ks: f64,
    threshold: f64,
    pass: bool,
    eigenvalues: usize,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

fn run(cli: Cli) -> Result<i32> {
    let flags = &cli.solver;
    let mut prov = Provenance::new(cli.command.name());
    match &cli.command {
        Command::Solve { problem, point, out } => {
            let (p, cfg) = read_problem(problem, flags, &mut prov)?;
            let b = read_upper(point, p.base_dim(), &mut prov)?;
            let r = solve_omega(&p, &b, &cfg)?;
            let rh = residual_h(&p, &r.value, b.value())?;
            prov = prov.with_config(serde_json::to_value(&cfg)?);
            let code = if r.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
            let res = SolveOut {
                omega: r.value,
                iterations: r.iterations,
                residual: r.residual,
                converged: r.converged,
                residual_h: rh,
            };
            emit(out.as_deref(), &res, &prov)?;
            Ok(code)
        }
        Command::Density {
            problem,
            xmin,
            xmax,
            steps,
            eps,
            out,
            plot,
        } => {
            let (p, cfg) = read_problem(problem, flags, &mut prov)?;
            if !(xmin < xmax) || *steps < 2 {
                return Err(Error::invalid("need xmin < xmax and at least 2 steps"));
            }
            let dist = Subordinated::with_config(p, cfg.clone())?;
            let grid = density_grid(&dist, &linspace(*xmin, *xmax, *steps), eps)?;
            prov = prov.with_config(serde_json::json!({
                "solver": cfg, "xmin": xmin, "xmax": xmax, "steps": steps, "eps": eps
            }));
            write_csv_with_provenance(out, &grid.to_csv(), &prov)?;
            std::fs::write(sibling(out, ".raw.csv"), grid.to_raw_csv())?;
            if *plot {
                std::fs::write(sibling(out, ".dat"), grid.to_gnuplot())?;
            }
            let failed = grid.failed.iter().filter(|&&f| f).count();
            if failed > 0 {
                eprintln!("{failed} grid points failed to converge");
                return Ok(EXIT_NO_CONVERGENCE);
            }
            Ok(EXIT_OK)
        }
        Command::Power { problem, point, out } => {
            let (p, cfg) = read_problem(problem, flags, &mut prov)?;
            let Variant::Power(alpha) = p.variant().clone() else {
                return Err(Error::invalid("power needs a problem with variant {\"power\": α}"));
            };
            let b = read_upper(point, p.base_dim(), &mut prov)?;
            let r = solve_omega(&p, &b, &cfg)?;
            let g = p.model().cauchy(r.matrix())?;
            prov = prov.with_config(serde_json::json!({ "solver": cfg, "alpha": alpha }));
            let code = if r.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
            let res = PowerOut {
                g: AlgebraElement::new(g)?,
                omega: r.value,
                iterations: r.iterations,
                residual: r.residual,
                converged: r.converged,
            };
            emit(out.as_deref(), &res, &prov)?;
            Ok(code)
        }
        Command::Convolve { model, beta, point, out } => {
            let m: OperatorModel = read_json(model, &mut prov)?;
            let beta: CpMap = read_json(beta, &mut prov)?;
            let b = read_upper(point, m.base_dim(), &mut prov)?;
            let cfg = flags.apply(&SolverConfig::default())?;
            let g = semicircular_convolve_g(&m, &beta, &b, &cfg)?;
            prov = prov.with_config(serde_json::to_value(&cfg)?);
            emit(out.as_deref(), &ValueOut { value: g }, &prov)?;
            Ok(EXIT_OK)
        }
        Command::Rtransform { model, g, alpha, out } => {
            let m: OperatorModel = read_json(model, &mut prov)?;
            let cfg = flags.apply(&SolverConfig::default())?;
            let g = read_element(g, m.base_dim(), &mut prov)?;
            let r = match alpha {
                Some(path) => {
                    let a: CpMap = read_json(path, &mut prov)?;
                    r_transform_eval(&ConvolutionPower::new(&m, a, cfg.clone())?, &g, &cfg)?
                }
                None => r_transform_eval(&m, &g, &cfg)?,
            };
            prov = prov.with_config(serde_json::to_value(&cfg)?);
            emit(out.as_deref(), &ValueOut { value: r }, &prov)?;
            Ok(EXIT_OK)
        }
        Command::Diagnose {
            problem,
            b1,
            b2,
            q,
            u,
            c: dir,
            out,
        } => {
            let (p, cfg) = read_problem(problem, flags, &mut prov)?;
            let n = p.base_dim();
            let (b1, b2) = (read_upper(b1, n, &mut prov)?, read_upper(b2, n, &mut prov)?);
            let dw = delta_omega_spectrum(&p, &b1, &b2, &cfg)?;
            let (dvg, vqd) = match (q, u) {
                (Some(q), Some(u)) => {
                    let q = read_element(q, n, &mut prov)?;
                    let u = read_element(u, n, &mut prov)?;
                    let dirm = match dir {
                        Some(path) => read_element(path, n, &mut prov)?,
                        None => AlgebraElement::identity(q.dim()),
                    };
                    (Some(dvg_spectrum(&p, &q, &u, &cfg)?), Some(vq_derivative(&p, &q, &u, &dirm, &cfg)?))
                }
                (None, None) => (None, None),
                _ => return Err(Error::invalid("--q and --u must be given together")),
            };
            let mut table = String::new();
            let _ = writeln!(table, "{:<14} {:>14} {:>14} {:>6}", "certificate", "min Re", "radius", "pass");
            let _ = writeln!(table, "{:<14} {:>14.6e} {:>14.6e} {:>6}", "delta_omega", dw.min_real, dw.spectral_radius, dw.pass);
            if let Some(d) = dw.inverse_defect {
                let _ = writeln!(table, "{:<14} {:>14.6e}", "inverse_defect", d);
            }
            if let Some(g) = &dvg {
                let _ = writeln!(table, "{:<14} {:>14.6e} {:>14.6e} {:>6}", "dv_g", g.min_real, g.spectral_radius, g.pass);
            }
            if let Some(v) = &vqd {
                let _ = writeln!(table, "{:<14} {:>14.6e}", "vq_fd_err", v.finite_difference_error);
                let _ = writeln!(table, "{:<14} {:>14.6e}", "vq_2x2_err", v.amplified_error);
            }
            eprint!("{table}");
            prov = prov.with_config(serde_json::to_value(&cfg)?);
            let res = DiagnoseOut {
                delta_omega: dw,
                dvg,
                vq_derivative: vqd,
            };
            emit(out.as_deref(), &res, &prov)?;
            Ok(EXIT_OK)
        }
        Command::JcProbe {
            problem,
            alpha,
            v,
            u,
            ys,
            out,
        } => {
            let (p, cfg) = read_problem(problem, flags, &mut prov)?;
            let n = p.base_dim();
            let alpha = read_element(alpha, n, &mut prov)?;
            let v = read_element(v, n, &mut prov)?;
            let u = read_element(u, n, &mut prov)?;
            let r = jc_probe(&p, &alpha, &v, &u, ys, &cfg)?;
            eprintln!("status: {:?} {}", r.status, r.note);
            prov = prov.with_config(serde_json::json!({ "solver": cfg, "ys": ys }));
            emit(out.as_deref(), &r, &prov)?;
            Ok(EXIT_OK)
        }
        Command::ValidateRmt {
            ensemble,
            against,
            threshold,
            out,
        } => {
            let spec: EnsembleSpec = read_json(ensemble, &mut prov)?;
            let (u, d) = read_density_csv(&read_text(against, &mut prov)?)?;
            let curve = DensityCurve::new(u, d)?;
            let emp = sample_rmt_spectrum(&spec)?;
            let ks = compare_density_curve(&emp, &curve)?;
            println!("KS {ks:.6}");
            prov = prov.with_config(serde_json::json!({ "ensemble": spec, "threshold": threshold }));
            let res = RmtOut {
                ks,
                threshold: *threshold,
                pass: ks <= *threshold,
                eigenvalues: emp.eigenvalues.len(),
                min_eigenvalue: emp.eigenvalues[0],
                max_eigenvalue: emp.eigenvalues[emp.eigenvalues.len() - 1],
            };
            if let Some(path) = out {
                write_json_with_provenance(path, &res, &prov)?;
            }
            Ok(if res.pass { EXIT_OK } else { EXIT_NO_CONVERGENCE })
        }
        Command::Axioms { problem, a, b, t, out } => {
            let (p, cfg) = read_problem(problem, flags, &mut prov)?;
            let n = p.base_dim();
            let (a, b) = (read_upper(a, n, &mut prov)?, read_upper(b, n, &mut prov)?);
            let t: AlgebraElement = read_json(t, &mut prov)?;
            let r = nc_function_axioms_check(&p, &a, &b, t.matrix(), &cfg)?;
            prov = prov.with_config(serde_json::to_value(&cfg)?);
            emit(out.as_deref(), &r, &prov)?;
            Ok(EXIT_OK)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_non_convergence() {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_INPUT
    }
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 success, 2 non-convergence, 1 anything else.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        std::iter::once("opfree".to_string()).chain(s.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn parse_errors_exit_one() {
        assert_eq!(run_command(args("")), EXIT_INPUT);
        assert_eq!(run_command(args("frobnicate")), EXIT_INPUT);
        assert_eq!(run_command(args("solve --problem p.json --point b.json --bogus")), EXIT_INPUT);
        assert_eq!(run_command(args("--help")), EXIT_OK);
    }

    #[test]
    fn missing_file_exits_one() {
        assert_eq!(run_command(args("solve --problem /nonexistent/p.json --point /nonexistent/b.json")), EXIT_INPUT);
    }

    #[test]
    fn negative_bounds_parse() {
        let cli = Cli::try_parse_from(args("density --problem p --xmin -2 --xmax 2 --steps 5 --eps 1e-2,1e-3 --out d.csv")).unwrap();
        match cli.command {
            Command::Density { xmin, eps, .. } => {
                assert_eq!(xmin, -2.0);
                assert_eq!(eps, vec![1e-2, 1e-3]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn solver_flags_override() {
        let cli = Cli::try_parse_from(args("solve --problem p --point b --tol 1e-9 --damping 0.3")).unwrap();
        let cfg = cli.solver.apply(&SolverConfig::default()).unwrap();
        assert_eq!(cfg.tol, 1e-9);
        assert_eq!(cfg.damping, 0.3);
        assert_eq!(cfg.max_iter, 20_000);
        let bad = Cli::try_parse_from(args("solve --problem p --point b --damping 1.5")).unwrap();
        assert!(bad.solver.apply(&SolverConfig::default()).is_err());
    }

    #[test]
    fn scalar_point_expands_to_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, "[0.5, 2]").unwrap();
        let e = read_element(&path, 2, &mut Provenance::new("t")).unwrap();
        assert_eq!(e, AlgebraElement::scalar(2, c(0.5, 2.0)));
        std::fs::write(&path, r#"{"dim":1,"entries":[[0,3]]}"#).unwrap();
        let e = read_element(&path, 2, &mut Provenance::new("t")).unwrap();
        assert_eq!(e.dim(), 1);
    }
}
