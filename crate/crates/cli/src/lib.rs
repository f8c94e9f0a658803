//! The `iterint` command-line tool.
//!
//! Exit status: 0 on success, 2 when a flag fails validation (the message
//! names the flag), 1 on runtime failure.

pub mod config;
pub mod emit;
pub mod error;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use iterint::coefficients::default_degree;
use iterint::expansion::{approximate_with, TermEvaluator};
use iterint::oracle::{coupled_mse_curve, MAX_GRID_STEPS};
use iterint::rng::derive_seed;
use iterint::sde::{strong_error, CatalogSystem, Reference, Scheme, SchemeConfig};
use iterint::{
    build_tensor, enumerate_pair_partitions, sample_table, BasisKind, CoefficientTensor64, Interval64, KernelSpec64,
    MultiIndex, TermForm, WeightSpec64,
};

use crate::emit::{emit, write_output, Format, Table, Value};
use crate::error::{blame, invalid, CliError};

#[derive(Debug, Parser)]
#[command(name = "iterint", version, about = "Iterated Itô integrals by truncated multiple Fourier series")]
struct Cli {
    /// Output format (csv or json); `coeffs` defaults to json, the rest to csv.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Write the artifact here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat `key = value` file of flags (see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the pair partitions of {1..k} with r pairs.
    Partitions {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        r: usize,
    },
    /// Compute a coefficient tensor.
    Coeffs {
        #[arg(long)]
        k: usize,
        /// Truncation `p1,...,pk`, or one value for every axis.
        #[arg(long)]
        p: String,
        /// Weights `w1,...,wk` (const[:c], pow:q[:scale], table:t=v;...), or one for every axis.
        #[arg(long, default_value = "const")]
        weights: String,
        #[arg(long, default_value = "0,1")]
        interval: String,
        #[arg(long, default_value = "legendre")]
        basis: String,
        /// Gauss–Legendre points per panel (default: chosen from p and the weights).
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Draw approximations of one iterated integral from independent tables.
    Sample {
        #[arg(long)]
        mi: String,
        #[arg(long, default_value = "const")]
        weights: String,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "0,1")]
        interval: String,
        #[arg(long, default_value = "legendre")]
        basis: String,
        #[arg(long, default_value = "hermite")]
        form: String,
    },
    /// Evaluate one multiple Wiener term on a sampled table.
    Term {
        #[arg(long)]
        mi: String,
        #[arg(long)]
        j: String,
        #[arg(long)]
        seed: u64,
        /// partition, hermite, recurrence or all.
        #[arg(long, default_value = "all")]
        form: String,
        #[arg(long, default_value = "0,1")]
        interval: String,
        #[arg(long, default_value = "legendre")]
        basis: String,
    },
    /// Coupled mean-square error of the expansion against the fine-grid oracle.
    Convergence {
        #[arg(long)]
        mi: String,
        #[arg(long, default_value = "const")]
        weights: String,
        /// Truncations 0..=pmax, unless --p-values is given.
        #[arg(long)]
        pmax: Option<usize>,
        /// Explicit truncations, e.g. 0,1,2,4,8.
        #[arg(long)]
        p_values: Option<String>,
        #[arg(long)]
        n_grid: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "0,1")]
        interval: String,
        #[arg(long, default_value = "legendre")]
        basis: String,
    },
    /// Strong error of Euler or Milstein on a catalog system.
    SdeDemo {
        /// scalar2 or bilinear2d.
        #[arg(long)]
        system: String,
        /// euler or milstein.
        #[arg(long)]
        scheme: String,
        /// Step sizes, comma separated.
        #[arg(long)]
        h: String,
        #[arg(long, default_value_t = 0)]
        p: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// euler, milstein or exact (default: exact for scalar2, euler otherwise).
        #[arg(long)]
        reference: Option<String>,
        /// Reference step = smallest h / ref-factor.
        #[arg(long, default_value_t = 256)]
        ref_factor: usize,
        #[arg(long, default_value = "0,1")]
        interval: String,
    },
}

/// Runs the tool on `argv` (including the program name) with process stdio.
pub fn run(argv: Vec<String>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with(argv: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{e}");
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    let format = cli.format;
    match cli.command {
        Command::Partitions { k, r } => partitions(k, r, format.unwrap_or_default(), out, stdout),
        Command::Coeffs {
            k,
            p,
            weights,
            interval,
            basis,
            degree,
        } => {
            let iv = parse_interval(&interval)?;
            let ks = parse_kernel(&weights, k, iv)?;
            let truncation = parse_truncation(&p, k)?;
            let basis = parse_basis(&basis)?;
            let max_p = truncation.iter().copied().max().unwrap_or(0);
            let degree = degree.unwrap_or_else(|| default_degree(&ks, max_p));
            let tensor = build_tensor(&ks, &truncation, basis, degree).map_err(blame("--p"))?;
            match format.unwrap_or(Format::Json) {
                Format::Json => write_output(&(tensor.to_json() + "\n"), out, stdout),
                Format::Csv => emit(&coefficient_table(&tensor), Format::Csv, out, stdout),
            }
        }
        Command::Sample {
            mi,
            weights,
            p,
            trials,
            seed,
            interval,
            basis,
            form,
        } => {
            let mi = parse_mi(&mi)?;
            let iv = parse_interval(&interval)?;
            let ks = parse_kernel(&weights, mi.k(), iv)?;
            let basis = parse_basis(&basis)?;
            let form: TermForm = form.parse().map_err(blame("--form"))?;
            if trials == 0 {
                return Err(invalid("--trials", "must be positive"));
            }
            let tensor = build_tensor(&ks, &vec![p; mi.k()], basis, default_degree(&ks, p)).map_err(blame("--p"))?;
            let eval = TermEvaluator::new(mi.k(), form).map_err(blame("--mi"))?;
            let m = mi.max_component().max(1);
            let mut table = Table::new(["trial", "value"]);
            for trial in 0..trials {
                let tab = sample_table(derive_seed(seed, &[trial as u64]), m, p, basis, iv).map_err(blame("--mi"))?;
                let v = approximate_with(&eval, &tensor, &mi, &tab).map_err(blame("--mi"))?;
                table.push(vec![trial.into(), v.into()]);
            }
            emit(&table, format.unwrap_or_default(), out, stdout)
        }
        Command::Term {
            mi,
            j,
            seed,
            form,
            interval,
            basis,
        } => {
            let mi = parse_mi(&mi)?;
            let jx = parse_usize_list(&j, "--j")?;
            if jx.len() != mi.k() {
                return Err(invalid("--j", format!("expected {} entries to match --mi", mi.k())));
            }
            let forms = if form == "all" {
                vec![TermForm::Partition, TermForm::Hermite, TermForm::Recurrence]
            } else {
                vec![form.parse().map_err(blame("--form"))?]
            };
            let iv = parse_interval(&interval)?;
            let basis = parse_basis(&basis)?;
            let p = jx.iter().copied().max().unwrap_or(0);
            let tab = sample_table(seed, mi.max_component().max(1), p, basis, iv).map_err(blame("--mi"))?;
            let mut table = Table::new(["form", "value"]);
            for f in forms {
                let v = TermEvaluator::new(mi.k(), f)
                    .and_then(|e| e.eval(&mi, &jx, &tab))
                    .map_err(blame("--j"))?;
                table.push(vec![f.to_string().into(), v.into()]);
            }
            emit(&table, format.unwrap_or_default(), out, stdout)
        }
        Command::Convergence {
            mi,
            weights,
            pmax,
            p_values,
            n_grid,
            trials,
            seed,
            interval,
            basis,
        } => {
            let mi = parse_mi(&mi)?;
            let iv = parse_interval(&interval)?;
            let ks = parse_kernel(&weights, mi.k(), iv)?;
            let basis = parse_basis(&basis)?;
            let ps = match (p_values, pmax) {
                (Some(list), _) => parse_usize_list(&list, "--p-values")?,
                (None, Some(pmax)) => (0..=pmax).collect(),
                (None, None) => return Err(invalid("--pmax", "give --pmax or --p-values")),
            };
            if n_grid == 0 || n_grid > MAX_GRID_STEPS {
                return Err(invalid("--n-grid", format!("must be in 1..={MAX_GRID_STEPS}")));
            }
            if trials < 100 {
                return Err(invalid("--trials", "coupled estimates need at least 100 trials"));
            }
            let top = ps.iter().copied().max().unwrap_or(0);
            if n_grid < 100 * top * top {
                let _ = writeln!(
                    stderr,
                    "warning: n-grid {n_grid} is below 100·p² = {} for p = {top}; discretization error may dominate",
                    100 * top * top
                );
            }
            let full =
                build_tensor(&ks, &vec![top; mi.k()], basis, default_degree(&ks, top)).map_err(blame("--p-values"))?;
            let tensors = ps
                .iter()
                .map(|&p| full.truncate(&vec![p; mi.k()]))
                .collect::<iterint::Result<Vec<_>>>()
                .map_err(blame("--p-values"))?;
            let curve = coupled_mse_curve(&mi, &ks, &tensors, n_grid, trials, seed).map_err(blame("--mi"))?;
            let mut table = Table::new(["p", "analytic_residual", "sample_mse", "stderr", "n_grid"]);
            for (p, row) in ps.iter().zip(&curve) {
                table.push(vec![
                    (*p).into(),
                    row.analytic_residual.into(),
                    row.sample_mse.into(),
                    row.stderr.into(),
                    row.n_grid.into(),
                ]);
            }
            emit(&table, format.unwrap_or_default(), out, stdout)
        }
        Command::SdeDemo {
            system,
            scheme,
            h,
            p,
            trials,
            seed,
            reference,
            ref_factor,
            interval,
        } => {
            let catalog: CatalogSystem = system.parse().map_err(blame("--system"))?;
            let scheme: Scheme = scheme.parse().map_err(blame("--scheme"))?;
            let iv = parse_interval(&interval)?;
            let hs = parse_f64_list(&h, "--h")?;
            if hs.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                return Err(invalid("--h", "steps must be positive"));
            }
            if trials < 2 {
                return Err(invalid("--trials", "need at least 2 trials"));
            }
            if ref_factor == 0 {
                return Err(invalid("--ref-factor", "must be positive"));
            }
            let cfgs: Vec<SchemeConfig<f64>> = hs.iter().map(|&h| SchemeConfig { scheme, h, p, seed }).collect();
            let reference_name = reference.unwrap_or_else(|| match catalog {
                CatalogSystem::LinearScalar2Noise => "exact".into(),
                CatalogSystem::BilinearNonCommutative2D => "euler".into(),
            });
            let h_min = hs.iter().copied().fold(f64::INFINITY, f64::min);
            let reference = match reference_name.as_str() {
                "exact" => Reference::ClosedForm,
                other => Reference::Scheme(SchemeConfig {
                    scheme: other.parse().map_err(blame("--reference"))?,
                    h: h_min / ref_factor as f64,
                    p,
                    seed,
                }),
            };
            let sys = catalog.system::<f64>();
            let rows = strong_error(&sys, &cfgs, &reference, trials, seed, &catalog.initial_state(), &iv)
                .map_err(|e| match e {
                    iterint::Error::InvalidArgument { name: "reference", .. } => blame("--reference")(e),
                    _ => blame("--h")(e),
                })?;
            let mut table = Table::new(["system", "scheme", "h", "p", "rmse", "stderr", "trials", "reference"]);
            for row in rows {
                table.push(vec![
                    catalog.to_string().into(),
                    row.scheme.to_string().into(),
                    row.h.into(),
                    row.p.into(),
                    row.rmse.into(),
                    row.stderr.into(),
                    row.trials.into(),
                    reference_name.as_str().into(),
                ]);
            }
            emit(&table, format.unwrap_or_default(), out, stdout)
        }
    }
}

fn partitions(k: usize, r: usize, format: Format, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    if k == 0 || k > iterint::combinatorics::MAX_PARTITION_K {
        return Err(invalid("--k", format!("must be in 1..={}", iterint::combinatorics::MAX_PARTITION_K)));
    }
    let list = enumerate_pair_partitions(k, r).map_err(blame("--r"))?;
    match format {
        Format::Csv => {
            let text: String = list.iter().map(|p| format!("{p}\n")).collect();
            write_output(&text, out, stdout)
        }
        Format::Json => {
            let mut table = Table::new(["partition"]);
            for p in &list {
                table.push(vec![p.to_string().into()]);
            }
            emit(&table, Format::Json, out, stdout)
        }
    }
}

fn coefficient_table(tensor: &CoefficientTensor64) -> Table {
    let mut table = Table::new((1..=tensor.k()).map(|l| format!("j{l}")).chain(["value".to_string()]));
    let values = tensor.values();
    let mut n = 0;
    iterint::coefficients::for_each_index(tensor.truncation(), |jx| {
        let mut row: Vec<Value> = jx.iter().map(|&j| j.into()).collect();
        row.push(values[n].into());
        n += 1;
        table.push(row);
    });
    table
}

fn parse_usize_list(s: &str, flag: &'static str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| invalid(flag, format!("`{t}` is not a nonnegative integer"))))
        .collect()
}

fn parse_f64_list(s: &str, flag: &'static str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(flag, format!("`{t}` is not a number"))))
        .collect()
}

fn parse_interval(s: &str) -> Result<Interval64, CliError> {
    let v = parse_f64_list(s, "--interval")?;
    if v.len() != 2 {
        return Err(invalid("--interval", "expected `t,T`"));
    }
    Interval64::new(v[0], v[1]).map_err(blame("--interval"))
}

fn parse_basis(s: &str) -> Result<BasisKind, CliError> {
    s.parse().map_err(blame("--basis"))
}

fn parse_mi(s: &str) -> Result<MultiIndex, CliError> {
    s.parse().map_err(blame("--mi"))
}

fn parse_truncation(s: &str, k: usize) -> Result<Vec<usize>, CliError> {
    let v = parse_usize_list(s, "--p")?;
    match v.len() {
        1 => Ok(vec![v[0]; k]),
        n if n == k => Ok(v),
        n => Err(invalid("--p", format!("expected 1 or {k} entries, got {n}"))),
    }
}

fn parse_kernel(s: &str, k: usize, iv: Interval64) -> Result<KernelSpec64, CliError> {
    if k == 0 || k > iterint::coefficients::MAX_KERNEL_K {
        return Err(invalid("--k", format!("must be in 1..={}", iterint::coefficients::MAX_KERNEL_K)));
    }
    let ws = s
        .split(',')
        .map(|t| t.parse::<WeightSpec64>())
        .collect::<iterint::Result<Vec<_>>>()
        .map_err(blame("--weights"))?;
    let ws = match ws.len() {
        1 => vec![ws[0].clone(); k],
        n if n == k => ws,
        n => return Err(invalid("--weights", format!("expected 1 or {k} weights, got {n}"))),
    };
    KernelSpec64::new(ws, iv).map_err(blame("--weights"))
}
