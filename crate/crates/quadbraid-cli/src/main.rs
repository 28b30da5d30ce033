use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadbraid::chains::{self, ChainSpec, CommutationReport, Display};
use quadbraid::hamiltonians::{self, FdOptions, Gl2Example, HamiltonianReport};
use quadbraid::sampling::Sampler;
use quadbraid::verifier::{self, VerificationReport, VerifyOptions};
use quadbraid::{ChiMode, Error, Execution, ModelConfig, ModelSpec, C64};

#[derive(Parser, Debug)]
#[command(name = "quadbraid", version, about = "Spin chains from quadratic exchange algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the identity suite on a model.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Add noise of this norm to every structure matrix first.
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Scan `‖[t(u), t(v)]‖` over a seeded grid.
    Commute {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainArgs,
        /// Samples per axis of the (u, v, λ) grid.
        #[arg(long, default_value_t = 3)]
        grid: usize,
    },
    /// Closed-form Hamiltonian against the numeric logarithmic derivative.
    Hamiltonian {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value_t = 1)]
        lambda_samples: usize,
        #[arg(long, value_enum, default_value_t = DisplayArg::Corrected)]
        display: DisplayArg,
    },
    /// Eigenvalues of the Hamiltonian at seeded λ.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value_t = 1)]
        lambda_samples: usize,
    },
    /// The gl₂ example chain end to end.
    Example {
        #[command(flatten)]
        common: Common,
        #[arg(short = 'N', long = "sites", default_value_t = 2)]
        sites: usize,
        #[arg(long, default_value_t = 1)]
        lambda_samples: usize,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Model file (JSON, `schema: 1`).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    fd_step: f64,
    #[arg(long, env = "QUADBRAID_SEED", default_value_t = 0)]
    seed: u64,
    /// Report destination; only the summary line is printed otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Omit the timestamp so that reports compare byte for byte.
    #[arg(long)]
    no_timestamp: bool,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug, Clone)]
struct ChainArgs {
    #[arg(short = 'N', long = "sites", default_value_t = 2)]
    sites: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum DisplayArg {
    Printed,
    Corrected,
}

/// Exit code 1: a check ran and failed. Exit code 2: bad input.
enum Failure {
    Checked(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Guard(_) | Error::Unsupported(_) => Failure::Usage(e.to_string()),
            _ => Failure::Checked(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

const MAX_SITES: usize = 6;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    command: &'a str,
    model: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
    pass: bool,
    result: T,
}

struct Loaded {
    name: String,
    model: ModelSpec,
    chi: ChiMode,
}

fn load(common: &Common, fallback: Option<&str>) -> std::result::Result<Loaded, Failure> {
    let text = match (&common.model, fallback) {
        (Some(p), _) => std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        (None, Some(s)) => s.to_string(),
        (None, None) => return Err(Failure::Usage("--model is required".into())),
    };
    let mut cfg: ModelConfig = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("model config: {e}")))?;
    if let Some(g) = common.gamma {
        cfg.gamma = quadbraid::models::ConfigNumber::Real(g);
    }
    if let Some(x) = common.xi {
        cfg.xi = quadbraid::models::ConfigNumber::Real(x);
    }
    let model = ModelSpec::from_config(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Loaded { name: cfg.name.clone(), model, chi: cfg.chi })
}

fn chain_of(l: &Loaded, sites: usize) -> std::result::Result<ChainSpec, Failure> {
    if sites > MAX_SITES {
        return Err(Failure::Usage(format!("N = {sites} exceeds the guard {MAX_SITES}")));
    }
    ChainSpec::new(l.model.clone(), sites, l.chi).map_err(|e| Failure::Usage(e.to_string()))
}

fn execution(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn fd(common: &Common, tolerance: f64) -> FdOptions {
    FdOptions { step: common.fd_step, tolerance, ..FdOptions::default() }
}

/// Seeded admissible λ samples.
fn lambdas(model: &ModelSpec, seed: u64, count: usize) -> Vec<Vec<C64>> {
    (0..count as u64)
        .filter_map(|i| {
            let mut s = Sampler::new(seed, "cli/lambda", i);
            s.point(0, model.n, |_, l| model.admissible(&[C64::new(0.0, 0.0)], l)).map(|p| p.1)
        })
        .collect()
}

fn write_report<T: Serialize>(common: &Common, command: &str, model: &str, pass: bool, result: T) -> Outcome {
    let Some(path) = &common.output else { return Ok(()) };
    let generated_at = if common.no_timestamp {
        None
    } else {
        Some(SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
    };
    let env = Envelope { schema: 1, command, model, seed: common.seed, generated_at, pass, result };
    let text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Usage(e.to_string()))? + "\n";
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn json_only(common: &Common) -> Outcome {
    if common.format == Format::Csv {
        return Err(Failure::Usage("csv output is available for `spectrum` only".into()));
    }
    Ok(())
}

fn verdict(pass: bool, line: String) -> Outcome {
    println!("{line}");
    if pass {
        Ok(())
    } else {
        Err(Failure::Checked(String::new()))
    }
}

fn cmd_verify(common: &Common, perturb: Option<f64>, samples: usize) -> Outcome {
    json_only(common)?;
    let mut l = load(common, None)?;
    if let Some(eps) = perturb {
        l.model = l.model.perturbed(eps);
    }
    let opts = VerifyOptions {
        tolerance: common.tolerance.unwrap_or(1e-9),
        samples,
        seed: common.seed,
        execution: execution(common),
        ..VerifyOptions::default()
    };
    let reports: Vec<VerificationReport> = verifier::standard_suite(&l.model, &opts);
    let passed = reports.iter().filter(|r| r.pass).count();
    let pass = passed == reports.len();
    write_report(common, "verify", &l.name, pass, &reports)?;
    let worst = reports.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    verdict(pass, format!("verify {}: {passed}/{} identities pass, max residual {worst:.3e}", l.model.name, reports.len()))
}

fn cmd_commute(common: &Common, chain: &ChainArgs, grid: usize) -> Outcome {
    json_only(common)?;
    let l = load(common, None)?;
    let ch = chain_of(&l, chain.sites)?;
    let (us, vs, lams) = chains::seeded_grid(&ch, common.seed, grid);
    let report: CommutationReport = chains::commutation_scan(&ch, &us, &vs, &lams, execution(common))?;
    let tol = common.tolerance.unwrap_or(1e-8);
    let pass = report.points > 0 && report.max_residual < tol;
    write_report(common, "commute", &l.name, pass, &report)?;
    verdict(
        pass,
        format!("commute {} N={}: max residual {:.3e} over {} points ({} skipped)", l.name, ch.sites, report.max_residual, report.points, report.skipped),
    )
}

fn cmd_hamiltonian(common: &Common, chain: &ChainArgs, count: usize, display: DisplayArg) -> Outcome {
    json_only(common)?;
    let l = load(common, None)?;
    let ch = chain_of(&l, chain.sites)?;
    let tol = common.tolerance.unwrap_or(1e-6);
    let fd = fd(common, tol);
    let display = match display {
        DisplayArg::Printed => Display::Printed,
        DisplayArg::Corrected => Display::Corrected,
    };
    let lams = lambdas(&l.model, common.seed, count.max(1));
    let reports: Vec<HamiltonianReport> = quadbraid::par::map(&lams, execution(common), |lam| {
        hamiltonians::hamiltonian_report(&ch, lam, &fd, display)
    })
    .into_iter()
    .collect::<quadbraid::Result<_>>()?;
    let worst = reports.iter().map(|r| r.residual).fold(0.0, f64::max);
    let local = reports.iter().all(|r| r.locality_pass);
    let pass = !reports.is_empty() && worst < tol && local;
    write_report(common, "hamiltonian", &l.name, pass, &reports)?;
    let window = reports.iter().flat_map(|r| r.terms.iter().map(|t| t.locality.window.len())).max().unwrap_or(0);
    verdict(
        pass,
        format!("hamiltonian {} N={}: residual {worst:.3e}, locality {}, max window {window}", l.name, ch.sites, if local { "pass" } else { "fail" }),
    )
}

#[derive(Serialize)]
struct SpectrumAt {
    lambda: Vec<[f64; 2]>,
    probe_v: [f64; 2],
    commutator_probe: f64,
    eigenvalues: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct SpectrumRow {
    re: f64,
    im: f64,
    index: usize,
    lambda1_re: f64,
    lambda1_im: f64,
    lambda2_re: f64,
    lambda2_im: f64,
}

fn cmd_spectrum(common: &Common, chain: &ChainArgs, count: usize) -> Outcome {
    let l = load(common, None)?;
    let ch = chain_of(&l, chain.sites)?;
    let tol = common.tolerance.unwrap_or(1e-7);
    let fd = fd(common, 1e-6);
    let lams = lambdas(&l.model, common.seed, count.max(1));
    let v = Sampler::new(common.seed, "cli/probe", 0)
        .point(1, 0, |u, _| lams.iter().all(|lam| l.model.admissible(u, lam)))
        .map(|p| p.0[0])
        .ok_or_else(|| Failure::Checked("no admissible probe v".into()))?;
    let out: Vec<SpectrumAt> = quadbraid::par::map(&lams, execution(common), |lam| -> quadbraid::Result<SpectrumAt> {
        let h = hamiltonians::log_derivative_at(&ch, lam, &fd)?.left;
        let ev = hamiltonians::eigenvalues(&h)?;
        Ok(SpectrumAt {
            lambda: lam.iter().map(|z| [z.re, z.im]).collect(),
            probe_v: [v.re, v.im],
            commutator_probe: hamiltonians::commutator_probe(&ch, v, lam, &fd)?,
            eigenvalues: ev.iter().map(|z| [z.re, z.im]).collect(),
        })
    })
    .into_iter()
    .collect::<quadbraid::Result<_>>()?;
    let worst = out.iter().map(|s| s.commutator_probe).fold(0.0, f64::max);
    let pass = !out.is_empty() && worst < tol;
    match common.format {
        Format::Json => write_report(common, "spectrum", &l.name, pass, &out)?,
        Format::Csv => {
            if let Some(path) = &common.output {
                let mut w = csv::Writer::from_writer(Vec::new());
                for s in &out {
                    let at = |k: usize| s.lambda.get(k).copied().unwrap_or([0.0, 0.0]);
                    for (index, e) in s.eigenvalues.iter().enumerate() {
                        let row = SpectrumRow {
                            re: e[0],
                            im: e[1],
                            index,
                            lambda1_re: at(0)[0],
                            lambda1_im: at(0)[1],
                            lambda2_re: at(1)[0],
                            lambda2_im: at(1)[1],
                        };
                        w.serialize(row).map_err(|e| Failure::Usage(e.to_string()))?;
                    }
                }
                let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
                write_file(path, &String::from_utf8_lossy(&bytes))?;
            }
        }
    }
    let dim = out.first().map(|s| s.eigenvalues.len()).unwrap_or(0);
    verdict(pass, format!("spectrum {} N={}: {dim} eigenvalues at {} λ, [H,t(v)] {worst:.3e}", l.name, ch.sites, out.len()))
}

const GL2_DEFAULT: &str = include_str!("../../../models/gl2.json");

#[derive(Serialize)]
struct ExampleOut {
    lambda: Vec<[f64; 2]>,
    #[serde(flatten)]
    example: Gl2Example,
}

fn cmd_example(common: &Common, sites: usize, count: usize) -> Outcome {
    json_only(common)?;
    let l = load(common, Some(GL2_DEFAULT))?;
    if l.name != "gl2" {
        return Err(Failure::Usage("the example runs on the gl2 model".into()));
    }
    if sites == 0 || sites > MAX_SITES {
        return Err(Failure::Usage(format!("N = {sites} outside 1..={MAX_SITES}")));
    }
    let tol = common.tolerance.unwrap_or(1e-6);
    let fd = fd(common, tol);
    let (gamma, xi) = (l.model.gamma, l.model.xi);
    let lams = lambdas(&l.model, common.seed, count.max(1));
    let out: Vec<ExampleOut> = quadbraid::par::map(&lams, execution(common), |lam| {
        hamiltonians::gl2_example_h(sites, lam, gamma, xi, &fd)
            .map(|example| ExampleOut { lambda: lam.iter().map(|z| [z.re, z.im]).collect(), example })
    })
    .into_iter()
    .collect::<quadbraid::Result<_>>()?;
    let max = |f: &dyn Fn(&Gl2Example) -> f64| out.iter().map(|o| f(&o.example)).fold(0.0, f64::max);
    let bulk = max(&|e| e.bulk_residual);
    let boundary = max(&|e| e.boundary_residual);
    let printed = max(&|e| e.boundary_residual_printed);
    let pass = !out.is_empty() && bulk < tol && boundary < tol;
    write_report(common, "example", &l.name, pass, &out)?;
    verdict(
        pass,
        format!("example gl2 N={sites}: bulk residual {bulk:.3e}, boundary residual {boundary:.3e} (printed f,g: {printed:.3e})"),
    )
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Verify { common, perturb, samples } => cmd_verify(&common, perturb, samples),
        Command::Commute { common, chain, grid } => cmd_commute(&common, &chain, grid),
        Command::Hamiltonian { common, chain, lambda_samples, display } => {
            cmd_hamiltonian(&common, &chain, lambda_samples, display)
        }
        Command::Spectrum { common, chain, lambda_samples } => cmd_spectrum(&common, &chain, lambda_samples),
        Command::Example { common, sites, lambda_samples } => cmd_example(&common, sites, lambda_samples),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checked(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
