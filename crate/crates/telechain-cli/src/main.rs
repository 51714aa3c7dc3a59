use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use telechain::bounds::check_bounds;
use telechain::builtins;
use telechain::exec::{self, ExecPolicy};
use telechain::protocol::{canonicalize, Protocol};
use telechain::stringorder::{certify_spt, CertifyOptions, SopBackend};
use telechain::verifier::{verify_state_transfer, Backend, Mode, VerifyOptions, DEFAULT_SHOTS, DEFAULT_TOLERANCE};
use telechain::Error;

#[derive(Parser)]
#[command(name = "telechain", version, about = "Verify and certify measurement-and-feedback teleportation protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a builtin protocol document.
    Gen(Source),
    /// Parse a protocol and list standard-form violations.
    Validate(Source),
    /// Print the canonical (unitaries, measurements, recoveries) form.
    Canonicalize(Source),
    /// Check state transfer on the input battery.
    Verify(Run),
    /// Evaluate the locality bounds.
    Bounds(Source),
    /// Build the string-order certificate.
    StringOrder(Run),
    /// Verification, bounds and certificate in one document.
    Report(Run),
}

#[derive(Args, Clone)]
struct Source {
    /// Protocol document (JSON).
    path: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Family>,
    /// Chain length (cluster_x), or 3R+1 for cluster_y.
    #[arg(long)]
    n: Option<usize>,
    /// Number of measurement regions.
    #[arg(long)]
    r: Option<usize>,
    /// Number of logical qubits.
    #[arg(long)]
    k: Option<usize>,
    /// Tetrahedron pairs of the hypergraph chain.
    #[arg(long)]
    tets: Option<usize>,
    /// Write the output document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Run {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value_t = BackendArg::Auto)]
    backend: BackendArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Run trajectories on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    ClusterX,
    ClusterY,
    Hypergraph,
    KfoldCluster,
    ValenceBond,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Auto,
    Statevector,
    Stabilizer,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Auto,
    Enumerate,
    Sample,
    Heisenberg,
}

fn need(v: Option<usize>, flag: &str, family: &str) -> Result<usize, Error> {
    v.ok_or_else(|| Error::Usage(format!("--builtin {family} needs --{flag}")))
}

fn load(src: &Source) -> Result<Protocol, Error> {
    match (&src.path, src.builtin) {
        (Some(_), Some(_)) => Err(Error::Usage("give either a protocol path or --builtin, not both".into())),
        (None, None) => Err(Error::Usage("missing protocol: give a path or --builtin".into())),
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
            Protocol::from_json_str(&text)
        }
        (None, Some(f)) => match f {
            Family::ClusterX => builtins::cluster_x(need(src.n, "n", "cluster_x")?),
            Family::ClusterY => {
                let r = match (src.r, src.n) {
                    (Some(r), _) => r,
                    (None, Some(n)) if n >= 4 && (n - 1) % 3 == 0 => (n - 1) / 3,
                    (None, Some(n)) => return Err(Error::Usage(format!("cluster_y needs N = 3R + 1, got {n}"))),
                    (None, None) => return Err(Error::Usage("--builtin cluster_y needs --r or --n".into())),
                };
                builtins::cluster_y(r)
            }
            Family::Hypergraph => builtins::hypergraph(need(src.tets, "tets", "hypergraph")?),
            Family::KfoldCluster => {
                builtins::kfold_cluster(need(src.k, "k", "kfold_cluster")?, need(src.r, "r", "kfold_cluster")?)
            }
            Family::ValenceBond => {
                builtins::valence_bond(need(src.k, "k", "valence_bond")?, need(src.r, "r", "valence_bond")?)
            }
        },
    }
}

fn emit(src: &Source, text: &str) -> Result<(), Error> {
    match &src.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(src: &Source, v: &Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(v).expect("report values serialize");
    text.push('\n');
    emit(src, &text)
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

impl Run {
    fn config(&self) -> Value {
        let backend = match self.backend {
            BackendArg::Auto => "auto",
            BackendArg::Statevector => "statevector",
            BackendArg::Stabilizer => "stabilizer",
        };
        let mode = match self.mode {
            ModeArg::Auto => "auto",
            ModeArg::Enumerate => "enumerate",
            ModeArg::Sample => "sample",
            ModeArg::Heisenberg => "heisenberg",
        };
        json!({"backend": backend, "mode": mode, "shots": self.shots, "seed": self.seed, "tolerance": self.tol})
    }

    fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            mode: match self.mode {
                ModeArg::Auto => Mode::Auto,
                ModeArg::Enumerate => Mode::Enumerate,
                ModeArg::Sample => Mode::Sample { shots: self.shots, seed: self.seed },
                ModeArg::Heisenberg => Mode::Heisenberg,
            },
            backend: match self.backend {
                BackendArg::Auto => Backend::Auto,
                BackendArg::Statevector => Backend::Statevector,
                BackendArg::Stabilizer => Backend::Stabilizer,
            },
            tolerance: self.tol,
            shots: self.shots,
            seed: self.seed,
            policy: if self.sequential { ExecPolicy::Sequential } else { ExecPolicy::default() },
        }
    }

    fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            backend: match self.backend {
                BackendArg::Auto => SopBackend::Auto,
                BackendArg::Statevector => SopBackend::Statevector,
                BackendArg::Stabilizer => SopBackend::Stabilizer,
            },
            tolerance: self.tol,
        }
    }

    fn setup(&self) {
        if let Some(n) = self.threads {
            exec::set_threads(n);
        }
    }
}

/// Exit status: 0 pass, 1 check failed.
fn status(pass: bool) -> u8 {
    u8::from(!pass)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Gen(src) => {
            let p = load(&src)?;
            emit(&src, &p.to_json_string())?;
            Ok(0)
        }
        Command::Validate(src) => {
            let p = load(&src)?;
            let v = p.validate_standard();
            for x in &v {
                eprintln!("{x}");
            }
            let dv = p.depth_velocity();
            let mut doc = json!({
                "protocol": p.name,
                "num_sites": p.num_sites,
                "num_measurements": p.num_measurements(),
                "clifford": p.is_clifford(),
                "T": dv.t,
                "v": dv.v,
                "violations": to_value(&v),
                "pass": v.is_empty(),
            });
            if let Some(w) = dv.warning {
                doc["warning"] = json!(w);
            }
            emit_json(&src, &doc)?;
            Ok(status(v.is_empty()))
        }
        Command::Canonicalize(src) => {
            let c = canonicalize(&load(&src)?)?;
            emit_json(&src, &c.to_json())?;
            Ok(0)
        }
        Command::Verify(run) => {
            run.setup();
            let p = load(&run.source)?;
            let r = verify_state_transfer(&p, run.verify_options())?;
            eprintln!(
                "{}: verify {} ({}, {}, min fidelity {})",
                r.protocol,
                if r.pass { "pass" } else { "FAIL" },
                r.mode,
                r.backend,
                r.min_fidelity
            );
            for f in &r.failures {
                eprintln!("  {f}");
            }
            for v in &r.violations {
                eprintln!("  {v}");
            }
            emit_json(&run.source, &json!({"config": run.config(), "verification": to_value(&r)}))?;
            Ok(status(r.pass))
        }
        Command::Bounds(src) => {
            let b = check_bounds(&load(&src)?)?;
            for c in b.bounds.iter().filter(|c| !c.pass) {
                eprintln!("{}: {} bound fails ({}) {}", b.protocol, c.name, c.formula, c.note);
            }
            emit_json(&src, &to_value(&b))?;
            Ok(status(b.pass))
        }
        Command::StringOrder(run) => {
            run.setup();
            let p = load(&run.source)?;
            let cert = certify_spt(&p, run.certify_options())?;
            for e in &cert.end_to_end {
                eprintln!("{} slot {} {}: {} -> {}", cert.protocol, e.slot, e.axis, e.operator, e.expectation);
            }
            emit_json(&run.source, &json!({"config": run.config(), "certificate": to_value(&cert)}))?;
            Ok(status(cert.pass))
        }
        Command::Report(run) => {
            run.setup();
            let p = load(&run.source)?;
            let ver = verify_state_transfer(&p, run.verify_options());
            let bounds = check_bounds(&p);
            let cert = certify_spt(&p, run.certify_options());
            let part = |pass: Option<bool>, v: Value| (pass.unwrap_or(false), v);
            let (vp, vv) = match &ver {
                Ok(r) => part(Some(r.pass), to_value(r)),
                Err(e) => part(None, json!({"error": e.to_string()})),
            };
            let (bp, bv) = match &bounds {
                Ok(r) => part(Some(r.pass), to_value(r)),
                Err(e) => part(None, json!({"error": e.to_string()})),
            };
            let (cp, cv) = match &cert {
                Ok(r) => part(Some(r.pass), to_value(r)),
                Err(e) => part(None, json!({"error": e.to_string()})),
            };
            let pass = vp && bp && cp;
            eprintln!("{}: verification {vp}, bounds {bp}, certificate {cp}", p.name);
            emit_json(
                &run.source,
                &json!({"protocol": p.name, "config": run.config(), "verification": vv, "bounds": bv, "certificate": cv, "pass": pass}),
            )?;
            Ok(status(pass))
        }
    }
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::ImpossibleOutcome { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
