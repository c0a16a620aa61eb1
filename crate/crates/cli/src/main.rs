//! Command-line front door for the termination analyses: loads models or
//! while-language programs, runs the five analyses plus the evolution
//! oracle, and emits machine-readable JSON reports.
//!
//! Exit codes: 0 success, 2 input validation, 3 precondition,
//! 4 negative-verdict-on-request, 5 internal inconsistency.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qterm_core::divergence::compute_divergent;
use qterm_core::error::Error;
use qterm_core::io;
use qterm_core::model::{
    compile_to_located, located_to_flat, parse_program, termination_probability_lasso,
    LassoScheduler, QuantumMDP, Scheduler,
};
use qterm_core::numerics::{DensityOp, StateVector, Tolerances};
use qterm_core::reachability::{reachable_space_i, reachable_space_ii};
use qterm_core::termination::{synth_nontermination_scheduler, SynthOptions, TerminationStatus};
use qterm_core::universal::check_universal_termination;

#[derive(Parser)]
#[command(
    name = "qterm",
    about = "Termination analysis and scheduler synthesis for nondeterministic quantum programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelSource {
    /// Model file (JSON).
    #[arg(long, conflicts_with_all = ["program", "bindings"])]
    model: Option<PathBuf>,
    /// Program source file; requires --bindings. The program is lowered to
    /// its located model and flattened with lazy tuple actions.
    #[arg(long, requires = "bindings")]
    program: Option<PathBuf>,
    /// Operator bindings for --program.
    #[arg(long)]
    bindings: Option<PathBuf>,
    /// Tolerance overrides, e.g. --tolerance rank_tol=1e-6 (repeatable).
    /// Defaults can also come from the QTERM_TOLERANCES environment
    /// variable ("key=value,key=value").
    #[arg(long = "tolerance", value_name = "KEY=VALUE")]
    tolerances: Vec<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pretty-print the report.
    #[arg(long)]
    pretty: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Reachable subspace of the state space from an input state.
    ReachI {
        #[command(flatten)]
        src: ModelSource,
        /// Named state from the model file, or an inline JSON density matrix.
        #[arg(long)]
        state: String,
    },
    /// Operator-space over-approximation from a pure input state.
    ReachII {
        #[command(flatten)]
        src: ModelSource,
        #[arg(long)]
        state: String,
    },
    /// Pure divergent set with certified divergence schedulers.
    Divergent {
        #[command(flatten)]
        src: ModelSource,
    },
    /// Decide termination for an input and synthesize a nontermination
    /// scheduler when possible. Exits 4 when the verdict is Terminating.
    Nonterm {
        #[command(flatten)]
        src: ModelSource,
        #[arg(long)]
        state: String,
    },
    /// Decide universal termination; synthesize a universal loop word or a
    /// counterexample input.
    Universal {
        #[command(flatten)]
        src: ModelSource,
    },
    /// Evolve an input under a finite word or a lasso and tabulate the
    /// accumulated termination probability.
    Simulate {
        #[command(flatten)]
        src: ModelSource,
        #[arg(long)]
        state: String,
        /// Comma-separated finite action word.
        #[arg(long, conflicts_with = "lasso")]
        word: Option<String>,
        /// Lasso "prefix;loop", each a comma-separated word (prefix may be
        /// empty).
        #[arg(long)]
        lasso: Option<String>,
        /// Total number of unrolled steps for --lasso.
        #[arg(long, default_value_t = 120)]
        steps: usize,
    },
    /// Lower a program to its flat model and print it as a model file.
    Compile {
        #[command(flatten)]
        src: ModelSource,
        /// Materialize the full tuple action space instead of only the
        /// nondeterministic choice points.
        #[arg(long)]
        full_actions: bool,
    },
}

fn parse_tolerances(args: &[String]) -> Result<Tolerances, Error> {
    let mut tol = Tolerances::default();
    let mut apply = |spec: &str| -> Result<(), Error> {
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("bad tolerance spec {part:?}")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|e| Error::validation(format!("bad tolerance value {value:?}: {e}")))?;
            match key.trim() {
                "norm_tol" => tol.norm_tol = v,
                "herm_tol" => tol.herm_tol = v,
                "psd_tol" => tol.psd_tol = v,
                "trace_tol" => tol.trace_tol = v,
                "ortho_tol" => tol.ortho_tol = v,
                "rank_tol" => tol.rank_tol = v,
                other => {
                    return Err(Error::validation(format!("unknown tolerance {other:?}")));
                }
            }
        }
        Ok(())
    };
    if let Ok(env) = std::env::var("QTERM_TOLERANCES") {
        apply(&env)?;
    }
    for spec in args {
        apply(spec)?;
    }
    tol.validate()?;
    Ok(tol)
}

struct Loaded {
    model: QuantumMDP,
    states: std::collections::HashMap<String, DensityOp>,
    tol: Tolerances,
}

fn load(src: &ModelSource) -> Result<Loaded, Error> {
    let tol = parse_tolerances(&src.tolerances)?;
    match (&src.model, &src.program) {
        (Some(path), None) => {
            let loaded = io::load_model(path, &tol)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            Ok(Loaded {
                model: loaded.model,
                states: loaded.states,
                tol,
            })
        }
        (None, Some(prog)) => {
            let bindings = io::load_bindings(src.bindings.as_ref().expect("clap enforces"))?;
            let text = std::fs::read_to_string(prog)
                .map_err(|e| Error::validation(format!("cannot read {}: {e}", prog.display())))?;
            let ast = parse_program(&text, &bindings, &tol)?;
            let located = compile_to_located(&ast, &tol)?;
            let flat = located_to_flat(&located, true, &tol)?;
            Ok(Loaded {
                model: flat,
                states: Default::default(),
                tol,
            })
        }
        (None, None) => Err(Error::validation("one of --model or --program is required")),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn resolve_state(loaded: &Loaded, spec: &str) -> Result<DensityOp, Error> {
    if spec.trim_start().starts_with('[') {
        let rows: io::JsonMatrix = serde_json::from_str(spec)
            .map_err(|e| Error::validation(format!("bad inline state: {e}")))?;
        let mat = io::matrix_from_json(&rows)?;
        if mat.nrows() != loaded.model.dim() {
            return Err(Error::validation(format!(
                "inline state has dim {}, model dim is {}",
                mat.nrows(),
                loaded.model.dim()
            )));
        }
        return DensityOp::new(mat, false, &loaded.tol);
    }
    loaded
        .states
        .get(spec)
        .cloned()
        .ok_or_else(|| Error::validation(format!("unknown state {spec:?}")))
}

/// A density input for the pure-state analyses: accepted when rank 1.
fn pure_state_of(rho: &DensityOp, tol: &Tolerances) -> Result<StateVector, Error> {
    let eig = rho.eigenstates(tol);
    if eig.len() != 1 || (eig[0].0 - 1.0).abs() > 1e-6 {
        return Err(Error::precondition(
            "this analysis requires a pure (rank-1) input state",
        ));
    }
    Ok(eig[0].1.clone())
}

fn parse_word(spec: &str) -> Scheduler {
    Scheduler::from_names(
        spec.split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>(),
    )
}

fn parse_lasso(spec: &str) -> Result<LassoScheduler, Error> {
    let (prefix, cycle) = match spec.split_once(';') {
        Some((p, c)) => (parse_word(p), parse_word(c)),
        None => (Scheduler::empty(), parse_word(spec)),
    };
    LassoScheduler::new(prefix, cycle)
}

fn run(cli: Cli) -> Result<(serde_json::Value, &'static str, ModelSource, i32), Error> {
    let (value, name, src, code) = match cli.command {
        Command::ReachI { src, state } => {
            let loaded = load(&src)?;
            let rho = resolve_state(&loaded, &state)?;
            let r = reachable_space_i(&loaded.model, &rho, &loaded.tol)?;
            (report::reach_i(&r), "reach-i", src, 0)
        }
        Command::ReachII { src, state } => {
            let loaded = load(&src)?;
            let rho = resolve_state(&loaded, &state)?;
            let psi = pure_state_of(&rho, &loaded.tol)?;
            let r = reachable_space_ii(&loaded.model, &psi, &loaded.tol)?;
            (report::reach_ii(&r), "reach-ii", src, 0)
        }
        Command::Divergent { src } => {
            let loaded = load(&src)?;
            let r = compute_divergent(&loaded.model, &loaded.tol)?;
            (report::divergent(&r), "divergent", src, 0)
        }
        Command::Nonterm { src, state } => {
            let loaded = load(&src)?;
            let rho = resolve_state(&loaded, &state)?;
            let v = synth_nontermination_scheduler(
                &loaded.model,
                &rho,
                &SynthOptions::default(),
                &loaded.tol,
            )?;
            let code = if v.status == TerminationStatus::Terminating {
                4
            } else {
                0
            };
            (report::nonterm(&v), "nonterm", src, code)
        }
        Command::Universal { src } => {
            let loaded = load(&src)?;
            let v = check_universal_termination(&loaded.model, &loaded.tol)?;
            (report::universal(&v), "universal", src, 0)
        }
        Command::Simulate {
            src,
            state,
            word,
            lasso,
            steps,
        } => {
            let loaded = load(&src)?;
            let rho = resolve_state(&loaded, &state)?;
            let trace = match (&word, &lasso) {
                (Some(w), None) => {
                    let word = parse_word(w).validated(&loaded.model)?;
                    report::simulate_word(&loaded.model, &rho, &word, &loaded.tol)?
                }
                (None, Some(l)) => {
                    let lasso = parse_lasso(l)?;
                    lasso.unroll(steps.max(lasso.prefix().len()))?;
                    let r = termination_probability_lasso(
                        &loaded.model,
                        &rho,
                        &lasso,
                        steps.max(lasso.prefix().len()),
                        &loaded.tol,
                    )?;
                    report::simulate_lasso(&loaded.model, &rho, &lasso, steps, r, &loaded.tol)?
                }
                _ => {
                    return Err(Error::validation(
                        "simulate needs exactly one of --word or --lasso",
                    ))
                }
            };
            (trace, "simulate", src, 0)
        }
        Command::Compile { src, full_actions } => {
            if src.program.is_none() {
                return Err(Error::validation("compile requires --program and --bindings"));
            }
            let tol = parse_tolerances(&src.tolerances)?;
            let bindings = io::load_bindings(src.bindings.as_ref().unwrap())?;
            let prog = src.program.clone().unwrap();
            let text = std::fs::read_to_string(&prog)
                .map_err(|e| Error::validation(format!("cannot read {}: {e}", prog.display())))?;
            let ast = parse_program(&text, &bindings, &tol)?;
            let located = compile_to_located(&ast, &tol)?;
            let flat = located_to_flat(&located, !full_actions, &tol)?;
            let file = io::model_to_file(&flat, &Default::default());
            (
                serde_json::to_value(&file).expect("model serializes"),
                "compile",
                src,
                0,
            )
        }
    };
    Ok((value, name, src, code))
}

fn main() -> ExitCode {
    let started = std::time::Instant::now();
    let cli = Cli::parse();
    match run(cli) {
        Ok((result, name, src, code)) => {
            let tol = parse_tolerances(&src.tolerances).expect("validated earlier");
            let report = serde_json::json!({
                "schema": "qterm/report-v1",
                "command": name,
                "tolerances": tol,
                "elapsed_ms": started.elapsed().as_secs_f64() * 1e3,
                "result": result,
            });
            let text = if src.pretty {
                serde_json::to_string_pretty(&report).expect("report serializes")
            } else {
                serde_json::to_string(&report).expect("report serializes")
            };
            let text = text + "\n";
            match &src.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Validation(_) => 2,
                Error::Precondition(_) => 3,
                Error::Inconsistency(_) => 5,
            };
            ExitCode::from(code)
        }
    }
}
