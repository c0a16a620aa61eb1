//! JSON rendering of analysis results. Complex scalars are `[re, im]`
//! pairs, matrices row-major, matching the model-file encoding.

use serde_json::{json, Value};

use qterm_core::divergence::{DivNode, DivergenceResult};
use qterm_core::error::Error;
use qterm_core::io::{matrix_to_json, vector_to_json};
use qterm_core::model::{
    LassoScheduler, LassoTp, QuantumMDP, Scheduler,
};
use qterm_core::numerics::{DensityOp, Subspace, Tolerances};
use qterm_core::reachability::{ReachGenerator, ReachSpaceI, ReachSpaceII};
use qterm_core::termination::{TerminationStatus, TerminationVerdict};
use qterm_core::universal::{UniversalStatus, UniversalVerdict};

fn word_json(s: &Scheduler) -> Value {
    json!(s.word())
}

fn lasso_json(l: &LassoScheduler) -> Value {
    json!({
        "prefix": l.prefix().word(),
        "loop": l.cycle().word(),
    })
}

fn subspace_json(s: &Subspace) -> Value {
    json!({
        "dim": s.rank(),
        "basis": s.basis().iter().map(vector_to_json).collect::<Vec<_>>(),
    })
}

fn generator_json(g: &ReachGenerator) -> Value {
    json!({
        "word": g.word.word(),
        "vector": vector_to_json(&g.vector),
    })
}

pub fn reach_i(r: &ReachSpaceI) -> Value {
    json!({
        "space": subspace_json(&r.space),
        "chain_dims": r.chain_dims(),
        "chain_depth": r.chain_depth,
        "generators": r.generators.iter().map(generator_json).collect::<Vec<_>>(),
    })
}

pub fn reach_ii(r: &ReachSpaceII) -> Value {
    json!({
        "op_space_dim": r.op_space.rank(),
        "chain_depth": r.chain_depth,
        "pure_basis": r.pure_basis.iter().map(generator_json).collect::<Vec<_>>(),
    })
}

fn div_node_json(n: &DivNode) -> Value {
    json!({
        "word": n.word.word(),
        "space": subspace_json(&n.space),
        "loop_action": n.loop_action,
        "lasso": n.lasso.as_ref().map(lasso_json),
        "children": n.children.iter().map(|(a, c)| json!({
            "action": a,
            "word": c.word.word(),
            "dim": c.space.rank(),
            "basis": c.space.basis().iter().map(vector_to_json).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

pub fn divergent(r: &DivergenceResult) -> Value {
    json!({
        "empty": r.is_empty(),
        "depth": r.depth,
        "layer_dims": r.union_dim_profile,
        "leaves": r.leaves.iter().map(div_node_json).collect::<Vec<_>>(),
    })
}

fn lasso_tp_json(tp: &LassoTp) -> Value {
    json!({
        "lower_bound": tp.lower_bound,
        "plateau_delta": tp.plateau_delta,
        "steps": tp.steps,
    })
}

pub fn nonterm(v: &TerminationVerdict) -> Value {
    json!({
        "status": match v.status {
            TerminationStatus::Terminating => "terminating",
            TerminationStatus::Nonterminating => "nonterminating",
        },
        "witness": v.witness.as_ref().map(|(w, leaf)| json!({
            "vector": vector_to_json(w),
            "leaf_word": leaf.word.word(),
        })),
        "scheduler": v.scheduler.as_ref().map(lasso_json),
        "certificate": v.certificate.as_ref().map(|g| matrix_to_json(g.matrix())),
        "oracle": v.oracle.as_ref().map(lasso_tp_json),
        "tolerances": serde_json::to_value(&v.tolerances_used).expect("serializes"),
    })
}

pub fn universal(v: &UniversalVerdict) -> Value {
    json!({
        "status": match v.status {
            UniversalStatus::UniversallyTerminating => "universally_terminating",
            UniversalStatus::NotUniversal => "not_universal",
        },
        "invariant_space": v.invariant.space.as_ref().map(subspace_json),
        "stationary_solution": v.invariant.stationary_solution.as_ref()
            .map(|g| matrix_to_json(g.matrix())),
        "verified": v.invariant.verified,
        "counterexample": v.counterexample.as_ref().map(|c| matrix_to_json(c.matrix())),
        "scheduler": v.scheduler.as_ref().map(lasso_json),
        "oracle": v.oracle.as_ref().map(|o| json!({
            "per_input": o.per_input.iter().map(|(name, tp, steps)| json!({
                "input": name, "tp": tp, "steps": steps,
            })).collect::<Vec<_>>(),
            "min_one_pass_gain": o.min_one_pass_gain,
        })),
    })
}

/// Step-by-step accumulated termination probability along a finite word.
pub fn simulate_word(
    m: &QuantumMDP,
    rho: &DensityOp,
    word: &Scheduler,
    tol: &Tolerances,
) -> Result<Value, Error> {
    let mut trace = Vec::with_capacity(word.len() + 1);
    for i in 0..=word.len() {
        let prefix = Scheduler::from_names(word.word()[..i].to_vec());
        let tp = qterm_core::model::termination_probability(m, rho, &prefix, false, tol)?;
        trace.push(json!({"step": i, "tp": tp}));
    }
    Ok(json!({
        "word": word_json(word),
        "trace": trace,
        "final_tp": trace.last().and_then(|v| v.get("tp")).cloned(),
    }))
}

/// Lasso unrolling summary plus a per-loop-pass probability table.
pub fn simulate_lasso(
    m: &QuantumMDP,
    rho: &DensityOp,
    lasso: &LassoScheduler,
    steps: usize,
    summary: LassoTp,
    tol: &Tolerances,
) -> Result<Value, Error> {
    let mut table = Vec::new();
    let period = lasso.cycle().len();
    let mut i = lasso.prefix().len();
    while i <= steps {
        let word = lasso.unroll(i)?;
        let tp = qterm_core::model::termination_probability(m, rho, &word, false, tol)?;
        table.push(json!({"step": i, "tp": tp}));
        if i == steps {
            break;
        }
        i = (i + period).min(steps);
    }
    Ok(json!({
        "lasso": lasso_json(lasso),
        "steps": steps,
        "summary": lasso_tp_json(&summary),
        "trace": table,
    }))
}
