//! Located program model: locations plus per-location transition
//! super-operators, the small-step semantics over them, and the two
//! conversions between located and flat models.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::ast::{ProgramAst, Stmt};
use crate::model::{Measurement, QuantumMDP, SuperOperator};
use crate::numerics::{max_abs, CMat, DensityOp, Tolerances, ONE_C};

/// Which actions a transition fires under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionSel {
    /// Fires under every action.
    Any,
    /// Fires only when the named action is chosen at the source location.
    Named(String),
}

#[derive(Debug, Clone)]
pub struct LocTransition {
    pub from: usize,
    pub action: ActionSel,
    pub to: usize,
    pub op: SuperOperator,
}

/// A program model with explicit locations. The last location is the end
/// location; termination is observed as probability mass arriving there.
#[derive(Debug, Clone)]
pub struct LocatedQMDP {
    dim: usize,
    n_locs: usize,
    actions: Vec<String>,
    transitions: Vec<LocTransition>,
}

impl LocatedQMDP {
    pub fn new(
        dim: usize,
        n_locs: usize,
        actions: Vec<String>,
        transitions: Vec<LocTransition>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if n_locs == 0 {
            return Err(Error::validation("a located model needs at least one location"));
        }
        if actions.is_empty() {
            return Err(Error::validation("a located model needs at least one action"));
        }
        for t in &transitions {
            if t.from >= n_locs || t.to >= n_locs {
                return Err(Error::validation(format!(
                    "transition {}→{} outside the {} locations",
                    t.from, t.to, n_locs
                )));
            }
            if t.op.dim() != dim {
                return Err(Error::validation(format!(
                    "transition operator at location {} has dim {}, expected {dim}",
                    t.from,
                    t.op.dim()
                )));
            }
            if let ActionSel::Named(a) = &t.action {
                if !actions.iter().any(|x| x == a) {
                    return Err(Error::validation(format!("transition uses unknown action {a:?}")));
                }
            }
        }
        let m = LocatedQMDP {
            dim,
            n_locs,
            actions,
            transitions,
        };
        m.validate_trace_preservation(tol)?;
        Ok(m)
    }

    /// Per (location, action), the transition operators must jointly be
    /// trace-preserving.
    fn validate_trace_preservation(&self, tol: &Tolerances) -> Result<()> {
        for loc in 0..self.n_locs {
            for a in &self.actions {
                let mut g = CMat::zeros(self.dim, self.dim);
                let mut any = false;
                for t in self.matching(loc, a) {
                    any = true;
                    for k in t.op.kraus() {
                        g += k.adjoint() * k;
                    }
                }
                if !any {
                    return Err(Error::validation(format!(
                        "location {loc} has no transition under action {a:?}"
                    )));
                }
                let dev = max_abs(&(g - CMat::identity(self.dim, self.dim)));
                if dev > tol.trace_tol {
                    return Err(Error::validation(format!(
                        "transitions at location {loc} under {a:?} are not trace-preserving \
                         (‖ΣE†E − I‖ = {dev:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn matching<'a>(&'a self, loc: usize, action: &'a str) -> impl Iterator<Item = &'a LocTransition> {
        self.transitions.iter().filter(move |t| {
            t.from == loc
                && match &t.action {
                    ActionSel::Any => true,
                    ActionSel::Named(a) => a == action,
                }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn location_count(&self) -> usize {
        self.n_locs
    }

    pub fn end_location(&self) -> usize {
        self.n_locs - 1
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn transitions(&self) -> &[LocTransition] {
        &self.transitions
    }

    /// Locations at which at least two distinct named actions occur.
    pub fn choice_locations(&self) -> Vec<usize> {
        let mut named: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for t in &self.transitions {
            if let ActionSel::Named(a) = &t.action {
                named.entry(t.from).or_default().insert(a);
            }
        }
        named
            .into_iter()
            .filter(|(_, set)| set.len() >= 2)
            .map(|(loc, _)| loc)
            .collect()
    }
}

/// One small step from `(loc, rho)` under `action`: every target location
/// paired with its (possibly sub-normalized) successor state. The output
/// traces sum to the input trace.
pub fn step_located(
    m: &LocatedQMDP,
    loc: usize,
    rho: &DensityOp,
    action: &str,
) -> Result<Vec<(usize, DensityOp)>> {
    if loc >= m.n_locs {
        return Err(Error::validation(format!("unknown location {loc}")));
    }
    if !m.actions.iter().any(|a| a == action) {
        return Err(Error::validation(format!("unknown action {action:?}")));
    }
    Ok(m.matching(loc, action)
        .map(|t| (t.to, DensityOp::partial_from_trusted(t.op.apply_mat(rho.matrix()))))
        .collect())
}

// ---------------------------------------------------------------------------
// Lowering a parsed program to a located model
// ---------------------------------------------------------------------------

/// Embeds an operator acting on the registers `vars` (in the given order)
/// into the full variable space.
fn embed_on_vars(op: &CMat, vars: &[usize], dims: &[usize]) -> CMat {
    let full: usize = dims.iter().product();
    let digits = |mut idx: usize| -> Vec<usize> {
        let mut ds = vec![0; dims.len()];
        for v in (0..dims.len()).rev() {
            ds[v] = idx % dims[v];
            idx /= dims[v];
        }
        ds
    };
    let sub_index = |ds: &[usize]| -> usize {
        let mut idx = 0;
        for &v in vars {
            idx = idx * dims[v] + ds[v];
        }
        idx
    };
    let mut out = CMat::zeros(full, full);
    for i in 0..full {
        let di = digits(i);
        for j in 0..full {
            let dj = digits(j);
            let spectator_match = (0..dims.len()).all(|v| vars.contains(&v) || di[v] == dj[v]);
            if spectator_match {
                out[(i, j)] = op[(sub_index(&di), sub_index(&dj))];
            }
        }
    }
    out
}

fn count_stmts(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Choice { branches } => 1 + branches.iter().map(|b| count_stmts(b)).sum::<usize>(),
            Stmt::If { body, .. } | Stmt::While { body, .. } => 1 + count_stmts(body),
            _ => 1,
        })
        .sum()
}

struct Lowering<'a> {
    ast: &'a ProgramAst,
    dims: Vec<usize>,
    full: usize,
    n_actions: usize,
    next_loc: usize,
    transitions: Vec<LocTransition>,
}

impl<'a> Lowering<'a> {
    fn identity_op(&self) -> SuperOperator {
        SuperOperator::unclassified(vec![CMat::identity(self.full, self.full)]).unwrap()
    }

    /// Emits transitions for a statement sequence entered at `entry`,
    /// leaving towards `exit`. Returns nothing; locations are consumed from
    /// `next_loc` in source order.
    fn lower_seq(&mut self, stmts: &[Stmt], exit: usize) -> Result<()> {
        // Pre-assign one location per statement so successors are known.
        let locs: Vec<usize> = stmts
            .iter()
            .map(|s| {
                let l = self.next_loc;
                self.next_loc += count_stmts(std::slice::from_ref(s));
                l
            })
            .collect();
        for (i, stmt) in stmts.iter().enumerate() {
            let loc = locs[i];
            let succ = if i + 1 < stmts.len() { locs[i + 1] } else { exit };
            self.lower_stmt(stmt, loc, succ)?;
        }
        Ok(())
    }

    fn lower_stmt(&mut self, stmt: &Stmt, loc: usize, succ: usize) -> Result<()> {
        match stmt {
            Stmt::Init { var } => {
                let v = self.ast.bindings.var_index(var).unwrap();
                let k = self.dims[v];
                // Kraus family |0⟩⟨j| on the initialized variable.
                let kraus: Vec<CMat> = (0..k)
                    .map(|j| {
                        let mut m = CMat::zeros(k, k);
                        m[(0, j)] = ONE_C;
                        embed_on_vars(&m, &[v], &self.dims)
                    })
                    .collect();
                self.transitions.push(LocTransition {
                    from: loc,
                    action: ActionSel::Any,
                    to: succ,
                    op: SuperOperator::unclassified(kraus)?,
                });
            }
            Stmt::Unitary { vars, name } => {
                let idx: Vec<usize> = vars
                    .iter()
                    .map(|v| self.ast.bindings.var_index(v).unwrap())
                    .collect();
                let u = &self.ast.bindings.unitaries[name];
                let embedded = embed_on_vars(u, &idx, &self.dims);
                self.transitions.push(LocTransition {
                    from: loc,
                    action: ActionSel::Any,
                    to: succ,
                    op: SuperOperator::unclassified(vec![embedded])?,
                });
            }
            Stmt::Choice { branches } => {
                // The branch bodies occupy the locations right after `loc`.
                // Global actions beyond this choice's branch count are
                // clamped to the last branch so that every (location,
                // action) pair has a transition.
                let mut entries = Vec::with_capacity(branches.len());
                let mut entry = loc + 1;
                for branch in branches {
                    entries.push(if branch.is_empty() { succ } else { entry });
                    entry += count_stmts(branch);
                }
                for j in 0..self.n_actions {
                    let b = j.min(branches.len() - 1);
                    self.transitions.push(LocTransition {
                        from: loc,
                        action: ActionSel::Named(format!("a{}", j + 1)),
                        to: entries[b],
                        op: self.identity_op(),
                    });
                }
                let saved = self.next_loc;
                let mut cursor = loc + 1;
                for branch in branches {
                    if !branch.is_empty() {
                        self.next_loc = cursor;
                        self.lower_seq(branch, succ)?;
                    }
                    cursor += count_stmts(branch);
                }
                self.next_loc = saved;
            }
            Stmt::If { meas, body } | Stmt::While { meas, body } => {
                let is_while = matches!(stmt, Stmt::While { .. });
                let (mt, mf) = self.ast.bindings.measurements[meas].clone();
                let body_exit = if is_while { loc } else { succ };
                let body_entry = if body.is_empty() { body_exit } else { loc + 1 };
                self.transitions.push(LocTransition {
                    from: loc,
                    action: ActionSel::Any,
                    to: body_entry,
                    op: SuperOperator::unclassified(vec![mt])?,
                });
                self.transitions.push(LocTransition {
                    from: loc,
                    action: ActionSel::Any,
                    to: succ,
                    op: SuperOperator::unclassified(vec![mf])?,
                });
                if !body.is_empty() {
                    let saved = self.next_loc;
                    self.next_loc = loc + 1;
                    self.lower_seq(body, body_exit)?;
                    self.next_loc = saved;
                }
            }
            Stmt::Skip => {
                self.transitions.push(LocTransition {
                    from: loc,
                    action: ActionSel::Any,
                    to: succ,
                    op: self.identity_op(),
                });
            }
        }
        Ok(())
    }
}

/// Lowers a parsed program to its located model. Locations are assigned in
/// source order; the final location is the end location with an identity
/// self-loop.
pub fn compile_to_located(ast: &ProgramAst, tol: &Tolerances) -> Result<LocatedQMDP> {
    let dims: Vec<usize> = ast.bindings.variables.iter().map(|(_, d)| *d).collect();
    let full: usize = dims.iter().product();
    let n_locs = ast.location_count();
    let end = n_locs - 1;
    let mut lowering = Lowering {
        ast,
        dims,
        full,
        n_actions: ast.max_branching(),
        next_loc: 0,
        transitions: vec![],
    };
    lowering.lower_seq(&ast.stmts, end)?;
    let id = lowering.identity_op();
    lowering.transitions.push(LocTransition {
        from: end,
        action: ActionSel::Any,
        to: end,
        op: id,
    });
    let actions: Vec<String> = (1..=ast.max_branching()).map(|j| format!("a{j}")).collect();
    LocatedQMDP::new(full, n_locs, actions, lowering.transitions, tol)
}

// ---------------------------------------------------------------------------
// Located ⇄ flat conversions
// ---------------------------------------------------------------------------

/// Quantizes the location information into an n·d dimensional flat model.
///
/// Each flat action is a tuple assigning one located action per location;
/// its Kraus family is the union over transitions of |to⟩⟨from| ⊗ E.
/// Termination is the projector onto the end location.
///
/// With `lazy`, tuple components are only materialized at locations where
/// at least two distinct actions occur; every other location is fixed to
/// the single action it uses. Without it the action set is the full
/// |ACT|^n tuple space.
pub fn located_to_flat(m: &LocatedQMDP, lazy: bool, tol: &Tolerances) -> Result<QuantumMDP> {
    let n = m.n_locs;
    let d = m.dim;
    let flat_dim = n * d;
    let domain: Vec<usize> = if lazy {
        m.choice_locations()
    } else {
        (0..n).collect()
    };

    let mut assignments: Vec<Vec<&str>> = vec![vec![]];
    for _ in &domain {
        let mut next = Vec::new();
        for partial in &assignments {
            for a in &m.actions {
                let mut p = partial.clone();
                p.push(a.as_str());
                next.push(p);
            }
        }
        assignments = next;
    }

    let embed = |to: usize, from: usize, e: &CMat| -> CMat {
        let mut out = CMat::zeros(flat_dim, flat_dim);
        for r in 0..d {
            for c in 0..d {
                let v = e[(r, c)];
                if v != crate::numerics::ZERO_C {
                    out[(to * d + r, from * d + c)] = v;
                }
            }
        }
        out
    };

    let mut names = Vec::new();
    let mut dynamics = Vec::new();
    for assignment in &assignments {
        let chosen = |loc: usize| -> Option<&str> {
            domain
                .iter()
                .position(|&l| l == loc)
                .map(|i| assignment[i])
        };
        let name = if domain.is_empty() {
            "all".to_string()
        } else {
            domain
                .iter()
                .zip(assignment)
                .map(|(l, a)| format!("l{}:{a}", l + 1))
                .collect::<Vec<_>>()
                .join("|")
        };
        let mut kraus = Vec::new();
        for t in &m.transitions {
            let selected = match &t.action {
                ActionSel::Any => true,
                ActionSel::Named(a) => match chosen(t.from) {
                    Some(pick) => pick == a,
                    // Lazy mode, location with a single named action: fixed.
                    None => true,
                },
            };
            if selected {
                for e in t.op.kraus() {
                    kraus.push(embed(t.to, t.from, e));
                }
            }
        }
        names.push(name);
        dynamics.push(SuperOperator::trace_preserving(kraus, tol)?);
    }

    let mut m_false = CMat::zeros(flat_dim, flat_dim);
    let end = m.end_location();
    for q in 0..d {
        m_false[(end * d + q, end * d + q)] = ONE_C;
    }
    let m_true = CMat::identity(flat_dim, flat_dim) - &m_false;
    QuantumMDP::new(
        names,
        dynamics,
        Measurement::new(m_true, m_false, tol)?,
        tol,
    )
}

/// Wraps a flat model into a two-location model: location 0 self-loops with
/// the guarded dynamics E_j ∘ {M_true} per action, moves to the terminal
/// location 1 under {M_false}, and location 1 self-loops.
pub fn flat_to_located(m: &QuantumMDP, tol: &Tolerances) -> Result<LocatedQMDP> {
    let d = m.dim();
    let mut transitions = vec![LocTransition {
        from: 0,
        action: ActionSel::Any,
        to: 1,
        op: SuperOperator::unclassified(vec![m.measurement().m_false().clone()])?,
    }];
    for (j, a) in m.actions().iter().enumerate() {
        transitions.push(LocTransition {
            from: 0,
            action: ActionSel::Named(a.clone()),
            to: 0,
            op: SuperOperator::unclassified(m.guarded_kraus(j))?,
        });
    }
    transitions.push(LocTransition {
        from: 1,
        action: ActionSel::Any,
        to: 1,
        op: SuperOperator::unclassified(vec![CMat::identity(d, d)])?,
    });
    LocatedQMDP::new(d, 2, m.actions().to_vec(), transitions, tol)
}
