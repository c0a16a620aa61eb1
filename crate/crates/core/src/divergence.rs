//! Pure divergent set computation.
//!
//! The set of pure states that can keep the whole termination mass at zero
//! forever is derived layer by layer: the layer-i union collects, for every
//! action word of length i, the subspace of states whose trajectory along
//! that word never touches the terminating projector. The unions descend
//! and stabilize within d layers; the stabilized union IS the pure
//! divergent set.
//!
//! Scheduler extraction works forward: on the stabilized family of
//! subspaces, an edge V --α--> W means the one-step image of V under the
//! guarded action α lies inside W. Every family member owns at least one
//! outgoing edge (otherwise part of it would gain termination mass under
//! every action, contradicting stabilization), so a deterministic walk
//! closes a cycle whose action word, repeated forever, certifies
//! divergence of the whole starting space. A single self-edge yields the
//! familiar one-action loop; mutually inverse dynamics genuinely need
//! longer cycles, so loops are words, not single actions.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{termination_probability_lasso, LassoScheduler, QuantumMDP, Scheduler};
use crate::numerics::{CVec, DensityOp, StateVector, Subspace, Tolerances};

/// One node of the derivation: the subspace of pure states that keep the
/// termination mass at zero along `word`.
#[derive(Debug, Clone)]
pub struct DivNode {
    pub word: Scheduler,
    pub space: Subspace,
    /// Children spaces, one per action (present on stabilized leaves and
    /// expanded nodes).
    pub children: Vec<(String, DivNode)>,
    /// Action whose repetition alone keeps this space divergent, when the
    /// certified lasso is a pure single-action loop.
    pub loop_action: Option<String>,
    /// Certified divergence lasso for this node's space (leaves only).
    pub lasso: Option<LassoScheduler>,
}

impl DivNode {
    fn bare(word: Scheduler, space: Subspace) -> Self {
        DivNode {
            word,
            space,
            children: vec![],
            loop_action: None,
            lasso: None,
        }
    }
}

/// Result of the derivation: the stabilized-layer nodes (each carrying a
/// certified divergence lasso), the per-layer dimension profile, and the
/// stabilization depth.
#[derive(Debug, Clone)]
pub struct DivergenceResult {
    pub leaves: Vec<DivNode>,
    pub union_dim_profile: Vec<Vec<usize>>,
    pub depth: usize,
}

impl DivergenceResult {
    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }
}

/// States with no immediate termination mass: the kernel of M_false,
/// equal to the range of M_true.
pub fn pd_zero(m: &QuantumMDP, tol: &Tolerances) -> Subspace {
    let d = m.dim();
    let mf = m.measurement().m_false();
    let rows: Vec<CVec> = (0..d)
        .map(|i| CVec::from_iterator(d, (0..d).map(|j| mf[(i, j)])))
        .collect();
    let basis = crate::numerics::nullspace(&rows, d, tol);
    Subspace::from_orthonormal(d, basis)
}

/// Space of the word α·ς given the space of its suffix ς: all ψ in the
/// root space whose one-step image under F_α stays inside the suffix
/// space. Solved as the homogeneous system ⟨ψ⊥|F_k|ψ⟩ = 0 over ψ
/// parameterized in the root space, with ψ⊥ ranging over an orthonormal
/// basis of the suffix space's orthocomplement and F_k over the guarded
/// Kraus operators of α.
pub fn derive_child(
    m: &QuantumMDP,
    first_action: &str,
    suffix_space: &Subspace,
    pd0: &Subspace,
    tol: &Tolerances,
) -> Result<Subspace> {
    let d = m.dim();
    let aidx = m.action_index(first_action)?;
    if pd0.rank() == 0 {
        return Ok(Subspace::null(d));
    }
    let complement = suffix_space.complement(tol);
    if complement.rank() == 0 {
        // No constraints beyond membership in the root space.
        return Ok(pd0.clone());
    }
    let kraus = m.guarded_kraus(aidx);
    let nvars = pd0.rank();
    let mut rows = Vec::with_capacity(complement.rank() * kraus.len());
    for perp in complement.basis() {
        for f in &kraus {
            // Row entries: ⟨ψ⊥| F |b⟩ over the root-space basis b.
            let bra = f.adjoint() * perp.amplitudes();
            rows.push(CVec::from_iterator(
                nvars,
                pd0.basis().iter().map(|b| bra.dotc(b.amplitudes())),
            ));
        }
    }
    let coords = crate::numerics::nullspace(&rows, nvars, tol);
    let basis: Vec<StateVector> = coords
        .iter()
        .map(|c| {
            let mut v = CVec::zeros(d);
            for (b, coeff) in pd0.basis().iter().zip(c.amplitudes().iter()) {
                v += b.amplitudes() * *coeff;
            }
            StateVector::new(crate::numerics::phase_fix(&v, tol.rank_tol))
        })
        .collect();
    Subspace::from_spanning(d, &basis, tol)
}

/// Memoized word → space table built on the first-action/suffix
/// decomposition: space(α·ς) derives from space(ς).
struct SpaceTable<'a> {
    m: &'a QuantumMDP,
    pd0: Subspace,
    tol: &'a Tolerances,
    memo: HashMap<Vec<String>, Subspace>,
}

impl<'a> SpaceTable<'a> {
    fn space(&mut self, word: &[String]) -> Result<Subspace> {
        if word.is_empty() {
            return Ok(self.pd0.clone());
        }
        if let Some(s) = self.memo.get(word) {
            return Ok(s.clone());
        }
        let suffix = self.space(&word[1..])?;
        let s = derive_child(self.m, &word[0], &suffix, &self.pd0.clone(), self.tol)?;
        self.memo.insert(word.to_vec(), s.clone());
        Ok(s)
    }
}

/// Span of the one-step guarded images of a subspace under one action.
fn forward_image(m: &QuantumMDP, action_idx: usize, space: &Subspace, tol: &Tolerances) -> Subspace {
    let mut vecs = Vec::new();
    for k in m.guarded_kraus(action_idx) {
        for b in space.basis() {
            let img = b.apply(&k);
            if img.norm() > tol.rank_tol {
                vecs.push(StateVector::new(img.amplitudes().clone()));
            }
        }
    }
    Subspace::from_spanning(m.dim(), &vecs, tol).expect("consistent ambient dims")
}

/// Walks the forward-containment graph over the stabilized family from
/// `start`, taking the first action whose image fits into a family member,
/// until a family member repeats; the actions before the repeat form the
/// prefix, the actions around the cycle form the loop.
fn extract_lasso(
    m: &QuantumMDP,
    family: &[Subspace],
    start: usize,
    tol: &Tolerances,
) -> Result<LassoScheduler> {
    let mut visited: Vec<usize> = vec![start];
    let mut actions: Vec<String> = Vec::new();
    loop {
        let cur = *visited.last().unwrap();
        let mut next = None;
        'scan: for (j, action) in m.actions().iter().enumerate() {
            let img = forward_image(m, j, &family[cur], tol);
            for (fi, member) in family.iter().enumerate() {
                if member.contains_subspace(&img, tol) {
                    next = Some((action.clone(), fi));
                    break 'scan;
                }
            }
        }
        let (action, target) = next.ok_or_else(|| {
            Error::inconsistency(
                "a stabilized divergence space has no action keeping it divergent; \
                 tolerances too tight?",
            )
        })?;
        actions.push(action);
        if let Some(pos) = visited.iter().position(|&v| v == target) {
            let prefix = Scheduler::from_names(actions[..pos].to_vec());
            let cycle = Scheduler::from_names(actions[pos..].to_vec());
            return LassoScheduler::new(prefix, cycle);
        }
        visited.push(target);
        if actions.len() > family.len() + 1 {
            return Err(Error::inconsistency(
                "divergence walk failed to close a cycle over the stabilized family",
            ));
        }
    }
}

/// Derives the pure divergent set.
///
/// Layer i holds every action word of length i with a nonzero space. The
/// derivation stops at the first layer whose union of spaces equals the
/// next layer's (each node space contained in some successor space); that
/// union is the pure divergent set, its nodes become the leaves, and each
/// leaf is certified with a forward-cycle lasso. Unions strictly descend
/// otherwise, so stabilization happens within depth d.
pub fn compute_divergent(m: &QuantumMDP, tol: &Tolerances) -> Result<DivergenceResult> {
    let d = m.dim();
    let root_space = pd_zero(m, tol);
    let mut table = SpaceTable {
        m,
        pd0: root_space.clone(),
        tol,
        memo: HashMap::new(),
    };
    if root_space.rank() == 0 {
        return Ok(DivergenceResult {
            leaves: vec![],
            union_dim_profile: vec![vec![]],
            depth: 0,
        });
    }

    let mut layer = vec![DivNode::bare(Scheduler::empty(), root_space)];
    let mut profile = vec![layer.iter().map(|n| n.space.rank()).collect::<Vec<_>>()];

    for depth in 0..=d {
        // Materialize all children of the current layer.
        let mut next_layer = Vec::new();
        for node in &mut layer {
            for action in m.actions() {
                let mut word = node.word.clone();
                word.push(action.clone());
                let space = table.space(word.word())?;
                if space.rank() > 0 {
                    next_layer.push(DivNode::bare(word.clone(), space.clone()));
                }
                node.children
                    .push((action.clone(), DivNode::bare(word, space)));
            }
        }
        // Descent gives PDS_{i+1} ⊆ PDS_i; equality needs every node space
        // to fit inside a single successor space.
        let stabilized = layer.iter().all(|node| {
            next_layer.iter().any(|c| {
                c.space.rank() >= node.space.rank()
                    && c.space.contains_subspace(&node.space, tol)
            })
        });

        if stabilized {
            // Deduplicate the family by mutual membership; leaves keep
            // their own nodes (equal spaces under different words are
            // distinct nodes, but share family slots for the walk).
            let mut family: Vec<Subspace> = Vec::new();
            let mut slot = Vec::with_capacity(layer.len());
            for node in &layer {
                let idx = family
                    .iter()
                    .position(|f| f.same_space(&node.space, tol))
                    .unwrap_or_else(|| {
                        family.push(node.space.clone());
                        family.len() - 1
                    });
                slot.push(idx);
            }
            let mut leaves = Vec::new();
            for (node, &fi) in layer.iter().zip(&slot) {
                let mut leaf = node.clone();
                let lasso = extract_lasso(m, &family, fi, tol)?;
                if lasso.prefix().is_empty() && lasso.cycle().len() == 1 {
                    leaf.loop_action = Some(lasso.cycle().word()[0].clone());
                }
                leaf.lasso = Some(lasso);
                leaves.push(leaf);
            }
            return Ok(DivergenceResult {
                leaves,
                union_dim_profile: profile,
                depth,
            });
        }

        if next_layer.is_empty() {
            return Ok(DivergenceResult {
                leaves: vec![],
                union_dim_profile: profile,
                depth,
            });
        }
        profile.push(next_layer.iter().map(|n| n.space.rank()).collect());
        layer = next_layer;
    }
    Err(Error::inconsistency(format!(
        "divergence derivation did not stabilize within depth {d}; tolerances too tight?"
    )))
}

/// The certified divergence lasso of a stabilized leaf, validated against
/// the truncation oracle: every basis state of the leaf space must show
/// zero truncated termination probability over 3·d steps.
pub fn divergence_scheduler(
    m: &QuantumMDP,
    node: &DivNode,
    tol: &Tolerances,
) -> Result<LassoScheduler> {
    let lasso = node.lasso.clone().ok_or_else(|| {
        Error::precondition("divergence scheduler requested for an unstabilized node")
    })?;
    let steps = (3 * m.dim()).max(lasso.prefix().len() + lasso.cycle().len());
    for psi in node.space.basis() {
        let rho = DensityOp::pure_state(psi, tol)?;
        let r = termination_probability_lasso(m, &rho, &lasso, steps, tol)?;
        if r.lower_bound > tol.rank_tol {
            return Err(Error::inconsistency(format!(
                "divergence scheduler {lasso} leaks termination mass {:.3e}",
                r.lower_bound
            )));
        }
    }
    Ok(lasso)
}
