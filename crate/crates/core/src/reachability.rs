//! Reachable-space computation: the subspace of states reachable under any
//! finite scheduler (type I, a subspace of the state space) and the tighter
//! operator-space over-approximation built from pure reachable states of
//! the operator-level program (type II), with provenance tracking of pure
//! reachable generators and the finite schedulers that produce them.

use crate::error::{Error, Result};
use crate::model::{QuantumMDP, Scheduler};
use crate::numerics::{
    CMat, DensityOp, HermitianOp, OperatorSpace, OrthoBasis, StateVector,
    Subspace, Tolerances, C64,
};

/// A pure reachable state together with a finite scheduler reaching it:
/// the vector lies in the support of F_word(ρ₀).
#[derive(Debug, Clone)]
pub struct ReachGenerator {
    pub vector: StateVector,
    pub word: Scheduler,
}

/// The least fixedpoint of the ascending support chain, with the chain
/// itself, the generators discovered along the way and the step at which
/// the chain stabilized.
#[derive(Debug, Clone)]
pub struct ReachSpaceI {
    pub space: Subspace,
    pub generators: Vec<ReachGenerator>,
    /// The ascending chain S_0 ⊆ S_1 ⊆ ... (S_0 = supp ρ₀).
    pub chain: Vec<Subspace>,
    /// Least index ℓ with S_ℓ equal to the fixedpoint; ≤ d−1.
    pub chain_depth: usize,
}

impl ReachSpaceI {
    pub fn chain_dims(&self) -> Vec<usize> {
        self.chain.iter().map(|s| s.rank()).collect()
    }
}

/// Pure reachable basis of the operator-level program: the outer products
/// of `pure_basis` are linearly independent and span the type II space.
#[derive(Debug, Clone)]
pub struct ReachSpaceII {
    pub pure_basis: Vec<ReachGenerator>,
    pub op_space: OperatorSpace,
    /// Least chain index at which the operator chain stabilized; ≤ d²−1.
    pub chain_depth: usize,
}

/// Computes the type I reachable space from `rho0`.
///
/// The subspace chain is driven by the guarded Kraus images; the fixedpoint
/// agrees with the average program's chain since both expand by the same
/// spans. Generator provenance records the raw per-action Kraus images
/// E_{j,k}·M_true·|ψ⟩ of earlier generators, one generator per dimension
/// increment, so that every basis direction comes with a concrete finite
/// scheduler.
pub fn reachable_space_i(m: &QuantumMDP, rho0: &DensityOp, tol: &Tolerances) -> Result<ReachSpaceI> {
    if rho0.trace() <= tol.rank_tol {
        return Err(Error::precondition("reachability from a zero-trace input"));
    }
    let d = m.dim();
    let mut basis = OrthoBasis::new(d);
    let mut generators: Vec<ReachGenerator> = Vec::new();
    for (_, v) in rho0.eigenstates(tol) {
        if basis.try_add(v.amplitudes(), tol).is_some() {
            generators.push(ReachGenerator {
                vector: v,
                word: Scheduler::empty(),
            });
        }
    }
    let mut chain = vec![snapshot(&basis)];
    let mut frontier: Vec<usize> = (0..generators.len()).collect();
    let mut depth = 0;
    // The chain strictly ascends until its fixedpoint, reached within d−1
    // steps from a nonnull start.
    for step in 1..=d {
        if frontier.is_empty() || basis.len() == d {
            break;
        }
        let mut next_frontier = Vec::new();
        for &gi in &frontier {
            let src = generators[gi].clone();
            for (j, action) in m.actions().iter().enumerate() {
                for kraus in m.guarded_kraus(j) {
                    let img = src.vector.apply(&kraus);
                    if img.norm() <= tol.rank_tol {
                        continue;
                    }
                    let unit = img.normalized(tol)?;
                    if basis.try_add(unit.amplitudes(), tol).is_some() {
                        let mut word = src.word.clone();
                        word.push(action.clone());
                        generators.push(ReachGenerator { vector: unit, word });
                        next_frontier.push(generators.len() - 1);
                    }
                }
            }
        }
        if next_frontier.is_empty() {
            break;
        }
        depth = step;
        chain.push(snapshot(&basis));
        frontier = next_frontier;
    }
    Ok(ReachSpaceI {
        space: snapshot(&basis),
        generators,
        chain,
        chain_depth: depth,
    })
}

fn snapshot(b: &OrthoBasis) -> Subspace {
    b.clone().into_subspace()
}

/// Computes the type II reachable space from a pure input state.
///
/// The frontier expands under the operator-level guarded maps
/// F_{j,k} = E_{j,k}·M_true; a new pure state joins the basis exactly when
/// its outer product is linearly independent of the operator space built
/// so far. Stabilizes within d²−1 chain steps.
pub fn reachable_space_ii(
    m: &QuantumMDP,
    psi0: &StateVector,
    tol: &Tolerances,
) -> Result<ReachSpaceII> {
    if !psi0.is_normalized(tol) {
        return Err(Error::precondition(format!(
            "type II reachability requires a normalized pure input, norm = {}",
            psi0.norm()
        )));
    }
    let d = m.dim();
    let ops: Vec<(String, CMat)> = m
        .operator_level()
        .into_iter()
        .map(|(name, e)| (name, e * m.measurement().m_true()))
        .collect();
    let seed = psi0.normalized(tol)?;
    let mut op_space = OperatorSpace::empty(d);
    op_space.try_add(HermitianOp::from_trusted(seed.outer()), tol);
    let mut basis = vec![ReachGenerator {
        vector: seed,
        word: Scheduler::empty(),
    }];
    let mut frontier: Vec<usize> = vec![0];
    let mut depth = 0;
    for step in 1..=(d * d) {
        if frontier.is_empty() || basis.len() == d * d {
            break;
        }
        let mut next_frontier = Vec::new();
        for &bi in &frontier {
            let src = basis[bi].clone();
            for (name, f) in &ops {
                let img = src.vector.apply(f);
                if img.norm() <= tol.rank_tol {
                    continue;
                }
                let unit = img.normalized(tol)?;
                if op_space.try_add(HermitianOp::from_trusted(unit.outer()), tol) {
                    let mut word = src.word.clone();
                    word.push(name.clone());
                    basis.push(ReachGenerator { vector: unit, word });
                    next_frontier.push(basis.len() - 1);
                }
            }
        }
        if next_frontier.is_empty() {
            break;
        }
        depth = step;
        frontier = next_frontier;
    }
    Ok(ReachSpaceII {
        pure_basis: basis,
        op_space,
        chain_depth: depth,
    })
}

/// Expresses a member of the reachable space over the recorded generators.
///
/// Generators are scanned in discovery order and an independent subset is
/// kept by first-come pivoting; the least-squares coefficients over that
/// subset are returned with near-zero entries dropped. Any independent
/// expressing subset is acceptable for the downstream candidate checks.
pub fn express_in_generators(
    v: &StateVector,
    r: &ReachSpaceI,
    tol: &Tolerances,
) -> Result<Vec<(C64, ReachGenerator)>> {
    if !r.space.contains_vec(v, tol) {
        return Err(Error::precondition(
            "vector lies outside the reachable space",
        ));
    }
    let mut pivot = OrthoBasis::new(v.dim());
    let mut kept: Vec<&ReachGenerator> = Vec::new();
    for g in &r.generators {
        if pivot.try_add(g.vector.amplitudes(), tol).is_some() {
            kept.push(g);
        }
    }
    if kept.is_empty() {
        return Err(Error::inconsistency("reachable space has no generators"));
    }
    let d = v.dim();
    let a = CMat::from_fn(d, kept.len(), |i, j| kept[j].vector.amplitudes()[i]);
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(v.amplitudes(), tol.rank_tol)
        .map_err(Error::inconsistency)?;
    let recon = &a * &x;
    let err = (recon - v.amplitudes()).norm();
    if err > tol.rank_tol {
        return Err(Error::inconsistency(format!(
            "generator expansion leaves residual {err:.3e}"
        )));
    }
    Ok(kept
        .into_iter()
        .zip(x.iter())
        .filter(|(_, c)| c.norm() > tol.rank_tol)
        .map(|(g, c)| (*c, g.clone()))
        .collect())
}
