//! Universal termination: detects invariant subspaces of the
//! nontermination region via the stationary equation of the averaged
//! guarded dynamics, and synthesizes a single loop word driving every
//! input state to termination when no invariant space exists.

use crate::error::{Error, Result};
use crate::model::{
    termination_probability, termination_probability_lasso, LassoScheduler, QuantumMDP, Scheduler,
};
use crate::numerics::{
    hermitian_basis, hermitian_vectorize, nullspace_real, subspace_join, support, CMat, DensityOp,
    HermitianOp, RMat, StateVector, Subspace, Tolerances, C64,
};

/// Outcome of the invariant-space search. When `space` is present it is a
/// nonnull subspace of the nontermination region closed under every
/// action's raw dynamics, certified by `stationary_solution` and verified
/// directly against that closure property.
#[derive(Debug, Clone)]
pub struct InvariantSpaceResult {
    pub space: Option<Subspace>,
    pub stationary_solution: Option<HermitianOp>,
    pub verified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum UniversalStatus {
    UniversallyTerminating,
    NotUniversal,
}

/// Per-basis-input oracle numbers for a universal scheduler.
#[derive(Debug, Clone, serde::Serialize)]
pub struct UniversalOracle {
    /// (input label, truncated TP, unrolled steps used)
    pub per_input: Vec<(String, f64, usize)>,
    /// Minimum one-pass termination gain over the basis inputs.
    pub min_one_pass_gain: f64,
}

#[derive(Debug, Clone)]
pub struct UniversalVerdict {
    pub status: UniversalStatus,
    pub invariant: InvariantSpaceResult,
    /// Maximally mixed state on the invariant space, when not universal.
    pub counterexample: Option<DensityOp>,
    pub scheduler: Option<LassoScheduler>,
    pub oracle: Option<UniversalOracle>,
}

/// Searches for an invariant space as the support of a nonzero stationary
/// solution of the averaged guarded map over Hermitian operators on the
/// nontermination region.
///
/// The solution space is orthonormalized and summed; the support of the
/// sum is then verified directly: every Kraus image of every basis vector
/// under every action must stay inside the space. A verification failure
/// is reported as a diagnostic error carrying the residual norms rather
/// than a silent answer.
pub fn invariant_space(m: &QuantumMDP, tol: &Tolerances) -> Result<InvariantSpaceResult> {
    let d = m.dim();
    let region = support(
        &HermitianOp::new(m.measurement().m_true().clone(), tol)?,
        tol,
    );
    let r = region.rank();
    if r == 0 {
        return Ok(InvariantSpaceResult {
            space: None,
            stationary_solution: None,
            verified: false,
        });
    }
    // Averaged guarded Kraus family (1/√m)·E_{j,k}·M_true.
    let w = C64::new(1.0 / (m.actions().len() as f64).sqrt(), 0.0);
    let kraus: Vec<CMat> = m
        .dynamics()
        .iter()
        .flat_map(|e| e.kraus().iter().map(|k| k * m.measurement().m_true() * w))
        .collect();
    let b = CMat::from_fn(d, r, |i, j| region.basis()[j].amplitudes()[i]);
    let local = hermitian_basis(r);
    let columns: Vec<_> = local
        .iter()
        .map(|h| {
            let emb = &b * h.matrix() * b.adjoint();
            let mut img = CMat::zeros(d, d);
            for k in &kraus {
                img += k * &emb * k.adjoint();
            }
            hermitian_vectorize(&HermitianOp::from_trusted(img - emb))
        })
        .collect();
    let sys = RMat::from_fn(d * d, r * r, |i, j| columns[j][i]);
    let sols = nullspace_real(&sys, tol);
    if sols.is_empty() {
        return Ok(InvariantSpaceResult {
            space: None,
            stationary_solution: None,
            verified: false,
        });
    }
    // Sum of the orthonormalized solution basis: a single Hermitian whose
    // support joins the individual supports in the generic case.
    let mut combo = crate::numerics::RVec::zeros(r * r);
    for s in &sols {
        combo += s;
    }
    let mut gamma_mat = CMat::zeros(d, d);
    for (j, h) in local.iter().enumerate() {
        gamma_mat += (&b * h.matrix() * b.adjoint()) * C64::new(combo[j], 0.0);
    }
    let norm = gamma_mat.norm();
    if norm <= tol.rank_tol {
        return Err(Error::inconsistency(
            "stationary solutions cancel to zero; tolerances too tight?",
        ));
    }
    let gamma = HermitianOp::from_trusted(gamma_mat / C64::new(norm, 0.0));
    let space = support(&gamma, tol);
    // Direct verification of the defining closure property with the raw
    // per-action dynamics.
    let mut residuals = Vec::new();
    for (a, e) in m.actions().iter().zip(m.dynamics()) {
        for (ki, k) in e.kraus().iter().enumerate() {
            for (bi, v) in space.basis().iter().enumerate() {
                let img = v.apply(k);
                if img.norm() <= tol.rank_tol {
                    continue;
                }
                let res = space.residual_norm(img.amplitudes()) / img.norm();
                if res > tol.rank_tol {
                    residuals.push(format!("action {a}, operator {ki}, basis {bi}: {res:.3e}"));
                }
            }
        }
    }
    if !residuals.is_empty() {
        return Err(Error::inconsistency(format!(
            "stationary support is not closed under the dynamics: {}",
            residuals.join("; ")
        )));
    }
    Ok(InvariantSpaceResult {
        space: Some(space),
        stationary_solution: Some(gamma),
        verified: true,
    })
}

/// Decides universal termination: an invariant space refutes it (with the
/// maximally mixed state on it as the counterexample input); otherwise a
/// universal loop word is synthesized and validated.
pub fn check_universal_termination(m: &QuantumMDP, tol: &Tolerances) -> Result<UniversalVerdict> {
    let invariant = invariant_space(m, tol)?;
    if let Some(space) = &invariant.space {
        let counterexample = DensityOp::uniform_on(space)?;
        return Ok(UniversalVerdict {
            status: UniversalStatus::NotUniversal,
            invariant,
            counterexample: Some(counterexample),
            scheduler: None,
            oracle: None,
        });
    }
    let (scheduler, oracle) = synth_universal_scheduler(m, tol)?;
    Ok(UniversalVerdict {
        status: UniversalStatus::UniversallyTerminating,
        invariant,
        counterexample: None,
        scheduler: Some(scheduler),
        oracle: Some(oracle),
    })
}

/// Synthesizes a loop word whose infinite repetition terminates every
/// input state, assuming no invariant space exists.
///
/// Starting from the terminating region, the word grows one action at a
/// time: scan actions in order for a nonzero coupling of the untouched
/// region into the current one, take the strongest coupled direction (the
/// top right-singular vector of the stacked couplings), and extend. Each
/// pass must grow the space, otherwise the untouched region would be
/// invariant. The result is validated against the truncation oracle: every
/// computational-basis input must pass 0.99 truncated termination
/// probability within max(40, 120/|word|) unrolled loop passes.
pub fn synth_universal_scheduler(
    m: &QuantumMDP,
    tol: &Tolerances,
) -> Result<(LassoScheduler, UniversalOracle)> {
    let d = m.dim();
    let mf = HermitianOp::new(m.measurement().m_false().clone(), tol)?;
    let mut covered = support(&mf, tol);
    let mut word = Scheduler::empty();
    while covered.rank() < d {
        let complement = covered.complement(tol);
        let proj = covered.projector();
        let mut picked = None;
        for (j, action) in m.actions().iter().enumerate() {
            // Stack P_S · E_k restricted to the complement's coordinates.
            let bc = CMat::from_fn(d, complement.rank(), |i, c| {
                complement.basis()[c].amplitudes()[i]
            });
            let kraus = m.dynamics()[j].kraus();
            let mut stacked = CMat::zeros(d * kraus.len(), complement.rank());
            for (ki, k) in kraus.iter().enumerate() {
                let block = &proj * k * &bc;
                for rr in 0..d {
                    for cc in 0..complement.rank() {
                        stacked[(ki * d + rr, cc)] = block[(rr, cc)];
                    }
                }
            }
            let svd = stacked.svd(false, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            if smax > tol.rank_tol {
                let vt = svd.v_t.expect("requested V^T");
                let top = crate::numerics::CVec::from_iterator(
                    complement.rank(),
                    (0..complement.rank()).map(|c| vt[(0, c)].conj()),
                );
                let psi = StateVector::new(&bc * &top).normalized(tol)?;
                picked = Some((action.clone(), psi));
                break;
            }
        }
        match picked {
            Some((action, psi)) => {
                let line = Subspace::from_spanning(d, &[psi], tol)?;
                covered = subspace_join(&covered, &line, tol)?;
                word.push(action);
            }
            None => {
                return Err(Error::inconsistency(
                    "no action couples the untouched region although no invariant \
                     space was detected",
                ));
            }
        }
    }
    if word.is_empty() {
        // Everything terminates immediately; loop over the first action.
        word.push(m.actions()[0].clone());
    }
    let lasso = LassoScheduler::new(Scheduler::empty(), word)?;
    let oracle = validate_universal(m, &lasso, tol)?;
    Ok((lasso, oracle))
}

fn validate_universal(
    m: &QuantumMDP,
    lasso: &LassoScheduler,
    tol: &Tolerances,
) -> Result<UniversalOracle> {
    let d = m.dim();
    let passes = 40.max(120 / lasso.cycle().len().max(1)).max(120);
    let steps = lasso.pass_budget(passes);
    let one_pass = lasso.cycle().clone();
    let mut per_input = Vec::new();
    let mut min_gain = f64::INFINITY;
    for i in 0..d {
        let psi = StateVector::basis(d, i);
        let rho = DensityOp::pure_state(&psi, tol)?;
        let r = termination_probability_lasso(m, &rho, lasso, steps, tol)?;
        if r.lower_bound < 0.99 {
            return Err(Error::inconsistency(format!(
                "universal scheduler {lasso} leaves basis input {i} at truncated \
                 TP {:.6} after {steps} steps",
                r.lower_bound
            )));
        }
        let gain = termination_probability(m, &rho, &one_pass, true, tol)?;
        min_gain = min_gain.min(gain);
        per_input.push((format!("|{i}⟩"), r.lower_bound, steps));
    }
    if min_gain <= 1e-6 {
        return Err(Error::inconsistency(format!(
            "one loop pass gains only {min_gain:.3e} for some basis input"
        )));
    }
    Ok(UniversalOracle {
        per_input,
        min_one_pass_gain: min_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{Measurement, SuperOperator};
    use crate::numerics::{max_abs, ONE_C};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn modified_loop_has_the_bell_invariant_line() {
        let m = qbf_modified_loop();
        let t = tol();
        let r = invariant_space(&m, &t).unwrap();
        assert!(r.verified);
        let space = r.space.unwrap();
        assert_eq!(space.rank(), 1);
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::new({
            let mut v = crate::numerics::CVec::zeros(4);
            v[0] = C64::new(inv, 0.0);
            v[3] = C64::new(inv, 0.0);
            v
        });
        let fid = 1.0 - space.residual_norm(bell.amplitudes()).powi(2);
        assert!(fid >= 1.0 - 1e-8, "fidelity {fid}");
        // The stationary solution is (up to scale) the projector onto it.
        let gamma = r.stationary_solution.unwrap();
        let expect = bell.outer();
        let scale = gamma.trace();
        assert!(max_abs(&(gamma.matrix() - expect * C64::new(scale, 0.0))) < 1e-8);
    }

    #[test]
    fn original_loop_has_no_invariant_space() {
        let m = qbf_loop();
        let r = invariant_space(&m, &tol()).unwrap();
        assert!(r.space.is_none());
    }

    #[test]
    fn identity_dynamics_with_trivial_guard_keep_everything() {
        let t = tol();
        let e = SuperOperator::trace_preserving(vec![CMat::identity(3, 3)], &t).unwrap();
        let meas = Measurement::new(CMat::identity(3, 3), CMat::zeros(3, 3), &t).unwrap();
        let m = QuantumMDP::new(vec!["a1".into()], vec![e], meas, &t).unwrap();
        let r = invariant_space(&m, &t).unwrap();
        assert_eq!(r.space.unwrap().rank(), 3);
    }

    #[test]
    fn modified_loop_is_not_universally_terminating() {
        let m = qbf_modified_loop();
        let v = check_universal_termination(&m, &tol()).unwrap();
        assert_eq!(v.status, UniversalStatus::NotUniversal);
        let cex = v.counterexample.unwrap();
        assert!((cex.trace() - 1.0).abs() < 1e-10);
        // The counterexample is supported inside the invariant space.
        let supp = support(cex.hermitian(), &tol());
        assert!(v
            .invariant
            .space
            .unwrap()
            .contains_subspace(&supp, &tol()));
        assert!(v.scheduler.is_none());
    }

    #[test]
    fn coin_loop_universal_word_is_the_three_step_cycle() {
        let m = qbf_loop();
        let v = check_universal_termination(&m, &tol()).unwrap();
        assert_eq!(v.status, UniversalStatus::UniversallyTerminating);
        let lasso = v.scheduler.unwrap();
        assert!(lasso.prefix().is_empty());
        assert_eq!(
            lasso.cycle().word(),
            &["a1".to_string(), "a2".to_string(), "a1".to_string()]
        );
        let oracle = v.oracle.unwrap();
        assert!(oracle.per_input.iter().all(|(_, tp, _)| *tp >= 0.99));
        assert!(oracle.min_one_pass_gain > 1e-6);
    }

    #[test]
    fn walk_universal_word_is_the_first_move() {
        let m = nqw();
        let v = check_universal_termination(&m, &tol()).unwrap();
        assert_eq!(v.status, UniversalStatus::UniversallyTerminating);
        let lasso = v.scheduler.unwrap();
        assert!(lasso.prefix().is_empty());
        assert_eq!(lasso.cycle().word(), &["w1".to_string()]);
        let oracle = v.oracle.unwrap();
        assert_eq!(oracle.per_input.len(), 3);
        assert!(oracle.per_input.iter().all(|(_, tp, _)| *tp >= 0.99));
    }

    #[test]
    fn single_action_synthesis_is_bounded_by_the_untouched_dimension() {
        let m = nqw().restrict_to_action(0);
        let t = tol();
        assert!(invariant_space(&m, &t).unwrap().space.is_none());
        let (lasso, _) = synth_universal_scheduler(&m, &t).unwrap();
        // The raw word has length ≤ d − dim(M_false range) = 2; its
        // primitive root may be shorter.
        assert!(lasso.cycle().len() <= 2);
        assert_eq!(lasso.cycle().word()[0], "w1");
    }

    #[test]
    fn universal_tp_is_monotone_in_repetitions() {
        let m = qbf_loop();
        let t = tol();
        let lasso = LassoScheduler::new(
            Scheduler::empty(),
            Scheduler::from_names(["a1", "a2", "a1"]),
        )
        .unwrap();
        for i in 0..4 {
            let rho = DensityOp::pure_state(&StateVector::basis(4, i), &t).unwrap();
            let mut last = -1.0;
            for passes in [1usize, 2, 4, 8, 16, 40] {
                let r =
                    termination_probability_lasso(&m, &rho, &lasso, lasso.pass_budget(passes), &t)
                        .unwrap();
                assert!(r.lower_bound >= last - 1e-12);
                last = r.lower_bound;
            }
        }
    }

    #[test]
    fn progression_grows_one_dimension_per_step() {
        // d − dim(M_false range) = 3 for the coin loop: exactly 3 actions.
        let m = qbf_loop();
        let (lasso, _) = synth_universal_scheduler(&m, &tol()).unwrap();
        assert_eq!(lasso.cycle().len(), 3);
    }

    #[test]
    fn selection_follows_the_strongest_coupling() {
        // First picked direction for the coin loop is |+,0⟩ under a1.
        let m = qbf_loop();
        let t = tol();
        let mf = HermitianOp::new(m.measurement().m_false().clone(), &t).unwrap();
        let covered = support(&mf, &t);
        assert_eq!(covered.rank(), 1);
        // Reproduce one pass of the scan by calling the synthesizer on a
        // model whose first pick is observable through the final word.
        let (lasso, _) = synth_universal_scheduler(&m, &t).unwrap();
        assert_eq!(lasso.cycle().word()[0], "a1");
        assert_eq!(lasso.cycle().word()[1], "a2");
    }

    #[test]
    fn invariant_region_empty_when_guard_never_holds() {
        let t = tol();
        let e = SuperOperator::trace_preserving(vec![CMat::identity(2, 2)], &t).unwrap();
        let meas = Measurement::new(CMat::zeros(2, 2), CMat::identity(2, 2), &t).unwrap();
        let m = QuantumMDP::new(vec!["a1".into()], vec![e], meas, &t).unwrap();
        let r = invariant_space(&m, &t).unwrap();
        assert!(r.space.is_none());
        // Universal synthesis degenerates to an arbitrary loop action.
        let (lasso, oracle) = synth_universal_scheduler(&m, &t).unwrap();
        assert_eq!(lasso.cycle().word(), &["a1".to_string()]);
        assert!(oracle.per_input.iter().all(|(_, tp, _)| *tp >= 0.99));
    }

    #[test]
    fn bell_state_never_terminates_in_the_modified_loop() {
        let m = qbf_modified_loop();
        let t = tol();
        let v = check_universal_termination(&m, &t).unwrap();
        let cex = v.counterexample.unwrap();
        for action in [["a1"], ["a2"]] {
            let lasso =
                LassoScheduler::new(Scheduler::empty(), Scheduler::from_names(action)).unwrap();
            let r = termination_probability_lasso(&m, &cex, &lasso, 60, &t).unwrap();
            assert!(r.lower_bound.abs() < 1e-9);
        }
        let _ = ONE_C;
    }
}
