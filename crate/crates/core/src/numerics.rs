//! Tolerance-aware complex linear algebra: state vectors, Hermitian
//! operators, subspaces with orthonormal bases, operator spaces, supports,
//! nullspaces and the real vectorization of Hermitian operators.
//!
//! Every rank/zero decision made anywhere in the crate goes through a
//! [`Tolerances`] value; nothing compares floats against bare literals.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO_C: C64 = Complex::new(0.0, 0.0);
pub const ONE_C: C64 = Complex::new(1.0, 0.0);

/// Thresholds used for every approximate comparison in the crate.
///
/// Floating-point arithmetic replaces exact algebraic numbers throughout, so
/// all verdicts are relative to a tolerance profile, and reports echo the
/// profile they were produced under.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Allowed deviation of a unit vector's norm from 1.
    pub norm_tol: f64,
    /// Allowed max-entry deviation of an operator from its adjoint.
    pub herm_tol: f64,
    /// Allowed negativity of eigenvalues of nominally positive operators.
    pub psd_tol: f64,
    /// Allowed deviation in trace conditions (unit trace, trace preservation).
    pub trace_tol: f64,
    /// Allowed residual inner product between nominally orthogonal vectors.
    pub ortho_tol: f64,
    /// Rank cut-off: singular values / eigenvalues / residuals below this
    /// (relative to scale where applicable) count as zero.
    pub rank_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            norm_tol: 1e-9,
            herm_tol: 1e-9,
            psd_tol: 1e-9,
            trace_tol: 1e-9,
            ortho_tol: 1e-9,
            rank_tol: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("norm_tol", self.norm_tol),
            ("herm_tol", self.herm_tol),
            ("psd_tol", self.psd_tol),
            ("trace_tol", self.trace_tol),
            ("ortho_tol", self.ortho_tol),
            ("rank_tol", self.rank_tol),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "tolerance {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest |entry| of a complex matrix.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Multiplies `v` by a unit phase so that its first entry with
/// `|entry| > tol` becomes real and positive. Zero-ish vectors pass through.
pub fn phase_fix(v: &CVec, tol: f64) -> CVec {
    for e in v.iter() {
        if e.norm() > tol {
            let phase = e.conj() / e.norm();
            return v.map(|x| x * phase);
        }
    }
    v.clone()
}

/// A (possibly non-normalized) vector in the d-dimensional state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amp: CVec,
}

impl StateVector {
    pub fn new(amp: CVec) -> Self {
        StateVector { amp }
    }

    /// Computational basis vector |i⟩.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut amp = CVec::zeros(dim);
        amp[i] = ONE_C;
        StateVector { amp }
    }

    pub fn from_reals(re: &[f64]) -> Self {
        StateVector {
            amp: CVec::from_iterator(re.len(), re.iter().map(|&r| C64::new(r, 0.0))),
        }
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        self.amp.norm()
    }

    pub fn is_normalized(&self, tol: &Tolerances) -> bool {
        (self.norm() - 1.0).abs() <= tol.norm_tol
    }

    /// Normalized copy with the deterministic phase convention applied.
    /// Fails on (near-)zero vectors.
    pub fn normalized(&self, tol: &Tolerances) -> Result<Self> {
        let n = self.norm();
        if n <= tol.rank_tol {
            return Err(Error::precondition("cannot normalize a near-zero vector"));
        }
        Ok(StateVector {
            amp: phase_fix(&(&self.amp / C64::new(n, 0.0)), tol.rank_tol),
        })
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amp.dotc(&other.amp)
    }

    /// |self⟩⟨self| as a raw matrix.
    pub fn outer(&self) -> CMat {
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| self.amp[i] * self.amp[j].conj())
    }

    pub fn apply(&self, m: &CMat) -> StateVector {
        StateVector { amp: m * &self.amp }
    }

    /// |⟨self|other⟩|² for normalized inputs.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }
}

/// A Hermitian operator, validated to be self-adjoint within `herm_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOp {
    mat: CMat,
}

impl HermitianOp {
    pub fn new(mat: CMat, tol: &Tolerances) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::validation(format!(
                "Hermitian operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let dev = max_abs(&(&mat - mat.adjoint()));
        if dev > tol.herm_tol {
            return Err(Error::validation(format!(
                "operator deviates from its adjoint by {dev:.3e} (> herm_tol)"
            )));
        }
        // Symmetrize so downstream eigensolves see an exactly Hermitian matrix.
        let sym = (&mat + mat.adjoint()) * C64::new(0.5, 0.0);
        Ok(HermitianOp { mat: sym })
    }

    /// Wraps a matrix that is Hermitian by construction.
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        let sym = (&mat + mat.adjoint()) * C64::new(0.5, 0.0);
        HermitianOp { mat: sym }
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOp {
            mat: CMat::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOp {
            mat: CMat::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    /// Eigenvalues (descending) with phase-fixed eigenvectors.
    pub fn eigh(&self, tol: &Tolerances) -> (Vec<f64>, Vec<StateVector>) {
        eigh(&self.mat, tol)
    }
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues sorted descending,
/// eigenvectors phase-fixed for determinism.
pub fn eigh(mat: &CMat, tol: &Tolerances) -> (Vec<f64>, Vec<StateVector>) {
    let sym = (mat + mat.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vals = Vec::with_capacity(order.len());
    let mut vecs = Vec::with_capacity(order.len());
    for &i in &order {
        vals.push(eig.eigenvalues[i]);
        let col = CVec::from_column_slice(eig.eigenvectors.column(i).as_slice());
        vecs.push(StateVector::new(phase_fix(&col, tol.rank_tol)));
    }
    (vals, vecs)
}

/// A positive operator with trace 1 (or ≤ 1 when `partial`).
#[derive(Debug, Clone)]
pub struct DensityOp {
    op: HermitianOp,
    partial: bool,
}

impl DensityOp {
    pub fn new(mat: CMat, partial: bool, tol: &Tolerances) -> Result<Self> {
        let op = HermitianOp::new(mat, tol)?;
        let (vals, _) = op.eigh(tol);
        if let Some(min) = vals.last() {
            if *min < -tol.psd_tol {
                return Err(Error::validation(format!(
                    "density operator has eigenvalue {min:.3e} below -psd_tol"
                )));
            }
        }
        let tr = op.trace();
        if partial {
            if tr > 1.0 + tol.trace_tol {
                return Err(Error::validation(format!(
                    "partial density operator has trace {tr} > 1"
                )));
            }
        } else if (tr - 1.0).abs() > tol.trace_tol {
            return Err(Error::validation(format!(
                "density operator has trace {tr}, expected 1"
            )));
        }
        Ok(DensityOp { op, partial })
    }

    /// |ψ⟩⟨ψ| for a normalized ψ.
    pub fn pure_state(psi: &StateVector, tol: &Tolerances) -> Result<Self> {
        if !psi.is_normalized(tol) {
            return Err(Error::precondition(format!(
                "pure state must be normalized, norm = {}",
                psi.norm()
            )));
        }
        Ok(DensityOp {
            op: HermitianOp::from_trusted(psi.outer()),
            partial: false,
        })
    }

    /// Maximally mixed state on the span of an orthonormal basis.
    pub fn uniform_on(space: &Subspace) -> Result<Self> {
        if space.rank() == 0 {
            return Err(Error::precondition(
                "cannot build a state on a null subspace",
            ));
        }
        let w = 1.0 / space.rank() as f64;
        let mut mat = CMat::zeros(space.ambient_dim(), space.ambient_dim());
        for b in space.basis() {
            mat += b.outer() * C64::new(w, 0.0);
        }
        Ok(DensityOp {
            op: HermitianOp::from_trusted(mat),
            partial: false,
        })
    }

    pub fn partial_from_trusted(mat: CMat) -> Self {
        DensityOp {
            op: HermitianOp::from_trusted(mat),
            partial: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn hermitian(&self) -> &HermitianOp {
        &self.op
    }

    pub fn trace(&self) -> f64 {
        self.op.trace()
    }

    /// Eigenstates with eigenvalue above `rank_tol`, largest first.
    pub fn eigenstates(&self, tol: &Tolerances) -> Vec<(f64, StateVector)> {
        let (vals, vecs) = self.op.eigh(tol);
        vals.into_iter()
            .zip(vecs)
            .filter(|(v, _)| *v > tol.rank_tol)
            .collect()
    }
}

/// Incremental orthonormal basis builder (two-pass Gram-Schmidt).
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    dim: usize,
    vecs: Vec<CVec>,
}

impl OrthoBasis {
    pub fn new(dim: usize) -> Self {
        OrthoBasis { dim, vecs: vec![] }
    }

    pub fn len(&self) -> usize {
        self.vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vecs.is_empty()
    }

    fn residual(&self, v: &CVec) -> CVec {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &self.vecs {
                let c = b.dotc(&r);
                r -= b * c;
            }
        }
        r
    }

    /// Orthonormalized residual of `v` against the current basis, or `None`
    /// when `v` already lies in the span (residual norm ≤ rank_tol).
    pub fn try_add(&mut self, v: &CVec, tol: &Tolerances) -> Option<StateVector> {
        let r = self.residual(v);
        let n = r.norm();
        if n <= tol.rank_tol {
            return None;
        }
        let unit = phase_fix(&(r / C64::new(n, 0.0)), tol.rank_tol);
        self.vecs.push(unit.clone());
        Some(StateVector::new(unit))
    }

    pub fn contains(&self, v: &CVec, tol: &Tolerances) -> bool {
        self.residual(v).norm() <= tol.rank_tol
    }

    pub fn into_subspace(self) -> Subspace {
        Subspace {
            ambient: self.dim,
            basis: self.vecs.into_iter().map(StateVector::new).collect(),
        }
    }
}

/// A linear subspace of the state space, stored as an orthonormal basis.
/// Bases are not canonical; equality of subspaces is mutual membership.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: Vec<StateVector>,
}

impl Subspace {
    pub fn null(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: vec![],
        }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: (0..ambient).map(|i| StateVector::basis(ambient, i)).collect(),
        }
    }

    /// Builds a subspace from spanning vectors (orthonormalizing them).
    pub fn from_spanning(ambient: usize, vecs: &[StateVector], tol: &Tolerances) -> Result<Self> {
        let mut b = OrthoBasis::new(ambient);
        for v in vecs {
            if v.dim() != ambient {
                return Err(Error::validation(format!(
                    "spanning vector has dim {}, ambient is {ambient}",
                    v.dim()
                )));
            }
            b.try_add(v.amplitudes(), tol);
        }
        Ok(b.into_subspace())
    }

    pub(crate) fn from_orthonormal(ambient: usize, basis: Vec<StateVector>) -> Self {
        Subspace { ambient, basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    /// Dimension of the subspace itself.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[StateVector] {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.ambient
    }

    /// Projector onto the subspace.
    pub fn projector(&self) -> CMat {
        let mut p = CMat::zeros(self.ambient, self.ambient);
        for b in &self.basis {
            p += b.outer();
        }
        p
    }

    /// ‖v − P v‖ for a raw vector.
    pub fn residual_norm(&self, v: &CVec) -> f64 {
        let mut r = v.clone();
        for b in &self.basis {
            let c = b.amplitudes().dotc(&r);
            r -= b.amplitudes() * c;
        }
        r.norm()
    }

    /// Membership test: ‖v − Proj v‖ ≤ rank_tol.
    pub fn contains_vec(&self, v: &StateVector, tol: &Tolerances) -> bool {
        self.residual_norm(v.amplitudes()) <= tol.rank_tol
    }

    /// Every basis vector of `other` is a member of `self`.
    pub fn contains_subspace(&self, other: &Subspace, tol: &Tolerances) -> bool {
        other.basis.iter().all(|v| self.contains_vec(v, tol))
    }

    /// Subspace equality as mutual membership of bases.
    pub fn same_space(&self, other: &Subspace, tol: &Tolerances) -> bool {
        self.rank() == other.rank()
            && self.contains_subspace(other, tol)
            && other.contains_subspace(self, tol)
    }

    /// Orthonormal basis of the orthocomplement.
    pub fn complement(&self, tol: &Tolerances) -> Subspace {
        if self.basis.is_empty() {
            return Subspace::full(self.ambient);
        }
        // Rows ⟨b_i| of the basis; the complement is their joint kernel.
        let rows: Vec<CVec> = self
            .basis
            .iter()
            .map(|b| CVec::from_iterator(self.ambient, b.amplitudes().iter().map(|c| c.conj())))
            .collect();
        let basis = nullspace(&rows, self.ambient, tol);
        Subspace {
            ambient: self.ambient,
            basis,
        }
    }
}

/// Span of eigenvectors with eigenvalue above the rank threshold.
///
/// Eigenvalues are compared against `rank_tol` times the spectral radius,
/// falling back to the absolute `rank_tol` for near-zero operators, so the
/// support of `c·A` does not depend on the scale `c`.
pub fn support(op: &HermitianOp, tol: &Tolerances) -> Subspace {
    let (vals, vecs) = op.eigh(tol);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let thr = if scale > tol.rank_tol {
        tol.rank_tol * scale
    } else {
        tol.rank_tol
    };
    let mut b = OrthoBasis::new(op.dim());
    for (v, vec) in vals.iter().zip(vecs) {
        if v.abs() > thr {
            b.try_add(vec.amplitudes(), tol);
        }
    }
    b.into_subspace()
}

/// Normalized residual of `v` against an orthonormal basis, or `None` when
/// `v` is contained in the span. The returned vector is orthogonal to every
/// basis vector within `ortho_tol` and phase-fixed.
pub fn gram_schmidt_extend(
    basis: &Subspace,
    v: &StateVector,
    tol: &Tolerances,
) -> Option<StateVector> {
    let mut b = OrthoBasis {
        dim: basis.ambient,
        vecs: basis.basis.iter().map(|s| s.amplitudes().clone()).collect(),
    };
    b.try_add(v.amplitudes(), tol)
}

/// Join (spanned union) of two subspaces of the same ambient space.
pub fn subspace_join(a: &Subspace, b: &Subspace, tol: &Tolerances) -> Result<Subspace> {
    if a.ambient != b.ambient {
        return Err(Error::validation(format!(
            "join of subspaces with ambient dims {} and {}",
            a.ambient, b.ambient
        )));
    }
    let mut out = OrthoBasis {
        dim: a.ambient,
        vecs: a.basis.iter().map(|s| s.amplitudes().clone()).collect(),
    };
    for v in &b.basis {
        out.try_add(v.amplitudes(), tol);
    }
    Ok(out.into_subspace())
}

/// Intersection of two subspaces, computed as the joint kernel of the two
/// orthocomplement projectors.
pub fn subspace_intersect(a: &Subspace, b: &Subspace, tol: &Tolerances) -> Result<Subspace> {
    if a.ambient != b.ambient {
        return Err(Error::validation(format!(
            "intersection of subspaces with ambient dims {} and {}",
            a.ambient, b.ambient
        )));
    }
    let d = a.ambient;
    let pa = CMat::identity(d, d) - a.projector();
    let pb = CMat::identity(d, d) - b.projector();
    let mut rows: Vec<CVec> = Vec::with_capacity(2 * d);
    for i in 0..d {
        rows.push(CVec::from_iterator(d, (0..d).map(|j| pa[(i, j)])));
    }
    for i in 0..d {
        rows.push(CVec::from_iterator(d, (0..d).map(|j| pb[(i, j)])));
    }
    let basis = nullspace(&rows, d, tol);
    Ok(Subspace { ambient: d, basis })
}

/// Orthonormal basis of the solution space of the homogeneous system
/// `row · x = 0` for every row, at `rank_tol`. Basis vectors carry the
/// deterministic phase convention.
pub fn nullspace(rows: &[CVec], nvars: usize, tol: &Tolerances) -> Vec<StateVector> {
    if rows.is_empty() {
        return (0..nvars).map(|i| StateVector::basis(nvars, i)).collect();
    }
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), nvars, "row {k} has inconsistent variable count");
    }
    // Pad with zero rows up to nvars so the (thin) SVD exposes a full set
    // of nvars right-singular directions.
    let nrows = rows.len().max(nvars);
    let m = CMat::from_fn(nrows, nvars, |i, j| {
        if i < rows.len() {
            rows[i][j]
        } else {
            ZERO_C
        }
    });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    debug_assert_eq!(vt.nrows(), nvars);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thr = if smax > tol.rank_tol {
        tol.rank_tol * smax
    } else {
        tol.rank_tol
    };
    let mut out = Vec::new();
    for i in 0..vt.nrows() {
        let sv = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if sv <= thr {
            let row = CVec::from_iterator(nvars, (0..nvars).map(|j| vt[(i, j)].conj()));
            out.push(StateVector::new(phase_fix(&row, tol.rank_tol)));
        }
    }
    out
}

/// Real analogue of [`nullspace`] for systems over real variables.
pub fn nullspace_real(m: &RMat, tol: &Tolerances) -> Vec<RVec> {
    if m.nrows() == 0 {
        return (0..m.ncols())
            .map(|i| {
                let mut v = RVec::zeros(m.ncols());
                v[i] = 1.0;
                v
            })
            .collect();
    }
    let nvars = m.ncols();
    let nrows = m.nrows().max(nvars);
    let m = RMat::from_fn(nrows, nvars, |i, j| if i < m.nrows() { m[(i, j)] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thr = if smax > tol.rank_tol {
        tol.rank_tol * smax
    } else {
        tol.rank_tol
    };
    let mut out = Vec::new();
    for i in 0..vt.nrows() {
        let sv = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if sv <= thr {
            let mut row = RVec::from_iterator(vt.ncols(), (0..vt.ncols()).map(|j| vt[(i, j)]));
            // Same sign convention as the complex phase fix.
            if let Some(e) = row.iter().find(|e| e.abs() > tol.rank_tol) {
                if *e < 0.0 {
                    row = -row;
                }
            }
            out.push(row);
        }
    }
    out
}

/// Real vectorization of a Hermitian operator: d diagonal entries, then
/// √2·Re of the upper off-diagonal entries (row-major i<j), then √2·Im of
/// the same entries. This is an isometry onto ℝ^{d²} for the Frobenius
/// inner product.
pub fn hermitian_vectorize(h: &HermitianOp) -> RVec {
    let d = h.dim();
    let m = h.matrix();
    let mut v = RVec::zeros(d * d);
    for i in 0..d {
        v[i] = m[(i, i)].re;
    }
    let mut k = d;
    let s = std::f64::consts::SQRT_2;
    for i in 0..d {
        for j in (i + 1)..d {
            v[k] = s * m[(i, j)].re;
            k += 1;
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            v[k] = s * m[(i, j)].im;
            k += 1;
        }
    }
    v
}

/// Inverse of [`hermitian_vectorize`]. Fails when the length is not a
/// perfect square d².
pub fn hermitian_devectorize(v: &RVec) -> Result<HermitianOp> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::validation(format!(
            "vector of length {n} is not a Hermitian vectorization"
        )));
    }
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = d;
    let inv_s = std::f64::consts::FRAC_1_SQRT_2;
    let offs = d * (d - 1) / 2;
    for i in 0..d {
        for j in (i + 1)..d {
            let re = v[k] * inv_s;
            let im = v[k + offs] * inv_s;
            m[(i, j)] = C64::new(re, im);
            m[(j, i)] = C64::new(re, -im);
            k += 1;
        }
    }
    Ok(HermitianOp::from_trusted(m))
}

/// Hermitian basis of a d-dimensional space in the vectorization ordering:
/// |i⟩⟨i|, then (|i⟩⟨j|+|j⟩⟨i|)/√2 for i<j, then (i|i⟩⟨j|−i|j⟩⟨i|)/√2.
pub fn hermitian_basis(d: usize) -> Vec<HermitianOp> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut m = CMat::zeros(d, d);
        m[(i, i)] = ONE_C;
        out.push(HermitianOp::from_trusted(m));
    }
    let inv_s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in (i + 1)..d {
            let mut m = CMat::zeros(d, d);
            m[(i, j)] = C64::new(inv_s, 0.0);
            m[(j, i)] = C64::new(inv_s, 0.0);
            out.push(HermitianOp::from_trusted(m));
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut m = CMat::zeros(d, d);
            m[(i, j)] = C64::new(0.0, inv_s);
            m[(j, i)] = C64::new(0.0, -inv_s);
            out.push(HermitianOp::from_trusted(m));
        }
    }
    out
}

/// A list of linearly independent Hermitian operators together with an
/// orthonormalized companion (in vectorized form) used for membership tests.
#[derive(Debug, Clone)]
pub struct OperatorSpace {
    dim: usize,
    basis: Vec<HermitianOp>,
    ortho: Vec<RVec>,
}

impl OperatorSpace {
    pub fn empty(dim: usize) -> Self {
        OperatorSpace {
            dim,
            basis: vec![],
            ortho: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[HermitianOp] {
        &self.basis
    }

    fn residual(&self, v: &RVec) -> RVec {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &self.ortho {
                let c = b.dot(&r);
                r -= b * c;
            }
        }
        r
    }

    /// Adds `h` when it is linearly independent of the current basis;
    /// returns whether it was added.
    pub fn try_add(&mut self, h: HermitianOp, tol: &Tolerances) -> bool {
        assert_eq!(h.dim(), self.dim);
        let v = hermitian_vectorize(&h);
        let scale = v.norm().max(1.0);
        let r = self.residual(&v);
        if r.norm() <= tol.rank_tol * scale {
            return false;
        }
        let unit = &r / r.norm();
        self.ortho.push(unit);
        self.basis.push(h);
        true
    }

    /// True when the least-squares expansion of `h` over the basis leaves a
    /// residual ≤ rank_tol·‖h‖.
    pub fn contains(&self, h: &HermitianOp, tol: &Tolerances) -> bool {
        let v = hermitian_vectorize(h);
        let scale = v.norm().max(tol.rank_tol);
        self.residual(&v).norm() <= tol.rank_tol * scale
    }

    /// Least-squares coefficients of `h` over the raw basis, or `None` when
    /// `h` is outside the span.
    pub fn express(&self, h: &HermitianOp, tol: &Tolerances) -> Option<Vec<f64>> {
        if !self.contains(h, tol) {
            return None;
        }
        if self.basis.is_empty() {
            return Some(vec![]);
        }
        let n = self.dim * self.dim;
        let a = RMat::from_fn(n, self.basis.len(), |i, j| {
            hermitian_vectorize(&self.basis[j])[i]
        });
        let b = hermitian_vectorize(h);
        let svd = a.svd(true, true);
        let x = svd
            .solve(&b, tol.rank_tol)
            .expect("SVD least squares on independent basis");
        Some(x.iter().cloned().collect())
    }
}

/// Membership of a Hermitian operator in an operator space.
pub fn operator_membership(h: &HermitianOp, space: &OperatorSpace, tol: &Tolerances) -> bool {
    space.contains(h, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    /// |q1,q2⟩ two-qubit product vectors used by the worked examples.
    /// `a`/`b` are amplitude pairs for the first/second qubit.
    pub(crate) fn two_qubit(a: [f64; 2], b: [f64; 2]) -> StateVector {
        let mut amp = CVec::zeros(4);
        for i in 0..2 {
            for j in 0..2 {
                amp[2 * i + j] = C64::new(a[i] * b[j], 0.0);
            }
        }
        StateVector::new(amp)
    }

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    pub(crate) fn ket_plus() -> [f64; 2] {
        [INV_SQRT2, INV_SQRT2]
    }

    pub(crate) fn ket_minus() -> [f64; 2] {
        [INV_SQRT2, -INV_SQRT2]
    }

    #[test]
    fn support_of_rank_one_projector() {
        let v = two_qubit([0.0, 1.0], [0.0, 1.0]); // |1,1⟩
        let h = HermitianOp::from_trusted(v.outer());
        let s = support(&h, &tol());
        assert_eq!(s.rank(), 1);
        assert!(s.contains_vec(&v, &tol()));
    }

    #[test]
    fn support_of_uniform_state_is_full() {
        let h = HermitianOp::from_trusted(CMat::identity(4, 4) * C64::new(0.25, 0.0));
        assert_eq!(support(&h, &tol()).rank(), 4);
    }

    #[test]
    fn support_of_first_step_mixture() {
        // ½(|−,0⟩⟨−,0| + |0,−⟩⟨0,−|) spans the two first-step images.
        let m0 = two_qubit(ket_minus(), [1.0, 0.0]);
        let zm = two_qubit([1.0, 0.0], ket_minus());
        let h = HermitianOp::from_trusted((m0.outer() + zm.outer()) * C64::new(0.5, 0.0));
        let s = support(&h, &tol());
        assert_eq!(s.rank(), 2);
        assert!(s.contains_vec(&m0, &tol()));
        assert!(s.contains_vec(&zm, &tol()));
    }

    #[test]
    fn gram_schmidt_extend_produces_the_residual_direction() {
        // Extending {|1,1⟩, |−,0⟩} by (1/√2)|0,−⟩ yields
        // (|+,0⟩ − √2|0,1⟩)/√3 up to phase.
        let b11 = two_qubit([0.0, 1.0], [0.0, 1.0]);
        let m0 = two_qubit(ket_minus(), [1.0, 0.0]);
        let basis = Subspace::from_spanning(4, &[b11, m0], &tol()).unwrap();
        let v = StateVector::new(two_qubit([1.0, 0.0], ket_minus()).amplitudes() * C64::new(INV_SQRT2, 0.0));
        let got = gram_schmidt_extend(&basis, &v, &tol()).expect("independent direction");
        let sqrt3 = 3.0_f64.sqrt();
        let mut expected = two_qubit(ket_plus(), [1.0, 0.0]).amplitudes() / C64::new(sqrt3, 0.0);
        expected[1] -= C64::new(2.0_f64.sqrt() / sqrt3, 0.0);
        let expected = StateVector::new(expected);
        assert!(got.fidelity(&expected) > 1.0 - 1e-12);
        for b in basis.basis() {
            assert!(b.inner(&got).norm() <= tol().ortho_tol);
        }
    }

    #[test]
    fn gram_schmidt_extend_contained_vector_is_none() {
        let b11 = two_qubit([0.0, 1.0], [0.0, 1.0]);
        let basis = Subspace::from_spanning(4, &[b11.clone()], &tol()).unwrap();
        assert!(gram_schmidt_extend(&basis, &b11, &tol()).is_none());
    }

    #[test]
    fn gram_schmidt_extend_normalizes_from_empty() {
        let basis = Subspace::null(2);
        let v = StateVector::new(CVec::from_vec(vec![C64::new(2.0, 0.0), ZERO_C]));
        let got = gram_schmidt_extend(&basis, &v, &tol()).unwrap();
        assert!(got.fidelity(&StateVector::basis(2, 0)) > 1.0 - 1e-12);
    }

    #[test]
    fn join_of_orthogonal_lines_is_full() {
        let a = Subspace::from_spanning(2, &[StateVector::basis(2, 0)], &tol()).unwrap();
        let b = Subspace::from_spanning(2, &[StateVector::basis(2, 1)], &tol()).unwrap();
        assert_eq!(subspace_join(&a, &b, &tol()).unwrap().rank(), 2);
    }

    #[test]
    fn join_is_idempotent() {
        let a = Subspace::from_spanning(
            3,
            &[StateVector::basis(3, 0), StateVector::basis(3, 2)],
            &tol(),
        )
        .unwrap();
        let j = subspace_join(&a, &a, &tol()).unwrap();
        assert!(j.same_space(&a, &tol()));
    }

    #[test]
    fn join_rebuilds_the_three_dim_chain_space() {
        let b11 = two_qubit([0.0, 1.0], [0.0, 1.0]);
        let m0 = two_qubit(ket_minus(), [1.0, 0.0]);
        let sqrt3 = 3.0_f64.sqrt();
        let mut r = two_qubit(ket_plus(), [1.0, 0.0]).amplitudes() / C64::new(sqrt3, 0.0);
        r[1] -= C64::new(2.0_f64.sqrt() / sqrt3, 0.0);
        let a = Subspace::from_spanning(4, &[b11], &tol()).unwrap();
        let b = Subspace::from_spanning(4, &[m0, StateVector::new(r)], &tol()).unwrap();
        let j = subspace_join(&a, &b, &tol()).unwrap();
        assert_eq!(j.rank(), 3);
        // |0,−⟩ lies in the joined space.
        assert!(j.contains_vec(&two_qubit([1.0, 0.0], ket_minus()), &tol()));
    }

    #[test]
    fn join_dim_mismatch_is_an_error() {
        let a = Subspace::full(2);
        let b = Subspace::full(3);
        assert!(subspace_join(&a, &b, &tol()).is_err());
    }

    #[test]
    fn intersect_with_full_space_is_identity() {
        let s = Subspace::from_spanning(
            4,
            &[two_qubit([0.0, 1.0], [0.0, 1.0]), two_qubit(ket_minus(), [1.0, 0.0])],
            &tol(),
        )
        .unwrap();
        let i = subspace_intersect(&Subspace::full(4), &s, &tol()).unwrap();
        assert!(i.same_space(&s, &tol()));
    }

    #[test]
    fn intersect_of_orthogonal_lines_is_null() {
        let a = Subspace::from_spanning(2, &[StateVector::basis(2, 0)], &tol()).unwrap();
        let b = Subspace::from_spanning(2, &[StateVector::basis(2, 1)], &tol()).unwrap();
        assert_eq!(subspace_intersect(&a, &b, &tol()).unwrap().rank(), 0);
    }

    #[test]
    fn membership_examples() {
        let t = tol();
        let b01 = StateVector::basis(4, 1);
        let s = Subspace::from_spanning(4, &[b01.clone()], &t).unwrap();
        assert!(s.contains_vec(&b01, &t));

        let s2 = Subspace::from_spanning(
            4,
            &[two_qubit([1.0, 0.0], [1.0, 0.0]), two_qubit([0.0, 1.0], ket_plus())],
            &t,
        )
        .unwrap();
        assert!(!s2.contains_vec(&two_qubit([0.0, 1.0], [0.0, 1.0]), &t));

        // (√2|1,1⟩ − |−,0⟩)/√3 lies in span{|1,1⟩, |−,0⟩}.
        let b11 = two_qubit([0.0, 1.0], [0.0, 1.0]);
        let m0 = two_qubit(ket_minus(), [1.0, 0.0]);
        let v = StateVector::new(
            (b11.amplitudes() * C64::new(2.0_f64.sqrt(), 0.0) - m0.amplitudes())
                / C64::new(3.0_f64.sqrt(), 0.0),
        );
        let pds = Subspace::from_spanning(4, &[b11, m0], &t).unwrap();
        assert!(pds.contains_vec(&v, &t));
    }

    #[test]
    fn nullspace_with_no_constraints_is_identity_basis() {
        let b = nullspace(&[], 3, &tol());
        assert_eq!(b.len(), 3);
        for (i, v) in b.iter().enumerate() {
            assert!(v.fidelity(&StateVector::basis(3, i)) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn nullspace_of_single_bra_row() {
        let row = CVec::from_vec(vec![ONE_C, ZERO_C]);
        let b = nullspace(&[row], 2, &tol());
        assert_eq!(b.len(), 1);
        assert!(b[0].fidelity(&StateVector::basis(2, 1)) > 1.0 - 1e-12);
    }

    #[test]
    fn vectorize_identity_ordering() {
        let h = HermitianOp::identity(2);
        let v = hermitian_vectorize(&h);
        assert_eq!(v.as_slice(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn vectorize_zero_roundtrip() {
        let h = HermitianOp::zeros(3);
        let v = hermitian_vectorize(&h);
        assert!(v.norm() == 0.0);
        let back = hermitian_devectorize(&v).unwrap();
        assert_eq!(back.matrix(), h.matrix());
    }

    #[test]
    fn devectorize_rejects_bad_length() {
        assert!(hermitian_devectorize(&RVec::zeros(3)).is_err());
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let basis = hermitian_basis(3);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let ip = hermitian_vectorize(a).dot(&hermitian_vectorize(b));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn vectorize_roundtrip_on_random_hermitians(seed in any::<[f64; 16]>()) {
            let d = 4usize;
            let mut m = CMat::zeros(d, d);
            let mut k = 0;
            for i in 0..d {
                for j in i..d {
                    let re = seed[k % 16].rem_euclid(2.0) - 1.0;
                    let im = seed[(k + 7) % 16].rem_euclid(2.0) - 1.0;
                    k += 1;
                    if i == j {
                        m[(i, i)] = C64::new(re, 0.0);
                    } else {
                        m[(i, j)] = C64::new(re, im);
                        m[(j, i)] = C64::new(re, -im);
                    }
                }
            }
            prop_assume!(m.iter().all(|c| c.re.is_finite() && c.im.is_finite()));
            let h = HermitianOp::from_trusted(m);
            let rt = hermitian_devectorize(&hermitian_vectorize(&h)).unwrap();
            prop_assert!(max_abs(&(rt.matrix() - h.matrix())) <= 1e-12);
        }

        #[test]
        fn support_and_kernel_dims_are_complementary(vals in prop::collection::vec(-2.0f64..2.0, 4)) {
            let d = 4;
            let m = CMat::from_fn(d, d, |i, j| if i == j { C64::new(vals[i], 0.0) } else { ZERO_C });
            let h = HermitianOp::from_trusted(m);
            let t = tol();
            let s = support(&h, &t);
            let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let thr = if scale > t.rank_tol { t.rank_tol * scale } else { t.rank_tol };
            let expect = vals.iter().filter(|v| v.abs() > thr).count();
            prop_assert_eq!(s.rank(), expect);
            prop_assert_eq!(s.complement(&t).rank(), d - expect);
        }
    }
}
