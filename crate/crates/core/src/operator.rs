//! Dense operators and density matrices on truncated, possibly composite,
//! Hilbert spaces.
//!
//! Composite spaces use the usual Kronecker ordering: the first subsystem is
//! the most significant digit of the flat index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Max entrywise |M − M†| accepted for a density matrix.
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue accepted for a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Eigenvalues at or below this floor are dropped from entropy sums.
pub const ENTROPY_EIGEN_FLOOR: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Ordered list of subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("no subsystems".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidSpace(format!(
                "subsystem dimension {d} is below 2"
            )));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn is_single(&self) -> bool {
        self.dims.len() == 1
    }

    /// Space of `self ⊗ other`.
    pub fn join(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpace { dims }
    }

    /// Sorted, deduplicated and range-checked subsystem selection.
    fn selection(&self, indices: &[usize]) -> Result<Vec<usize>> {
        if indices.is_empty() {
            return Err(Error::InvalidSubsystems("empty selection".into()));
        }
        let mut sel = indices.to_vec();
        sel.sort_unstable();
        sel.dedup();
        if sel.len() != indices.len() {
            return Err(Error::InvalidSubsystems(format!(
                "duplicate index in {indices:?}"
            )));
        }
        if let Some(&i) = sel.iter().find(|&&i| i >= self.dims.len()) {
            return Err(Error::InvalidSubsystems(format!(
                "index {i} out of range for {} subsystems",
                self.dims.len()
            )));
        }
        Ok(sel)
    }

    fn subspace(&self, sel: &[usize]) -> HilbertSpace {
        HilbertSpace {
            dims: sel.iter().map(|&i| self.dims[i]).collect(),
        }
    }

    /// Splits a flat index into per-subsystem digits.
    fn digits(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        out
    }
}

/// Single-mode space truncated to `n_levels` Fock states.
pub fn fock_space(n_levels: usize) -> Result<HilbertSpace> {
    if n_levels < 2 {
        return Err(Error::InvalidSpace(format!(
            "a Fock space needs at least 2 levels, got {n_levels}"
        )));
    }
    HilbertSpace::new(vec![n_levels])
}

fn max_hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Square complex matrix acting on a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if matrix.nrows() != d {
                    matrix.nrows()
                } else {
                    matrix.ncols()
                },
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::identity(d, d),
        }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::zeros(d, d),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_hermiticity_error(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `self · rhs`
    pub fn compose(&self, rhs: &Operator) -> Result<Operator> {
        self.check_space(&rhs.space)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub fn plus(&self, rhs: &Operator) -> Result<Operator> {
        self.check_space(&rhs.space)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
        })
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * factor,
        }
    }

    /// Largest entrywise |U†U − I|.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        let prod = self.matrix.adjoint() * &self.matrix;
        (prod - CMatrix::identity(d, d))
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    fn check_space(&self, other: &HilbertSpace) -> Result<()> {
        if &self.space != other {
            return Err(Error::DimensionMismatch {
                expected: self.space.total_dim(),
                got: other.total_dim(),
            });
        }
        Ok(())
    }
}

fn require_single(space: &HilbertSpace) -> Result<usize> {
    if !space.is_single() {
        return Err(Error::InvalidSpace(format!(
            "expected a single mode, got dims {:?} (embed the mode operator instead)",
            space.dims()
        )));
    }
    Ok(space.total_dim())
}

/// Truncated annihilation operator, ⟨n−1|a|n⟩ = √n.
pub fn annihilation(space: &HilbertSpace) -> Result<Operator> {
    let n = require_single(space)?;
    let mut m = CMatrix::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Operator::new(space.clone(), m)
}

pub fn creation(space: &HilbertSpace) -> Result<Operator> {
    Ok(annihilation(space)?.adjoint())
}

/// Number operator a†a, built directly as diag(0, 1, …, N−1).
pub fn number(space: &HilbertSpace) -> Result<Operator> {
    let n = require_single(space)?;
    let diag = DVector::from_iterator(n, (0..n).map(|k| C64::new(k as f64, 0.0)));
    Operator::new(space.clone(), CMatrix::from_diagonal(&diag))
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product in the given order.
pub fn tensor(ops: &[&Operator]) -> Result<Operator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| Error::InvalidSubsystems("tensor of an empty list".into()))?;
    let mut space = first.space.clone();
    let mut matrix = first.matrix.clone();
    for op in rest {
        space = space.join(&op.space);
        matrix = kron(&matrix, &op.matrix);
    }
    Ok(Operator { space, matrix })
}

/// Lifts a single-subsystem operator to `I ⊗ … ⊗ op ⊗ … ⊗ I` on `space`.
pub fn embed(op: &Operator, space: &HilbertSpace, index: usize) -> Result<Operator> {
    if index >= space.subsystems() {
        return Err(Error::InvalidSubsystems(format!(
            "index {index} out of range for {} subsystems",
            space.subsystems()
        )));
    }
    let d = space.dims()[index];
    if op.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: op.dim(),
        });
    }
    let before: usize = space.dims()[..index].iter().product();
    let after: usize = space.dims()[index + 1..].iter().product();
    let matrix = kron(
        &kron(&CMatrix::identity(before, before), &op.matrix),
        &CMatrix::identity(after, after),
    );
    Operator::new(space.clone(), matrix)
}

/// Full Hermitian eigendecomposition (ascending eigenvalues, eigenvectors as columns).
pub fn hermitian_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Connected components of the sparsity pattern of a Hermitian matrix.
///
/// Entries that are exactly zero split the matrix into independent blocks, so
/// the spectrum is the union of the block spectra.
fn coupled_blocks(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..j {
            if m[(i, j)] != ZERO || m[(j, i)] != ZERO {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[slot[r]].push(i);
    }
    blocks
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Decomposes along exact-zero block structure first; states produced by
/// excitation-conserving collisions are block diagonal in the total photon
/// number, which keeps entropies of 400-dimensional joint states cheap.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let blocks = coupled_blocks(m);
    let mut values = Vec::with_capacity(m.nrows());
    for block in blocks {
        match block.len() {
            1 => values.push(m[(block[0], block[0])].re),
            k => {
                let sub = CMatrix::from_fn(k, k, |i, j| m[(block[i], block[j])]);
                values.extend(sub.symmetric_eigen().eigenvalues.iter());
            }
        }
    }
    values.sort_by(f64::total_cmp);
    values
}

/// exp(scale · H) for Hermitian `h`, via its spectral decomposition.
pub fn hermitian_exp(h: &Operator, scale: C64) -> Result<Operator> {
    let err = h.hermiticity_error();
    if err > HERMITICITY_TOL {
        return Err(Error::NotHermitian(err));
    }
    let (values, vectors) = hermitian_eigh(&h.matrix);
    let d = h.dim();
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let f = (scale * lambda).exp();
        for i in 0..d {
            scaled[(i, j)] *= f;
        }
    }
    Operator::new(h.space.clone(), scaled * vectors.adjoint())
}

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validated constructor.
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let op = Operator::new(space, matrix)?;
        let rho = Self {
            space: op.space,
            matrix: op.matrix,
        };
        rho.validate()?;
        Ok(rho)
    }

    /// Skips validation; for states produced by maps already known to be CPTP.
    pub fn new_unchecked(space: HilbertSpace, matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), space.total_dim());
        Self { space, matrix }
    }

    /// |ψ⟩⟨ψ| for a normalized amplitude vector.
    pub fn pure(space: &HilbertSpace, amplitudes: &[C64]) -> Result<Self> {
        let d = space.total_dim();
        if amplitudes.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: amplitudes.len(),
            });
        }
        let psi = DVector::from_column_slice(amplitudes);
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state vector has norm {norm}")));
        }
        Ok(Self {
            space: space.clone(),
            matrix: &psi * psi.adjoint(),
        })
    }

    /// Computational basis projector |k⟩⟨k|.
    pub fn basis(space: &HilbertSpace, index: usize) -> Result<Self> {
        let d = space.total_dim();
        if index >= d {
            return Err(Error::InvalidSubsystems(format!(
                "basis index {index} out of range for dimension {d}"
            )));
        }
        let mut matrix = CMatrix::zeros(d, d);
        matrix[(index, index)] = ONE;
        Ok(Self {
            space: space.clone(),
            matrix,
        })
    }

    pub fn from_populations(space: &HilbertSpace, populations: &[f64]) -> Result<Self> {
        let d = space.total_dim();
        if populations.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: populations.len(),
            });
        }
        let diag = DVector::from_iterator(d, populations.iter().map(|&p| C64::new(p, 0.0)));
        Self::new(space.clone(), CMatrix::from_diagonal(&diag))
    }

    pub fn maximally_mixed(space: &HilbertSpace) -> Self {
        let d = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::identity(d, d) / C64::new(d as f64, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let herm = max_hermiticity_error(&self.matrix);
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max |ρ − ρ†| = {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Σ_{i≠j} |ρ_ij|.
    pub fn off_diagonal_mass(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    s += self.matrix[(i, j)].norm();
                }
            }
        }
        s
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_hermiticity_error(&self.matrix)
    }

    /// Product state in the given order.
    pub fn tensor(states: &[&DensityMatrix]) -> Result<DensityMatrix> {
        let (first, rest) = states
            .split_first()
            .ok_or_else(|| Error::InvalidSubsystems("tensor of an empty list".into()))?;
        let mut space = first.space.clone();
        let mut matrix = first.matrix.clone();
        for s in rest {
            space = space.join(&s.space);
            matrix = kron(&matrix, &s.matrix);
        }
        Ok(DensityMatrix { space, matrix })
    }

    /// U ρ U†
    pub fn conjugate(&self, u: &Operator) -> Result<DensityMatrix> {
        if u.space != self.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.dim(),
            });
        }
        Ok(DensityMatrix {
            space: self.space.clone(),
            matrix: &u.matrix * &self.matrix * u.matrix.adjoint(),
        })
    }

    /// ½‖ρ − σ‖₁
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if other.space != self.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let diff = &self.matrix - &other.matrix;
        Ok(0.5
            * hermitian_eigenvalues(&diff)
                .iter()
                .map(|v| v.abs())
                .sum::<f64>())
    }
}

/// Reduced state on the subsystems listed in `keep`.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let space = rho.space();
    let kept = space.selection(keep)?;
    if kept.len() == space.subsystems() {
        return Ok(rho.clone());
    }
    let traced: Vec<usize> = (0..space.subsystems())
        .filter(|i| !kept.contains(i))
        .collect();
    let kept_space = space.subspace(&kept);
    let traced_space = space.subspace(&traced);
    let dk = kept_space.total_dim();
    let dt = traced_space.total_dim();

    // full[a * dt + t] = flat index of (kept digits of a, traced digits of t)
    let mut full = vec![0usize; dk * dt];
    for flat in 0..space.total_dim() {
        let digits = space.digits(flat);
        let a = kept
            .iter()
            .fold(0, |acc, &i| acc * space.dims[i] + digits[i]);
        let t = traced
            .iter()
            .fold(0, |acc, &i| acc * space.dims[i] + digits[i]);
        full[a * dt + t] = flat;
    }

    let m = rho.matrix();
    let out = CMatrix::from_fn(dk, dk, |a, b| {
        (0..dt).fold(ZERO, |acc, t| acc + m[(full[a * dt + t], full[b * dt + t])])
    });
    Ok(DensityMatrix::new_unchecked(kept_space, out))
}

/// Tr[Aρ].
pub fn expectation(rho: &DensityMatrix, a: &Operator) -> Result<C64> {
    if a.space() != rho.space() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: a.dim(),
        });
    }
    let (am, rm) = (a.matrix(), rho.matrix());
    let d = rho.dim();
    let mut acc = ZERO;
    for j in 0..d {
        for i in 0..d {
            acc += am[(i, j)] * rm[(j, i)];
        }
    }
    Ok(acc)
}

fn entropy_of(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&l| l > ENTROPY_EIGEN_FLOOR)
        .map(|&l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
}

/// −Tr ρ ln ρ in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of(&rho.eigenvalues())
}

/// S(A) + S(B) − S(AB) for the split `part_a` | complement.
pub fn mutual_information(rho: &DensityMatrix, part_a: &[usize]) -> Result<f64> {
    let n = rho.space().subsystems();
    let a = rho.space().selection(part_a)?;
    let b: Vec<usize> = (0..n).filter(|i| !a.contains(i)).collect();
    if b.is_empty() {
        return Err(Error::InvalidSubsystems(
            "bipartition leaves the second part empty".into(),
        ));
    }
    let sa = von_neumann_entropy(&partial_trace(rho, &a)?);
    let sb = von_neumann_entropy(&partial_trace(rho, &b)?);
    let sab = von_neumann_entropy(rho);
    let mi = sa + sb - sab;
    Ok(if mi > -1e-9 { mi.max(0.0) } else { mi })
}

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigh(m);
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        for i in 0..m.nrows() {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vectors.adjoint()
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))².
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.space() != sigma.space() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let root = psd_sqrt(rho.matrix());
    let inner = &root * sigma.matrix() * &root;
    let inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
    let (values, _) = hermitian_eigh(&inner);
    let s: f64 = values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok(s * s)
}
