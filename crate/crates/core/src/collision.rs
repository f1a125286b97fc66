//! Collision-model dynamics: each ancilla interacts unitarily with the cavity
//! (or with a cascade of cavities, in order) for a time Δt and is discarded.
//!
//! The interaction is the resonant Λ coupling
//!
//! V = Ω [ a† ⊗ (|g₁⟩⟨e| + i|g₂⟩⟨e|) + a ⊗ (|e⟩⟨g₁| − i|e⟩⟨g₂|) ],
//!
//! which couples |e⟩ only to the bright state (|g₁⟩ + i|g₂⟩)/√2. With the
//! ancilla coherence (β²/2)e^{iφ} the bright population is β²(1 − sin φ)/2, so
//! the cavity relaxes to a Gibbs state at ω / ln(β²(1 − sin φ)/2α²).
//!
//! Reduced maps are stored as sparse Kraus operators. The collision unitary
//! conserves excitation number, so every Kraus operator of a single cavity is
//! a weighted shift and a collision costs O(N²) instead of O(N³).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{
    fock_space, hermitian_eigh, hermitian_exp, tensor, CMatrix, DensityMatrix, HilbertSpace,
    Operator, C64,
};

/// Ancilla dimension: |e⟩, |g₁⟩, |g₂⟩.
pub const ANCILLA_DIM: usize = 3;
/// Population allowed in the top two Fock levels before a run is tainted.
pub const TRUNCATION_GUARD: f64 = 1e-6;
/// Occupation floor used as the denominator of the relative convergence test.
pub const OCCUPATION_FLOOR: f64 = 1e-12;
/// Unitary entries below this magnitude are treated as structural zeros.
const CLEAN_TOL: f64 = 1e-13;
/// Fock links whose total transfer probability is below this are considered cut.
const TRAPPING_TOL: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionSettings {
    /// Coupling strength Ω, t⁻¹.
    pub coupling: f64,
    /// Interaction time Δt per collision, t.
    pub duration: f64,
    /// Relative change of ⟨a†a⟩ over `window` collisions that counts as converged.
    pub convergence_tol: f64,
    pub max_collisions: u64,
    pub window: usize,
    /// Switch a Fock-diagonal thermalization to population doubling after this
    /// many plain collisions. `None` always iterates one collision at a time.
    pub fast_forward_after: Option<u64>,
}

impl Default for CollisionSettings {
    fn default() -> Self {
        Self {
            coupling: 1.0,
            duration: 0.5,
            convergence_tol: 1e-7,
            max_collisions: 1_000_000,
            window: 10,
            fast_forward_after: Some(1024),
        }
    }
}

impl CollisionSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(invalid(
                "coupling",
                format!("{} is negative", self.coupling),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(
                "duration",
                format!("{} is not positive", self.duration),
            ));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(invalid("convergence_tol", "must be positive"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        Ok(())
    }

    /// Rabi angle of the one-photon manifold, √2 Ω Δt.
    pub fn rabi_angle(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.coupling * self.duration
    }
}

fn ancilla_space() -> HilbertSpace {
    fock_space(ANCILLA_DIM).expect("ancilla dimension is valid")
}

/// V on cavity ⊗ ancilla.
pub fn interaction_hamiltonian(cavity: &HilbertSpace, coupling: f64) -> Result<Operator> {
    let a = crate::operator::annihilation(cavity)?;
    let mut lower = CMatrix::zeros(ANCILLA_DIM, ANCILLA_DIM);
    lower[(1, 0)] = C64::new(1.0, 0.0);
    lower[(2, 0)] = C64::new(0.0, 1.0);
    let lower = Operator::new(ancilla_space(), lower)?;
    let emit = tensor(&[&a.adjoint(), &lower])?;
    let absorb = tensor(&[&a, &lower.adjoint()])?;
    Ok(emit.plus(&absorb)?.scaled(C64::new(coupling, 0.0)))
}

/// exp(−i V Δt) on cavity ⊗ ancilla.
pub fn collision_unitary(levels: usize, settings: &CollisionSettings) -> Result<Operator> {
    settings.validate()?;
    let v = interaction_hamiltonian(&fock_space(levels)?, settings.coupling)?;
    hermitian_exp(&v, C64::new(0.0, -settings.duration))
}

/// Sparse square matrix as (row, col, value) triplets.
#[derive(Clone, Debug, Default)]
struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v != ZERO {
                    entries.push((r, c, v));
                }
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    fn scalar(v: C64) -> Self {
        let entries = if v != ZERO {
            vec![(0, 0, v)]
        } else {
            Vec::new()
        };
        Self { dim: 1, entries }
    }

    fn identity(dim: usize, v: C64) -> Self {
        let entries = if v != ZERO {
            (0..dim).map(|i| (i, i, v)).collect()
        } else {
            Vec::new()
        };
        Self { dim, entries }
    }

    fn kron(&self, other: &SparseOp) -> SparseOp {
        let d2 = other.dim;
        let mut entries = Vec::with_capacity(self.entries.len() * other.entries.len());
        for &(r1, c1, v1) in &self.entries {
            for &(r2, c2, v2) in &other.entries {
                entries.push((r1 * d2 + r2, c1 * d2 + c2, v1 * v2));
            }
        }
        SparseOp {
            dim: self.dim * d2,
            entries,
        }
    }

    /// Sums a list of same-size operators, merging duplicate positions.
    fn sum(dim: usize, parts: impl IntoIterator<Item = SparseOp>) -> SparseOp {
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for part in parts {
            debug_assert_eq!(part.dim, dim);
            for (r, c, v) in part.entries {
                *acc.entry((c, r)).or_insert(ZERO) += v;
            }
        }
        let entries = acc
            .into_iter()
            .filter(|(_, v)| *v != ZERO)
            .map(|((c, r), v)| (r, c, v))
            .collect();
        SparseOp { dim, entries }
    }

    fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    fn single_entry_columns(&self) -> bool {
        let mut seen = vec![false; self.dim];
        for &(_, c, _) in &self.entries {
            if seen[c] {
                return false;
            }
            seen[c] = true;
        }
        true
    }
}

/// Zeroes entries of the collision unitary that are round-off, so that the
/// excitation-number structure is exact.
fn clean(u: &CMatrix) -> CMatrix {
    u.map(|z| if z.norm() < CLEAN_TOL { ZERO } else { z })
}

/// Collision unitary of one cavity split into ancilla blocks
/// B[m'][m] = (I ⊗ ⟨m'|) U (I ⊗ |m⟩). Independent of the bath and of ω.
#[derive(Clone, Debug)]
pub struct CollisionKernel {
    levels: usize,
    blocks: Vec<Vec<SparseOp>>,
}

impl CollisionKernel {
    pub fn new(levels: usize, settings: &CollisionSettings) -> Result<Self> {
        let u = clean(collision_unitary(levels, settings)?.matrix());
        let blocks = (0..ANCILLA_DIM)
            .map(|to| {
                (0..ANCILLA_DIM)
                    .map(|from| {
                        let block = CMatrix::from_fn(levels, levels, |r, c| {
                            u[(r * ANCILLA_DIM + to, c * ANCILLA_DIM + from)]
                        });
                        SparseOp::from_dense(&block)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { levels, blocks })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }
}

/// Reduced one-collision map on one or more cavities, in Kraus form.
#[derive(Clone, Debug)]
pub struct CollisionChannel {
    space: HilbertSpace,
    kraus: Vec<SparseOp>,
    population_map: Option<DMatrix<f64>>,
}

impl CollisionChannel {
    /// Map of one collision with a single cavity of `levels` Fock states.
    pub fn single(
        levels: usize,
        ancilla: &DensityMatrix,
        settings: &CollisionSettings,
    ) -> Result<Self> {
        Self::cascade(&[levels], ancilla, settings, &[true])
    }

    /// Map of one ancilla crossing the cavities in order. Inactive cavities
    /// are skipped (identity in place of their unitary).
    pub fn cascade(
        levels: &[usize],
        ancilla: &DensityMatrix,
        settings: &CollisionSettings,
        active: &[bool],
    ) -> Result<Self> {
        let mut kernels: Vec<CollisionKernel> = Vec::new();
        for &n in levels {
            if !kernels.iter().any(|k| k.levels == n) {
                kernels.push(CollisionKernel::new(n, settings)?);
            }
        }
        let chosen: Vec<&CollisionKernel> = levels
            .iter()
            .map(|&n| {
                kernels
                    .iter()
                    .find(|k| k.levels == n)
                    .expect("kernel built above")
            })
            .collect();
        Self::from_kernels(&chosen, ancilla, active)
    }

    /// Same as [`CollisionChannel::cascade`] with precomputed kernels, one per cavity.
    pub fn from_kernels(
        kernels: &[&CollisionKernel],
        ancilla: &DensityMatrix,
        active: &[bool],
    ) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidSubsystems("no cavities".into()));
        }
        if active.len() != kernels.len() {
            return Err(Error::DimensionMismatch {
                expected: kernels.len(),
                got: active.len(),
            });
        }
        if ancilla.dim() != ANCILLA_DIM {
            return Err(Error::DimensionMismatch {
                expected: ANCILLA_DIM,
                got: ancilla.dim(),
            });
        }
        let space = HilbertSpace::new(kernels.iter().map(|k| k.levels).collect())?;

        // λ = Σ_k p_k |ψ_k⟩⟨ψ_k|
        let (weights, vectors) = hermitian_eigh(ancilla.matrix());
        let mixture: Vec<(f64, usize)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, &p)| (p, k))
            .collect();

        // ops[m][k]: ancilla ends in |m⟩ having started in |ψ_k⟩
        let mut ops: Vec<Vec<SparseOp>> = (0..ANCILLA_DIM)
            .map(|m| {
                mixture
                    .iter()
                    .map(|&(p, k)| SparseOp::scalar(vectors[(m, k)] * p.sqrt()))
                    .collect()
            })
            .collect();

        for (kernel, &on) in kernels.iter().zip(active) {
            let n = kernel.levels;
            let idle;
            let blocks = if on {
                &kernel.blocks
            } else {
                idle = (0..ANCILLA_DIM)
                    .map(|to| {
                        (0..ANCILLA_DIM)
                            .map(|from| {
                                let v = if to == from { 1.0 } else { 0.0 };
                                SparseOp::identity(n, C64::new(v, 0.0))
                            })
                            .collect()
                    })
                    .collect();
                &idle
            };
            let dim = ops[0][0].dim * n;
            ops = (0..ANCILLA_DIM)
                .map(|to| {
                    (0..mixture.len())
                        .map(|k| {
                            SparseOp::sum(
                                dim,
                                (0..ANCILLA_DIM).map(|from| ops[from][k].kron(&blocks[to][from])),
                            )
                        })
                        .collect()
                })
                .collect();
        }

        let kraus: Vec<SparseOp> = ops
            .into_iter()
            .flatten()
            .filter(|k| !k.entries.is_empty())
            .collect();

        let d = space.total_dim();
        let population_map = if kraus.iter().all(SparseOp::single_entry_columns) {
            let mut t = DMatrix::<f64>::zeros(d, d);
            for k in &kraus {
                for &(r, c, v) in &k.entries {
                    t[(r, c)] += v.norm_sqr();
                }
            }
            Some(t)
        } else {
            None
        };

        Ok(Self {
            space,
            kraus,
            population_map,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn kraus_count(&self) -> usize {
        self.kraus.len()
    }

    /// Dense copies of the Kraus operators.
    pub fn kraus_operators(&self) -> Vec<CMatrix> {
        self.kraus.iter().map(SparseOp::to_dense).collect()
    }

    /// max |Σ K†K − I|.
    pub fn completeness_error(&self) -> f64 {
        let d = self.space.total_dim();
        let mut acc = CMatrix::zeros(d, d);
        for k in self.kraus_operators() {
            acc += k.adjoint() * &k;
        }
        (acc - CMatrix::identity(d, d))
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    /// True when Fock-diagonal inputs stay Fock-diagonal.
    pub fn preserves_diagonal(&self) -> bool {
        self.population_map.is_some()
    }

    /// Column-stochastic population transfer matrix, when diagonal states are preserved.
    pub fn population_map(&self) -> Option<&DMatrix<f64>> {
        self.population_map.as_ref()
    }

    /// True when some Fock link n ↔ n+1 carries no population at all, so the
    /// fixed point depends on the initial state. Only meaningful for a single
    /// cavity with a population map.
    pub fn has_trapping_link(&self) -> bool {
        match &self.population_map {
            Some(t) if self.space.is_single() => {
                (0..t.nrows() - 1).any(|n| t[(n + 1, n)] + t[(n, n + 1)] <= TRAPPING_TOL)
            }
            _ => false,
        }
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.space() != &self.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.total_dim(),
                got: rho.dim(),
            });
        }
        let d = rho.dim();
        let input = rho.matrix().as_slice();
        let mut out = vec![ZERO; d * d];
        let mut scratch = vec![ZERO; d * d];
        for k in &self.kraus {
            scratch.iter_mut().for_each(|z| *z = ZERO);
            // scratch = K ρ, column by column
            for j in 0..d {
                let col = &input[j * d..(j + 1) * d];
                let dst = &mut scratch[j * d..(j + 1) * d];
                for &(r, c, v) in &k.entries {
                    dst[r] += v * col[c];
                }
            }
            // out += scratch K†
            for &(r, c, v) in &k.entries {
                let w = v.conj();
                let (src, dst) = (c * d, r * d);
                for i in 0..d {
                    out[dst + i] += w * scratch[src + i];
                }
            }
        }
        let m = CMatrix::from_vec(d, d, out);
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Ok(DensityMatrix::new_unchecked(self.space.clone(), m))
    }
}

/// Tr_anc[U (ρ ⊗ λ) U†] for one cavity.
pub fn collide_once(
    rho: &DensityMatrix,
    ancilla: &DensityMatrix,
    settings: &CollisionSettings,
) -> Result<DensityMatrix> {
    if !rho.space().is_single() {
        return Err(Error::InvalidSpace(format!(
            "collide_once expects a single cavity, got dims {:?}",
            rho.space().dims()
        )));
    }
    CollisionChannel::single(rho.dim(), ancilla, settings)?.apply(rho)
}

/// Joint state of cascaded cavities plus the decoupling flags.
#[derive(Clone, Debug)]
pub struct CascadeState {
    pub rho: DensityMatrix,
    /// A thermalized cavity no longer interacts with the beam.
    pub thermalized: Vec<bool>,
    /// Current cavity frequencies; an isochore needs them all equal.
    pub omegas: Vec<f64>,
}

impl CascadeState {
    pub fn new(rho: DensityMatrix, omegas: Vec<f64>) -> Result<Self> {
        let n = rho.space().subsystems();
        if omegas.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: omegas.len(),
            });
        }
        Ok(Self {
            rho,
            thermalized: vec![false; n],
            omegas,
        })
    }

    pub fn active(&self) -> Vec<bool> {
        self.thermalized.iter().map(|t| !t).collect()
    }
}

pub(crate) fn check_resonance(omegas: &[f64]) -> Result<()> {
    let first = omegas[0];
    if omegas
        .iter()
        .any(|w| (w - first).abs() > 1e-12 * first.abs().max(1.0))
    {
        return Err(Error::FrequencyMismatch(omegas.to_vec()));
    }
    Ok(())
}

/// One ancilla crosses every non-thermalized cavity in order, then is discarded.
pub fn collide_cascade(
    state: &CascadeState,
    ancilla: &DensityMatrix,
    settings: &CollisionSettings,
) -> Result<CascadeState> {
    check_resonance(&state.omegas)?;
    let channel =
        CollisionChannel::cascade(state.rho.space().dims(), ancilla, settings, &state.active())?;
    Ok(CascadeState {
        rho: channel.apply(&state.rho)?,
        thermalized: state.thermalized.clone(),
        omegas: state.omegas.clone(),
    })
}

/// Populations of one mode, read off the joint diagonal.
pub fn mode_populations(rho: &DensityMatrix, subsystem: usize) -> Result<Vec<f64>> {
    let dims = rho.space().dims();
    if subsystem >= dims.len() {
        return Err(Error::InvalidSubsystems(format!(
            "index {subsystem} out of range for {} subsystems",
            dims.len()
        )));
    }
    let inner: usize = dims[subsystem + 1..].iter().product();
    let n = dims[subsystem];
    let mut pops = vec![0.0; n];
    let m = rho.matrix();
    for i in 0..rho.dim() {
        pops[(i / inner) % n] += m[(i, i)].re;
    }
    Ok(pops)
}

/// ⟨a†a⟩ of one mode.
pub fn mode_occupation(rho: &DensityMatrix, subsystem: usize) -> Result<f64> {
    Ok(mode_populations(rho, subsystem)?
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum())
}

/// Population held by the two highest Fock levels of one mode.
pub fn truncation_tail(rho: &DensityMatrix, subsystem: usize) -> Result<f64> {
    let pops = mode_populations(rho, subsystem)?;
    Ok(pops[pops.len() - 2..].iter().sum())
}

pub fn bose_einstein(omega: f64, temperature: f64) -> f64 {
    1.0 / (omega / temperature).exp_m1()
}

/// Gibbs state of a truncated mode, renormalized on the kept levels.
pub fn gibbs_state(levels: usize, omega: f64, temperature: f64) -> Result<DensityMatrix> {
    if !(temperature > 0.0) {
        return Err(invalid(
            "temperature",
            format!("{temperature} is not positive"),
        ));
    }
    if !(omega > 0.0) {
        return Err(invalid("omega", format!("{omega} is not positive")));
    }
    let space = fock_space(levels)?;
    let x = omega / temperature;
    let weights: Vec<f64> = (0..levels).map(|k| (-x * k as f64).exp()).collect();
    let z: f64 = weights.iter().sum();
    let pops: Vec<f64> = weights.iter().map(|w| w / z).collect();
    DensityMatrix::from_populations(&space, &pops)
}

/// Temperature whose Bose–Einstein occupation equals ⟨a†a⟩; zero for the vacuum.
pub fn effective_temperature(rho: &DensityMatrix, omega: f64) -> Result<f64> {
    if !rho.space().is_single() {
        return Err(Error::InvalidSpace(
            "effective_temperature expects a single mode".into(),
        ));
    }
    if !(omega > 0.0) {
        return Err(invalid("omega", format!("{omega} is not positive")));
    }
    let n = mode_occupation(rho, 0)?;
    if n <= 0.0 {
        return Ok(0.0);
    }
    Ok(omega / (1.0 / n).ln_1p())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermalizationStatus {
    Converged,
    /// `max_collisions` reached first; the partial state is returned.
    NotConverged,
    /// The chain of Fock populations is cut at some level (Rabi angle at a
    /// multiple of π), so the stationary state is not unique.
    Trapped,
}

#[derive(Clone, Debug)]
pub struct Thermalization {
    pub state: DensityMatrix,
    pub collisions: u64,
    pub status: ThermalizationStatus,
    /// False when ⟨a†a⟩ changed direction along the run.
    pub monotone: bool,
    pub truncation_tail: f64,
    pub off_diagonal_mass: f64,
}

impl Thermalization {
    pub fn converged(&self) -> bool {
        self.status == ThermalizationStatus::Converged
    }

    pub fn tainted(&self) -> bool {
        self.truncation_tail > TRUNCATION_GUARD
    }
}

/// Windowed relative-change detector on a scalar sequence.
#[derive(Clone, Debug)]
pub(crate) struct WindowDetector {
    window: usize,
    tol: f64,
    history: std::collections::VecDeque<f64>,
}

impl WindowDetector {
    pub(crate) fn new(window: usize, tol: f64) -> Self {
        Self {
            window,
            tol,
            history: std::collections::VecDeque::with_capacity(window + 1),
        }
    }

    /// Pushes a value; true once it differs from the value `window` pushes ago
    /// by less than `tol` relative.
    pub(crate) fn push(&mut self, value: f64) -> bool {
        self.history.push_back(value);
        if self.history.len() <= self.window {
            return false;
        }
        let old = self.history.pop_front().expect("history is non-empty");
        relative_change(old, value) < self.tol
    }
}

fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / new.abs().max(OCCUPATION_FLOOR)
}

#[derive(Default)]
struct MonotoneTracker {
    last: Option<f64>,
    direction: i8,
    monotone: bool,
}

impl MonotoneTracker {
    fn new() -> Self {
        Self {
            monotone: true,
            ..Default::default()
        }
    }

    fn push(&mut self, value: f64) {
        if let Some(prev) = self.last {
            let step = value - prev;
            if step.abs() > 1e-12 * value.abs().max(OCCUPATION_FLOOR) {
                let dir = step.signum() as i8;
                if self.direction != 0 && dir != self.direction {
                    self.monotone = false;
                }
                self.direction = dir;
            }
        }
        self.last = Some(value);
    }
}

/// Repeats single-cavity collisions until ⟨a†a⟩ settles.
pub fn thermalize(
    rho: &DensityMatrix,
    ancilla: &DensityMatrix,
    settings: &CollisionSettings,
) -> Result<Thermalization> {
    let channel = CollisionChannel::single(rho.dim(), ancilla, settings)?;
    thermalize_with(rho, &channel, settings, |_, _| {})
}

fn occupation_of(pops: &[f64]) -> f64 {
    pops.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// One doubling of a collision count: D ← 2D + D², with columns re-balanced
/// so that P = I + D stays exactly column-stochastic.
fn double_generator(d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut next = d * 2.0 + d * d;
    for c in 0..next.ncols() {
        let off: f64 = (0..next.nrows())
            .filter(|&r| r != c)
            .map(|r| next[(r, c)])
            .sum();
        next[(c, c)] = -off;
    }
    next
}

/// [`thermalize`] with a prebuilt channel and an observer called with
/// `(collision count, state)` at every visited point, starting at zero.
///
/// Once `fast_forward_after` plain collisions have passed without
/// convergence, a Fock-diagonal state is advanced by doubling: the population
/// map is squared, so the visited counts grow geometrically while each visited
/// state is still the exact state after that many collisions. The windowed
/// test is applied at every visited count.
pub fn thermalize_with(
    rho: &DensityMatrix,
    channel: &CollisionChannel,
    settings: &CollisionSettings,
    mut observer: impl FnMut(u64, &DensityMatrix),
) -> Result<Thermalization> {
    settings.validate()?;
    if !rho.space().is_single() || channel.space() != rho.space() {
        return Err(Error::InvalidSpace(format!(
            "thermalize expects a single cavity matching the channel, got dims {:?}",
            rho.space().dims()
        )));
    }
    let finish = |state: DensityMatrix, collisions, converged: bool, monotone| {
        let status = if channel.has_trapping_link() {
            ThermalizationStatus::Trapped
        } else if converged {
            ThermalizationStatus::Converged
        } else {
            ThermalizationStatus::NotConverged
        };
        let truncation_tail = truncation_tail(&state, 0)?;
        let off_diagonal_mass = state.off_diagonal_mass();
        Ok(Thermalization {
            state,
            collisions,
            status,
            monotone,
            truncation_tail,
            off_diagonal_mass,
        })
    };

    let mut detector = WindowDetector::new(settings.window, settings.convergence_tol);
    let mut trend = MonotoneTracker::new();
    let mut state = rho.clone();
    observer(0, &state);
    let n0 = mode_occupation(&state, 0)?;
    detector.push(n0);
    trend.push(n0);

    let mut k: u64 = 0;
    while k < settings.max_collisions {
        if settings.fast_forward_after == Some(k)
            && k > 0
            && channel.preserves_diagonal()
            && state.off_diagonal_mass() == 0.0
        {
            return fast_forward(state, k, channel, settings, &mut observer, trend, finish);
        }
        state = channel.apply(&state)?;
        k += 1;
        observer(k, &state);
        let n = mode_occupation(&state, 0)?;
        trend.push(n);
        if detector.push(n) {
            return finish(state, k, true, trend.monotone);
        }
    }
    finish(state, k, false, trend.monotone)
}

fn fast_forward(
    state: DensityMatrix,
    start: u64,
    channel: &CollisionChannel,
    settings: &CollisionSettings,
    observer: &mut impl FnMut(u64, &DensityMatrix),
    mut trend: MonotoneTracker,
    finish: impl Fn(DensityMatrix, u64, bool, bool) -> Result<Thermalization>,
) -> Result<Thermalization> {
    let t = channel
        .population_map()
        .expect("fast forward requires a population map");
    let d = t.nrows();
    let space = state.space().clone();
    let to_state = |v: &DVector<f64>| {
        let diag = DVector::from_iterator(d, v.iter().map(|&p| C64::new(p, 0.0)));
        DensityMatrix::new_unchecked(space.clone(), CMatrix::from_diagonal(&diag))
    };

    let mut v = DVector::from_vec(state.populations());
    let mut generator = t - DMatrix::<f64>::identity(d, d);
    let mut jump: u64 = 1;
    while jump * 2 <= start {
        generator = double_generator(&generator);
        jump *= 2;
    }
    let mut k = start;
    loop {
        // windowed test: compare with the state `window` collisions later
        let mut w = v.clone();
        for _ in 0..settings.window {
            w = t * &w;
        }
        let (n_now, n_later) = (occupation_of(v.as_slice()), occupation_of(w.as_slice()));
        if relative_change(n_now, n_later) < settings.convergence_tol {
            let k_end = k + settings.window as u64;
            let s = to_state(&w);
            trend.push(n_later);
            observer(k_end, &s);
            return finish(s, k_end, true, trend.monotone);
        }
        if k.saturating_add(jump) > settings.max_collisions {
            return finish(to_state(&v), k, false, trend.monotone);
        }
        v = &v + &generator * &v;
        k += jump;
        trend.push(occupation_of(v.as_slice()));
        observer(k, &to_state(&v));
        generator = double_generator(&generator);
        jump *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{build_phaseonium, solve_alpha_for_temperature, PhaseoniumParams};
    use crate::operator::{mutual_information, partial_trace, DensityMatrix};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{PI, SQRT_2};

    fn settings(coupling: f64, duration: f64) -> CollisionSettings {
        CollisionSettings {
            coupling,
            duration,
            ..Default::default()
        }
    }

    fn excited() -> DensityMatrix {
        DensityMatrix::basis(&fock_space(3).unwrap(), 0).unwrap()
    }

    fn ground() -> DensityMatrix {
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(0.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
        ]));
        DensityMatrix::new(fock_space(3).unwrap(), m).unwrap()
    }

    /// Dense oracle: Tr_anc[U (ρ ⊗ λ) U†] built from the full joint matrices.
    fn dense_collision(
        rho: &DensityMatrix,
        ancilla: &DensityMatrix,
        s: &CollisionSettings,
    ) -> DensityMatrix {
        let u = collision_unitary(rho.dim(), s).unwrap();
        let joint = DensityMatrix::tensor(&[rho, ancilla]).unwrap();
        partial_trace(&joint.conjugate(&u).unwrap(), &[0]).unwrap()
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    #[test]
    fn hamiltonian_cases() {
        let cav = fock_space(4).unwrap();
        let zero = interaction_hamiltonian(&cav, 0.0).unwrap();
        assert!(zero.matrix().iter().all(|z| z.norm() == 0.0));

        let v = interaction_hamiltonian(&cav, 0.7).unwrap();
        assert!(v.is_hermitian(1e-15));
        // ⟨1,g₁|V|0,e⟩ = Ω
        assert_abs_diff_eq!(v.matrix()[(3 + 1, 0)].re, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(v.matrix()[(3 + 1, 0)].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_bright_block_is_sigma_x() {
        let omega = 0.9;
        let v = interaction_hamiltonian(&fock_space(3).unwrap(), omega).unwrap();
        let d = v.dim();
        let mut e0 = DVector::<C64>::zeros(d);
        e0[0] = C64::new(1.0, 0.0);
        let mut bright = DVector::<C64>::zeros(d);
        bright[3 + 1] = C64::new(1.0 / SQRT_2, 0.0);
        bright[3 + 2] = C64::new(0.0, 1.0 / SQRT_2);
        let basis = [e0, bright];
        for (i, x) in basis.iter().enumerate() {
            for (j, y) in basis.iter().enumerate() {
                let elem = (x.adjoint() * v.matrix() * y)[(0, 0)];
                let expected = if i == j { 0.0 } else { SQRT_2 * omega };
                assert_abs_diff_eq!(elem.re, expected, epsilon = 1e-14);
                assert_abs_diff_eq!(elem.im, 0.0, epsilon = 1e-14);
            }
        }
        // V|0,e⟩ lies entirely inside the block
        let image = v.matrix() * &basis[0];
        assert_abs_diff_eq!(image.norm(), SQRT_2 * omega, epsilon = 1e-14);
    }

    #[test]
    fn unitary_is_unitary() {
        let u = collision_unitary(12, &settings(1.3, 0.4)).unwrap();
        assert!(u.unitarity_error() < 1e-9);
    }

    #[test]
    fn kraus_map_matches_dense_oracle() {
        let s = settings(0.8, 0.6);
        let p = PhaseoniumParams::new(0.3, 1.1, 1.0).unwrap();
        let anc = build_phaseonium(&p).unwrap();
        let mut rng_state = 0.37_f64;
        let levels = 6;
        let m = CMatrix::from_fn(levels, levels, |i, j| {
            rng_state = (rng_state * 997.0 + 0.123).fract();
            C64::new(rng_state - 0.5, if i == j { 0.0 } else { 0.3 * rng_state })
        });
        let m = &m * m.adjoint();
        let tr = m.trace();
        let rho = DensityMatrix::new(fock_space(levels).unwrap(), m / tr).unwrap();
        let fast = collide_once(&rho, anc.rho(), &s).unwrap();
        let slow = dense_collision(&rho, anc.rho(), &s);
        assert!(max_diff(fast.matrix(), slow.matrix()) < 1e-12);
        let channel = CollisionChannel::single(levels, anc.rho(), &s).unwrap();
        assert!(channel.completeness_error() < 1e-12);
        assert!(channel.preserves_diagonal());
    }

    #[test]
    fn zero_interaction_is_identity() {
        let anc = build_phaseonium(&PhaseoniumParams::new(0.4, 0.3, 1.0).unwrap()).unwrap();
        let rho = gibbs_state(8, 1.0, 0.9).unwrap();
        let out = collide_once(&rho, anc.rho(), &settings(0.0, 0.5)).unwrap();
        assert!(max_diff(out.matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn emission_probability_matches_rabi_oracle() {
        let vacuum = DensityMatrix::basis(&fock_space(5).unwrap(), 0).unwrap();
        for &wt in &[0.1, 0.45, 1.0, 2.1] {
            let out = collide_once(&vacuum, &excited(), &settings(1.0, wt)).unwrap();
            let p1 = out.matrix()[(1, 1)].re;
            assert_abs_diff_eq!(p1, (SQRT_2 * wt).sin().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn ground_ancilla_leaves_vacuum_alone() {
        let vacuum = DensityMatrix::basis(&fock_space(5).unwrap(), 0).unwrap();
        let out = collide_once(&vacuum, &ground(), &settings(1.3, 0.7)).unwrap();
        assert!(max_diff(out.matrix(), vacuum.matrix()) < 1e-15);
    }

    #[test]
    fn collide_once_rejects_composite_state() {
        let joint = DensityMatrix::maximally_mixed(&HilbertSpace::new(vec![3, 3]).unwrap());
        assert!(collide_once(&joint, &excited(), &settings(1.0, 0.3)).is_err());
        let rho = DensityMatrix::maximally_mixed(&fock_space(3).unwrap());
        let bad_ancilla = DensityMatrix::maximally_mixed(&fock_space(2).unwrap());
        assert!(collide_once(&rho, &bad_ancilla, &settings(1.0, 0.3)).is_err());
    }

    fn hot_fuel(levels_omega: f64, temperature: f64, phi: f64) -> DensityMatrix {
        let alpha = solve_alpha_for_temperature(temperature, phi, levels_omega).unwrap();
        build_phaseonium(&PhaseoniumParams::new(alpha, phi, levels_omega).unwrap())
            .unwrap()
            .rho()
            .clone()
    }

    #[test]
    fn cascade_with_second_cavity_decoupled_reduces_to_single() {
        let s = settings(0.9, 0.5);
        let omega = 2.0 * PI;
        let fuel = hot_fuel(omega, 2.0, 0.4);
        let levels = 5;
        let r1 = DensityMatrix::basis(&fock_space(levels).unwrap(), 0).unwrap();
        let r2 = gibbs_state(levels, omega, 1.0).unwrap();
        let joint = DensityMatrix::tensor(&[&r1, &r2]).unwrap();
        let mut state = CascadeState::new(joint, vec![omega, omega]).unwrap();
        state.thermalized[1] = true;
        let out = collide_cascade(&state, &fuel, &s).unwrap();
        let single = collide_once(&r1, &fuel, &s).unwrap();
        let p1 = partial_trace(&out.rho, &[0]).unwrap();
        let p2 = partial_trace(&out.rho, &[1]).unwrap();
        assert!(max_diff(p1.matrix(), single.matrix()) < 1e-13);
        assert!(max_diff(p2.matrix(), r2.matrix()) < 1e-13);
    }

    /// Oracle for the cascade: U₂U₁ on S₁⊗S₂⊗A built from dense embeddings.
    fn dense_cascade(
        rho12: &DensityMatrix,
        ancilla: &DensityMatrix,
        s: &CollisionSettings,
    ) -> DensityMatrix {
        let n = rho12.space().dims()[0];
        let u = collision_unitary(n, s).unwrap();
        // U acts on (S, A); permute to S1⊗S2⊗A by explicit index mapping
        let d = n * n * 3;
        let mut u1 = CMatrix::zeros(d, d);
        let mut u2 = CMatrix::zeros(d, d);
        for i1 in 0..n {
            for i2 in 0..n {
                for a in 0..3 {
                    for j1 in 0..n {
                        for j2 in 0..n {
                            for b in 0..3 {
                                let row = (i1 * n + i2) * 3 + a;
                                let col = (j1 * n + j2) * 3 + b;
                                if i2 == j2 {
                                    u1[(row, col)] = u.matrix()[(i1 * 3 + a, j1 * 3 + b)];
                                }
                                if i1 == j1 {
                                    u2[(row, col)] = u.matrix()[(i2 * 3 + a, j2 * 3 + b)];
                                }
                            }
                        }
                    }
                }
            }
        }
        let joint = DensityMatrix::tensor(&[rho12, ancilla]).unwrap();
        let total = Operator::new(joint.space().clone(), &u2 * &u1).unwrap();
        partial_trace(&joint.conjugate(&total).unwrap(), &[0, 1]).unwrap()
    }

    #[test]
    fn cascade_generates_correlations_matching_joint_oracle() {
        let s = settings(1.0, 0.6);
        let omega = 1.0;
        let fuel = hot_fuel(omega, 1.5, 0.9);
        let levels = 6;
        let r = gibbs_state(levels, omega, 0.4).unwrap();
        let joint = DensityMatrix::tensor(&[&r, &r]).unwrap();
        let state = CascadeState::new(joint, vec![omega, omega]).unwrap();
        let out = collide_cascade(&state, &fuel, &s).unwrap();
        let oracle = dense_cascade(&state.rho, &fuel, &s);
        assert!(max_diff(out.rho.matrix(), oracle.matrix()) < 1e-12);
        let mi = mutual_information(&out.rho, &[0]).unwrap();
        let mi_oracle = mutual_information(&oracle, &[0]).unwrap();
        assert!(mi > 1e-6, "mutual information {mi}");
        assert_abs_diff_eq!(mi, mi_oracle, epsilon = 1e-10);
    }

    #[test]
    fn cascade_rejects_detuned_cavities() {
        let fuel = hot_fuel(1.0, 1.0, 0.0);
        let r = gibbs_state(3, 1.0, 0.4).unwrap();
        let joint = DensityMatrix::tensor(&[&r, &r]).unwrap();
        let state = CascadeState::new(joint, vec![1.0, 1.01]).unwrap();
        assert!(matches!(
            collide_cascade(&state, &fuel, &settings(1.0, 0.5)),
            Err(Error::FrequencyMismatch(_))
        ));
    }

    #[test]
    fn gibbs_product_is_cascade_fixed_point() {
        let s = settings(1.1, 0.45);
        let omega = 2.0 * PI;
        let temperature = 2.0;
        let fuel = hot_fuel(omega, temperature, 2.2);
        let levels = 8;
        let g = gibbs_state(levels, omega, temperature).unwrap();
        let joint = DensityMatrix::tensor(&[&g, &g]).unwrap();
        let mut state = CascadeState::new(joint.clone(), vec![omega, omega]).unwrap();
        for _ in 0..5 {
            state = collide_cascade(&state, &fuel, &s).unwrap();
        }
        assert!(state.rho.trace_distance(&joint).unwrap() < 1e-12);
    }

    #[test]
    fn gibbs_is_single_fixed_point() {
        let s = settings(0.7, 0.8);
        let omega = 1.0;
        let t = 0.8;
        let fuel = hot_fuel(omega, t, 5.0);
        let g = gibbs_state(20, omega, t).unwrap();
        let out = collide_once(&g, &fuel, &s).unwrap();
        assert!(out.trace_distance(&g).unwrap() < 1e-8);
    }

    #[test]
    fn thermalize_from_vacuum_hits_bose_einstein() {
        let omega = 2.0 * PI;
        let t = 2.0;
        let fuel = hot_fuel(omega, t, 0.3);
        let vacuum = DensityMatrix::basis(&fock_space(20).unwrap(), 0).unwrap();
        let out = thermalize(&vacuum, &fuel, &settings(1.0, 0.5)).unwrap();
        assert!(out.converged());
        assert!(!out.tainted());
        assert!(out.off_diagonal_mass < 1e-6);
        let n = mode_occupation(&out.state, 0).unwrap();
        assert_relative_eq!(n, bose_einstein(omega, t), max_relative = 0.01);
        let teff = effective_temperature(&out.state, omega).unwrap();
        assert_relative_eq!(teff, t, max_relative = 0.01);
    }

    #[test]
    fn thermalize_starting_at_fixed_point_stops_within_window() {
        let omega = 1.0;
        let t = 0.7;
        let fuel = hot_fuel(omega, t, 1.0);
        let g = gibbs_state(20, omega, t).unwrap();
        let s = settings(1.0, 0.5);
        let out = thermalize(&g, &fuel, &s).unwrap();
        assert!(out.converged());
        assert!(out.collisions <= s.window as u64);
    }

    #[test]
    fn near_resonant_rabi_angle_is_flagged() {
        let omega = 2.0 * PI;
        let fuel = hot_fuel(omega, 2.0, 0.0);
        let vacuum = DensityMatrix::basis(&fock_space(10).unwrap(), 0).unwrap();
        let mut s = settings(1.0, PI / SQRT_2 - 1e-3);
        s.max_collisions = 3000;
        s.fast_forward_after = None;
        let out = thermalize(&vacuum, &fuel, &s).unwrap();
        assert_eq!(out.status, ThermalizationStatus::NotConverged);

        // exactly on resonance the vacuum never leaves: trapped, not converged
        s.duration = PI / SQRT_2;
        let out = thermalize(&vacuum, &fuel, &s).unwrap();
        assert_eq!(out.status, ThermalizationStatus::Trapped);
    }

    #[test]
    fn fast_forward_matches_plain_iteration() {
        let omega = 1.0;
        let fuel = hot_fuel(omega, 0.9, 1.2);
        let vacuum = DensityMatrix::basis(&fock_space(15).unwrap(), 0).unwrap();
        let channel = CollisionChannel::single(15, &fuel, &settings(0.2, 0.3)).unwrap();

        // plain reference: exactly 144 collisions
        let mut plain = vacuum.clone();
        for _ in 0..144 {
            plain = channel.apply(&plain).unwrap();
        }
        let mut s = settings(0.2, 0.3);
        // 48 plain collisions, then jumps of 32 and 64
        s.fast_forward_after = Some(48);
        s.convergence_tol = 1e-300;
        s.max_collisions = 144;
        let mut visited = Vec::new();
        let mut last = None;
        let out = thermalize_with(&vacuum, &channel, &s, |k, st| {
            visited.push(k);
            if k == 144 {
                last = Some(st.clone());
            }
        })
        .unwrap();
        assert_eq!(out.status, ThermalizationStatus::NotConverged);
        assert_eq!(out.collisions, 144);
        assert_eq!(&visited[47..], &[47, 48, 80, 144]);
        let ff = last.unwrap();
        assert!(max_diff(ff.matrix(), plain.matrix()) < 1e-13);
    }

    #[test]
    fn effective_temperature_cases() {
        let space = fock_space(30).unwrap();
        let vacuum = DensityMatrix::basis(&space, 0).unwrap();
        assert_eq!(effective_temperature(&vacuum, 1.0).unwrap(), 0.0);
        let g = gibbs_state(60, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            effective_temperature(&g, 1.0).unwrap(),
            1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn mode_populations_of_product() {
        let a = gibbs_state(4, 1.0, 0.5).unwrap();
        let b = gibbs_state(3, 1.0, 2.0).unwrap();
        let joint = DensityMatrix::tensor(&[&a, &b]).unwrap();
        let pa = mode_populations(&joint, 0).unwrap();
        let pb = mode_populations(&joint, 1).unwrap();
        for (x, y) in pa.iter().zip(a.populations()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
        for (x, y) in pb.iter().zip(b.populations()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
    }
}
