//! Symmetries expressed as permutations of `vec(A)`.
//!
//! A tensor has the structure encoded by a permutation `P` when
//! `P vec(A) = vec(A)` (or `-vec(A)` for the skew variant). The canonical
//! maps are
//!
//! * perfect shuffle `S`: cyclic rotation of the indices (symmetric tensors),
//! * exchange `J`: every index `i` replaced by `n - i + 1` (centrosymmetric),
//! * `S J` (persymmetric),
//! * shifted-index maps (Toeplitz, Hankel): each orbit of entries that must
//!   be equal is visited as one cycle in increasing linear position.
//!
//! For a factor grid the big map factors as `Q^T (P_d ⊗ ... ⊗ P_1) Q`
//! ([`compose_factored`]), which is what makes the structure carry over to
//! the Kronecker factors.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::perm::PermutationMap;
use crate::tensor::{advance, checked_product, DenseTensor, Shape};
use crate::tkpsvd::{build_q_permutation, FactorGrid, TkpsvdResult};

/// Default tolerance on the structure residual.
pub const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureKind {
    Symmetric,
    Persymmetric,
    Centrosymmetric,
    Toeplitz,
    Hankel,
    General(PermutationMap),
}

impl StructureKind {
    pub fn name(&self) -> &'static str {
        match self {
            StructureKind::Symmetric => "symmetric",
            StructureKind::Persymmetric => "persymmetric",
            StructureKind::Centrosymmetric => "centrosymmetric",
            StructureKind::Toeplitz => "toeplitz",
            StructureKind::Hankel => "hankel",
            StructureKind::General(_) => "general",
        }
    }

    /// Parses one of the canonical names (the general kind needs a map).
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" => Ok(StructureKind::Symmetric),
            "persymmetric" => Ok(StructureKind::Persymmetric),
            "centrosymmetric" => Ok(StructureKind::Centrosymmetric),
            "toeplitz" => Ok(StructureKind::Toeplitz),
            "hankel" => Ok(StructureKind::Hankel),
            other => Err(Error::Format(format!("unknown structure kind '{other}'"))),
        }
    }

    fn needs_cube(&self, order: usize) -> bool {
        match self {
            StructureKind::Symmetric | StructureKind::Persymmetric => true,
            StructureKind::Hankel => order > 2,
            _ => false,
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-mode index shifts; the nonzero ones share one magnitude.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftPattern {
    shifts: Vec<i64>,
}

impl ShiftPattern {
    pub fn new(shifts: Vec<i64>) -> Result<Self> {
        let mut magnitude = None;
        for &s in shifts.iter().filter(|&&s| s != 0) {
            match magnitude {
                None => magnitude = Some(s.unsigned_abs()),
                Some(m) if m != s.unsigned_abs() => {
                    return Err(Error::BadShiftPattern(format!(
                        "nonzero shifts must agree up to sign, got {shifts:?}"
                    )))
                }
                Some(_) => {}
            }
        }
        if magnitude.is_none() {
            return Err(Error::BadShiftPattern("all shifts are zero".into()));
        }
        Ok(ShiftPattern { shifts })
    }

    /// All shifts equal to one.
    pub fn toeplitz(order: usize) -> Result<Self> {
        ShiftPattern::new(vec![1; order])
    }

    /// `(1, -1, 0, ..., 0)`.
    pub fn hankel(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::BadShiftPattern("a Hankel shift needs two modes".into()));
        }
        let mut shifts = vec![0; order];
        shifts[0] = 1;
        shifts[1] = -1;
        ShiftPattern::new(shifts)
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }
}

fn cubical_side(dims: &[usize]) -> Result<usize> {
    let n = dims[0];
    if dims.iter().any(|&m| m != n) {
        return Err(Error::ShapeMismatch(format!(
            "structure requires a cubical tensor, got {}",
            Shape::new(dims)?
        )));
    }
    Ok(n)
}

/// Perfect shuffle of size `n^k`: `(S x)[i1, i2, ..., ik] = x[i2, ..., ik, i1]`.
pub fn perfect_shuffle(n: usize, k: usize) -> Result<PermutationMap> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidDimension("perfect shuffle needs n, k >= 1".into()));
    }
    let total = checked_product(&vec![n; k])?;
    let stride = total / n;
    let mut map = Vec::with_capacity(total);
    for b in 0..stride {
        for a in 0..n {
            map.push(b + stride * a);
        }
    }
    Ok(PermutationMap::from_trusted(map))
}

/// Reversal of `n` positions.
pub fn exchange_map(n: usize) -> PermutationMap {
    PermutationMap::from_trusted((0..n).rev().collect())
}

/// `S J` for a cubical `n^k` tensor.
pub fn persym_map(n: usize, k: usize) -> Result<PermutationMap> {
    let s = perfect_shuffle(n, k)?;
    s.compose(&exchange_map(s.len()))
}

struct Orbits {
    parent: Vec<usize>,
}

impl Orbits {
    fn new(n: usize) -> Self {
        Orbits {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the representative is the first position
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    /// Orbit labels numbered by first appearance.
    fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut id = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut count = 0;
        for p in 0..n {
            let r = self.find(p);
            if id[r] == usize::MAX {
                id[r] = count;
                count += 1;
            }
            labels[p] = id[r];
        }
        (labels, count)
    }

    /// Each orbit as a cycle through its members in increasing order.
    fn cycle_map(&mut self) -> PermutationMap {
        let n = self.parent.len();
        let (labels, count) = self.labels();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
        for p in 0..n {
            members[labels[p]].push(p);
        }
        let mut map = vec![0; n];
        for orbit in &members {
            for (t, &p) in orbit.iter().enumerate() {
                map[p] = orbit[(t + 1) % orbit.len()];
            }
        }
        PermutationMap::from_trusted(map)
    }

    fn join_map(&mut self, p: &PermutationMap) {
        for (t, &s) in p.as_slice().iter().enumerate() {
            self.union(t, s);
        }
    }
}

fn join_shift(orbits: &mut Orbits, dims: &[usize], shifts: &[i64]) {
    let strides = Shape::new(dims).map(|s| s.strides()).unwrap_or_default();
    let mut idx = vec![0usize; dims.len()];
    for p in 0..orbits.parent.len() {
        let mut target = 0usize;
        let mut inside = true;
        for r in 0..dims.len() {
            let moved = idx[r] as i64 + shifts[r];
            if moved < 0 || moved >= dims[r] as i64 {
                inside = false;
                break;
            }
            target += moved as usize * strides[r];
        }
        if inside {
            orbits.union(p, target);
        }
        advance(&mut idx, dims);
    }
}

fn join_full_symmetry(orbits: &mut Orbits, n: usize, k: usize) -> Result<()> {
    orbits.join_map(&perfect_shuffle(n, k)?);
    if k > 2 {
        // a transposition together with the cycle generates every reordering
        let dims = vec![n; k];
        let swap: Vec<usize> = (1..=k).map(|m| match m {
            1 => 2,
            2 => 1,
            m => m,
        }).collect();
        let positions: Vec<f64> = (0..orbits.parent.len()).map(|p| p as f64).collect();
        let swapped = DenseTensor::new(&dims, positions)?.permute_modes(&swap)?;
        for (t, &s) in swapped.data().iter().enumerate() {
            orbits.union(t, s as usize);
        }
    }
    Ok(())
}

/// Map whose orbits are the classes of entries equal under the shift
/// pattern (optionally combined with full index symmetry).
pub fn shifted_index_map(dims: &[usize], pattern: &ShiftPattern, symmetric: bool) -> Result<PermutationMap> {
    let shape = Shape::new(dims)?;
    if pattern.shifts().len() != dims.len() {
        return Err(Error::BadShiftPattern(format!(
            "{} shifts for an order-{} tensor",
            pattern.shifts().len(),
            dims.len()
        )));
    }
    let mut orbits = Orbits::new(shape.numel());
    join_shift(&mut orbits, dims, pattern.shifts());
    if symmetric {
        let n = cubical_side(dims)?;
        join_full_symmetry(&mut orbits, n, dims.len())?;
    }
    Ok(orbits.cycle_map())
}

/// The canonical map characterizing `kind` for a tensor of the given shape.
pub fn map_for_kind(kind: &StructureKind, dims: &[usize]) -> Result<PermutationMap> {
    let shape = Shape::new(dims)?;
    let k = dims.len();
    if kind.needs_cube(k) {
        cubical_side(dims)?;
    }
    match kind {
        StructureKind::Symmetric => perfect_shuffle(dims[0], k),
        StructureKind::Persymmetric => persym_map(dims[0], k),
        StructureKind::Centrosymmetric => Ok(exchange_map(shape.numel())),
        StructureKind::Toeplitz => shifted_index_map(dims, &ShiftPattern::toeplitz(k)?, false),
        StructureKind::Hankel => shifted_index_map(dims, &ShiftPattern::hankel(k)?, k > 2),
        StructureKind::General(p) => {
            if p.len() != shape.numel() {
                return Err(Error::ShapeMismatch(format!(
                    "map of size {} for a tensor with {} entries",
                    p.len(),
                    shape.numel()
                )));
            }
            Ok(p.clone())
        }
    }
}

/// `Q^T (P_d ⊗ ... ⊗ P_1) Q` for the grid's `Q`.
pub fn compose_factored(parts: &[PermutationMap], grid: &FactorGrid) -> Result<PermutationMap> {
    if parts.len() != grid.degree() {
        return Err(Error::ShapeMismatch(format!(
            "{} maps for a degree-{} grid",
            parts.len(),
            grid.degree()
        )));
    }
    for (i, p) in parts.iter().enumerate() {
        if p.len() != grid.factor_numel(i) {
            return Err(Error::ShapeMismatch(format!(
                "map {} has size {}, factor has {} entries",
                i + 1,
                p.len(),
                grid.factor_numel(i)
            )));
        }
    }
    let mut big = parts[parts.len() - 1].clone();
    for p in parts[..parts.len() - 1].iter().rev() {
        big = big.kron(p);
    }
    let q = build_q_permutation(grid);
    q.inverse().compose(&big)?.compose(&q)
}

/// Orbits of the entries forced equal by `kind`.
fn kind_orbits(kind: &StructureKind, dims: &[usize]) -> Result<Orbits> {
    let numel = Shape::new(dims)?.numel();
    let mut orbits = Orbits::new(numel);
    match kind {
        StructureKind::Symmetric => {
            let n = cubical_side(dims)?;
            join_full_symmetry(&mut orbits, n, dims.len())?;
        }
        other => orbits.join_map(&map_for_kind(other, dims)?),
    }
    Ok(orbits)
}

/// Random tensor with exactly the structure of `kind`: one standard normal
/// value per orbit, drawn in order of the orbits' first positions.
/// Symmetric tensors are invariant under every index reordering.
pub fn generate(kind: &StructureKind, dims: &[usize], seed: u64) -> Result<DenseTensor> {
    let mut orbits = kind_orbits(kind, dims)?;
    let (labels, count) = orbits.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..count).map(|_| StandardNormal.sample(&mut rng)).collect();
    DenseTensor::new(dims, labels.iter().map(|&l| values[l]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    /// `+1` structured, `-1` skew; whichever fits better.
    pub sign: i8,
    /// `min_s || P a - s a ||` for the normalized `a`.
    pub residual: f64,
    /// `a^T P a`.
    pub alignment: f64,
}

impl StructureReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.residual <= tol
    }

    pub fn is_skew(&self, tol: f64) -> bool {
        self.holds(tol) && self.sign < 0
    }
}

/// Tests `P vec(t) = ±vec(t)`. The zero tensor reports sign `+1` and
/// residual 0.
pub fn check_structure(t: &DenseTensor, p: &PermutationMap) -> Result<StructureReport> {
    if p.len() != t.numel() {
        return Err(Error::ShapeMismatch(format!(
            "map of size {} for a tensor with {} entries",
            p.len(),
            t.numel()
        )));
    }
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(StructureReport {
            sign: 1,
            residual: 0.0,
            alignment: 1.0,
        });
    }
    let a: Vec<f64> = t.data().iter().map(|x| x / norm).collect();
    let pa = p.apply(&a)?;
    let alignment = crate::tensor::pairwise_dot(&a, &pa);
    let dist = |s: f64| -> f64 {
        let diff: Vec<f64> = pa.iter().zip(&a).map(|(x, y)| x - s * y).collect();
        crate::tensor::pairwise_dot(&diff, &diff).sqrt()
    };
    let (plus, minus) = (dist(1.0), dist(-1.0));
    Ok(if minus < plus {
        StructureReport {
            sign: -1,
            residual: minus,
            alignment,
        }
    } else {
        StructureReport {
            sign: 1,
            residual: plus,
            alignment,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermStructureSummary {
    pub sigma: f64,
    pub reports: Vec<StructureReport>,
    pub all_structured: bool,
    pub skew_count: usize,
    pub in_multiplet: bool,
}

impl TermStructureSummary {
    pub fn signs(&self) -> Vec<i8> {
        self.reports.iter().map(|r| r.sign).collect()
    }

    /// Whether the term agrees with the preservation result: structured
    /// with an even skew count, or exempt because of a weight multiplet.
    pub fn consistent(&self) -> bool {
        self.in_multiplet || (self.all_structured && self.skew_count.is_multiple_of(2))
    }
}

/// Checks every factor of every term against its per-factor map.
pub fn analyze_preservation(
    res: &TkpsvdResult,
    parts: &[PermutationMap],
    tol: f64,
) -> Result<Vec<TermStructureSummary>> {
    let grid = &res.grid;
    if parts.len() != grid.degree() {
        return Err(Error::ShapeMismatch(format!(
            "{} maps for a degree-{} decomposition",
            parts.len(),
            grid.degree()
        )));
    }
    res.factors
        .iter()
        .enumerate()
        .map(|(j, per)| {
            let reports = per
                .iter()
                .zip(parts)
                .map(|(f, p)| check_structure(f, p))
                .collect::<Result<Vec<_>>>()?;
            let all_structured = reports.iter().all(|r| r.holds(tol));
            let skew_count = reports.iter().filter(|r| r.is_skew(tol)).count();
            Ok(TermStructureSummary {
                sigma: res.sigmas[j],
                reports,
                all_structured,
                skew_count,
                in_multiplet: res.in_multiplet(j),
            })
        })
        .collect()
}

/// Per-factor maps of `kind` for every factor of `grid`.
pub fn factor_maps(kind: &StructureKind, grid: &FactorGrid) -> Result<Vec<PermutationMap>> {
    (0..grid.degree())
        .map(|i| map_for_kind(kind, grid.factor_dims(i)))
        .collect()
}
