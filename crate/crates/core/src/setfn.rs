//! Set functions over a ground set `[n]`, marginal gains, and brute-force
//! structural analysis (weak diminishing-returns ratios, normalization and
//! monotonicity checks).
//!
//! Elements are 1-indexed: the range cost of a singleton is 1, which is the
//! convention the benchmark regularizer relies on.

use crate::error::{Error, Result};

/// Largest ground set for which full-lattice enumeration is attempted.
pub const ENUMERATION_GUARD: usize = 20;

/// Largest supported ground set (subsets are stored as 64-bit masks).
pub const MAX_GROUND: usize = 64;

/// The ground set `{1, …, n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundSet {
    n: usize,
}

impl GroundSet {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_GROUND {
            return Err(Error::Parameter(format!(
                "ground set size must be in 1..={MAX_GROUND}, got {n}"
            )));
        }
        Ok(Self { n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Iterator over all element indices `1..=n`.
    pub fn elements(&self) -> impl Iterator<Item = usize> {
        1..=self.n
    }

    /// Iterator over all `2^n` subsets. Requires `n` within the guard.
    pub fn subsets(&self) -> Result<impl Iterator<Item = Subset>> {
        if self.n > ENUMERATION_GUARD {
            return Err(Error::Capacity {
                n: self.n,
                max: ENUMERATION_GUARD,
            });
        }
        Ok((0u64..(1u64 << self.n)).map(Subset::from_mask))
    }

    pub fn full_subset(&self) -> Subset {
        Subset::from_mask(if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        })
    }
}

/// A subset of the ground set, stored as a bitmask (bit `i-1` ⇔ element `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset {
    mask: u64,
}

impl Subset {
    pub const EMPTY: Subset = Subset { mask: 0 };

    pub fn from_mask(mask: u64) -> Self {
        Self { mask }
    }

    /// Builds a subset from 1-indexed element indices.
    pub fn from_elements(ground: GroundSet, elements: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &i in elements {
            if i == 0 || i > ground.size() {
                return Err(Error::ElementOutOfRange {
                    index: i,
                    n: ground.size(),
                });
            }
            let bit = 1u64 << (i - 1);
            if mask & bit != 0 {
                return Err(Error::Contract(format!("duplicate element {i}")));
            }
            mask |= bit;
        }
        Ok(Self { mask })
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn contains(&self, element: usize) -> bool {
        element >= 1 && element <= 64 && self.mask & (1u64 << (element - 1)) != 0
    }

    pub fn insert(&self, element: usize) -> Self {
        Self {
            mask: self.mask | (1u64 << (element - 1)),
        }
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.mask & !other.mask == 0
    }

    /// Ascending 1-indexed members.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        let mask = self.mask;
        (1..=64usize).filter(move |i| mask & (1u64 << (i - 1)) != 0)
    }

    pub fn min_element(&self) -> Option<usize> {
        if self.mask == 0 {
            None
        } else {
            Some(self.mask.trailing_zeros() as usize + 1)
        }
    }

    pub fn max_element(&self) -> Option<usize> {
        if self.mask == 0 {
            None
        } else {
            Some(64 - self.mask.leading_zeros() as usize)
        }
    }

    /// Renders as `{1,3,4}`.
    pub fn display(&self) -> String {
        let members: Vec<String> = self.members().map(|i| i.to_string()).collect();
        format!("{{{}}}", members.join(","))
    }
}

/// A real-valued function on subsets of the ground set.
///
/// Implementations must be deterministic: repeated evaluation of the same
/// subset returns the same value.
pub trait SetFunction {
    fn ground(&self) -> GroundSet;

    fn evaluate(&self, s: Subset) -> f64;

    /// Marginal gain `f(S ∪ {i}) − f(S)` of adding element `i` to `S`.
    fn marginal_gain(&self, i: usize, s: Subset) -> Result<f64> {
        let n = self.ground().size();
        if i == 0 || i > n {
            return Err(Error::ElementOutOfRange { index: i, n });
        }
        if s.contains(i) {
            return Err(Error::Contract(format!(
                "marginal gain of {i} requested but {i} ∈ {}",
                s.display()
            )));
        }
        Ok(self.evaluate(s.insert(i)) - self.evaluate(s))
    }
}

impl<F: SetFunction + ?Sized> SetFunction for &F {
    fn ground(&self) -> GroundSet {
        (**self).ground()
    }
    fn evaluate(&self, s: Subset) -> f64 {
        (**self).evaluate(s)
    }
}

/// `F(S) = max(S) − min(S) + 1`, `F(∅) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct RangeCost {
    ground: GroundSet,
}

impl RangeCost {
    pub fn new(ground: GroundSet) -> Self {
        Self { ground }
    }
}

impl SetFunction for RangeCost {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn evaluate(&self, s: Subset) -> f64 {
        match (s.max_element(), s.min_element()) {
            (Some(max), Some(min)) => (max - min + 1) as f64,
            _ => 0.0,
        }
    }
}

/// Additive function `f(S) = Σ_{i∈S} w_i`.
#[derive(Debug, Clone)]
pub struct Modular {
    ground: GroundSet,
    weights: Vec<f64>,
}

impl Modular {
    pub fn new(ground: GroundSet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != ground.size() {
            return Err(Error::Parameter(format!(
                "expected {} weights, got {}",
                ground.size(),
                weights.len()
            )));
        }
        Ok(Self { ground, weights })
    }
}

impl SetFunction for Modular {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn evaluate(&self, s: Subset) -> f64 {
        s.members().map(|i| self.weights[i - 1]).sum()
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy)]
pub struct Zero {
    ground: GroundSet,
}

impl Zero {
    pub fn new(ground: GroundSet) -> Self {
        Self { ground }
    }
}

impl SetFunction for Zero {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn evaluate(&self, _s: Subset) -> f64 {
        0.0
    }
}

/// A function tabulated over all `2^n` subsets, indexed by mask.
#[derive(Debug, Clone)]
pub struct Table {
    ground: GroundSet,
    values: Vec<f64>,
}

impl Table {
    pub fn new(ground: GroundSet, values: Vec<f64>) -> Result<Self> {
        if ground.size() > ENUMERATION_GUARD {
            return Err(Error::Capacity {
                n: ground.size(),
                max: ENUMERATION_GUARD,
            });
        }
        if values.len() != 1 << ground.size() {
            return Err(Error::Parameter(format!(
                "expected {} table entries, got {}",
                1usize << ground.size(),
                values.len()
            )));
        }
        Ok(Self { ground, values })
    }

    /// Tabulates an arbitrary oracle (used to make repeated enumeration cheap).
    pub fn tabulate<F: SetFunction>(f: &F) -> Result<Self> {
        let ground = f.ground();
        let values = ground.subsets()?.map(|s| f.evaluate(s)).collect();
        Self::new(ground, values)
    }
}

impl SetFunction for Table {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn evaluate(&self, s: Subset) -> f64 {
        self.values[s.mask() as usize]
    }
}

/// An oracle adapter that counts evaluations.
pub struct Counted<F> {
    inner: F,
    calls: std::cell::Cell<u64>,
}

impl<F: SetFunction> Counted<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            calls: std::cell::Cell::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }
}

impl<F: SetFunction> SetFunction for Counted<F> {
    fn ground(&self) -> GroundSet {
        self.inner.ground()
    }

    fn evaluate(&self, s: Subset) -> f64 {
        self.calls.set(self.calls.get() + 1);
        self.inner.evaluate(s)
    }
}

/// A difference `f = f̄ − f_` of a nondecreasing weakly DR-submodular part and
/// a nondecreasing weakly DR-supermodular part.
#[derive(Debug, Clone)]
pub struct Decomposed<U, L> {
    pub upper: U,
    pub lower: L,
}

impl<U: SetFunction, L: SetFunction> Decomposed<U, L> {
    pub fn new(upper: U, lower: L) -> Self {
        Self { upper, lower }
    }
}

impl<U: SetFunction, L: SetFunction> SetFunction for Decomposed<U, L> {
    fn ground(&self) -> GroundSet {
        self.upper.ground()
    }

    fn evaluate(&self, s: Subset) -> f64 {
        self.upper.evaluate(s) - self.lower.evaluate(s)
    }
}

/// Measured weak diminishing-returns ratios of a set function.
///
/// `alpha` is the largest value with `f(i|A) ≥ alpha·f(i|B)` over all
/// `A ⊆ B`, `i ∉ B`; `beta` the largest with `f(i|B) ≥ beta·f(i|A)`.
/// A ratio constrains the result only when the dominated gain is strictly
/// positive; with no constraining pair the value is `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrRatios {
    pub alpha: f64,
    pub beta: f64,
}

/// Exhaustively measures the weak DR ratios of `f`.
///
/// Enumerates every nested pair `A ⊆ B` and every `i ∉ B`, so it is only
/// viable for small ground sets (guarded at [`ENUMERATION_GUARD`]).
pub fn analyze_dr_ratios<F: SetFunction>(f: &F) -> Result<DrRatios> {
    let table = Table::tabulate(f)?;
    let n = table.ground().size();
    let full = table.ground().full_subset().mask();

    let mut alpha = f64::INFINITY;
    let mut beta = f64::INFINITY;

    // gain(i, S) via the tabulated values
    let gain = |i: usize, mask: u64| -> f64 {
        table.values[(mask | (1u64 << (i - 1))) as usize] - table.values[mask as usize]
    };

    for b in 0u64..=full {
        for i in 1..=n {
            let bit = 1u64 << (i - 1);
            if b & bit != 0 {
                continue;
            }
            let gain_b = gain(i, b);
            // Walk all subsets A of B via the standard submask trick.
            let mut a = b;
            loop {
                let gain_a = gain(i, a);
                if gain_b > 0.0 {
                    alpha = alpha.min(gain_a / gain_b);
                }
                if gain_a > 0.0 {
                    beta = beta.min(gain_b / gain_a);
                }
                if a == 0 {
                    break;
                }
                a = (a - 1) & b;
            }
        }
    }

    Ok(DrRatios { alpha, beta })
}

/// Which half of a decomposition a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Upper,
    Lower,
}

/// Result of [`check_assumptions`]: every found violation, never an error.
#[derive(Debug, Clone, Default)]
pub struct AssumptionReport {
    /// Parts with `f(∅) ≠ 0`.
    pub normalization: Vec<(Part, f64)>,
    /// `(part, S, i)` with `f(S ∪ {i}) < f(S)`.
    pub monotonicity: Vec<(Part, Subset, usize)>,
    /// Subsets with `f̄(S) + f_(S) > L`.
    pub bound: Vec<(Subset, f64)>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.normalization.is_empty() && self.monotonicity.is_empty() && self.bound.is_empty()
    }
}

/// Verifies normalization and monotonicity of both parts and the shared
/// upper bound `f̄(S) + f_(S) ≤ L` by exhaustive enumeration.
pub fn check_assumptions<U: SetFunction, L: SetFunction>(
    df: &Decomposed<U, L>,
    bound: f64,
) -> Result<AssumptionReport> {
    let upper = Table::tabulate(&df.upper)?;
    let lower = Table::tabulate(&df.lower)?;
    let ground = upper.ground();
    let mut report = AssumptionReport::default();

    for (part, table) in [(Part::Upper, &upper), (Part::Lower, &lower)] {
        let at_empty = table.evaluate(Subset::EMPTY);
        if at_empty != 0.0 {
            report.normalization.push((part, at_empty));
        }
        for s in ground.subsets()? {
            for i in ground.elements() {
                if !s.contains(i) && table.evaluate(s.insert(i)) < table.evaluate(s) {
                    report.monotonicity.push((part, s, i));
                }
            }
        }
    }

    for s in ground.subsets()? {
        let total = upper.evaluate(s) + lower.evaluate(s);
        if total > bound {
            report.bound.push((s, total));
        }
    }

    Ok(report)
}
