//! Finite discounted MDPs with sparse transition rows and a value-iteration
//! solver.
//!
//! Costs are stored as nonnegative `J(s, a)` and enter the backup negated:
//!
//! ```text
//! V'(s) = max_a { -J(s, a) + γ Σ_s' P(s' | s, a) V(s') }
//! ```
//!
//! Rows are laid out contiguously in `(state, action)` order behind an offset
//! table, so a sweep is a single linear pass over the successor arrays.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Allowed deviation of a row sum from one.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Two q-values closer than this (relative to magnitude) count as tied.
pub const TIE_TOL: f64 = 1e-9;

pub const DEFAULT_MAX_SWEEPS: usize = 2000;

const BUILD_BLOCK: usize = 4096;
const SWEEP_BLOCK: usize = 2048;

pub fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * (1.0 + a.abs().max(b.abs()))
}

#[derive(Debug, Clone)]
pub struct MdpModel {
    state_count: usize,
    action_count: usize,
    gamma: f64,
    cost: Vec<f64>,
    admissible: Vec<bool>,
    offsets: Vec<u64>,
    succ: Vec<u32>,
    prob: Vec<f64>,
}

struct Block {
    cost: Vec<f64>,
    admissible: Vec<bool>,
    lens: Vec<u32>,
    succ: Vec<u32>,
    prob: Vec<f64>,
}

impl MdpModel {
    /// Builds a model by calling `row(state, action, out)` for every pair.
    ///
    /// The closure pushes `(successor, probability)` pairs into `out` and
    /// returns the cost, or `None` when the action is inadmissible in that
    /// state. Rows are generated in parallel over state blocks.
    pub fn from_fn<F>(state_count: usize, action_count: usize, gamma: f64, row: F) -> Result<Self>
    where
        F: Fn(usize, usize, &mut Vec<(usize, f64)>) -> Option<f64> + Sync,
    {
        if state_count == 0 || action_count == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if state_count > u32::MAX as usize {
            return Err(Error::InvalidModel("state count exceeds u32 index range".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidModel(format!("discount {gamma} outside (0, 1)")));
        }
        let starts: Vec<usize> = (0..state_count).step_by(BUILD_BLOCK).collect();
        let blocks: Vec<Block> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + BUILD_BLOCK).min(state_count);
                let rows = (end - start) * action_count;
                let mut block = Block {
                    cost: Vec::with_capacity(rows),
                    admissible: Vec::with_capacity(rows),
                    lens: Vec::with_capacity(rows),
                    succ: Vec::new(),
                    prob: Vec::new(),
                };
                let mut out = Vec::new();
                for s in start..end {
                    for a in 0..action_count {
                        out.clear();
                        match row(s, a, &mut out) {
                            Some(c) => {
                                block.cost.push(c);
                                block.admissible.push(true);
                                block.lens.push(out.len() as u32);
                                for &(next, p) in &out {
                                    block.succ.push(u32::try_from(next).unwrap_or(u32::MAX));
                                    block.prob.push(p);
                                }
                            }
                            None => {
                                block.cost.push(0.0);
                                block.admissible.push(false);
                                block.lens.push(0);
                            }
                        }
                    }
                }
                block
            })
            .collect();

        let rows = state_count * action_count;
        let nnz: usize = blocks.iter().map(|b| b.succ.len()).sum();
        let mut model = MdpModel {
            state_count,
            action_count,
            gamma,
            cost: Vec::with_capacity(rows),
            admissible: Vec::with_capacity(rows),
            offsets: Vec::with_capacity(rows + 1),
            succ: Vec::with_capacity(nnz),
            prob: Vec::with_capacity(nnz),
        };
        let mut offset = 0u64;
        model.offsets.push(0);
        for block in blocks {
            model.cost.extend_from_slice(&block.cost);
            model.admissible.extend_from_slice(&block.admissible);
            for len in &block.lens {
                offset += *len as u64;
                model.offsets.push(offset);
            }
            model.succ.extend_from_slice(&block.succ);
            model.prob.extend_from_slice(&block.prob);
        }
        model.validate()?;
        Ok(model)
    }

    /// Checks every row: admissible costs finite and nonnegative, successor
    /// indices in range, probabilities in `[0, 1]` summing to one, and at
    /// least one admissible action per state.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.state_count {
            let mut any = false;
            for a in 0..self.action_count {
                let r = s * self.action_count + a;
                if !self.admissible[r] {
                    continue;
                }
                any = true;
                let c = self.cost[r];
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::InvalidModel(format!("cost J({s}, {a}) = {c} is not a finite nonnegative value")));
                }
                let (lo, hi) = (self.offsets[r] as usize, self.offsets[r + 1] as usize);
                let mut sum = 0.0;
                for i in lo..hi {
                    let p = self.prob[i];
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidModel(format!("P(.|{s}, {a}) has probability {p}")));
                    }
                    if self.succ[i] as usize >= self.state_count {
                        return Err(Error::InvalidModel(format!(
                            "P(.|{s}, {a}) points at state {} beyond {}",
                            self.succ[i], self.state_count
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidModel(format!("P(.|{s}, {a}) sums to {sum}")));
                }
            }
            if !any {
                return Err(Error::InvalidModel(format!("state {s} has no admissible action")));
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nonzeros(&self) -> usize {
        self.succ.len()
    }

    pub fn is_admissible(&self, state: usize, action: usize) -> bool {
        self.admissible[state * self.action_count + action]
    }

    pub fn cost(&self, state: usize, action: usize) -> Option<f64> {
        let r = state * self.action_count + action;
        self.admissible[r].then(|| self.cost[r])
    }

    /// Successor distribution of an admissible pair.
    pub fn row(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = state * self.action_count + action;
        let (lo, hi) = (self.offsets[r] as usize, self.offsets[r + 1] as usize);
        self.succ[lo..hi]
            .iter()
            .zip(&self.prob[lo..hi])
            .map(|(&s, &p)| (s as usize, p))
    }

    /// Returns a copy with every cost multiplied by `factor` (> 0).
    pub fn scaled_costs(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for c in &mut m.cost {
            *c *= factor;
        }
        m
    }

    #[inline]
    fn q_unchecked(&self, r: usize, values: &[f64]) -> f64 {
        let (lo, hi) = (self.offsets[r] as usize, self.offsets[r + 1] as usize);
        let mut ev = 0.0;
        for i in lo..hi {
            ev += self.prob[i] * values[self.succ[i] as usize];
        }
        -self.cost[r] + self.gamma * ev
    }

    #[inline]
    fn backup(&self, s: usize, values: &[f64]) -> f64 {
        let base = s * self.action_count;
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.action_count {
            if self.admissible[base + a] {
                let q = self.q_unchecked(base + a, values);
                if q > best {
                    best = q;
                }
            }
        }
        best
    }
}

/// Value estimate plus the bookkeeping of how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    /// Sup-norm change of the last sweep (infinite before the first).
    pub residual: f64,
    pub sweeps: usize,
}

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            residual: f64::INFINITY,
            sweeps: 0,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            residual: f64::INFINITY,
            sweeps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SweepMode {
    /// Full-vector update; deterministic under any state partitioning.
    #[default]
    Jacobi,
    /// In-place update in state order; single worker only.
    GaussSeidel,
}

/// One synchronous Bellman backup over every state.
pub fn bellman_sweep(model: &MdpModel, v: &ValueFunction) -> ValueFunction {
    let old = &v.values;
    let mut new = vec![0.0; model.state_count];
    let residual = new
        .par_chunks_mut(SWEEP_BLOCK)
        .enumerate()
        .map(|(bi, chunk)| {
            let start = bi * SWEEP_BLOCK;
            let mut res = 0.0_f64;
            for (i, slot) in chunk.iter_mut().enumerate() {
                let s = start + i;
                let nv = model.backup(s, old);
                res = res.max((nv - old[s]).abs());
                *slot = nv;
            }
            res
        })
        .reduce(|| 0.0, f64::max);
    ValueFunction {
        values: new,
        residual,
        sweeps: v.sweeps + 1,
    }
}

/// Error-free `a + b = s + e`.
#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Renormalizes `s + e` with `|e|` small against `|s|`.
#[inline(always)]
fn renorm(s: f64, e: f64) -> Dd {
    let hi = s + e;
    [hi, e - (hi - s)]
}

/// Unevaluated sum `hi + lo`. The solver iterates in this form so that
/// rounding of the stored iterate stays far below any residual of interest.
type Dd = [f64; 2];

fn dd_gt(a: Dd, b: Dd) -> bool {
    a[0] > b[0] || (a[0] == b[0] && a[1] > b[1])
}

fn dd_dist(a: Dd, b: Dd) -> f64 {
    let (s, e) = two_sum(a[0], -b[0]);
    renorm(s, e + (a[1] - b[1]))[0].abs()
}

impl MdpModel {
    #[inline(always)]
    fn q_dd(&self, r: usize, v: &[Dd]) -> Dd {
        let (lo, hi) = (self.offsets[r] as usize, self.offsets[r + 1] as usize);
        let (mut sh, mut sl) = (0.0_f64, 0.0_f64);
        for i in lo..hi {
            let p = self.prob[i];
            let [vh, vl] = v[self.succ[i] as usize];
            let ph = p * vh;
            let pe = p.mul_add(vh, -ph);
            let (t, e) = two_sum(sh, ph);
            sh = t;
            sl += e + pe + p * vl;
        }
        let g = self.gamma;
        let gh = g * sh;
        let ge = g.mul_add(sh, -gh) + g * sl;
        let (t, e) = two_sum(-self.cost[r], gh);
        renorm(t, e + ge)
    }

    #[inline(always)]
    fn backup_dd(&self, s: usize, v: &[Dd]) -> Dd {
        let base = s * self.action_count;
        let mut best = [f64::NEG_INFINITY, 0.0];
        for a in 0..self.action_count {
            if self.admissible[base + a] {
                let q = self.q_dd(base + a, v);
                if dd_gt(q, best) {
                    best = q;
                }
            }
        }
        best
    }
}

#[inline(always)]
fn sweep_block(model: &MdpModel, old: &[Dd], start: usize, chunk: &mut [Dd]) -> f64 {
    let mut res = 0.0_f64;
    for (i, slot) in chunk.iter_mut().enumerate() {
        let s = start + i;
        let nv = model.backup_dd(s, old);
        res = res.max(dd_dist(nv, old[s]));
        *slot = nv;
    }
    res
}

#[inline(always)]
fn sweep_in_place(model: &MdpModel, v: &mut [Dd]) -> f64 {
    let mut res = 0.0_f64;
    for s in 0..v.len() {
        let nv = model.backup_dd(s, v);
        res = res.max(dd_dist(nv, v[s]));
        v[s] = nv;
    }
    res
}

// Same kernels compiled with hardware FMA; `mul_add` is a library call
// otherwise.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "fma")]
unsafe fn sweep_block_fma(model: &MdpModel, old: &[Dd], start: usize, chunk: &mut [Dd]) -> f64 {
    sweep_block(model, old, start, chunk)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "fma")]
unsafe fn sweep_in_place_fma(model: &MdpModel, v: &mut [Dd]) -> f64 {
    sweep_in_place(model, v)
}

fn has_fma() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn jacobi_sweep_dd(model: &MdpModel, old: &[Dd]) -> (Vec<Dd>, f64) {
    let fma = has_fma();
    let mut new = vec![[0.0, 0.0]; old.len()];
    let residual = new
        .par_chunks_mut(SWEEP_BLOCK)
        .enumerate()
        .map(|(bi, chunk)| {
            let start = bi * SWEEP_BLOCK;
            #[cfg(target_arch = "x86_64")]
            if fma {
                // SAFETY: FMA support was detected at run time.
                return unsafe { sweep_block_fma(model, old, start, chunk) };
            }
            let _ = fma;
            sweep_block(model, old, start, chunk)
        })
        .reduce(|| 0.0, f64::max);
    (new, residual)
}

fn gauss_seidel_sweep_dd(model: &MdpModel, v: &mut [Dd]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: FMA support was detected at run time.
        return unsafe { sweep_in_place_fma(model, v) };
    }
    sweep_in_place(model, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    Converged,
    SweepBudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub eta: f64,
    pub max_sweeps: usize,
    pub mode: SweepMode,
    pub initial: Option<Vec<f64>>,
}

impl SolveOptions {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            mode: SweepMode::Jacobi,
            initial: None,
        }
    }

    pub fn max_sweeps(mut self, n: usize) -> Self {
        self.max_sweeps = n;
        self
    }

    pub fn mode(mut self, mode: SweepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn initial(mut self, values: Vec<f64>) -> Self {
        self.initial = Some(values);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub value: ValueFunction,
    pub termination: Termination,
    /// Residual after each sweep.
    pub residuals: Vec<f64>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Iterates sweeps until `‖V' − V‖∞ < eta` or the sweep budget runs out.
/// The iterate is carried as a double-double; `values` is its rounded sum.
pub fn solve(model: &MdpModel, opts: &SolveOptions) -> Result<Solution> {
    if !(opts.eta > 0.0 && opts.eta.is_finite()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {}", opts.eta)));
    }
    let init = match &opts.initial {
        Some(init) if init.len() != model.state_count => {
            return Err(Error::Dimension(format!(
                "initial value vector has {} entries, model has {} states",
                init.len(),
                model.state_count
            )))
        }
        Some(init) => init.clone(),
        None => vec![0.0; model.state_count],
    };
    let mut v: Vec<Dd> = init.into_iter().map(|x| [x, 0.0]).collect();
    let mut residual = f64::INFINITY;
    let mut residuals = Vec::new();
    let mut termination = Termination::SweepBudgetExhausted;
    while residuals.len() < opts.max_sweeps {
        residual = match opts.mode {
            SweepMode::Jacobi => {
                let (next, r) = jacobi_sweep_dd(model, &v);
                v = next;
                r
            }
            SweepMode::GaussSeidel => gauss_seidel_sweep_dd(model, &mut v),
        };
        residuals.push(residual);
        log::trace!("sweep {} residual {:e}", residuals.len(), residual);
        if residual < opts.eta {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(Solution {
        value: ValueFunction {
            values: v.iter().map(|x| x[0] + x[1]).collect(),
            residual,
            sweeps: residuals.len(),
        },
        termination,
        residuals,
    })
}

/// Greedy policy with respect to `v`; ties go to the lowest action index.
pub fn extract_policy(model: &MdpModel, v: &ValueFunction) -> Vec<usize> {
    (0..model.state_count)
        .into_par_iter()
        .with_min_len(SWEEP_BLOCK)
        .map(|s| greedy_action(model, s, &v.values))
        .collect()
}

fn greedy_action(model: &MdpModel, s: usize, values: &[f64]) -> usize {
    let base = s * model.action_count;
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for a in 0..model.action_count {
        if !model.admissible[base + a] {
            continue;
        }
        let q = model.q_unchecked(base + a, values);
        if best.0 == usize::MAX || (q > best.1 && !ties(q, best.1)) {
            best = (a, q);
        }
    }
    best.0
}

/// `-J(s, a) + γ Σ P(s'|s, a) V(s')` for one admissible pair.
pub fn q_value(model: &MdpModel, v: &ValueFunction, state: usize, action: usize) -> Result<f64> {
    if state >= model.state_count || action >= model.action_count {
        return Err(Error::InvalidInput(format!("pair ({state}, {action}) out of range")));
    }
    if !model.is_admissible(state, action) {
        return Err(Error::InvalidInput(format!("action {action} is inadmissible in state {state}")));
    }
    Ok(model.q_unchecked(state * model.action_count + action, &v.values))
}

/// q-values of every action at `state`; `None` for inadmissible actions.
pub fn q_values(model: &MdpModel, v: &ValueFunction, state: usize) -> Vec<Option<f64>> {
    (0..model.action_count)
        .map(|a| q_value(model, v, state, a).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn self_loop(cost: f64, gamma: f64) -> MdpModel {
        MdpModel::from_fn(1, 1, gamma, |_, _, out| {
            out.push((0, 1.0));
            Some(cost)
        })
        .unwrap()
    }

    #[test]
    fn one_backup_of_a_self_loop() {
        let m = self_loop(1.0, 0.95);
        let v = bellman_sweep(&m, &ValueFunction::zeros(1));
        assert_eq!(v.values, vec![-1.0]);
        assert_eq!(v.residual, 1.0);
        assert_eq!(v.sweeps, 1);
    }

    #[test]
    fn self_loop_converges_to_geometric_sum() {
        let m = self_loop(1.0, 0.95);
        let sol = solve(&m, &SolveOptions::new(1e-10)).unwrap();
        assert!(sol.converged());
        assert!((sol.value.values[0] + 20.0).abs() < 1e-8);
        let q = q_value(&m, &sol.value, 0, 0).unwrap();
        assert!((q - (-1.0 + 0.95 * sol.value.values[0])).abs() < 1e-12);
    }

    #[test]
    fn loose_eta_stops_after_one_sweep() {
        let m = self_loop(1.0, 0.95);
        let sol = solve(&m, &SolveOptions::new(10.0)).unwrap();
        assert!(sol.converged());
        assert_eq!(sol.value.sweeps, 1);
    }

    #[test]
    fn zero_budget_is_flagged_and_leaves_values() {
        let m = self_loop(1.0, 0.95);
        let sol = solve(&m, &SolveOptions::new(1e-6).max_sweeps(0).initial(vec![3.0])).unwrap();
        assert_eq!(sol.termination, Termination::SweepBudgetExhausted);
        assert_eq!(sol.value.values, vec![3.0]);
        assert_eq!(sol.value.sweeps, 0);
    }

    #[test]
    fn bad_eta_and_initial_length_are_rejected() {
        let m = self_loop(1.0, 0.95);
        assert!(solve(&m, &SolveOptions::new(0.0)).is_err());
        assert!(solve(&m, &SolveOptions::new(1e-6).initial(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn malformed_models_are_rejected() {
        let short = MdpModel::from_fn(2, 1, 0.9, |_, _, out| {
            out.push((0, 0.5));
            Some(1.0)
        });
        assert!(short.is_err());
        let out_of_range = MdpModel::from_fn(2, 1, 0.9, |_, _, out| {
            out.push((2, 1.0));
            Some(1.0)
        });
        assert!(out_of_range.is_err());
        let negative_cost = MdpModel::from_fn(1, 1, 0.9, |_, _, out| {
            out.push((0, 1.0));
            Some(-1.0)
        });
        assert!(negative_cost.is_err());
        let no_action = MdpModel::from_fn(2, 1, 0.9, |s, _, out| {
            out.push((0, 1.0));
            (s == 0).then_some(1.0)
        });
        assert!(no_action.is_err());
        assert!(MdpModel::from_fn(1, 1, 1.0, |_, _, out| {
            out.push((0, 1.0));
            Some(0.0)
        })
        .is_err());
    }

    #[test]
    fn identical_actions_tie_to_lowest_index() {
        let m = MdpModel::from_fn(2, 2, 0.9, |s, _, out| {
            out.push((1 - s, 1.0));
            Some(1.0)
        })
        .unwrap();
        let sol = solve(&m, &SolveOptions::new(1e-9)).unwrap();
        assert_eq!(extract_policy(&m, &sol.value), vec![0, 0]);
    }

    #[test]
    fn inadmissible_q_is_an_error() {
        let m = MdpModel::from_fn(1, 2, 0.9, |_, a, out| {
            out.push((0, 1.0));
            (a == 0).then_some(1.0)
        })
        .unwrap();
        let v = ValueFunction::zeros(1);
        assert!(q_value(&m, &v, 0, 1).is_err());
        assert_eq!(q_values(&m, &v, 0), vec![Some(-1.0), None]);
        assert_eq!(extract_policy(&m, &v), vec![0]);
    }

    #[test]
    fn gauss_seidel_reaches_the_same_fixed_point() {
        let m = MdpModel::from_fn(3, 2, 0.9, |s, a, out| {
            let next = (s + a + 1) % 3;
            out.push((next, 0.7));
            out.push((s, 0.3));
            Some((s + 2 * a) as f64)
        })
        .unwrap();
        let j = solve(&m, &SolveOptions::new(1e-11)).unwrap();
        let g = solve(&m, &SolveOptions::new(1e-11).mode(SweepMode::GaussSeidel)).unwrap();
        for (a, b) in j.value.values.iter().zip(&g.value.values) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
