//! Reusable numerical kernels: water-filling, the difference-of-concave
//! rate linearization, the convex power-minimization subproblem solver,
//! and scalar search for unimodal objectives.

use crate::model::{Assignment, PowerAlloc, Scenario};
use crate::{HcnError, Result};

pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Tolerances, step sizes and iteration caps for every iterative
/// procedure in the crate.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative total-power change at which the SCA loop stops.
    pub sca_tol: f64,
    /// Rate / power residual tolerance for water-filling solves.
    pub wf_tol: f64,
    /// Initial transmit-power gradient step in watts; `None` picks
    /// `0.1 * P_max` per search.
    pub search_step_w: Option<f64>,
    /// Multiplicative rate-search step (> 1).
    pub outer_step: f64,
    /// Relative objective-change tolerance of the outer rate search.
    pub outer_tol: f64,
    /// Relative EE-improvement threshold ending the constraint rotation.
    pub rotation_tol: f64,
    /// Bisection interval width at which the alpha search stops.
    pub alpha_tol: f64,
    /// Transmit-power convergence tolerance, relative to the budget.
    pub pt_tol_frac: f64,
    /// Reserved vector gradient-ascent step; the decomposed rotation is
    /// used instead, so this knob is never read by the solvers.
    pub gradient_ascent_step_w: f64,
    /// Points per cell of the joint log-spaced rate-target grid used to
    /// seed the EE sweep (0 = no seeding). Only applied while the grid
    /// stays small (at most 4096 joint points), i.e. on tiny instances.
    pub seed_grid: usize,
    pub max_sca_iters: usize,
    pub max_alternations: usize,
    pub max_rotations: usize,
    pub max_line_search_iters: usize,
    pub max_pt_iters: usize,
    pub max_newton_iters: usize,
    pub max_power_control_iters: usize,
    /// Initial log-barrier weight (watts per constraint).
    pub barrier_init_weight: f64,
    /// Multiplicative barrier-weight decrease per outer stage.
    pub barrier_decrease: f64,
    /// Newton decrement threshold for each centering solve.
    pub newton_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sca_tol: 1e-5,
            wf_tol: 1e-9,
            search_step_w: None,
            outer_step: 1.5,
            outer_tol: 1e-3,
            rotation_tol: 1e-3,
            alpha_tol: 1e-2,
            pt_tol_frac: 1e-4,
            gradient_ascent_step_w: 1.0,
            seed_grid: 0,
            max_sca_iters: 60,
            max_alternations: 25,
            max_rotations: 40,
            max_line_search_iters: 30,
            max_pt_iters: 300,
            max_newton_iters: 60,
            max_power_control_iters: 300,
            barrier_init_weight: 1e-3,
            barrier_decrease: 0.2,
            newton_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.sca_tol,
            self.wf_tol,
            self.outer_tol,
            self.rotation_tol,
            self.alpha_tol,
            self.pt_tol_frac,
            self.barrier_init_weight,
            self.newton_tol,
        ];
        if pos.iter().any(|t| !(*t > 0.0)) {
            return Err(HcnError::invalid("all tolerances must be > 0"));
        }
        if !(self.outer_step > 1.0) {
            return Err(HcnError::invalid("outer_step must be > 1"));
        }
        if !(self.barrier_decrease > 0.0 && self.barrier_decrease < 1.0) {
            return Err(HcnError::invalid("barrier_decrease must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of a water-filling solve over a flat list of links.
///
/// In rate-targeted mode all links share one water level: with a joint
/// rate constraint the minimum-total-power point equalizes the marginal
/// cost across every active link, so the per-UE levels coincide.
#[derive(Debug, Clone)]
pub struct WaterfillResult {
    /// Per-link powers, same order as the input CNRs.
    pub powers: Vec<f64>,
    /// Water level in watts (`mu`).
    pub water_level: f64,
    /// Total consumed power.
    pub consumed_w: f64,
    /// Achieved sum rate in bits/s.
    pub rate_bps: f64,
}

fn wf_rate(cnrs: &[f64], powers: &[f64], w_c: f64) -> f64 {
    cnrs.iter()
        .zip(powers)
        .map(|(g, p)| w_c * (1.0 + g * p).log2())
        .sum()
}

/// Minimum-power water-filling hitting the rate target `C_0` exactly.
///
/// Powers follow `p_n = (mu - 1/g_n)^+` with the level chosen so the sum
/// rate over active links equals the target.
pub fn single_ue_waterfill(cnrs: &[f64], rate_target: f64, w_c: f64) -> Result<WaterfillResult> {
    if cnrs.is_empty() {
        return Err(HcnError::invalid("water-filling needs at least one link"));
    }
    if !(rate_target >= 0.0) {
        return Err(HcnError::invalid("rate target must be >= 0"));
    }
    if !cnrs.iter().any(|g| *g > 0.0) {
        if rate_target == 0.0 {
            return Ok(WaterfillResult {
                powers: vec![0.0; cnrs.len()],
                water_level: 0.0,
                consumed_w: 0.0,
                rate_bps: 0.0,
            });
        }
        return Err(HcnError::infeasible(
            None,
            "positive rate target with no usable link",
        ));
    }
    if rate_target == 0.0 {
        return Ok(WaterfillResult {
            powers: vec![0.0; cnrs.len()],
            water_level: 0.0,
            consumed_w: 0.0,
            rate_bps: 0.0,
        });
    }

    // Sort usable links by CNR descending; grow the active set while the
    // implied level still floods the next link.
    let mut order: Vec<usize> = (0..cnrs.len()).filter(|&i| cnrs[i] > 0.0).collect();
    order.sort_by(|&a, &b| cnrs[b].partial_cmp(&cnrs[a]).unwrap().then(a.cmp(&b)));
    let bits = rate_target / w_c;
    let mut level = f64::INFINITY;
    let mut active = 0;
    let mut sum_log2_g = 0.0;
    for j in 1..=order.len() {
        sum_log2_g += cnrs[order[j - 1]].log2();
        // solve j*log2(mu) + sum log2(g) = bits
        let candidate = ((bits - sum_log2_g) / j as f64).exp2();
        if !candidate.is_finite() {
            return Err(HcnError::infeasible(
                None,
                "rate target overflows the water-filling level",
            ));
        }
        let include_next = j < order.len() && candidate > 1.0 / cnrs[order[j]];
        if candidate > 1.0 / cnrs[order[j - 1]] && !include_next {
            level = candidate;
            active = j;
            break;
        }
        if j == order.len() {
            level = candidate;
            active = j;
        }
    }
    if !level.is_finite() || active == 0 {
        return Err(HcnError::infeasible(None, "water-filling level not found"));
    }
    let mut powers = vec![0.0; cnrs.len()];
    for &i in order.iter().take(active) {
        powers[i] = (level - 1.0 / cnrs[i]).max(0.0);
    }
    let consumed = powers.iter().sum();
    Ok(WaterfillResult {
        rate_bps: wf_rate(cnrs, &powers, w_c),
        powers,
        water_level: level,
        consumed_w: consumed,
    })
}

/// Second water-filling stage: spends `extra_budget` on top of the base
/// allocation, raising links to the common level
/// `p_n = base_n + (mu - 1/g_n - base_n)^+`.
pub fn multilevel_waterfill(
    cnrs: &[f64],
    base: &[f64],
    extra_budget: f64,
    w_c: f64,
) -> Result<WaterfillResult> {
    if cnrs.is_empty() || cnrs.len() != base.len() {
        return Err(HcnError::invalid("CNR/base length mismatch"));
    }
    if !(extra_budget >= 0.0) {
        return Err(HcnError::invalid("extra budget must be >= 0"));
    }
    let usable: Vec<usize> = (0..cnrs.len()).filter(|&i| cnrs[i] > 0.0).collect();
    if extra_budget == 0.0 || usable.is_empty() {
        let powers = base.to_vec();
        return Ok(WaterfillResult {
            water_level: usable
                .iter()
                .map(|&i| 1.0 / cnrs[i] + base[i])
                .fold(f64::INFINITY, f64::min),
            consumed_w: powers.iter().sum(),
            rate_bps: wf_rate(cnrs, &powers, w_c),
            powers,
        });
    }
    // Thresholds above which a link starts receiving extra power.
    let mut thresholds: Vec<f64> = usable.iter().map(|&i| 1.0 / cnrs[i] + base[i]).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut level = f64::NAN;
    let mut acc = 0.0;
    for j in 1..=thresholds.len() {
        acc += thresholds[j - 1];
        let candidate = (extra_budget + acc) / j as f64;
        if j == thresholds.len() || candidate <= thresholds[j] {
            if candidate >= thresholds[j - 1] {
                level = candidate;
                break;
            }
        }
    }
    if !level.is_finite() {
        return Err(HcnError::Convergence(
            "multi-level water-filling level not found".into(),
        ));
    }
    let mut powers = base.to_vec();
    for &i in &usable {
        powers[i] = base[i] + (level - 1.0 / cnrs[i] - base[i]).max(0.0);
    }
    let consumed = powers.iter().sum();
    Ok(WaterfillResult {
        rate_bps: wf_rate(cnrs, &powers, w_c),
        powers,
        water_level: level,
        consumed_w: consumed,
    })
}

/// Marginal sum-rate gain per extra watt at a water-filling optimum:
/// the maximum of `W_C * g * log2(e) / (1 + g * p)` over the links.
pub fn max_rate_derivative(cnrs: &[f64], powers: &[f64], w_c: f64) -> Result<f64> {
    if cnrs.is_empty() || cnrs.len() != powers.len() {
        return Err(HcnError::invalid("empty or mismatched link set"));
    }
    Ok(cnrs
        .iter()
        .zip(powers)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, p)| w_c * g * LOG2_E / (1.0 + g * p))
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Difference-of-concave rate linearization
// ---------------------------------------------------------------------------

/// Per-(cell, subcarrier) coefficients of an assigned link.
#[derive(Debug, Clone)]
struct LinkCoef {
    subcarrier: usize,
    /// Gains from every cell's BS to the assigned UE on this subcarrier.
    gains: Vec<f64>,
    noise: f64,
}

/// First-order model of each cell's rate around a reference power vector.
///
/// The per-cell rate decomposes as `f_l(p) - g_l(p)` with both parts
/// concave; `g_l` is replaced by its tangent at the reference. Both parts
/// carry a `W_C / ln 2` scaling so `f_l - g_l` is the Shannon rate in
/// bits/s and the linearized constraints stay dimensionally consistent
/// with rate targets.
#[derive(Debug, Clone)]
pub struct DcLinearization {
    pub reference: PowerAlloc,
    num_cells: usize,
    num_subcarriers: usize,
    scale: f64,
    links: Vec<Vec<LinkCoef>>,
    /// `g_l` evaluated at the reference (scaled).
    pub g_at_ref: Vec<f64>,
    /// Tangent slope of `g_l` at the reference, flat layout `l * N + n`,
    /// own-cell block identically zero.
    pub grad_g: Vec<Vec<f64>>,
    /// Cached `grad_g[l] . reference`.
    grad_g_dot_ref: Vec<f64>,
}

impl DcLinearization {
    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    fn interference_plus_noise(&self, link: &LinkCoef, own: usize, x: &[f64]) -> f64 {
        let n = link.subcarrier;
        let mut acc = link.noise;
        for (m, g) in link.gains.iter().enumerate() {
            if m != own {
                acc += g * x[m * self.num_subcarriers + n];
            }
        }
        acc
    }

    fn total_received(&self, link: &LinkCoef, x: &[f64]) -> f64 {
        let n = link.subcarrier;
        let mut acc = link.noise;
        for (m, g) in link.gains.iter().enumerate() {
            acc += g * x[m * self.num_subcarriers + n];
        }
        acc
    }

    /// Concave part `f_l` at a flat power vector (scaled to bits/s).
    pub fn f_value(&self, cell: usize, x: &[f64]) -> f64 {
        self.links[cell]
            .iter()
            .map(|link| self.scale * self.total_received(link, x).ln())
            .sum()
    }

    /// Exact `g_l` at a flat power vector (scaled to bits/s).
    pub fn g_value(&self, cell: usize, x: &[f64]) -> f64 {
        self.links[cell]
            .iter()
            .map(|link| self.scale * self.interference_plus_noise(link, cell, x).ln())
            .sum()
    }

    /// Tangent-model rate of `cell` at `x`:
    /// `f_l(x) - g_l(ref) - grad_g_l . (x - ref)`.
    pub fn linearized_rate(&self, cell: usize, x: &[f64]) -> f64 {
        let lin: f64 = self.grad_g[cell]
            .iter()
            .zip(x)
            .map(|(gr, xi)| gr * xi)
            .sum();
        self.f_value(cell, x) - self.g_at_ref[cell] - (lin - self.grad_g_dot_ref[cell])
    }

    /// Gradient of the tangent-model rate, accumulated into `out`
    /// (flat layout, pre-zeroed by the caller) scaled by `coeff`.
    fn add_rate_gradient(&self, cell: usize, x: &[f64], coeff: f64, out: &mut [f64]) {
        for link in &self.links[cell] {
            let s = self.total_received(link, x);
            let c = coeff * self.scale / s;
            let n = link.subcarrier;
            for (m, g) in link.gains.iter().enumerate() {
                out[m * self.num_subcarriers + n] += c * g;
            }
        }
        for (o, gr) in out.iter_mut().zip(&self.grad_g[cell]) {
            *o -= coeff * gr;
        }
    }
}

/// Builds the difference-of-concave linearization of every cell's
/// assigned sum rate around `reference`.
pub fn dc_linearize(
    scenario: &Scenario,
    assignment: &Assignment,
    reference: &PowerAlloc,
) -> Result<DcLinearization> {
    assignment.validate(scenario)?;
    let num_cells = scenario.num_cells();
    let num_subcarriers = scenario.num_subcarriers();
    let scale = scenario.spectrum.subcarrier_bandwidth_hz / std::f64::consts::LN_2;

    let mut links = Vec::with_capacity(num_cells);
    for l in 0..num_cells {
        let mut cell_links = Vec::new();
        for n in 0..num_subcarriers {
            if let Some(k) = assignment.ue_of(l, n) {
                cell_links.push(LinkCoef {
                    subcarrier: n,
                    gains: (0..num_cells)
                        .map(|m| scenario.channel.gain(k, l, m, n))
                        .collect(),
                    noise: scenario.channel.noise(k, l, n),
                });
            }
        }
        links.push(cell_links);
    }

    let flat_ref = flatten(reference);
    let mut lin = DcLinearization {
        reference: reference.clone(),
        num_cells,
        num_subcarriers,
        scale,
        links,
        g_at_ref: vec![0.0; num_cells],
        grad_g: vec![vec![0.0; num_cells * num_subcarriers]; num_cells],
        grad_g_dot_ref: vec![0.0; num_cells],
    };
    for l in 0..num_cells {
        lin.g_at_ref[l] = lin.g_value(l, &flat_ref);
        for link in &lin.links[l] {
            let denom = lin.interference_plus_noise(link, l, &flat_ref);
            let n = link.subcarrier;
            for (m, g) in link.gains.iter().enumerate() {
                if m != l {
                    lin.grad_g[l][m * num_subcarriers + n] += scale * g / denom;
                }
            }
        }
        lin.grad_g_dot_ref[l] = lin.grad_g[l]
            .iter()
            .zip(&flat_ref)
            .map(|(g, x)| g * x)
            .sum();
    }
    Ok(lin)
}

pub fn flatten(power: &PowerAlloc) -> Vec<f64> {
    power.p.iter().flatten().copied().collect()
}

pub fn unflatten(x: &[f64], num_cells: usize, num_subcarriers: usize) -> PowerAlloc {
    PowerAlloc {
        p: (0..num_cells)
            .map(|l| x[l * num_subcarriers..(l + 1) * num_subcarriers].to_vec())
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Small dense Cholesky (solver-internal)
// ---------------------------------------------------------------------------

/// In-place lower Cholesky of a row-major symmetric matrix.
fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(HcnError::Convergence(
                        "Newton system lost positive definiteness".into(),
                    ));
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` for a factored matrix; `b` is overwritten.
fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * b[k];
        }
        b[i] = sum / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * b[k];
        }
        b[i] = sum / l[i * n + i];
    }
}

// ---------------------------------------------------------------------------
// SCA convex subproblem (log-barrier interior point)
// ---------------------------------------------------------------------------

struct BarrierProblem<'a> {
    lin: &'a DcLinearization,
    /// Rate targets; entries <= 0 impose no constraint.
    targets: &'a [f64],
    pmax: &'a [f64],
    num_cells: usize,
    num_subcarriers: usize,
}

impl BarrierProblem<'_> {
    fn dim(&self) -> usize {
        self.num_cells * self.num_subcarriers
    }

    fn constraint_count(&self) -> usize {
        let rate = self.targets.iter().filter(|t| **t > 0.0).count();
        rate + self.num_cells + self.dim()
    }

    fn rate_slacks(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_cells)
            .map(|l| {
                if self.targets[l] > 0.0 {
                    self.lin.linearized_rate(l, x) - self.targets[l]
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    fn budget_slacks(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_cells)
            .map(|l| {
                let used: f64 = x[l * self.num_subcarriers..(l + 1) * self.num_subcarriers]
                    .iter()
                    .sum();
                self.pmax[l] - used
            })
            .collect()
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().all(|v| *v > 0.0)
            && self.budget_slacks(x).iter().all(|s| *s > 0.0)
            && self.rate_slacks(x).iter().all(|s| *s > 0.0)
    }

    /// Barrier objective `sum(x) - w * sum(ln slack)`.
    fn phi(&self, x: &[f64], w: f64) -> f64 {
        let obj: f64 = x.iter().sum();
        let mut bar = 0.0;
        for s in self.rate_slacks(x) {
            if s.is_finite() {
                bar += s.ln();
            }
        }
        for s in self.budget_slacks(x) {
            bar += s.ln();
        }
        for v in x {
            bar += v.ln();
        }
        obj - w * bar
    }
}

fn scaled_rate_targets_ok(targets: &[f64], num_cells: usize) -> Result<()> {
    if targets.len() != num_cells {
        return Err(HcnError::invalid("rate target dimension mismatch"));
    }
    Ok(())
}

/// Nudges a reference point into the strict interior of the subproblem's
/// feasible set: floors the powers, backs off saturated budgets, then
/// scales the whole vector (and, failing that, individual cells' own
/// blocks) until every linearized rate constraint holds strictly.
fn strictify(problem: &BarrierProblem, start: &[f64]) -> Result<Vec<f64>> {
    let n = problem.num_subcarriers;
    let mut x = start.to_vec();
    // the positivity floor must sit far below the operating scale, or the
    // interference it injects can erase the rate slack of a reference
    // point that runs at a tiny fraction of the budget
    let x_scale = x.iter().cloned().fold(0.0f64, f64::max);
    for l in 0..problem.num_cells {
        let mut floor = 1e-9 * problem.pmax[l] / n as f64;
        if x_scale > 0.0 {
            floor = floor.min(1e-6 * x_scale);
        }
        for v in &mut x[l * n..(l + 1) * n] {
            *v = v.max(floor);
        }
        let used: f64 = x[l * n..(l + 1) * n].iter().sum();
        let cap = problem.pmax[l] * (1.0 - 1e-9);
        if used > cap {
            let k = cap / used;
            for v in &mut x[l * n..(l + 1) * n] {
                *v *= k;
            }
        }
    }
    let min_slack = |x: &[f64]| -> (f64, usize) {
        problem
            .rate_slacks(x)
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_finite())
            .map(|(l, s)| (*s, l))
            .fold((f64::INFINITY, 0), |acc, (s, l)| {
                if s < acc.0 {
                    (s, l)
                } else {
                    acc
                }
            })
    };
    let slack_floor: f64 = problem
        .targets
        .iter()
        .filter(|t| **t > 0.0)
        .map(|t| 1e-10 * t)
        .fold(0.0, f64::max);
    if min_slack(&x).0 > slack_floor {
        return Ok(x);
    }
    // Joint up-scaling raises every linearized rate near the reference.
    let mut best = x.clone();
    let mut best_slack = min_slack(&x).0;
    for beta in [1.0001, 1.001, 1.01, 1.05, 1.2, 1.5, 2.0, 4.0] {
        let mut cand = x.clone();
        for l in 0..problem.num_cells {
            let cap = problem.pmax[l] * (1.0 - 1e-9);
            let used: f64 = cand[l * n..(l + 1) * n].iter().map(|v| v * beta).sum();
            let k = if used > cap { cap / used * beta } else { beta };
            for v in &mut cand[l * n..(l + 1) * n] {
                *v *= k;
            }
        }
        let s = min_slack(&cand).0;
        if s > best_slack {
            best_slack = s;
            best = cand;
        }
        if best_slack > slack_floor {
            return Ok(best);
        }
    }
    // Cyclic per-cell repair: raising a cell's own powers strictly
    // increases its own linearized rate; with the budget exhausted the
    // most comfortable cell sheds power instead, cutting the
    // interference it causes.
    x = best;
    for _ in 0..60 {
        let (s, l) = min_slack(&x);
        if s > slack_floor {
            return Ok(x);
        }
        let used: f64 = x[l * n..(l + 1) * n].iter().sum();
        let cap = problem.pmax[l] * (1.0 - 1e-9);
        let headroom = cap / used;
        if headroom <= 1.0 + 1e-12 {
            let slacks = problem.rate_slacks(&x);
            let (ms, m) = slacks
                .iter()
                .enumerate()
                .filter(|(c, v)| *c != l && v.is_finite())
                .map(|(c, v)| (*v, c))
                .fold((f64::NEG_INFINITY, usize::MAX), |acc, p| {
                    if p.0 > acc.0 {
                        (p.0, p.1)
                    } else {
                        acc
                    }
                });
            if m == usize::MAX || ms <= slack_floor {
                return Err(HcnError::infeasible(
                    Some(l),
                    "rate target unreachable within the power budget",
                ));
            }
            for v in &mut x[m * n..(m + 1) * n] {
                *v *= 0.7;
            }
            continue;
        }
        let k = headroom.min(1.3);
        for v in &mut x[l * n..(l + 1) * n] {
            *v *= k;
        }
    }
    let (_, l) = min_slack(&x);
    Err(HcnError::infeasible(
        Some(l),
        "could not find a strictly feasible starting point",
    ))
}

/// One Newton centering step. Returns the Newton decrement `lambda^2`.
fn newton_step(problem: &BarrierProblem, x: &mut [f64], w: f64) -> Result<f64> {
    let c = problem.num_cells;
    let n = problem.num_subcarriers;
    let dim = problem.dim();
    let lin = problem.lin;

    let rate_slacks = problem.rate_slacks(x);
    let budget_slacks = problem.budget_slacks(x);

    // Gradient of phi.
    let mut grad = vec![1.0; dim];
    for l in 0..c {
        if rate_slacks[l].is_finite() {
            lin.add_rate_gradient(l, x, -w / rate_slacks[l], &mut grad);
        }
        let coeff = w / budget_slacks[l];
        for v in &mut grad[l * n..(l + 1) * n] {
            *v += coeff;
        }
    }
    for (g, v) in grad.iter_mut().zip(x.iter()) {
        *g -= w / v;
    }

    // Block-diagonal part: per subcarrier, coordinates (m*n + sub).
    // B_sub = w * diag(1/x^2) + sum_l (w/s_l) * scale/S^2 * a a^T.
    let mut blocks = vec![0.0; n * c * c];
    for (sub, block) in blocks.chunks_mut(c * c).enumerate() {
        for m in 0..c {
            block[m * c + m] = w / (x[m * n + sub] * x[m * n + sub]);
        }
    }
    for l in 0..c {
        if !rate_slacks[l].is_finite() {
            continue;
        }
        let coeff_l = w / rate_slacks[l];
        for link in &lin.links[l] {
            let s = lin.total_received(link, x);
            let k = coeff_l * lin_scale(lin) / (s * s);
            let block = &mut blocks[link.subcarrier * c * c..(link.subcarrier + 1) * c * c];
            for a in 0..c {
                let ga = link.gains[a];
                if ga == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    block[a * c + b] += k * ga * link.gains[b];
                }
            }
        }
    }
    // Symmetrize upper triangles and factor.
    for block in blocks.chunks_mut(c * c) {
        for a in 0..c {
            for b in a + 1..c {
                block[a * c + b] = block[b * c + a];
            }
        }
        cholesky(block, c)?;
    }

    let block_solve = |blocks: &[f64], rhs: &mut [f64]| {
        let mut buf = vec![0.0; c];
        for sub in 0..n {
            for m in 0..c {
                buf[m] = rhs[m * n + sub];
            }
            cholesky_solve(&blocks[sub * c * c..(sub + 1) * c * c], c, &mut buf);
            for m in 0..c {
                rhs[m * n + sub] = buf[m];
            }
        }
    };

    // Low-rank columns: rate-constraint outer products and budgets.
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for l in 0..c {
        if rate_slacks[l].is_finite() {
            let mut v = vec![0.0; dim];
            lin.add_rate_gradient(l, x, w.sqrt() / rate_slacks[l], &mut v);
            cols.push(v);
        }
    }
    for l in 0..c {
        let mut v = vec![0.0; dim];
        let coeff = w.sqrt() / budget_slacks[l];
        for e in &mut v[l * n..(l + 1) * n] {
            *e = coeff;
        }
        cols.push(v);
    }

    // Woodbury: d = -(B + V V^T)^{-1} grad.
    let mut y0: Vec<f64> = grad.iter().map(|g| -g).collect();
    block_solve(&blocks, &mut y0);
    let r = cols.len();
    let mut ys: Vec<Vec<f64>> = cols.clone();
    for y in &mut ys {
        block_solve(&blocks, y);
    }
    let mut m = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..=i {
            let dot: f64 = cols[i].iter().zip(&ys[j]).map(|(a, b)| a * b).sum();
            m[i * r + j] = dot + if i == j { 1.0 } else { 0.0 };
            m[j * r + i] = m[i * r + j];
        }
    }
    cholesky(&mut m, r)?;
    let mut z: Vec<f64> = (0..r)
        .map(|i| cols[i].iter().zip(&y0).map(|(a, b)| a * b).sum())
        .collect();
    cholesky_solve(&m, r, &mut z);
    let mut d = y0;
    for i in 0..r {
        for (dv, yv) in d.iter_mut().zip(&ys[i]) {
            *dv -= z[i] * yv;
        }
    }

    let decrement: f64 = -grad.iter().zip(&d).map(|(g, dv)| g * dv).sum::<f64>();
    if !decrement.is_finite() {
        return Err(HcnError::Convergence("non-finite Newton decrement".into()));
    }
    if decrement <= 0.0 {
        return Ok(0.0);
    }

    // Backtracking line search keeping strict feasibility.
    let phi0 = problem.phi(x, w);
    let mut t = 1.0;
    let g_dot_d: f64 = grad.iter().zip(&d).map(|(g, dv)| g * dv).sum();
    for _ in 0..60 {
        let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
        if problem.strictly_feasible(&cand) && problem.phi(&cand, w) <= phi0 + 0.25 * t * g_dot_d {
            x.copy_from_slice(&cand);
            return Ok(decrement);
        }
        t *= 0.5;
    }
    // No usable step: report convergence at this weight.
    Ok(0.0)
}

fn lin_scale(lin: &DcLinearization) -> f64 {
    lin.scale
}

/// Solves the convex power-minimization subproblem
/// `min sum(p)  s.t.  linearized rate_l >= C_l, per-cell budgets, p >= 0`
/// by a log-barrier interior-point method, starting from the
/// linearization's reference point.
pub fn sca_subproblem(
    scenario: &Scenario,
    assignment: &Assignment,
    lin: &DcLinearization,
    rate_targets: &[f64],
    pmax: &[f64],
    config: &SolverConfig,
) -> Result<PowerAlloc> {
    assignment.validate(scenario)?;
    scaled_rate_targets_ok(rate_targets, scenario.num_cells())?;
    if pmax.len() != scenario.num_cells() {
        return Err(HcnError::invalid("pmax dimension mismatch"));
    }
    if rate_targets.iter().all(|t| *t <= 0.0) {
        return Ok(PowerAlloc::zeros(
            scenario.num_cells(),
            scenario.num_subcarriers(),
        ));
    }
    let problem = BarrierProblem {
        lin,
        targets: rate_targets,
        pmax,
        num_cells: scenario.num_cells(),
        num_subcarriers: scenario.num_subcarriers(),
    };
    let mut x = strictify(&problem, &flatten(&lin.reference))?;

    let m = problem.constraint_count() as f64;
    let mut w = config.barrier_init_weight;
    loop {
        for _ in 0..config.max_newton_iters {
            let dec = newton_step(&problem, &mut x, w)?;
            if dec / 2.0 <= config.newton_tol * x.iter().sum::<f64>().max(1e-9) {
                break;
            }
        }
        let obj: f64 = x.iter().sum();
        if w * m <= 0.1 * config.sca_tol * obj.max(1e-9) {
            break;
        }
        w *= config.barrier_decrease;
    }
    Ok(unflatten(&x, problem.num_cells, problem.num_subcarriers))
}

// ---------------------------------------------------------------------------
// Quasi-concave scalar search
// ---------------------------------------------------------------------------

/// Multiplicative ascent for a unimodal scalar objective on `[lo, hi]`.
///
/// The iterate moves by the factor `varpi` in the direction of the
/// forward-difference gradient sign; the factor's excess over one is
/// halved whenever the sign flips; terminates on a relative
/// objective-change below `tol` or the iteration cap. Returns the best
/// argument seen, clamped to the interval.
pub fn quasiconcave_line_search<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    start: f64,
    varpi: f64,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    if !(lo <= hi) {
        return Err(HcnError::invalid("line search needs lo <= hi"));
    }
    if lo == hi {
        return Ok(lo);
    }
    let clamp = |x: f64| x.clamp(lo.max(1e-12 * (hi - lo) + lo), hi);
    let mut x = clamp(if start.is_finite() { start } else { lo });
    let mut step = varpi.max(1.0 + 1e-6);
    let mut fx = f(x);
    let mut best = (x, fx);
    let mut prev_sign: Option<bool> = None;
    for _ in 0..max_iters {
        let h = (1e-3 * x.abs()).max(1e-9 * (hi - lo));
        let (fwd, f_fwd) = if x + h <= hi {
            (true, f(x + h))
        } else {
            (false, f(x - h))
        };
        let rising = if fwd { f_fwd >= fx } else { f_fwd < fx };
        if let Some(prev) = prev_sign {
            if prev != rising {
                step = 1.0 + (step - 1.0) / 2.0;
            }
        }
        prev_sign = Some(rising);
        let next = clamp(if rising { x * step } else { x / step });
        if next == x {
            break;
        }
        let f_next = f(next);
        if f_next > best.1 {
            best = (next, f_next);
        }
        let done = (f_next - fx).abs() <= tol * fx.abs().max(1e-30);
        x = next;
        fx = f_next;
        if done || step - 1.0 < 1e-5 {
            break;
        }
    }
    // Boundary probe: a monotone objective should land exactly on an end.
    if best.0 == clamp(lo) {
        return Ok(lo);
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Assignment, ChannelRealization, PowerModel, QosSpec, Scenario, SpectrumSpec, Topology,
    };
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const W_C: f64 = 15_000.0;

    /// Hand-built scenario with unit-scale gains for kernel tests.
    fn grid_scenario(num_cells: usize, num_subcarriers: usize, gains: Vec<f64>) -> Scenario {
        let spectrum = SpectrumSpec::new(W_C, num_subcarriers).unwrap();
        let topology = Topology {
            bs_pos: vec![[0.0, 0.0]; num_cells],
            ue_pos: vec![vec![[1.0, 0.0]]; num_cells],
            macro_radius_m: 250.0,
            small_radius_m: 50.0,
        };
        let total_links = num_cells * num_cells * num_subcarriers;
        assert_eq!(gains.len(), total_links);
        let noise = vec![1.0; num_cells * num_subcarriers];
        let channel =
            ChannelRealization::new(num_cells, num_subcarriers, vec![1; num_cells], gains, noise)
                .unwrap();
        let power_model = PowerModel {
            zeta: vec![4.0; num_cells],
            static_w: vec![1.0; num_cells],
            gamma_w_per_hz: vec![1e-6; num_cells],
        };
        let qos = QosSpec {
            delta_macro_bps: 0.0,
            delta_small_bps: 0.0,
            pmax_w: vec![20.0; num_cells],
        };
        let p_tot_w = Scenario::default_p_tot(&power_model, &qos, &spectrum);
        Scenario {
            spectrum,
            topology,
            channel,
            power_model,
            qos,
            p_tot_w,
        }
    }

    fn full_assignment(num_cells: usize, num_subcarriers: usize) -> Assignment {
        let mut a = Assignment::empty(num_cells, num_subcarriers);
        for l in 0..num_cells {
            for n in 0..num_subcarriers {
                a.set(l, n, Some(0));
            }
        }
        a
    }

    #[test]
    fn waterfill_single_link_unit_gain() {
        // log2(1 + p) = 1 forces p = 1
        let r = single_ue_waterfill(&[1.0], W_C, W_C).unwrap();
        assert_relative_eq!(r.powers[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.rate_bps, W_C, max_relative = 1e-12);
    }

    #[test]
    fn waterfill_zero_target() {
        let r = single_ue_waterfill(&[2.0, 1.0], 0.0, W_C).unwrap();
        assert_eq!(r.powers, vec![0.0, 0.0]);
        assert_eq!(r.consumed_w, 0.0);
    }

    #[test]
    fn waterfill_matches_grid_oracle() {
        // Independent oracle: minimize p1 + p2 over a fine grid subject to
        // the rate constraint, for g = [2, 1], C0 = 2 * W_C.
        let cnrs = [2.0, 1.0];
        let target_bits = 2.0;
        let mut best = f64::INFINITY;
        let step = 1e-4;
        let mut p1 = 0.0f64;
        while p1 <= 4.0 {
            let r1 = (1.0 + cnrs[0] * p1).log2();
            if r1 <= target_bits {
                let need = (target_bits - r1).exp2() - 1.0; // g=1
                let total = p1 + need;
                if total < best {
                    best = total;
                }
            } else if p1 < best {
                best = p1;
            }
            p1 += step;
        }
        let r = single_ue_waterfill(&cnrs, target_bits * W_C, W_C).unwrap();
        assert!(
            (r.consumed_w - best).abs() <= 3.0 * step,
            "waterfill {} vs oracle {}",
            r.consumed_w,
            best
        );
        assert_relative_eq!(r.rate_bps, target_bits * W_C, max_relative = 1e-9);
    }

    #[test]
    fn multilevel_zero_budget_is_identity() {
        let base = vec![0.3, 0.1];
        let r = multilevel_waterfill(&[2.0, 1.0], &base, 0.0, W_C).unwrap();
        assert_eq!(r.powers, base);
    }

    #[test]
    fn multilevel_two_channel_closed_form() {
        // 2*mu - (1/2 + 1) = 2 -> mu = 1.75, p = [1.25, 0.75]
        let r = multilevel_waterfill(&[2.0, 1.0], &[0.0, 0.0], 2.0, W_C).unwrap();
        assert_relative_eq!(r.water_level, 1.75, max_relative = 1e-12);
        assert_relative_eq!(r.powers[0], 1.25, max_relative = 1e-12);
        assert_relative_eq!(r.powers[1], 0.75, max_relative = 1e-12);
    }

    #[test]
    fn multilevel_symmetric_split() {
        let r = multilevel_waterfill(&[1.0, 1.0], &[0.0, 0.0], 2.0, W_C).unwrap();
        assert_relative_eq!(r.powers[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.powers[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn multilevel_rejects_negative_budget() {
        assert!(multilevel_waterfill(&[1.0], &[0.0], -1.0, W_C).is_err());
    }

    #[test]
    fn waterfill_kkt_equalized_marginals() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let cnrs: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 4.0 + 0.05).collect();
            let budget = rng.gen::<f64>() * 5.0 + 0.5;
            let r = multilevel_waterfill(&cnrs, &vec![0.0; 5], budget, W_C).unwrap();
            let marginals: Vec<f64> = cnrs
                .iter()
                .zip(&r.powers)
                .filter(|(_, p)| **p > 0.0)
                .map(|(g, p)| W_C * g * LOG2_E / (1.0 + g * p))
                .collect();
            let max_m = marginals.iter().fold(0.0f64, |a, b| a.max(*b));
            for m in &marginals {
                assert_relative_eq!(*m, max_m, max_relative = 1e-9);
            }
            // inactive links have marginal at zero power below the level
            for (g, p) in cnrs.iter().zip(&r.powers) {
                if *p == 0.0 {
                    assert!(W_C * g * LOG2_E <= max_m * (1.0 + 1e-9));
                }
            }
            assert_relative_eq!(r.consumed_w, budget, max_relative = 1e-9);
        }
    }

    #[test]
    fn marginal_matches_equalized_level() {
        let d = max_rate_derivative(&[2.0, 1.0], &[1.25, 0.75], W_C).unwrap();
        assert_relative_eq!(d, W_C * LOG2_E * (2.0 / 3.5), max_relative = 1e-12);
        let d0 = max_rate_derivative(&[5.0], &[0.0], W_C).unwrap();
        assert_relative_eq!(d0, W_C * 5.0 * LOG2_E, max_relative = 1e-12);
        assert!(max_rate_derivative(&[], &[], W_C).is_err());
    }

    #[test]
    fn marginal_matches_finite_difference() {
        // Finite-difference oracle on the budget-mode water-filled sum rate.
        let cnrs = [3.0, 1.5, 0.8];
        let budget = 2.0;
        let rate_at = |b: f64| {
            multilevel_waterfill(&cnrs, &[0.0; 3], b, W_C)
                .unwrap()
                .rate_bps
        };
        let h = 1e-5;
        let fd = (rate_at(budget + h) - rate_at(budget - h)) / (2.0 * h);
        let r = multilevel_waterfill(&cnrs, &[0.0; 3], budget, W_C).unwrap();
        let closed = max_rate_derivative(&cnrs, &r.powers, W_C).unwrap();
        assert_relative_eq!(closed, fd, max_relative = 1e-3);
    }

    #[test]
    fn dc_single_cell_gradient_is_zero() {
        let sc = grid_scenario(1, 2, vec![1.0, 1.5]);
        let assignment = full_assignment(1, 2);
        let reference = PowerAlloc {
            p: vec![vec![0.5, 0.25]],
        };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        assert!(lin.grad_g[0].iter().all(|v| *v == 0.0));
        // g is the constant sum of noise logs
        let scale = W_C / std::f64::consts::LN_2;
        assert_relative_eq!(lin.g_at_ref[0], 2.0 * scale * 1f64.ln());
    }

    #[test]
    fn dc_exact_at_reference() {
        let sc = grid_scenario(2, 2, random_gains(2, 2, 11));
        let assignment = full_assignment(2, 2);
        let reference = PowerAlloc {
            p: vec![vec![0.7, 0.2], vec![0.4, 0.9]],
        };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        let x = flatten(&reference);
        for l in 0..2 {
            let exact = lin.f_value(l, &x) - lin.g_value(l, &x);
            assert_relative_eq!(lin.linearized_rate(l, &x), exact, max_relative = 1e-9);
            // f - g equals the true assigned sum rate
            let true_rate =
                crate::model::cell_rate(&sc, &assignment, &reference, l, crate::model::Mode::Underlay)
                    .unwrap();
            assert_relative_eq!(exact, true_rate, max_relative = 1e-9);
        }
    }

    #[test]
    fn dc_tangent_is_conservative() {
        // The tangent to the concave g lies above it, so the linearized
        // rate under-estimates the exact rate everywhere: any point that
        // satisfies the linearized constraint satisfies the true one.
        let sc = grid_scenario(2, 2, random_gains(2, 2, 5));
        let assignment = full_assignment(2, 2);
        let reference = PowerAlloc {
            p: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 3.0).collect();
            for l in 0..2 {
                let exact = lin.f_value(l, &x) - lin.g_value(l, &x);
                assert!(
                    lin.linearized_rate(l, &x) <= exact + 1e-6,
                    "tangent model must not exceed the exact rate"
                );
            }
        }
    }

    fn random_gains(num_cells: usize, num_subcarriers: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..num_cells * num_cells * num_subcarriers)
            .map(|_| rng.gen::<f64>() * 1.5 + 0.1)
            .collect()
    }

    #[test]
    fn sca_subproblem_single_cell_closed_form() {
        // one cell, one subcarrier, g = 1, sigma = 1, target W_C -> p = 1
        let sc = grid_scenario(1, 1, vec![1.0]);
        let assignment = full_assignment(1, 1);
        let reference = PowerAlloc { p: vec![vec![2.0]] };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        let cfg = SolverConfig::default();
        let p = sca_subproblem(&sc, &assignment, &lin, &[W_C], &[20.0], &cfg).unwrap();
        assert_relative_eq!(p.p[0][0], 1.0, max_relative = 1e-3);
    }

    #[test]
    fn sca_subproblem_zero_targets() {
        let sc = grid_scenario(2, 2, random_gains(2, 2, 2));
        let assignment = full_assignment(2, 2);
        let reference = PowerAlloc {
            p: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        let cfg = SolverConfig::default();
        let p = sca_subproblem(&sc, &assignment, &lin, &[0.0, 0.0], &[20.0, 20.0], &cfg).unwrap();
        assert_eq!(p.total(), 0.0);
    }

    #[test]
    fn sca_subproblem_matches_grid_oracle() {
        // Exhaustive refinement search on the (convex) linearized program:
        // 2 cells x 2 subcarriers with cross-gains and a fixed linearization.
        let gains = vec![
            // cell 0 UE: from cell 0 on n0,n1 then from cell 1
            1.2, 0.9, 0.3, 0.2, // cell 1 UE: from cell 0 then cell 1
            0.25, 0.15, 1.0, 1.4,
        ];
        let sc = grid_scenario(2, 2, gains);
        let assignment = full_assignment(2, 2);
        let reference = PowerAlloc {
            p: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        let targets = [0.8 * W_C, 0.6 * W_C];
        let pmax = [10.0, 10.0];
        let cfg = SolverConfig::default();
        let solved = sca_subproblem(&sc, &assignment, &lin, &targets, &pmax, &cfg).unwrap();

        // coarse-to-fine grid on the same linearized feasibility test
        let feasible = |x: &[f64]| {
            lin.linearized_rate(0, x) >= targets[0]
                && lin.linearized_rate(1, x) >= targets[1]
                && x[0] + x[1] <= pmax[0]
                && x[2] + x[3] <= pmax[1]
        };
        let mut center = [1.0f64; 4];
        let mut span = 2.0;
        let mut best = f64::INFINITY;
        let mut best_x = center;
        for _ in 0..8 {
            let steps = 10i64;
            let mut idx = [0i64; 4];
            loop {
                let x: Vec<f64> = (0..4)
                    .map(|d| (center[d] + span * (idx[d] - steps) as f64 / steps as f64).max(0.0))
                    .collect();
                if feasible(&x) {
                    let total: f64 = x.iter().sum();
                    if total < best {
                        best = total;
                        best_x = [x[0], x[1], x[2], x[3]];
                    }
                }
                let mut d = 0;
                loop {
                    idx[d] += 1;
                    if idx[d] <= 2 * steps {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                    if d == 4 {
                        break;
                    }
                }
                if d == 4 {
                    break;
                }
            }
            center = best_x;
            span /= 4.0;
        }
        assert!(
            (solved.total() - best).abs() <= 0.01 * best.max(1e-6),
            "solver {} vs grid oracle {}",
            solved.total(),
            best
        );
    }

    #[test]
    fn sca_subproblem_detects_infeasibility() {
        let sc = grid_scenario(1, 1, vec![1.0]);
        let assignment = full_assignment(1, 1);
        let reference = PowerAlloc { p: vec![vec![1.0]] };
        let lin = dc_linearize(&sc, &assignment, &reference).unwrap();
        let cfg = SolverConfig::default();
        // target requires p = 2^20 - 1 >> pmax
        let err = sca_subproblem(&sc, &assignment, &lin, &[20.0 * W_C], &[5.0], &cfg).unwrap_err();
        match err {
            HcnError::Infeasible { cell, .. } => assert_eq!(cell, Some(0)),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn line_search_finds_parabola_peak() {
        let x = quasiconcave_line_search(|x| -(x - 2.0) * (x - 2.0), 0.0, 10.0, 5.0, 1.5, 1e-9, 200)
            .unwrap();
        assert!((x - 2.0).abs() < 0.05, "got {x}");
    }

    #[test]
    fn line_search_monotone_decreasing_returns_lo() {
        let x = quasiconcave_line_search(|x| -x, 1.0, 10.0, 4.0, 1.5, 1e-9, 200).unwrap();
        assert_relative_eq!(x, 1.0);
    }

    #[test]
    fn line_search_rejects_inverted_interval() {
        assert!(quasiconcave_line_search(|x| x, 2.0, 1.0, 1.5, 1.5, 1e-6, 10).is_err());
    }

    #[test]
    fn line_search_matches_dense_grid_on_sampled_objective() {
        // EE-shaped unimodal objective: rate/(power(rate) + fixed)
        let f = |c: f64| c / ((c / 10.0).exp2() - 1.0 + 5.0);
        let found = quasiconcave_line_search(f, 0.5, 60.0, 10.0, 1.5, 1e-10, 400).unwrap();
        let mut best = (0.0, f64::MIN);
        let grid = 4000;
        for i in 0..=grid {
            let x = 0.5 + (60.0 - 0.5) * i as f64 / grid as f64;
            if f(x) > best.1 {
                best = (x, f(x));
            }
        }
        let step = (60.0 - 0.5) / grid as f64;
        assert!(
            (found - best.0).abs() <= 50.0 * step,
            "search {found} vs grid {}",
            best.0
        );
    }
}
