//! Split-spectrum pipeline: the macro cell maximizes a weighted
//! energy/spectral resource efficiency on its own band, the weight and
//! the band size found by bisection and a sweep, then each small cell
//! maximizes energy efficiency on the remaining band.

use crate::model::{self, Assignment, Metrics, Mode, PowerAlloc, Scenario};
use crate::numerics::{max_rate_derivative, multilevel_waterfill, single_ue_waterfill, SolverConfig};
use crate::{HcnError, Result};

/// How a transmit-power gradient search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchTermination {
    /// Interior stationary point within the step tolerance.
    Converged,
    /// Pinned at the minimum power meeting the rate floor.
    RateFloor,
    /// Pinned at the cell's power budget.
    BudgetCeiling,
}

/// Single-cell solution on a dedicated band.
#[derive(Debug, Clone)]
pub struct BandSolution {
    pub cell: usize,
    /// Subcarrier indices of the band, ascending.
    pub band: Vec<usize>,
    /// Served UE per band entry (max-SINR, noise-only).
    pub ues: Vec<usize>,
    /// Transmit power per band entry.
    pub powers: Vec<f64>,
    /// Minimum transmit power meeting the rate floor.
    pub p_floor_w: f64,
    /// Total transmit power at the returned point.
    pub pt_w: f64,
    pub rate_bps: f64,
    pub lambda_ee: f64,
    /// Weighted resource efficiency at the search's alpha.
    pub lambda_re: f64,
    pub alpha: f64,
    pub termination: SearchTermination,
    pub iterations: usize,
}

/// Macro band choice and the efficiency it achieved.
#[derive(Debug, Clone)]
pub struct BandwidthSplit {
    pub macro_band: Vec<usize>,
    pub small_band: Vec<usize>,
    pub lambda_re: f64,
    pub alpha: f64,
}

/// Weight-search outcome.
#[derive(Debug, Clone)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub interval: (f64, f64),
    pub iterations: usize,
    pub solution: BandSolution,
}

/// Full split-spectrum result.
#[derive(Debug, Clone)]
pub struct OverlayResult {
    pub assignment: Assignment,
    pub power: PowerAlloc,
    /// Interference-free metrics (each tier alone on its band).
    pub metrics: Metrics,
    /// Diagnostic re-evaluation with small cells interfering with each
    /// other on the shared remainder band.
    pub realized: Metrics,
    pub split: BandwidthSplit,
    /// Stage objectives: macro weighted efficiency, then each small
    /// cell's energy efficiency, then the assembled system EE.
    pub trace: Vec<f64>,
}

/// Per-(cell, band) data reused across a power/weight search: the
/// max-SINR served UE and effective CNR of every band subcarrier, plus
/// the water-filled floor meeting the cell's rate target.
struct BandContext {
    cell: usize,
    band: Vec<usize>,
    ues: Vec<usize>,
    cnrs: Vec<f64>,
    floor_powers: Vec<f64>,
    p_floor_w: f64,
    /// Static plus bandwidth-proportional circuit power of the cell.
    circuit_w: f64,
    band_hz: f64,
}

fn band_context(scenario: &Scenario, cell: usize, band: &[usize]) -> Result<BandContext> {
    if band.is_empty() {
        return Err(HcnError::invalid("band must be non-empty"));
    }
    if band.iter().any(|&n| n >= scenario.num_subcarriers()) {
        return Err(HcnError::invalid("band index out of range"));
    }
    let mut ues = Vec::with_capacity(band.len());
    let mut cnrs = Vec::with_capacity(band.len());
    for &n in band {
        let mut best = (0usize, f64::MIN);
        for k in 0..scenario.ue_count(cell) {
            let score = scenario.channel.gain(k, cell, cell, n) / scenario.channel.noise(k, cell, n);
            if score > best.1 {
                best = (k, score);
            }
        }
        ues.push(best.0);
        cnrs.push(best.1.max(0.0));
    }
    let target = scenario.qos.delta(cell);
    let w_c = scenario.spectrum.subcarrier_bandwidth_hz;
    let wf = single_ue_waterfill(&cnrs, target, w_c).map_err(|e| match e {
        HcnError::Infeasible { detail, .. } => HcnError::infeasible(Some(cell), detail),
        other => other,
    })?;
    let pmax = scenario.qos.pmax_w[cell];
    if wf.consumed_w > pmax * (1.0 + 1e-9) {
        return Err(HcnError::infeasible(
            Some(cell),
            "rate floor needs more than the power budget on this band",
        ));
    }
    let band_hz = w_c * band.len() as f64;
    let circuit_w = scenario.power_model.static_w[cell]
        + scenario.power_model.gamma_w_per_hz[cell] * band_hz;
    Ok(BandContext {
        cell,
        band: band.to_vec(),
        ues,
        cnrs,
        floor_powers: wf.powers,
        p_floor_w: wf.consumed_w.min(pmax),
        circuit_w,
        band_hz,
    })
}

struct BandEval {
    powers: Vec<f64>,
    rate_bps: f64,
    lambda_ee: f64,
    lambda_re: f64,
}

impl BandContext {
    /// Water-fills the band at total transmit power `pt` and evaluates
    /// the weighted efficiency.
    fn eval(&self, scenario: &Scenario, pt: f64, alpha: f64) -> Result<BandEval> {
        let w_c = scenario.spectrum.subcarrier_bandwidth_hz;
        let extra = (pt - self.p_floor_w).max(0.0);
        let wf = multilevel_waterfill(&self.cnrs, &self.floor_powers, extra, w_c)?;
        let total = self.circuit_w + scenario.power_model.zeta[self.cell] * pt;
        let eta_p = total / scenario.p_tot_w;
        let eta_w = self.band_hz / scenario.spectrum.total_bandwidth_hz();
        let lambda_ee = wf.rate_bps / total;
        let lambda_re = lambda_ee * (alpha + (1.0 - alpha) * eta_p / eta_w);
        Ok(BandEval {
            powers: wf.powers,
            rate_bps: wf.rate_bps,
            lambda_ee,
            lambda_re,
        })
    }

    /// Closed-form derivative of the weighted efficiency in `pt`:
    /// `[(alpha + (1-alpha) eta_P/eta_W) dR/dP_T - alpha zeta lambda_EE] / P`.
    fn re_derivative(&self, scenario: &Scenario, pt: f64, alpha: f64, eval: &BandEval) -> Result<f64> {
        let w_c = scenario.spectrum.subcarrier_bandwidth_hz;
        let zeta = scenario.power_model.zeta[self.cell];
        let total = self.circuit_w + zeta * pt;
        let eta_p = total / scenario.p_tot_w;
        let eta_w = self.band_hz / scenario.spectrum.total_bandwidth_hz();
        let marginal = max_rate_derivative(&self.cnrs, &eval.powers, w_c)?;
        Ok(((alpha + (1.0 - alpha) * eta_p / eta_w) * marginal - alpha * zeta * eval.lambda_ee)
            / total)
    }
}

/// Gradient search on the cell's total transmit power in
/// `[p_floor, pmax]`: steps along the sign of the closed-form
/// derivative, halving the step whenever the objective drops.
fn search_band(
    scenario: &Scenario,
    ctx: &BandContext,
    alpha: f64,
    config: &SolverConfig,
) -> Result<BandSolution> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HcnError::invalid("alpha must be in [0, 1]"));
    }
    let pmax = scenario.qos.pmax_w[ctx.cell];
    let lo = ctx.p_floor_w;
    let mut pt = lo;
    let mut current = ctx.eval(scenario, pt, alpha)?;
    let mut best_pt = pt;
    let mut best_val = current.lambda_re;
    let mut step = config.search_step_w.unwrap_or(0.1 * pmax);
    let eps = config.pt_tol_frac * pmax;
    let mut iterations = 0;
    while step > eps && iterations < config.max_pt_iters && pmax - lo > eps {
        iterations += 1;
        let d = ctx.re_derivative(scenario, pt, alpha, &current)?;
        let cand = (pt + d.signum() * step).clamp(lo, pmax);
        if cand == pt {
            step *= 0.5;
            continue;
        }
        let cand_eval = ctx.eval(scenario, cand, alpha)?;
        if cand_eval.lambda_re > current.lambda_re {
            pt = cand;
            current = cand_eval;
            if current.lambda_re > best_val {
                best_val = current.lambda_re;
                best_pt = pt;
            }
        } else {
            step *= 0.5;
        }
    }
    let eval = ctx.eval(scenario, best_pt, alpha)?;
    let termination = if best_pt <= lo + eps {
        SearchTermination::RateFloor
    } else if best_pt >= pmax - eps {
        SearchTermination::BudgetCeiling
    } else {
        SearchTermination::Converged
    };
    Ok(BandSolution {
        cell: ctx.cell,
        band: ctx.band.clone(),
        ues: ctx.ues.clone(),
        powers: eval.powers,
        p_floor_w: ctx.p_floor_w,
        pt_w: best_pt,
        rate_bps: eval.rate_bps,
        lambda_ee: eval.lambda_ee,
        lambda_re: eval.lambda_re,
        alpha,
        termination,
        iterations,
    })
}

/// Macro-cell weighted-efficiency maximization on a fixed band at a
/// fixed weight: noise-only max-SINR assignment, water-filled floor for
/// the macro rate target, then the transmit-power gradient search.
pub fn macro_re_fixed_alpha(
    scenario: &Scenario,
    band: &[usize],
    alpha: f64,
    config: &SolverConfig,
) -> Result<BandSolution> {
    let ctx = band_context(scenario, 0, band)?;
    search_band(scenario, &ctx, alpha, config)
}

/// Per-small-cell energy-efficiency maximization on the remainder band;
/// the pure-EE special case of the weighted search.
pub fn smallcell_ee(
    scenario: &Scenario,
    band: &[usize],
    cell: usize,
    config: &SolverConfig,
) -> Result<BandSolution> {
    if cell == 0 || cell >= scenario.num_cells() {
        return Err(HcnError::invalid("smallcell_ee needs a small-cell index"));
    }
    let ctx = band_context(scenario, cell, band)?;
    search_band(scenario, &ctx, 1.0, config)
}

/// Bisection on the efficiency weight: the midpoint's objective is
/// compared against the upper end's and the interval shrinks toward the
/// balanced trade-off until it is narrower than the tolerance.
pub fn bisect_alpha(
    scenario: &Scenario,
    band: &[usize],
    config: &SolverConfig,
) -> Result<AlphaSearch> {
    let ctx = band_context(scenario, 0, band)?;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut iterations = 0;
    while hi - lo > config.alpha_tol {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let lam_mid = search_band(scenario, &ctx, mid, config)?.lambda_re;
        let lam_hi = search_band(scenario, &ctx, hi, config)?.lambda_re;
        if lam_mid >= lam_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let solution = search_band(scenario, &ctx, alpha, config)?;
    Ok(AlphaSearch {
        alpha,
        interval: (lo, hi),
        iterations,
        solution,
    })
}

/// Minimum macro transmit power meeting the rate floor on a band.
pub fn macro_floor_power(scenario: &Scenario, band: &[usize]) -> Result<f64> {
    Ok(band_context(scenario, 0, band)?.p_floor_w)
}

/// Weighted efficiency and its closed-form derivative at a given total
/// macro transmit power; diagnostic hook for derivative checks.
/// `pt` must lie in `[floor, pmax]`.
pub fn re_profile(scenario: &Scenario, band: &[usize], alpha: f64, pt: f64) -> Result<(f64, f64)> {
    let ctx = band_context(scenario, 0, band)?;
    if pt < ctx.p_floor_w || pt > scenario.qos.pmax_w[0] {
        return Err(HcnError::invalid("pt outside [floor, pmax]"));
    }
    let eval = ctx.eval(scenario, pt, alpha)?;
    let d = ctx.re_derivative(scenario, pt, alpha, &eval)?;
    Ok((eval.lambda_re, d))
}

/// Weighted efficiency sampled on an 11-point weight grid; audits the
/// quasi-concavity the bisection presumes.
pub fn alpha_grid_diagnostic(
    scenario: &Scenario,
    band: &[usize],
    config: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    let ctx = band_context(scenario, 0, band)?;
    (0..=10)
        .map(|i| {
            let alpha = i as f64 / 10.0;
            Ok((alpha, search_band(scenario, &ctx, alpha, config)?.lambda_re))
        })
        .collect()
}

/// One sweep entry: macro band size and the efficiency reached on it.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub macro_count: usize,
    pub lambda_re: f64,
    pub alpha: f64,
    pub feasible: bool,
}

/// Sweeps the macro band size from one-subcarrier-per-UE up to the band
/// edge (leaving at least one subcarrier for small cells when present),
/// running the weight bisection at each size, and keeps the best split.
pub fn bandwidth_sweep(
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<(BandwidthSplit, Vec<SweepPoint>)> {
    let n_tot = scenario.num_subcarriers();
    let k0 = scenario.ue_count(0).max(1);
    let cap = if scenario.num_cells() > 1 { n_tot - 1 } else { n_tot };
    if k0 > cap {
        return Err(HcnError::invalid(
            "not enough subcarriers for one per macro UE",
        ));
    }
    let mut sweep = Vec::with_capacity(cap - k0 + 1);
    let mut best: Option<(usize, f64, f64)> = None;
    for count in k0..=cap {
        let band: Vec<usize> = (0..count).collect();
        match bisect_alpha(scenario, &band, config) {
            Ok(found) => {
                let lam = found.solution.lambda_re;
                sweep.push(SweepPoint {
                    macro_count: count,
                    lambda_re: lam,
                    alpha: found.alpha,
                    feasible: true,
                });
                if best.map_or(true, |(_, b, _)| lam > b) {
                    best = Some((count, lam, found.alpha));
                }
            }
            Err(HcnError::Infeasible { .. }) => sweep.push(SweepPoint {
                macro_count: count,
                lambda_re: 0.0,
                alpha: f64::NAN,
                feasible: false,
            }),
            Err(other) => return Err(other),
        }
    }
    let (count, lambda_re, alpha) = best.ok_or_else(|| {
        HcnError::infeasible(Some(0), "macro rate floor infeasible at every band size")
    })?;
    Ok((
        BandwidthSplit {
            macro_band: (0..count).collect(),
            small_band: (count..n_tot).collect(),
            lambda_re,
            alpha,
        },
        sweep,
    ))
}

/// System metrics with interference-free per-tier rates but with every
/// small cell transmitting on the shared remainder band for real:
/// rates keep all cross-cell terms while the power and bandwidth
/// accounting stays per-assignment.
pub fn realized_overlay_metrics(
    scenario: &Scenario,
    assignment: &Assignment,
    power: &PowerAlloc,
    alpha: f64,
) -> Result<Metrics> {
    assignment.validate(scenario)?;
    let num_cells = scenario.num_cells();
    let w_tot = scenario.spectrum.total_bandwidth_hz();
    let w_c = scenario.spectrum.subcarrier_bandwidth_hz;
    let mut per_cell_rate = Vec::with_capacity(num_cells);
    let mut per_cell_tx = Vec::with_capacity(num_cells);
    let mut total_power = 0.0;
    for l in 0..num_cells {
        per_cell_rate.push(model::cell_rate(scenario, assignment, power, l, Mode::Underlay)?);
        let tx = power.cell_total(l);
        per_cell_tx.push(tx);
        let w_used = model::utilized_bandwidth_hz(scenario, assignment, l, Mode::Overlay);
        total_power += scenario.power_model.zeta[l] * tx
            + scenario.power_model.static_w[l]
            + scenario.power_model.gamma_w_per_hz[l] * w_used;
    }
    let total_rate: f64 = per_cell_rate.iter().sum();
    let occupied = {
        let used = (0..scenario.num_subcarriers())
            .filter(|&n| (0..num_cells).any(|l| assignment.ue_of(l, n).is_some()))
            .count();
        w_c * used.max(1) as f64
    };
    let eta_w = occupied / w_tot;
    let eta_p = total_power / scenario.p_tot_w;
    let ee = total_rate / total_power;
    Ok(Metrics {
        per_cell_rate_bps: per_cell_rate,
        total_rate_bps: total_rate,
        per_cell_tx_w: per_cell_tx,
        total_power_w: total_power,
        ee_bits_per_joule: ee,
        se_bits_per_hz: total_rate / occupied,
        re_bits_per_joule: ee * (alpha + (1.0 - alpha) * eta_p / eta_w),
        eta_p,
        eta_w,
        alpha,
        tau_hz_per_w: w_tot / scenario.p_tot_w,
        p_tot_w: scenario.p_tot_w,
    })
}

/// Full split-spectrum optimization: band sweep for the macro, then an
/// independent EE search per small cell on the remainder band.
pub fn maximize_ee_overlay(scenario: &Scenario, config: &SolverConfig) -> Result<OverlayResult> {
    config.validate()?;
    let (split, _sweep) = bandwidth_sweep(scenario, config)?;
    let macro_sol = macro_re_fixed_alpha(scenario, &split.macro_band, split.alpha, config)?;

    let cells = scenario.num_cells();
    let subs = scenario.num_subcarriers();
    let mut assignment = Assignment::empty(cells, subs);
    let mut power = PowerAlloc::zeros(cells, subs);
    let mut trace = vec![macro_sol.lambda_re];
    for (i, &n) in macro_sol.band.iter().enumerate() {
        assignment.set(0, n, Some(macro_sol.ues[i]));
        power.p[0][n] = macro_sol.powers[i];
    }
    for cell in 1..cells {
        let sol = smallcell_ee(scenario, &split.small_band, cell, config)?;
        for (i, &n) in sol.band.iter().enumerate() {
            assignment.set(cell, n, Some(sol.ues[i]));
            power.p[cell][n] = sol.powers[i];
        }
        trace.push(sol.lambda_ee);
    }
    let metrics = model::evaluate(scenario, &assignment, &power, Mode::Overlay, split.alpha)?;
    let realized = realized_overlay_metrics(scenario, &assignment, &power, split.alpha)?;
    trace.push(metrics.ee_bits_per_joule);
    Ok(OverlayResult {
        assignment,
        power,
        metrics,
        realized,
        split,
        trace,
    })
}
