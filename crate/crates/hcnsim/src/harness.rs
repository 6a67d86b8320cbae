//! Experiment front-end: config parsing, Monte Carlo sweeps over seeds
//! and grid values, CSV emission, the exhaustive verification oracle,
//! and gnuplot data export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::model::{
    self, generate_scenario, Assignment, Mode, PowerAlloc, Scenario, ScenarioParams,
};
use crate::numerics::SolverConfig;
use crate::{overlay, underlay, HcnError, Result};

/// Which sweep an experiment runs; each kind mirrors one results figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Optimal shared-spectrum EE versus the served rate target.
    EeVsRate,
    /// Per-sweep EE trace of the shared-spectrum search.
    Convergence,
    /// Weighted efficiency across the weight grid, plus the bisection.
    AlphaTrace,
    /// Both strategies across a mean-CNR grid.
    CnrSweep,
    /// Both strategies across subcarrier counts.
    SubcarrierSweep,
    /// Both strategies across small-cell counts.
    CellSweep,
    /// Shared-spectrum algorithm against the exhaustive oracle.
    OracleCompare,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EeVsRate => "ee_vs_rate",
            Self::Convergence => "convergence",
            Self::AlphaTrace => "alpha_trace",
            Self::CnrSweep => "cnr_sweep",
            Self::SubcarrierSweep => "subcarrier_sweep",
            Self::CellSweep => "cell_sweep",
            Self::OracleCompare => "oracle_compare",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ee_vs_rate" => Self::EeVsRate,
            "convergence" => Self::Convergence,
            "alpha_trace" => Self::AlphaTrace,
            "cnr_sweep" => Self::CnrSweep,
            "subcarrier_sweep" => Self::SubcarrierSweep,
            "cell_sweep" => Self::CellSweep,
            "oracle_compare" => Self::OracleCompare,
            other => return Err(HcnError::invalid(format!("unknown experiment '{other}'"))),
        })
    }

    /// Figure analog used in plot-data file names.
    pub fn figure_label(self) -> &'static str {
        match self {
            Self::EeVsRate => "fig1",
            Self::Convergence => "fig2",
            Self::AlphaTrace => "fig3",
            Self::CnrSweep => "fig4",
            Self::SubcarrierSweep => "fig5",
            Self::CellSweep => "fig6",
            Self::OracleCompare => "oracle",
        }
    }
}

/// Which strategies a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Underlay,
    Overlay,
    Both,
}

impl RunMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "underlay" => Self::Underlay,
            "overlay" => Self::Overlay,
            "both" => Self::Both,
            other => return Err(HcnError::invalid(format!("unknown mode '{other}'"))),
        })
    }

    fn includes(self, mode: Mode) -> bool {
        matches!(
            (self, mode),
            (Self::Both, _) | (Self::Underlay, Mode::Underlay) | (Self::Overlay, Mode::Overlay)
        )
    }
}

/// Complete description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub params: ScenarioParams,
    pub seeds: Vec<u64>,
    /// Sweep grid; `None` selects the kind's default.
    pub grid: Option<Vec<f64>>,
    pub mode: RunMode,
    pub solver: SolverConfig,
    pub oracle_grid_steps: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HcnError::invalid("seed list must be non-empty"));
        }
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return Err(HcnError::invalid("grid must be non-empty"));
            }
            match self.kind {
                ExperimentKind::SubcarrierSweep | ExperimentKind::CellSweep => {
                    if grid.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                        return Err(HcnError::invalid("count grid values must be integers >= 1"));
                    }
                }
                ExperimentKind::EeVsRate => {
                    if grid.iter().any(|v| !(*v > 0.0)) {
                        return Err(HcnError::invalid("rate grid values must be > 0"));
                    }
                }
                _ => {}
            }
        }
        self.solver.validate()
    }
}

fn default_grid(kind: ExperimentKind, params: &ScenarioParams, seeds: usize) -> Vec<f64> {
    match kind {
        ExperimentKind::EeVsRate => {
            let base = params.delta_macro_bps.max(1.0);
            (0..20)
                .map(|i| base * 16f64.powf(i as f64 / 19.0))
                .collect()
        }
        ExperimentKind::Convergence => (0..=20).map(|i| i as f64).collect(),
        ExperimentKind::AlphaTrace => (0..=10).map(|i| i as f64 / 10.0).collect(),
        ExperimentKind::CnrSweep => vec![0.0, 5.0, 10.0, 15.0, 20.0],
        ExperimentKind::SubcarrierSweep => vec![32.0, 64.0, 128.0, 256.0, 512.0],
        ExperimentKind::CellSweep => vec![2.0, 4.0, 8.0, 12.0, 16.0],
        ExperimentKind::OracleCompare => (0..seeds).map(|i| i as f64).collect(),
    }
}

/// Running per-row aggregate over seeds.
#[derive(Debug, Clone, Default)]
struct Agg {
    ee: f64,
    se: f64,
    power: f64,
    iters: f64,
    feasible: u64,
    infeasible: u64,
}

impl Agg {
    fn add(&mut self, ee: f64, se: f64, power: f64, iters: f64) {
        self.ee += ee;
        self.se += se;
        self.power += power;
        self.iters += iters;
        self.feasible += 1;
    }

    fn row(&self, grid_value: f64, mode: &str) -> String {
        let n = self.feasible.max(1) as f64;
        format!(
            "{:.9e},{},{:.9e},{:.9e},{:.9e},{},{},{:.9e}",
            grid_value,
            mode,
            self.ee / n,
            self.se / n,
            self.power / n,
            self.feasible,
            self.infeasible,
            self.iters / n
        )
    }
}

/// Mean own-link channel-to-noise ratio referenced to the full cell
/// budget on a single subcarrier; defines the sweep axis of the CNR
/// experiment.
pub fn mean_own_cnr(scenario: &Scenario) -> f64 {
    let n_sub = scenario.num_subcarriers();
    let mut acc = 0.0;
    let mut count = 0usize;
    for l in 0..scenario.num_cells() {
        let p = scenario.qos.pmax_w[l];
        for k in 0..scenario.ue_count(l) {
            for n in 0..n_sub {
                acc +=
                    scenario.channel.gain(k, l, l, n) * p / scenario.channel.noise(k, l, n);
                count += 1;
            }
        }
    }
    acc / count.max(1) as f64
}

/// Same scenario with the noise scaled so `mean_own_cnr` equals the
/// target (given in dB).
pub fn scenario_at_mean_cnr(scenario: &Scenario, target_db: f64) -> Scenario {
    let target = 10f64.powf(target_db / 10.0);
    let factor = mean_own_cnr(scenario) / target;
    Scenario {
        channel: scenario.channel.with_noise_scaled(factor),
        ..scenario.clone()
    }
}

fn is_infeasible(err: &HcnError) -> bool {
    matches!(err, HcnError::Infeasible { .. } | HcnError::Convergence(_))
}

/// Runs the experiment and returns the CSV text: a kind comment line, a
/// header, then one row per (grid value, strategy), seed-averaged.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<String> {
    spec.validate()?;
    let grid = spec
        .grid
        .clone()
        .unwrap_or_else(|| default_grid(spec.kind, &spec.params, spec.seeds.len()));
    let rows = match spec.kind {
        ExperimentKind::EeVsRate => run_ee_vs_rate(spec, &grid)?,
        ExperimentKind::Convergence => run_convergence(spec, &grid)?,
        ExperimentKind::AlphaTrace => run_alpha_trace(spec, &grid)?,
        ExperimentKind::CnrSweep => run_two_mode_sweep(spec, &grid, SweepAxis::CnrDb)?,
        ExperimentKind::SubcarrierSweep => run_two_mode_sweep(spec, &grid, SweepAxis::Subcarriers)?,
        ExperimentKind::CellSweep => run_two_mode_sweep(spec, &grid, SweepAxis::SmallCells)?,
        ExperimentKind::OracleCompare => run_oracle_compare(spec)?,
    };
    let mut out = format!("# hcnsim-experiment kind={}\n", spec.kind.as_str());
    out.push_str(
        "grid_value,mode,mean_ee_bits_per_joule,mean_se_bits_per_hz,mean_power_w,feasible_count,infeasible_count,iters_mean\n",
    );
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}

fn run_ee_vs_rate(spec: &ExperimentSpec, grid: &[f64]) -> Result<Vec<String>> {
    let ratio = if spec.params.delta_macro_bps > 0.0 {
        spec.params.delta_small_bps / spec.params.delta_macro_bps
    } else {
        1.0
    };
    let mut rows = Vec::new();
    for &rate in grid {
        let mut agg = Agg::default();
        for &seed in &spec.seeds {
            let scenario = generate_scenario(seed, &spec.params)?;
            let targets: Vec<f64> = (0..scenario.num_cells())
                .map(|l| if l == 0 { rate } else { rate * ratio })
                .collect();
            match underlay::inner_max_ee_at_rate(&scenario, &targets, &spec.solver) {
                Ok(sol) => agg.add(
                    sol.metrics.ee_bits_per_joule,
                    sol.metrics.se_bits_per_hz,
                    sol.metrics.total_power_w,
                    sol.sca_iterations as f64,
                ),
                Err(e) if is_infeasible(&e) => agg.infeasible += 1,
                Err(e) => return Err(e),
            }
        }
        rows.push(agg.row(rate, "underlay"));
    }
    Ok(rows)
}

fn run_convergence(spec: &ExperimentSpec, grid: &[f64]) -> Result<Vec<String>> {
    // one trace per seed, padded with its last value; the grid indexes
    // rotation steps
    let mut traces = Vec::new();
    let mut rotations = Vec::new();
    let mut infeasible = 0u64;
    for &seed in &spec.seeds {
        let scenario = generate_scenario(seed, &spec.params)?;
        match underlay::maximize_ee_underlay(&scenario, &spec.solver) {
            Ok(result) => {
                traces.push(result.trace);
                rotations.push(result.rotations as f64);
            }
            Err(e) if is_infeasible(&e) => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    let mut rows = Vec::new();
    for &step in grid {
        let idx = step as usize;
        let mut agg = Agg::default();
        agg.infeasible = infeasible;
        for (trace, rot) in traces.iter().zip(&rotations) {
            let v = *trace.get(idx).unwrap_or_else(|| trace.last().unwrap());
            agg.add(v, 0.0, 0.0, *rot);
        }
        rows.push(agg.row(step, "underlay"));
    }
    Ok(rows)
}

fn run_alpha_trace(spec: &ExperimentSpec, grid: &[f64]) -> Result<Vec<String>> {
    // the weighted-efficiency profile on a fixed macro band (half the
    // carriers, at least one per macro UE); the power column reports the
    // bisection's final weight
    let mut profiles = Vec::new();
    let mut alphas = Vec::new();
    let mut iters = Vec::new();
    let mut infeasible = 0u64;
    for &seed in &spec.seeds {
        let scenario = generate_scenario(seed, &spec.params)?;
        let count = (scenario.num_subcarriers() / 2).max(scenario.ue_count(0).max(1));
        let band: Vec<usize> = (0..count.min(scenario.num_subcarriers())).collect();
        let profile: Result<Vec<f64>> = grid
            .iter()
            .map(|&a| Ok(overlay::macro_re_fixed_alpha(&scenario, &band, a, &spec.solver)?.lambda_re))
            .collect();
        match profile.and_then(|p| {
            let found = overlay::bisect_alpha(&scenario, &band, &spec.solver)?;
            Ok((p, found))
        }) {
            Ok((p, found)) => {
                profiles.push(p);
                alphas.push(found.alpha);
                iters.push(found.iterations as f64);
            }
            Err(e) if is_infeasible(&e) => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    let mut rows = Vec::new();
    for (i, &alpha) in grid.iter().enumerate() {
        let mut agg = Agg::default();
        agg.infeasible = infeasible;
        for ((profile, a_star), it) in profiles.iter().zip(&alphas).zip(&iters) {
            agg.add(profile[i], 0.0, *a_star, *it);
        }
        rows.push(agg.row(alpha, "overlay"));
    }
    Ok(rows)
}

enum SweepAxis {
    CnrDb,
    Subcarriers,
    SmallCells,
}

fn run_two_mode_sweep(
    spec: &ExperimentSpec,
    grid: &[f64],
    axis: SweepAxis,
) -> Result<Vec<String>> {
    let mut rows = Vec::new();
    for &value in grid {
        let mut under = Agg::default();
        let mut over = Agg::default();
        for &seed in &spec.seeds {
            let mut params = spec.params.clone();
            match axis {
                SweepAxis::Subcarriers => params.total_subcarriers = value as usize,
                SweepAxis::SmallCells => params.num_small_cells = value as usize,
                SweepAxis::CnrDb => {}
            }
            let mut scenario = generate_scenario(seed, &params)?;
            if matches!(axis, SweepAxis::CnrDb) {
                scenario = scenario_at_mean_cnr(&scenario, value);
            }
            if spec.mode.includes(Mode::Underlay) {
                match underlay::maximize_ee_underlay(&scenario, &spec.solver) {
                    Ok(r) => under.add(
                        r.metrics.ee_bits_per_joule,
                        r.metrics.se_bits_per_hz,
                        r.metrics.total_power_w,
                        r.rotations as f64,
                    ),
                    Err(e) if is_infeasible(&e) => under.infeasible += 1,
                    Err(e) => return Err(e),
                }
            }
            if spec.mode.includes(Mode::Overlay) {
                match overlay::maximize_ee_overlay(&scenario, &spec.solver) {
                    // comparison sweeps report the realized efficiency,
                    // with small cells actually sharing their band
                    Ok(r) => over.add(
                        r.realized.ee_bits_per_joule,
                        r.realized.se_bits_per_hz,
                        r.realized.total_power_w,
                        r.trace.len() as f64,
                    ),
                    Err(e) if is_infeasible(&e) => over.infeasible += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        if spec.mode.includes(Mode::Underlay) {
            rows.push(under.row(value, "underlay"));
        }
        if spec.mode.includes(Mode::Overlay) {
            rows.push(over.row(value, "overlay"));
        }
    }
    Ok(rows)
}

fn run_oracle_compare(spec: &ExperimentSpec) -> Result<Vec<String>> {
    let mut rows = Vec::new();
    for (i, &seed) in spec.seeds.iter().enumerate() {
        let scenario = generate_scenario(seed, &spec.params)?;
        let mut algo = Agg::default();
        let mut oracle_agg = Agg::default();
        match underlay::maximize_ee_underlay(&scenario, &spec.solver) {
            Ok(r) => algo.add(
                r.metrics.ee_bits_per_joule,
                r.metrics.se_bits_per_hz,
                r.metrics.total_power_w,
                r.rotations as f64,
            ),
            Err(e) if is_infeasible(&e) => algo.infeasible += 1,
            Err(e) => return Err(e),
        }
        match brute_force_oracle(&scenario, spec.oracle_grid_steps) {
            Ok(o) => oracle_agg.add(
                o.ee_bits_per_joule,
                0.0,
                o.power.total(),
                o.search_space as f64,
            ),
            Err(e) if is_infeasible(&e) => oracle_agg.infeasible += 1,
            Err(e) => return Err(e),
        }
        rows.push(algo.row(i as f64, "underlay"));
        rows.push(oracle_agg.row(i as f64, "oracle"));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

/// Best point found by exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub ee_bits_per_joule: f64,
    pub assignment: Assignment,
    pub power: PowerAlloc,
    /// Joint power combinations examined.
    pub search_space: u64,
    /// Combinations meeting the rate floors.
    pub feasible_points: u64,
}

/// Per-cell power combinations on the quantized grid whose sum stays
/// within the budget.
fn budgeted_combos(levels: &[f64], num_subcarriers: usize, budget: f64) -> Vec<(Vec<u8>, f64)> {
    let mut out = Vec::new();
    let mut idx = vec![0u8; num_subcarriers];
    loop {
        let total: f64 = idx.iter().map(|&i| levels[i as usize]).sum();
        if total <= budget * (1.0 + 1e-12) {
            out.push((idx.clone(), total));
        }
        let mut d = 0;
        loop {
            idx[d] += 1;
            if (idx[d] as usize) < levels.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == num_subcarriers {
                return out;
            }
        }
    }
}

/// Exhaustively maximizes shared-spectrum EE over all exclusive
/// assignments and quantized power vectors. Only tiny instances are
/// accepted; larger ones are refused with a size report.
pub fn brute_force_oracle(scenario: &Scenario, grid_steps: usize) -> Result<OracleResult> {
    let cells = scenario.num_cells();
    let subs = scenario.num_subcarriers();
    let max_ues = (0..cells).map(|l| scenario.ue_count(l)).max().unwrap_or(0);
    if cells > 2 || subs > 3 || max_ues > 2 || grid_steps > 64 || grid_steps < 2 {
        return Err(HcnError::invalid(format!(
            "oracle instance too large: {cells} cells, {subs} subcarriers, \
             up to {max_ues} UEs/cell, {grid_steps} grid steps \
             (limits: 2 cells, 3 subcarriers, 2 UEs/cell, 64 steps)"
        )));
    }
    let w_c = scenario.spectrum.subcarrier_bandwidth_hz;
    let levels: Vec<Vec<f64>> = (0..cells)
        .map(|l| {
            (0..grid_steps)
                .map(|i| scenario.qos.pmax_w[l] * i as f64 / (grid_steps - 1) as f64)
                .collect()
        })
        .collect();
    let combos: Vec<Vec<(Vec<u8>, f64)>> = (0..cells)
        .map(|l| budgeted_combos(&levels[l], subs, scenario.qos.pmax_w[l]))
        .collect();

    // Best served rate per (cell, subcarrier) for each pair of power
    // levels (own level, other cell's level); the UE choice folds into
    // the table because it never affects any other cell's rate.
    // Flat layout: table[l][n * s * s + own * s + other].
    let s = grid_steps;
    let other_dim = if cells == 2 { s } else { 1 };
    let mut table = vec![vec![0.0f64; subs * s * other_dim]; cells];
    for l in 0..cells {
        let m = 1 - l; // only used when cells == 2
        for n in 0..subs {
            for own in 0..s {
                for other in 0..other_dim {
                    let mut best = 0.0f64;
                    for k in 0..scenario.ue_count(l) {
                        let mut denom = scenario.channel.noise(k, l, n);
                        if cells == 2 {
                            denom += scenario.channel.gain(k, l, m, n) * levels[m][other];
                        }
                        let sinr = scenario.channel.gain(k, l, l, n) * levels[l][own] / denom;
                        best = best.max(w_c * (1.0 + sinr).log2());
                    }
                    table[l][(n * s + own) * other_dim + other] = best;
                }
            }
        }
    }

    let w_tot = scenario.spectrum.total_bandwidth_hz();
    let circuit: f64 = (0..cells)
        .map(|l| {
            scenario.power_model.static_w[l] + scenario.power_model.gamma_w_per_hz[l] * w_tot
        })
        .sum();
    let deltas: Vec<f64> = (0..cells).map(|l| scenario.qos.delta(l)).collect();

    let empty = (vec![0u8; subs], 0.0);
    let second: &[(Vec<u8>, f64)] = if cells == 2 {
        &combos[1]
    } else {
        std::slice::from_ref(&empty)
    };
    let mut search_space = 0u64;
    let mut feasible_points = 0u64;
    let mut best: Option<(f64, Vec<u8>, Vec<u8>)> = None;
    for (idx0, total0) in &combos[0] {
        for (idx1, total1) in second {
            search_space += 1;
            let mut r0 = 0.0;
            let mut r1 = 0.0;
            for n in 0..subs {
                let own = idx0[n] as usize;
                let other = idx1[n] as usize;
                if cells == 2 {
                    r0 += table[0][(n * s + own) * other_dim + other];
                    r1 += table[1][(n * s + other) * other_dim + own];
                } else {
                    r0 += table[0][n * s + own];
                }
            }
            if r0 < deltas[0] || (cells == 2 && r1 < deltas[1]) {
                continue;
            }
            feasible_points += 1;
            let mut power_w = circuit + scenario.power_model.zeta[0] * total0;
            if cells == 2 {
                power_w += scenario.power_model.zeta[1] * total1;
            }
            let ee = (r0 + r1) / power_w;
            if best.as_ref().map_or(true, |(b, _, _)| ee > *b) {
                best = Some((ee, idx0.clone(), idx1.clone()));
            }
        }
    }
    let (_, idx0, idx1) = best.ok_or_else(|| {
        HcnError::infeasible(None, "no grid point meets the rate floors")
    })?;
    let mut power = PowerAlloc::zeros(cells, subs);
    for n in 0..subs {
        power.p[0][n] = levels[0][idx0[n] as usize];
        if cells == 2 {
            power.p[1][n] = levels[1][idx1[n] as usize];
        }
    }
    let assignment = underlay::assign_max_sinr(scenario, &power);
    let metrics = model::evaluate(scenario, &assignment, &power, Mode::Underlay, 1.0)?;
    Ok(OracleResult {
        ee_bits_per_joule: metrics.ee_bits_per_joule,
        assignment,
        power,
        search_space,
        feasible_points,
    })
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

/// Experiment settings from a flat `key = value` text file.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub params: ScenarioParams,
    pub seeds: Option<Vec<u64>>,
    pub grid: Option<Vec<f64>>,
    pub mode: Option<RunMode>,
    pub solver: SolverConfig,
    pub oracle_grid_steps: usize,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            params: ScenarioParams::default(),
            seeds: None,
            grid: None,
            mode: None,
            solver: SolverConfig::default(),
            oracle_grid_steps: 32,
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize) -> Result<T> {
    value.trim().parse().map_err(|_| HcnError::Parse {
        line,
        msg: format!("cannot parse '{}'", value.trim()),
    })
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse_num(v, line))
        .collect()
}

/// Parses the flat config format: `key = value`, `#` comments, blank
/// lines ignored; unknown keys are errors with their line number.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut cfg = ConfigFile::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(HcnError::Parse {
            line,
            msg: "expected 'key = value'".into(),
        })?;
        let key = key.trim();
        let p = &mut cfg.params;
        let s = &mut cfg.solver;
        match key {
            "subcarrier_bandwidth_hz" => p.subcarrier_bandwidth_hz = parse_num(value, line)?,
            "total_subcarriers" => p.total_subcarriers = parse_num(value, line)?,
            "num_small_cells" => p.num_small_cells = parse_num(value, line)?,
            "macro_ues" => p.macro_ues = parse_num(value, line)?,
            "small_ues" => p.small_ues = parse_num(value, line)?,
            "macro_radius_m" => p.macro_radius_m = parse_num(value, line)?,
            "small_radius_m" => p.small_radius_m = parse_num(value, line)?,
            "macro_pmax_dbm" => p.macro_pmax_w = model::dbm_to_watts(parse_num(value, line)?),
            "small_pmax_dbm" => p.small_pmax_w = model::dbm_to_watts(parse_num(value, line)?),
            "macro_pmax_w" => p.macro_pmax_w = parse_num(value, line)?,
            "small_pmax_w" => p.small_pmax_w = parse_num(value, line)?,
            "delta_macro_bps" => p.delta_macro_bps = parse_num(value, line)?,
            "delta_small_bps" => p.delta_small_bps = parse_num(value, line)?,
            "noise_dbm_hz" => p.noise_w_per_hz = model::dbm_to_watts(parse_num(value, line)?),
            "zeta" => p.zeta = parse_num(value, line)?,
            "ps_macro_w" => p.ps_macro_w = parse_num(value, line)?,
            "ps_small_w" => p.ps_small_w = parse_num(value, line)?,
            "gamma_w_per_hz" => p.gamma_w_per_hz = parse_num(value, line)?,
            "p_tot_w" => p.p_tot_w = Some(parse_num(value, line)?),
            "seeds" => cfg.seeds = Some(parse_list(value, line)?),
            "grid" => cfg.grid = Some(parse_list(value, line)?),
            "mode" => {
                cfg.mode = Some(RunMode::parse(value.trim()).map_err(|_| HcnError::Parse {
                    line,
                    msg: format!("unknown mode '{}'", value.trim()),
                })?)
            }
            "oracle_grid_steps" => cfg.oracle_grid_steps = parse_num(value, line)?,
            "sca_tol" => s.sca_tol = parse_num(value, line)?,
            "outer_tol" => s.outer_tol = parse_num(value, line)?,
            "outer_step" => s.outer_step = parse_num(value, line)?,
            "rotation_tol" => s.rotation_tol = parse_num(value, line)?,
            "alpha_tol" => s.alpha_tol = parse_num(value, line)?,
            "pt_tol_frac" => s.pt_tol_frac = parse_num(value, line)?,
            "seed_grid" => s.seed_grid = parse_num(value, line)?,
            "max_rotations" => s.max_rotations = parse_num(value, line)?,
            "max_line_search_iters" => s.max_line_search_iters = parse_num(value, line)?,
            "max_alternations" => s.max_alternations = parse_num(value, line)?,
            "max_sca_iters" => s.max_sca_iters = parse_num(value, line)?,
            "max_pt_iters" => s.max_pt_iters = parse_num(value, line)?,
            other => {
                return Err(HcnError::Parse {
                    line,
                    msg: format!("unknown key '{other}'"),
                })
            }
        }
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

/// Splits an experiment CSV into per-series gnuplot data files named
/// after the figure analog; returns the written paths.
pub fn emit_plotdata(csv: &str, outdir: &Path) -> Result<Vec<PathBuf>> {
    let mut lines = csv.lines().enumerate();
    let (_, first) = lines.next().ok_or(HcnError::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let kind_str = first
        .strip_prefix("# hcnsim-experiment kind=")
        .ok_or(HcnError::Parse {
            line: 1,
            msg: "missing experiment kind comment".into(),
        })?;
    let kind = ExperimentKind::parse(kind_str.trim()).map_err(|_| HcnError::Parse {
        line: 1,
        msg: format!("unknown experiment kind '{kind_str}'"),
    })?;
    let (_, header) = lines.next().ok_or(HcnError::Parse {
        line: 2,
        msg: "missing header row".into(),
    })?;
    if !header.starts_with("grid_value,mode,") {
        return Err(HcnError::Parse {
            line: 2,
            msg: "unexpected header row".into(),
        });
    }
    // series name -> data lines, insertion-ordered
    let mut series: Vec<(String, Vec<String>)> = Vec::new();
    for (i, row) in lines {
        let line = i + 1;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 8 {
            return Err(HcnError::Parse {
                line,
                msg: format!("expected 8 columns, found {}", fields.len()),
            });
        }
        let _: f64 = parse_num(fields[0], line)?;
        let mode = fields[1].to_string();
        let data = format!(
            "{} {} {} {} {} {} {}",
            fields[0], fields[2], fields[3], fields[4], fields[5], fields[6], fields[7]
        );
        match series.iter_mut().find(|(m, _)| *m == mode) {
            Some((_, rows)) => rows.push(data),
            None => series.push((mode, vec![data])),
        }
    }
    if series.is_empty() {
        return Err(HcnError::Parse {
            line: 3,
            msg: "no data rows".into(),
        });
    }
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    for (mode, rows) in series {
        let path = outdir.join(format!("{}_{}.dat", kind.figure_label(), mode));
        let mut text = String::new();
        let _ = writeln!(
            text,
            "# {} analog: kind={} series={}",
            kind.figure_label(),
            kind.as_str(),
            mode
        );
        let _ = writeln!(
            text,
            "# grid_value ee_bits_per_joule se_bits_per_hz power_w feasible infeasible iters"
        );
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const W_C: f64 = 15_000.0;

    fn tiny_params() -> ScenarioParams {
        ScenarioParams {
            total_subcarriers: 3,
            num_small_cells: 1,
            macro_ues: 2,
            small_ues: 2,
            delta_macro_bps: 1.5 * W_C,
            delta_small_bps: 0.5 * W_C,
            ..ScenarioParams::default()
        }
    }

    #[test]
    fn config_parses_known_keys() {
        let text = "\n# comment\ntotal_subcarriers = 16\nmacro_pmax_dbm = 46\nseeds = 1,2,3\ngrid = 0.5, 1.5\nmode = both\nsca_tol = 1e-4\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.params.total_subcarriers, 16);
        assert_relative_eq!(cfg.params.macro_pmax_w, 39.8107, max_relative = 1e-4);
        assert_eq!(cfg.seeds, Some(vec![1, 2, 3]));
        assert_eq!(cfg.grid, Some(vec![0.5, 1.5]));
        assert_eq!(cfg.mode, Some(RunMode::Both));
        assert_relative_eq!(cfg.solver.sca_tol, 1e-4);
    }

    #[test]
    fn config_rejects_unknown_key_with_line() {
        let err = parse_config("zeta = 4\nbogus = 1\n").unwrap_err();
        match err {
            HcnError::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn config_rejects_missing_equals() {
        match parse_config("just words").unwrap_err() {
            HcnError::Parse { line: 1, .. } => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn quick_solver() -> SolverConfig {
        SolverConfig {
            max_rotations: 2,
            max_line_search_iters: 5,
            max_alternations: 5,
            ..SolverConfig::default()
        }
    }

    fn quick_spec(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec {
            kind,
            params: tiny_params(),
            seeds: vec![1, 2],
            grid: None,
            mode: RunMode::Both,
            solver: quick_solver(),
            oracle_grid_steps: 8,
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let spec = ExperimentSpec {
            grid: Some(vec![1.0 * W_C, 2.0 * W_C]),
            ..quick_spec(ExperimentKind::EeVsRate)
        };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("# hcnsim-experiment kind=ee_vs_rate\n"));
    }

    #[test]
    fn repeated_seed_rows_average_to_single_seed() {
        let single = ExperimentSpec {
            seeds: vec![5],
            grid: Some(vec![1.0 * W_C]),
            ..quick_spec(ExperimentKind::EeVsRate)
        };
        let repeated = ExperimentSpec {
            seeds: vec![5, 5, 5],
            ..single.clone()
        };
        let a = run_experiment(&single).unwrap();
        let b = run_experiment(&repeated).unwrap();
        let mean = |csv: &str| {
            csv.lines()
                .nth(2)
                .unwrap()
                .split(',')
                .nth(2)
                .unwrap()
                .parse::<f64>()
                .unwrap()
        };
        assert_relative_eq!(mean(&a), mean(&b), max_relative = 1e-12);
    }

    #[test]
    fn feasibility_counts_sum_to_seed_count() {
        let spec = ExperimentSpec {
            grid: Some(vec![1.0 * W_C, 1e12]), // second target hopeless
            ..quick_spec(ExperimentKind::EeVsRate)
        };
        let csv = run_experiment(&spec).unwrap();
        for row in csv.lines().skip(2) {
            let f: Vec<&str> = row.split(',').collect();
            let feasible: u64 = f[5].parse().unwrap();
            let infeasible: u64 = f[6].parse().unwrap();
            assert_eq!(feasible + infeasible, 2);
        }
        let last = csv.lines().last().unwrap();
        assert!(last.contains(",0,2,"), "hopeless row: {last}");
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let params = ScenarioParams {
            total_subcarriers: 8,
            ..tiny_params()
        };
        let sc = generate_scenario(1, &params).unwrap();
        let err = brute_force_oracle(&sc, 8).unwrap_err();
        assert!(err.to_string().contains("too large"));
    }

    #[test]
    fn oracle_single_link_matches_dense_scalar_argmax() {
        let params = ScenarioParams {
            total_subcarriers: 1,
            num_small_cells: 0,
            macro_ues: 1,
            delta_macro_bps: 0.0,
            ..ScenarioParams::default()
        };
        let sc = generate_scenario(3, &params).unwrap();
        let steps = 64;
        let o = brute_force_oracle(&sc, steps).unwrap();
        let g = sc.channel.gain(0, 0, 0, 0) / sc.channel.noise(0, 0, 0);
        let pmax = sc.qos.pmax_w[0];
        let circuit = sc.power_model.static_w[0]
            + sc.power_model.gamma_w_per_hz[0] * sc.spectrum.total_bandwidth_hz();
        let mut best = 0.0f64;
        for i in 0..steps {
            let p = pmax * i as f64 / (steps - 1) as f64;
            let ee = W_C * (1.0 + g * p).log2() / (sc.power_model.zeta[0] * p + circuit);
            best = best.max(ee);
        }
        assert_relative_eq!(o.ee_bits_per_joule, best, max_relative = 1e-9);
    }

    #[test]
    fn oracle_zero_qos_optimum_is_interior() {
        let params = ScenarioParams {
            delta_macro_bps: 0.0,
            delta_small_bps: 0.0,
            ..tiny_params()
        };
        let sc = generate_scenario(4, &params).unwrap();
        let o = brute_force_oracle(&sc, 8).unwrap();
        assert!(o.ee_bits_per_joule > 0.0);
        assert!(o.power.total() > 0.0);
        assert!(o.feasible_points > 0);
        assert!(o.search_space >= o.feasible_points);
    }

    #[test]
    fn oracle_dominates_any_grid_point() {
        // the oracle is only exhaustive over its quantized grid, so the
        // dominance check snaps the algorithm's solution onto that grid
        let cfg = SolverConfig::default();
        let steps = 32usize;
        for seed in [1u64, 2, 3] {
            let sc = generate_scenario(seed, &tiny_params()).unwrap();
            let algo = match underlay::maximize_ee_underlay(&sc, &cfg) {
                Ok(r) => r,
                Err(HcnError::Infeasible { .. }) => continue,
                Err(e) => panic!("{e:?}"),
            };
            let o = brute_force_oracle(&sc, steps).unwrap();
            let mut snapped = algo.power.clone();
            for l in 0..sc.num_cells() {
                let step = sc.qos.pmax_w[l] / (steps - 1) as f64;
                for p in &mut snapped.p[l] {
                    *p = (*p / step).round() * step;
                }
            }
            if snapped.validate(&sc, 1e-9).is_err() {
                continue;
            }
            let assignment = underlay::assign_max_sinr(&sc, &snapped);
            let snapped_metrics =
                model::evaluate(&sc, &assignment, &snapped, Mode::Underlay, 1.0).unwrap();
            let feasible = (0..sc.num_cells()).all(|l| {
                snapped_metrics.per_cell_rate_bps[l] >= sc.qos.delta(l) * (1.0 - 1e-12)
            });
            if !feasible {
                continue;
            }
            assert!(
                o.ee_bits_per_joule >= snapped_metrics.ee_bits_per_joule - 1e-9,
                "seed {seed}: oracle {} vs snapped algorithm point {}",
                o.ee_bits_per_joule,
                snapped_metrics.ee_bits_per_joule
            );
        }
    }

    #[test]
    fn plotdata_splits_series_and_names_figure() {
        let spec = ExperimentSpec {
            grid: Some(vec![0.0, 10.0]),
            seeds: vec![1],
            ..quick_spec(ExperimentKind::CnrSweep)
        };
        let csv = run_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plotdata(&csv, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"fig4_underlay.dat".to_string()));
        assert!(names.contains(&"fig4_overlay.dat".to_string()));
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("# fig4 analog:"));
        assert_eq!(text.lines().count(), 2 + 2);
    }

    #[test]
    fn plotdata_rejects_empty_and_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_plotdata("", dir.path()),
            Err(HcnError::Parse { line: 1, .. })
        ));
        let headers_only =
            "# hcnsim-experiment kind=cnr_sweep\ngrid_value,mode,mean_ee_bits_per_joule,mean_se_bits_per_hz,mean_power_w,feasible_count,infeasible_count,iters_mean\n";
        assert!(matches!(
            emit_plotdata(headers_only, dir.path()),
            Err(HcnError::Parse { line: 3, .. })
        ));
        let bad_row = format!("{headers_only}1.0,underlay,oops\n");
        assert!(matches!(
            emit_plotdata(&bad_row, dir.path()),
            Err(HcnError::Parse { line: 3, .. })
        ));
        assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn convergence_rows_are_monotone() {
        let spec = ExperimentSpec {
            grid: Some((0..=6).map(|i| i as f64).collect()),
            ..quick_spec(ExperimentKind::Convergence)
        };
        let csv = run_experiment(&spec).unwrap();
        let ees: Vec<f64> = csv
            .lines()
            .skip(2)
            .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        for w in ees.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }
}
