//! Problem instance and evaluation formulas.
//!
//! A [`Scenario`] bundles the spectrum grid, node topology, channel
//! realization, power model and QoS targets. All types are immutable
//! after construction and every operation here is a pure function, so a
//! scenario can be shared freely across parallel workers.

use crate::{HcnError, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Transmission strategy selector: whether cross-cell interference terms
/// are summed into the SINR denominator (underlay) or dropped (overlay,
/// where bands are exclusive and residual interference is treated as
/// absent).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Underlay,
    Overlay,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Underlay => "underlay",
            Mode::Overlay => "overlay",
        }
    }
}

/// Frequency grid: `N_tot` subcarriers of `W_C` hertz each.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub subcarrier_bandwidth_hz: f64,
    pub total_subcarriers: usize,
}

impl SpectrumSpec {
    pub fn new(subcarrier_bandwidth_hz: f64, total_subcarriers: usize) -> Result<Self> {
        if !(subcarrier_bandwidth_hz > 0.0) {
            return Err(HcnError::invalid("subcarrier bandwidth must be > 0"));
        }
        if total_subcarriers == 0 {
            return Err(HcnError::invalid("need at least one subcarrier"));
        }
        Ok(Self {
            subcarrier_bandwidth_hz,
            total_subcarriers,
        })
    }

    /// Total bandwidth `W_tot = W_C * N_tot`.
    pub fn total_bandwidth_hz(&self) -> f64 {
        self.subcarrier_bandwidth_hz * self.total_subcarriers as f64
    }
}

/// Node placement. Cell 0 is the macro-cell; cells `1..=L` are small-cells.
/// UE-to-cell association is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Per-cell base-station position in meters.
    pub bs_pos: Vec<[f64; 2]>,
    /// Per cell, the positions of its UEs.
    pub ue_pos: Vec<Vec<[f64; 2]>>,
    pub macro_radius_m: f64,
    pub small_radius_m: f64,
}

impl Topology {
    /// Number of cells `L + 1` (macro included).
    pub fn num_cells(&self) -> usize {
        self.bs_pos.len()
    }

    pub fn num_small_cells(&self) -> usize {
        self.num_cells() - 1
    }

    pub fn ue_count(&self, cell: usize) -> usize {
        self.ue_pos[cell].len()
    }
}

/// Linear channel power gains and per-link noise powers.
///
/// Gains are stored row-major over `(l, k, m, n)`: receiving cell, UE
/// index within that cell, transmitting cell, subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_cells: usize,
    num_subcarriers: usize,
    ue_counts: Vec<usize>,
    ue_offsets: Vec<usize>,
    gains: Vec<f64>,
    noise: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(
        num_cells: usize,
        num_subcarriers: usize,
        ue_counts: Vec<usize>,
        gains: Vec<f64>,
        noise: Vec<f64>,
    ) -> Result<Self> {
        let total_ues: usize = ue_counts.iter().sum();
        if gains.len() != total_ues * num_cells * num_subcarriers {
            return Err(HcnError::invalid(format!(
                "gain tensor has {} entries, expected {}",
                gains.len(),
                total_ues * num_cells * num_subcarriers
            )));
        }
        if noise.len() != total_ues * num_subcarriers {
            return Err(HcnError::invalid("noise tensor dimension mismatch"));
        }
        if gains.iter().any(|g| !(*g >= 0.0)) {
            return Err(HcnError::invalid("channel gains must be >= 0"));
        }
        if noise.iter().any(|s| !(*s > 0.0)) {
            return Err(HcnError::invalid("noise powers must be > 0"));
        }
        let mut ue_offsets = Vec::with_capacity(ue_counts.len());
        let mut acc = 0;
        for &k in &ue_counts {
            ue_offsets.push(acc);
            acc += k;
        }
        Ok(Self {
            num_cells,
            num_subcarriers,
            ue_counts,
            ue_offsets,
            gains,
            noise,
        })
    }

    #[inline]
    fn ue_slot(&self, k: usize, l: usize) -> usize {
        self.ue_offsets[l] + k
    }

    /// Linear power gain from the cell-`m` BS to UE `(k, l)` on subcarrier `n`.
    #[inline]
    pub fn gain(&self, k: usize, l: usize, m: usize, n: usize) -> f64 {
        let slot = self.ue_slot(k, l);
        self.gains[(slot * self.num_cells + m) * self.num_subcarriers + n]
    }

    /// Noise power at UE `(k, l)` on subcarrier `n`, in watts.
    #[inline]
    pub fn noise(&self, k: usize, l: usize, n: usize) -> f64 {
        self.noise[self.ue_slot(k, l) * self.num_subcarriers + n]
    }

    pub fn ue_counts(&self) -> &[usize] {
        &self.ue_counts
    }

    pub fn raw_gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn raw_noise(&self) -> &[f64] {
        &self.noise
    }

    /// Same channel with every noise power multiplied by `factor`.
    pub fn with_noise_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.noise {
            *s *= factor;
        }
        out
    }
}

/// Linear BS power model `P = zeta * P_T + P_s + gamma * W_used`, per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    /// Reciprocal of power-amplifier drain efficiency, per cell (>= 1).
    pub zeta: Vec<f64>,
    /// Static circuit power in watts, per cell.
    pub static_w: Vec<f64>,
    /// Dynamic circuit power per hertz of utilized bandwidth, per cell.
    pub gamma_w_per_hz: Vec<f64>,
}

impl PowerModel {
    pub fn validate(&self, num_cells: usize) -> Result<()> {
        if self.zeta.len() != num_cells
            || self.static_w.len() != num_cells
            || self.gamma_w_per_hz.len() != num_cells
        {
            return Err(HcnError::invalid("power model dimension mismatch"));
        }
        if self.zeta.iter().any(|z| !(*z >= 1.0)) {
            return Err(HcnError::invalid("zeta must be >= 1"));
        }
        if self.static_w.iter().any(|p| !(*p >= 0.0))
            || self.gamma_w_per_hz.iter().any(|g| !(*g >= 0.0))
        {
            return Err(HcnError::invalid("circuit power terms must be >= 0"));
        }
        Ok(())
    }
}

/// Minimum-throughput targets and per-cell power budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct QosSpec {
    pub delta_macro_bps: f64,
    pub delta_small_bps: f64,
    pub pmax_w: Vec<f64>,
}

impl QosSpec {
    /// Rate floor of cell `l`.
    pub fn delta(&self, cell: usize) -> f64 {
        if cell == 0 {
            self.delta_macro_bps
        } else {
            self.delta_small_bps
        }
    }

    pub fn validate(&self, num_cells: usize) -> Result<()> {
        if self.pmax_w.len() != num_cells {
            return Err(HcnError::invalid("pmax dimension mismatch"));
        }
        if self.pmax_w.iter().any(|p| !(*p > 0.0)) {
            return Err(HcnError::invalid("power budgets must be > 0"));
        }
        if !(self.delta_macro_bps >= 0.0) || !(self.delta_small_bps >= 0.0) {
            return Err(HcnError::invalid("rate floors must be >= 0"));
        }
        Ok(())
    }
}

/// Immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spectrum: SpectrumSpec,
    pub topology: Topology,
    pub channel: ChannelRealization,
    pub power_model: PowerModel,
    pub qos: QosSpec,
    /// Reference total power used to normalize power utilization in the
    /// resource-efficiency metric.
    pub p_tot_w: f64,
}

impl Scenario {
    pub fn num_cells(&self) -> usize {
        self.topology.num_cells()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.spectrum.total_subcarriers
    }

    pub fn ue_count(&self, cell: usize) -> usize {
        self.topology.ue_count(cell)
    }

    /// Default resource-efficiency power normalizer:
    /// `sum_l zeta_l * Pmax_l + sum_l Ps_l + gamma_0 * W_tot`.
    pub fn default_p_tot(
        power_model: &PowerModel,
        qos: &QosSpec,
        spectrum: &SpectrumSpec,
    ) -> f64 {
        let amp: f64 = power_model
            .zeta
            .iter()
            .zip(&qos.pmax_w)
            .map(|(z, p)| z * p)
            .sum();
        let stat: f64 = power_model.static_w.iter().sum();
        amp + stat + power_model.gamma_w_per_hz[0] * spectrum.total_bandwidth_hz()
    }

    fn check_link(&self, k: usize, l: usize, n: usize) -> Result<()> {
        if l >= self.num_cells() {
            return Err(HcnError::invalid(format!("cell index {l} out of range")));
        }
        if k >= self.ue_count(l) {
            return Err(HcnError::invalid(format!(
                "UE index {k} out of range for cell {l}"
            )));
        }
        if n >= self.num_subcarriers() {
            return Err(HcnError::invalid(format!(
                "subcarrier index {n} out of range"
            )));
        }
        Ok(())
    }
}

/// Exclusive subcarrier-to-UE mapping per cell. `None` means the
/// subcarrier is not used by that cell (overlay only; underlay assigns
/// every subcarrier in every cell).
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    cells: Vec<Vec<Option<usize>>>,
}

impl Assignment {
    /// All subcarriers unassigned in every cell.
    pub fn empty(num_cells: usize, num_subcarriers: usize) -> Self {
        Self {
            cells: vec![vec![None; num_subcarriers]; num_cells],
        }
    }

    pub fn set(&mut self, cell: usize, subcarrier: usize, ue: Option<usize>) {
        self.cells[cell][subcarrier] = ue;
    }

    #[inline]
    pub fn ue_of(&self, cell: usize, subcarrier: usize) -> Option<usize> {
        self.cells[cell][subcarrier]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.cells[0].len()
    }

    /// Count of subcarriers the cell actually uses.
    pub fn assigned_count(&self, cell: usize) -> usize {
        self.cells[cell].iter().filter(|u| u.is_some()).count()
    }

    /// Subcarriers assigned to UE `k` in `cell`.
    pub fn subcarriers_of(&self, cell: usize, ue: usize) -> Vec<usize> {
        self.cells[cell]
            .iter()
            .enumerate()
            .filter_map(|(n, u)| (*u == Some(ue)).then_some(n))
            .collect()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.cells.len() != scenario.num_cells() {
            return Err(HcnError::invalid("assignment cell count mismatch"));
        }
        for (l, row) in self.cells.iter().enumerate() {
            if row.len() != scenario.num_subcarriers() {
                return Err(HcnError::invalid("assignment subcarrier count mismatch"));
            }
            for u in row.iter().flatten() {
                if *u >= scenario.ue_count(l) {
                    return Err(HcnError::invalid(format!(
                        "assignment names UE {u} in cell {l} which has {} UEs",
                        scenario.ue_count(l)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-cell, per-subcarrier transmit powers in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAlloc {
    pub p: Vec<Vec<f64>>,
}

impl PowerAlloc {
    pub fn zeros(num_cells: usize, num_subcarriers: usize) -> Self {
        Self {
            p: vec![vec![0.0; num_subcarriers]; num_cells],
        }
    }

    pub fn uniform(scenario: &Scenario) -> Self {
        let n = scenario.num_subcarriers();
        Self {
            p: scenario
                .qos
                .pmax_w
                .iter()
                .map(|pm| vec![pm / n as f64; n])
                .collect(),
        }
    }

    /// Total transmit power of cell `l`.
    pub fn cell_total(&self, cell: usize) -> f64 {
        self.p[cell].iter().sum()
    }

    /// Total transmit power over all cells.
    pub fn total(&self) -> f64 {
        self.p.iter().map(|row| row.iter().sum::<f64>()).sum()
    }

    pub fn validate(&self, scenario: &Scenario, tol: f64) -> Result<()> {
        if self.p.len() != scenario.num_cells() {
            return Err(HcnError::invalid("power alloc cell count mismatch"));
        }
        for (l, row) in self.p.iter().enumerate() {
            if row.len() != scenario.num_subcarriers() {
                return Err(HcnError::invalid("power alloc subcarrier count mismatch"));
            }
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(HcnError::invalid(format!(
                    "negative transmit power in cell {l}"
                )));
            }
            let budget = scenario.qos.pmax_w[l];
            if self.cell_total(l) > budget * (1.0 + tol) {
                return Err(HcnError::invalid(format!(
                    "cell {l} exceeds its power budget"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluation of an (assignment, power) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub per_cell_rate_bps: Vec<f64>,
    pub total_rate_bps: f64,
    pub per_cell_tx_w: Vec<f64>,
    pub total_power_w: f64,
    /// Energy efficiency `C / P` in bits per joule.
    pub ee_bits_per_joule: f64,
    /// Spectral efficiency over the utilized bandwidth.
    pub se_bits_per_hz: f64,
    /// Weighted EE–SE resource efficiency at the recorded `alpha`.
    pub re_bits_per_joule: f64,
    pub eta_p: f64,
    pub eta_w: f64,
    pub alpha: f64,
    /// Normalizer `tau = W_tot / P_tot`.
    pub tau_hz_per_w: f64,
    pub p_tot_w: f64,
}

/// SINR of UE `(k, l)` on subcarrier `n` under the given powers.
pub fn sinr(
    scenario: &Scenario,
    power: &PowerAlloc,
    k: usize,
    l: usize,
    n: usize,
    mode: Mode,
) -> Result<f64> {
    scenario.check_link(k, l, n)?;
    let ch = &scenario.channel;
    let signal = ch.gain(k, l, l, n) * power.p[l][n];
    let denom = match mode {
        Mode::Underlay => {
            let mut interference = 0.0;
            for m in 0..scenario.num_cells() {
                if m != l {
                    interference += ch.gain(k, l, m, n) * power.p[m][n];
                }
            }
            interference + ch.noise(k, l, n)
        }
        Mode::Overlay => ch.noise(k, l, n),
    };
    Ok(signal / denom)
}

/// Shannon link rate `W_C * log2(1 + sinr)` in bits/s.
pub fn link_rate(scenario: &Scenario, sinr_value: f64) -> Result<f64> {
    if !(sinr_value >= 0.0) {
        return Err(HcnError::invalid("SINR must be >= 0"));
    }
    Ok(scenario.spectrum.subcarrier_bandwidth_hz * (1.0 + sinr_value).log2())
}

/// Throughput of cell `l`, summing only assigned links.
pub fn cell_rate(
    scenario: &Scenario,
    assignment: &Assignment,
    power: &PowerAlloc,
    l: usize,
    mode: Mode,
) -> Result<f64> {
    let mut rate = 0.0;
    for n in 0..scenario.num_subcarriers() {
        if let Some(k) = assignment.ue_of(l, n) {
            rate += link_rate(scenario, sinr(scenario, power, k, l, n, mode)?)?;
        }
    }
    Ok(rate)
}

/// Utilized bandwidth of cell `l`: the whole band under underlay (global
/// frequency reuse), the assigned subcarriers only under overlay.
pub fn utilized_bandwidth_hz(scenario: &Scenario, assignment: &Assignment, l: usize, mode: Mode) -> f64 {
    match mode {
        Mode::Underlay => scenario.spectrum.total_bandwidth_hz(),
        Mode::Overlay => {
            scenario.spectrum.subcarrier_bandwidth_hz * assignment.assigned_count(l) as f64
        }
    }
}

/// Full metric evaluation for an (assignment, power) pair.
///
/// `alpha` weights the resource-efficiency metric: `alpha = 1` is pure EE,
/// `alpha = 0` is pure normalized SE.
pub fn evaluate(
    scenario: &Scenario,
    assignment: &Assignment,
    power: &PowerAlloc,
    mode: Mode,
    alpha: f64,
) -> Result<Metrics> {
    assignment.validate(scenario)?;
    if power.p.len() != scenario.num_cells()
        || power.p.iter().any(|r| r.len() != scenario.num_subcarriers())
    {
        return Err(HcnError::invalid("power alloc dimension mismatch"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HcnError::invalid("alpha must be in [0, 1]"));
    }
    let num_cells = scenario.num_cells();
    let w_tot = scenario.spectrum.total_bandwidth_hz();
    let w_c = scenario.spectrum.subcarrier_bandwidth_hz;

    let mut per_cell_rate = Vec::with_capacity(num_cells);
    let mut per_cell_tx = Vec::with_capacity(num_cells);
    let mut total_power = 0.0;
    for l in 0..num_cells {
        per_cell_rate.push(cell_rate(scenario, assignment, power, l, mode)?);
        let tx = power.cell_total(l);
        per_cell_tx.push(tx);
        let w_used = utilized_bandwidth_hz(scenario, assignment, l, mode);
        total_power += scenario.power_model.zeta[l] * tx
            + scenario.power_model.static_w[l]
            + scenario.power_model.gamma_w_per_hz[l] * w_used;
    }
    let total_rate: f64 = per_cell_rate.iter().sum();

    // Band actually occupied by at least one cell: the whole band under
    // underlay, the union of per-cell assignments under overlay.
    let occupied = match mode {
        Mode::Underlay => w_tot,
        Mode::Overlay => {
            let used = (0..scenario.num_subcarriers())
                .filter(|&n| (0..num_cells).any(|l| assignment.ue_of(l, n).is_some()))
                .count();
            w_c * used.max(1) as f64
        }
    };
    let eta_w = occupied / w_tot;
    let eta_p = total_power / scenario.p_tot_w;
    let ee = total_rate / total_power;
    let se = total_rate / occupied;
    let re = ee * (alpha + (1.0 - alpha) * eta_p / eta_w);

    Ok(Metrics {
        per_cell_rate_bps: per_cell_rate,
        total_rate_bps: total_rate,
        per_cell_tx_w: per_cell_tx,
        total_power_w: total_power,
        ee_bits_per_joule: ee,
        se_bits_per_hz: se,
        re_bits_per_joule: re,
        eta_p,
        eta_w,
        alpha,
        tau_hz_per_w: w_tot / scenario.p_tot_w,
        p_tot_w: scenario.p_tot_w,
    })
}

/// Converts a dBm value to watts.
pub fn dbm_to_watts(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

/// Parameters for random scenario generation.
#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub subcarrier_bandwidth_hz: f64,
    pub total_subcarriers: usize,
    pub num_small_cells: usize,
    pub macro_ues: usize,
    pub small_ues: usize,
    pub macro_radius_m: f64,
    pub small_radius_m: f64,
    pub macro_pmax_w: f64,
    pub small_pmax_w: f64,
    pub delta_macro_bps: f64,
    pub delta_small_bps: f64,
    /// Noise spectral density in W/Hz.
    pub noise_w_per_hz: f64,
    pub zeta: f64,
    pub ps_macro_w: f64,
    pub ps_small_w: f64,
    pub gamma_w_per_hz: f64,
    /// Optional override of the RE power normalizer.
    pub p_tot_w: Option<f64>,
}

impl Default for ScenarioParams {
    /// Desk-scale defaults: the per-item radio parameters follow the
    /// reference configuration (15 kHz subcarriers, 46/30 dBm budgets,
    /// 250 m / 50 m radii); cell counts, subcarrier count and rate floors
    /// are scaled down for fast runs.
    fn default() -> Self {
        Self {
            subcarrier_bandwidth_hz: 15_000.0,
            total_subcarriers: 64,
            num_small_cells: 3,
            macro_ues: 4,
            small_ues: 2,
            macro_radius_m: 250.0,
            small_radius_m: 50.0,
            macro_pmax_w: dbm_to_watts(46.0),
            small_pmax_w: dbm_to_watts(30.0),
            delta_macro_bps: 2.0e6,
            delta_small_bps: 1.0e6,
            noise_w_per_hz: dbm_to_watts(-174.0),
            zeta: 4.0,
            ps_macro_w: 10.0,
            ps_small_w: 1.0,
            gamma_w_per_hz: 1.0e-6,
            p_tot_w: None,
        }
    }
}

/// Macro-BS-to-UE path loss in dB at distance `d_m` meters.
pub fn macro_path_loss_db(d_m: f64) -> f64 {
    let d_km = (d_m.max(1.0)) / 1000.0;
    128.1 + 37.6 * d_km.log10()
}

/// Small-BS-to-UE path loss in dB at distance `d_m` meters.
pub fn small_path_loss_db(d_m: f64) -> f64 {
    let d_km = (d_m.max(1.0)) / 1000.0;
    140.7 + 36.7 * d_km.log10()
}

/// FNV-1a over the seed and a purpose tag, so adding a new draw stream
/// never perturbs existing ones.
pub fn stream_seed(seed: u64, purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(purpose.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn uniform_in_disc(rng: &mut ChaCha12Rng, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Draws a random scenario: BS and UE positions uniform in their discs,
/// distance-law path loss with i.i.d. unit-mean exponential (Rayleigh
/// power) fading per link and subcarrier. Deterministic for a fixed seed.
pub fn generate_scenario(seed: u64, params: &ScenarioParams) -> Result<Scenario> {
    if params.macro_radius_m <= 0.0 || params.small_radius_m <= 0.0 {
        return Err(HcnError::invalid("cell radii must be > 0"));
    }
    if params.macro_ues == 0 || params.small_ues == 0 && params.num_small_cells > 0 {
        return Err(HcnError::invalid("UE counts must be > 0"));
    }
    let spectrum = SpectrumSpec::new(params.subcarrier_bandwidth_hz, params.total_subcarriers)?;
    let num_cells = params.num_small_cells + 1;
    let n_sub = params.total_subcarriers;

    let mut pos_rng = ChaCha12Rng::seed_from_u64(stream_seed(seed, "positions"));
    let mut bs_pos = vec![[0.0, 0.0]];
    for _ in 0..params.num_small_cells {
        bs_pos.push(uniform_in_disc(&mut pos_rng, [0.0, 0.0], params.macro_radius_m));
    }
    let mut ue_pos = Vec::with_capacity(num_cells);
    for (l, bs) in bs_pos.iter().enumerate() {
        let (count, radius) = if l == 0 {
            (params.macro_ues, params.macro_radius_m)
        } else {
            (params.small_ues, params.small_radius_m)
        };
        ue_pos.push(
            (0..count)
                .map(|_| uniform_in_disc(&mut pos_rng, *bs, radius))
                .collect(),
        );
    }
    let topology = Topology {
        bs_pos,
        ue_pos,
        macro_radius_m: params.macro_radius_m,
        small_radius_m: params.small_radius_m,
    };

    let ue_counts: Vec<usize> = (0..num_cells).map(|l| topology.ue_count(l)).collect();
    let total_ues: usize = ue_counts.iter().sum();
    let mut fade_rng = ChaCha12Rng::seed_from_u64(stream_seed(seed, "fading"));
    let mut gains = Vec::with_capacity(total_ues * num_cells * n_sub);
    for l in 0..num_cells {
        for k in 0..ue_counts[l] {
            let ue = topology.ue_pos[l][k];
            for m in 0..num_cells {
                let bs = topology.bs_pos[m];
                let d = ((ue[0] - bs[0]).powi(2) + (ue[1] - bs[1]).powi(2)).sqrt();
                let pl_db = if m == 0 {
                    macro_path_loss_db(d)
                } else {
                    small_path_loss_db(d)
                };
                let base = 10f64.powf(-pl_db / 10.0);
                for _ in 0..n_sub {
                    // unit-mean exponential fade |f|^2 = -ln(U)
                    let fade = -(1.0 - fade_rng.gen::<f64>()).ln();
                    gains.push(base * fade);
                }
            }
        }
    }
    let sigma = params.noise_w_per_hz * params.subcarrier_bandwidth_hz;
    let noise = vec![sigma; total_ues * n_sub];
    let channel = ChannelRealization::new(num_cells, n_sub, ue_counts, gains, noise)?;

    let mut zeta = vec![params.zeta; num_cells];
    zeta[0] = params.zeta;
    let mut static_w = vec![params.ps_small_w; num_cells];
    static_w[0] = params.ps_macro_w;
    let power_model = PowerModel {
        zeta,
        static_w,
        gamma_w_per_hz: vec![params.gamma_w_per_hz; num_cells],
    };
    let mut pmax_w = vec![params.small_pmax_w; num_cells];
    pmax_w[0] = params.macro_pmax_w;
    let qos = QosSpec {
        delta_macro_bps: params.delta_macro_bps,
        delta_small_bps: params.delta_small_bps,
        pmax_w,
    };
    power_model.validate(num_cells)?;
    qos.validate(num_cells)?;
    let p_tot_w = params
        .p_tot_w
        .unwrap_or_else(|| Scenario::default_p_tot(&power_model, &qos, &spectrum));

    Ok(Scenario {
        spectrum,
        topology,
        channel,
        power_model,
        qos,
        p_tot_w,
    })
}

// ---------------------------------------------------------------------------
// Scenario text format (`hcnsim-scenario v1`)
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

fn fmt_f64_list(vs: &[f64]) -> String {
    vs.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

impl Scenario {
    /// Serializes to the versioned flat key-value text format. Gains and
    /// noise are written as decimal floats in row-major `(l, k, m, n)`
    /// order with enough digits for exact round-tripping.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("hcnsim-scenario v1\n");
        s.push_str(&format!(
            "subcarrier_bandwidth_hz = {}\n",
            fmt_f64(self.spectrum.subcarrier_bandwidth_hz)
        ));
        s.push_str(&format!(
            "num_subcarriers = {}\n",
            self.spectrum.total_subcarriers
        ));
        s.push_str(&format!("num_cells = {}\n", self.num_cells()));
        s.push_str(&format!(
            "ue_counts = {}\n",
            self.channel
                .ue_counts()
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!(
            "macro_radius_m = {}\n",
            fmt_f64(self.topology.macro_radius_m)
        ));
        s.push_str(&format!(
            "small_radius_m = {}\n",
            fmt_f64(self.topology.small_radius_m)
        ));
        let bs: Vec<f64> = self.topology.bs_pos.iter().flatten().copied().collect();
        s.push_str(&format!("bs_pos = {}\n", fmt_f64_list(&bs)));
        let ue: Vec<f64> = self
            .topology
            .ue_pos
            .iter()
            .flatten()
            .flatten()
            .copied()
            .collect();
        s.push_str(&format!("ue_pos = {}\n", fmt_f64_list(&ue)));
        s.push_str(&format!("zeta = {}\n", fmt_f64_list(&self.power_model.zeta)));
        s.push_str(&format!(
            "static_w = {}\n",
            fmt_f64_list(&self.power_model.static_w)
        ));
        s.push_str(&format!(
            "gamma_w_per_hz = {}\n",
            fmt_f64_list(&self.power_model.gamma_w_per_hz)
        ));
        s.push_str(&format!(
            "delta_macro_bps = {}\n",
            fmt_f64(self.qos.delta_macro_bps)
        ));
        s.push_str(&format!(
            "delta_small_bps = {}\n",
            fmt_f64(self.qos.delta_small_bps)
        ));
        s.push_str(&format!("pmax_w = {}\n", fmt_f64_list(&self.qos.pmax_w)));
        s.push_str(&format!("p_tot_w = {}\n", fmt_f64(self.p_tot_w)));
        s.push_str(&format!("gains = {}\n", fmt_f64_list(self.channel.raw_gains())));
        s.push_str(&format!("noise = {}\n", fmt_f64_list(self.channel.raw_noise())));
        s
    }

    /// Parses the `hcnsim-scenario v1` text format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| HcnError::Parse {
                line: 1,
                msg: "empty input".into(),
            })?;
        if header.trim() != "hcnsim-scenario v1" {
            return Err(HcnError::Parse {
                line: 1,
                msg: format!("unrecognized header {header:?}"),
            });
        }
        let mut kv = std::collections::HashMap::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HcnError::Parse {
                line: idx + 1,
                msg: "expected `key = value`".into(),
            })?;
            kv.insert(key.trim().to_string(), (idx + 1, value.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, String)> {
            kv.get(key).cloned().ok_or_else(|| HcnError::Parse {
                line: 0,
                msg: format!("missing key {key}"),
            })
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            let (line, v) = get(key)?;
            v.parse::<f64>().map_err(|e| HcnError::Parse {
                line,
                msg: format!("{key}: {e}"),
            })
        };
        let parse_usize = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            v.parse::<usize>().map_err(|e| HcnError::Parse {
                line,
                msg: format!("{key}: {e}"),
            })
        };
        let parse_f64_list = |key: &str| -> Result<Vec<f64>> {
            let (line, v) = get(key)?;
            v.split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|e| HcnError::Parse {
                        line,
                        msg: format!("{key}: {e}"),
                    })
                })
                .collect()
        };

        let spectrum = SpectrumSpec::new(
            parse_f64("subcarrier_bandwidth_hz")?,
            parse_usize("num_subcarriers")?,
        )?;
        let num_cells = parse_usize("num_cells")?;
        let (uc_line, uc_raw) = get("ue_counts")?;
        let ue_counts: Vec<usize> = uc_raw
            .split(',')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|e| HcnError::Parse {
                    line: uc_line,
                    msg: format!("ue_counts: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if ue_counts.len() != num_cells {
            return Err(HcnError::Parse {
                line: uc_line,
                msg: "ue_counts length != num_cells".into(),
            });
        }

        let bs_flat = parse_f64_list("bs_pos")?;
        if bs_flat.len() != 2 * num_cells {
            return Err(HcnError::Parse {
                line: 0,
                msg: "bs_pos length mismatch".into(),
            });
        }
        let bs_pos: Vec<[f64; 2]> = bs_flat.chunks(2).map(|c| [c[0], c[1]]).collect();
        let ue_flat = parse_f64_list("ue_pos")?;
        let total_ues: usize = ue_counts.iter().sum();
        if ue_flat.len() != 2 * total_ues {
            return Err(HcnError::Parse {
                line: 0,
                msg: "ue_pos length mismatch".into(),
            });
        }
        let mut ue_pos = Vec::with_capacity(num_cells);
        let mut cursor = 0;
        for &count in &ue_counts {
            ue_pos.push(
                (0..count)
                    .map(|i| [ue_flat[2 * (cursor + i)], ue_flat[2 * (cursor + i) + 1]])
                    .collect::<Vec<_>>(),
            );
            cursor += count;
        }
        let topology = Topology {
            bs_pos,
            ue_pos,
            macro_radius_m: parse_f64("macro_radius_m")?,
            small_radius_m: parse_f64("small_radius_m")?,
        };

        let power_model = PowerModel {
            zeta: parse_f64_list("zeta")?,
            static_w: parse_f64_list("static_w")?,
            gamma_w_per_hz: parse_f64_list("gamma_w_per_hz")?,
        };
        power_model.validate(num_cells)?;
        let qos = QosSpec {
            delta_macro_bps: parse_f64("delta_macro_bps")?,
            delta_small_bps: parse_f64("delta_small_bps")?,
            pmax_w: parse_f64_list("pmax_w")?,
        };
        qos.validate(num_cells)?;
        let channel = ChannelRealization::new(
            num_cells,
            spectrum.total_subcarriers,
            ue_counts,
            parse_f64_list("gains")?,
            parse_f64_list("noise")?,
        )?;
        Ok(Scenario {
            spectrum,
            topology,
            channel,
            power_model,
            qos,
            p_tot_w: parse_f64("p_tot_w")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Hand-built two-cell scenario with explicit gains for formula checks.
    pub(crate) fn tiny_scenario() -> Scenario {
        // cell 0: one UE, cell 1: one UE, one subcarrier
        let spectrum = SpectrumSpec::new(15_000.0, 1).unwrap();
        let topology = Topology {
            bs_pos: vec![[0.0, 0.0], [100.0, 0.0]],
            ue_pos: vec![vec![[10.0, 0.0]], vec![[110.0, 0.0]]],
            macro_radius_m: 250.0,
            small_radius_m: 50.0,
        };
        // gains[(l,k,m,n)]: own gains 2.0 and 2.0, cross gains 1.0
        let gains = vec![2.0, 1.0, 1.0, 2.0];
        let noise = vec![1.0, 1.0];
        let channel = ChannelRealization::new(2, 1, vec![1, 1], gains, noise).unwrap();
        let power_model = PowerModel {
            zeta: vec![4.0, 4.0],
            static_w: vec![1.0, 1.0],
            gamma_w_per_hz: vec![1.0e-6, 1.0e-6],
        };
        let qos = QosSpec {
            delta_macro_bps: 0.0,
            delta_small_bps: 0.0,
            pmax_w: vec![10.0, 10.0],
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

    #[test]
    fn sinr_underlay_matches_direct_substitution() {
        let sc = tiny_scenario();
        let mut power = PowerAlloc::zeros(2, 1);
        power.p[0][0] = 3.0;
        power.p[1][0] = 1.0;
        // h_own=2, p_own=3, interferer h=1, p=1, sigma=1 -> 6/2 = 3
        let v = sinr(&sc, &power, 0, 0, 0, Mode::Underlay).unwrap();
        assert_relative_eq!(v, 3.0);
    }

    #[test]
    fn sinr_zero_power_is_zero() {
        let sc = tiny_scenario();
        let power = PowerAlloc::zeros(2, 1);
        assert_eq!(sinr(&sc, &power, 0, 0, 0, Mode::Underlay).unwrap(), 0.0);
    }

    #[test]
    fn sinr_overlay_drops_interference() {
        let sc = tiny_scenario();
        let mut power = PowerAlloc::zeros(2, 1);
        power.p[0][0] = 3.0;
        power.p[1][0] = 1.0;
        let v = sinr(&sc, &power, 0, 0, 0, Mode::Overlay).unwrap();
        assert_relative_eq!(v, 6.0);
    }

    #[test]
    fn sinr_rejects_bad_indices() {
        let sc = tiny_scenario();
        let power = PowerAlloc::zeros(2, 1);
        assert!(sinr(&sc, &power, 5, 0, 0, Mode::Underlay).is_err());
        assert!(sinr(&sc, &power, 0, 7, 0, Mode::Underlay).is_err());
        assert!(sinr(&sc, &power, 0, 0, 3, Mode::Underlay).is_err());
    }

    #[test]
    fn link_rate_known_values() {
        let sc = tiny_scenario();
        assert_relative_eq!(link_rate(&sc, 3.0).unwrap(), 30_000.0);
        assert_eq!(link_rate(&sc, 0.0).unwrap(), 0.0);
        assert!(link_rate(&sc, -0.5).is_err());
    }

    #[test]
    fn link_rate_concave_increasing() {
        let sc = tiny_scenario();
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| link_rate(&sc, *x).unwrap()).collect();
        for w in ys.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in ys.windows(3) {
            assert!(w[2] - w[1] <= w[1] - w[0] + 1e-9);
        }
    }

    #[test]
    fn evaluate_power_ledger() {
        let sc = tiny_scenario();
        let mut assignment = Assignment::empty(2, 1);
        assignment.set(0, 0, Some(0));
        assignment.set(1, 0, Some(0));
        let mut power = PowerAlloc::zeros(2, 1);
        power.p[0][0] = 2.0;
        let m = evaluate(&sc, &assignment, &power, Mode::Underlay, 1.0).unwrap();
        // zeta=4, P_T=2, P_s=1 each, gamma*W = 1e-6*15000 = 0.015 each
        let expect = 4.0 * 2.0 + 1.0 + 0.015 + (1.0 + 0.015);
        assert_relative_eq!(m.total_power_w, expect, max_relative = 1e-12);
        assert_relative_eq!(
            m.ee_bits_per_joule,
            m.total_rate_bps / m.total_power_w,
            max_relative = 1e-12
        );
    }

    #[test]
    fn evaluate_alpha_one_is_pure_ee() {
        let sc = tiny_scenario();
        let mut assignment = Assignment::empty(2, 1);
        assignment.set(0, 0, Some(0));
        let mut power = PowerAlloc::zeros(2, 1);
        power.p[0][0] = 1.0;
        let m = evaluate(&sc, &assignment, &power, Mode::Overlay, 1.0).unwrap();
        assert_relative_eq!(m.re_bits_per_joule, m.ee_bits_per_joule);
    }

    #[test]
    fn evaluate_is_pure() {
        let sc = tiny_scenario();
        let mut assignment = Assignment::empty(2, 1);
        assignment.set(0, 0, Some(0));
        assignment.set(1, 0, Some(0));
        let mut power = PowerAlloc::zeros(2, 1);
        power.p[0][0] = 1.25;
        power.p[1][0] = 0.5;
        let a = evaluate(&sc, &assignment, &power, Mode::Underlay, 0.7).unwrap();
        let b = evaluate(&sc, &assignment, &power, Mode::Underlay, 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(46.0), 39.8107, max_relative = 1e-4);
        assert_relative_eq!(dbm_to_watts(0.0), 1.0e-3);
    }

    #[test]
    fn macro_path_loss_at_1km() {
        assert_relative_eq!(macro_path_loss_db(1000.0), 128.1, max_relative = 1e-12);
    }

    #[test]
    fn path_loss_clamps_below_1m() {
        assert_eq!(macro_path_loss_db(0.001), macro_path_loss_db(1.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let params = ScenarioParams {
            total_subcarriers: 8,
            num_small_cells: 2,
            macro_ues: 3,
            small_ues: 2,
            ..ScenarioParams::default()
        };
        let a = generate_scenario(42, &params).unwrap();
        let b = generate_scenario(42, &params).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(43, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_geometry_respects_radii() {
        let params = ScenarioParams {
            total_subcarriers: 4,
            num_small_cells: 4,
            ..ScenarioParams::default()
        };
        let sc = generate_scenario(7, &params).unwrap();
        for l in 1..sc.num_cells() {
            let bs = sc.topology.bs_pos[l];
            let d = (bs[0].powi(2) + bs[1].powi(2)).sqrt();
            assert!(d <= params.macro_radius_m + 1e-9);
            for ue in &sc.topology.ue_pos[l] {
                let du = ((ue[0] - bs[0]).powi(2) + (ue[1] - bs[1]).powi(2)).sqrt();
                assert!(du <= params.small_radius_m + 1e-9);
            }
        }
    }

    #[test]
    fn fading_is_unit_mean() {
        // Monte Carlo check of the exponential fade used in generation:
        // accumulate gains relative to the deterministic path-loss base.
        let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(1, "fade-check"));
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += -(1.0 - rng.gen::<f64>()).ln();
        }
        let mean = acc / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean fade {mean}");
    }

    #[test]
    fn generate_rejects_bad_params() {
        let params = ScenarioParams {
            macro_radius_m: -1.0,
            ..ScenarioParams::default()
        };
        assert!(generate_scenario(1, &params).is_err());
        let params = ScenarioParams {
            macro_ues: 0,
            ..ScenarioParams::default()
        };
        assert!(generate_scenario(1, &params).is_err());
    }

    #[test]
    fn scenario_text_roundtrip_is_exact() {
        let params = ScenarioParams {
            total_subcarriers: 6,
            num_small_cells: 2,
            macro_ues: 2,
            small_ues: 2,
            ..ScenarioParams::default()
        };
        let sc = generate_scenario(99, &params).unwrap();
        let text = sc.to_text();
        assert!(text.starts_with("hcnsim-scenario v1\n"));
        let back = Scenario::from_text(&text).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn scenario_parse_rejects_bad_header() {
        let err = Scenario::from_text("wrong v9\nfoo = 1\n").unwrap_err();
        match err {
            HcnError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
