//! Slot-level Monte Carlo simulator: draws arrivals and channels, lets a
//! policy adapter pick the transmission subset, enforces the physical
//! queue rules and accumulates age/power statistics.
//!
//! Random-number discipline: one generator per replication, consumed in a
//! fixed order every slot — arrivals for users `1..N`, then channel levels
//! for users `1..N`, then exactly one policy-sampling draw (whether or not
//! the adapter uses it). Replication `r` uses `seed + r`, so runs are
//! reproducible bit-for-bit and adding users does not perturb other
//! users' streams within a slot layout.
//!
//! Power accounting follows the closed forms: allocations are computed for
//! the subset the policy intended, users whose queue is empty are masked
//! off and charge nothing, and the remaining users keep their allocations
//! (delivery still succeeds with the absent codeword gone).

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::cmdp::{CmdpPolicy, StateSpace};
use crate::cosrp::{subset_masks, subset_power_table, CoSrpPolicy};
use crate::error::{Error, Result};
use crate::model::{ActionVector, ChannelModel, RateFunction, StreamConfig};

/// Horizon, warmup, seeding and replication count for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub replications: u32,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.horizon <= self.warmup {
            return Err(Error::invalid(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be >= 1"));
        }
        Ok(())
    }
}

/// What a policy decided for one slot: the occupancy-masked action and the
/// powers actually charged (allocation of the intended subset, zeroed for
/// masked-off users).
#[derive(Debug, Clone)]
pub struct Decision {
    pub action: ActionVector,
    pub charged_powers: Vec<f64>,
}

/// Everything a policy may look at in one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    /// 1-based slot index.
    pub t: u64,
    /// Ages at the end of the previous slot (before this slot's arrivals).
    pub delta_prev: &'a [u64],
    /// Per-user channel level indices for this slot.
    pub level_indices: &'a [usize],
    /// Per-user channel gains for this slot.
    pub gains: &'a [f64],
    /// Whether queue `i` holds an undelivered version (after arrivals).
    pub occupied: &'a [bool],
    /// The slot's single policy-sampling draw, uniform on [0, 1).
    pub draw: f64,
}

/// A transmission rule the simulator can execute.
pub trait PolicyAdapter: Sync {
    fn decide(&self, ctx: &SlotContext) -> Decision;
    fn n_users(&self) -> usize;
}

fn mask_and_charge(
    intended: u32,
    powers: &[f64],
    occupied: &[bool],
    n_users: usize,
) -> Decision {
    let mut mask = 0u32;
    let mut charged = vec![0.0; n_users];
    for i in 0..n_users {
        if intended >> i & 1 == 1 && occupied[i] {
            mask |= 1 << i;
            charged[i] = powers[i];
        }
    }
    Decision {
        action: ActionVector::from_mask(mask, n_users).expect("mask within range"),
        charged_powers: charged,
    }
}

/// Executes a randomized channel-only policy: samples the subset from the
/// state's distribution with the slot draw.
pub struct CoSrpAdapter {
    n_users: usize,
    n_levels: usize,
    /// cumulative distribution per joint state
    cdf: Vec<Vec<f64>>,
    subsets: Vec<u32>,
    /// `powers[state][subset][user]`
    powers: Vec<Vec<Vec<f64>>>,
}

impl CoSrpAdapter {
    pub fn new(
        policy: &CoSrpPolicy,
        model: &ChannelModel,
        streams: &[StreamConfig],
        f: RateFunction,
    ) -> Result<Self> {
        let joint = model.enumerate_joint_states()?;
        if joint.len() != policy.n_states() {
            return Err(Error::invalid(format!(
                "policy has {} states, channel enumerates {}",
                policy.n_states(),
                joint.len()
            )));
        }
        let subsets = policy.subsets();
        let powers = subset_power_table(&joint, &subsets, streams, f)?;
        let cdf = policy
            .rows()
            .iter()
            .map(|row| {
                // normalize away the load tolerance so the tail draw
                // cannot fall through to an arbitrary subset
                let total: f64 = row.iter().sum();
                let mut acc = 0.0;
                row.iter()
                    .map(|&p| {
                        acc += p / total;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(CoSrpAdapter {
            n_users: policy.n_users(),
            n_levels: model.n_levels(),
            cdf,
            subsets,
            powers,
        })
    }

    fn joint_index(&self, levels: &[usize]) -> usize {
        levels.iter().fold(0, |acc, &l| acc * self.n_levels + l)
    }
}

impl PolicyAdapter for CoSrpAdapter {
    fn decide(&self, ctx: &SlotContext) -> Decision {
        let state = self.joint_index(ctx.level_indices);
        let row = &self.cdf[state];
        let mut pos = row.len() - 1;
        for (k, &c) in row.iter().enumerate() {
            if ctx.draw < c {
                pos = k;
                break;
            }
        }
        mask_and_charge(self.subsets[pos], &self.powers[state][pos], ctx.occupied, self.n_users)
    }

    fn n_users(&self) -> usize {
        self.n_users
    }
}

/// Executes a tabular age-and-channel policy; ages beyond the table cap
/// are looked up at the cap.
pub struct CmdpAdapter {
    n_users: usize,
    n_levels: usize,
    delta_max: u32,
    n_channels: usize,
    actions: Vec<u32>,
    /// `powers[channel][mask]` for the masks that actually occur
    powers: Vec<Vec<Vec<f64>>>,
    mask_pos: Vec<usize>,
}

impl CmdpAdapter {
    pub fn new(
        policy: &CmdpPolicy,
        model: &ChannelModel,
        streams: &[StreamConfig],
        f: RateFunction,
    ) -> Result<Self> {
        let space = StateSpace::new(model, policy.space.delta_max, usize::MAX)?;
        if policy.actions.len() != space.n_states() {
            return Err(Error::invalid("policy table does not match the model dimensions"));
        }
        let joint = model.enumerate_joint_states()?;
        let subsets = subset_masks(policy.scheme, model.n_users());
        let powers = subset_power_table(&joint, &subsets, streams, f)?;
        let mut mask_pos = vec![usize::MAX; 1 << model.n_users()];
        for (k, &m) in subsets.iter().enumerate() {
            mask_pos[m as usize] = k;
        }
        Ok(CmdpAdapter {
            n_users: model.n_users(),
            n_levels: model.n_levels(),
            delta_max: policy.space.delta_max,
            n_channels: joint.len(),
            actions: policy.actions.clone(),
            powers,
            mask_pos,
        })
    }
}

impl PolicyAdapter for CmdpAdapter {
    fn decide(&self, ctx: &SlotContext) -> Decision {
        let base = self.delta_max as usize + 1;
        let mut d_idx = 0usize;
        for &d in ctx.delta_prev {
            d_idx = d_idx * base + (d as usize).min(self.delta_max as usize);
        }
        let c_idx = ctx.level_indices.iter().fold(0, |acc, &l| acc * self.n_levels + l);
        let intended = self.actions[d_idx * self.n_channels + c_idx];
        let pos = self.mask_pos[intended as usize];
        mask_and_charge(intended, &self.powers[c_idx][pos], ctx.occupied, self.n_users)
    }

    fn n_users(&self) -> usize {
        self.n_users
    }
}

/// Transmits to every user every slot.
pub struct AlwaysTransmit {
    n_users: usize,
    n_levels: usize,
    /// full-subset allocation per joint channel state
    powers: Vec<Vec<f64>>,
}

impl AlwaysTransmit {
    pub fn new(model: &ChannelModel, streams: &[StreamConfig], f: RateFunction) -> Result<Self> {
        let joint = model.enumerate_joint_states()?;
        let full = [ActionVector::full(model.n_users()).mask()];
        let table = subset_power_table(&joint, &full, streams, f)?;
        Ok(AlwaysTransmit {
            n_users: model.n_users(),
            n_levels: model.n_levels(),
            powers: table.into_iter().map(|mut t| t.remove(0)).collect(),
        })
    }
}

impl PolicyAdapter for AlwaysTransmit {
    fn decide(&self, ctx: &SlotContext) -> Decision {
        let state = ctx.level_indices.iter().fold(0, |acc, &l| acc * self.n_levels + l);
        let full = ActionVector::full(self.n_users).mask();
        mask_and_charge(full, &self.powers[state], ctx.occupied, self.n_users)
    }

    fn n_users(&self) -> usize {
        self.n_users
    }
}

/// Never transmits.
pub struct NeverTransmit {
    pub n_users: usize,
}

impl PolicyAdapter for NeverTransmit {
    fn decide(&self, ctx: &SlotContext) -> Decision {
        let _ = ctx;
        Decision {
            action: ActionVector::empty(self.n_users),
            charged_powers: vec![0.0; self.n_users],
        }
    }

    fn n_users(&self) -> usize {
        self.n_users
    }
}

/// Single-user rule that delivers on every `period`-th slot.
pub struct FixedPeriod {
    pub period: u64,
}

impl PolicyAdapter for FixedPeriod {
    fn decide(&self, ctx: &SlotContext) -> Decision {
        let fire = ctx.t % self.period == 0;
        let mask = if fire && ctx.occupied[0] { 1 } else { 0 };
        Decision {
            action: ActionVector::from_mask(mask, 1).unwrap(),
            charged_powers: vec![0.0],
        }
    }

    fn n_users(&self) -> usize {
        1
    }
}

/// One per-slot record of an exported trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub delta: Vec<u64>,
    pub action_mask: u32,
    pub power: f64,
}

/// Accumulated statistics of one or more replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub per_user_vaoi: Vec<f64>,
    pub weighted_vaoi: f64,
    pub avg_power: f64,
    /// Standard errors across replications (zero for a single run).
    pub se_weighted: f64,
    pub se_power: f64,
    pub se_per_user: Vec<f64>,
    pub rep_weighted: Vec<f64>,
    pub rep_power: Vec<f64>,
    pub rep_per_user: Vec<Vec<f64>>,
    /// Post-warmup age histogram per user, saturated at the last bin.
    pub histograms: Vec<Vec<u64>>,
    pub slots_counted: u64,
    pub replications: u32,
    pub seed: u64,
}

const HISTOGRAM_BINS: usize = 4096;

struct RunAccumulator {
    age_sum: Vec<f64>,
    power_sum: f64,
    histograms: Vec<Vec<u64>>,
    slots: u64,
}

fn run_one(
    model: &ChannelModel,
    streams: &[StreamConfig],
    policy: &dyn PolicyAdapter,
    horizon: u64,
    warmup: u64,
    seed: u64,
    mut trace: Option<(&mut Vec<TraceRow>, usize)>,
) -> RunAccumulator {
    let n = model.n_users();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut z = vec![0u64; n]; // newest version at the base station
    let mut y = vec![0u64; n]; // newest delivered version
    let mut delta_prev = vec![0u64; n];
    let mut levels = vec![0usize; n];
    let mut gains = vec![0.0f64; n];
    let mut occupied = vec![false; n];
    let mut acc = RunAccumulator {
        age_sum: vec![0.0; n],
        power_sum: 0.0,
        histograms: vec![vec![0u64; HISTOGRAM_BINS]; n],
        slots: horizon - warmup,
    };
    for t in 1..=horizon {
        // fixed consumption order: arrivals, channels, policy draw
        for i in 0..n {
            let u: f64 = rng.gen();
            if u < streams[i].lambda {
                z[i] += 1;
            }
        }
        for i in 0..n {
            let u: f64 = rng.gen();
            let pmf = model.pmf(i);
            let mut acc_p = 0.0;
            let mut level = pmf.len() - 1;
            for (k, &p) in pmf.iter().enumerate() {
                acc_p += p;
                if u < acc_p {
                    level = k;
                    break;
                }
            }
            levels[i] = level;
            gains[i] = model.levels()[level];
        }
        let draw: f64 = rng.gen();
        for i in 0..n {
            occupied[i] = z[i] > y[i];
        }
        let decision = policy.decide(&SlotContext {
            t,
            delta_prev: &delta_prev,
            level_indices: &levels,
            gains: &gains,
            occupied: &occupied,
            draw,
        });
        let mut power = 0.0;
        for i in 0..n {
            if decision.action.contains(i) {
                debug_assert!(occupied[i], "delivery on an empty queue");
                y[i] = z[i];
                power += decision.charged_powers[i];
            }
            debug_assert!(z[i] >= y[i]);
            delta_prev[i] = z[i] - y[i];
        }
        if t > warmup {
            for i in 0..n {
                acc.age_sum[i] += delta_prev[i] as f64;
                let bin = (delta_prev[i] as usize).min(HISTOGRAM_BINS - 1);
                acc.histograms[i][bin] += 1;
            }
            acc.power_sum += power;
        }
        if let Some((rows, limit)) = trace.as_mut() {
            if rows.len() < *limit {
                rows.push(TraceRow {
                    t,
                    delta: delta_prev.clone(),
                    action_mask: decision.action.mask(),
                    power,
                });
            }
        }
    }
    acc
}

fn metrics_from_runs(
    streams: &[StreamConfig],
    runs: Vec<RunAccumulator>,
    cfg: &SimConfig,
) -> Metrics {
    let n = streams.len();
    let reps = runs.len();
    let mut rep_per_user = Vec::with_capacity(reps);
    let mut rep_weighted = Vec::with_capacity(reps);
    let mut rep_power = Vec::with_capacity(reps);
    let mut histograms = vec![vec![0u64; HISTOGRAM_BINS]; n];
    let mut slots_counted = 0;
    for run in &runs {
        let slots = run.slots as f64;
        let per_user: Vec<f64> = run.age_sum.iter().map(|&s| s / slots).collect();
        let weighted: f64 = per_user
            .iter()
            .zip(streams)
            .map(|(&a, s)| s.weight * a)
            .sum();
        rep_weighted.push(weighted);
        rep_power.push(run.power_sum / slots);
        rep_per_user.push(per_user);
        for i in 0..n {
            for (b, &c) in run.histograms[i].iter().enumerate() {
                histograms[i][b] += c;
            }
        }
        slots_counted += run.slots;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let se = |v: &[f64]| {
        if v.len() < 2 {
            return 0.0;
        }
        let m = mean(v);
        let var = v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
        (var / v.len() as f64).sqrt()
    };
    let per_user_vaoi: Vec<f64> = (0..n)
        .map(|i| mean(&rep_per_user.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect();
    let se_per_user: Vec<f64> = (0..n)
        .map(|i| se(&rep_per_user.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect();
    let weighted_vaoi = per_user_vaoi
        .iter()
        .zip(streams)
        .map(|(&a, s)| s.weight * a)
        .sum();
    Metrics {
        per_user_vaoi,
        weighted_vaoi,
        avg_power: mean(&rep_power),
        se_weighted: se(&rep_weighted),
        se_power: se(&rep_power),
        se_per_user,
        rep_weighted,
        rep_power,
        rep_per_user,
        histograms,
        slots_counted,
        replications: reps as u32,
        seed: cfg.seed,
    }
}

/// One replication with the configured seed.
pub fn simulate(
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    policy: &dyn PolicyAdapter,
    cfg: &SimConfig,
) -> Result<Metrics> {
    cfg.validate()?;
    check_dims(model, streams, policy)?;
    let _ = f;
    let run = run_one(model, streams, policy, cfg.horizon, cfg.warmup, cfg.seed, None);
    Ok(metrics_from_runs(streams, vec![run], cfg))
}

/// One replication that also records the first `limit` slots.
pub fn simulate_trace(
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    policy: &dyn PolicyAdapter,
    cfg: &SimConfig,
    limit: usize,
) -> Result<(Metrics, Vec<TraceRow>)> {
    cfg.validate()?;
    check_dims(model, streams, policy)?;
    let _ = f;
    let mut rows = Vec::new();
    let run = run_one(
        model,
        streams,
        policy,
        cfg.horizon,
        cfg.warmup,
        cfg.seed,
        Some((&mut rows, limit)),
    );
    Ok((metrics_from_runs(streams, vec![run], cfg), rows))
}

/// Independent replications on seeds `seed + r`, run concurrently, pooled
/// into replication means and standard errors.
pub fn replicate(
    model: &ChannelModel,
    streams: &[StreamConfig],
    f: RateFunction,
    policy: &dyn PolicyAdapter,
    cfg: &SimConfig,
) -> Result<Metrics> {
    cfg.validate()?;
    check_dims(model, streams, policy)?;
    let _ = f;
    let runs: Vec<RunAccumulator> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.replications)
            .map(|r| {
                let seed = cfg.seed + r as u64;
                scope.spawn(move || run_one(model, streams, policy, cfg.horizon, cfg.warmup, seed, None))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("replication panicked")).collect()
    });
    Ok(metrics_from_runs(streams, runs, cfg))
}

fn check_dims(model: &ChannelModel, streams: &[StreamConfig], policy: &dyn PolicyAdapter) -> Result<()> {
    if model.n_users() != streams.len() || model.n_users() != policy.n_users() {
        return Err(Error::invalid("model/stream/policy dimension mismatch"));
    }
    Ok(())
}

/// Outcome of the inter-delivery identity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterDeliveryStats {
    /// Mean of the per-cycle summed age.
    pub mean: f64,
    /// Standard error of that mean.
    pub se: f64,
    pub cycles: u64,
    /// The closed form `λ (I² − I) / 2`.
    pub expected: f64,
}

/// Synthetic single-user system whose delivery fires exactly every
/// `period` slots: measures the mean summed age per inter-delivery cycle
/// and returns it next to the closed form `λ(I² − I)/2`.
pub fn inter_delivery_check(lambda: f64, period: u64, cfg: &SimConfig) -> Result<InterDeliveryStats> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda must be in [0,1]"));
    }
    if period == 0 {
        return Err(Error::invalid("period must be >= 1"));
    }
    cfg.validate()?;
    let cycles = cfg.horizon / period;
    if cycles == 0 {
        return Err(Error::invalid("horizon shorter than one period"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut delta = 0u64;
    for _ in 0..cycles {
        let mut cycle_sum = 0u64;
        for k in 1..=period {
            let u: f64 = rng.gen();
            if u < lambda {
                delta += 1;
            }
            if k == period {
                delta = 0;
            }
            cycle_sum += delta;
        }
        sum += cycle_sum as f64;
        sumsq += (cycle_sum * cycle_sum) as f64;
    }
    let mean = sum / cycles as f64;
    let var = (sumsq / cycles as f64 - mean * mean).max(0.0);
    let se = (var / cycles as f64).sqrt();
    Ok(InterDeliveryStats {
        mean,
        se,
        cycles,
        expected: lambda * (period * period - period) as f64 / 2.0,
    })
}
