//! The per-CPI protocol, single runs and Monte-Carlo batches.
//!
//! Each run owns three independent random streams derived from its seed: the
//! environment (node placement, interference), the sensing noise, and the
//! policy's own randomness. Changing the policy therefore never changes the
//! world a seed produces.

use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::{max_weight_matching, Matching, WeightKind, WeightMatrix};
use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::policies::{
    draw_random_matchings, feedback_values, Coordinator, FeedbackKind, FeedbackMessage, NodeAgent, NodeReport,
    PolicyContext, PolicyKind,
};
use crate::rfmodel::{detection_probability, estimate_from_normal, received_power, sinr, to_db, InterferenceField};
use crate::scenario::{place_nodes, propagate_target, true_observables, RadarNode, Vec2};
use crate::tracking::{cc_fuse, generate_measurement, init_track, mean_fix, TrackState};

const ENV_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The static part of a run's environment.
#[derive(Debug, Clone)]
pub struct World {
    pub nodes: Vec<RadarNode>,
    pub interference: InterferenceField,
}

pub fn build_world(scn: &Scenario, seed: u64) -> Result<World> {
    let mut env = stream_rng(seed, ENV_STREAM);
    let nodes = place_nodes(&mut env, &scn.geometry)?;
    let drift_seed = env.next_u64();
    let interference = InterferenceField::draw(
        &mut env,
        scn.geometry.node_count,
        scn.channels.count(),
        &scn.interference,
        drift_seed,
    )?;
    Ok(World { nodes, interference })
}

/// Snapshot of a run's world for cross-policy checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldInfo {
    pub node_positions: Vec<[f64; 2]>,
    /// Effective interference `P_{i}(m, n)` at CPI 0, dBW.
    pub interference_dbw: Vec<Vec<f64>>,
}

impl WorldInfo {
    fn capture(world: &World) -> Self {
        WorldInfo {
            node_positions: world.nodes.iter().map(|n| n.position.into()).collect(),
            interference_dbw: (0..world.nodes.len())
                .map(|m| {
                    (0..world.interference.channel_count())
                        .map(|n| to_db(world.interference.power(m, n)))
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpiRecord {
    pub cpi: usize,
    pub channels: Vec<usize>,
    pub utility_true: f64,
    pub utility_opt: f64,
    pub regret_inst: f64,
    pub regret_cum: f64,
    /// Scalars sent by the coordinator this CPI, counted per recipient.
    pub feedback_values: u64,
    pub feedback_avg: f64,
    pub feedback_kinds: Vec<FeedbackKind>,
    /// Number of nodes that shared a channel with another node.
    pub collisions: usize,
    pub position_estimate: Option<Vec2>,
    /// Fused position error at the CPI midpoint; NaN before the first fix.
    pub loc_error: f64,
    /// Estimated SINR per node; `None` on collision.
    pub node_sinr: Vec<Option<f64>>,
}

/// A run in progress. `run_cpi` advances it by one CPI.
pub struct Simulation<'a> {
    scn: &'a Scenario,
    world: World,
    agents: Vec<NodeAgent>,
    coordinator: Coordinator,
    inbox: Vec<FeedbackMessage>,
    cc_track: Option<TrackState>,
    noise_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    random_list: Vec<Matching>,
    cpi: usize,
    regret_cum: f64,
    feedback_total: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(scn: &'a Scenario, seed: u64) -> Result<Self> {
        Self::with_world(scn, build_world(scn, seed)?, seed)
    }

    /// Start a run in a caller-supplied world (hand-built test worlds).
    pub fn with_world(scn: &'a Scenario, world: World, seed: u64) -> Result<Self> {
        let m = scn.geometry.node_count;
        let n = scn.channels.count();
        if world.nodes.len() != m || world.interference.channel_count() != n {
            return Err(Error::ShapeMismatch(format!(
                "world has {} nodes and {} channels, scenario expects {m} and {n}",
                world.nodes.len(),
                world.interference.channel_count()
            )));
        }
        let mut policy_rng = stream_rng(seed, POLICY_STREAM);
        let random_list = if scn.policy == PolicyKind::Random {
            draw_random_matchings(&mut policy_rng, m, n, scn.policy_params.random_list_len)?
        } else {
            Vec::new()
        };
        Ok(Simulation {
            scn,
            agents: (0..m)
                .map(|id| NodeAgent::new(id, scn.policy, m, n, &scn.policy_params))
                .collect::<Result<_>>()?,
            coordinator: Coordinator::new(scn.policy, m, n)?,
            world,
            inbox: Vec::new(),
            cc_track: None,
            noise_rng: stream_rng(seed, NOISE_STREAM),
            policy_rng,
            random_list,
            cpi: 0,
            regret_cum: 0.0,
            feedback_total: 0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn agents(&self) -> &[NodeAgent] {
        &self.agents
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn cc_track(&self) -> Option<&TrackState> {
        self.cc_track.as_ref()
    }

    /// True SINR of every node/channel pair at the midpoint of CPI `k`.
    pub fn true_weights(&self, k: usize) -> Result<WeightMatrix> {
        let truth = self.truth_at(k);
        let signal = self
            .world
            .nodes
            .iter()
            .map(|n| received_power(&self.scn.radar, true_observables(n, &truth)?.range))
            .collect::<Result<Vec<_>>>()?;
        let noise = self.scn.radar.noise_power;
        WeightMatrix::from_fn(self.world.nodes.len(), self.world.interference.channel_count(), WeightKind::TrueSinr, |m, n| {
            sinr(signal[m], self.world.interference.power(m, n), noise)
        })
    }

    fn truth_at(&self, k: usize) -> crate::scenario::TargetTruth {
        propagate_target(
            self.scn.geometry.initial_target(),
            (k as f64 + 0.5) * self.scn.geometry.cpi_duration,
        )
    }

    /// One CPI of the protocol. `forced` overrides the nodes' channel choices.
    pub fn run_cpi(&mut self, forced: Option<&[usize]>) -> Result<CpiRecord> {
        let scn = self.scn;
        let k = self.cpi;
        let m_count = self.world.nodes.len();
        let n_count = self.world.interference.channel_count();
        let truth = self.truth_at(k);
        let w_true = self.true_weights(k)?;
        let (optimal, utility_opt) = max_weight_matching(&w_true);

        let ctx = PolicyContext {
            cpi: k,
            nodes: &self.world.nodes,
            channels: n_count,
            radar: &scn.radar,
            filter: &scn.filter,
            track_init: &scn.track_init,
            params: &scn.policy_params,
        };

        // 1. channel selection
        let inbox = std::mem::take(&mut self.inbox);
        let mut channels = Vec::with_capacity(m_count);
        for agent in &mut self.agents {
            channels.push(agent.node_step(&ctx, &inbox, &optimal, &self.random_list, &mut self.policy_rng)?);
        }
        if let Some(f) = forced {
            if f.len() != m_count || f.iter().any(|&c| c >= n_count) {
                return Err(Error::ShapeMismatch(format!("forced choice {f:?} is invalid")));
            }
            channels = f.to_vec();
        }

        // 2. collisions
        let mut load = vec![0usize; n_count];
        for &c in &channels {
            load[c] += 1;
        }
        let collided: Vec<bool> = channels.iter().map(|&c| load[c] > 1).collect();
        let collisions = collided.iter().filter(|&&c| c).count();

        // 3-4. SINR realization, estimates and measurements
        let mut utility_true = 0.0;
        let mut reports = Vec::with_capacity(m_count);
        for (m, node) in self.world.nodes.iter().enumerate() {
            let gamma = w_true.get(m, channels[m]);
            let z: f64 = self.noise_rng.sample(StandardNormal);
            let measurement = generate_measurement(
                &mut self.noise_rng,
                node,
                &truth,
                k,
                gamma * f64::from(scn.pris_per_cpi),
                &scn.sensor,
            )?;
            let u: f64 = self.noise_rng.random();
            let detected = !scn.detection_gating || u < detection_probability(gamma, scn.pfa, scn.pris_per_cpi)?;
            let valid = !collided[m] && detected;
            if !collided[m] {
                utility_true += gamma;
            }
            reports.push(NodeReport {
                node_id: m,
                channel: channels[m],
                collided: collided[m],
                sinr_estimate: (!collided[m]).then(|| estimate_from_normal(gamma, &scn.sinr_estimate, z)),
                measurement: if valid { measurement } else { measurement.invalidated() },
            });
        }
        let mut regret_inst = utility_opt - utility_true;
        debug_assert!(regret_inst >= -1e-9 * utility_opt.abs(), "negative regret {regret_inst}");
        regret_inst = regret_inst.max(0.0);
        self.regret_cum += regret_inst;

        // 5. node-side learning and filters
        for (agent, rep) in self.agents.iter_mut().zip(&reports) {
            agent.observe(&ctx, rep)?;
        }

        // 6. coordinator fusion
        let measurements: Vec<_> = reports.iter().map(|r| r.measurement).collect();
        self.cc_track = match &self.cc_track {
            Some(track) => Some(cc_fuse(&measurements, &self.world.nodes, track, &scn.filter)?),
            None => mean_fix(&measurements, &self.world.nodes)?.map(|p| init_track(p, &scn.track_init, k)),
        };

        // 7. feedback for the next CPI
        let messages = self.coordinator.coordinator_step(&ctx, &reports, self.cc_track.as_ref())?;
        let fb = feedback_values(&messages, m_count);
        self.feedback_total += fb;
        let feedback_kinds = messages.iter().map(FeedbackMessage::kind).collect();
        self.inbox = messages;

        self.world.interference.step();
        self.cpi += 1;

        // 8. metrics
        let position_estimate = self.cc_track.as_ref().map(TrackState::position);
        Ok(CpiRecord {
            cpi: k,
            channels,
            utility_true,
            utility_opt,
            regret_inst,
            regret_cum: self.regret_cum,
            feedback_values: fb,
            feedback_avg: self.feedback_total as f64 / (m_count as f64 * (k + 1) as f64),
            feedback_kinds,
            collisions,
            position_estimate,
            loc_error: position_estimate.map_or(f64::NAN, |p| p.distance(truth.position)),
            node_sinr: reports.iter().map(|r| r.sinr_estimate).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario_hash: u64,
    pub seed: u64,
    pub policy: PolicyKind,
    pub records: Vec<CpiRecord>,
    pub world: WorldInfo,
    pub wall_clock: Duration,
}

/// FNV-1a over the resolved scenario's debug rendering.
pub fn scenario_hash(scn: &Scenario) -> u64 {
    format!("{scn:?}")
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn run_simulation(scn: &Scenario, seed: u64) -> Result<RunResult> {
    let start = Instant::now();
    let mut sim = Simulation::new(scn, seed)?;
    let world = WorldInfo::capture(sim.world());
    let records = (0..scn.horizon_cpis)
        .map(|_| sim.run_cpi(None))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        scenario_hash: scenario_hash(scn),
        seed,
        policy: scn.policy,
        records,
        world,
        wall_clock: start.elapsed(),
    })
}

/// Distribution summary of pooled localization errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorQuantiles {
    pub count: usize,
    pub mean: f64,
    pub p05: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ErrorQuantiles {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
        s.sort_by(f64::total_cmp);
        let mean = if s.is_empty() {
            f64::NAN
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        };
        ErrorQuantiles {
            count: s.len(),
            mean,
            p05: quantile(&s, 0.05),
            p10: quantile(&s, 0.10),
            p25: quantile(&s, 0.25),
            p50: quantile(&s, 0.50),
            p75: quantile(&s, 0.75),
            p90: quantile(&s, 0.90),
            p95: quantile(&s, 0.95),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub policy: PolicyKind,
    pub convergence_cpi: usize,
    /// Runs ordered by seed.
    pub runs: Vec<RunResult>,
    pub mean_regret_cum: Vec<f64>,
    pub mean_feedback_avg: Vec<f64>,
    /// Mean over runs that have a track at that CPI.
    pub mean_loc_error: Vec<f64>,
    pub errors_full: Vec<f64>,
    /// Errors at CPIs strictly after `convergence_cpi`.
    pub errors_post: Vec<f64>,
    pub quantiles_full: ErrorQuantiles,
    pub quantiles_post: ErrorQuantiles,
}

fn column_mean(runs: &[RunResult], k: usize, f: impl Fn(&CpiRecord) -> f64) -> f64 {
    let (sum, count) = runs
        .iter()
        .map(|r| f(&r.records[k]))
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

impl BatchResult {
    pub fn from_runs(policy: PolicyKind, convergence_cpi: usize, mut runs: Vec<RunResult>) -> Result<Self> {
        runs.sort_by_key(|r| r.seed);
        let horizon = runs.first().map_or(0, |r| r.records.len());
        if runs.iter().any(|r| r.records.len() != horizon) {
            return Err(Error::ShapeMismatch("runs in a batch have different horizons".into()));
        }
        let mean_regret_cum = (0..horizon).map(|k| column_mean(&runs, k, |c| c.regret_cum)).collect();
        let mean_feedback_avg = (0..horizon).map(|k| column_mean(&runs, k, |c| c.feedback_avg)).collect();
        let mean_loc_error = (0..horizon).map(|k| column_mean(&runs, k, |c| c.loc_error)).collect();
        let errors_full: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.records.iter().map(|c| c.loc_error))
            .filter(|v| v.is_finite())
            .collect();
        let errors_post: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.records.iter().filter(|c| c.cpi > convergence_cpi).map(|c| c.loc_error))
            .filter(|v| v.is_finite())
            .collect();
        Ok(BatchResult {
            policy,
            convergence_cpi,
            quantiles_full: ErrorQuantiles::from_samples(&errors_full),
            quantiles_post: ErrorQuantiles::from_samples(&errors_post),
            runs,
            mean_regret_cum,
            mean_feedback_avg,
            mean_loc_error,
            errors_full,
            errors_post,
        })
    }
}

/// Independent runs for every seed, in parallel, then aggregated in seed order.
pub fn run_batch(scn: &Scenario, seeds: &[u64]) -> Result<BatchResult> {
    if seeds.is_empty() {
        return Err(Error::OutOfRange {
            what: "seeds",
            detail: "a batch needs at least one seed".into(),
        });
    }
    let runs = seeds
        .par_iter()
        .map(|&s| run_simulation(scn, s))
        .collect::<Result<Vec<_>>>()?;
    BatchResult::from_runs(scn.policy, scn.convergence_cpi, runs)
}
