//! Channel-selection policies as node-side and coordinator-side state
//! machines that talk only through [`FeedbackMessage`]s.
//!
//! The explore-then-commit family (`c_etc`, `c_etp`, `h_etp`, `etp`) shares
//! one exploration protocol run by the coordinator: a sweep over cyclic-shift
//! matchings, then successive candidate lists built and pruned from a pooled
//! per-channel interference model, then a commit. What happens after the
//! commit is what tells the four apart.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    max_weight_matching, max_weight_matching_with, utility, Matching, MatchingList, WeightKind, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::rfmodel::{from_db, predicted_power, to_db, RadarParams};
use crate::scenario::{RadarNode, Vec2};
use crate::tracking::{cc_fuse, init_track, mean_fix, predict_range, FilterParams, Measurement, TrackInit, TrackState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Oracle,
    CEtc,
    CEtp,
    HEtp,
    Etp,
    Mc,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Oracle,
        PolicyKind::CEtc,
        PolicyKind::CEtp,
        PolicyKind::HEtp,
        PolicyKind::Etp,
        PolicyKind::Mc,
        PolicyKind::Random,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::CEtc => "c_etc",
            PolicyKind::CEtp => "c_etp",
            PolicyKind::HEtp => "h_etp",
            PolicyKind::Etp => "etp",
            PolicyKind::Mc => "mc",
            PolicyKind::Random => "random",
        }
    }

    pub fn is_etc_family(self) -> bool {
        matches!(self, PolicyKind::CEtc | PolicyKind::CEtp | PolicyKind::HEtp | PolicyKind::Etp)
    }

    /// Policies whose nodes always act on identical information.
    pub fn is_coordinated(self) -> bool {
        matches!(
            self,
            PolicyKind::Oracle | PolicyKind::CEtc | PolicyKind::CEtp | PolicyKind::HEtp | PolicyKind::Random
        )
    }

    /// Message kinds this policy's coordinator may emit.
    pub fn allowed_feedback(self) -> &'static [FeedbackKind] {
        match self {
            PolicyKind::CEtc => &[FeedbackKind::MatchingList],
            PolicyKind::CEtp => &[FeedbackKind::MatchingList, FeedbackKind::WeightMatrix],
            PolicyKind::HEtp => &[
                FeedbackKind::MatchingList,
                FeedbackKind::ChannelMetrics,
                FeedbackKind::TargetState,
            ],
            PolicyKind::Etp => &[FeedbackKind::MatchingList, FeedbackKind::ChannelMetrics],
            PolicyKind::Oracle | PolicyKind::Mc | PolicyKind::Random => &[],
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// Tunables shared by all policies; each reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    /// Scale of the elimination confidence radius.
    pub confidence: f64,
    /// Candidate-list sweeps before a forced commit.
    pub max_sweeps: usize,
    /// Upper bound on the length of any candidate list after the first sweep.
    pub max_candidates: Option<usize>,
    pub mc_exploration_cpis: usize,
    pub random_list_len: usize,
    /// Range-prediction horizon in CPIs for predicted-power terms.
    pub prediction_cpis: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            confidence: 0.05,
            max_sweeps: 2,
            max_candidates: None,
            mc_exploration_cpis: 2500,
            random_list_len: 1024,
            prediction_cpis: 1,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence.is_finite() && self.confidence >= 0.0) {
            return Err(Error::OutOfRange {
                what: "confidence",
                detail: format!("must be finite and >= 0 (got {})", self.confidence),
            });
        }
        if self.max_sweeps == 0 {
            return Err(Error::OutOfRange {
                what: "max_sweeps",
                detail: "at least one candidate sweep is required".into(),
            });
        }
        if self.max_candidates == Some(0) {
            return Err(Error::OutOfRange {
                what: "max_candidates",
                detail: "must be at least 1".into(),
            });
        }
        if self.random_list_len == 0 {
            return Err(Error::OutOfRange {
                what: "random_list_len",
                detail: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    MatchingList,
    WeightMatrix,
    TargetState,
    ChannelMetrics,
}

/// Coordinator-to-node payload. Every message is broadcast, and its values
/// are counted once per recipient.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackMessage {
    MatchingList(Vec<Matching>),
    WeightMatrix(WeightMatrix),
    /// Predicted target position for the CPI the message is consumed in.
    TargetState(Vec2),
    /// Pooled per-channel metric, dB.
    ChannelMetrics(Vec<f64>),
}

impl FeedbackMessage {
    pub fn kind(&self) -> FeedbackKind {
        match self {
            FeedbackMessage::MatchingList(_) => FeedbackKind::MatchingList,
            FeedbackMessage::WeightMatrix(_) => FeedbackKind::WeightMatrix,
            FeedbackMessage::TargetState(_) => FeedbackKind::TargetState,
            FeedbackMessage::ChannelMetrics(_) => FeedbackKind::ChannelMetrics,
        }
    }

    /// Scalars delivered to a single node.
    pub fn value_count(&self, nodes: usize) -> u64 {
        (match self {
            FeedbackMessage::MatchingList(list) => list.len() * nodes,
            FeedbackMessage::WeightMatrix(w) => w.rows() * w.cols(),
            FeedbackMessage::TargetState(_) => 2,
            FeedbackMessage::ChannelMetrics(v) => v.len(),
        }) as u64
    }
}

/// Total scalars sent in one CPI, counted per recipient.
pub fn feedback_values(messages: &[FeedbackMessage], nodes: usize) -> u64 {
    nodes as u64 * messages.iter().map(|m| m.value_count(nodes)).sum::<u64>()
}

/// The `N` cyclic shifts: matching `j` puts node `m` on channel `(m + j) mod N`.
pub fn build_initial_matchings(nodes: usize, channels: usize) -> Result<MatchingList> {
    if nodes > channels {
        return Err(Error::MatchingInfeasible { nodes, channels });
    }
    let items = (0..channels)
        .map(|j| Matching::new((0..nodes).map(|m| (m + j) % channels).collect(), channels))
        .collect::<Result<Vec<_>>>()?;
    MatchingList::new(items)
}

/// Target-based reward `10^(Gamma/10) / r^4` from dB channel metrics.
pub fn build_target_reward_matrix(metrics_db: &[Vec<f64>], ranges: &[f64]) -> Result<WeightMatrix> {
    if metrics_db.len() != ranges.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} metric rows for {} ranges",
            metrics_db.len(),
            ranges.len()
        )));
    }
    for &r in ranges {
        crate::error::ensure_positive("range", r)?;
    }
    let rows: Vec<Vec<f64>> = metrics_db
        .iter()
        .zip(ranges)
        .map(|(row, r)| row.iter().map(|g| from_db(*g) / r.powi(4)).collect())
        .collect();
    WeightMatrix::from_rows(&rows, WeightKind::TargetBased)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmStats {
    pub visits: u64,
    pub mean: f64,
}

impl ArmStats {
    pub fn record(&mut self, reward: f64) {
        self.visits += 1;
        self.mean += (reward - self.mean) / self.visits as f64;
    }
}

/// A candidate list together with per-matching statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationState {
    pub list: MatchingList,
    pub stats: Vec<ArmStats>,
    pub round: usize,
    pub converged: bool,
}

impl ExplorationState {
    pub fn new(list: MatchingList) -> Self {
        let converged = list.len() == 1;
        ExplorationState {
            stats: vec![ArmStats::default(); list.len()],
            list,
            round: 0,
            converged,
        }
    }

    /// Record the reward observed for the matching under the cursor.
    pub fn record_current(&mut self, reward: f64) {
        self.stats[self.list.cursor()].record(reward);
    }
}

fn confidence_radius(c: f64, k: usize, visits: u64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    c * (2.0 * (k.max(1) as f64).ln() / visits as f64).sqrt()
}

/// Successive elimination: keep every matching whose upper confidence bound
/// reaches the best lower bound. Means are normalized by the largest absolute
/// mean so `c` is dimensionless. Survivors are ordered by mean, best first,
/// and truncated to `cap`.
pub fn etc_eliminate(state: &ExplorationState, c: f64, k: usize, cap: Option<usize>) -> ExplorationState {
    let scale = state.stats.iter().fold(0.0f64, |a, s| a.max(s.mean.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let bounds: Vec<(f64, f64)> = state
        .stats
        .iter()
        .map(|s| {
            let rad = confidence_radius(c, k, s.visits);
            (s.mean / scale - rad, s.mean / scale + rad)
        })
        .collect();
    let best_lower = bounds.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    let mut survivors: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i].1 >= best_lower).collect();
    if survivors.is_empty() {
        // Only possible with NaN statistics; fall back on the empirical best.
        survivors.push(best_index(&state.stats));
    }
    survivors.sort_by(|&a, &b| {
        state.stats[b]
            .mean
            .total_cmp(&state.stats[a].mean)
            .then_with(|| state.list.items()[a].cmp(&state.list.items()[b]))
    });
    if let Some(cap) = cap {
        survivors.truncate(cap.max(1));
    }
    let items = survivors.iter().map(|&i| state.list.items()[i].clone()).collect();
    let list = MatchingList::new(items).expect("survivors are a non-empty subset of a valid list");
    ExplorationState {
        converged: list.len() == 1,
        stats: survivors.iter().map(|&i| state.stats[i]).collect(),
        list,
        round: state.round + 1,
    }
}

fn best_index(stats: &[ArmStats]) -> usize {
    (0..stats.len())
        .max_by(|&a, &b| stats[a].mean.total_cmp(&stats[b].mean).then(b.cmp(&a)))
        .expect("non-empty")
}

/// Pooled running mean of the linear channel metric `gamma_hat / P_hat` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl ChannelModel {
    pub fn new(channels: usize) -> Self {
        ChannelModel {
            sums: vec![0.0; channels],
            counts: vec![0; channels],
        }
    }

    pub fn record(&mut self, channel: usize, linear_metric: f64) {
        debug_assert!(linear_metric.is_finite() && linear_metric > 0.0);
        self.sums[channel] += linear_metric;
        self.counts[channel] += 1;
    }

    pub fn count(&self, channel: usize) -> u64 {
        self.counts[channel]
    }

    /// Unvisited channels borrow the best visited mean (optimism).
    pub fn means(&self) -> Vec<f64> {
        let raw: Vec<Option<f64>> = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        let fallback = raw.iter().flatten().copied().fold(f64::NAN, f64::max);
        let fallback = if fallback.is_nan() { 1.0 } else { fallback };
        raw.into_iter().map(|m| m.unwrap_or(fallback)).collect()
    }

    pub fn metrics_db(&self) -> Vec<f64> {
        self.means().into_iter().map(to_db).collect()
    }
}

/// What a node learned about its own transmission in one CPI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeReport {
    pub node_id: usize,
    pub channel: usize,
    pub collided: bool,
    /// Estimated linear SINR; absent on collision.
    pub sinr_estimate: Option<f64>,
    pub measurement: Measurement,
}

/// Shared, read-only context of a CPI.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub cpi: usize,
    pub nodes: &'a [RadarNode],
    pub channels: usize,
    pub radar: &'a RadarParams,
    pub filter: &'a FilterParams,
    pub track_init: &'a TrackInit,
    pub params: &'a PolicyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McPhase {
    Explore,
    Seat,
}

/// Musical Chairs bookkeeping for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct McState {
    pub phase: McPhase,
    pub round: usize,
    pub reward_sums: Vec<f64>,
    pub reward_counts: Vec<u64>,
    pub collisions: u64,
    pub seated: Option<usize>,
    pub exploration_cpis: usize,
    candidate: Option<usize>,
}

impl McState {
    pub fn new(channels: usize, exploration_cpis: usize) -> Self {
        McState {
            phase: if exploration_cpis == 0 { McPhase::Seat } else { McPhase::Explore },
            round: 0,
            reward_sums: vec![0.0; channels],
            reward_counts: vec![0; channels],
            collisions: 0,
            seated: None,
            exploration_cpis,
            candidate: None,
        }
    }

    /// The `nodes` channels with the highest empirical mean reward.
    pub fn top_channels(&self, nodes: usize) -> Vec<usize> {
        let mean = |c: usize| {
            if self.reward_counts[c] == 0 {
                0.0
            } else {
                self.reward_sums[c] / self.reward_counts[c] as f64
            }
        };
        let mut order: Vec<usize> = (0..self.reward_sums.len()).collect();
        order.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)).then(a.cmp(&b)));
        order.truncate(nodes);
        order
    }

    fn choose(&mut self, rng: &mut ChaCha8Rng, nodes: usize) -> usize {
        let channels = self.reward_sums.len();
        if self.phase == McPhase::Explore && self.round >= self.exploration_cpis {
            self.phase = McPhase::Seat;
        }
        let choice = match (self.phase, self.seated) {
            (McPhase::Explore, _) => rng.random_range(0..channels),
            (McPhase::Seat, Some(c)) => c,
            (McPhase::Seat, None) => {
                let top = self.top_channels(nodes);
                top[rng.random_range(0..top.len())]
            }
        };
        self.candidate = Some(choice);
        choice
    }

    fn observe(&mut self, report: &NodeReport) {
        self.round += 1;
        if report.collided {
            self.collisions += 1;
            return;
        }
        match self.phase {
            McPhase::Explore => {
                if let Some(g) = report.sinr_estimate {
                    self.reward_sums[report.channel] += g;
                    self.reward_counts[report.channel] += 1;
                }
            }
            McPhase::Seat => {
                if self.seated.is_none() {
                    self.seated = self.candidate;
                }
            }
        }
    }
}

/// A radar node's decision state.
#[derive(Debug, Clone)]
pub struct NodeAgent {
    pub id: usize,
    pub policy: PolicyKind,
    list: Option<MatchingList>,
    committed: Option<Matching>,
    metrics_db: Option<Vec<f64>>,
    own_track: Option<TrackState>,
    mc: Option<McState>,
}

impl NodeAgent {
    pub fn new(id: usize, policy: PolicyKind, nodes: usize, channels: usize, params: &PolicyParams) -> Result<Self> {
        Ok(NodeAgent {
            id,
            policy,
            list: if policy.is_etc_family() {
                Some(build_initial_matchings(nodes, channels)?)
            } else {
                None
            },
            committed: None,
            metrics_db: None,
            own_track: None,
            mc: (policy == PolicyKind::Mc).then(|| McState::new(channels, params.mc_exploration_cpis)),
        })
    }

    pub fn own_track(&self) -> Option<&TrackState> {
        self.own_track.as_ref()
    }

    pub fn mc_state(&self) -> Option<&McState> {
        self.mc.as_ref()
    }

    pub fn is_committed(&self) -> bool {
        self.committed.is_some()
    }

    fn missing(&self, detail: &str) -> Error {
        Error::MissingFeedback {
            policy: self.policy.label(),
            node: self.id,
            detail: detail.to_string(),
        }
    }

    fn solve_for_self(&self, w: &WeightMatrix) -> usize {
        max_weight_matching(w).0.channel(self.id)
    }

    /// Pick this CPI's channel. `inbox` holds what the coordinator sent at the
    /// end of the previous CPI; `optimal` and `random_list` are only read by
    /// the oracle and random policies.
    pub fn node_step(
        &mut self,
        ctx: &PolicyContext<'_>,
        inbox: &[FeedbackMessage],
        optimal: &Matching,
        random_list: &[Matching],
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        for msg in inbox {
            match msg {
                FeedbackMessage::MatchingList(items) if items.len() == 1 && self.committed.is_none() => {
                    self.committed = Some(items[0].clone());
                    self.list = None;
                }
                FeedbackMessage::MatchingList(items) => {
                    self.list = Some(MatchingList::new(items.clone())?);
                }
                FeedbackMessage::ChannelMetrics(v) => self.metrics_db = Some(v.clone()),
                FeedbackMessage::WeightMatrix(_) | FeedbackMessage::TargetState(_) => {}
            }
        }

        match self.policy {
            PolicyKind::Oracle => Ok(optimal.channel(self.id)),
            PolicyKind::Random => Ok(random_list[ctx.cpi % random_list.len()].channel(self.id)),
            PolicyKind::Mc => {
                let nodes = ctx.nodes.len();
                Ok(self.mc.as_mut().expect("mc state").choose(rng, nodes))
            }
            _ => {
                let Some(committed) = &self.committed else {
                    let list = self.list.as_ref().ok_or_else(|| self.missing("no candidate list"))?;
                    return Ok(list.current().channel(self.id));
                };
                match self.policy {
                    PolicyKind::CEtc => Ok(committed.channel(self.id)),
                    PolicyKind::CEtp => {
                        let w = inbox
                            .iter()
                            .find_map(|m| match m {
                                FeedbackMessage::WeightMatrix(w) => Some(w),
                                _ => None,
                            })
                            .ok_or_else(|| self.missing("no weight matrix after commit"))?;
                        Ok(self.solve_for_self(w))
                    }
                    PolicyKind::HEtp => {
                        let target = inbox
                            .iter()
                            .find_map(|m| match m {
                                FeedbackMessage::TargetState(p) => Some(*p),
                                _ => None,
                            })
                            .ok_or_else(|| self.missing("no target state after commit"))?;
                        let ranges: Vec<f64> = ctx.nodes.iter().map(|n| n.position.distance(target)).collect();
                        self.target_based_choice(ctx, &ranges)
                    }
                    PolicyKind::Etp => {
                        let Some(track) = &self.own_track else {
                            return Ok(committed.channel(self.id));
                        };
                        let ranges: Vec<f64> = ctx
                            .nodes
                            .iter()
                            .map(|n| predict_range(track, n.position, ctx.params.prediction_cpis, ctx.filter))
                            .collect();
                        self.target_based_choice(ctx, &ranges)
                    }
                    _ => unreachable!("non-ETC policies handled above"),
                }
            }
        }
    }

    fn target_based_choice(&self, ctx: &PolicyContext<'_>, ranges: &[f64]) -> Result<usize> {
        let metrics = self.metrics_db.as_ref().ok_or_else(|| self.missing("no channel metrics"))?;
        if ranges.iter().any(|r| !(*r > 0.0)) {
            // Degenerate geometry: keep the committed matching.
            return Ok(self.committed.as_ref().expect("committed").channel(self.id));
        }
        let rows = vec![metrics.clone(); ctx.nodes.len()];
        Ok(self.solve_for_self(&build_target_reward_matrix(&rows, ranges)?))
    }

    /// Local learning after the CPI: cursor advance, own filter, Musical Chairs.
    pub fn observe(&mut self, ctx: &PolicyContext<'_>, report: &NodeReport) -> Result<()> {
        if let Some(list) = self.list.as_mut() {
            list.advance();
        }
        if let Some(mc) = self.mc.as_mut() {
            mc.observe(report);
        }
        if self.policy == PolicyKind::Etp {
            let own = std::slice::from_ref(&report.measurement);
            self.own_track = match &self.own_track {
                Some(track) => Some(cc_fuse(own, ctx.nodes, track, ctx.filter)?),
                None => mean_fix(own, ctx.nodes)?.map(|p| init_track(p, ctx.track_init, ctx.cpi)),
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinatorPhase {
    InitialSweep,
    Refining,
    Committed,
}

/// The central coordinator's policy state.
#[derive(Debug, Clone)]
pub struct Coordinator {
    pub policy: PolicyKind,
    pub phase: CoordinatorPhase,
    model: ChannelModel,
    exploration: Option<ExplorationState>,
    committed: Option<Matching>,
    last_reports: Vec<Option<(usize, f64)>>,
}

impl Coordinator {
    pub fn new(policy: PolicyKind, nodes: usize, channels: usize) -> Result<Self> {
        let exploration = if policy.is_etc_family() {
            Some(ExplorationState::new(build_initial_matchings(nodes, channels)?))
        } else {
            None
        };
        Ok(Coordinator {
            policy,
            phase: CoordinatorPhase::InitialSweep,
            model: ChannelModel::new(channels),
            exploration,
            committed: None,
            last_reports: vec![None; nodes],
        })
    }

    pub fn exploration(&self) -> Option<&ExplorationState> {
        self.exploration.as_ref()
    }

    pub fn committed(&self) -> Option<&Matching> {
        self.committed.as_ref()
    }

    pub fn channel_model(&self) -> &ChannelModel {
        &self.model
    }

    fn ranges_ahead(&self, ctx: &PolicyContext<'_>, track: Option<&TrackState>) -> Vec<f64> {
        match track {
            Some(t) => ctx
                .nodes
                .iter()
                .map(|n| predict_range(t, n.position, ctx.params.prediction_cpis, ctx.filter).max(1.0))
                .collect(),
            // No track yet: equal ranges, so only channel quality matters.
            None => vec![1.0; ctx.nodes.len()],
        }
    }

    /// Model-based SINR estimate for every node/channel pair next CPI.
    fn model_weights(&self, ctx: &PolicyContext<'_>, track: Option<&TrackState>) -> Result<WeightMatrix> {
        let means = self.model.means();
        let ranges = self.ranges_ahead(ctx, track);
        let gains = ranges
            .iter()
            .map(|&r| predicted_power(ctx.radar, r))
            .collect::<Result<Vec<_>>>()?;
        WeightMatrix::from_fn(ctx.nodes.len(), ctx.channels, WeightKind::EstimatedSinr, |m, n| {
            gains[m] * means[n]
        })
    }

    fn estimate_stats(&self, w: &WeightMatrix, items: &[Matching]) -> Result<Vec<ArmStats>> {
        items
            .iter()
            .map(|pi| {
                Ok(ArmStats {
                    visits: pi.as_slice().iter().map(|&c| self.model.count(c)).min().unwrap_or(0),
                    mean: utility(w, pi)?,
                })
            })
            .collect()
    }

    /// Candidates after the initial sweep: the estimated optimum and the best
    /// matching through every node/channel pair.
    fn candidate_matchings(w: &WeightMatrix) -> Vec<Matching> {
        let mut out = vec![max_weight_matching(w).0];
        for m in 0..w.rows() {
            for n in 0..w.cols() {
                let pi = max_weight_matching_with(w, m, n).0;
                if !out.contains(&pi) {
                    out.push(pi);
                }
            }
        }
        out
    }

    /// Absorb this CPI's reports and the fused track, and return the messages
    /// every node receives before the next CPI.
    pub fn coordinator_step(
        &mut self,
        ctx: &PolicyContext<'_>,
        reports: &[NodeReport],
        track: Option<&TrackState>,
    ) -> Result<Vec<FeedbackMessage>> {
        self.last_reports.iter_mut().for_each(|r| *r = None);
        for rep in reports {
            if rep.collided || !rep.measurement.valid {
                continue;
            }
            let Some(g) = rep.sinr_estimate else { continue };
            let p_hat = predicted_power(ctx.radar, rep.measurement.range.max(1.0))?;
            self.model.record(rep.channel, g / p_hat);
            self.last_reports[rep.node_id] = Some((rep.channel, g));
        }

        if !self.policy.is_etc_family() {
            return Ok(Vec::new());
        }

        let mut out = Vec::new();
        if self.phase != CoordinatorPhase::Committed {
            let state = self.exploration.as_mut().expect("etc family has exploration state");
            let sweep_done = state.list.advance();
            if sweep_done {
                let k = ctx.cpi + 1;
                let w = self.model_weights(ctx, track)?;
                let state = self.exploration.as_ref().expect("exploration");
                let items: Vec<Matching> = match self.phase {
                    CoordinatorPhase::InitialSweep => Self::candidate_matchings(&w),
                    _ => state.list.items().to_vec(),
                };
                let round = state.round;
                let mut candidates = ExplorationState::new(MatchingList::new(items.clone())?);
                candidates.stats = self.estimate_stats(&w, &items)?;
                candidates.round = round;
                let cap = ctx.params.max_candidates.unwrap_or(ctx.channels);
                let mut next = etc_eliminate(&candidates, ctx.params.confidence, k, Some(cap));
                if !next.converged && next.round > ctx.params.max_sweeps {
                    let best = next.list.items()[0].clone();
                    let stats = next.stats[0];
                    next = ExplorationState {
                        list: MatchingList::new(vec![best])?,
                        stats: vec![stats],
                        round: next.round,
                        converged: true,
                    };
                }
                out.push(FeedbackMessage::MatchingList(next.list.items().to_vec()));
                if next.converged {
                    self.phase = CoordinatorPhase::Committed;
                    self.committed = Some(next.list.items()[0].clone());
                    if matches!(self.policy, PolicyKind::HEtp | PolicyKind::Etp) {
                        out.push(FeedbackMessage::ChannelMetrics(self.model.metrics_db()));
                    }
                } else {
                    self.phase = CoordinatorPhase::Refining;
                }
                self.exploration = Some(next);
            }
        }

        if self.phase == CoordinatorPhase::Committed {
            match self.policy {
                PolicyKind::CEtp => {
                    let mut w = self.model_weights(ctx, track)?;
                    for (m, rep) in self.last_reports.iter().enumerate() {
                        if let Some((channel, g)) = rep {
                            w.set(m, *channel, *g);
                        }
                    }
                    out.push(FeedbackMessage::WeightMatrix(w));
                }
                PolicyKind::HEtp => {
                    let t = track.ok_or_else(|| Error::MissingFeedback {
                        policy: self.policy.label(),
                        node: 0,
                        detail: "coordinator has no target track to broadcast".into(),
                    })?;
                    let mut x = t.x;
                    for _ in 0..ctx.params.prediction_cpis {
                        x = ctx.filter.f * x;
                    }
                    out.push(FeedbackMessage::TargetState(Vec2::new(x[0], x[1])));
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Pre-drawn random matchings shared by every node.
pub fn draw_random_matchings(rng: &mut ChaCha8Rng, nodes: usize, channels: usize, len: usize) -> Result<Vec<Matching>> {
    if nodes > channels {
        return Err(Error::MatchingInfeasible { nodes, channels });
    }
    let mut pool: Vec<usize> = (0..channels).collect();
    (0..len)
        .map(|_| {
            pool.shuffle(rng);
            Matching::new(pool[..nodes].to_vec(), channels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use std::collections::HashSet;

    fn m(v: &[usize]) -> Matching {
        Matching::new(v.to_vec(), 16).unwrap()
    }

    fn with_stats(items: Vec<Matching>, stats: &[(u64, f64)]) -> ExplorationState {
        let mut s = ExplorationState::new(MatchingList::new(items).unwrap());
        s.stats = stats.iter().map(|&(visits, mean)| ArmStats { visits, mean }).collect();
        s
    }

    #[test]
    fn cyclic_initial_matchings() {
        let l = build_initial_matchings(2, 3).unwrap();
        let got: Vec<Vec<usize>> = l.items().iter().map(|p| p.as_slice().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 1], vec![1, 2], vec![2, 0]]);

        let l = build_initial_matchings(5, 8).unwrap();
        assert_eq!(l.len(), 8);
        let mut pairs = HashSet::new();
        for p in l.items() {
            assert!(p.is_injective());
            for (node, &c) in p.as_slice().iter().enumerate() {
                assert!(pairs.insert((node, c)), "pair ({node},{c}) repeated");
            }
        }
        assert_eq!(pairs.len(), 40);
        assert!(build_initial_matchings(4, 3).is_err());
    }

    #[test]
    fn elimination_separated_means() {
        // rad = c sqrt(2 ln k / n) = 0.1 with c = 0.1, n = 2 ln k.
        let k = 100;
        let n = (2.0 * (k as f64).ln()).round() as u64;
        let s = with_stats(vec![m(&[0]), m(&[1])], &[(n, 10.0), (n, 1.0)]);
        let out = etc_eliminate(&s, 0.1, k, None);
        assert_eq!(out.list.items(), &[m(&[0])]);
        assert!(out.converged);
        assert_eq!(out.round, 1);
    }

    #[test]
    fn elimination_vacuous_radius_keeps_all() {
        let s = with_stats(vec![m(&[0]), m(&[1]), m(&[2])], &[(3, 10.0), (3, 1.0), (3, -4.0)]);
        let out = etc_eliminate(&s, 1e9, 10, None);
        assert_eq!(out.list.len(), 3);
        assert!(!out.converged);
        // Unvisited arms are never eliminated.
        let s = with_stats(vec![m(&[0]), m(&[1])], &[(50, 10.0), (0, 0.0)]);
        assert_eq!(etc_eliminate(&s, 1.0, 100, None).list.len(), 2);
    }

    #[test]
    fn elimination_orders_and_caps() {
        let s = with_stats(
            vec![m(&[0]), m(&[1]), m(&[2]), m(&[3])],
            &[(1, 1.0), (1, 3.0), (1, 2.0), (1, 2.5)],
        );
        let out = etc_eliminate(&s, 1e6, 4, Some(2));
        assert_eq!(out.list.items(), &[m(&[1]), m(&[3])]);
        assert_eq!(out.stats[0].mean, 3.0);
    }

    #[test]
    fn elimination_finds_best_arm_of_synthetic_bandit() {
        let means = [1.0, 0.85, 0.7, 0.5, 0.3];
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let items: Vec<Matching> = (0..means.len()).map(|i| m(&[i])).collect();
            let mut state = ExplorationState::new(MatchingList::new(items).unwrap());
            let mut k = 0;
            while !state.converged && k < 2_000_000 {
                for _ in 0..state.list.len() {
                    let arm = state.list.current().channel(0);
                    state.record_current(means[arm] + noise.sample(&mut rng));
                    state.list.advance();
                    k += 1;
                }
                state = etc_eliminate(&state, 0.5, k, None);
            }
            if state.converged && state.list.current().channel(0) == 0 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "best arm found in {hits}/100 runs");
    }

    #[test]
    fn target_reward_matrix() {
        let g = vec![vec![10.0, 20.0, 0.0], vec![10.0, 20.0, 0.0]];
        let equal = build_target_reward_matrix(&g, &[1000.0, 1000.0]).unwrap();
        let flat = WeightMatrix::from_rows(
            &g.iter().map(|r| r.iter().map(|v| from_db(*v)).collect()).collect::<Vec<_>>(),
            WeightKind::TargetBased,
        )
        .unwrap();
        assert_eq!(max_weight_matching(&equal).0, max_weight_matching(&flat).0);

        let doubled = build_target_reward_matrix(&g, &[2000.0, 1000.0]).unwrap();
        for n in 0..3 {
            assert!((doubled.get(0, n) * 16.0 / equal.get(0, n) - 1.0).abs() < 1e-12);
            assert_eq!(doubled.get(1, n), equal.get(1, n));
        }
        assert!(build_target_reward_matrix(&g, &[0.0, 1.0]).is_err());
        assert!(build_target_reward_matrix(&g, &[1.0]).is_err());
    }

    #[test]
    fn feedback_value_counts() {
        let list = FeedbackMessage::MatchingList(vec![m(&[0, 1, 2, 3, 4]); 3]);
        assert_eq!(list.value_count(5), 15);
        let w = WeightMatrix::new(5, 8, vec![1.0; 40], WeightKind::EstimatedSinr).unwrap();
        assert_eq!(FeedbackMessage::WeightMatrix(w.clone()).value_count(5), 40);
        assert_eq!(FeedbackMessage::TargetState(Vec2::ZERO).value_count(5), 2);
        assert_eq!(feedback_values(&[FeedbackMessage::WeightMatrix(w)], 5), 200);
        assert_eq!(feedback_values(&[FeedbackMessage::TargetState(Vec2::ZERO)], 5), 10);
        assert_eq!(feedback_values(&[], 5), 0);
    }

    #[test]
    fn policy_labels_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.label().parse::<PolicyKind>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.label()));
        }
        assert!("ucb".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn random_matchings_are_valid_and_reproducible() {
        let a = draw_random_matchings(&mut ChaCha8Rng::seed_from_u64(3), 5, 8, 64).unwrap();
        let b = draw_random_matchings(&mut ChaCha8Rng::seed_from_u64(3), 5, 8, 64).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.len() == 5 && p.is_injective()));
        assert!(a.iter().collect::<HashSet<_>>().len() > 32);
    }

    #[test]
    fn channel_model_means() {
        let mut cm = ChannelModel::new(3);
        cm.record(0, 2.0);
        cm.record(0, 4.0);
        cm.record(2, 10.0);
        assert_eq!(cm.means(), vec![3.0, 10.0, 10.0]);
        assert_eq!(cm.count(1), 0);
        assert!((cm.metrics_db()[2] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mc_seats_after_collision_free_cpi() {
        let mut st = McState::new(4, 2);
        st.reward_sums = vec![1.0, 5.0, 3.0, 0.5];
        st.reward_counts = vec![1; 4];
        assert_eq!(st.top_channels(2), vec![1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let meas = Measurement {
            node_id: 0,
            cpi: 0,
            range: 1.0,
            radial_velocity: 0.0,
            angle: 0.0,
            sigmas: crate::rfmodel::MeasurementSigmas {
                range: 1.0,
                radial_velocity: 1.0,
                angle: 1.0,
            },
            valid: true,
        };
        let report = |st: &mut McState, rng: &mut ChaCha8Rng, collided: bool| {
            let c = st.choose(rng, 2);
            st.observe(&NodeReport {
                node_id: 0,
                channel: c,
                collided,
                sinr_estimate: (!collided).then_some(1.0),
                measurement: meas,
            });
            c
        };
        report(&mut st, &mut rng, false);
        report(&mut st, &mut rng, false);
        assert_eq!(st.phase, McPhase::Explore);
        let c = report(&mut st, &mut rng, true);
        assert_eq!(st.phase, McPhase::Seat);
        assert!(st.seated.is_none() && [1, 2].contains(&c));
        let c = report(&mut st, &mut rng, false);
        assert_eq!(st.seated, Some(c));
        for _ in 0..10 {
            assert_eq!(report(&mut st, &mut rng, true), c);
        }
    }
}
