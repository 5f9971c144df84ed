//! Slotted Monte Carlo engine.
//!
//! Each replication is single threaded and fully determined by its seed.
//! Random draws follow a fixed pattern per slot (two relay coins, then one
//! coin per user, then the channel draws for the slot's transmission set), so
//! two systems run from the same seed consume identical randomness for as long
//! as their transmission sets agree.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{self, ChannelError, Payload, SlotOutcome, TransmissionSet};
use crate::model::{validate, Channel, NodeId, Packet, ScenarioConfig, Strategy, ValidationErrors, RELAYS};
use crate::stats::{self, Estimate, StabilityVerdict, Trend};

/// Batches used for the queue-length trend test.
pub const TREND_BATCHES: usize = 40;

/// Below this many delivered packets (over all replications) the mean delay
/// is reported as missing.
pub const MIN_DELAY_SAMPLES: u64 = 200;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("sweep point N={n_users}, gamma={gamma:?}: {source}")]
    Point {
        n_users: usize,
        gamma: Option<f64>,
        #[source]
        source: Box<SimError>,
    },
    #[error("{0}")]
    Resize(#[from] crate::model::ModelError),
    #[error("gamma values only apply to the MPR channel")]
    GammaOnCollision,
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a list of salts.
pub fn derive_seed(seed: u64, salts: &[u64]) -> u64 {
    salts.iter().fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

/// Seed of replication `rep`.
pub fn replication_seed(seed: u64, rep: u32) -> u64 {
    derive_seed(seed, &[u64::from(rep)])
}

#[derive(Debug, Clone, Default)]
pub struct RelayState {
    pub queue: VecDeque<Packet>,
    /// Copies also held by the other relay (MPR simple forwarding).
    shared: VecDeque<bool>,
    pub attempts_this_slot: bool,
}

impl RelayState {
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn push(&mut self, packet: Packet, shared: bool) {
        self.queue.push_back(packet);
        self.shared.push_back(shared);
    }

    fn pop(&mut self) -> Option<(Packet, bool)> {
        Some((self.queue.pop_front()?, self.shared.pop_front()?))
    }

    fn remove(&mut self, id: u64) -> bool {
        match self.queue.iter().position(|p| p.id == id) {
            Some(k) => {
                self.queue.remove(k);
                self.shared.remove(k);
                true
            }
            None => false,
        }
    }
}

/// One slot of a traced run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    pub slot: u64,
    pub transmitters: Vec<NodeId>,
    /// Relays that transmitted a dummy packet.
    pub dummies: Vec<usize>,
    pub outcome: SlotOutcome,
    /// Queue lengths at the start of the slot.
    pub queue_len: [usize; RELAYS],
    /// `(packet id, delay in slots)` of first deliveries.
    pub deliveries: Vec<(u64, u64)>,
    /// `(packet id, relay)` for every copy stored this slot.
    pub stored: Vec<(u64, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimTrace {
    pub slots: Vec<SlotRecord>,
}

/// Raw metrics of one replication, measured after warmup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationMetrics {
    pub slots: u64,
    pub delivered_per_user: Vec<u64>,
    pub delay_sum: u64,
    pub delay_count: u64,
    pub queue_sum: [u64; RELAYS],
    pub empty_slots: [u64; RELAYS],
    pub arrivals: [u64; RELAYS],
    pub departures: [u64; RELAYS],
    /// Copies dropped because the other relay delivered the packet.
    pub purged: [u64; RELAYS],
    /// Mean queue length per trend batch.
    pub batch_means: Vec<[f64; RELAYS]>,
    /// Packets generated over the whole run (including warmup).
    pub generated: u64,
}

impl ReplicationMetrics {
    fn new(n_users: usize) -> Self {
        ReplicationMetrics {
            slots: 0,
            delivered_per_user: vec![0; n_users],
            delay_sum: 0,
            delay_count: 0,
            queue_sum: [0; RELAYS],
            empty_slots: [0; RELAYS],
            arrivals: [0; RELAYS],
            departures: [0; RELAYS],
            purged: [0; RELAYS],
            batch_means: Vec::new(),
            generated: 0,
        }
    }

    pub fn throughput(&self, user: usize) -> f64 {
        self.delivered_per_user[user] as f64 / self.slots as f64
    }

    pub fn aggregate_throughput(&self) -> f64 {
        self.delivered_per_user.iter().sum::<u64>() as f64 / self.slots as f64
    }

    pub fn lambda(&self, relay: usize) -> f64 {
        self.arrivals[relay] as f64 / self.slots as f64
    }

    /// Departures per slot in which the queue was non-empty.
    pub fn mu(&self, relay: usize) -> f64 {
        let busy = self.slots - self.empty_slots[relay];
        if busy == 0 {
            f64::NAN
        } else {
            self.departures[relay] as f64 / busy as f64
        }
    }

    pub fn p_empty(&self, relay: usize) -> f64 {
        self.empty_slots[relay] as f64 / self.slots as f64
    }

    pub fn mean_queue(&self, relay: usize) -> f64 {
        self.queue_sum[relay] as f64 / self.slots as f64
    }
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    strategy: Strategy,
    rng: ChaCha8Rng,
    users: Vec<Packet>,
    relays: [RelayState; RELAYS],
    next_id: u64,
    slot: u64,
    tx: TransmissionSet,
    metrics: ReplicationMetrics,
    batch_len: u64,
    batch_acc: [u64; RELAYS],
    batch_fill: u64,
}

impl<'a> Engine<'a> {
    fn new(config: &'a ScenarioConfig, seed: u64) -> Self {
        let n = config.channel.n_users();
        let users = (0..n).map(|i| Packet::new(i as u64, i, 0)).collect();
        let window = config.horizon_slots - config.warmup_slots;
        Engine {
            config,
            strategy: config.strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            users,
            relays: Default::default(),
            next_id: n as u64,
            slot: 0,
            tx: TransmissionSet::new(),
            metrics: ReplicationMetrics {
                generated: n as u64,
                ..ReplicationMetrics::new(n)
            },
            batch_len: (window / TREND_BATCHES as u64).max(1),
            batch_acc: [0; RELAYS],
            batch_fill: 0,
        }
    }

    fn q_relay(&self) -> [f64; RELAYS] {
        match &self.config.channel {
            Channel::Collision(p) => p.q_relay,
            Channel::Mpr(p) => p.q_relay,
        }
    }

    fn q_user(&self) -> &[f64] {
        match &self.config.channel {
            Channel::Collision(p) => &p.q_user,
            Channel::Mpr(p) => &p.q_user,
        }
    }

    fn coin(&mut self) -> bool {
        self.rng.random::<f64>() < 0.5
    }

    fn step(&mut self, trace: Option<&mut SimTrace>) -> Result<(), SimError> {
        let t = self.slot;
        let measuring = t >= self.config.warmup_slots;
        let queue_len = [self.relays[0].len(), self.relays[1].len()];
        if measuring {
            self.observe_queues(queue_len);
        }

        // Access decisions.
        self.tx.clear();
        let q_relay = self.q_relay();
        let relay_coins: [f64; RELAYS] = [self.rng.random(), self.rng.random()];
        let mut dummies = Vec::new();
        for j in 0..RELAYS {
            let relay = &mut self.relays[j];
            relay.attempts_this_slot = false;
            if !self.strategy.relay_present(j) || relay_coins[j] >= q_relay[j] {
                continue;
            }
            if let Some(&front) = relay.queue.front() {
                relay.attempts_this_slot = true;
                self.tx.push(NodeId::Relay(j), Payload::Data(front))?;
            } else if self.strategy.sends_dummies(j) {
                relay.attempts_this_slot = true;
                self.tx.push(NodeId::Relay(j), Payload::Dummy)?;
                dummies.push(j);
            }
        }
        let n = self.users.len();
        for i in 0..n {
            let coin: f64 = self.rng.random();
            if coin < self.q_user()[i] {
                let packet = &mut self.users[i];
                packet.first_tx_slot.get_or_insert(t);
                let packet = *packet;
                self.tx.push(NodeId::User(i), Payload::Data(packet))?;
            }
        }

        let outcome = match &self.config.channel {
            Channel::Collision(p) => channel::resolve_slot_collision(&self.tx, p, self.strategy, &mut self.rng)?,
            Channel::Mpr(p) => channel::resolve_slot_mpr(&self.tx, p, self.strategy, &mut self.rng)?,
        };

        // Deliveries. Relays that delivered drop their head-of-line copy; the
        // other relay purges any copy of a delivered packet.
        let mut done = vec![false; n];
        let mut deliveries = Vec::new();
        let mut served = [false; RELAYS];
        for entry in self.tx.iter() {
            let Payload::Data(packet) = entry.payload else { continue };
            if !outcome.delivered_to_dest.contains(&packet.id) {
                continue;
            }
            match entry.transmitter {
                NodeId::User(i) => done[i] = true,
                NodeId::Relay(j) => served[j] = true,
                NodeId::Destination => {}
            }
            if !deliveries.iter().any(|&(id, _)| id == packet.id) {
                let first = packet.first_tx_slot.expect("delivered packets were transmitted");
                deliveries.push((packet.id, t - first + 1));
                if measuring {
                    self.metrics.delivered_per_user[packet.user()] += 1;
                    self.metrics.delay_sum += t - first + 1;
                    self.metrics.delay_count += 1;
                }
            }
        }
        // Pop both heads before purging so a copy delivered by both relays in
        // the same slot counts as two departures rather than a purge.
        let popped: Vec<(usize, Packet, bool)> = (0..RELAYS)
            .filter(|&j| served[j])
            .map(|j| {
                let (packet, shared) = self.relays[j].pop().expect("served relay had a packet");
                (j, packet, shared)
            })
            .collect();
        for (j, packet, shared) in popped {
            if measuring {
                self.metrics.departures[j] += 1;
            }
            let other = 1 - j;
            if shared && self.relays[other].remove(packet.id) && measuring {
                self.metrics.purged[other] += 1;
            }
        }

        // Relay storage of user packets the destination missed.
        let mut stored = Vec::new();
        let user_packets: Vec<(usize, Packet)> = self
            .tx
            .iter()
            .filter_map(|e| match (e.transmitter, e.payload) {
                (NodeId::User(i), Payload::Data(p)) => Some((i, p)),
                _ => None,
            })
            .collect();
        for (i, packet) in user_packets {
            let heard = [0, 1].map(|j| outcome.decoded_by_relay[j].contains(&packet.id));
            let keep = match heard {
                [false, false] => continue,
                [true, false] => [true, false],
                [false, true] => [false, true],
                [true, true] => self.both_decoded(i, queue_len),
            };
            let shared = keep[0] && keep[1];
            for j in 0..RELAYS {
                if keep[j] {
                    self.relays[j].push(packet, shared);
                    stored.push((packet.id, j));
                    if measuring {
                        self.metrics.arrivals[j] += 1;
                    }
                }
            }
            done[i] = true;
        }

        // Saturated sources move on to a fresh packet.
        for (i, &finished) in done.iter().enumerate() {
            if finished {
                self.users[i] = Packet::new(self.next_id, i, t + 1);
                self.next_id += 1;
                self.metrics.generated += 1;
            }
        }

        if let Some(trace) = trace {
            trace.slots.push(SlotRecord {
                slot: t,
                transmitters: self.tx.transmitters(),
                dummies,
                outcome,
                queue_len,
                deliveries,
                stored,
            });
        }
        self.slot += 1;
        Ok(())
    }

    /// Which relays keep a packet that both decoded.
    fn both_decoded(&mut self, user: usize, queue_len: [usize; RELAYS]) -> [bool; RELAYS] {
        let coin = |e: &mut Self| if e.coin() { [true, false] } else { [false, true] };
        let mpr = matches!(self.config.channel, Channel::Mpr(_));
        match self.strategy {
            Strategy::TwoRelaySimple if mpr => [true, true],
            Strategy::TwoRelaySmallerQueue => match queue_len[0].cmp(&queue_len[1]) {
                std::cmp::Ordering::Less => [true, false],
                std::cmp::Ordering::Greater => [false, true],
                std::cmp::Ordering::Equal => coin(self),
            },
            Strategy::TwoRelayClustered => {
                let k = match &self.config.channel {
                    Channel::Collision(p) => p.cluster(user),
                    Channel::Mpr(p) => p.cluster_of.as_ref().map(|c| c[user]),
                };
                match k {
                    Some(0) => [true, false],
                    Some(_) => [false, true],
                    None => coin(self),
                }
            }
            _ => coin(self),
        }
    }

    fn observe_queues(&mut self, queue_len: [usize; RELAYS]) {
        let m = &mut self.metrics;
        m.slots += 1;
        for j in 0..RELAYS {
            m.queue_sum[j] += queue_len[j] as u64;
            if queue_len[j] == 0 {
                m.empty_slots[j] += 1;
            }
            self.batch_acc[j] += queue_len[j] as u64;
        }
        self.batch_fill += 1;
        if self.batch_fill == self.batch_len {
            let len = self.batch_len as f64;
            m.batch_means
                .push([self.batch_acc[0] as f64 / len, self.batch_acc[1] as f64 / len]);
            self.batch_acc = [0; RELAYS];
            self.batch_fill = 0;
        }
    }
}

/// Runs replication `rep` of `config`, optionally recording every slot.
pub fn run_replication(
    config: &ScenarioConfig,
    rep: u32,
    traced: bool,
) -> Result<(ReplicationMetrics, Option<SimTrace>), SimError> {
    validate(config)?;
    run_seeded(config, replication_seed(config.seed, rep), traced)
}

fn run_seeded(
    config: &ScenarioConfig,
    seed: u64,
    traced: bool,
) -> Result<(ReplicationMetrics, Option<SimTrace>), SimError> {
    let mut engine = Engine::new(config, seed);
    let mut trace = traced.then(SimTrace::default);
    for _ in 0..config.horizon_slots {
        engine.step(trace.as_mut())?;
    }
    Ok((engine.metrics, trace))
}

/// Identity of the scenario a report belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub channel: &'static str,
    pub strategy: Strategy,
    pub n_users: usize,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub slots: u64,
    pub reps: u32,
}

impl ReportMeta {
    pub fn of(config: &ScenarioConfig) -> Self {
        ReportMeta {
            channel: config.channel.name(),
            strategy: config.strategy,
            n_users: config.channel.n_users(),
            gamma: config.channel.gamma(),
            seed: config.seed,
            slots: config.horizon_slots,
            reps: config.replications,
        }
    }
}

/// Replication-averaged metrics with 95% confidence half-widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub throughput_per_user: Vec<Estimate>,
    pub aggregate_throughput: Estimate,
    pub mean_queue: [Estimate; RELAYS],
    /// `None` when too few packets were delivered for a meaningful mean.
    pub mean_delay: Option<Estimate>,
    pub delay_samples: u64,
    pub empirical_lambda: [Estimate; RELAYS],
    pub empirical_mu: [Estimate; RELAYS],
    pub empirical_p_empty: [Estimate; RELAYS],
    pub stability_verdict: [StabilityVerdict; RELAYS],
}

impl MetricsReport {
    /// Average of the per-user throughputs.
    pub fn mean_user_throughput(&self) -> Estimate {
        let n = self.throughput_per_user.len() as f64;
        Estimate {
            mean: self.aggregate_throughput.mean / n,
            ci_halfwidth: self.aggregate_throughput.ci_halfwidth / n,
        }
    }

    fn from_replications(config: &ScenarioConfig, reps: &[ReplicationMetrics]) -> Self {
        let n = config.channel.n_users();
        let est = |f: &dyn Fn(&ReplicationMetrics) -> f64| Estimate::from_samples(reps.iter().map(f));
        let per_relay = |f: &dyn Fn(&ReplicationMetrics, usize) -> f64| [0, 1].map(|j| est(&|r| f(r, j)));

        let delay_samples: u64 = reps.iter().map(|r| r.delay_count).sum();
        let mean_delay = (delay_samples >= MIN_DELAY_SAMPLES).then(|| {
            let pooled = reps.iter().map(|r| r.delay_sum).sum::<u64>() as f64 / delay_samples as f64;
            let per_rep = Estimate::from_samples(
                reps.iter()
                    .filter(|r| r.delay_count > 0)
                    .map(|r| r.delay_sum as f64 / r.delay_count as f64),
            );
            Estimate {
                mean: pooled,
                ci_halfwidth: per_rep.ci_halfwidth,
            }
        });

        let window = config.horizon_slots - config.warmup_slots;
        let stability_verdict = [0, 1].map(|j| {
            if !config.strategy.relay_present(j) {
                return StabilityVerdict::Stable;
            }
            let series = averaged_batches(reps, j);
            stats::queue_trend(&series, window).verdict
        });

        MetricsReport {
            meta: ReportMeta::of(config),
            throughput_per_user: (0..n).map(|i| est(&|r| r.throughput(i))).collect(),
            aggregate_throughput: est(&|r| r.aggregate_throughput()),
            mean_queue: per_relay(&|r, j| r.mean_queue(j)),
            mean_delay,
            delay_samples,
            empirical_lambda: per_relay(&|r, j| r.lambda(j)),
            empirical_mu: per_relay(&|r, j| r.mu(j)),
            empirical_p_empty: per_relay(&|r, j| r.p_empty(j)),
            stability_verdict,
        }
    }
}

fn averaged_batches(reps: &[ReplicationMetrics], relay: usize) -> Vec<f64> {
    let len = reps.iter().map(|r| r.batch_means.len()).min().unwrap_or(0);
    (0..len)
        .map(|b| reps.iter().map(|r| r.batch_means[b][relay]).sum::<f64>() / reps.len() as f64)
        .collect()
}

/// Runs every replication of `config` and aggregates the metrics.
pub fn run(config: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    validate(config)?;
    let reps = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_seeded(config, replication_seed(config.seed, rep), false).map(|(m, _)| m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_replications(config, &reps))
}

/// Outcome of an empirical stability check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdicts: [StabilityVerdict; RELAYS],
    pub trends: [Trend; RELAYS],
    pub slots: u64,
}

/// Runs one long replication (`horizon_slots * replications` slots) and
/// classifies each relay queue by the trend of its batch-mean length.
pub fn stability_probe(config: &ScenarioConfig) -> Result<StabilityReport, SimError> {
    validate(config)?;
    let mut long = config.clone();
    long.horizon_slots = config.horizon_slots * u64::from(config.replications);
    long.replications = 1;
    let (metrics, _) = run_seeded(&long, replication_seed(config.seed, 0), false)?;
    let window = long.horizon_slots - long.warmup_slots;
    let trends = [0, 1].map(|j| {
        let series: Vec<f64> = metrics.batch_means.iter().map(|b| b[j]).collect();
        stats::queue_trend(&series, window)
    });
    Ok(StabilityReport {
        verdicts: [trends[0].verdict, trends[1].verdict],
        trends,
        slots: long.horizon_slots,
    })
}

/// Seed of one sweep point.
pub fn point_seed(base: u64, n_users: usize, gamma: Option<f64>, strategy: Strategy) -> u64 {
    let gamma_bits = gamma.map_or(u64::MAX, f64::to_bits);
    derive_seed(base, &[n_users as u64, gamma_bits, strategy as u64])
}

/// Configuration of one sweep point: `base` resized to `n_users` users, with
/// the SINR threshold set to `gamma` when given.
pub fn sweep_point(base: &ScenarioConfig, n_users: usize, gamma: Option<f64>) -> Result<ScenarioConfig, SimError> {
    let mut config = base.clone();
    config.channel = match (&base.channel, gamma) {
        (Channel::Collision(_), Some(_)) => return Err(SimError::GammaOnCollision),
        (Channel::Collision(p), None) => Channel::Collision(p.resized(n_users)?),
        (Channel::Mpr(p), g) => {
            let mut p = p.resized(n_users)?;
            if let Some(g) = g {
                p.set_gamma(g);
            }
            Channel::Mpr(p)
        }
    };
    let effective_gamma = gamma.or_else(|| config.channel.gamma());
    config.seed = point_seed(base.seed, n_users, effective_gamma, base.strategy);
    Ok(config)
}

/// Runs `base` over the grid `n_values x gamma_values` (gamma outer), in
/// grid order regardless of completion order.
pub fn sweep(
    base: &ScenarioConfig,
    n_values: &[usize],
    gamma_values: Option<&[f64]>,
) -> Result<Vec<MetricsReport>, SimError> {
    let gammas: Vec<Option<f64>> = match gamma_values {
        Some(g) => g.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let grid: Vec<(usize, Option<f64>)> = gammas
        .iter()
        .flat_map(|&g| n_values.iter().map(move |&n| (n, g)))
        .collect();
    grid.par_iter()
        .map(|&(n, g)| {
            sweep_point(base, n, g)
                .and_then(|c| run(&c))
                .map_err(|e| SimError::Point {
                    n_users: n,
                    gamma: g,
                    source: Box::new(e),
                })
        })
        .collect()
}
