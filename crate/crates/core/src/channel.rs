//! Per-slot reception for the collision and MPR channels, and the two
//! closed-form link success probabilities.
//!
//! Both resolvers report raw decode sets. Choosing which relay keeps a packet
//! decoded by both is queue-state dependent and lives in the simulator.

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::model::{CollisionParams, MprParams, NodeId, Packet, Strategy, DEST, RECEIVERS, RELAYS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("{0} transmits twice in one slot")]
    DuplicateTransmitter(NodeId),
    #[error("receiver {0} is transmitting")]
    ReceiverTransmitting(NodeId),
    #[error("transmitter {0} is not in the active set")]
    NotActive(NodeId),
    #[error("{0} is not a valid {1} for this network")]
    UnknownNode(NodeId, &'static str),
    #[error("strategy/channel mismatch: {0} on the {1} channel")]
    StrategyMismatch(Strategy, &'static str),
    #[error("clustered resolution requires a cluster assignment")]
    MissingClusters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Data(Packet),
    /// Occupies the channel; never stored, delivered or counted.
    Dummy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub transmitter: NodeId,
    pub payload: Payload,
}

impl Transmission {
    fn packet_id(&self) -> Option<u64> {
        match self.payload {
            Payload::Data(p) => Some(p.id),
            Payload::Dummy => None,
        }
    }
}

/// Nodes transmitting in one slot, at most one entry per transmitter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransmissionSet {
    entries: Vec<Transmission>,
}

impl TransmissionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, transmitter: NodeId, payload: Payload) -> Result<(), ChannelError> {
        if self.contains(transmitter) {
            return Err(ChannelError::DuplicateTransmitter(transmitter));
        }
        self.entries.push(Transmission { transmitter, payload });
        Ok(())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.iter().any(|t| t.transmitter == node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Transmission> {
        self.entries.iter()
    }

    pub fn transmitters(&self) -> Vec<NodeId> {
        self.entries.iter().map(|t| t.transmitter).collect()
    }
}

impl<'a> IntoIterator for &'a TransmissionSet {
    type Item = &'a Transmission;
    type IntoIter = std::slice::Iter<'a, Transmission>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// What every receiver decoded in one slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotOutcome {
    pub delivered_to_dest: Vec<u64>,
    /// User packets decoded by each relay and not by the destination.
    pub decoded_by_relay: [Vec<u64>; RELAYS],
    /// Two or more transmissions met at the destination (collision channel).
    pub collided: bool,
}

impl SlotOutcome {
    pub fn is_empty(&self) -> bool {
        self.delivered_to_dest.is_empty() && self.decoded_by_relay.iter().all(Vec::is_empty)
    }

    /// Drops relay copies of packets the destination acknowledged.
    fn suppress_acked(&mut self) {
        if self.delivered_to_dest.is_empty() {
            return;
        }
        let delivered = &self.delivered_to_dest;
        for set in &mut self.decoded_by_relay {
            set.retain(|id| !delivered.contains(id));
        }
    }
}

/// Rayleigh-fading success probability of an isolated link:
/// `exp(-gamma * noise * distance^pathloss / tx_power)`.
pub fn collision_link_success(
    gamma: f64,
    noise: f64,
    distance: f64,
    pathloss: f64,
    tx_power: f64,
) -> Result<f64, ChannelError> {
    if !(tx_power > 0.0) {
        return Err(ChannelError::NonPositive("tx_power", tx_power));
    }
    if !(distance > 0.0) {
        return Err(ChannelError::NonPositive("distance", distance));
    }
    if gamma < 0.0 {
        return Err(ChannelError::NonPositive("gamma", gamma));
    }
    if noise < 0.0 {
        return Err(ChannelError::NonPositive("noise", noise));
    }
    Ok((-gamma * noise * distance.powf(pathloss) / tx_power).exp())
}

/// Average probability that `rx` decodes `tx` while every node in `active`
/// transmits, averaged over independent exponential power fading.
pub fn mpr_success_closed_form(
    tx: NodeId,
    rx: NodeId,
    active: &[NodeId],
    params: &MprParams,
) -> Result<f64, ChannelError> {
    if !active.contains(&tx) {
        return Err(ChannelError::NotActive(tx));
    }
    if active.contains(&rx) {
        return Err(ChannelError::ReceiverTransmitting(rx));
    }
    let col = MprParams::rx_col(rx).ok_or(ChannelError::UnknownNode(rx, "receiver"))?;
    let row = params.tx_row(tx).ok_or(ChannelError::UnknownNode(tx, "transmitter"))?;
    let gamma = params.sinr_threshold[col];
    let signal = params.fading_param[row][col] * params.gain(row, col);

    let mut p = (-gamma * params.noise[col] / signal).exp();
    for &other in active {
        if other == tx {
            continue;
        }
        let k = params
            .tx_row(other)
            .ok_or(ChannelError::UnknownNode(other, "transmitter"))?;
        let interference = params.fading_param[k][col] * params.gain(k, col);
        p /= 1.0 + gamma * interference / signal;
    }
    Ok(p)
}

#[inline]
fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Resolves one slot of the collision channel.
///
/// Each transmitting user draws the state of its link to the destination and
/// of its links to the present relays. The destination decodes a user only if
/// that link is up and nothing else reached it; a relay may keep a packet only
/// when the user's destination link was down. Clustered networks (strategy
/// [`Strategy::TwoRelayClustered`]) only collide users at a relay when they
/// share a cluster, and a relay's transmission collides only with the other
/// relay.
pub fn resolve_slot_collision<R: Rng + ?Sized>(
    tx_set: &TransmissionSet,
    params: &CollisionParams,
    strategy: Strategy,
    rng: &mut R,
) -> Result<SlotOutcome, ChannelError> {
    if strategy == Strategy::TwoRelaySmallerQueue {
        return Err(ChannelError::StrategyMismatch(strategy, "collision"));
    }
    for t in tx_set {
        let ok = match t.transmitter {
            NodeId::User(i) => i < params.n_users,
            NodeId::Relay(j) => strategy.relay_present(j),
            NodeId::Destination => false,
        };
        if !ok {
            return Err(ChannelError::UnknownNode(t.transmitter, "transmitter"));
        }
    }
    if strategy == Strategy::TwoRelayClustered {
        let clusters = params.cluster_of.as_deref().ok_or(ChannelError::MissingClusters)?;
        Ok(resolve_clustered(tx_set, params, clusters, rng))
    } else {
        Ok(resolve_shared(tx_set, params, strategy, rng))
    }
}

fn resolve_shared<R: Rng + ?Sized>(
    tx_set: &TransmissionSet,
    params: &CollisionParams,
    strategy: Strategy,
    rng: &mut R,
) -> SlotOutcome {
    let mut out = SlotOutcome::default();
    let t = match tx_set.len() {
        0 => return out,
        1 => tx_set.entries[0],
        _ => {
            out.collided = true;
            return out;
        }
    };
    match (t.transmitter, t.payload) {
        (NodeId::User(i), Payload::Data(packet)) => {
            if bernoulli(rng, params.p_user_dest[i]) {
                out.delivered_to_dest.push(packet.id);
            } else {
                for j in 0..RELAYS {
                    if strategy.relay_present(j) && bernoulli(rng, params.p_user_relay[i][j]) {
                        out.decoded_by_relay[j].push(packet.id);
                    }
                }
            }
        }
        (NodeId::Relay(j), Payload::Data(packet)) => {
            if bernoulli(rng, params.p_relay_dest[j]) {
                out.delivered_to_dest.push(packet.id);
            }
        }
        _ => {}
    }
    out
}

fn resolve_clustered<R: Rng + ?Sized>(
    tx_set: &TransmissionSet,
    params: &CollisionParams,
    clusters: &[usize],
    rng: &mut R,
) -> SlotOutcome {
    let mut out = SlotOutcome::default();
    let mut relays_on = [false; RELAYS];
    let mut users_per_cluster = [0usize; RELAYS];
    for t in tx_set {
        match t.transmitter {
            NodeId::Relay(j) => relays_on[j] = true,
            NodeId::User(i) => users_per_cluster[clusters[i]] += 1,
            NodeId::Destination => {}
        }
    }
    let both_relays = relays_on.iter().all(|&b| b);
    out.collided = tx_set.len() >= 2;
    let dest_clear = tx_set.len() == 1;

    for t in tx_set {
        match (t.transmitter, t.payload) {
            (NodeId::User(i), Payload::Data(packet)) => {
                let k = clusters[i];
                let dest_link = bernoulli(rng, params.p_user_dest[i]);
                let relay_link = bernoulli(rng, params.p_user_relay[i][k]);
                if dest_link {
                    if dest_clear {
                        out.delivered_to_dest.push(packet.id);
                    }
                } else if relay_link && !relays_on[k] && users_per_cluster[k] == 1 {
                    out.decoded_by_relay[k].push(packet.id);
                }
            }
            (NodeId::Relay(j), payload) => {
                let ok = bernoulli(rng, params.p_relay_dest[j]);
                if let (true, false, Payload::Data(packet)) = (ok, both_relays, payload) {
                    out.delivered_to_dest.push(packet.id);
                }
            }
            _ => {}
        }
    }
    out
}

/// Resolves one slot of the SINR threshold channel.
///
/// Every listening receiver (the destination and each present, silent relay)
/// draws an independent exponential fading coefficient per transmitter and
/// decodes each packet whose SINR reaches its threshold. Relays only keep user
/// packets, and never those the destination decoded.
pub fn resolve_slot_mpr<R: Rng + ?Sized>(
    tx_set: &TransmissionSet,
    params: &MprParams,
    strategy: Strategy,
    rng: &mut R,
) -> Result<SlotOutcome, ChannelError> {
    if matches!(strategy, Strategy::DominantS1 | Strategy::DominantS2) {
        return Err(ChannelError::StrategyMismatch(strategy, "mpr"));
    }
    let mut rows = Vec::with_capacity(tx_set.len());
    for t in tx_set {
        let present = match t.transmitter {
            NodeId::Relay(j) => strategy.relay_present(j),
            _ => true,
        };
        match params.tx_row(t.transmitter) {
            Some(row) if present => rows.push(row),
            _ => return Err(ChannelError::UnknownNode(t.transmitter, "transmitter")),
        }
    }

    let mut out = SlotOutcome::default();
    if tx_set.is_empty() {
        return Ok(out);
    }
    let mut received = vec![0.0; rows.len()];
    for col in 0..RECEIVERS {
        let listening = if col == DEST {
            true
        } else {
            strategy.relay_present(col) && !tx_set.contains(NodeId::Relay(col))
        };
        if !listening {
            continue;
        }
        let mut total = params.noise[col];
        for (slot, &row) in received.iter_mut().zip(&rows) {
            let fade: f64 = rng.sample(Exp1);
            *slot = fade * params.fading_param[row][col] * params.gain(row, col);
            total += *slot;
        }
        let gamma = params.sinr_threshold[col];
        for (t, &power) in tx_set.iter().zip(&received) {
            let Some(id) = t.packet_id() else { continue };
            if col != DEST && !matches!(t.transmitter, NodeId::User(_)) {
                continue;
            }
            if power >= gamma * (total - power) {
                if col == DEST {
                    out.delivered_to_dest.push(id);
                } else {
                    out.decoded_by_relay[col].push(id);
                }
            }
        }
    }
    out.suppress_acked();
    Ok(out)
}
