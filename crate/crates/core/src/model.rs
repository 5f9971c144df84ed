//! Domain types: nodes, channel parameter sets, strategies and scenarios.
//!
//! Indices are zero-based throughout: users are `0..n_users`, relays are
//! `0` and `1`, and cluster `k` is served by relay `k`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of relays in the network.
pub const RELAYS: usize = 2;

/// Receiver slots used by per-link MPR tables: relay 0, relay 1, destination.
pub const RECEIVERS: usize = RELAYS + 1;

/// Column of the destination in per-link MPR tables.
pub const DEST: usize = RELAYS;

/// Default receiver noise power in watts.
pub const DEFAULT_NOISE_W: f64 = 1e-11;

/// Default SINR threshold used by [`reference_topology`].
pub const DEFAULT_GAMMA: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    User(usize),
    Relay(usize),
    Destination,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::User(i) => write!(f, "user{}", i),
            NodeId::Relay(j) => write!(f, "relay{}", j),
            NodeId::Destination => write!(f, "dest"),
        }
    }
}

/// A user packet. Saturated sources always hold exactly one head-of-line packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub source: NodeId,
    pub created_slot: u64,
    pub first_tx_slot: Option<u64>,
}

impl Packet {
    pub fn new(id: u64, user: usize, created_slot: u64) -> Self {
        Packet {
            id,
            source: NodeId::User(user),
            created_slot,
            first_tx_slot: None,
        }
    }

    /// Index of the originating user.
    pub fn user(&self) -> usize {
        match self.source {
            NodeId::User(i) => i,
            other => panic!("packet {} originates at {}", self.id, other),
        }
    }
}

/// Parameters of the collision channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionParams {
    pub n_users: usize,
    pub q_user: Vec<f64>,
    pub q_relay: [f64; RELAYS],
    pub p_user_dest: Vec<f64>,
    pub p_user_relay: Vec<[f64; RELAYS]>,
    pub p_relay_dest: [f64; RELAYS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_of: Option<Vec<usize>>,
}

impl CollisionParams {
    /// Homogeneous network: every user shares the same probabilities.
    pub fn homogeneous(
        n_users: usize,
        q_user: f64,
        q_relay: f64,
        p_user_dest: f64,
        p_user_relay: f64,
        p_relay_dest: f64,
    ) -> Self {
        CollisionParams {
            n_users,
            q_user: vec![q_user; n_users],
            q_relay: [q_relay; RELAYS],
            p_user_dest: vec![p_user_dest; n_users],
            p_user_relay: vec![[p_user_relay; RELAYS]; n_users],
            p_relay_dest: [p_relay_dest; RELAYS],
            cluster_of: None,
        }
    }

    /// The reference collision-channel setup: `q_i = 0.25`, `q_R = 0.85`,
    /// `p_iR = p_Rd = 0.9`, `p_id = 0.25`.
    ///
    /// In clustered mode the first half of the users form cluster 0 and the
    /// rest cluster 1; a user's link to the other cluster's relay is zero.
    pub fn reference(n_users: usize, clustered: bool) -> Result<Self, ModelError> {
        if n_users == 0 {
            return Err(ModelError::NoUsers);
        }
        let mut params = Self::homogeneous(n_users, 0.25, 0.85, 0.25, 0.9, 0.9);
        if clustered {
            let clusters = halve(n_users)?;
            for (i, &k) in clusters.iter().enumerate() {
                params.p_user_relay[i][1 - k] = 0.0;
            }
            params.cluster_of = Some(clusters);
        }
        Ok(params)
    }

    pub fn is_clustered(&self) -> bool {
        self.cluster_of.is_some()
    }

    pub fn cluster(&self, user: usize) -> Option<usize> {
        self.cluster_of.as_ref().map(|c| c[user])
    }

    /// Probability that every user except `skip` stays silent.
    pub fn silence(&self, skip: Option<usize>) -> f64 {
        self.q_user
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != skip)
            .map(|(_, q)| 1.0 - q)
            .product()
    }

    /// Probability that every user of `cluster` except `skip` stays silent.
    pub fn cluster_silence(&self, cluster: usize, skip: usize) -> f64 {
        let clusters = self.cluster_of.as_deref().unwrap_or(&[]);
        clusters
            .iter()
            .enumerate()
            .filter(|&(i, &k)| k == cluster && i != skip)
            .map(|(i, _)| 1.0 - self.q_user[i])
            .product()
    }

    /// Same network with `n_users` users, each copying user 0 (or, when
    /// clustered, the first user of its cluster).
    pub fn resized(&self, n_users: usize) -> Result<Self, ModelError> {
        if n_users == 0 {
            return Err(ModelError::NoUsers);
        }
        let template = |i: usize| -> usize {
            match &self.cluster_of {
                Some(c) => {
                    let k = if i < n_users / 2 { 0 } else { 1 };
                    c.iter().position(|&x| x == k).unwrap_or(0)
                }
                None => 0,
            }
        };
        let cluster_of = match &self.cluster_of {
            Some(_) => Some(halve(n_users)?),
            None => None,
        };
        Ok(CollisionParams {
            n_users,
            q_user: (0..n_users).map(|i| self.q_user[template(i)]).collect(),
            q_relay: self.q_relay,
            p_user_dest: (0..n_users).map(|i| self.p_user_dest[template(i)]).collect(),
            p_user_relay: (0..n_users).map(|i| self.p_user_relay[template(i)]).collect(),
            p_relay_dest: self.p_relay_dest,
            cluster_of,
        })
    }
}

/// Parameters of the multi-packet reception (SINR threshold) model.
///
/// Per-link tables have one row per transmitter (users `0..n_users`, then
/// relay 0 and relay 1) and one column per receiver (relay 0, relay 1,
/// destination). Entries where a relay would receive itself are unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MprParams {
    pub n_users: usize,
    pub q_user: Vec<f64>,
    pub q_relay: [f64; RELAYS],
    /// Meters.
    pub distance: Vec<[f64; RECEIVERS]>,
    pub pathloss: Vec<[f64; RECEIVERS]>,
    /// Watts, one per transmitter.
    pub tx_power: Vec<f64>,
    /// Watts, one per receiver.
    pub noise: [f64; RECEIVERS],
    pub sinr_threshold: [f64; RECEIVERS],
    /// Mean of the exponential power fading coefficient.
    pub fading_param: Vec<[f64; RECEIVERS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_of: Option<Vec<usize>>,
}

/// Reference MPR geometry and access probabilities.
pub mod geometry {
    pub const USER_DEST_M: f64 = 100.0;
    pub const USER_RELAY_M: f64 = 59.0;
    pub const USER_FAR_RELAY_M: f64 = 88.0;
    pub const RELAY_DEST_M: f64 = 59.0;
    pub const RELAY_RELAY_M: f64 = 60.0;
    pub const ALPHA_USER_DEST: f64 = 4.0;
    pub const ALPHA_USER_RELAY: f64 = 2.0;
    pub const ALPHA_RELAY_DEST: f64 = 2.0;
    pub const ALPHA_RELAY_RELAY: f64 = 4.0;
    pub const ALPHA_FAR_RELAY: f64 = 4.0;
    pub const USER_POWER_W: f64 = 1e-3;
    pub const RELAY_POWER_W: f64 = 5e-3;
    pub const Q_USER: f64 = 0.25;
    pub const Q_RELAY: f64 = 0.85;
}

/// Builds the reference MPR topology for `n_users` co-located users.
///
/// In clustered mode the users are split in half; each user's link to the
/// non-serving relay is 88 m with path loss exponent 4, so the far relay
/// practically never decodes it.
pub fn reference_topology(n_users: usize, clustered: bool) -> Result<MprParams, ModelError> {
    use geometry::*;

    if n_users == 0 {
        return Err(ModelError::NoUsers);
    }
    let cluster_of = if clustered { Some(halve(n_users)?) } else { None };

    let mut distance = Vec::with_capacity(n_users + RELAYS);
    let mut pathloss = Vec::with_capacity(n_users + RELAYS);
    for i in 0..n_users {
        let mut d = [USER_RELAY_M, USER_RELAY_M, USER_DEST_M];
        let mut a = [ALPHA_USER_RELAY, ALPHA_USER_RELAY, ALPHA_USER_DEST];
        if let Some(c) = &cluster_of {
            let far = 1 - c[i];
            d[far] = USER_FAR_RELAY_M;
            a[far] = ALPHA_FAR_RELAY;
        }
        distance.push(d);
        pathloss.push(a);
    }
    for _ in 0..RELAYS {
        distance.push([RELAY_RELAY_M, RELAY_RELAY_M, RELAY_DEST_M]);
        pathloss.push([ALPHA_RELAY_RELAY, ALPHA_RELAY_RELAY, ALPHA_RELAY_DEST]);
    }

    let mut tx_power = vec![USER_POWER_W; n_users];
    tx_power.extend([RELAY_POWER_W; RELAYS]);

    Ok(MprParams {
        n_users,
        q_user: vec![Q_USER; n_users],
        q_relay: [Q_RELAY; RELAYS],
        distance,
        pathloss,
        tx_power,
        noise: [DEFAULT_NOISE_W; RECEIVERS],
        sinr_threshold: [DEFAULT_GAMMA; RECEIVERS],
        fading_param: vec![[1.0; RECEIVERS]; n_users + RELAYS],
        cluster_of,
    })
}

impl MprParams {
    /// Number of transmitter rows (users plus relays).
    pub fn transmitters(&self) -> usize {
        self.n_users + RELAYS
    }

    /// Row of `node` in the per-link tables.
    pub fn tx_row(&self, node: NodeId) -> Option<usize> {
        match node {
            NodeId::User(i) if i < self.n_users => Some(i),
            NodeId::Relay(j) if j < RELAYS => Some(self.n_users + j),
            _ => None,
        }
    }

    /// Column of `node` in the per-link tables.
    pub fn rx_col(node: NodeId) -> Option<usize> {
        match node {
            NodeId::Relay(j) if j < RELAYS => Some(j),
            NodeId::Destination => Some(DEST),
            _ => None,
        }
    }

    /// Mean received power factor `P_tx * r^-alpha` for the link `row -> col`.
    pub fn gain(&self, row: usize, col: usize) -> f64 {
        self.tx_power[row] * self.distance[row][col].powf(-self.pathloss[row][col])
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.sinr_threshold = [gamma; RECEIVERS];
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.set_gamma(gamma);
        self
    }

    /// Same network with `n_users` users copying user 0 (or the first user of
    /// each cluster); relay rows and receiver parameters are kept.
    pub fn resized(&self, n_users: usize) -> Result<Self, ModelError> {
        if n_users == 0 {
            return Err(ModelError::NoUsers);
        }
        let cluster_of = match &self.cluster_of {
            Some(_) => Some(halve(n_users)?),
            None => None,
        };
        let template = |i: usize| -> usize {
            match (&self.cluster_of, &cluster_of) {
                (Some(old), Some(new)) => old.iter().position(|&x| x == new[i]).unwrap_or(0),
                _ => 0,
            }
        };
        let rows = |table: &Vec<[f64; RECEIVERS]>| -> Vec<[f64; RECEIVERS]> {
            let mut out: Vec<_> = (0..n_users).map(|i| table[template(i)]).collect();
            out.extend_from_slice(&table[self.n_users..]);
            out
        };
        let mut tx_power: Vec<f64> = (0..n_users).map(|i| self.tx_power[template(i)]).collect();
        tx_power.extend_from_slice(&self.tx_power[self.n_users..]);
        Ok(MprParams {
            n_users,
            q_user: (0..n_users).map(|i| self.q_user[template(i)]).collect(),
            q_relay: self.q_relay,
            distance: rows(&self.distance),
            pathloss: rows(&self.pathloss),
            tx_power,
            noise: self.noise,
            sinr_threshold: self.sinr_threshold,
            fading_param: rows(&self.fading_param),
            cluster_of,
        })
    }
}

/// Relaying scheme, including the two dominant-system analysis modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoRelay,
    OneRelay,
    TwoRelaySimple,
    TwoRelayClustered,
    TwoRelaySmallerQueue,
    /// Relay 0 transmits dummy packets when its queue is empty.
    DominantS1,
    /// Relay 1 transmits dummy packets when its queue is empty.
    DominantS2,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::NoRelay,
        Strategy::OneRelay,
        Strategy::TwoRelaySimple,
        Strategy::TwoRelayClustered,
        Strategy::TwoRelaySmallerQueue,
        Strategy::DominantS1,
        Strategy::DominantS2,
    ];

    /// Whether relay `j` takes part in the network at all.
    pub fn relay_present(self, j: usize) -> bool {
        match self {
            Strategy::NoRelay => false,
            Strategy::OneRelay => j == 0,
            _ => j < RELAYS,
        }
    }

    /// Whether relay `j` keeps attempting with dummy packets when empty.
    pub fn sends_dummies(self, j: usize) -> bool {
        matches!((self, j), (Strategy::DominantS1, 0) | (Strategy::DominantS2, 1))
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoRelay => "no_relay",
            Strategy::OneRelay => "one_relay",
            Strategy::TwoRelaySimple => "two_relay_simple",
            Strategy::TwoRelayClustered => "two_relay_clustered",
            Strategy::TwoRelaySmallerQueue => "two_relay_smaller_queue",
            Strategy::DominantS1 => "dominant_s1",
            Strategy::DominantS2 => "dominant_s2",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Channel {
    Collision(CollisionParams),
    Mpr(MprParams),
}

impl Channel {
    pub fn n_users(&self) -> usize {
        match self {
            Channel::Collision(p) => p.n_users,
            Channel::Mpr(p) => p.n_users,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Channel::Collision(_) => "collision",
            Channel::Mpr(_) => "mpr",
        }
    }

    /// Common SINR threshold, if the channel is MPR with a uniform threshold.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            Channel::Mpr(p) if p.sinr_threshold.iter().all(|&g| g == p.sinr_threshold[0]) => {
                Some(p.sinr_threshold[0])
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub channel: Channel,
    pub strategy: Strategy,
    pub horizon_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub replications: u32,
}

impl ScenarioConfig {
    /// Scenario with the default horizon (10^6 slots, 10% warmup, 10 replications).
    pub fn new(channel: Channel, strategy: Strategy, seed: u64) -> Self {
        ScenarioConfig {
            channel,
            strategy,
            horizon_slots: 1_000_000,
            warmup_slots: 100_000,
            seed,
            replications: 10,
        }
    }

    /// Sets the horizon and a 10% warmup.
    pub fn with_horizon(mut self, slots: u64, replications: u32) -> Self {
        self.horizon_slots = slots;
        self.warmup_slots = slots / 10;
        self.replications = replications;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("at least one user is required")]
    NoUsers,
    #[error("clustering needs an even number of users, got {0}")]
    OddClusterSplit(usize),
}

fn halve(n_users: usize) -> Result<Vec<usize>, ModelError> {
    if n_users % 2 != 0 {
        return Err(ModelError::OddClusterSplit(n_users));
    }
    Ok((0..n_users).map(|i| usize::from(i >= n_users / 2)).collect())
}

/// One violated invariant, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario: {}", list(.0))]
pub struct ValidationErrors(pub Vec<Violation>);

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub const OUT_OF_RANGE: &str = "probability out of [0,1]";
pub const MISMATCH: &str = "strategy/channel mismatch";

struct Checker(Vec<Violation>);

impl Checker {
    fn fail(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    fn prob(&mut self, field: impl FnOnce() -> String, p: f64) {
        if !(0.0..=1.0).contains(&p) {
            self.fail(field(), OUT_OF_RANGE);
        }
    }

    fn len(&mut self, field: &str, got: usize, want: usize) -> bool {
        if got != want {
            self.fail(field, format!("expected {} entries, found {}", want, got));
            false
        } else {
            true
        }
    }

    fn clusters(&mut self, field: &str, clusters: &[usize], n_users: usize) {
        if !self.len(field, clusters.len(), n_users) {
            return;
        }
        for (i, &k) in clusters.iter().enumerate() {
            if k >= RELAYS {
                self.fail(format!("{}[{}]", field, i), "cluster index must be 0 or 1");
            }
        }
        for k in 0..RELAYS {
            if !clusters.contains(&k) {
                self.fail(field, format!("cluster {} is empty", k));
            }
        }
    }
}

fn check_collision(c: &mut Checker, p: &CollisionParams) {
    let pre = "channel.collision";
    if p.n_users == 0 {
        c.fail(format!("{}.n_users", pre), "at least one user is required");
    }
    if c.len(&format!("{}.q_user", pre), p.q_user.len(), p.n_users) {
        for (i, &q) in p.q_user.iter().enumerate() {
            c.prob(|| format!("{}.q_user[{}]", pre, i), q);
        }
    }
    if c.len(&format!("{}.p_user_dest", pre), p.p_user_dest.len(), p.n_users) {
        for (i, &q) in p.p_user_dest.iter().enumerate() {
            c.prob(|| format!("{}.p_user_dest[{}]", pre, i), q);
        }
    }
    if c.len(&format!("{}.p_user_relay", pre), p.p_user_relay.len(), p.n_users) {
        for (i, row) in p.p_user_relay.iter().enumerate() {
            for (j, &q) in row.iter().enumerate() {
                c.prob(|| format!("{}.p_user_relay[{}][{}]", pre, i, j), q);
            }
        }
    }
    for j in 0..RELAYS {
        c.prob(|| format!("{}.q_relay[{}]", pre, j), p.q_relay[j]);
        c.prob(|| format!("{}.p_relay_dest[{}]", pre, j), p.p_relay_dest[j]);
    }
    if let Some(clusters) = &p.cluster_of {
        c.clusters(&format!("{}.cluster_of", pre), clusters, p.n_users);
    }
}

fn check_mpr(c: &mut Checker, p: &MprParams) {
    let pre = "channel.mpr";
    let rows = p.n_users + RELAYS;
    if p.n_users == 0 {
        c.fail(format!("{}.n_users", pre), "at least one user is required");
    }
    if c.len(&format!("{}.q_user", pre), p.q_user.len(), p.n_users) {
        for (i, &q) in p.q_user.iter().enumerate() {
            c.prob(|| format!("{}.q_user[{}]", pre, i), q);
        }
    }
    for j in 0..RELAYS {
        c.prob(|| format!("{}.q_relay[{}]", pre, j), p.q_relay[j]);
    }
    let tables: [(&str, &Vec<[f64; RECEIVERS]>); 3] = [
        ("distance", &p.distance),
        ("pathloss", &p.pathloss),
        ("fading_param", &p.fading_param),
    ];
    for (name, table) in tables {
        if !c.len(&format!("{}.{}", pre, name), table.len(), rows) {
            continue;
        }
        for (i, row) in table.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                let bad = match name {
                    "pathloss" => !(2.0..=4.0).contains(&x),
                    _ => !(x > 0.0 && x.is_finite()),
                };
                if bad {
                    let msg = match name {
                        "pathloss" => "path loss exponent out of [2,4]",
                        "distance" => "distance must be positive",
                        _ => "fading parameter must be positive",
                    };
                    c.fail(format!("{}.{}[{}][{}]", pre, name, i, j), msg);
                }
            }
        }
    }
    if c.len(&format!("{}.tx_power", pre), p.tx_power.len(), rows) {
        for (i, &w) in p.tx_power.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                c.fail(format!("{}.tx_power[{}]", pre, i), "power must be positive");
            }
        }
    }
    for j in 0..RECEIVERS {
        if !(p.noise[j] > 0.0 && p.noise[j].is_finite()) {
            c.fail(format!("{}.noise[{}]", pre, j), "noise must be positive");
        }
        if !(p.sinr_threshold[j] > 0.0 && p.sinr_threshold[j].is_finite()) {
            c.fail(format!("{}.sinr_threshold[{}]", pre, j), "SINR threshold must be positive");
        }
    }
    if let Some(clusters) = &p.cluster_of {
        c.clusters(&format!("{}.cluster_of", pre), clusters, p.n_users);
    }
}

/// Checks every invariant of `config` and reports all violations at once.
pub fn validate(config: &ScenarioConfig) -> Result<(), ValidationErrors> {
    let mut c = Checker(Vec::new());
    match &config.channel {
        Channel::Collision(p) => check_collision(&mut c, p),
        Channel::Mpr(p) => check_mpr(&mut c, p),
    }

    let collision = matches!(config.channel, Channel::Collision(_));
    match config.strategy {
        Strategy::TwoRelaySmallerQueue if collision => c.fail("strategy", MISMATCH),
        Strategy::DominantS1 | Strategy::DominantS2 if !collision => c.fail("strategy", MISMATCH),
        _ => {}
    }
    let clustered = match &config.channel {
        Channel::Collision(p) => p.is_clustered(),
        Channel::Mpr(p) => p.cluster_of.is_some(),
    };
    if config.strategy == Strategy::TwoRelayClustered && !clustered {
        c.fail(
            format!("channel.{}.cluster_of", config.channel.name()),
            "clustered strategy needs a cluster assignment",
        );
    }

    if config.horizon_slots == 0 {
        c.fail("horizon_slots", "horizon must be positive");
    }
    if config.warmup_slots >= config.horizon_slots {
        c.fail("warmup_slots", "warmup must be shorter than the horizon");
    }
    if config.replications == 0 {
        c.fail("replications", "at least one replication is required");
    }

    if c.0.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors(c.0))
    }
}
