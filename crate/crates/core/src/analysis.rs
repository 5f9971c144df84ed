//! Closed-form results for the collision channel: relay service and arrival
//! rates under the two dominant systems, the stability region, the minimum
//! relay transmission probabilities and per-user throughput bounds.
//!
//! In dominant system `S_d` relay `d` keeps transmitting dummy packets when
//! its queue is empty, which makes the other relay's queue a birth-death
//! chain whose stationary distribution has a closed form.

use serde::Serialize;
use thiserror::Error;

use crate::model::{CollisionParams, RELAYS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("user {0} does not exist")]
    NoSuchUser(usize),
    #[error("relay {0} does not exist")]
    NoSuchRelay(usize),
    #[error("parameters are clustered; use the clustered bounds")]
    Clustered,
    #[error("user {0} has no cluster assignment")]
    MissingCluster(usize),
}

/// Arrival and service rate of one relay queue, in packets per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePair {
    pub lambda: f64,
    pub mu: f64,
}

impl RatePair {
    pub fn stable(&self) -> bool {
        self.lambda < self.mu || self.lambda == 0.0
    }
}

/// Rates of the non-dummy relay's queue in a dominant system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominantRates {
    /// Relay whose dummy transmissions define the system.
    pub dummy_relay: usize,
    /// Arrival probability per slot while the queue is empty.
    pub lambda_0: f64,
    /// Arrival probability per slot while the queue is backlogged.
    pub lambda_1: f64,
    /// Stationary probability that the queue is empty (0 when not ergodic).
    pub p_empty: f64,
    /// Average arrival rate.
    pub lambda: f64,
    /// Service rate.
    pub mu: f64,
    /// Whether the queue chain is ergodic (`lambda_1 < mu`).
    pub stable: bool,
    /// Arrival and service rate of the dummy relay given the queue above.
    pub dummy: RatePair,
}

/// Per-user throughput bounds in packets per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputBounds {
    pub per_user_upper: f64,
    pub per_user_lower: f64,
    pub clustered: bool,
}

fn check_relay(relay: usize) -> Result<(), AnalysisError> {
    if relay < RELAYS {
        Ok(())
    } else {
        Err(AnalysisError::NoSuchRelay(relay))
    }
}

fn check_user(params: &CollisionParams, user: usize) -> Result<(), AnalysisError> {
    if user < params.n_users {
        Ok(())
    } else {
        Err(AnalysisError::NoSuchUser(user))
    }
}

/// Probability per slot that a lone user transmission, with both relays
/// silent, ends up stored at `relay`: the destination misses it, `relay`
/// decodes it, and either the other relay misses it or the coin flip picks
/// `relay`.
pub fn relay_arrival_sum(params: &CollisionParams, relay: usize) -> f64 {
    let other = 1 - relay;
    (0..params.n_users)
        .map(|i| {
            let p_here = params.p_user_relay[i][relay];
            let p_other = params.p_user_relay[i][other];
            params.q_user[i]
                * p_here
                * (1.0 - params.p_user_dest[i])
                * ((1.0 - p_other) + 0.5 * p_other)
                * params.silence(Some(i))
        })
        .sum()
}

/// Service rates of both relays given the probability that each queue is
/// non-empty.
pub fn service_rates(params: &CollisionParams, p_busy_r1: f64, p_busy_r2: f64) -> [f64; RELAYS] {
    let silent = params.silence(None);
    let busy = [p_busy_r1, p_busy_r2];
    let q = params.q_relay;
    [0, 1].map(|j| {
        let other = 1 - j;
        q[j] * params.p_relay_dest[j] * (1.0 - q[other] * busy[other]) * silent
    })
}

/// Rates in the dominant system where `dummy_relay` never goes quiet.
pub fn dominant_rates(params: &CollisionParams, dummy_relay: usize) -> Result<DominantRates, AnalysisError> {
    check_relay(dummy_relay)?;
    let d = dummy_relay;
    let r = 1 - d;
    let q = params.q_relay;
    let silent = params.silence(None);
    let arrivals = relay_arrival_sum(params, r);
    let p_rd = params.p_relay_dest[r];

    let lambda_0 = (1.0 - q[d]) * arrivals;
    let lambda_1 = (1.0 - q[r]) * lambda_0;
    let mu = q[r] * p_rd * (1.0 - q[d]) * silent;
    let stable = lambda_1 < mu;

    // Average arrival rate, written so that q[r] cancels out.
    let denom = p_rd * silent + arrivals;
    let lambda_closed = if denom > 0.0 {
        p_rd * silent * (1.0 - q[d]) * arrivals / denom
    } else {
        0.0
    };
    let (p_empty, lambda) = if stable {
        ((mu - lambda_1) / (mu - lambda_1 + lambda_0), lambda_closed)
    } else {
        (0.0, lambda_1)
    };

    let mut busy = [1.0; RELAYS];
    busy[r] = 1.0 - p_empty;
    let mu_dummy = service_rates(params, busy[0], busy[1])[d];
    let lambda_dummy = (1.0 - q[d]) * (1.0 - q[r] * busy[r]) * relay_arrival_sum(params, d);

    Ok(DominantRates {
        dummy_relay: d,
        lambda_0,
        lambda_1,
        p_empty,
        lambda,
        mu,
        stable,
        dummy: RatePair {
            lambda: lambda_dummy,
            mu: mu_dummy,
        },
    })
}

/// Dominant system in which relay 0 sends dummy packets; rates are for relay 1.
pub fn dominant_rates_s1(params: &CollisionParams) -> DominantRates {
    dominant_rates(params, 0).expect("relay 0 exists")
}

/// Dominant system in which relay 1 sends dummy packets; rates are for relay 0.
pub fn dominant_rates_s2(params: &CollisionParams) -> DominantRates {
    dominant_rates(params, 1).expect("relay 1 exists")
}

/// Smallest transmission probability of `relay` for which its queue is stable.
pub fn q_min(params: &CollisionParams, relay: usize) -> Result<f64, AnalysisError> {
    check_relay(relay)?;
    let arrivals = relay_arrival_sum(params, relay);
    let capacity = params.p_relay_dest[relay] * params.silence(None);
    if arrivals == 0.0 {
        return Ok(0.0);
    }
    Ok(arrivals / (arrivals + capacity))
}

/// Stability region of the two relay queues as the union of the regions of
/// the two dominant systems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRegion {
    /// Boundary of the first dominant system's region, from the `lambda_r2 = 0`
    /// axis to the `lambda_r1 = 0` axis.
    pub boundary_s1: Vec<(f64, f64)>,
    /// Boundary of the second dominant system's region, from the
    /// `lambda_r1 = 0` axis to the `lambda_r2 = 0` axis.
    pub boundary_s2: Vec<(f64, f64)>,
    pub q_r1_min: f64,
    pub q_r2_min: f64,
    q_relay: [f64; RELAYS],
    /// `q_Rj p_Rjd prod(1 - q_i)`: capacity of relay j when the other is silent.
    solo: [f64; RELAYS],
    /// `q_Rj p_Rjd (1 - q_Rother) prod(1 - q_i)`: capacity against a saturated peer.
    shared: [f64; RELAYS],
}

impl StabilityRegion {
    /// Whether the arrival pair lies in the region of dominant system `S_d`
    /// (relay `d` sends dummies).
    pub fn in_dominant(&self, dummy_relay: usize, lambda: (f64, f64)) -> bool {
        let rates = [lambda.0, lambda.1];
        let d = dummy_relay;
        let r = 1 - d;
        let below = |x: f64, bound: f64| x == 0.0 || x < bound;
        let other_ok = below(rates[r], self.shared[r]);
        let dummy_bound = if self.shared[r] > 0.0 {
            self.solo[d] * (1.0 - self.q_relay[r] * rates[r] / self.shared[r])
        } else {
            self.solo[d]
        };
        other_ok && below(rates[d], dummy_bound)
    }

    pub fn in_r1(&self, lambda: (f64, f64)) -> bool {
        self.in_dominant(0, lambda)
    }

    pub fn in_r2(&self, lambda: (f64, f64)) -> bool {
        self.in_dominant(1, lambda)
    }

    pub fn contains(&self, lambda: (f64, f64)) -> bool {
        self.in_r1(lambda) || self.in_r2(lambda)
    }

    /// Capacity of relay `j` when the other relay is saturated; where each
    /// boundary meets an axis.
    pub fn axis_capacity(&self, relay: usize) -> f64 {
        self.shared[relay]
    }

    /// `(lambda_r1, lambda_r2, region_id)` rows, region ids 1 and 2.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, u8)> + '_ {
        let s1 = self.boundary_s1.iter().map(|&(a, b)| (a, b, 1));
        let s2 = self.boundary_s2.iter().map(|&(a, b)| (a, b, 2));
        s1.chain(s2)
    }
}

/// Samples both region boundaries with `resolution` points along the curved
/// edge (uniform in the other relay's arrival rate) plus the closing point on
/// the axis.
pub fn stability_region(params: &CollisionParams, resolution: usize) -> StabilityRegion {
    let resolution = resolution.max(2);
    let silent = params.silence(None);
    let q = params.q_relay;
    let solo = [0, 1].map(|j| q[j] * params.p_relay_dest[j] * silent);
    let shared = [0, 1].map(|j| solo[j] * (1.0 - q[1 - j]));

    let edge = |d: usize| -> Vec<[f64; RELAYS]> {
        let r = 1 - d;
        let mut pts = Vec::with_capacity(resolution + 1);
        for k in 0..resolution {
            let other = shared[r] * k as f64 / (resolution - 1) as f64;
            let dummy = if shared[r] > 0.0 {
                solo[d] * (1.0 - q[r] * other / shared[r])
            } else {
                solo[d]
            };
            let mut p = [0.0; RELAYS];
            p[d] = dummy;
            p[r] = other;
            pts.push(p);
        }
        let mut close = [0.0; RELAYS];
        close[r] = shared[r];
        pts.push(close);
        pts
    };
    let to_pairs = |v: Vec<[f64; RELAYS]>| v.into_iter().map(|p| (p[0], p[1])).collect();

    StabilityRegion {
        boundary_s1: to_pairs(edge(0)),
        boundary_s2: to_pairs(edge(1)),
        q_r1_min: q_min(params, 0).expect("relay 0"),
        q_r2_min: q_min(params, 1).expect("relay 1"),
        q_relay: q,
        solo,
        shared,
    }
}

/// Throughput of user `user` with no relays: it must transmit alone and reach
/// the destination.
pub fn no_relay_throughput(params: &CollisionParams, user: usize) -> Result<f64, AnalysisError> {
    check_user(params, user)?;
    Ok(params.q_user[user] * params.p_user_dest[user] * params.silence(Some(user)))
}

/// Bounds on the per-user throughput of the unclustered two-relay network.
/// The upper bound ignores relay interference; the lower bound assumes both
/// relays are always backlogged.
pub fn throughput_bounds(params: &CollisionParams, user: usize) -> Result<ThroughputBounds, AnalysisError> {
    check_user(params, user)?;
    if params.is_clustered() {
        return Err(AnalysisError::Clustered);
    }
    let i = user;
    let [p1, p2] = params.p_user_relay[i];
    let p_d = params.p_user_dest[i];
    let upper = params.q_user[i] * (p_d + (1.0 - p_d) * (p1 + p2 - p1 * p2)) * params.silence(Some(i));
    Ok(ThroughputBounds {
        per_user_upper: upper,
        per_user_lower: upper * relay_silence(params),
        clustered: false,
    })
}

/// Bounds on the per-user throughput when users are split into two clusters,
/// each served by its own relay. The relay term requires only the user's
/// same-cluster peers to be silent.
pub fn clustered_throughput_bounds(
    params: &CollisionParams,
    user: usize,
) -> Result<ThroughputBounds, AnalysisError> {
    check_user(params, user)?;
    let i = user;
    let k = params.cluster(i).ok_or(AnalysisError::MissingCluster(i))?;
    let q = params.q_user[i];
    let p_d = params.p_user_dest[i];
    let direct = q * p_d * params.silence(Some(i));
    let relayed = q * (1.0 - p_d) * params.p_user_relay[i][k] * params.cluster_silence(k, i);
    let upper = direct + relayed;
    Ok(ThroughputBounds {
        per_user_upper: upper,
        per_user_lower: upper * relay_silence(params),
        clustered: true,
    })
}

fn relay_silence(params: &CollisionParams) -> f64 {
    (1.0 - params.q_relay[0]) * (1.0 - params.q_relay[1])
}
