//! Exact one-slot enumeration of the collision channel.
//!
//! Probabilities are carried as exact rationals, reading every `f64` input as
//! the decimal it prints as. The per-slot law is built by summing over every
//! transmitter pattern and, within a pattern, every link state of each
//! transmitter, applying the reception rules directly. Nothing here reuses the
//! closed forms in [`crate::analysis`], so the two can check each other.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::model::{CollisionParams, NodeId, Strategy, RELAYS};

pub type Q = BigRational;

/// Rational value of the shortest decimal that round-trips to `x`, so that
/// inputs such as `0.85` become exactly 85/100.
pub fn q(x: f64) -> Q {
    assert!(x.is_finite(), "finite probability");
    let text = format!("{:e}", x);
    let (mantissa, exp) = text.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{}{}", int, frac).parse().expect("decimal digits");
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Q::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    value
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().expect("representable")
}

fn one() -> Q {
    Q::one()
}

fn half() -> Q {
    Q::new(BigInt::from(1), BigInt::from(2))
}

/// Reception probabilities conditional on a fixed transmitter pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLaw {
    /// Probability user i's packet reaches the destination.
    pub dest: Vec<Q>,
    /// Probability user i's packet ends up stored at relay j.
    pub stored: Vec<[Q; RELAYS]>,
    /// Probability relay j's transmission reaches the destination.
    pub relay_success: [Q; RELAYS],
}

/// Averaged per-slot law.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLaw {
    pub dest: Vec<Q>,
    pub stored: Vec<[Q; RELAYS]>,
    pub relay_success: [Q; RELAYS],
    /// Probability that relay j both gains and delivers a packet in the slot.
    pub arrival_and_success: [Q; RELAYS],
}

impl SlotLaw {
    pub fn arrival(&self, relay: usize) -> Q {
        self.stored.iter().map(|s| s[relay].clone()).sum()
    }

    /// Probability user i's packet leaves its source.
    pub fn throughput(&self, user: usize) -> Q {
        let s = &self.stored[user];
        &self.dest[user] + &s[0] + &s[1]
    }
}

fn present(strategy: Strategy) -> [bool; RELAYS] {
    [strategy.relay_present(0), strategy.relay_present(1)]
}

/// Outcome law of one slot in which exactly `users` and `relays` transmit.
pub fn pattern_law(params: &CollisionParams, strategy: Strategy, users: &[usize], relays: [bool; RELAYS]) -> PatternLaw {
    let n = params.n_users;
    let mut law = PatternLaw {
        dest: vec![Q::zero(); n],
        stored: vec![[Q::zero(), Q::zero()]; n],
        relay_success: [Q::zero(), Q::zero()],
    };
    let listening = present(strategy);
    let clustered = strategy == Strategy::TwoRelayClustered;
    let count = users.len() + relays.iter().filter(|&&r| r).count();

    for j in 0..RELAYS {
        if !relays[j] {
            continue;
        }
        // Clustered: only the other relay disturbs a relay's transmission.
        let clear = if clustered { !relays[1 - j] } else { count == 1 };
        if clear {
            law.relay_success[j] = q(params.p_relay_dest[j]);
        }
    }

    for &i in users {
        let p_d = q(params.p_user_dest[i]);
        let dest_clear = count == 1;
        // Relays able to hear user i in this pattern.
        let mut hears = [false; RELAYS];
        for j in 0..RELAYS {
            hears[j] = listening[j] && !relays[j];
            if clustered {
                let k = params.cluster_of.as_ref().expect("clustered params")[i];
                let peers = users.iter().filter(|&&u| u != i && params.cluster_of.as_ref().unwrap()[u] == k).count();
                hears[j] &= j == k && peers == 0;
            } else {
                hears[j] &= count == 1;
            }
        }
        // Enumerate (dest link, relay 0 link, relay 1 link).
        for state in 0..8u8 {
            let d_up = state & 1 != 0;
            let r_up = [state & 2 != 0, state & 4 != 0];
            let mut p = if d_up { p_d.clone() } else { one() - &p_d };
            for j in 0..RELAYS {
                let pr = q(params.p_user_relay[i][j]);
                p *= if r_up[j] { pr } else { one() - pr };
            }
            if p.is_zero() {
                continue;
            }
            if d_up {
                if dest_clear {
                    law.dest[i] += &p;
                }
                continue;
            }
            let got = [hears[0] && r_up[0], hears[1] && r_up[1]];
            match got {
                [true, true] => {
                    let kept = if clustered { unreachable!("one serving relay") } else { &p * half() };
                    law.stored[i][0] += &kept;
                    law.stored[i][1] += &kept;
                }
                [true, false] => law.stored[i][0] += &p,
                [false, true] => law.stored[i][1] += &p,
                [false, false] => {}
            }
        }
    }
    law
}

/// Per-slot law when every user attempts with its access probability and
/// relay j transmits with probability `relay_tx[j]`.
pub fn slot_law(params: &CollisionParams, strategy: Strategy, relay_tx: [Q; RELAYS]) -> SlotLaw {
    let n = params.n_users;
    assert!(n <= 20, "enumeration is exponential in the number of users");
    let q_user: Vec<Q> = params.q_user.iter().map(|&x| q(x)).collect();
    let mut out = SlotLaw {
        dest: vec![Q::zero(); n],
        stored: vec![[Q::zero(), Q::zero()]; n],
        relay_success: [Q::zero(), Q::zero()],
        arrival_and_success: [Q::zero(), Q::zero()],
    };
    for relay_mask in 0..4u8 {
        let relays = [relay_mask & 1 != 0, relay_mask & 2 != 0];
        let mut p_relays = one();
        for j in 0..RELAYS {
            p_relays *= if relays[j] { relay_tx[j].clone() } else { one() - &relay_tx[j] };
        }
        if p_relays.is_zero() {
            continue;
        }
        for user_mask in 0..(1u32 << n) {
            let users: Vec<usize> = (0..n).filter(|i| user_mask >> i & 1 != 0).collect();
            let mut p = p_relays.clone();
            for i in 0..n {
                p *= if user_mask >> i & 1 != 0 { q_user[i].clone() } else { one() - &q_user[i] };
            }
            if p.is_zero() {
                continue;
            }
            let law = pattern_law(params, strategy, &users, relays);
            for i in 0..n {
                out.dest[i] += &p * &law.dest[i];
                for j in 0..RELAYS {
                    out.stored[i][j] += &p * &law.stored[i][j];
                }
            }
            for j in 0..RELAYS {
                out.relay_success[j] += &p * &law.relay_success[j];
                let arrivals: Q = law.stored.iter().map(|s| s[j].clone()).sum();
                // Links are independent across transmitters, so within a
                // pattern arrival and departure events factorize.
                out.arrival_and_success[j] += &p * arrivals * &law.relay_success[j];
            }
        }
    }
    out
}

/// Relay arrival rate with both relay queues empty.
pub fn arrival_sum(params: &CollisionParams, relay: usize) -> Q {
    slot_law(params, Strategy::TwoRelaySimple, [Q::zero(), Q::zero()]).arrival(relay)
}

/// Exact rates of the non-dummy relay in the dominant system where
/// `dummy_relay` always contends.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDominant {
    pub lambda_0: Q,
    pub lambda_1: Q,
    pub mu: Q,
    /// Probability of an arrival and a departure in the same slot.
    pub up_and_down: Q,
    pub stable: bool,
    pub p_empty: Q,
    pub lambda: Q,
}

/// Solves the relay queue as a birth-death chain whose step law is read off
/// the enumerated empty-state and busy-state slots.
pub fn dominant(params: &CollisionParams, dummy_relay: usize) -> ExactDominant {
    let d = dummy_relay;
    let r = 1 - d;
    let mut tx = [Q::zero(), Q::zero()];
    tx[d] = q(params.q_relay[d]);
    let empty = slot_law(params, Strategy::TwoRelaySimple, tx.clone());
    tx[r] = q(params.q_relay[r]);
    let busy = slot_law(params, Strategy::TwoRelaySimple, tx);

    let lambda_0 = empty.arrival(r);
    let up_and_down = busy.arrival_and_success[r].clone();
    // Net up/down step probabilities from a non-empty state.
    let lambda_1 = busy.arrival(r) - &up_and_down;
    let mu = busy.relay_success[r].clone() - &up_and_down;
    let stable = lambda_1 < mu;
    let (p_empty, lambda) = if stable {
        // pi_k = pi_0 * (lambda_0 / mu) * (lambda_1 / mu)^(k-1), k >= 1.
        let rho = &lambda_1 / &mu;
        let busy_mass = &lambda_0 / &mu / (one() - &rho);
        let p0 = one() / (one() + busy_mass);
        let lambda = &p0 * &lambda_0 + (one() - &p0) * busy.arrival(r);
        (p0, lambda)
    } else {
        (Q::zero(), busy.arrival(r))
    };
    ExactDominant {
        lambda_0,
        lambda_1,
        mu,
        up_and_down,
        stable,
        p_empty,
        lambda,
    }
}

/// Per-user throughput with relay queues permanently empty (upper) and
/// permanently non-empty (lower), indexed by user.
pub fn throughput_extremes(params: &CollisionParams, strategy: Strategy) -> Vec<(Q, Q)> {
    let idle = slot_law(params, strategy, [Q::zero(), Q::zero()]);
    let present = present(strategy);
    let busy_tx = [0, 1].map(|j| if present[j] { q(params.q_relay[j]) } else { Q::zero() });
    let busy = slot_law(params, strategy, busy_tx);
    (0..params.n_users).map(|i| (idle.throughput(i), busy.throughput(i))).collect()
}

/// Relative gap `|a - b| / max(|b|, tiny)` in exact arithmetic, as a float.
pub fn rel_gap(a: f64, b: &Q) -> f64 {
    let diff = (q(a) - b).abs();
    let scale = if b.is_zero() { one() } else { b.abs() };
    to_f64(&(diff / scale))
}

/// Transmitter list of a pattern, for feeding the channel resolver.
pub fn pattern_nodes(users: &[usize], relays: [bool; RELAYS]) -> Vec<NodeId> {
    (0..RELAYS)
        .filter(|&j| relays[j])
        .map(NodeId::Relay)
        .chain(users.iter().map(|&i| NodeId::User(i)))
        .collect()
}
