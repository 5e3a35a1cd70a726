//! Three-node topology: two agent nodes report range vectors to a central
//! server over a lossy, in-order datagram channel.
//!
//! Frame layout (little-endian, 39 bytes):
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 1    | node_id      |
//! | 1      | 4    | seq          |
//! | 5      | 8    | timestamp_ms |
//! | 13     | 8    | d1 (f64, m)  |
//! | 21     | 8    | d2 (f64, m)  |
//! | 29     | 8    | d3 (f64, m)  |
//! | 37     | 2    | CRC-16/CCITT-FALSE over bytes 0..37 |

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::locator::{self, AnchorLayout, DistanceVector, Position};
use crate::rng::{self, Stream};
use crate::scenario::{self, DatasetRow, EstimatedFrame, GroundTruthFrame, ScenarioSpec};
use crate::{Agent, PROXIMITY_THRESHOLD_M};

pub const FRAME_LEN: usize = 39;
pub const PAYLOAD_LEN: usize = FRAME_LEN - 2;
pub const DEFAULT_STALENESS_TICKS: u32 = 5;

const CRC16: crc::Crc<u16> = crc::Crc::<u16>::new(&crc::CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CRC16.checksum(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("framing error: expected {FRAME_LEN} bytes, got {0}")]
    Framing(usize),
    #[error("checksum mismatch: frame carries {carried:#06x}, computed {computed:#06x}")]
    Corrupt { carried: u16, computed: u16 },
    #[error("unknown node id {0}")]
    UnknownNode(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub node: Agent,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub d: [f64; 3],
}

impl DistanceReport {
    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.node == other.node
            && self.seq == other.seq
            && self.timestamp_ms == other.timestamp_ms
            && self.d.iter().zip(&other.d).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn encode_report(r: &DistanceReport) -> [u8; FRAME_LEN] {
    let mut buf = [0u8; FRAME_LEN];
    buf[0] = r.node.node_id();
    buf[1..5].copy_from_slice(&r.seq.to_le_bytes());
    buf[5..13].copy_from_slice(&r.timestamp_ms.to_le_bytes());
    for (i, d) in r.d.iter().enumerate() {
        let at = 13 + 8 * i;
        buf[at..at + 8].copy_from_slice(&d.to_le_bytes());
    }
    let crc = crc16(&buf[..PAYLOAD_LEN]);
    buf[PAYLOAD_LEN..].copy_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_report(bytes: &[u8]) -> Result<DistanceReport, WireError> {
    let frame: &[u8; FRAME_LEN] = bytes
        .try_into()
        .map_err(|_| WireError::Framing(bytes.len()))?;
    let carried = u16::from_le_bytes([frame[PAYLOAD_LEN], frame[PAYLOAD_LEN + 1]]);
    let computed = crc16(&frame[..PAYLOAD_LEN]);
    if carried != computed {
        return Err(WireError::Corrupt { carried, computed });
    }
    let node = Agent::from_node_id(frame[0]).ok_or(WireError::UnknownNode(frame[0]))?;
    let f64_at = |at: usize| f64::from_le_bytes(frame[at..at + 8].try_into().unwrap());
    Ok(DistanceReport {
        node,
        seq: u32::from_le_bytes(frame[1..5].try_into().unwrap()),
        timestamp_ms: u64::from_le_bytes(frame[5..13].try_into().unwrap()),
        d: [f64_at(13), f64_at(21), f64_at(29)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Flag {
    Safe,
    Close,
}

impl Flag {
    pub fn for_separation(sep: f64) -> Self {
        if sep < PROXIMITY_THRESHOLD_M {
            Flag::Close
        } else {
            Flag::Safe
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavSignal {
    #[serde(rename = "t_ms")]
    pub timestamp_ms: u64,
    pub flag: Flag,
    #[serde(rename = "sep")]
    pub separation_est: f64,
}

impl NavSignal {
    pub fn new(timestamp_ms: u64, separation_est: f64) -> Self {
        Self {
            timestamp_ms,
            flag: Flag::for_separation(separation_est),
            separation_est,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_signals<W: Write>(mut w: W, signals: &[NavSignal]) -> Result<()> {
    for s in signals {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub drop_probability: f64,
    pub latency_ticks: u32,
    pub seed: u64,
}

/// Network settings carried in scenario JSON. The channel seed is derived from
/// the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub drop_probability: f64,
    pub latency_ticks: u32,
    pub staleness_horizon: u32,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            drop_probability: 0.0,
            latency_ticks: 0,
            staleness_horizon: DEFAULT_STALENESS_TICKS,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(Error::InvalidParams(format!(
                "drop_probability must be in [0, 1), got {}",
                self.drop_probability
            )));
        }
        Ok(())
    }

    pub fn channel(&self, seed: u64) -> ChannelConfig {
        ChannelConfig {
            drop_probability: self.drop_probability,
            latency_ticks: self.latency_ticks,
            seed,
        }
    }
}

/// In-order datagram channel with independent per-frame loss and fixed latency.
#[derive(Debug)]
pub struct Channel {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    in_flight: VecDeque<(u64, Vec<u8>)>,
    pub sent: u64,
    pub dropped: u64,
}

impl Channel {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        NetConfig {
            drop_probability: cfg.drop_probability,
            ..NetConfig::default()
        }
        .validate()?;
        Ok(Self {
            cfg,
            rng: rng::stream(cfg.seed, Stream::Channel),
            in_flight: VecDeque::new(),
            sent: 0,
            dropped: 0,
        })
    }

    pub fn send(&mut self, tick: u64, frame: Vec<u8>) {
        self.sent += 1;
        // one draw per frame, even on a lossless channel
        let u: f64 = self.rng.random();
        if u < self.cfg.drop_probability {
            self.dropped += 1;
            return;
        }
        self.in_flight.push_back((tick + u64::from(self.cfg.latency_ticks), frame));
    }

    /// Frames due at or before `tick`, in send order.
    pub fn deliver(&mut self, tick: u64) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        while self.in_flight.front().is_some_and(|(at, _)| *at <= tick) {
            out.push(self.in_flight.pop_front().unwrap().1);
        }
        out
    }
}

/// Agent-side sender: stamps sequence numbers and frames range vectors.
#[derive(Debug)]
pub struct AgentNode {
    pub agent: Agent,
    next_seq: u32,
}

impl AgentNode {
    pub fn new(agent: Agent) -> Self {
        Self { agent, next_seq: 0 }
    }

    pub fn report(&mut self, d: &DistanceVector, timestamp_ms: u64) -> [u8; FRAME_LEN] {
        let r = DistanceReport {
            node: self.agent,
            seq: self.next_seq,
            timestamp_ms,
            d: d.d,
        };
        self.next_seq = self.next_seq.wrapping_add(1);
        encode_report(&r)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cached {
    seq: u32,
    received_tick: u64,
    d: DistanceVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServerOutput {
    /// Range vectors the fixes were computed from.
    pub human_d: Option<DistanceVector>,
    pub robot_d: Option<DistanceVector>,
    pub human: Option<Position>,
    pub robot: Option<Position>,
    pub separation: Option<f64>,
    pub signal: Option<NavSignal>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ServerCounters {
    pub accepted: u64,
    pub corrupt: u64,
    pub framing: u64,
    pub unknown_node: u64,
    pub stale_or_duplicate: u64,
    pub invalid_ranges: u64,
}

/// Central node: caches the freshest report per agent and trilaterates.
#[derive(Debug)]
pub struct Server {
    layout: AnchorLayout,
    staleness_horizon: u32,
    cache: [Option<Cached>; 2],
    pub counters: ServerCounters,
}

fn slot(agent: Agent) -> usize {
    match agent {
        Agent::Human => 0,
        Agent::Robot => 1,
    }
}

impl Server {
    pub fn new(layout: AnchorLayout, staleness_horizon: u32) -> Result<Self> {
        layout.validate()?;
        Ok(Self {
            layout,
            staleness_horizon,
            cache: [None, None],
            counters: ServerCounters::default(),
        })
    }

    /// Decodes a frame, counting (and dropping) anything malformed.
    pub fn ingest(&mut self, bytes: &[u8]) -> Option<DistanceReport> {
        match decode_report(bytes) {
            Ok(r) => Some(r),
            Err(e) => {
                match e {
                    WireError::Framing(_) => self.counters.framing += 1,
                    WireError::Corrupt { .. } => self.counters.corrupt += 1,
                    WireError::UnknownNode(_) => self.counters.unknown_node += 1,
                }
                None
            }
        }
    }

    /// One server tick: absorb this tick's reports (latest wins per node),
    /// then emit a signal if both agents have a report no older than the
    /// staleness horizon.
    pub fn step(&mut self, tick: u64, timestamp_ms: u64, pending: &[DistanceReport]) -> ServerOutput {
        for r in pending {
            let s = slot(r.node);
            if self.cache[s].is_some_and(|c| r.seq <= c.seq) {
                self.counters.stale_or_duplicate += 1;
                continue;
            }
            match DistanceVector::new(r.node, r.timestamp_ms as f64 / 1000.0, r.d) {
                Ok(d) => {
                    self.counters.accepted += 1;
                    self.cache[s] = Some(Cached { seq: r.seq, received_tick: tick, d });
                }
                Err(_) => self.counters.invalid_ranges += 1,
            }
        }

        let fresh = |c: &Option<Cached>| -> Option<DistanceVector> {
            c.filter(|c| tick.saturating_sub(c.received_tick) <= u64::from(self.staleness_horizon))
                .map(|c| c.d)
        };
        let (human_d, robot_d) = (fresh(&self.cache[0]), fresh(&self.cache[1]));
        let fix = |d: Option<DistanceVector>| d.and_then(|d| locator::trilaterate(&d, &self.layout).ok());
        let (human, robot) = (fix(human_d), fix(robot_d));
        let separation = human.zip(robot).map(|(h, r)| locator::separation(&h, &r));
        ServerOutput {
            human_d,
            robot_d,
            human,
            robot,
            separation,
            signal: separation.map(|s| NavSignal::new(timestamp_ms, s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetTick {
    pub tick: usize,
    pub truth: GroundTruthFrame,
    pub output: ServerOutput,
}

impl NetTick {
    pub fn estimate(&self) -> Option<EstimatedFrame> {
        let (h, r) = self.output.human.zip(self.output.robot)?;
        Some(EstimatedFrame::from_fixes(self.truth.timestamp, h, r))
    }

    /// Dataset row for this tick, if the server had both fixes.
    pub fn row(&self) -> Option<DatasetRow> {
        let e = self.estimate()?;
        let (h, r) = self.output.human_d.zip(self.output.robot_d)?;
        Some(DatasetRow::new(&self.truth, &h, &r, &e))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub ticks: u64,
    pub frames_sent: u64,
    pub frames_dropped: u64,
    pub signals: u64,
    pub server: ServerCounters,
}

impl NetStats {
    pub fn emission_rate(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.signals as f64 / self.ticks as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetRun {
    pub name: String,
    pub ticks: Vec<NetTick>,
    pub signals: Vec<NavSignal>,
    pub stats: NetStats,
}

impl NetRun {
    /// Rows for ticks where the server produced both fixes.
    pub fn rows(&self) -> Vec<DatasetRow> {
        self.ticks.iter().filter_map(NetTick::row).collect()
    }
}

pub fn tick_ms(t: f64) -> u64 {
    (t * 1000.0).round() as u64
}

/// Runs a scenario through the node → channel → server path.
///
/// Sensing is shared with [`scenario::run_scenario`], so a lossless,
/// zero-latency channel reproduces the direct pipeline exactly.
pub fn run_networked(spec: &ScenarioSpec) -> Result<NetRun> {
    let sensed = scenario::sense(spec)?;
    let mut channel = Channel::new(spec.network.channel(spec.noise.seed))?;
    let mut server = Server::new(spec.layout, spec.network.staleness_horizon)?;
    let mut nodes = [AgentNode::new(Agent::Human), AgentNode::new(Agent::Robot)];

    let mut ticks = Vec::with_capacity(sensed.len());
    let mut signals = Vec::new();
    for s in &sensed {
        let tick = s.tick as u64;
        let t_ms = tick_ms(s.truth.timestamp);
        for (node, d) in nodes.iter_mut().zip([&s.human, &s.robot]) {
            channel.send(tick, node.report(d, t_ms).to_vec());
        }
        let pending: Vec<DistanceReport> = channel
            .deliver(tick)
            .iter()
            .filter_map(|f| server.ingest(f))
            .collect();
        let output = server.step(tick, t_ms, &pending);
        signals.extend(output.signal);
        ticks.push(NetTick { tick: s.tick, truth: s.truth, output });
    }

    let stats = NetStats {
        ticks: ticks.len() as u64,
        frames_sent: channel.sent,
        frames_dropped: channel.dropped,
        signals: signals.len() as u64,
        server: server.counters,
    };
    Ok(NetRun {
        name: spec.name.clone(),
        ticks,
        signals,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;

    fn report(node: Agent, seq: u32, d: [f64; 3]) -> DistanceReport {
        DistanceReport { node, seq, timestamp_ms: u64::from(seq) * 100, d }
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16(b"123456789"), 0x29B1);
    }

    #[test]
    fn layout_of_a_frame() {
        let f = encode_report(&report(Agent::Human, 0, [1.0; 3]));
        assert_eq!(f.len(), FRAME_LEN);
        assert_eq!(f[0], 0x01);
        assert_eq!(&f[1..13], &[0u8; 12]);
        assert_eq!(&f[13..21], &1.0f64.to_le_bytes());
        let crc = crc16(&f[..37]);
        assert_eq!(&f[37..], &crc.to_le_bytes());
        assert!(decode_report(&f).unwrap().bit_eq(&report(Agent::Human, 0, [1.0; 3])));
    }

    #[test]
    fn decode_errors() {
        let f = encode_report(&report(Agent::Robot, 7, [1.0, 2.0, 3.0]));
        assert_eq!(decode_report(&f[..FRAME_LEN - 1]), Err(WireError::Framing(FRAME_LEN - 1)));
        assert_eq!(decode_report(&[]), Err(WireError::Framing(0)));
        let mut g = f;
        g[FRAME_LEN - 1] ^= 0x01;
        assert!(matches!(decode_report(&g), Err(WireError::Corrupt { .. })));

        let mut h = f;
        h[0] = 9;
        let crc = crc16(&h[..PAYLOAD_LEN]);
        h[PAYLOAD_LEN..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_report(&h), Err(WireError::UnknownNode(9)));
    }

    #[test]
    fn server_counts_corrupt_frames() {
        let mut server = Server::new(AnchorLayout::default(), 5).unwrap();
        let mut f = encode_report(&report(Agent::Robot, 7, [1.0, 2.0, 3.0]));
        f[20] ^= 0x80;
        assert!(server.ingest(&f).is_none());
        assert!(server.ingest(&f[..10]).is_none());
        assert_eq!(server.counters.corrupt, 1);
        assert_eq!(server.counters.framing, 1);
    }

    fn ranges_to(x: f64, y: f64) -> [f64; 3] {
        AnchorLayout::default().ranges_to(locator::Point::new(x, y))
    }

    #[test]
    fn close_signal() {
        let mut server = Server::new(AnchorLayout::default(), 5).unwrap();
        let h = report(Agent::Human, 0, ranges_to(1.0, 1.0));
        let r = report(Agent::Robot, 0, ranges_to(1.4, 1.0));
        let out = server.step(0, 0, &[h, r]);
        let sig = out.signal.unwrap();
        assert_eq!(sig.flag, Flag::Close);
        assert!((sig.separation_est - 0.4).abs() < 1e-9);
    }

    #[test]
    fn staleness_horizon() {
        let mut server = Server::new(AnchorLayout::default(), 5).unwrap();
        let h = |seq| report(Agent::Human, seq, ranges_to(1.0, 0.0));
        let r = report(Agent::Robot, 0, ranges_to(2.0, 2.0));
        assert!(server.step(0, 0, &[h(0), r]).signal.is_some());
        // robot silent from tick 1 on; its cached vector ages
        for tick in 1..=5 {
            let out = server.step(tick, tick * 100, &[h(tick as u32)]);
            assert!(out.signal.is_some(), "tick {tick}");
            assert_eq!(out.signal.unwrap().flag, Flag::Safe);
        }
        let out = server.step(6, 600, &[h(6)]);
        assert!(out.signal.is_none());
        assert!(out.human.is_some() && out.robot.is_none());
    }

    #[test]
    fn latest_wins_and_old_seq_ignored() {
        let mut server = Server::new(AnchorLayout::default(), 5).unwrap();
        let a = report(Agent::Human, 3, ranges_to(1.0, 0.0));
        let b = report(Agent::Human, 4, ranges_to(0.5, 0.5));
        let r = report(Agent::Robot, 0, ranges_to(0.5, 0.5));
        let out = server.step(0, 0, &[a, b, r]);
        assert!(out.separation.unwrap() < 1e-9);
        let out = server.step(1, 100, &[a]);
        assert!(out.separation.unwrap() < 1e-9);
        assert_eq!(server.counters.stale_or_duplicate, 1);
    }

    #[test]
    fn invalid_ranges_degrade_to_no_signal() {
        let mut server = Server::new(AnchorLayout::default(), 5).unwrap();
        let h = report(Agent::Human, 0, [f64::NAN, 1.0, 1.0]);
        let r = report(Agent::Robot, 0, ranges_to(1.0, 1.0));
        assert!(server.step(0, 0, &[h, r]).signal.is_none());
        assert_eq!(server.counters.invalid_ranges, 1);
    }

    #[test]
    fn boundary_separation_is_safe() {
        assert_eq!(Flag::for_separation(0.5), Flag::Safe);
        assert_eq!(Flag::for_separation(0.49), Flag::Close);
    }

    #[test]
    fn signal_json_lines() {
        let mut buf = Vec::new();
        write_signals(&mut buf, &[NavSignal::new(100, 0.25), NavSignal::new(200, 1.5)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"t_ms\":100,\"flag\":\"CLOSE\",\"sep\":0.25}\n{\"t_ms\":200,\"flag\":\"SAFE\",\"sep\":1.5}\n"
        );
    }

    #[test]
    fn channel_latency_and_order() {
        let mut ch = Channel::new(ChannelConfig { drop_probability: 0.0, latency_ticks: 2, seed: 1 }).unwrap();
        ch.send(0, vec![1]);
        ch.send(0, vec![2]);
        ch.send(1, vec![3]);
        assert!(ch.deliver(1).is_empty());
        assert_eq!(ch.deliver(2), vec![vec![1], vec![2]]);
        assert_eq!(ch.deliver(3), vec![vec![3]]);
        assert!(Channel::new(ChannelConfig { drop_probability: 1.0, latency_ticks: 0, seed: 1 }).is_err());
    }

    #[test]
    fn lossless_network_matches_direct_pipeline() {
        for spec in scenario::builtin_scenarios() {
            let direct = scenario::run_scenario(&spec).unwrap();
            let net = run_networked(&spec).unwrap();
            assert_eq!(net.ticks.len(), direct.estimates.len());
            for (n, d) in net.ticks.iter().zip(&direct.estimates) {
                let e = n.estimate().unwrap();
                assert_eq!(e.separation.to_bits(), d.separation.to_bits());
            }
            assert_eq!(net.rows(), direct.rows());
        }
    }

    #[test]
    fn latency_delays_first_signal() {
        let mut spec = builtin("scenario1").unwrap();
        spec.network.latency_ticks = 3;
        let net = run_networked(&spec).unwrap();
        assert!(net.ticks[..3].iter().all(|t| t.output.signal.is_none()));
        assert!(net.ticks[3..].iter().all(|t| t.output.signal.is_some()));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(human in any::<bool>(), seq in any::<u32>(), ts in any::<u64>(), d in any::<[u64; 3]>()) {
            let r = DistanceReport {
                node: if human { Agent::Human } else { Agent::Robot },
                seq,
                timestamp_ms: ts,
                d: d.map(f64::from_bits),
            };
            let back = decode_report(&encode_report(&r)).unwrap();
            prop_assert!(back.bit_eq(&r));
        }
    }
}
