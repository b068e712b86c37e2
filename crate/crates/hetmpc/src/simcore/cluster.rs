use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::record::{decode_all, encode_all, Record};
use super::telemetry::{
    RoundExport, RoundTelemetry, RunReport, TrafficSummary, Violation, ViolationKind,
};
use super::{ClusterConfig, Mode, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MachineId {
    Large,
    /// small machines are numbered 1..=K
    Small(usize),
}

impl MachineId {
    pub fn slot(self) -> usize {
        match self {
            MachineId::Large => 0,
            MachineId::Small(i) => i,
        }
    }

    pub fn from_slot(slot: usize) -> Self {
        if slot == 0 {
            MachineId::Large
        } else {
            MachineId::Small(slot)
        }
    }

    /// Zero-based shard index of a small machine.
    pub fn shard(self) -> Option<usize> {
        match self {
            MachineId::Large => None,
            MachineId::Small(i) => Some(i - 1),
        }
    }

    pub fn of_shard(i: usize) -> Self {
        MachineId::Small(i + 1)
    }
}

impl std::fmt::Display for MachineId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MachineId::Large => f.write_str("L"),
            MachineId::Small(i) => write!(f, "S{i}"),
        }
    }
}

impl Serialize for MachineId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MachineId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "L" {
            return Ok(MachineId::Large);
        }
        s.strip_prefix('S')
            .and_then(|x| x.parse().ok())
            .filter(|&i: &usize| i > 0)
            .map(MachineId::Small)
            .ok_or_else(|| serde::de::Error::custom(format!("bad machine id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub src: MachineId,
    pub dst: MachineId,
    pub round: usize,
    pub seq: usize,
    pub payload: Vec<u64>,
}

impl Message {
    pub fn words(&self) -> usize {
        self.payload.len()
    }

    pub fn decode<T: Record>(&self) -> Result<Vec<T>, SimError> {
        decode_all(&self.payload)
    }
}

/// What a machine sees while executing its step in a round.
pub struct Ctx<'a> {
    pub id: MachineId,
    pub round: usize,
    small_count: usize,
    inbox: &'a [Message],
    rng_seed: u64,
    rng: Option<ChaCha8Rng>,
    out: Vec<(MachineId, Vec<u64>)>,
    resident: usize,
}

impl<'a> Ctx<'a> {
    pub fn is_large(&self) -> bool {
        self.id == MachineId::Large
    }

    pub fn shard(&self) -> Option<usize> {
        self.id.shard()
    }

    pub fn small_count(&self) -> usize {
        self.small_count
    }

    pub fn inbox(&self) -> &'a [Message] {
        self.inbox
    }

    /// Decodes every message in the inbox as a stream of `T`, in delivery order.
    pub fn recv<T: Record>(&self) -> Result<Vec<T>, SimError> {
        let mut out = Vec::new();
        for msg in self.inbox {
            out.extend(msg.decode::<T>()?);
        }
        Ok(out)
    }

    /// Like [`Ctx::recv`] but keeps the sender of each record.
    pub fn recv_from<T: Record>(&self) -> Result<Vec<(MachineId, T)>, SimError> {
        let mut out = Vec::new();
        for msg in self.inbox {
            out.extend(msg.decode::<T>()?.into_iter().map(|x| (msg.src, x)));
        }
        Ok(out)
    }

    pub fn send(&mut self, dst: MachineId, payload: Vec<u64>) {
        if !payload.is_empty() {
            self.out.push((dst, payload));
        }
    }

    pub fn send_records<T: Record>(&mut self, dst: MachineId, items: &[T]) {
        if !items.is_empty() {
            self.out.push((dst, encode_all(items)));
        }
    }

    /// Private randomness of this machine for this round.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        let seed = self.rng_seed;
        self.rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn set_resident(&mut self, words: usize) {
        self.resident = words;
    }

    pub fn resident(&self) -> usize {
        self.resident
    }
}

pub(crate) fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn substream_seed(seed: u64, lane: u64, slot: usize, round: usize) -> u64 {
    mix(mix(mix(seed ^ lane.rotate_left(17)) ^ slot as u64) ^ (round as u64).rotate_left(32))
}

/// Records grouped into one message per (source, destination) pair.
#[derive(Debug, Default)]
pub struct Outbox {
    buf: std::collections::BTreeMap<(usize, usize), Vec<u64>>,
}

impl Outbox {
    pub fn new() -> Self {
        Outbox::default()
    }

    pub fn push<T: Record>(&mut self, src: MachineId, dst: MachineId, rec: &T) {
        rec.encode(self.buf.entry((src.slot(), dst.slot())).or_default());
    }

    pub fn push_words(&mut self, src: MachineId, dst: MachineId, words: &[u64]) {
        self.buf.entry((src.slot(), dst.slot())).or_default().extend_from_slice(words);
    }

    pub fn is_empty(&self) -> bool {
        self.buf.values().all(Vec::is_empty)
    }

    fn into_batches(self, slots: usize) -> Vec<Vec<(MachineId, Vec<u64>)>> {
        let mut out = vec![Vec::new(); slots];
        for ((src, dst), payload) in self.buf {
            if src < slots {
                out[src].push((MachineId::from_slot(dst), payload));
            }
        }
        out
    }
}

/// One large machine plus K small machines, advancing in synchronous rounds.
#[derive(Debug, Clone)]
pub struct Cluster {
    config: ClusterConfig,
    k: usize,
    small_budget: usize,
    large_budget: usize,
    mode: Mode,
    lane: u64,
    round_base: usize,
    inboxes: Vec<Vec<Message>>,
    resident: Vec<usize>,
    telemetry: Vec<RoundTelemetry>,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Result<Self, SimError> {
        config.validate()?;
        let k = config.small_machines();
        Ok(Cluster {
            k,
            small_budget: config.small_budget(),
            large_budget: config.large_budget(),
            mode: config.mode,
            lane: 0,
            round_base: 0,
            inboxes: vec![Vec::new(); k + 1],
            resident: vec![0; k + 1],
            telemetry: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn small_count(&self) -> usize {
        self.k
    }

    pub fn slots(&self) -> usize {
        self.k + 1
    }

    pub fn small_budget(&self) -> usize {
        self.small_budget
    }

    pub fn large_budget(&self) -> usize {
        self.large_budget
    }

    pub fn budget(&self, id: MachineId) -> usize {
        match id {
            MachineId::Large => self.large_budget,
            MachineId::Small(_) => self.small_budget,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn rounds_used(&self) -> usize {
        self.telemetry.len()
    }

    pub fn telemetry(&self) -> &[RoundTelemetry] {
        &self.telemetry
    }

    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.telemetry.iter().flat_map(|t| t.violations.iter())
    }

    pub fn resident(&self, id: MachineId) -> usize {
        self.resident[id.slot()]
    }

    /// Declares resident state outside of a round, e.g. after initial placement.
    pub fn set_resident(&mut self, id: MachineId, words: usize) {
        self.resident[id.slot()] = words;
    }

    /// Hands the delivered messages to the host for local computation between rounds.
    pub fn take_inboxes(&mut self) -> Vec<Vec<Message>> {
        let slots = self.slots();
        std::mem::replace(&mut self.inboxes, vec![Vec::new(); slots])
    }

    /// One round in which every machine sends a precomputed batch, as planned by
    /// local computation after the previous round. `transient[slot]` is state held
    /// only for this round, on top of the resident words. Returns the inboxes.
    pub fn exchange(
        &mut self,
        label: &str,
        outbox: Outbox,
        transient: &[usize],
    ) -> Result<Vec<Vec<Message>>, SimError> {
        let mut batches = outbox.into_batches(self.slots());
        let base = self.resident.clone();
        let res = self.run_round(label, |ctx| {
            let slot = ctx.id.slot();
            for (dst, payload) in std::mem::take(&mut batches[slot]) {
                ctx.send(dst, payload);
            }
            let extra = transient.get(slot).copied().unwrap_or(0);
            ctx.set_resident(ctx.resident() + extra);
            Ok(())
        })
        .map(|_| ());
        self.resident = base;
        res?;
        Ok(self.take_inboxes())
    }

    /// The private random stream machine `id` gets in the next round.
    pub fn rng_for(&self, id: MachineId) -> ChaCha8Rng {
        let round = self.round_base + self.telemetry.len();
        ChaCha8Rng::seed_from_u64(substream_seed(self.config.seed, self.lane, id.slot(), round))
    }

    /// True when no message is waiting for delivery.
    pub fn quiescent(&self) -> bool {
        self.inboxes.iter().all(Vec::is_empty)
    }

    /// Executes one synchronous round: every machine runs `step` on its inbox,
    /// then all outgoing messages cross the barrier.
    pub fn run_round<F>(&mut self, label: &str, mut step: F) -> Result<&RoundTelemetry, SimError>
    where
        F: FnMut(&mut Ctx<'_>) -> Result<(), SimError>,
    {
        let round = self.telemetry.len();
        let slots = self.slots();
        let inboxes = std::mem::replace(&mut self.inboxes, vec![Vec::new(); slots]);
        let mut sent = vec![0usize; slots];
        let mut received = vec![0usize; slots];
        let mut outgoing: Vec<Message> = Vec::new();

        for (slot, inbox) in inboxes.iter().enumerate() {
            let id = MachineId::from_slot(slot);
            let mut ctx = Ctx {
                id,
                round,
                small_count: self.k,
                inbox,
                rng_seed: substream_seed(self.config.seed, self.lane, slot, self.round_base + round),
                rng: None,
                out: Vec::new(),
                resident: self.resident[slot],
            };
            step(&mut ctx)?;
            self.resident[slot] = ctx.resident;
            for (seq, (dst, payload)) in ctx.out.into_iter().enumerate() {
                if dst.slot() >= slots {
                    return Err(SimError::Config(format!("{id} addressed unknown machine {dst}")));
                }
                sent[slot] += payload.len();
                outgoing.push(Message { src: id, dst, round, seq, payload });
            }
        }

        // canonical delivery order
        outgoing.sort_by_key(|m| (m.dst.slot(), m.src.slot(), m.seq));
        for msg in outgoing {
            received[msg.dst.slot()] += msg.payload.len();
            self.inboxes[msg.dst.slot()].push(msg);
        }

        let tel = RoundTelemetry {
            round,
            label: label.to_string(),
            sent,
            received,
            resident: self.resident.clone(),
            violations: Vec::new(),
        };
        self.record(tel)
    }

    fn record(&mut self, mut tel: RoundTelemetry) -> Result<&RoundTelemetry, SimError> {
        tel.round = self.telemetry.len();
        tel.violations = self.check(&tel);
        let first = tel.violations.first().cloned();
        self.telemetry.push(tel);
        if let (Some(v), Mode::Strict) = (first, self.mode) {
            return Err(SimError::Budget {
                round: self.telemetry.len() - 1,
                machine: v.machine,
                kind: v.kind,
                used: v.used,
                budget: v.budget,
            });
        }
        Ok(self.telemetry.last().expect("just pushed"))
    }

    fn check(&self, tel: &RoundTelemetry) -> Vec<Violation> {
        let mut out = Vec::new();
        for slot in 0..tel.sent.len() {
            let machine = MachineId::from_slot(slot);
            let budget = self.budget(machine);
            for (kind, used) in [
                (ViolationKind::SendBudget, tel.sent[slot]),
                (ViolationKind::RecvBudget, tel.received[slot]),
                (ViolationKind::StateBudget, tel.resident[slot]),
            ] {
                if used > budget {
                    out.push(Violation { machine, kind, used, budget });
                }
            }
        }
        out
    }

    /// Starts an independent lane that runs in parallel with its siblings.
    /// Lanes draw from their own random substreams and never fail on budgets
    /// themselves; [`Cluster::join`] checks the combined load.
    pub fn fork(&self, lane: usize) -> Cluster {
        let mut child = self.clone();
        child.telemetry = Vec::new();
        child.inboxes = vec![Vec::new(); self.slots()];
        child.mode = Mode::Tolerant;
        child.lane = mix(self.lane ^ mix(lane as u64 + 1));
        child.round_base = self.round_base + self.telemetry.len();
        child
    }

    /// Merges parallel lanes: a merged round lasts as long as the longest lane,
    /// traffic adds up across lanes, and budgets are checked on the sums.
    pub fn join(&mut self, lanes: Vec<Cluster>) -> Result<(), SimError> {
        let base = self.resident.clone();
        let len = lanes.iter().map(|c| c.telemetry.len()).max().unwrap_or(0);
        for r in 0..len {
            let slots = self.slots();
            let mut tel = RoundTelemetry {
                label: String::new(),
                sent: vec![0; slots],
                received: vec![0; slots],
                resident: base.clone(),
                ..Default::default()
            };
            for lane in &lanes {
                let Some(t) = lane.telemetry.get(r) else { continue };
                if tel.label.is_empty() {
                    tel.label = format!("parallel:{}", t.label);
                }
                for s in 0..slots {
                    tel.sent[s] += t.sent[s];
                    tel.received[s] += t.received[s];
                    tel.resident[s] += t.resident[s].saturating_sub(base[s]);
                }
            }
            self.record(tel)?;
        }
        Ok(())
    }

    /// A dedicated round in which small machine 1 sends one word more than its budget.
    pub fn inject_overflow(&mut self) -> Result<(), SimError> {
        let words = self.small_budget + 1;
        self.run_round("inject-overflow", |ctx| {
            if ctx.id == MachineId::Small(1) {
                ctx.send(MachineId::Large, vec![0; words]);
            }
            Ok(())
        })?;
        // drop the junk so later rounds start clean
        self.inboxes[0].clear();
        Ok(())
    }

    pub fn report(&self) -> RunReport {
        RunReport {
            rounds_used: self.telemetry.len(),
            seed: self.config.seed,
            small_machines: self.k,
            small_budget: self.small_budget,
            large_budget: self.large_budget,
            rounds: self
                .telemetry
                .iter()
                .map(|t| RoundExport {
                    round: t.round,
                    label: t.label.clone(),
                    machines: t.active(),
                    violations: t.violations.clone(),
                })
                .collect(),
            violations: self.violations().cloned().collect(),
        }
    }

    pub fn summary(&self) -> TrafficSummary {
        let mut s = TrafficSummary { rounds_used: self.telemetry.len(), ..Default::default() };
        for t in &self.telemetry {
            s.total_words += t.total_sent();
            s.max_large_received = s.max_large_received.max(t.received[0]);
            s.max_small_sent = s.max_small_sent.max(t.sent[1..].iter().copied().max().unwrap_or(0));
            s.max_small_received =
                s.max_small_received.max(t.received[1..].iter().copied().max().unwrap_or(0));
            s.violations += t.violations.len();
        }
        s
    }
}
