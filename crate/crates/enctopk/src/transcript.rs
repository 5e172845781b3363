//! Message and byte accounting per (query, depth, phase, direction).
//! The acceptance suite reads these tables to check that full-mode per-depth
//! bandwidth is independent of k and grows with m like the m² dedup term.

use crate::wire::{Ctx, Phase};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub sent_msgs: u64,
    pub sent_bytes: u64,
    pub recv_msgs: u64,
    pub recv_bytes: u64,
}

impl Counters {
    pub fn total_bytes(&self) -> u64 {
        self.sent_bytes + self.recv_bytes
    }

    pub fn total_msgs(&self) -> u64 {
        self.sent_msgs + self.recv_msgs
    }

    fn add(&mut self, other: &Counters) {
        self.sent_msgs += other.sent_msgs;
        self.sent_bytes += other.sent_bytes;
        self.recv_msgs += other.recv_msgs;
        self.recv_bytes += other.recv_bytes;
    }
}

/// S1-side view of an execution: every frame in either direction, keyed by
/// the context it was exchanged under.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    rows: BTreeMap<(u32, u32, u8), Counters>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_send(&mut self, ctx: Ctx, bytes: usize) {
        let c = self.rows.entry((ctx.query, ctx.depth, ctx.phase as u8)).or_default();
        c.sent_msgs += 1;
        c.sent_bytes += bytes as u64;
    }

    pub fn record_recv(&mut self, ctx: Ctx, bytes: usize) {
        let c = self.rows.entry((ctx.query, ctx.depth, ctx.phase as u8)).or_default();
        c.recv_msgs += 1;
        c.recv_bytes += bytes as u64;
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn totals(&self) -> Counters {
        let mut t = Counters::default();
        for c in self.rows.values() {
            t.add(c);
        }
        t
    }

    /// Aggregate counters per depth for one query.
    pub fn per_depth(&self, query: u32) -> BTreeMap<u32, Counters> {
        let mut out: BTreeMap<u32, Counters> = BTreeMap::new();
        for (&(q, depth, _), c) in &self.rows {
            if q == query {
                out.entry(depth).or_default().add(c);
            }
        }
        out
    }

    /// Counters for one (query, depth, phase) cell.
    pub fn cell(&self, query: u32, depth: u32, phase: Phase) -> Counters {
        self.rows.get(&(query, depth, phase as u8)).copied().unwrap_or_default()
    }

    /// Per-depth counters restricted to a set of phases.
    pub fn per_depth_phases(&self, query: u32, phases: &[Phase]) -> BTreeMap<u32, Counters> {
        let wanted: Vec<u8> = phases.iter().map(|p| *p as u8).collect();
        let mut out: BTreeMap<u32, Counters> = BTreeMap::new();
        for (&(q, depth, ph), c) in &self.rows {
            if q == query && wanted.contains(&ph) {
                out.entry(depth).or_default().add(c);
            }
        }
        out
    }

    /// Stable digest over the full table; identical transcripts hash equal.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (&(q, d, p), c) in &self.rows {
            h.update(q.to_be_bytes());
            h.update(d.to_be_bytes());
            h.update([p]);
            h.update(c.sent_msgs.to_be_bytes());
            h.update(c.sent_bytes.to_be_bytes());
            h.update(c.recv_msgs.to_be_bytes());
            h.update(c.recv_bytes.to_be_bytes());
        }
        h.finalize().into()
    }

    /// Line-delimited export: `query depth phase sent_msgs sent_bytes recv_msgs recv_bytes`.
    pub fn export(&self) -> String {
        let mut s = String::new();
        for (&(q, d, p), c) in &self.rows {
            let phase = Phase::from_u8(p).map(|p| p.name()).unwrap_or("?");
            writeln!(
                s,
                "{q}\t{d}\t{phase}\t{}\t{}\t{}\t{}",
                c.sent_msgs, c.sent_bytes, c.recv_msgs, c.recv_bytes
            )
            .unwrap();
        }
        s
    }

    /// Human-readable per-depth bandwidth table for one query.
    pub fn report(&self, query: u32) -> String {
        let mut s = String::from("depth     msgs        bytes\n");
        for (d, c) in self.per_depth(query) {
            writeln!(s, "{d:<8} {:<10} {:<12}", c.total_msgs(), c.total_bytes()).unwrap();
        }
        let t = self.totals();
        writeln!(s, "total    {:<10} {:<12}", t.total_msgs(), t.total_bytes()).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_zero_table() {
        let t = Transcript::new();
        assert!(t.is_empty());
        assert_eq!(t.totals(), Counters::default());
        assert!(t.per_depth(0).is_empty());
    }

    #[test]
    fn accumulation_and_digest_stability() {
        let mut a = Transcript::new();
        let mut b = Transcript::new();
        for t in [&mut a, &mut b] {
            t.record_send(Ctx::new(1, 3, Phase::Worst), 100);
            t.record_recv(Ctx::new(1, 3, Phase::Worst), 50);
            t.record_send(Ctx::new(1, 4, Phase::Update), 10);
        }
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.per_depth(1)[&3].total_bytes(), 150);
        assert_eq!(a.totals().total_msgs(), 3);
        b.record_send(Ctx::new(1, 4, Phase::Update), 1);
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn export_is_line_per_cell() {
        let mut t = Transcript::new();
        t.record_send(Ctx::new(2, 1, Phase::Halt), 8);
        let e = t.export();
        assert_eq!(e.lines().count(), 1);
        assert!(e.contains("halt"));
    }
}
