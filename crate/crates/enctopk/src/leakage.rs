//! The leakage log records everything either party could observe beyond
//! ciphertext bytes: S2's per-depth zero decryptions of equality operands
//! (the equality pattern), comparison tie events, dedup/filter removal
//! counts, and S1's query pattern, halting depth, and — in elimination
//! mode — per-depth distinct counts. The auditor replays a plaintext copy
//! of the relation and checks that nothing outside the declared profile was
//! observed and that no raw id or score crossed the channel.

use crate::error::{Error, Result};
use crate::oracle::{sorted_lists, Relation};
use crate::wire::{Ctx, Phase};
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// S2 decrypted `total` equality operands in this context; `zeros` of
    /// them were zero.
    S2Eq { query: u32, depth: u32, phase: Phase, zeros: u32, total: u32 },
    /// S2 observed `zeros` exact ties among `total` blinded comparisons.
    S2Cmp { query: u32, depth: u32, phase: Phase, zeros: u32, total: u32 },
    /// S2 voided or removed `removed` duplicate items (kept `kept`).
    S2Dedup { query: u32, depth: u32, phase: Phase, removed: u32, kept: u32 },
    /// S2 dropped `removed` non-matching joined tuples.
    S2Filter { query: u32, removed: u32, kept: u32 },
    S2Halt { query: u32, depth: u32 },
    /// S1 received a token; `repeated` is the query pattern bit.
    S1Token { query: u32, fingerprint: [u8; 16], repeated: bool },
    /// S1 observed a distinct count (elimination mode only).
    S1Up { query: u32, depth: u32, distinct: u32 },
    S1Halt { query: u32, depth: u32 },
}

impl Event {
    fn is_s1(&self) -> bool {
        matches!(self, Event::S1Token { .. } | Event::S1Up { .. } | Event::S1Halt { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeakageLog {
    pub events: Vec<Event>,
}

impl LeakageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn eq_observation(&mut self, ctx: Ctx, zeros: u32, total: u32) {
        self.push(Event::S2Eq { query: ctx.query, depth: ctx.depth, phase: ctx.phase, zeros, total });
    }

    pub fn cmp_observation(&mut self, ctx: Ctx, zeros: u32, total: u32) {
        self.push(Event::S2Cmp { query: ctx.query, depth: ctx.depth, phase: ctx.phase, zeros, total });
    }

    pub fn merge(&mut self, other: LeakageLog) {
        self.events.extend(other.events);
    }

    /// Sum of S2 zero-⊖ observations per (depth, phase) for one query.
    pub fn eq_zeros(&self, query: u32) -> BTreeMap<(u32, u8), (u32, u32)> {
        let mut out: BTreeMap<(u32, u8), (u32, u32)> = BTreeMap::new();
        for e in &self.events {
            if let Event::S2Eq { query: q, depth, phase, zeros, total } = e {
                if *q == query {
                    let c = out.entry((*depth, *phase as u8)).or_default();
                    c.0 += zeros;
                    c.1 += total;
                }
            }
        }
        out
    }

    pub fn export(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            match e {
                Event::S2Eq { query, depth, phase, zeros, total } => {
                    writeln!(s, "s2eq\t{query}\t{depth}\t{}\t{zeros}\t{total}", *phase as u8)
                }
                Event::S2Cmp { query, depth, phase, zeros, total } => {
                    writeln!(s, "s2cmp\t{query}\t{depth}\t{}\t{zeros}\t{total}", *phase as u8)
                }
                Event::S2Dedup { query, depth, phase, removed, kept } => {
                    writeln!(s, "s2dedup\t{query}\t{depth}\t{}\t{removed}\t{kept}", *phase as u8)
                }
                Event::S2Filter { query, removed, kept } => {
                    writeln!(s, "s2filter\t{query}\t{removed}\t{kept}")
                }
                Event::S2Halt { query, depth } => writeln!(s, "s2halt\t{query}\t{depth}"),
                Event::S1Token { query, fingerprint, repeated } => {
                    let fp: String = fingerprint.iter().map(|b| format!("{b:02x}")).collect();
                    writeln!(s, "s1token\t{query}\t{fp}\t{}", u8::from(*repeated))
                }
                Event::S1Up { query, depth, distinct } => {
                    writeln!(s, "s1up\t{query}\t{depth}\t{distinct}")
                }
                Event::S1Halt { query, depth } => writeln!(s, "s1halt\t{query}\t{depth}"),
            }
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<LeakageLog> {
        let mut log = LeakageLog::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Format(format!("leakage log line {}", ln + 1));
            let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
            let ev = match f[0] {
                "s2eq" | "s2cmp" | "s2dedup" if f.len() == 6 => {
                    let phase = Phase::from_u8(num(f[3])? as u8)?;
                    let (a, b) = (num(f[4])?, num(f[5])?);
                    match f[0] {
                        "s2eq" => Event::S2Eq { query: num(f[1])?, depth: num(f[2])?, phase, zeros: a, total: b },
                        "s2cmp" => Event::S2Cmp { query: num(f[1])?, depth: num(f[2])?, phase, zeros: a, total: b },
                        _ => Event::S2Dedup { query: num(f[1])?, depth: num(f[2])?, phase, removed: a, kept: b },
                    }
                }
                "s2filter" if f.len() == 4 => {
                    Event::S2Filter { query: num(f[1])?, removed: num(f[2])?, kept: num(f[3])? }
                }
                "s2halt" if f.len() == 3 => Event::S2Halt { query: num(f[1])?, depth: num(f[2])? },
                "s1token" if f.len() == 4 => {
                    let raw = f[2];
                    if raw.len() != 32 {
                        return Err(bad());
                    }
                    let mut fp = [0u8; 16];
                    for i in 0..16 {
                        fp[i] = u8::from_str_radix(&raw[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
                    }
                    Event::S1Token { query: num(f[1])?, fingerprint: fp, repeated: f[3] == "1" }
                }
                "s1up" if f.len() == 4 => {
                    Event::S1Up { query: num(f[1])?, depth: num(f[2])?, distinct: num(f[3])? }
                }
                "s1halt" if f.len() == 3 => Event::S1Halt { query: num(f[1])?, depth: num(f[2])? },
                _ => return Err(bad()),
            };
            log.push(ev);
        }
        Ok(log)
    }
}

/// What the auditor knows about one executed ranking query.
#[derive(Debug, Clone)]
pub struct AuditQuery {
    pub query_id: u32,
    pub attrs: Vec<usize>,
    pub weights: Vec<u64>,
    pub k: usize,
    pub elim: bool,
    pub halt_depth: u32,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Expected S2 zero-⊖ counts at one depth, derived from the plaintext:
/// (same-depth co-occurrence pairs, dedup-matrix pairs, update matches).
pub fn expected_eq_zeros(rel: &Relation, attrs: &[usize], depth: usize) -> (u32, u32, u32) {
    let lists = sorted_lists(rel, attrs);
    let rows_at = |d: usize| -> Vec<usize> { lists.iter().map(|l| l[d - 1]).collect() };
    let rows = rows_at(depth);
    let mut mult: BTreeMap<usize, u32> = BTreeMap::new();
    for r in &rows {
        *mult.entry(*r).or_default() += 1;
    }
    let pair_zeros: u32 = mult.values().map(|&c| c * (c - 1) / 2).sum();
    let mut seen_before: HashSet<usize> = HashSet::new();
    for d in 1..depth {
        for r in rows_at(d) {
            seen_before.insert(r);
        }
    }
    let update_matches =
        mult.keys().filter(|r| seen_before.contains(r)).count() as u32;
    (pair_zeros, pair_zeros, update_matches)
}

/// Verify a run's leakage against the declared profile.
///
/// Checks: (a) S2's zero-⊖ counts per depth and phase equal the plaintext
/// equality-pattern counts; (b) S1 observed nothing outside the query
/// pattern and halting depth (plus distinct counts in elimination mode);
/// (c) optionally, that no raw object id or score encoding appears in any
/// captured payload.
pub fn leakage_audit(
    log: &LeakageLog,
    rel: &Relation,
    queries: &[AuditQuery],
    payloads: Option<&[Vec<u8>]>,
) -> AuditReport {
    let mut report = AuditReport::default();
    for q in queries {
        let zeros = log.eq_zeros(q.query_id);
        for depth in 1..=q.halt_depth {
            let (worst, dedup, update) = expected_eq_zeros(rel, &q.attrs, depth as usize);
            let check = |phase: Phase, expect: u32, report: &mut AuditReport| {
                let got = zeros.get(&(depth, phase as u8)).copied().unwrap_or((0, 0)).0;
                if got != expect {
                    report.violations.push(format!(
                        "query {} depth {depth} {}: {got} zero decryptions, plaintext predicts {expect}",
                        q.query_id,
                        phase.name()
                    ));
                }
            };
            check(Phase::Worst, worst, &mut report);
            check(Phase::Dedup, dedup, &mut report);
            check(Phase::Update, update, &mut report);
        }
        // S1 scope
        for e in &log.events {
            if !e.is_s1() {
                continue;
            }
            match e {
                Event::S1Token { .. } | Event::S1Halt { .. } => {}
                Event::S1Up { query, .. } if *query == q.query_id && !q.elim => {
                    report
                        .violations
                        .push(format!("query {} leaked distinct counts outside elim mode", query));
                }
                _ => {}
            }
        }
    }
    if let Some(payloads) = payloads {
        for v in scan_payloads(payloads, rel) {
            report.violations.push(v);
        }
    }
    report
}

/// Scan raw payload bytes for forbidden plaintext encodings: object ids
/// (4+ bytes, shorter ids would false-positive on random ciphertext bytes)
/// and attribute values as 8-byte big-endian integers.
pub fn scan_payloads(payloads: &[Vec<u8>], rel: &Relation) -> Vec<String> {
    let mut patterns: Vec<Vec<u8>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for id in &rel.ids {
        if id.len() >= 4 {
            patterns.push(id.clone());
            labels.push(format!("object id {:?}", String::from_utf8_lossy(id)));
        }
    }
    let mut values: HashSet<u64> = HashSet::new();
    for row in &rel.values {
        for &v in row {
            values.insert(v);
        }
    }
    for v in values {
        patterns.push(v.to_be_bytes().to_vec());
        labels.push(format!("raw score {v}"));
    }
    let ac = aho_corasick::AhoCorasick::new(&patterns).expect("pattern set");
    let mut out = Vec::new();
    'outer: for (i, p) in payloads.iter().enumerate() {
        if let Some(m) = ac.find(p) {
            out.push(format!("payload {i}: contains {}", labels[m.pattern().as_usize()]));
            if out.len() > 8 {
                break 'outer;
            }
        }
    }
    out
}
