//! Per-layer, per-protocol traffic accounting.
//!
//! Every send is booked under `(layer, tag, phase)` with three numbers:
//! frame count, payload bytes, and framed bytes (payload + 7 per frame).
//! Rounds are booked per layer: each protocol bumps the counter once per
//! communication wave, on every party, so any single party's ledger carries
//! the protocol-level round count and merging takes the maximum.
//!
//! A party's ledger records only what that party *sent*; the total traffic
//! of a session is the merge of all three ledgers.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::wire::{Phase, Tag, FRAME_OVERHEAD};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub messages: u64,
    pub payload_bytes: u64,
    pub framed_bytes: u64,
}

impl Traffic {
    fn add(&mut self, payload: u64) {
        self.messages += 1;
        self.payload_bytes += payload;
        self.framed_bytes += payload + FRAME_OVERHEAD;
    }

    fn merge(&mut self, other: &Traffic) {
        self.messages += other.messages;
        self.payload_bytes += other.payload_bytes;
        self.framed_bytes += other.framed_bytes;
    }
}

/// One exported ledger row.
#[derive(Clone, Debug, Serialize)]
pub struct LedgerRow {
    pub layer: u16,
    pub protocol: &'static str,
    pub phase: &'static str,
    pub messages: u64,
    pub payload_bytes: u64,
    pub framed_bytes: u64,
}

#[derive(Clone, Debug, Default)]
pub struct CommLedger {
    entries: BTreeMap<(u16, Tag, Phase), Traffic>,
    rounds: BTreeMap<u16, u32>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn note_send(&mut self, layer: u16, tag: Tag, payload_bytes: u64) {
        self.entries.entry((layer, tag, tag.phase())).or_default().add(payload_bytes);
    }

    pub fn note_round(&mut self, layer: u16) {
        *self.rounds.entry(layer).or_insert(0) += 1;
    }

    /// Sums another party's ledger into this one. Traffic adds; rounds take
    /// the maximum since every party books the same protocol-level waves.
    pub fn merge(&mut self, other: &CommLedger) {
        for (k, v) in &other.entries {
            self.entries.entry(*k).or_default().merge(v);
        }
        for (layer, r) in &other.rounds {
            let e = self.rounds.entry(*layer).or_insert(0);
            *e = (*e).max(*r);
        }
    }

    /// Total payload bytes booked for one layer, both phases.
    pub fn layer_payload(&self, layer: u16) -> u64 {
        self.entries
            .iter()
            .filter(|((l, _, _), _)| *l == layer)
            .map(|(_, t)| t.payload_bytes)
            .sum()
    }

    /// Total payload bytes for one layer restricted to a phase.
    pub fn layer_payload_phase(&self, layer: u16, phase: Phase) -> u64 {
        self.entries
            .iter()
            .filter(|((l, _, p), _)| *l == layer && *p == phase)
            .map(|(_, t)| t.payload_bytes)
            .sum()
    }

    /// Payload bytes for one (layer, tag) pair.
    pub fn tag_payload(&self, layer: u16, tag: Tag) -> u64 {
        self.entries
            .iter()
            .filter(|((l, t, _), _)| *l == layer && *t == tag)
            .map(|(_, t)| t.payload_bytes)
            .sum()
    }

    pub fn rounds_for_layer(&self, layer: u16) -> u32 {
        self.rounds.get(&layer).copied().unwrap_or(0)
    }

    /// Layers that booked any traffic or rounds, ascending.
    pub fn layers(&self) -> Vec<u16> {
        let mut out: Vec<u16> = self.entries.keys().map(|(l, _, _)| *l).collect();
        out.extend(self.rounds.keys().copied());
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn total_payload(&self) -> u64 {
        self.entries.values().map(|t| t.payload_bytes).sum()
    }

    pub fn total_framed(&self) -> u64 {
        self.entries.values().map(|t| t.framed_bytes).sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.entries.values().map(|t| t.messages).sum()
    }

    pub fn total_rounds(&self) -> u32 {
        self.rounds.values().sum()
    }

    pub fn rows(&self) -> Vec<LedgerRow> {
        self.entries
            .iter()
            .map(|((layer, tag, phase), t)| LedgerRow {
                layer: *layer,
                protocol: tag.label(),
                phase: phase.label(),
                messages: t.messages,
                payload_bytes: t.payload_bytes,
                framed_bytes: t.framed_bytes,
            })
            .collect()
    }

    /// CSV export: one row per (layer, protocol, phase), plus a `rounds`
    /// table keyed by layer.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["layer", "protocol", "phase", "messages", "payload_bytes", "framed_bytes"])?;
        for r in self.rows() {
            wtr.write_record([
                r.layer.to_string(),
                r.protocol.to_string(),
                r.phase.to_string(),
                r.messages.to_string(),
                r.payload_bytes.to_string(),
                r.framed_bytes.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export {
            rows: Vec<LedgerRow>,
            rounds: BTreeMap<u16, u32>,
            total_payload_bytes: u64,
            total_framed_bytes: u64,
            total_messages: u64,
        }
        serde_json::to_string_pretty(&Export {
            rows: self.rows(),
            rounds: self.rounds.clone(),
            total_payload_bytes: self.total_payload(),
            total_framed_bytes: self.total_framed(),
            total_messages: self.total_messages(),
        })
        .expect("ledger serializes")
    }
}
