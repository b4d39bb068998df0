//! Decentralised flow: devices derive identifiers from their own daily keys,
//! diagnosed users upload those keys, the server republishes them in 24 h
//! batches and every device matches locally.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    within_validity, ContactLog, ContactRecord, ExposureNotification, ProtocolError, RiskAccumulator,
    RiskContext, ServerLedger,
};
use crate::clock::{SimClock, Tick, INTERVALS_PER_DAY, RETENTION_DAYS};
use crate::config::ProtocolKind;
use crate::crypto::{derive_ephemeral_id, expand_key, DiagnosisKey, EphemeralId};
use crate::radio::Reception;
use crate::rng::SimRng;
use crate::world::AgentId;

#[derive(Debug)]
pub struct DeviceState {
    pub owner: AgentId,
    key_rng: SimRng,
    /// Daily keys for the retention window, oldest first.
    keys: Vec<DiagnosisKey>,
    /// Every key this device ever held; never matched against.
    own_keys: HashSet<[u8; 16]>,
    /// Identifiers sent, by global interval index.
    sent: Vec<(u64, EphemeralId)>,
    contacts: ContactLog,
    /// Indices of records already consumed by a match.
    consumed: HashSet<usize>,
    reported: bool,
    accumulator: RiskAccumulator,
}

/// Keys a diagnosed user hands to the server.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upload {
    pub keys: Vec<DiagnosisKey>,
}

impl DeviceState {
    pub fn new(owner: AgentId, key_rng: SimRng) -> Self {
        Self {
            owner,
            key_rng,
            keys: Vec::new(),
            own_keys: HashSet::new(),
            sent: Vec::new(),
            contacts: ContactLog::default(),
            consumed: HashSet::new(),
            reported: false,
            accumulator: RiskAccumulator::default(),
        }
    }

    fn key_for_day(&mut self, day: u64) -> DiagnosisKey {
        if let Some(k) = self.keys.iter().rev().find(|k| k.day_index == day) {
            return *k;
        }
        let k = DiagnosisKey::generate(day, &mut self.key_rng);
        self.own_keys.insert(k.key_bytes);
        self.keys.push(k);
        k
    }

    /// The identifier to advertise during the current interval.
    pub fn current_eid(&mut self, clock: &SimClock) -> EphemeralId {
        let interval = clock.interval_index();
        if let Some((i, eid)) = self.sent.last() {
            if *i == interval {
                return *eid;
            }
        }
        let key = self.key_for_day(clock.day_index());
        let eid = derive_ephemeral_id(&key, clock.interval_in_day()).expect("interval_in_day < 96");
        self.sent.push((interval, eid));
        eid
    }

    pub fn on_reception(&mut self, reception: &Reception, clock: &SimClock) {
        self.contacts.on_reception(reception, clock);
    }

    pub fn contacts(&self) -> &[ContactRecord] {
        self.contacts.records()
    }

    pub fn sent_log(&self) -> &[(u64, EphemeralId)] {
        &self.sent
    }

    pub fn has_reported(&self) -> bool {
        self.reported
    }

    /// Daily retention pass over keys, sent identifiers and received records.
    pub fn prune(&mut self, clock: &SimClock) {
        let today = clock.day_index();
        self.keys.retain(|k| k.day_index + RETENTION_DAYS > today);
        let oldest_interval = (today + 1).saturating_sub(RETENTION_DAYS) * INTERVALS_PER_DAY as u64;
        self.sent.retain(|(i, _)| *i >= oldest_interval);
        // Consumed markers index into the record vector, which shifts.
        let consumed: HashSet<EphemeralId> =
            self.consumed.iter().map(|&i| self.contacts.records()[i].eid).collect();
        self.contacts.prune(clock);
        self.consumed = self
            .contacts
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| consumed.contains(&r.eid))
            .map(|(i, _)| i)
            .collect();
    }

    /// Uploads at most 14 daily keys (today and the 13 days before) and
    /// rotates to a fresh key for the rest of today.
    pub fn report_diagnosis(&mut self, clock: &SimClock) -> Result<Upload, ProtocolError> {
        if self.reported {
            return Err(ProtocolError::DuplicateReport(self.owner));
        }
        let today = clock.day_index();
        // make sure today's key exists even if the device never advertised
        self.key_for_day(today);
        let keys: Vec<DiagnosisKey> =
            self.keys.iter().copied().filter(|k| k.day_index + RETENTION_DAYS > today).collect();
        self.reported = true;
        self.keys.clear();
        let fresh = DiagnosisKey::generate(today, &mut self.key_rng);
        self.own_keys.insert(fresh.key_bytes);
        self.keys.push(fresh);
        self.sent.retain(|(i, _)| *i != clock.interval_index());
        Ok(Upload { keys })
    }

    /// Matches stored records against a published batch. Each record is
    /// consumed at most once; a notification fires when the accumulated risk
    /// reaches the threshold.
    pub fn match_local(&mut self, batch: &BatchIndex, ctx: &RiskContext, tolerance_s: u64) -> Vec<ExposureNotification> {
        let step = ctx.step_seconds;
        for (i, rec) in self.contacts.records().iter().enumerate() {
            if self.consumed.contains(&i) || batch.blacklist.contains(&rec.eid) {
                continue;
            }
            let Some(hit) = batch.eids.get(&rec.eid) else { continue };
            let published = &batch.keys[hit.key];
            if self.own_keys.contains(&published.key.key_bytes) {
                continue;
            }
            if !within_validity(hit.interval_start_s, rec.first_tick, step, tolerance_s) {
                continue;
            }
            self.accumulator.add_record(rec, ctx, published.uploaded_tick);
            self.consumed.insert(i);
        }
        match self.accumulator.fire(ctx) {
            Some((risk_score, cause, report_tick)) => vec![ExposureNotification {
                agent_id: self.owner,
                tick: batch.publish_tick,
                protocol: ProtocolKind::Decentralised,
                risk_score,
                cause,
                report_tick,
            }],
            None => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKey {
    pub key: DiagnosisKey,
    pub uploaded_tick: Tick,
}

/// One 24 h publication: keys uploaded since the previous batch plus the
/// current identifier blacklist. No pseudonyms, no network identifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyBatch {
    pub publish_tick: Tick,
    pub keys: Vec<PublishedKey>,
    pub blacklist: Vec<EphemeralId>,
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    key: usize,
    interval_start_s: u64,
}

/// A batch with every key expanded once, shared by all matching devices.
#[derive(Debug)]
pub struct BatchIndex {
    pub publish_tick: Tick,
    keys: Vec<PublishedKey>,
    eids: HashMap<EphemeralId, Hit>,
    blacklist: HashSet<EphemeralId>,
}

impl BatchIndex {
    pub fn new(batch: &KeyBatch) -> Self {
        let mut eids = HashMap::with_capacity(batch.keys.len() * INTERVALS_PER_DAY as usize);
        for (k, pk) in batch.keys.iter().enumerate() {
            for (i, eid) in expand_key(&pk.key).into_iter().enumerate() {
                eids.insert(eid, Hit { key: k, interval_start_s: pk.key.interval_start_seconds(i as u32) });
            }
        }
        Self {
            publish_tick: batch.publish_tick,
            keys: batch.keys.clone(),
            eids,
            blacklist: batch.blacklist.iter().copied().collect(),
        }
    }
}

/// Stores uploaded keys with their arrival time and nothing else.
#[derive(Debug, Default)]
pub struct DecentralisedServer {
    uploads: Vec<(Tick, Vec<DiagnosisKey>)>,
    pending: Vec<PublishedKey>,
    blacklist: BTreeSet<EphemeralId>,
    batches: Vec<KeyBatch>,
}

impl DecentralisedServer {
    pub fn new(blacklist: impl IntoIterator<Item = EphemeralId>) -> Self {
        Self { blacklist: blacklist.into_iter().collect(), ..Self::default() }
    }

    pub fn receive_upload(&mut self, upload: Upload, tick: Tick) {
        self.pending.extend(upload.keys.iter().map(|&key| PublishedKey { key, uploaded_tick: tick }));
        self.uploads.push((tick, upload.keys));
    }

    pub fn blacklist_ids(&mut self, eids: impl IntoIterator<Item = EphemeralId>) {
        self.blacklist.extend(eids);
    }

    /// Publishes everything uploaded since the previous batch. Only valid on
    /// a 24 h boundary.
    pub fn publish_batch(&mut self, clock: &SimClock) -> Result<KeyBatch, ProtocolError> {
        if !clock.is_day_boundary() {
            return Err(ProtocolError::NotBatchBoundary(clock.tick()));
        }
        let batch = KeyBatch {
            publish_tick: clock.tick(),
            keys: std::mem::take(&mut self.pending),
            blacklist: self.blacklist.iter().copied().collect(),
        };
        self.batches.push(batch.clone());
        Ok(batch)
    }

    pub fn uploads(&self) -> &[(Tick, Vec<DiagnosisKey>)] {
        &self.uploads
    }

    pub fn published_batches(&self) -> &[KeyBatch] {
        &self.batches
    }

    /// One health-status entry per upload; the server holds no contact
    /// structure at all, so it can learn no social-graph edges.
    pub fn ledger(&self) -> ServerLedger {
        ServerLedger { health_status_entries: self.uploads.len(), social_graph_edges: 0, location_observations: 0 }
    }
}
