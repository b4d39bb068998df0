//! Centralised flow: the server issues identifiers tied to long-term
//! pseudonyms, diagnosed users upload what they *received*, and the server
//! matches, notifies on poll, and exercises oversight over fan-out.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use hmac::{Hmac, KeyInit, Mac};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    within_validity, Cause, ContactLog, ContactRecord, ExposureNotification, HeldPolicy, ProtocolError,
    RiskAccumulator, RiskContext, ServerLedger,
};
use crate::clock::{SimClock, Tick, INTERVALS_PER_DAY, INTERVAL_SECONDS, RETENTION_DAYS};
use crate::config::ProtocolKind;
use crate::crypto::{expand_key, DiagnosisKey, EphemeralId};
use crate::radio::Reception;
use crate::rng::SimRng;
use crate::world::AgentId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pseudonym(pub u64);

/// Network origin of a registration request (one per honest device).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceId(pub u64);

/// Proof-of-work puzzle standing in for a CAPTCHA.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegistrationChallenge {
    pub nonce: u64,
    pub difficulty_bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChallengeToken {
    pub nonce: u64,
    pub solution: u64,
}

fn pow_ok(nonce: u64, solution: u64, difficulty_bits: u32) -> bool {
    let digest = Sha256::new().chain_update(nonce.to_le_bytes()).chain_update(solution.to_le_bytes()).finalize();
    let mut zeros = 0;
    for b in digest.iter() {
        if *b == 0 {
            zeros += 8;
            continue;
        }
        zeros += b.leading_zeros();
        break;
    }
    zeros >= difficulty_bits
}

impl RegistrationChallenge {
    pub fn solve(&self) -> ChallengeToken {
        let solution = (0u64..).find(|s| pow_ok(self.nonce, *s, self.difficulty_bits)).expect("search space");
        ChallengeToken { nonce: self.nonce, solution }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub source: SourceId,
    pub registered_tick: Tick,
}

/// Raised when one report fans out to more notifications than allowed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversightAlert {
    pub tick: Tick,
    pub reporter: Pseudonym,
    pub fanout: usize,
    pub held: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversightDecision {
    pub alert: bool,
    pub release: usize,
    pub hold: usize,
}

/// Fan-out check for a single report's attributable notifications.
pub fn detect_mass_notification(fanout: usize, threshold: usize, policy: HeldPolicy) -> OversightDecision {
    if fanout <= threshold {
        return OversightDecision { alert: false, release: fanout, hold: 0 };
    }
    let release = match policy {
        HeldPolicy::Release => fanout,
        HeldPolicy::Suppress => 0,
        HeldPolicy::Cap => threshold,
    };
    OversightDecision { alert: true, release, hold: fanout - release }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Notice {
    risk: f64,
    cause: Cause,
    report_tick: Tick,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CentralStats {
    pub rejected_challenge: usize,
    pub rejected_rate_limit: usize,
    pub unresolvable_eids: usize,
    pub stale_evidence: usize,
    pub blacklisted_evidence: usize,
    pub held_notifications: usize,
    pub alerts: Vec<OversightAlert>,
}

/// Outcome of one diagnosis report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportOutcome {
    pub flagged: BTreeSet<Pseudonym>,
    pub unresolvable: usize,
    pub attributable: usize,
    pub decision: OversightDecision,
}

#[derive(Clone, Debug)]
pub struct CentralParams {
    pub rate_limit_per_source: u32,
    pub pow_difficulty_bits: u32,
    pub fanout_threshold: usize,
    pub held_policy: HeldPolicy,
    pub replay_tolerance_s: u64,
}

#[derive(Debug)]
pub struct CentralServer {
    params: CentralParams,
    secret: [u8; 32],
    rng: SimRng,
    outstanding: BTreeSet<u64>,
    registry: BTreeMap<Pseudonym, Registration>,
    per_source_day: BTreeMap<(SourceId, u64), u32>,
    issued: HashSet<(Pseudonym, u64)>,
    /// Identifier -> (pseudonym, global interval index).
    issuance: HashMap<EphemeralId, (Pseudonym, u64)>,
    flagged: BTreeSet<Pseudonym>,
    accounts: BTreeMap<Pseudonym, RiskAccumulator>,
    reporters: BTreeSet<Pseudonym>,
    edges: BTreeSet<(Pseudonym, Pseudonym)>,
    deliverable: BTreeMap<Pseudonym, Vec<Notice>>,
    blacklist: HashSet<EphemeralId>,
    stats: CentralStats,
}

impl CentralServer {
    pub fn new(params: CentralParams, mut rng: SimRng) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self {
            params,
            secret,
            rng,
            outstanding: BTreeSet::new(),
            registry: BTreeMap::new(),
            per_source_day: BTreeMap::new(),
            issued: HashSet::new(),
            issuance: HashMap::new(),
            flagged: BTreeSet::new(),
            accounts: BTreeMap::new(),
            reporters: BTreeSet::new(),
            edges: BTreeSet::new(),
            deliverable: BTreeMap::new(),
            blacklist: HashSet::new(),
            stats: CentralStats::default(),
        }
    }

    pub fn issue_challenge(&mut self) -> RegistrationChallenge {
        let nonce = self.rng.random();
        self.outstanding.insert(nonce);
        RegistrationChallenge { nonce, difficulty_bits: self.params.pow_difficulty_bits }
    }

    pub fn register_user(&mut self, source: SourceId, token: &ChallengeToken, clock: &SimClock) -> Result<Pseudonym, ProtocolError> {
        if !self.outstanding.remove(&token.nonce) || !pow_ok(token.nonce, token.solution, self.params.pow_difficulty_bits) {
            self.stats.rejected_challenge += 1;
            return Err(ProtocolError::ChallengeFailed);
        }
        let count = self.per_source_day.entry((source, clock.day_index())).or_default();
        if *count >= self.params.rate_limit_per_source {
            self.stats.rejected_rate_limit += 1;
            return Err(ProtocolError::RateLimited(source.0));
        }
        *count += 1;
        let pseudonym = loop {
            let p = Pseudonym(self.rng.random());
            if !self.registry.contains_key(&p) {
                break p;
            }
        };
        self.registry.insert(pseudonym, Registration { source, registered_tick: clock.tick() });
        Ok(pseudonym)
    }

    fn day_key(&self, pseudonym: Pseudonym, day: u64) -> DiagnosisKey {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.secret).expect("any key length");
        mac.update(b"tracesim-central-v1");
        mac.update(&pseudonym.0.to_be_bytes());
        mac.update(&day.to_be_bytes());
        let tag = mac.finalize().into_bytes();
        let mut key_bytes = [0u8; 16];
        key_bytes.copy_from_slice(&tag[..16]);
        DiagnosisKey { day_index: day, key_bytes }
    }

    /// The 96 identifiers of `pseudonym` for `day`. Re-issuing is idempotent.
    pub fn issue_ids(&mut self, pseudonym: Pseudonym, day: u64) -> Result<Vec<EphemeralId>, ProtocolError> {
        if !self.registry.contains_key(&pseudonym) {
            return Err(ProtocolError::UnknownPseudonym(pseudonym));
        }
        let ids = expand_key(&self.day_key(pseudonym, day));
        if self.issued.insert((pseudonym, day)) {
            for (i, eid) in ids.iter().enumerate() {
                let prev = self.issuance.insert(*eid, (pseudonym, day * INTERVALS_PER_DAY as u64 + i as u64));
                assert!(prev.is_none(), "identifier collision in issuance table");
            }
        }
        Ok(ids)
    }

    pub fn resolve(&self, eid: &EphemeralId) -> Option<Pseudonym> {
        self.issuance.get(eid).map(|(p, _)| *p)
    }

    pub fn blacklist_ids(&mut self, eids: impl IntoIterator<Item = EphemeralId>) {
        self.blacklist.extend(eids);
    }

    /// Resolves the reporter's received identifiers, flags their owners,
    /// accumulates evidence and queues notifications subject to oversight.
    pub fn report_diagnosis_central(
        &mut self,
        reporter: Pseudonym,
        received: &[ContactRecord],
        clock: &SimClock,
        ctx: &RiskContext,
    ) -> Result<ReportOutcome, ProtocolError> {
        if !self.registry.contains_key(&reporter) {
            return Err(ProtocolError::UnknownPseudonym(reporter));
        }
        if !self.reporters.insert(reporter) {
            return Err(ProtocolError::DuplicatePseudonymReport(reporter));
        }
        let now = clock.tick();
        let mut evidence: BTreeMap<Pseudonym, RiskAccumulator> = BTreeMap::new();
        let mut unresolvable = 0;
        for rec in received {
            if self.blacklist.contains(&rec.eid) {
                self.stats.blacklisted_evidence += 1;
                continue;
            }
            let Some(&(owner, interval)) = self.issuance.get(&rec.eid) else {
                unresolvable += 1;
                continue;
            };
            if owner == reporter {
                continue;
            }
            if !within_validity(interval * INTERVAL_SECONDS, rec.first_tick, ctx.step_seconds, self.params.replay_tolerance_s) {
                self.stats.stale_evidence += 1;
                continue;
            }
            self.edges.insert((reporter, owner));
            evidence.entry(owner).or_default().add_record(rec, ctx, now);
        }
        self.stats.unresolvable_eids += unresolvable;

        let mut notices: Vec<(Pseudonym, Notice)> = Vec::new();
        for (owner, acc) in &evidence {
            self.flagged.insert(*owner);
            let account = self.accounts.entry(*owner).or_default();
            account.absorb(acc);
            if let Some((risk, cause, report_tick)) = account.fire(ctx) {
                notices.push((*owner, Notice { risk, cause, report_tick }));
            }
        }
        let decision = detect_mass_notification(notices.len(), self.params.fanout_threshold, self.params.held_policy);
        // Strongest evidence is released first when only part is released.
        notices.sort_by(|a, b| b.1.risk.total_cmp(&a.1.risk).then(a.0.cmp(&b.0)));
        for (owner, notice) in notices.iter().take(decision.release) {
            self.deliverable.entry(*owner).or_default().push(*notice);
        }
        self.stats.held_notifications += decision.hold;
        if decision.alert {
            self.stats.alerts.push(OversightAlert { tick: now, reporter, fanout: notices.len(), held: decision.hold });
        }
        Ok(ReportOutcome { flagged: evidence.keys().copied().collect(), unresolvable, attributable: notices.len(), decision })
    }

    /// A device asking whether it has been exposed.
    pub fn poll_status(&mut self, device: &CentralDevice, clock: &SimClock) -> Option<ExposureNotification> {
        let notices = self.deliverable.remove(&device.pseudonym)?;
        let risk_score = notices.iter().map(|n| n.risk).sum();
        let report_tick = notices.iter().map(|n| n.report_tick).max().unwrap_or(0);
        let cause = if notices.iter().any(|n| n.cause == Cause::TrueContact) { Cause::TrueContact } else { notices[0].cause };
        Some(ExposureNotification {
            agent_id: device.owner,
            tick: clock.tick(),
            protocol: ProtocolKind::Centralised,
            risk_score,
            cause,
            report_tick,
        })
    }

    pub fn is_flagged(&self, p: Pseudonym) -> bool {
        self.flagged.contains(&p)
    }

    pub fn registry_size(&self) -> usize {
        self.registry.len()
    }

    pub fn issuance_len(&self) -> usize {
        self.issuance.len()
    }

    pub fn edges(&self) -> &BTreeSet<(Pseudonym, Pseudonym)> {
        &self.edges
    }

    pub fn stats(&self) -> &CentralStats {
        &self.stats
    }

    /// Health status of every reporter and every (reporter, contact) pair.
    pub fn ledger(&self) -> ServerLedger {
        ServerLedger {
            health_status_entries: self.reporters.len(),
            social_graph_edges: self.edges.len(),
            location_observations: 0,
        }
    }
}

#[derive(Debug)]
pub struct CentralDevice {
    pub owner: AgentId,
    pub pseudonym: Pseudonym,
    issued: Option<(u64, Vec<EphemeralId>)>,
    sent: Vec<(u64, EphemeralId)>,
    contacts: ContactLog,
    reported: bool,
}

impl CentralDevice {
    pub fn new(owner: AgentId, pseudonym: Pseudonym) -> Self {
        Self { owner, pseudonym, issued: None, sent: Vec::new(), contacts: ContactLog::default(), reported: false }
    }

    pub fn current_eid(&mut self, server: &mut CentralServer, clock: &SimClock) -> Result<EphemeralId, ProtocolError> {
        let day = clock.day_index();
        if self.issued.as_ref().is_none_or(|(d, _)| *d != day) {
            self.issued = Some((day, server.issue_ids(self.pseudonym, day)?));
        }
        let eid = self.issued.as_ref().expect("issued above").1[clock.interval_in_day() as usize];
        if self.sent.last().is_none_or(|(i, _)| *i != clock.interval_index()) {
            self.sent.push((clock.interval_index(), eid));
        }
        Ok(eid)
    }

    pub fn on_reception(&mut self, reception: &Reception, clock: &SimClock) {
        self.contacts.on_reception(reception, clock);
    }

    pub fn contacts(&self) -> &[ContactRecord] {
        self.contacts.records()
    }

    pub fn prune(&mut self, clock: &SimClock) {
        self.contacts.prune(clock);
        let oldest = (clock.day_index() + 1).saturating_sub(RETENTION_DAYS) * INTERVALS_PER_DAY as u64;
        self.sent.retain(|(i, _)| *i >= oldest);
    }

    /// Received records of the last 14 days (today included) up to now.
    pub fn upload_received(&mut self, clock: &SimClock) -> Result<Vec<ContactRecord>, ProtocolError> {
        if self.reported {
            return Err(ProtocolError::DuplicateReport(self.owner));
        }
        self.reported = true;
        let today = clock.day_index();
        Ok(self
            .contacts
            .records()
            .iter()
            .filter(|r| clock.day_of(r.first_tick) + RETENTION_DAYS > today && r.first_tick <= clock.tick())
            .cloned()
            .collect())
    }
}
