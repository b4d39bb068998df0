//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --release -p tracesim --test acceptance -- 3 6`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use tracesim::clock::SimClock;
use tracesim::config::load_scenario_with_overrides;
use tracesim::geometry::Point;
use tracesim::protocol::Cause;
use tracesim::radio::Provenance;
use tracesim::report::{emit_report, Manifest};
use tracesim::sim::AttackOutcome;
use tracesim::{run, AgentId, EphemeralId, ProtocolKind, RunOptions, RunOutput, ScenarioConfig};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn scenario(name: &str, overrides: &[(&str, String)]) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let o: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    load_scenario_with_overrides(&text, &o).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn exec(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunOutput, String> {
    run(cfg, opts).map_err(|e| format!("run failed: {e}"))
}

fn traj(out: &RunOutput) -> &Vec<Vec<Point>> {
    out.trajectories.as_ref().expect("trajectories recorded")
}

fn dist(a: Point, b: Point) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

fn consented(out: &RunOutput) -> Vec<(usize, u64)> {
    out.reports.iter().filter(|r| r.consented).map(|r| (r.agent.0, r.tick)).collect()
}

fn ever_infected(out: &RunOutput) -> BTreeSet<usize> {
    out.final_health.iter().enumerate().filter(|(_, h)| h.ever_infected()).map(|(i, _)| i).collect()
}

/// Brute-force exposed set from positions: an adopter is exposed when its
/// summed minutes within the infection radius of reporting adopters, over
/// each reporter's last 14 days up to the report, reach the threshold.
fn oracle_exposed(out: &RunOutput) -> BTreeSet<usize> {
    let cfg = &out.config;
    let tr = traj(out);
    let tpd = 86_400 / cfg.step_seconds;
    let mut ticks = vec![0u64; cfg.n_agents];
    for (d, r) in consented(out) {
        let start = (r / tpd).saturating_sub(13) * tpd;
        for t in start..=r {
            let row = &tr[t as usize];
            for x in 0..cfg.n_agents {
                if x != d && out.has_app[x] && dist(row[x], row[d]) <= cfg.epidemic.infection_radius_m {
                    ticks[x] += 1;
                }
            }
        }
    }
    let minutes = cfg.step_seconds as f64 / 60.0;
    (0..cfg.n_agents)
        .filter(|&x| ticks[x] as f64 * minutes >= cfg.tracing.exposure_minutes_threshold)
        .collect()
}

/// Distinct (reporter, sender) pairs where the reporter could hear the
/// sender at some tick up to the report. Zero-noise radio only.
fn oracle_social_edges(out: &RunOutput) -> usize {
    let cfg = &out.config;
    let tr = traj(out);
    let mut edges = BTreeSet::new();
    for (d, r) in consented(out) {
        for t in 0..=r {
            let row = &tr[t as usize];
            for s in 0..cfg.n_agents {
                if s != d && out.has_app[s] && dist(row[s], row[d]) <= cfg.radio.max_range_m {
                    edges.insert((d, s));
                }
            }
        }
    }
    edges.len()
}

fn median_f64(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn median_u64(v: &mut [u64]) -> f64 {
    let mut f: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    median_f64(&mut f)
}

/// Criteria 1, 4 and 5 share the same paired clean runs.
struct PairedRuns {
    equivalence: Check,
    latency: Check,
    ledgers: Check,
    max_upload: usize,
}

fn paired_clean_runs(seeds: u64) -> PairedRuns {
    let mut eq_err = None;
    let mut lat_err = None;
    let mut led_err = None;
    let mut exposed_total = 0;
    let mut dec_lat = Vec::new();
    let mut cen_lat = Vec::new();
    let mut max_upload = 0;
    let mut edges_total = 0;
    let mut slowest = 0.0f64;
    let opts = RunOptions { record_trajectories: true, ..RunOptions::default() };

    for seed in 1..=seeds {
        for (file, protocol) in [("baseline.cfg", ProtocolKind::Decentralised), ("baseline_centralised.cfg", ProtocolKind::Centralised)] {
            let cfg = scenario(file, &[("rng_seed", seed.to_string())]);
            assert_eq!(cfg.protocol, protocol);
            let t0 = Instant::now();
            let out = match exec(&cfg, opts) {
                Ok(o) => o,
                Err(e) => {
                    let msg = format!("{protocol} seed {seed}: {e}");
                    return PairedRuns { equivalence: Err(msg.clone()), latency: Err(msg.clone()), ledgers: Err(msg), max_upload };
                }
            };
            slowest = slowest.max(t0.elapsed().as_secs_f64());
            let tpd = SimClock::new(cfg.step_seconds).ticks_per_day();

            // equivalence
            let exposed = oracle_exposed(&out);
            let notified: BTreeSet<usize> = out.notifications.iter().map(|n| n.agent_id.0).collect();
            if notified != exposed && eq_err.is_none() {
                let fp = notified.difference(&exposed).count();
                let fnn = exposed.difference(&notified).count();
                eq_err = Some(format!("{protocol} seed {seed}: {fp} false positives, {fnn} false negatives"));
            }
            exposed_total += exposed.len();
            max_upload = max_upload.max(out.reports.iter().map(|r| r.keys.len()).max().unwrap_or(0));

            // latency and ledgers
            let uploads = out.reports.iter().filter(|r| r.consented).count();
            match protocol {
                ProtocolKind::Decentralised => {
                    for n in &out.notifications {
                        let next_batch = (n.report_tick / tpd + 1) * tpd - n.report_tick;
                        if n.tick - n.report_tick < next_batch && lat_err.is_none() {
                            lat_err = Some(format!(
                                "seed {seed}: agent {} notified {} ticks after a report at {}, before the next batch",
                                n.agent_id.0,
                                n.tick - n.report_tick,
                                n.report_tick
                            ));
                        }
                        dec_lat.push(n.tick - n.report_tick);
                    }
                    if (out.ledger.social_graph_edges != 0 || out.ledger.health_status_entries != uploads) && led_err.is_none() {
                        led_err = Some(format!("decentralised seed {seed}: ledger {:?}, {uploads} uploads", out.ledger));
                    }
                }
                ProtocolKind::Centralised => {
                    cen_lat.extend(out.notifications.iter().map(|n| n.tick - n.report_tick));
                    let expected = oracle_social_edges(&out);
                    edges_total += out.ledger.social_graph_edges;
                    let bad = out.ledger.social_graph_edges != expected
                        || (uploads > 0 && out.ledger.social_graph_edges == 0)
                        || out.ledger.health_status_entries != uploads;
                    if bad && led_err.is_none() {
                        led_err = Some(format!(
                            "centralised seed {seed}: ledger {:?}, expected {expected} edges and {uploads} health entries",
                            out.ledger
                        ));
                    }
                }
            }
        }
    }

    let equivalence = match eq_err {
        Some(e) => Err(e),
        None if slowest > 60.0 => Err(format!("slowest run took {slowest:.1}s")),
        None => Ok(format!("{seeds} seeds x 2 protocols, {exposed_total} exposed in total, 0 FP, 0 FN, slowest run {slowest:.1}s")),
    };
    let poll_ticks = 3600 / 60;
    let latency = match lat_err {
        Some(e) => Err(e),
        None if dec_lat.is_empty() || cen_lat.is_empty() => Err("no notifications to compare".into()),
        None => {
            let md = median_u64(&mut dec_lat);
            let mc = median_u64(&mut cen_lat);
            if mc <= poll_ticks as f64 && mc < md {
                Ok(format!("median latency centralised {mc} min, decentralised {md} min; every decentralised notification waited for its batch"))
            } else {
                Err(format!("median latency centralised {mc} min, decentralised {md} min"))
            }
        }
    };
    let ledgers = match led_err {
        Some(e) => Err(e),
        None => Ok(format!("decentralised edges 0, centralised edges match oracle ({edges_total} over {seeds} seeds)")),
    };
    PairedRuns { equivalence, latency, ledgers, max_upload }
}

fn sniffer_grid() -> Check {
    let cfg = scenario("sniffer_grid.cfg", &[]);
    let opts = RunOptions { record_trajectories: true, record_broadcasts: true, ..RunOptions::default() };
    let out = exec(&cfg, opts)?;
    let Some(AttackOutcome::Sniffer(s)) = &out.attack else { return Err("no sniffer outcome".into()) };
    ensure!(s.sniffers.len() == 400, "{} sniffers", s.sniffers.len());
    let tr = traj(&out);
    let infected = ever_infected(&out);
    let owners = out.broadcasts.as_ref().expect("broadcasts recorded");

    let mut points = 0;
    for (agent, track) in &s.tracks {
        for p in &track.points {
            points += 1;
            let Some(&(owner, _)) = owners.get(&p.eid) else { return Err(format!("point with unknown identifier {}", p.eid)) };
            ensure!(owner == *agent, "point for agent {} carries an identifier of agent {}", agent.0, owner.0);
            ensure!(infected.contains(&owner.0), "reconstructed point for non-infected agent {}", owner.0);
            let d = dist(tr[p.tick as usize][owner.0], p.sniffer_pos);
            ensure!(d <= cfg.radio.max_range_m, "point at tick {} is {d:.1} m from agent {}", p.tick, owner.0);
        }
    }
    ensure!(points > 0, "no points reconstructed");

    let tpd = SimClock::new(cfg.step_seconds).ticks_per_day();
    let reporters = consented(&out);
    ensure!(!reporters.is_empty(), "no reports");
    let mut coverages = Vec::new();
    for (v, r) in reporters {
        let Some(vc) = s.victims.iter().find(|c| c.agent == AgentId(v)) else {
            return Err(format!("no coverage reported for victim {v}"));
        };
        let start = (r / tpd).saturating_sub(13) * tpd;
        let inside = (start..=r)
            .filter(|&t| s.sniffers.iter().any(|&sp| dist(tr[t as usize][v], sp) <= s.range))
            .count();
        let frac = inside as f64 / (r - start + 1) as f64;
        if frac >= 0.1 {
            ensure!(vc.coverage > 0.0, "victim {v} inside range {:.0}% of ticks but coverage 0", frac * 100.0);
        }
        coverages.push(format!("{v}:{:.2}", vc.coverage));
    }
    Ok(format!("{points} points, all from infected agents and within range; coverage per victim [{}]", coverages.join(" ")))
}

fn attack_notifications(out: &RunOutput) -> usize {
    out.notifications.iter().filter(|n| n.cause != Cause::TrueContact).count()
}

fn relay() -> Check {
    let cfg = scenario("relay_attack.cfg", &[]);
    let opts = RunOptions { record_trajectories: true, ..RunOptions::default() };
    let out = exec(&cfg, opts)?;
    let tr = traj(&out);
    let infected = ever_infected(&out);
    let clean_targets: Vec<usize> = cfg
        .attack
        .relay_targets
        .iter()
        .copied()
        .filter(|&t| {
            !infected.contains(&t)
                && tr.iter().all(|row| infected.iter().all(|&i| dist(row[i], row[t]) > cfg.epidemic.infection_radius_m))
        })
        .collect();
    ensure!(!clean_targets.is_empty(), "every target had a true contact with an infected agent");
    let hit = clean_targets
        .iter()
        .find(|&&t| out.notifications.iter().any(|n| n.agent_id.0 == t && n.cause == Cause::RelayAttack));
    let Some(&hit) = hit else { return Err(format!("no relay notification for targets {clean_targets:?}")) };

    // centralised, fan-out threshold below the injected fan-out
    let targets = cfg.attack.relay_targets.len();
    let cen = scenario(
        "relay_attack.cfg",
        &[("protocol", "centralised".into()), ("tracing.fanout_threshold", (targets - 1).to_string())],
    );
    let cout = exec(&cen, RunOptions::default())?;
    let alerts = cout.central.as_ref().map_or(0, |c| c.alerts.len());
    ensure!(alerts >= 1, "centralised run raised no alert");
    ensure!(attack_notifications(&cout) == 0, "{} attack notifications delivered despite suppress", attack_notifications(&cout));

    // blacklist rerun
    let Some(AttackOutcome::Relay(r)) = &out.attack else { return Err("no relay outcome".into()) };
    let mut bl = cfg.clone();
    bl.tracing.blacklist = r.captured.iter().map(EphemeralId::to_hex).collect();
    let bout = exec(&bl, RunOptions::default())?;
    ensure!(attack_notifications(&bout) == 0, "{} attack notifications after blacklisting", attack_notifications(&bout));
    Ok(format!(
        "target {hit} (no true contact) notified by relay; centralised raised {alerts} alert(s), 0 delivered; blacklist of {} ids leaves 0",
        r.captured.len()
    ))
}

/// Agent 0 is diagnosed on day 17 and uploads days 4..=17; identifiers are
/// replayed `delay_days` after capture and the final batch goes out on day 18.
fn replay_run(delay_days: u64) -> Result<RunOutput, String> {
    let cfg = scenario(
        "relay_attack.cfg",
        &[
            ("duration_days", "18".into()),
            ("epidemic.incubation_days", "3".into()),
            ("epidemic.test_delay_days", "14".into()),
            ("epidemic.recovery", "false".into()),
            ("epidemic.p_transmit_per_contact_minute", "0.0".into()),
            ("attack.relay_latency_ticks", (delay_days * 1440).to_string()),
            ("tracing.replay_tolerance_s", (100 * 86_400u64).to_string()),
        ],
    );
    exec(&cfg, RunOptions::default())
}

fn retention_rotation(max_upload: usize) -> Check {
    let old = replay_run(15)?;
    let r0 = old.reports.iter().find(|r| r.agent == AgentId(0) && r.consented).ok_or("agent 0 never reported")?;
    ensure!(r0.keys.len() == 14, "late reporter uploaded {} keys", r0.keys.len());
    let Some(AttackOutcome::Relay(rel)) = &old.attack else { return Err("no relay outcome".into()) };
    ensure!(rel.injected > 0 && rel.provenance == Provenance::Replay, "nothing replayed");
    ensure!(attack_notifications(&old) == 0, "{} notifications from identifiers older than 14 days", attack_notifications(&old));
    let control = replay_run(12)?;
    let replayed = control.notifications.iter().filter(|n| n.cause == Cause::ReplayAttack).count();
    ensure!(replayed > 0, "control replay within retention produced no notification");
    ensure!(max_upload <= 14, "an upload held {max_upload} keys");

    // rotation, from the receiver side
    let cfg = scenario("baseline.cfg", &[("duration_days", "2".into())]);
    let out = exec(&cfg, RunOptions { record_receptions: true, ..RunOptions::default() })?;
    let mut intervals: HashMap<EphemeralId, BTreeSet<u64>> = HashMap::new();
    for r in out.receptions.as_ref().expect("receptions recorded") {
        intervals.entry(r.sender_eid).or_default().insert(r.tick * cfg.step_seconds / 900);
    }
    ensure!(!intervals.is_empty(), "no receptions");
    if let Some((eid, iv)) = intervals.iter().find(|(_, iv)| iv.len() > 1) {
        return Err(format!("identifier {eid} heard in intervals {iv:?}"));
    }
    Ok(format!(
        "15-day replay: {} injections, 0 notifications (12-day control: {replayed}); {} identifiers each in one interval; max upload {} keys",
        rel.injected,
        intervals.len(),
        max_upload.max(r0.keys.len())
    ))
}

fn adoption_trend(seeds: u64) -> Check {
    let mut medians = Vec::new();
    for adoption in ["0.0", "0.4", "0.8"] {
        let mut rates = Vec::new();
        for seed in 1..=seeds {
            let cfg = scenario(
                "adoption_sweep.cfg",
                &[
                    ("adoption_fraction", adoption.into()),
                    ("epidemic.quarantine_compliance", "1.0".into()),
                    ("rng_seed", seed.to_string()),
                ],
            );
            rates.push(exec(&cfg, RunOptions::default())?.attack_rate());
        }
        medians.push((adoption, median_f64(&mut rates)));
    }
    let text = medians.iter().map(|(a, m)| format!("{a}: {m:.3}")).collect::<Vec<_>>().join(", ");
    ensure!(medians.windows(2).all(|w| w[1].1 < w[0].1), "medians not strictly decreasing ({text})");
    Ok(format!("median attack rate over {seeds} seeds by adoption {text}"))
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().into(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn determinism() -> Check {
    let cfg = scenario("relay_attack.cfg", &[("duration_days", "3".into())]);
    let opts = RunOptions { record_receptions: true, ..RunOptions::default() };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        std::fs::create_dir_all(dir).unwrap();
        emit_report(&exec(&cfg, opts)?, opts, dir).map_err(|e| e.to_string())?;
    }
    // and once more from the written manifest alone
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&c).unwrap();
    emit_report(&exec(&manifest.config, manifest.options())?, manifest.options(), &c).map_err(|e| e.to_string())?;
    let (ta, tb, tc) = (read_tree(&a), read_tree(&b), read_tree(&c));
    ensure!(ta.len() >= 5, "only {} files written", ta.len());
    for (name, bytes) in &ta {
        ensure!(tb.get(name) == Some(bytes), "{} differs between identical runs", name.display());
        ensure!(tc.get(name) == Some(bytes), "{} differs after manifest rerun", name.display());
    }
    ensure!(ta.len() == tb.len() && ta.len() == tc.len(), "different file sets");
    Ok(format!("{} files byte-identical across two runs and a manifest rerun", ta.len()))
}

fn main() -> ExitCode {
    let wanted: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(u32, &str, Check)> = Vec::new();

    let paired = (want(1) || want(4) || want(5) || want(6)).then(|| paired_clean_runs(10));
    if let Some(p) = &paired {
        if want(1) {
            results.push((1, "oracle matching equivalence", p.equivalence.clone()));
        }
    }
    if want(2) {
        results.push((2, "sniffer grid track reconstruction", sniffer_grid()));
    }
    if want(3) {
        results.push((3, "relay attack and its countermeasures", relay()));
    }
    if let Some(p) = &paired {
        if want(4) {
            results.push((4, "latency separation", p.latency.clone()));
        }
        if want(5) {
            results.push((5, "privacy ledgers", p.ledgers.clone()));
        }
        if want(6) {
            results.push((6, "retention and rotation", retention_rotation(p.max_upload)));
        }
    }
    if want(7) {
        results.push((7, "adoption trend", adoption_trend(20)));
    }
    if want(8) {
        results.push((8, "determinism", determinism()));
    }

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
