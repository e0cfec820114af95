//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the report lines always reach the
//! terminal. Exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use railcross::antenna::{array_factor_db, gain_dbi, AntennaPattern, ARRAY_FACTOR_FLOOR_DB};
use railcross::channel::{
    evaluate_link, free_space_path_loss_db, path_loss_db, LinkEnd, PathLossModel, PowerClass, RadioConfig,
    DSRC_FREQUENCY_HZ,
};
use railcross::commands::{cmd_compare, cmd_replay, cmd_run, CompareAxis, ReplayOptions, RunOptions};
use railcross::exec::Execution;
use railcross::geo::GeoPoint;
use railcross::ingest::{parse_nmea_sentence, NmeaError};
use railcross::kmlout::{classify, classify_multi, PacketClass};
use railcross::sim::{compute_stats, run, run_many, ObuConfig, Role, Scenario, ScenarioConfig};

use common::{at, bundled, bundled_path, distance_to_crossing, write_config};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(started: Instant, limit: Duration) -> Result<Duration, String> {
    let took = started.elapsed();
    check!(took < limit, "took {took:.2?}, limit {limit:?}");
    Ok(took)
}

/// |sum of N unit phasors with progressive phase psi| / N, in dB.
fn phasor_sum_db(n: u32, spacing: f64, offset_deg: f64) -> f64 {
    let psi = 2.0 * std::f64::consts::PI * spacing * offset_deg.to_radians().sin();
    let (re, im) = (0..n).fold((0.0, 0.0), |(re, im), k| {
        let phase = f64::from(k) * psi;
        (re + phase.cos(), im + phase.sin())
    });
    20.0 * ((re * re + im * im).sqrt() / f64::from(n)).log10()
}

fn array_factor_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=16u32);
        let d = 1.0 - rng.gen::<f64>(); // (0, 1]
        let offset = rng.gen_range(-180.0..180.0);
        let pattern = AntennaPattern::ula(n, d, 0.0).map_err(|e| e.to_string())?;
        let closed = array_factor_db(&pattern, offset).map_err(|e| e.to_string())?;
        let oracle = phasor_sum_db(n, d, offset);
        if oracle <= ARRAY_FACTOR_FLOOR_DB {
            check!(closed == ARRAY_FACTOR_FLOOR_DB, "N={n} d={d} at {offset}: {closed} not clamped");
            continue;
        }
        let err = (closed - oracle).abs();
        worst = worst.max(err);
        compared += 1;
        check!(err < 1e-9, "N={n} d={d} at {offset}: closed {closed} vs phasor sum {oracle}");
    }
    let boresight = gain_dbi(&AntennaPattern::ula(8, 0.5, 12.0).unwrap(), 0.0);
    check!((boresight - 30.06).abs() <= 0.01, "8-element boresight gain {boresight} dBi");
    let took = within(started, Duration::from_secs(1))?;
    Ok(format!(
        "{compared} unclamped samples, worst error {worst:.1e} dB; 8 x 12 dBi boresight {boresight:.4} dBi; {took:.0?}"
    ))
}

fn link_budget_checks() -> Outcome {
    let started = Instant::now();
    let fspl_1m = free_space_path_loss_db(1.0, DSRC_FREQUENCY_HZ);
    check!((fspl_1m - 47.86).abs() <= 0.01, "FSPL(1 m) = {fspl_1m}");
    let fs = PathLossModel::free_space();
    for d in [1.0, 7.5, 100.0, 1234.5, 40_000.0] {
        let step = path_loss_db(&fs, 2.0 * d, DSRC_FREQUENCY_HZ, None).unwrap()
            - path_loss_db(&fs, d, DSRC_FREQUENCY_HZ, None).unwrap();
        check!((step - 6.0206).abs() < 1e-3, "doubling from {d} m adds {step} dB");
    }
    let tx = LinkEnd { position: GeoPoint::new(38.45, -104.3).unwrap(), pattern: AntennaPattern::ula(8, 0.5, 12.0).unwrap() };
    let rx = LinkEnd { position: GeoPoint::new(38.44, -104.299).unwrap(), pattern: AntennaPattern::omni(12.0) };
    let mut worst: f64 = 0.0;
    for model in [fs, PathLossModel::log_distance(3.2, 0.0)] {
        let hi = evaluate_link(&RadioConfig::new(PowerClass::PublicSafety), &tx, &rx, &model, Some(0.7)).unwrap();
        let lo = evaluate_link(&RadioConfig::new(PowerClass::Private), &tx, &rx, &model, Some(0.7)).unwrap();
        let diff = hi.prx_dbm - lo.prx_dbm;
        worst = worst.max((diff - 12.0).abs());
        check!((diff - 12.0).abs() < 1e-9, "23 vs 11 dBm differ by {diff} dB");
    }
    let took = within(started, Duration::from_secs(1))?;
    Ok(format!("FSPL(1 m) = {fspl_1m:.4} dB; doubling +6.021 dB; power classes differ by 12 dB (err {worst:.0e}); {took:.0?}"))
}

fn relay_extends_coverage() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_compare(&bundled_path(), CompareAxis::Relay, dir.path(), &RunOptions::default(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let obu = report.receivers.get("obu-1").ok_or("no obu-1 in comparison")?;
    for b in &obu.bins {
        check!(b.pdr_a.is_some() == b.pdr_b.is_some(), "bin {} present in one leg only", b.lower_m);
        if let Some(delta) = b.delta {
            check!(delta >= 0.0, "bundled OBU bin {} m: relay-on PDR lower by {}", b.lower_m, -delta);
        }
    }
    check!(obu.coverage_delta_m >= 0.0, "bundled OBU coverage delta {}", obu.coverage_delta_m);

    // the same comparison with the OBU parked at several points along the cross road
    let base = bundled();
    let placements: Vec<f64> = (0..10).map(|i| 1150.0 + 50.0 * f64::from(i)).collect();
    let mut scenarios = Vec::new();
    for &s in &placements {
        for relay in [true, false] {
            let mut cfg = base.clone();
            cfg.obus[0].road = 0;
            cfg.obus[0].initial_arclength_m = s;
            cfg.rsus[0].relay_enabled = relay;
            scenarios.push(Scenario::from_config(cfg).map_err(|e| e.to_string())?);
        }
    }
    let logs = run_many(&scenarios, Execution::Parallel);
    let opts = base.analysis.stats_options();
    let mut extended = Vec::new();
    for (i, pair) in logs.chunks(2).enumerate() {
        let with = compute_stats(&pair[0], &opts).unwrap();
        let without = compute_stats(&pair[1], &opts).unwrap();
        let (w, wo) = (&with.receivers["obu-1"], &without.receivers["obu-1"]);
        for (bw, bo) in w.bins.iter().zip(&wo.bins) {
            check!(bw.lower_m == bo.lower_m, "bin layout differs");
            check!(bw.pdr >= bo.pdr, "placement {}: bin {} m PDR {} < {}", placements[i], bw.lower_m, bw.pdr, bo.pdr);
        }
        let (cw, co) = (w.coverage_range_m.unwrap_or(0.0), wo.coverage_range_m.unwrap_or(0.0));
        check!(cw >= co, "placement {}: coverage {cw} < {co}", placements[i]);
        // the relay-on leg reports its own direct-only figures too
        check!(w.direct_coverage_range_m == wo.coverage_range_m, "direct-only figures disagree");
        if cw > co {
            extended.push(format!("{:.0} m east: {co:.0} -> {cw:.0} m", placements[i] - 1000.0));
        }
    }
    check!(!extended.is_empty(), "no placement gained coverage from the relay");
    let took = within(started, Duration::from_secs(10))?;
    Ok(format!(
        "bundled OBU bins all non-negative (coverage delta {:+.0} m); {} of {} placements extended ({}); {took:.1?}",
        obu.coverage_delta_m,
        extended.len(),
        placements.len(),
        extended.first().unwrap()
    ))
}

fn classification_oracle() -> Outcome {
    let stated = [
        ((false, false), PacketClass::White),
        ((true, false), PacketClass::Yellow),
        ((false, true), PacketClass::Blue),
        ((true, true), PacketClass::Green),
    ];
    for ((rsu, obu), want) in stated {
        check!(classify(rsu, obu) == want, "classify({rsu}, {obu}) = {:?}", classify(rsu, obu));
        let multi = classify_multi([("rsu", rsu), ("obu", obu)], &["rsu"], &["obu"]).map_err(|e| e.to_string())?;
        check!(multi == want, "classify_multi 1+1 ({rsu}, {obu}) = {multi:?}");
    }
    // every reception pattern over two RSUs and two OBUs
    let rsu_ids = ["r1", "r2"];
    let obu_ids = ["o1", "o2"];
    for bits in 0u8..16 {
        let got: Vec<bool> = (0..4).map(|i| bits & (1 << i) != 0).collect();
        let receptions = [("r1", got[0]), ("r2", got[1]), ("o1", got[2]), ("o2", got[3])];
        let multi = classify_multi(receptions, &rsu_ids, &obu_ids).map_err(|e| e.to_string())?;
        let want = classify(got[0] || got[1], got[2] || got[3]);
        check!(multi == want, "pattern {bits:04b}: {multi:?} != {want:?}");
    }
    let mut seen = std::collections::BTreeSet::new();
    for (pair, _) in stated {
        seen.insert(classify(pair.0, pair.1));
    }
    check!(seen.len() == 4, "classification is not injective");
    Ok("4 stated pairs exact; 16 two-RSU/two-OBU patterns reduce to any-of".into())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_run(&bundled_path(), a.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
    cmd_run(&bundled_path(), b.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for name in ["packets.csv", "trace.kml", "stats.json", "units.csv"] {
        let x = std::fs::read(a.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        check!(x == y, "{name} differs between runs");
        sizes.push(format!("{name} {} B", x.len()));
    }
    Ok(format!("byte-identical: {}", sizes.join(", ")))
}

fn replay_round_trip() -> Outcome {
    let sim_dir = tempfile::tempdir().unwrap();
    let replay_dir = tempfile::tempdir().unwrap();
    let simulated = cmd_run(&bundled_path(), sim_dir.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let replayed = cmd_replay(
        None,
        &sim_dir.path().join("packets.csv"),
        Some(&sim_dir.path().join("units.csv")),
        replay_dir.path(),
        &ReplayOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    check!(replayed.warnings.is_empty(), "replay warnings: {:?}", replayed.warnings);
    for name in ["trace.kml", "packets.csv"] {
        let x = std::fs::read(sim_dir.path().join(name)).unwrap();
        let y = std::fs::read(replay_dir.path().join(name)).unwrap();
        check!(x == y, "{name} differs after replay");
    }
    let (s, r) = (simulated.stats.ok_or("no simulated stats")?, replayed.stats.ok_or("no replayed stats")?);
    check!(s.delivery_summary() == r.delivery_summary(), "PDR statistics differ after replay");
    let bins: usize = s.receivers.values().map(|r| r.bins.len()).sum();
    Ok(format!("identical KML and PDR statistics ({} packets, {bins} distance bins)", s.packets))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn fig4_shape() -> Outcome {
    let started = Instant::now();
    let cfg = bundled();
    check!(cfg.path_loss.is_deterministic(), "bundled scenario is not deterministic");
    let log = run(&Scenario::from_config(cfg).map_err(|e| e.to_string())?);
    let mut by_class: BTreeMap<PacketClass, Vec<f64>> = BTreeMap::new();
    let mut nearest = (f64::INFINITY, PacketClass::White);
    let rsu = log.ids_with_role(Role::Rsu)[0].to_string();
    let (mut rsu_got, mut rsu_missed) = (Vec::new(), Vec::new());
    for f in &log.fates {
        let class = log.classify(f).map_err(|e| e.to_string())?;
        let d = distance_to_crossing(&f.tx_position);
        by_class.entry(class).or_default().push(d);
        if d < nearest.0 {
            nearest = (d, class);
        }
        let r = &f.receptions[&rsu];
        if r.received { &mut rsu_got } else { &mut rsu_missed }.push(r.distance_m.unwrap());
    }
    for class in PacketClass::ALL {
        check!(by_class.contains_key(&class), "no {} packets", class.name());
    }
    let white_min = by_class[&PacketClass::White].iter().copied().fold(f64::INFINITY, f64::min);
    let other_max = by_class
        .iter()
        .filter(|(c, _)| **c != PacketClass::White)
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0, f64::max);
    check!(white_min > other_max, "white at {white_min:.0} m is not beyond every received packet ({other_max:.0} m)");
    check!(nearest.1 == PacketClass::Green, "packet nearest the crossing is {}", nearest.1.name());
    let medians: BTreeMap<PacketClass, f64> = by_class.iter().map(|(c, v)| (*c, median(v.clone()))).collect();
    let green = medians[&PacketClass::Green];
    for (c, m) in &medians {
        check!(*c == PacketClass::Green || green < *m, "green median {green:.0} m not below {} median {m:.0} m", c.name());
    }
    // RSU sits near boresight: its reception is a step in distance
    let got_max = rsu_got.iter().copied().fold(0.0, f64::max);
    let missed_min = rsu_missed.iter().copied().fold(f64::INFINITY, f64::min);
    check!(got_max < missed_min, "RSU reception not monotone: received at {got_max:.0} m, missed at {missed_min:.0} m");
    let took = within(started, Duration::from_secs(10))?;
    let counts: Vec<String> = by_class.iter().map(|(c, v)| format!("{} {}", c.name(), v.len())).collect();
    Ok(format!(
        "{}; white beyond {white_min:.0} m > all received <= {other_max:.0} m; green median {green:.0} m; {took:.1?}",
        counts.join(", ")
    ))
}

fn xor_checksum(body: &str) -> u8 {
    let mut acc = 0u8;
    for b in body.bytes() {
        acc ^= b;
    }
    acc
}

fn ingest_robustness() -> Outcome {
    let corpus = include_str!("data/nmea_corpus.txt");
    let mut sentences = Vec::new();
    for line in corpus.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split('|').collect();
        check!(parts.len() == 5, "corpus line malformed: {line}");
        let fix = parse_nmea_sentence(parts[0]).map_err(|e| format!("{}: {e}", parts[0]))?;
        let lat: f64 = parts[1].parse().unwrap();
        let lon: f64 = parts[2].parse().unwrap();
        check!((fix.position.lat() - lat).abs() < 1e-9, "{}: lat {}", parts[0], fix.position.lat());
        check!((fix.position.lon() - lon).abs() < 1e-9, "{}: lon {}", parts[0], fix.position.lon());
        check!(fix.time_ms.to_string() == parts[3], "{}: time {}", parts[0], fix.time_ms);
        check!(fix.quality.to_string() == parts[4], "{}: quality {}", parts[0], fix.quality);
        sentences.push(parts[0]);
    }
    check!(sentences.len() >= 20, "corpus has only {} sentences", sentences.len());

    let mut rejected = 0;
    for s in &sentences {
        let (body, sum) = s.split_once('*').unwrap();
        let good = u8::from_str_radix(sum, 16).unwrap();
        for wrong in (0..=255u8).filter(|&w| w != good) {
            let bad = format!("{body}*{wrong:02X}");
            check!(
                matches!(parse_nmea_sentence(&bad), Err(NmeaError::Checksum { .. })),
                "accepted corrupted checksum: {bad}"
            );
            rejected += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut ok, mut err) = (0, 0);
    for i in 0..10_000 {
        let input = match i % 3 {
            0 => {
                let len = rng.gen_range(0..120);
                let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            1 => {
                // a corpus sentence with bytes replaced, checksum recomputed
                let s = sentences[rng.gen_range(0..sentences.len())];
                let (body, _) = s[1..].split_once('*').unwrap();
                let mut bytes = body.as_bytes().to_vec();
                for _ in 0..rng.gen_range(1..4) {
                    let at = rng.gen_range(0..bytes.len());
                    bytes[at] = rng.gen_range(0x20..0x7f);
                }
                let body = String::from_utf8(bytes).unwrap();
                format!("${body}*{:02X}", xor_checksum(&body))
            }
            _ => {
                let len = rng.gen_range(0..80);
                let body: String = (0..len).map(|_| char::from(rng.gen_range(0x20u8..0x7f))).collect();
                format!("${body}*{:02X}", xor_checksum(&body))
            }
        };
        match catch_unwind(|| parse_nmea_sentence(&input)) {
            Ok(Ok(_)) => ok += 1,
            Ok(Err(_)) => err += 1,
            Err(_) => return Err(format!("parser panicked on {input:?}")),
        }
    }
    Ok(format!(
        "{} corpus sentences parsed to oracle values; {rejected} corrupted checksums rejected; 10000 fuzz inputs, no panic ({ok} fixes, {err} errors)",
        sentences.len()
    ))
}

/// Stationary locomotive at the north end of a southbound track, with one
/// OBU driving away along boresight and one along the first array null.
fn antenna_comparison_config() -> ScenarioConfig {
    let origin = GeoPoint::new(38.44, -104.3).unwrap();
    let null = 0.25f64.asin();
    let (e, n) = (null.sin(), -null.cos());
    let mut cfg = bundled();
    cfg.name = "boresight-vs-null".into();
    cfg.duration_ms = 500_000;
    cfg.track = vec![at(&origin, 0.0, 0.0), at(&origin, 0.0, -20_000.0)];
    cfg.crossing_arclength_m = 15_000.0;
    cfg.roads = vec![
        vec![at(&origin, 0.0, -10.0), at(&origin, 0.0, -15_000.0)],
        vec![at(&origin, 10.0 * e, 10.0 * n), at(&origin, 15_000.0 * e, 15_000.0 * n)],
    ];
    cfg.train.initial_arclength_m = 0.0;
    cfg.train.speed_mps = 0.0;
    cfg.train.antenna = AntennaPattern::ula(8, 0.5, 0.0).unwrap();
    cfg.rsus.clear();
    let obu = |id: &str, road| ObuConfig {
        id: id.into(),
        road,
        initial_arclength_m: 0.0,
        speed_mps: 25.0,
        radio: None,
        antenna: AntennaPattern::omni(0.0),
        mount_offset_deg: 0.0,
        hold_time_ms: 3000,
    };
    cfg.obus = vec![obu("boresight", 0), obu("null", 1)];
    cfg.path_loss = PathLossModel::free_space();
    cfg.analysis.bin_width_m = 5.0;
    cfg
}

fn directional_vs_omni() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "antenna.toml", &antenna_comparison_config());
    let out = dir.path().join("out");
    let report = cmd_compare(&path, CompareAxis::Antenna, &out, &RunOptions::default(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let on = &report.receivers["boresight"];
    let ratio = on.coverage_ratio.ok_or("boresight OBU has no coverage in one leg")?;
    check!((ratio - 8.0).abs() <= 0.1, "boresight coverage ratio {ratio:.4}");
    let off = &report.receivers["null"];
    let (dir_cov, omni_cov) = (off.coverage_a_m.unwrap_or(0.0), off.coverage_b_m.unwrap_or(0.0));
    check!(dir_cov < omni_cov, "null OBU coverage {dir_cov} m not below omni {omni_cov} m");
    Ok(format!(
        "boresight {:.0} m vs omni {:.0} m, ratio {ratio:.3}; at the null {dir_cov:.0} m vs omni {omni_cov:.0} m",
        on.coverage_a_m.unwrap(),
        on.coverage_b_m.unwrap()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("array-factor oracle", array_factor_oracle),
        ("link-budget checks", link_budget_checks),
        ("relay coverage extension", relay_extends_coverage),
        ("classification oracle", classification_oracle),
        ("determinism", determinism),
        ("replay round trip", replay_round_trip),
        ("four-colour shape", fig4_shape),
        ("ingest robustness", ingest_robustness),
        ("directional vs omni", directional_vs_omni),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
