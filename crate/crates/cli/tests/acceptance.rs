//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sealboot_core::boot::{Appliance, BootPhase};
use sealboot_core::fixture::{self, Fixture, DAEMON};
use sealboot_core::fleet::{availability, boot_duration, simulate_firedrill, BootCostModel, FleetScenario, MB};
use sealboot_core::log::event;
use sealboot_core::media::{VirtualMedium, GIB};
use sealboot_core::package::Category;
use sealboot_core::resolve::{
    build_valid_digest_list, resolve_install_plan, scan_package_path, InstallPlan, Manifest, PathEntry, PlanStatus,
};
use sealboot_core::trace::{check_log, check_media_changes};
use sealboot_core::trust::{generate_keypair, sign_payload, DigestAlgorithm, Keyring};

// Tolerances and budgets.
const PAPER_DOWNTIME_PERCENT: f64 = 0.00617;
const DOWNTIME_TOL_POINTS: f64 = 0.0005;
const PAPER_BOOT_S: f64 = 320.0;
const BOOT_TOL_S: f64 = 1.0;
const PAPER_SPLIT_S: [f64; 3] = [30.0, 25.0, 180.0];
const SPLIT_TOL_S: f64 = 1e-9;
const FIREDRILL_BAND: (f64, f64) = (0.94, 0.98);
const FIREDRILL_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_INSTANCES: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const TAMPER_POSITIONS: usize = 100;
const SEED: u64 = 20_040_601;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_availability() -> Outcome {
    let d = availability(60.0 * 86_400.0, 320.0).map_err(|e| e.to_string())?;
    // Hand arithmetic: 320 s lost per 60-day reboot interval.
    let oracle = 100.0 * 320.0 / 5_184_000.0;
    ensure((d.percent() - oracle).abs() < 1e-12, || format!("model {} vs arithmetic {oracle}", d.percent()))?;
    ensure((d.percent() - PAPER_DOWNTIME_PERCENT).abs() <= DOWNTIME_TOL_POINTS, || {
        format!("{} outside {PAPER_DOWNTIME_PERCENT} ± {DOWNTIME_TOL_POINTS}", d.percent_text())
    })?;
    Ok(format!("downtime {}", d.percent_text()))
}

fn c2_boot_time() -> Outcome {
    let m = BootCostModel::calibrated();
    let bytes = (96.0 * MB) as u64;
    let total = boot_duration(&m, bytes).map_err(|e| e.to_string())?;
    ensure((total - PAPER_BOOT_S).abs() <= BOOT_TOL_S, || format!("total {total}"))?;
    let split = [m.signature_check_s, m.base_install_s, m.package_install_s(bytes).map_err(|e| e.to_string())?];
    for (got, want) in split.iter().zip(PAPER_SPLIT_S) {
        ensure((got - want).abs() <= SPLIT_TOL_S, || format!("stage {got} != {want}"))?;
    }
    // The same split measured on a real fixture boot.
    let f = Fixture::all_valid(SEED);
    let r = f.appliance().boot(&f.net, &mut f.operator.clone());
    let d = r.durations;
    let measured = [d.signature_check, d.base_install, d.package_install];
    for (got, want) in measured.iter().zip(PAPER_SPLIT_S) {
        ensure((got - want).abs() <= 1e-6, || format!("fixture stage {got} != {want}"))?;
    }
    ensure((r.total_s() - PAPER_BOOT_S).abs() <= BOOT_TOL_S, || format!("fixture total {}", r.total_s()))?;
    Ok(format!("model {total:.1} s, fixture boot {:.1} s, split 30/25/180", r.total_s()))
}

fn c3_firedrill() -> Outcome {
    let s = FleetScenario {
        n_appliances: 1000,
        seed: SEED,
        horizon_h: 2000.0,
        ..FleetScenario::default()
    };
    let start = Instant::now();
    let r = simulate_firedrill(&s).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let f48 = r.fraction_at(48.0);
    ensure((FIREDRILL_BAND.0..=FIREDRILL_BAND.1).contains(&f48), || format!("fraction(48h) = {f48}"))?;
    ensure(r.curve.windows(2).all(|w| w[0].1 <= w[1].1), || "curve not monotone".into())?;
    let last = r.curve.last().map(|p| p.1).unwrap_or(0.0);
    ensure(last == 1.0, || format!("terminal value {last}"))?;
    ensure(took < FIREDRILL_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("fraction(48h) = {f48:.3}, terminal 1.0, {:.1} s", took.as_secs_f64()))
}

/// Version order by numeric components, zero-padded.
fn version_key(v: &str) -> Vec<u64> {
    let mut k: Vec<u64> = v.split('.').map(|c| c.parse().unwrap()).collect();
    while k.len() > 1 && k.last() == Some(&0) {
        k.pop();
    }
    k
}

struct Instance {
    media: Vec<VirtualMedium>,
    keyring: Keyring,
    required: Vec<(String, Category)>,
    /// (name, version, medium position, medium id, admitted)
    truth: Vec<(String, String, usize, String, bool)>,
}

const VERSION_POOL: [&str; 6] = ["1", "1.2", "1.10", "2", "2.1", "3.0.1"];

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_keys = rng.random_range(1..=3);
    let keys: Vec<_> = (0..n_keys)
        .map(|i| generate_keypair(&format!("K{i}"), rng.random()).unwrap())
        .collect();
    let stranger = generate_keypair("X", rng.random()).unwrap().1;
    let mut keyring = Keyring::new("fd");
    let mut good_signer = Vec::new();
    for (public, _) in &keys {
        keyring.insert(public.clone()).unwrap();
        let revoked = rng.random_bool(0.2);
        if revoked {
            keyring.revoke(&public.key_id);
        }
        good_signer.push(!revoked);
    }

    let n_pkgs = rng.random_range(1..=5);
    let n_media = rng.random_range(1..=3);
    let mut media: Vec<VirtualMedium> =
        (0..n_media).map(|j| VirtualMedium::hard_disk(format!("m{j}"), GIB)).collect();
    let mut listed_valid: BTreeSet<(String, String)> = BTreeSet::new();
    let mut placed = Vec::new();
    let mut required = Vec::new();
    for p in 0..n_pkgs {
        let name = format!("p{p}");
        if p == 0 || rng.random_bool(0.6) {
            required.push((name.clone(), Category::Port));
        }
        let n_versions = rng.random_range(1..=4);
        let mut pool = VERSION_POOL.to_vec();
        for _ in 0..n_versions {
            let v = pool.remove(rng.random_range(0..pool.len()));
            let mut payload = format!("{name}-{v}:").into_bytes();
            payload.extend((0..8).map(|_| rng.random::<u8>()));
            let home = rng.random_range(0..n_media);
            for j in 0..n_media {
                if j == home || rng.random_bool(0.4) {
                    placed.push((name.clone(), v.to_string(), j, payload.clone()));
                }
            }
        }
    }

    let mut truth = Vec::new();
    for j in 0..n_media {
        let mut manifest = Manifest::new(DigestAlgorithm::DEFAULT);
        let mut listed = Vec::new();
        for (name, v, _, payload) in placed.iter().filter(|x| x.2 == j) {
            if rng.random_bool(0.9) {
                manifest.push(payload, &format!("{name}-{v}.pkg"));
                listed.push((name.clone(), v.clone()));
            }
        }
        let mname = format!("set{j}.dgst");
        let text = manifest.to_text();
        let mut valid = false;
        let signers = keys.iter().map(|(_, s)| s).chain(std::iter::once(&stranger));
        for (k, secret) in signers.enumerate() {
            if !rng.random_bool(0.6) {
                continue;
            }
            let corrupt = rng.random_bool(0.1);
            let signed = if corrupt { format!("{text}x") } else { text.clone() };
            let sig = sign_payload(signed.as_bytes(), secret, DigestAlgorithm::DEFAULT);
            valid |= !corrupt && good_signer.get(k).copied().unwrap_or(false);
            media[j]
                .write_file(&format!("/p/{}", sig.file_name_for(&mname)), sig.to_text().as_bytes())
                .unwrap();
        }
        media[j].write_file(&format!("/p/{mname}"), text.as_bytes()).unwrap();
        if valid {
            listed_valid.extend(listed);
        }
    }
    for (name, v, j, mut payload) in placed {
        let tampered = rng.random_bool(0.15);
        if tampered {
            let i = rng.random_range(0..payload.len());
            payload[i] ^= 0x20;
        }
        media[j].write_file(&format!("/p/{name}-{v}.pkg"), &payload).unwrap();
        let admitted = !tampered && listed_valid.contains(&(name.clone(), v.clone()));
        truth.push((name, v, j, format!("m{j}"), admitted));
    }
    Instance {
        media,
        keyring,
        required,
        truth,
    }
}

/// Brute force: the highest admitted version of each required package,
/// earliest medium on a tie; any package without one means hunker down.
fn oracle(inst: &Instance) -> (BTreeSet<(String, Vec<u64>, String)>, BTreeSet<String>) {
    let mut steps = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for (name, _) in &inst.required {
        let mut best: Option<&(String, String, usize, String, bool)> = None;
        for c in inst.truth.iter().filter(|c| &c.0 == name && c.4) {
            let better = match best {
                None => true,
                Some(b) => {
                    let (kc, kb) = (version_key(&c.1), version_key(&b.1));
                    kc > kb || (kc == kb && c.2 < b.2)
                }
            };
            if better {
                best = Some(c);
            }
        }
        match best {
            Some(b) => {
                steps.insert((b.0.clone(), version_key(&b.1), b.3.clone()));
            }
            None => {
                missing.insert(name.clone());
            }
        }
    }
    if !missing.is_empty() {
        steps.clear();
    }
    (steps, missing)
}

fn plan_sets(plan: &InstallPlan) -> (BTreeSet<(String, Vec<u64>, String)>, BTreeSet<String>) {
    let steps = plan
        .steps
        .iter()
        .map(|s| (s.name.clone(), version_key(&s.version.to_string()), s.source.clone()))
        .collect();
    let missing = match &plan.status {
        PlanStatus::Complete => BTreeSet::new(),
        PlanStatus::HunkerDown(m) => m.iter().cloned().collect(),
    };
    (steps, missing)
}

fn c4_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut hunker = 0;
    for n in 0..ORACLE_INSTANCES {
        let inst = random_instance(&mut rng);
        let path: Vec<PathEntry> = inst.media.iter().map(|m| PathEntry::new(m, &["/p"])).collect();
        let scan = scan_package_path(&path);
        let valid = build_valid_digest_list(&scan, &inst.keyring);
        let plan = resolve_install_plan(&inst.required, &scan, &valid);
        let got = plan_sets(&plan);
        let want = oracle(&inst);
        ensure(got == want, || format!("instance {n}: resolver {got:?} vs oracle {want:?}"))?;
        hunker += usize::from(!want.1.is_empty());
    }
    let took = start.elapsed();
    ensure(took < ORACLE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "{ORACLE_INSTANCES} instances agree ({hunker} hunker-down), {:.1} s",
        took.as_secs_f64()
    ))
}

fn c5_tamper_revert() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let len = fixture::daemon_patch("1.1").artifact.payload.len();
    let mut failures = Vec::new();
    for _ in 0..TAMPER_POSITIONS {
        let pos = rng.random_range(0..len);
        let f = Fixture::tampered_cache(SEED, pos);
        let r = f.appliance().boot(&f.net, &mut f.operator.clone());
        let ok = r.final_phase == BootPhase::Running
            && r.installed_version(DAEMON) == Some("1.0")
            && r.daemon_version.as_deref() == Some("1.0");
        if !ok {
            failures.push(pos);
        }
    }
    ensure(failures.is_empty(), || format!("failed at positions {failures:?}"))?;
    Ok(format!("{TAMPER_POSITIONS} positions, 0 failures"))
}

fn boot_plan(f: &Fixture) -> (Appliance, InstallPlan) {
    let mut a = f.appliance();
    let r = a.boot(&f.net, &mut f.operator.clone());
    (a, r.plan.expect("phase 1 reached"))
}

fn c6_revocation() -> Outcome {
    let makers: [fn(u64) -> Fixture; 3] = [Fixture::all_valid, Fixture::upgrade_cached, Fixture::legacy_md5];
    let mut checked = 0;
    for make in makers {
        let base = make(SEED);
        let (_, plan) = boot_plan(&base);
        ensure(plan.is_complete(), || format!("{}: baseline not complete", base.name))?;
        for key in fixture::KEY_IDS {
            let mut f = base.clone();
            fixture::set_revoked(&mut f.net, &[key]);
            let (a, p) = boot_plan(&f);
            ensure(p.steps == plan.steps && p.status == plan.status, || {
                format!("{}: revoking {key} changed the plan", base.name)
            })?;
            ensure(a.phase() == BootPhase::Running, || format!("{}: revoking {key} stopped boot", base.name))?;
            checked += 1;
        }
        let mut f = base.clone();
        fixture::set_revoked(&mut f.net, &fixture::KEY_IDS);
        let (mut a, p) = boot_plan(&f);
        ensure(matches!(p.status, PlanStatus::HunkerDown(_)), || format!("{}: not HunkerDown", base.name))?;
        ensure(a.phase() == BootPhase::HunkerDown, || format!("{}: phase {}", base.name, a.phase()))?;
        ensure(!a.iface_up() && !a.accepts_inbound("10.0.0.99"), || {
            format!("{}: reachable while hunkered down", base.name)
        })?;
        let last_net = a.log.records_for_epoch(a.epoch()).filter(|r| r.event == event::NET_UP).count();
        ensure(last_net == 1, || format!("{}: network raised {last_net} times", base.name))?;
    }
    Ok(format!("{checked} single-key revocations left the plan unchanged; both keys -> HunkerDown, unreachable"))
}

fn c7_trace() -> Outcome {
    let mut boots = 0;
    let patch = fixture::daemon_patch("1.1");
    for name in fixture::NAMES {
        for seed in [1, 2, SEED] {
            let mut f = Fixture::by_name(name, seed).unwrap();
            for (file, data) in patch.files() {
                for m in fixture::MIRROR_IDS {
                    f.net.endpoint_mut(m).unwrap().files.insert(file.clone(), data.clone());
                }
            }
            let mut op = f.operator.clone();
            let mut a = f.appliance();
            let before = a.machine.snapshot();
            a.boot(&f.net, &mut op);
            // Two days of scheduled update checks, then a wedged daemon.
            a.run_for(2.0 * 86_400.0, &f.net, &mut op);
            a.hang_daemon();
            a.run_for(120.0, &f.net, &mut op);
            a.reboot(&f.net, &mut op, "operator");
            boots += a.reports().len();
            let after = a.machine.snapshot();
            let mut v: Vec<String> = check_log(&a.log).iter().map(|x| x.to_string()).collect();
            v.extend(check_media_changes(&before, &after, a.log.records()).iter().map(|x| x.to_string()));
            ensure(v.is_empty(), || format!("{name} seed {seed}: {v:?}"))?;
        }
    }
    Ok(format!("{boots} boots over {} fixtures, 0 violations", fixture::NAMES.len()))
}

fn c8_evanescence() -> Outcome {
    let f = Fixture::all_valid(SEED);
    let mut clean = f.appliance();
    let mut op = f.operator.clone();
    clean.boot(&f.net, &mut op);
    let first = clean.store_hash().ok_or("no store after boot")?;
    clean.reboot(&f.net, &mut op, "operator");
    let clean_hash = clean.store_hash().ok_or("no store after reboot")?;
    ensure(first == clean_hash, || "two clean boots differ".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let targets = ["usr/local/bin/backdoor", "etc/rc", "etc/passwd", "bin/ls", "var/tmp/x", "tmp/fstab"];
    for round in 0..25 {
        let mut a = f.appliance();
        a.boot(&f.net, &mut op);
        for _ in 0..rng.random_range(1..=6) {
            let t = targets[rng.random_range(0..targets.len())];
            let data: Vec<u8> = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
            a.inject_store_file(&format!("/{t}"), &data).map_err(|e| e.to_string())?;
        }
        ensure(a.store_hash().as_deref() != Some(clean_hash.as_str()), || format!("round {round}: injection not visible"))?;
        a.reboot(&f.net, &mut op, "operator");
        ensure(a.store_hash().as_deref() == Some(clean_hash.as_str()), || format!("round {round}: store differs after reboot"))?;
    }
    Ok("25 injected epochs restored the clean store hash".into())
}

fn c9_determinism() -> Outcome {
    let failures: Vec<String> = common::CASES
        .iter()
        .filter_map(|(name, steps)| common::check_golden(name, steps).err())
        .collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{} golden CLI sessions byte-identical", common::CASES.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("availability at 60 days / 320 s", c1_availability),
        ("boot-time breakdown", c2_boot_time),
        ("firedrill curve", c3_firedrill),
        ("resolver vs brute-force oracle", c4_oracle),
        ("tamper-revert end to end", c5_tamper_revert),
        ("single-key revocation safety", c6_revocation),
        ("trace invariants on every fixture boot", c7_trace),
        ("evanescence after store injection", c8_evanescence),
        ("CLI determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
