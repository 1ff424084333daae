use sealboot_core::boot::{BootPhase, HEARTBEAT_INTERVAL_S, WATCHDOG_DEADLINE_S};
use sealboot_core::fixture::{self, Fixture, MIRROR_IDS};
use sealboot_core::log::{event, BootLog};
use sealboot_core::net::SimNet;
use sealboot_core::release::SignedBundle;
use sealboot_core::trace::{check_log, check_media_changes};

fn put_on_mirrors(net: &mut SimNet, bundle: &SignedBundle) {
    for (file, data) in bundle.files() {
        for m in MIRROR_IDS {
            net.endpoint_mut(m).unwrap().files.insert(file.clone(), data.clone());
        }
    }
}

#[test]
fn fresh_appliance_reaches_running_with_clean_trace() {
    let f = Fixture::all_valid(3);
    let mut op = f.operator.clone();
    let mut a = f.appliance();
    let before = a.machine.snapshot();
    let r = a.boot(&f.net, &mut op);
    assert_eq!(r.final_phase, BootPhase::Running);
    assert_eq!(a.daemon_version(), Some("1.0"));
    assert!(a.iface_up());
    assert!(check_log(&a.log).is_empty());
    assert!(check_media_changes(&before, &a.machine.snapshot(), a.log.records()).is_empty());
}

#[test]
fn watchdog_fires_within_deadline_of_a_hang() {
    let f = Fixture::all_valid(4);
    let mut op = f.operator.clone();
    let mut a = f.appliance();
    a.boot(&f.net, &mut op);
    a.run_for(600.0, &f.net, &mut op);
    let hung_at = a.log.now();
    a.hang_daemon();
    a.run_for(5.0 * WATCHDOG_DEADLINE_S, &f.net, &mut op);

    let fired: Vec<f64> = a
        .log
        .records()
        .iter()
        .filter(|r| r.event == event::WATCHDOG && r.detail.contains("expired"))
        .map(|r| r.t)
        .collect();
    assert_eq!(fired.len(), 1);
    let gap = fired[0] - hung_at;
    assert!(gap <= WATCHDOG_DEADLINE_S + 1e-9, "{gap}");
    assert!(gap > WATCHDOG_DEADLINE_S - HEARTBEAT_INTERVAL_S - 1e-9, "{gap}");
    assert_eq!(a.reports().len(), 2);
    assert_eq!(a.phase(), BootPhase::Running);
    assert!(a.daemon_running());
    assert!(check_log(&a.log).is_empty());
}

#[test]
fn scheduled_fetch_then_reboot_installs_patch() {
    let mut f = Fixture::all_valid(5);
    put_on_mirrors(&mut f.net, &fixture::daemon_patch("1.1"));
    let mut op = f.operator.clone();
    let mut a = f.appliance();
    a.boot(&f.net, &mut op);
    a.run_for(3.0 * 86_400.0, &f.net, &mut op);
    assert_eq!(a.daemon_version(), Some("1.0"), "fetching alone must not upgrade");
    let r = a.reboot(&f.net, &mut op, "operator");
    assert_eq!(r.final_phase, BootPhase::Running);
    assert_eq!(r.installed_version("daemon"), Some("1.1"));
    assert!(check_log(&a.log).is_empty());
}

#[test]
fn tampered_patch_falls_back_to_release() {
    let mut f = Fixture::all_valid(6);
    let mut patch = fixture::daemon_patch("1.1");
    fixture::tamper(&mut patch, 17);
    put_on_mirrors(&mut f.net, &patch);
    let mut op = f.operator.clone();
    let mut a = f.appliance();
    a.boot(&f.net, &mut op);
    a.fetch_updates(&f.net).unwrap();
    let r = a.reboot(&f.net, &mut op, "operator");
    assert_eq!(r.final_phase, BootPhase::Running);
    assert_eq!(r.installed_version("daemon"), Some("1.0"));
    assert!(r.warnings.iter().any(|w| w.starts_with("reverted")), "{:?}", r.warnings);
}

#[test]
fn both_keys_revoked_hunkers_down() {
    let f = Fixture::hunker_down(7);
    let mut op = f.operator.clone();
    let mut a = f.appliance();
    let r = a.boot(&f.net, &mut op);
    assert_eq!(r.final_phase, BootPhase::HunkerDown);
    assert!(!a.iface_up());
    assert!(!a.accepts_inbound("10.9.9.9"));
    assert!(a.daemon_version().is_none());
}

#[test]
fn log_text_survives_a_round_trip() {
    let f = Fixture::no_floppy(8);
    let mut op = f.operator.clone();
    let mut a = f.appliance();
    a.boot(&f.net, &mut op);
    a.reboot(&f.net, &mut op, "operator");
    let parsed = BootLog::parse(&a.log.to_text()).unwrap();
    assert_eq!(parsed.records().len(), a.log.records().len());
    assert_eq!(parsed.to_text(), a.log.to_text());
    assert!(check_log(&parsed).is_empty());
}
