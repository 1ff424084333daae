//! The fire drill: publish a signed daemon patch, mail every site, and watch
//! the fleet pick it up. Each appliance runs the real boot and update code;
//! only the administrators' reaction times are drawn at random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{FleetScenario, ScenarioError};
use crate::boot::config::MIRRORS;
use crate::boot::{BootPhase, ConfigFile, ScriptedOperator, CACHE_DIR, FLOPPY_CONFIG, REVOCATION_FILE};
use crate::fixture::{self, Fixture, DAEMON, DNS_ID, REVOCATION_ID};
use crate::log::BootLog;
use crate::net::{Endpoint, EndpointKind, SimNet};
use crate::release::{publish_and_notify, PublishReport, RecordingMailer};

pub const PATCH_VERSION: &str = "1.1";

#[derive(Debug, Clone, PartialEq)]
pub struct FiredrillResult {
    pub scenario: FleetScenario,
    /// (hours since publication, fraction of appliances running the patch).
    pub curve: Vec<(f64, f64)>,
    /// Hours until each appliance came back up on the patch, if it did.
    pub upgrade_times: Vec<Option<f64>>,
    /// Appliances that rebooted with the patch cached but fell back to the
    /// release they already had.
    pub reverted: usize,
    pub unreachable_fetches: usize,
    pub boot_duration_s: f64,
    pub published: PublishReport,
    pub trace: Vec<String>,
}

impl FiredrillResult {
    /// Fraction of the fleet upgraded within `hours`.
    pub fn fraction_at(&self, hours: f64) -> f64 {
        let n = self.upgrade_times.iter().flatten().filter(|t| **t <= hours).count();
        n as f64 / self.upgrade_times.len() as f64
    }

    pub fn upgraded(&self) -> usize {
        self.upgrade_times.iter().flatten().count()
    }

    pub fn summary_text(&self) -> String {
        let n = self.upgrade_times.len();
        let mut out = format!(
            "appliances={n}\nboot_s={:.3}\npublished={}\nunreachable_mirrors={}\nnotified={}\n",
            self.boot_duration_s,
            self.published.published.join(","),
            self.published.unreachable.join(","),
            self.published.notified.len(),
        );
        out.push_str(&format!(
            "upgraded={}\nreverted={}\nunreachable_fetches={}\nfraction_24h={:.4}\nfraction_48h={:.4}\n",
            self.upgraded(),
            self.reverted,
            self.unreachable_fetches,
            self.fraction_at(24.0),
            self.fraction_at(48.0),
        ));
        out
    }

    pub fn curve_text(&self) -> String {
        self.curve
            .iter()
            .map(|(t, f)| format!("{t:.2} {f:.4}\n"))
            .collect()
    }

    pub fn trace_text(&self) -> String {
        self.trace.iter().map(|l| format!("{l}\n")).collect()
    }
}

fn mirror_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("mirror{i}")).collect()
}

fn drill_network(s: &FleetScenario) -> SimNet {
    let mut net = SimNet::new();
    for (i, m) in mirror_ids(s.mirror_count).into_iter().enumerate() {
        let mut e = Endpoint::new(m, EndpointKind::Mirror);
        e.up = i >= s.mirrors_down;
        net.add(e);
    }
    let mut rev = Endpoint::new(REVOCATION_ID, EndpointKind::Revocation);
    rev.files.insert(REVOCATION_FILE.into(), Vec::new());
    net.add(rev);
    net.add(Endpoint::new(DNS_ID, EndpointKind::Dns));
    net
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Check,
    Admin,
}

pub fn simulate_firedrill(s: &FleetScenario) -> Result<FiredrillResult, ScenarioError> {
    s.validate()?;
    let mut fx = Fixture::all_valid(s.seed);
    let mut net = drill_network(s);
    let image = fx.machine.image.as_ref().expect("fixture has an image");
    fx.settings = fixture::settings_for(image, s.boot_cost);
    fx.settings.check_interval_s = s.check_interval_h * 3600.0;
    fx.settings.check_jitter = s.check_jitter;
    if let Some(fl) = fx.machine.floppy.as_mut() {
        let text = String::from_utf8_lossy(fl.read(FLOPPY_CONFIG).unwrap_or_default()).into_owned();
        let mut cfg = ConfigFile::parse(&text).expect("fixture config parses");
        cfg.set(MIRRORS, &mirror_ids(s.mirror_count).join(","));
        fl.set_write_locked(false);
        fl.write_file(FLOPPY_CONFIG, cfg.to_text().as_bytes())
            .expect("unlocked floppy");
        fl.set_write_locked(true);
    }

    let mut op = ScriptedOperator::new();
    let mut proto = fx.appliance();
    let first = proto.boot(&net, &mut op);
    if first.final_phase != BootPhase::Running {
        return Err(ScenarioError::Invalid(format!(
            "prototype appliance did not reach Running: {}",
            first.final_phase
        )));
    }

    let mut vendor = ChaCha8Rng::seed_from_u64(s.seed);
    let mut patch = fixture::daemon_patch(PATCH_VERSION);
    if s.tamper_patch {
        let pos = vendor.random_range(0..patch.artifact.payload.len());
        fixture::tamper(&mut patch, pos);
    }
    let patch_file = format!("{CACHE_DIR}/{}", patch.artifact.file_name());
    let sites: Vec<String> = (0..s.n_appliances).map(|i| format!("site{i:04}")).collect();
    let mut mailer = RecordingMailer::default();
    let mut vendor_log = BootLog::new();
    let published = publish_and_notify(
        &mut net,
        &mirror_ids(s.mirror_count),
        &patch.artifact.file_name(),
        &patch.files(),
        &sites,
        &mut mailer,
        &mut vendor_log,
    );

    let interval = s.check_interval_h;
    let mut trace: Vec<(f64, usize, usize, String)> = Vec::new();
    let mut upgrade_times = Vec::with_capacity(s.n_appliances);
    let mut reverted = 0;
    let mut unreachable_fetches = 0;
    for i in 0..s.n_appliances {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(i as u64 + 1);
        let mut a = proto.clone();
        a.seed = rng.random();

        let admin_at = s.response.sample(&mut rng);
        let mut events = vec![(admin_at, Action::Admin)];
        let mut t = rng.random_range(0.0..interval);
        while t <= s.horizon_h {
            events.push((t, Action::Check));
            t += interval * (1.0 + rng.random_range(-s.check_jitter..=s.check_jitter));
        }
        events.retain(|(t, _)| *t <= s.horizon_h);
        events.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut pending = false;
        let mut upgraded = None;
        let mut seq = 0;
        let mut note = |t: f64, line: String, trace: &mut Vec<_>| {
            trace.push((t, i, seq, format!("t={t:.4}h {} {line}", sites[i])));
            seq += 1;
        };
        for (t, action) in events {
            let label = match action {
                Action::Check => "check",
                Action::Admin => "admin",
            };
            match a.fetch_updates(&net) {
                Ok(r) if r.unreachable => {
                    unreachable_fetches += 1;
                    note(t, format!("{label} mirror={} unreachable", r.mirror), &mut trace);
                }
                Ok(r) => note(t, format!("{label} mirror={} files={}", r.mirror, r.files.len()), &mut trace),
                Err(e) => note(t, format!("{label} failed: {e}"), &mut trace),
            }
            pending |= action == Action::Admin;
            let cached = a.machine.disks.first().is_some_and(|d| d.contains(&patch_file));
            if !(pending && cached) {
                if action == Action::Admin {
                    note(t, "admin waiting for download".into(), &mut trace);
                }
                continue;
            }
            let report = a.reboot(&net, &mut op, "operator");
            let done = t + report.total_s() / 3600.0;
            let version = report.installed_version(DAEMON).unwrap_or("-").to_string();
            note(
                done,
                format!("up phase={} daemon={version} boot_s={:.3}", report.final_phase, report.total_s()),
                &mut trace,
            );
            if report.final_phase == BootPhase::Running && version == PATCH_VERSION {
                upgraded = Some(done);
            } else if report.warnings.iter().any(|w| w.starts_with("reverted")) {
                reverted += 1;
            }
            break;
        }
        upgrade_times.push(upgraded);
    }
    trace.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let steps = (s.horizon_h / s.sample_h).floor() as usize;
    let n = s.n_appliances as f64;
    let mut sorted: Vec<f64> = upgrade_times.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let curve = (0..=steps)
        .map(|k| {
            let h = k as f64 * s.sample_h;
            (h, sorted.partition_point(|t| *t <= h) as f64 / n)
        })
        .collect();

    Ok(FiredrillResult {
        scenario: s.clone(),
        curve,
        upgrade_times,
        reverted,
        unreachable_fetches,
        boot_duration_s: first.total_s(),
        published,
        trace: trace.into_iter().map(|(_, _, _, l)| l).collect(),
    })
}
