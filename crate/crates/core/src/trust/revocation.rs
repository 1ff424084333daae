use std::collections::BTreeSet;

use super::keyring::Keyring;
use super::TrustError;

/// Key ids published as revoked by one source.
#[derive(Debug, Clone, PartialEq)]
pub struct RevocationList {
    pub revoked_key_ids: BTreeSet<String>,
    pub fetched_at: f64,
    pub source: String,
}

impl RevocationList {
    pub fn new(source: impl Into<String>, fetched_at: f64) -> Self {
        RevocationList {
            revoked_key_ids: BTreeSet::new(),
            fetched_at,
            source: source.into(),
        }
    }

    /// Body format: one `REVOKE <key_id>` per line; `#` lines and blanks ignored.
    pub fn parse(text: &str, source: &str, fetched_at: f64) -> Result<RevocationList, TrustError> {
        let mut list = RevocationList::new(source, fetched_at);
        for (idx, raw) in text.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some("REVOKE"), Some(id), None) => {
                    list.revoked_key_ids.insert(id.to_string());
                }
                _ => return Err(TrustError::parse(idx + 1, "expected `REVOKE <key_id>`")),
            }
        }
        Ok(list)
    }

    pub fn to_text(&self) -> String {
        self.revoked_key_ids
            .iter()
            .map(|id| format!("REVOKE {id}\n"))
            .collect()
    }

    /// Union. The later timestamp wins.
    pub fn merge(&mut self, other: &RevocationList) {
        self.revoked_key_ids.extend(other.revoked_key_ids.iter().cloned());
        if other.fetched_at > self.fetched_at {
            self.fetched_at = other.fetched_at;
        }
    }
}

/// A revocation list body retrieved from an endpoint.
#[derive(Debug, Clone)]
pub struct RevocationFetch {
    pub body: String,
    pub at: f64,
}

/// Transport used by [`check_revocation`]. The boot sequence supplies one
/// backed by the simulated network and an unprivileged process.
pub trait RevocationFetcher {
    fn fetch_revocations(&mut self, source: &str) -> Option<RevocationFetch>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RevocationReport {
    pub reachable: Vec<String>,
    pub unreachable: Vec<String>,
    pub newly_revoked: Vec<String>,
    /// No source could be consulted; keys kept their last-known status.
    pub degraded: bool,
    pub warnings: Vec<String>,
}

/// Consults every source, merges what it can get and marks listed keys revoked.
pub fn check_revocation(
    keyring: &mut Keyring,
    sources: &[String],
    net: &mut dyn RevocationFetcher,
) -> RevocationReport {
    let mut report = RevocationReport::default();
    let mut merged: Option<RevocationList> = None;
    for source in sources {
        let Some(fetch) = net.fetch_revocations(source) else {
            report.unreachable.push(source.clone());
            continue;
        };
        match RevocationList::parse(&fetch.body, source, fetch.at) {
            Ok(list) => {
                report.reachable.push(source.clone());
                match merged.as_mut() {
                    Some(m) => m.merge(&list),
                    None => merged = Some(list),
                }
            }
            Err(e) => {
                report.unreachable.push(source.clone());
                report.warnings.push(format!("malformed revocation list from {source}: {e}"));
            }
        }
    }
    if let Some(list) = merged {
        for id in &list.revoked_key_ids {
            if keyring.revoke(id) {
                let canonical = keyring.get(id).map(|k| k.key_id.clone()).unwrap_or_default();
                report.newly_revoked.push(canonical);
            }
        }
    }
    if report.reachable.is_empty() {
        report.degraded = true;
        report
            .warnings
            .push("revocation check incomplete: keys keep last-known status".to_string());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::generate_keypair;
    use std::collections::BTreeMap;

    struct MapFetcher(BTreeMap<String, String>);

    impl RevocationFetcher for MapFetcher {
        fn fetch_revocations(&mut self, source: &str) -> Option<RevocationFetch> {
            self.0.get(source).map(|b| RevocationFetch {
                body: b.clone(),
                at: 1.0,
            })
        }
    }

    fn ring_ab() -> Keyring {
        let mut ring = Keyring::new("floppy");
        for id in ["A", "B"] {
            ring.insert(generate_keypair(id, 1).unwrap().0).unwrap();
        }
        ring
    }

    #[test]
    fn source_revokes_b() {
        let mut ring = ring_ab();
        let mut net = MapFetcher(BTreeMap::from([("r1".into(), "REVOKE B\n".into())]));
        let report = check_revocation(&mut ring, &["r1".into()], &mut net);
        assert!(ring.get("B").unwrap().revoked);
        assert!(!ring.get("A").unwrap().revoked);
        assert_eq!(report.newly_revoked, vec!["B".to_string()]);
        assert!(!report.degraded);
    }

    #[test]
    fn empty_source_list_is_degraded_and_changes_nothing() {
        let mut ring = ring_ab();
        let before = ring.clone();
        let report = check_revocation(&mut ring, &[], &mut MapFetcher(BTreeMap::new()));
        assert!(report.degraded);
        assert_eq!(ring, before);
    }

    #[test]
    fn two_sources_union() {
        let mut ring = ring_ab();
        let mut net = MapFetcher(BTreeMap::from([
            ("r1".into(), "REVOKE A\n".into()),
            ("r2".into(), "# comment\nREVOKE B\n".into()),
        ]));
        check_revocation(&mut ring, &["r1".into(), "r2".into()], &mut net);
        assert_eq!(ring.revoked_ids(), vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn unreachable_sources_keep_previous_revocations() {
        let mut ring = ring_ab();
        ring.revoke("A");
        let report = check_revocation(&mut ring, &["down".into()], &mut MapFetcher(BTreeMap::new()));
        assert!(report.degraded);
        assert_eq!(report.unreachable, vec!["down".to_string()]);
        assert!(ring.get("A").unwrap().revoked);
    }

    #[test]
    fn idempotent() {
        let mut net = MapFetcher(BTreeMap::from([("r1".into(), "REVOKE B\n".into())]));
        let sources = vec!["r1".to_string()];
        let mut once = ring_ab();
        check_revocation(&mut once, &sources, &mut net);
        let mut twice = once.clone();
        let second = check_revocation(&mut twice, &sources, &mut net);
        assert_eq!(once, twice);
        assert!(second.newly_revoked.is_empty());
    }

    #[test]
    fn merge_is_union() {
        let mut a = RevocationList::parse("REVOKE x\n", "s1", 1.0).unwrap();
        let b = RevocationList::parse("REVOKE y\nREVOKE x\n", "s2", 2.0).unwrap();
        a.merge(&b);
        assert_eq!(a.revoked_key_ids.len(), 2);
        assert_eq!(a.fetched_at, 2.0);
        assert!(RevocationList::parse("REVOKE\n", "s", 0.0).is_err());
        assert!(RevocationList::parse("UNREVOKE x\n", "s", 0.0).is_err());
    }
}
