//! Scripted CLI sessions shared by the golden and acceptance tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub enum Step {
    Run(&'static [&'static str]),
    Write(&'static str, &'static str),
    Cat(&'static str),
}

use Step::*;

pub const CASES: &[(&str, &[Step])] = &[
    (
        "availability",
        &[
            Run(&["availability"]),
            Run(&["availability", "--interval", "30d", "--boot", "600s"]),
            Run(&["availability", "--interval", "300s", "--boot", "320s"]),
        ],
    ),
    ("boot-time", &[Run(&["boot-time"]), Run(&["boot-time", "--mb", "48"])]),
    (
        "boot-all-valid",
        &[
            Run(&["fixture", "all-valid", "--machine", "m"]),
            Run(&["boot", "--machine", "m", "--epochs", "2"]),
            Run(&["inspect", "--machine", "m"]),
        ],
    ),
    (
        "tamper-revert",
        &[
            Run(&["--seed", "7", "fixture", "tampered-cache", "--machine", "m"]),
            Run(&["boot", "--machine", "m"]),
        ],
    ),
    (
        "hunker-down",
        &[
            Run(&["fixture", "hunker-down", "--machine", "m"]),
            Run(&["boot", "--machine", "m"]),
            Run(&["inspect", "--machine", "m"]),
        ],
    ),
    (
        "release-flow",
        &[
            Run(&["--seed", "3", "keygen", "--id", "A", "--out", "keys"]),
            Run(&["--seed", "3", "build-image", "--out", "cd-1.1", "--daemon-version", "1.1"]),
            Run(&["extract-sign", "--image", "cd-1.1", "--package", "daemon", "--key", "keys/A.key", "--out", "one"]),
            Run(&["fixture", "upgrade-cached", "--machine", "m"]),
            Run(&["fixture", "all-valid", "--machine", "n"]),
            Run(&["publish", "--machine", "n", "--bundle", "one", "--sites", "2"]),
            Run(&["fetch-updates", "--machine", "n"]),
            Run(&["boot", "--machine", "n"]),
            Run(&["boot", "--machine", "m"]),
        ],
    ),
    (
        "configure",
        &[
            Run(&["--seed", "11", "fixture", "no-floppy", "--machine", "m"]),
            Write(
                "answers.txt",
                "IP_ADDRESS=10.0.0.9\nNETMASK=255.255.255.0\nGATEWAY=10.0.1.1\nGATEWAY=10.0.0.1\nDNS_SERVERS=10.0.0.53\nPASSWORD=secret\n",
            ),
            Run(&["--seed", "11", "configure", "--machine", "m", "--answers", "answers.txt"]),
            Run(&["boot", "--machine", "m"]),
            Run(&["inspect", "--machine", "m"]),
        ],
    ),
    (
        "firedrill",
        &[
            Run(&["firedrill", "--appliances", "200", "--horizon-h", "96", "--curve"]),
            Run(&["--seed", "5", "firedrill", "--appliances", "40", "--tamper"]),
            Write("scenario.txt", "appliances=60\nmirrors=4\nmirrors_down=2\nresponse=exponential:8\n"),
            Run(&["firedrill", "--scenario", "scenario.txt", "--trace", "trace.txt"]),
            Cat("trace.txt"),
        ],
    ),
    (
        "keys-and-signatures",
        &[
            Run(&["--seed", "9", "keygen", "--id", "ops", "--out", "k"]),
            Cat("k/ops.pub"),
            Write("notes.txt", "hello\n"),
            Run(&["sign", "--key", "k/ops.key", "notes.txt"]),
            Cat("notes.txt.sig.ops"),
            Run(&["verify", "--keyring", "k/ops.pub", "--sig", "notes.txt.sig.ops", "notes.txt"]),
            Write("notes.txt", "hellO\n"),
            Run(&["verify", "--keyring", "k/ops.pub", "--sig", "notes.txt.sig.ops", "notes.txt"]),
            Run(&["fixture", "nonesuch", "--machine", "x"]),
            Run(&["keygen", "--release", "--out", "rk"]),
            Run(&["sign", "--key", "rk/B.key", "notes.txt"]),
            Run(&["verify", "--keyring", "rk/B.pub", "--sig", "notes.txt.sig.B", "notes.txt"]),
            Run(&["keygen", "--out", "none"]),
        ],
    ),
];

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_sealboot"))
}

/// Runs one case in a fresh directory and returns the transcript.
pub fn run_case(steps: &[Step]) -> String {
    let dir = tempfile::tempdir().expect("tempdir");
    run_case_in(dir.path(), steps)
}

pub fn run_case_in(dir: &Path, steps: &[Step]) -> String {
    let mut out = String::new();
    for step in steps {
        match step {
            Run(args) => {
                let o = Command::new(bin())
                    .args(*args)
                    .current_dir(dir)
                    .output()
                    .expect("spawn sealboot");
                out.push_str(&format!("$ sealboot {}\n", args.join(" ")));
                out.push_str(&String::from_utf8_lossy(&o.stdout));
                if !o.stderr.is_empty() {
                    out.push_str(&format!("stderr: {}", String::from_utf8_lossy(&o.stderr)));
                }
                out.push_str(&format!("[exit {}]\n", o.status.code().unwrap_or(-1)));
            }
            Write(path, text) => {
                fs::write(dir.join(path), text).expect("write input");
                out.push_str(&format!("# wrote {path}\n"));
            }
            Cat(path) => {
                out.push_str(&format!("# {path}\n"));
                out.push_str(&fs::read_to_string(dir.join(path)).unwrap_or_else(|e| format!("<{e}>\n")));
            }
        }
    }
    out
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"))
}

/// Compares a case against its golden file. With `SEALBOOT_BLESS=1` the
/// golden file is rewritten instead.
pub fn check_golden(name: &str, steps: &[Step]) -> Result<(), String> {
    let first = run_case(steps);
    let second = run_case(steps);
    if first != second {
        return Err(format!("{name}: two runs differ"));
    }
    let path = golden_path(name);
    if std::env::var_os("SEALBOOT_BLESS").is_some() {
        fs::write(&path, &first).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let want = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want != first {
        let line = want
            .lines()
            .zip(first.lines())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| want.lines().count().min(first.lines().count()));
        return Err(format!("{name}: output differs from golden file at line {}", line + 1));
    }
    Ok(())
}
