#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ledgergate"))
}

pub fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    out
}

/// `keygen` into `dir/name`; returns (entity id, stem).
pub fn keygen(dir: &Path, name: &str) -> (String, PathBuf) {
    let stem = dir.join(name);
    let out = run_ok(&["keygen", "--out", stem.to_str().unwrap()]);
    let id = out.lines().next().unwrap().split_whitespace().nth(1).unwrap().to_string();
    (id, stem)
}

pub fn with_ext(stem: &Path, ext: &str) -> String {
    stem.with_extension(ext).to_str().unwrap().to_string()
}

/// A consortium on disk: one member, three keepers, one party.
pub struct Consortium {
    pub dir: tempfile::TempDir,
    pub member: PathBuf,
    pub outsider: PathBuf,
    pub keepers: Vec<(String, PathBuf)>,
    pub party: (String, PathBuf),
    pub genesis: PathBuf,
}

impl Consortium {
    pub fn new(difficulty: u32) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (_, member) = keygen(dir.path(), "m1");
        let (_, outsider) = keygen(dir.path(), "outsider");
        let keepers: Vec<_> = ["k1", "k2", "k3"].iter().map(|k| keygen(dir.path(), k)).collect();
        let party = keygen(dir.path(), "p1");
        let genesis = dir.path().join("genesis.json");
        let mut args = vec![
            "genesis".to_string(),
            "--member".into(),
            with_ext(&member, "pub"),
            "--difficulty".into(),
            difficulty.to_string(),
            "--out".into(),
            genesis.to_str().unwrap().into(),
        ];
        for (_, k) in &keepers {
            args.extend(["--keeper".into(), with_ext(k, "pub")]);
        }
        args.extend(["--party".into(), with_ext(&party.1, "pub")]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&refs);
        Consortium {
            dir,
            member,
            outsider,
            keepers,
            party,
            genesis,
        }
    }

    pub fn data_dir(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Start `run` with `key`; returns the child and its HTTP base URL.
    pub fn spawn(&self, name: &str, key: &Path) -> (Child, String) {
        let mut child = bin()
            .args([
                "run",
                "--genesis",
                self.genesis.to_str().unwrap(),
                "--key",
                &with_ext(key, "key"),
                "--data-dir",
                self.data_dir(name).to_str().unwrap(),
                "--listen",
                "127.0.0.1:0",
                "--name",
                name,
            ])
            .env("LEDGERGATE_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let http = line
            .split_whitespace()
            .find_map(|w| w.strip_prefix("http="))
            .unwrap_or_else(|| panic!("no listen line: {line:?}"))
            .to_string();
        (child, format!("http://{http}"))
    }

    pub fn submit(&self, url: &str, key: &Path, args: &[&str]) -> Output {
        bin()
            .args(["submit", "--node", url, "--key", &with_ext(key, "key")])
            .args(args)
            .output()
            .unwrap()
    }
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
