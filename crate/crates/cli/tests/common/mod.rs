//! Loghub-shaped test data.
//!
//! Structured CSVs (`LineId,Content,EventId,EventTemplate`) are generated
//! from a fixed template catalogue and a seeded RNG, so every run sees the
//! same bytes. Setting `LOGHUB_2K_DIR` to a directory holding real
//! `*_2k.log_structured.csv` files swaps those in.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROWS: usize = 2000;

#[derive(Clone, Copy)]
enum Var {
    Num(u32, u32),
    Long,
    Hex(usize),
    Ip,
    IpPort,
    Pick(&'static [&'static str]),
    /// `Jun 14 15:16:01 2005`, four tokens.
    Date,
    /// Two to four block ids separated by spaces.
    Blocks,
    Path,
}

struct Spec {
    template: &'static str,
    vars: &'static [Var],
    weight: u32,
}

const USERS: &[&str] = &["root", "guest", "test", "admin", "cyrus", "news", "oracle", "webmaster"];
const HOSTS: &[&str] = &[
    "n219076184117.netvigator.com",
    "ts04-ip92.hevanet.com",
    "220-135-151-1.hinet-ip.hinet.net",
    "massive.merukuru.org",
    "p15105218.pureserver.info",
];
const SERVICES: &[&str] = &["syslogd", "klogd", "portmap", "xinetd", "sshd", "crond", "atd", "irqbalance"];
const PROCS: &[&str] = &["sendmail", "httpd", "java", "mysqld"];

const LINUX: &[Spec] = &[
    Spec { template: "session opened for user <*> by (uid=<*>)", vars: &[Var::Pick(USERS), Var::Num(0, 600)], weight: 30 },
    Spec { template: "session closed for user <*>", vars: &[Var::Pick(USERS)], weight: 25 },
    Spec {
        template: "authentication failure; logname= uid=<*> euid=<*> tty=NODEVssh ruser= rhost=<*>",
        vars: &[Var::Num(0, 2), Var::Num(0, 2), Var::Pick(HOSTS)],
        weight: 20,
    },
    Spec { template: "check pass; user unknown", vars: &[], weight: 12 },
    Spec { template: "connection from <*> (<*>) at <*>", vars: &[Var::Ip, Var::Pick(HOSTS), Var::Date], weight: 10 },
    Spec { template: "ALERT exited abnormally with [<*>]", vars: &[Var::Num(1, 3)], weight: 4 },
    Spec { template: "Kerberos authentication failed", vars: &[], weight: 3 },
    Spec { template: "<*> startup succeeded", vars: &[Var::Pick(SERVICES)], weight: 6 },
    Spec { template: "Out of Memory: Killed process <*> (<*>).", vars: &[Var::Num(1000, 32000), Var::Pick(PROCS)], weight: 2 },
    Spec { template: "audit(<*>:<*>): initialized", vars: &[Var::Num(1_100_000_000, 1_200_000_000), Var::Num(1, 9)], weight: 2 },
    Spec { template: "BIOS-e820: <*> - <*> (usable)", vars: &[Var::Hex(16), Var::Hex(16)], weight: 1 },
    Spec { template: "cupsd shutdown succeeded", vars: &[], weight: 2 },
];

const OPENSSH: &[Spec] = &[
    Spec {
        template: "Failed password for invalid user <*> from <*> port <*> ssh2",
        vars: &[Var::Pick(USERS), Var::Ip, Var::Num(1024, 65535)],
        weight: 25,
    },
    Spec { template: "Failed password for <*> from <*> port <*> ssh2", vars: &[Var::Pick(USERS), Var::Ip, Var::Num(1024, 65535)], weight: 25 },
    Spec { template: "Invalid user <*> from <*>", vars: &[Var::Pick(USERS), Var::Ip], weight: 12 },
    Spec { template: "input_userauth_request: invalid user <*> [preauth]", vars: &[Var::Pick(USERS)], weight: 10 },
    Spec { template: "Received disconnect from <*>: 11: Bye Bye [preauth]", vars: &[Var::Ip], weight: 10 },
    Spec { template: "Connection closed by <*> [preauth]", vars: &[Var::Ip], weight: 6 },
    Spec {
        template: "pam_unix(sshd:auth): authentication failure; logname= uid=0 euid=0 tty=ssh ruser= rhost=<*> user=<*>",
        vars: &[Var::Ip, Var::Pick(USERS)],
        weight: 12,
    },
    Spec {
        template: "reverse mapping checking getaddrinfo for <*> [<*>] failed - POSSIBLE BREAK-IN ATTEMPT!",
        vars: &[Var::Pick(HOSTS), Var::Ip],
        weight: 6,
    },
    Spec { template: "Accepted password for <*> from <*> port <*> ssh2", vars: &[Var::Pick(USERS), Var::Ip, Var::Num(1024, 65535)], weight: 2 },
    Spec { template: "Disconnecting: Too many authentication failures for <*> [preauth]", vars: &[Var::Pick(USERS)], weight: 3 },
    Spec {
        template: "PAM <*> more authentication failures; logname= uid=0 euid=0 tty=ssh ruser= rhost=<*>",
        vars: &[Var::Num(1, 5), Var::Ip],
        weight: 3,
    },
];

const HDFS: &[Spec] = &[
    Spec { template: "Receiving block blk_<*> src: /<*> dest: /<*>", vars: &[Var::Long, Var::IpPort, Var::IpPort], weight: 25 },
    Spec { template: "PacketResponder <*> for block blk_<*> terminating", vars: &[Var::Num(0, 2), Var::Long], weight: 25 },
    Spec { template: "Received block blk_<*> of size <*> from /<*>", vars: &[Var::Long, Var::Num(1000, 67_108_864), Var::Ip], weight: 20 },
    Spec {
        template: "BLOCK* NameSystem.addStoredBlock: blockMap updated: <*> is added to blk_<*> size <*>",
        vars: &[Var::IpPort, Var::Long, Var::Num(1000, 67_108_864)],
        weight: 20,
    },
    Spec { template: "BLOCK* NameSystem.allocateBlock: <*> blk_<*>", vars: &[Var::Path, Var::Long], weight: 8 },
    Spec { template: "Verification succeeded for blk_<*>", vars: &[Var::Long], weight: 5 },
    Spec { template: "Deleting block blk_<*> file <*>", vars: &[Var::Long, Var::Path], weight: 5 },
    Spec { template: "<*> Served block blk_<*> to /<*>", vars: &[Var::IpPort, Var::Long, Var::Ip], weight: 4 },
    Spec { template: "<*>:Got exception while serving blk_<*> to /<*>:", vars: &[Var::IpPort, Var::Long, Var::Ip], weight: 2 },
    Spec { template: "BLOCK* ask <*> to delete <*>", vars: &[Var::IpPort, Var::Blocks], weight: 2 },
];

const APACHE: &[Spec] = &[
    Spec { template: "jk2_init() Found child <*> in scoreboard slot <*>", vars: &[Var::Num(1000, 32000), Var::Num(6, 10)], weight: 30 },
    Spec { template: "workerEnv.init() ok <*>", vars: &[Var::Path], weight: 30 },
    Spec { template: "mod_jk child workerEnv in error state <*>", vars: &[Var::Num(6, 10)], weight: 25 },
    Spec { template: "[client <*>] Directory index forbidden by rule: <*>", vars: &[Var::Ip, Var::Path], weight: 6 },
    Spec { template: "jk2_init() Can't find child <*> in scoreboard", vars: &[Var::Num(1000, 32000)], weight: 4 },
    Spec { template: "mod_jk child init <*> <*>", vars: &[Var::Num(1, 2), Var::Pick(&["0", "-2"])], weight: 3 },
    Spec { template: "[client <*>] File does not exist: <*>", vars: &[Var::Ip, Var::Path], weight: 2 },
];

pub const DOMAINS: [&str; 4] = ["Linux", "OpenSSH", "HDFS", "Apache"];

fn catalogue(domain: &str) -> &'static [Spec] {
    match domain {
        "Linux" => LINUX,
        "OpenSSH" => OPENSSH,
        "HDFS" => HDFS,
        "Apache" => APACHE,
        other => panic!("no fixture catalogue for {other}"),
    }
}

fn value(var: Var, rng: &mut ChaCha8Rng) -> String {
    let ip = |rng: &mut ChaCha8Rng| format!("{}.{}.{}.{}", rng.gen_range(10..223), rng.gen_range(0..256), rng.gen_range(0..256), rng.gen_range(1..255));
    match var {
        Var::Num(lo, hi) => rng.gen_range(lo..=hi).to_string(),
        Var::Long => rng.gen::<i64>().to_string(),
        Var::Hex(len) => (0..len).map(|_| char::from_digit(rng.gen_range(0..16), 16).unwrap()).collect(),
        Var::Ip => ip(rng),
        Var::IpPort => format!("{}:{}", ip(rng), rng.gen_range(50000..50100)),
        Var::Pick(options) => options.choose(rng).unwrap().to_string(),
        Var::Date => {
            let month = ["Jun", "Jul", "Aug"].choose(rng).unwrap();
            format!(
                "{month} {} {:02}:{:02}:{:02} 2005",
                rng.gen_range(1..29),
                rng.gen_range(0..24),
                rng.gen_range(0..60),
                rng.gen_range(0..60)
            )
        }
        Var::Blocks => (0..rng.gen_range(2..=4))
            .map(|_| format!("blk_{}", rng.gen::<i64>()))
            .collect::<Vec<_>>()
            .join(" "),
        Var::Path => {
            let depth = rng.gen_range(1..4);
            let mut p = String::new();
            for _ in 0..depth {
                write!(p, "/{}", ["user", "root", "tmp", "etc", "var", "httpd", "part-0"].choose(rng).unwrap()).unwrap();
            }
            p
        }
    }
}

/// `(content, event id, gold template)` rows.
pub fn synthetic_rows(domain: &str, n: usize, seed: u64) -> Vec<(String, String, String)> {
    let specs = catalogue(domain);
    let total: u32 = specs.iter().map(|s| s.weight).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64)));
    (0..n)
        .map(|_| {
            let mut pick = rng.gen_range(0..total);
            let (k, spec) = specs
                .iter()
                .enumerate()
                .find(|(_, s)| {
                    if pick < s.weight {
                        true
                    } else {
                        pick -= s.weight;
                        false
                    }
                })
                .unwrap();
            let mut parts = spec.template.split("<*>");
            let mut content = parts.next().unwrap().to_owned();
            for (var, rest) in spec.vars.iter().zip(parts) {
                content.push_str(&value(*var, &mut rng));
                content.push_str(rest);
            }
            (content, format!("E{}", k + 1), spec.template.to_owned())
        })
        .collect()
}

pub fn write_structured(path: &Path, rows: &[(String, String, String)]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["LineId", "Content", "EventId", "EventTemplate"]).unwrap();
    for (i, (content, id, template)) in rows.iter().enumerate() {
        w.write_record([(i + 1).to_string().as_str(), content, id, template]).unwrap();
    }
    w.flush().unwrap();
}

/// Where the structured files came from.
pub enum DataSource {
    Loghub(PathBuf),
    Synthetic { seed: u64 },
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Loghub(dir) => write!(f, "Loghub_2k files under {}", dir.display()),
            DataSource::Synthetic { seed } => write!(f, "synthetic Loghub-shaped files ({ROWS} rows per domain, seed {seed})"),
        }
    }
}

fn find_structured(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            find_structured(&path, out);
        } else if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_2k.log_structured.csv")) {
            out.push(path);
        }
    }
}

/// At least three structured domain files: real ones from `LOGHUB_2K_DIR`
/// if it holds three or more, otherwise synthetic ones written to `dir`.
pub fn structured_files(dir: &Path, seed: u64) -> (DataSource, Vec<PathBuf>) {
    if let Some(root) = std::env::var_os("LOGHUB_2K_DIR").map(PathBuf::from) {
        let mut found = Vec::new();
        find_structured(&root, &mut found);
        found.sort();
        if found.len() >= 3 {
            return (DataSource::Loghub(root), found);
        }
    }
    let files = DOMAINS
        .iter()
        .map(|domain| {
            let path = dir.join(format!("{domain}_2k.log_structured.csv"));
            write_structured(&path, &synthetic_rows(domain, ROWS, seed));
            path
        })
        .collect();
    (DataSource::Synthetic { seed }, files)
}

/// `LineId,Content,Label` with exactly `anomalies` rows labelled `anomaly`
/// (others `-`) at seeded positions.
pub fn write_labeled(path: &Path, n: usize, anomalies: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, anomalies) {
        labels[i] = true;
    }
    let rows = synthetic_rows("HDFS", n, seed);
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["LineId", "Content", "Label"]).unwrap();
    for (i, ((content, _, _), anomalous)) in rows.iter().zip(labels).enumerate() {
        w.write_record([(i + 1).to_string().as_str(), content.as_str(), if anomalous { "anomaly" } else { "-" }]).unwrap();
    }
    w.flush().unwrap();
}

/// `LineId` column of a CSV written by one of the split commands.
pub fn line_ids(path: &Path) -> Vec<u64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "LineId").unwrap();
    r.records().map(|rec| rec.unwrap()[col].parse().unwrap()).collect()
}

/// Runs the `logknow` binary; returns (exit code, stdout, stderr).
pub fn logknow(args: &[&str], envs: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_logknow"));
    cmd.args(args);
    for (var, _) in std::env::vars() {
        if var.starts_with("LOGKNOW_") || var == "SOURCE_DATE_EPOCH" {
            cmd.env_remove(var);
        }
    }
    cmd.envs(envs.iter().copied());
    let out = cmd.output().expect("run logknow");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
