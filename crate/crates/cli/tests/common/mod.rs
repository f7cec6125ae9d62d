#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_arealink"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn boundaries(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/boundaries").join(name)
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn arealink")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every socket-creating or connecting call fails with EACCES and is
/// appended to the file named by `AREALINK_SOCKET_LOG`.
const DENY_SOCKETS: &str = r#"
#define _GNU_SOURCE
#include <errno.h>
#include <fcntl.h>
#include <stdlib.h>
#include <string.h>
#include <sys/socket.h>
#include <unistd.h>

static void note(const char *what) {
    const char *path = getenv("AREALINK_SOCKET_LOG");
    if (!path) return;
    int fd = open(path, O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) return;
    ssize_t r = write(fd, what, strlen(what));
    r = write(fd, "\n", 1);
    (void)r;
    close(fd);
}

int socket(int domain, int type, int protocol) { note("socket"); errno = EACCES; return -1; }
int socketpair(int domain, int type, int protocol, int sv[2]) { note("socketpair"); errno = EACCES; return -1; }
int connect(int fd, const struct sockaddr *addr, socklen_t len) { note("connect"); errno = EACCES; return -1; }
"#;

/// Compiles the shim with the system C compiler into `dir`.
pub fn build_socket_shim(dir: &Path) -> PathBuf {
    let src = dir.join("deny_sockets.c");
    let lib = dir.join("libdeny_sockets.so");
    std::fs::write(&src, DENY_SOCKETS).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = Command::new(&cc).args(["-shared", "-fPIC", "-O1", "-o"]).arg(&lib).arg(&src).output().expect("run C compiler");
    assert!(out.status.success(), "{cc} failed: {}", String::from_utf8_lossy(&out.stderr));
    lib
}

/// Runs arealink with the shim preloaded; returns the output and every
/// denied call it made.
pub fn run_isolated(shim: &Path, log: &Path, args: &[&str]) -> (Output, Vec<String>) {
    let _ = std::fs::remove_file(log);
    let out = bin().args(args).env("LD_PRELOAD", shim).env("AREALINK_SOCKET_LOG", log).output().expect("spawn arealink");
    let calls = std::fs::read_to_string(log).map(|t| t.lines().map(str::to_string).collect()).unwrap_or_default();
    (out, calls)
}

pub const MANIFEST: &str = r#"{
  "descriptor": {"id": "svi", "display_name": "Social Vulnerability Index (SVI)", "source_org": "CDC",
                 "variable_count": 2, "spatial_scale": "tract", "domain": "sdoh"},
  "geo_column": "FIPS",
  "year": 2020
}"#;
pub const SVI_CSV: &str = "FIPS,RPL_THEMES,E_TOTPOP\n12001000100,0.53,4012\n12001000200,NA,15\n";
pub const FIPS_COHORT: &str = "person_id,fips\n1,12001000100\n2,12001000200\n3,bad\n4,12003000100\n";
pub const POINT_COHORT: &str = "person_id,lon,lat\n1,0.5,0.5\n2,1.5,0.25\n3,40,40\n";
pub const SELECTION: &str = r#"[{"dataset_id":"svi","year":2020}]"#;

/// Drives every offline subcommand under the socket-denying shim, plus
/// `serve` as a control that must be stopped by it.
pub fn isolation_scenario(work: &Path) -> Result<(), String> {
    let shim = build_socket_shim(work);
    let log = work.join("sockets.log");
    let w = |name: &str| work.join(name).to_str().unwrap().to_string();
    for (name, text) in [("manifest.json", MANIFEST), ("svi.csv", SVI_CSV), ("cohort.csv", FIPS_COHORT), ("points.csv", POINT_COHORT), ("selection.json", SELECTION)] {
        std::fs::write(work.join(name), text).unwrap();
    }
    let grid_shp = boundaries("grid3.shp");
    let grid_json = boundaries("grid3.geojson");
    let offline: Vec<Vec<String>> = vec![
        vec!["--help".into()],
        vec!["boundaries".into(), "ingest".into(), "--input".into(), s(&grid_shp).into(), "--level".into(), "tract".into(), "--out".into(), w("idx")],
        vec!["boundaries".into(), "ingest".into(), "--input".into(), s(&grid_json).into(), "--level".into(), "tract".into(), "--vintage".into(), "2020".into(), "--out".into(), w("idx_json")],
        vec!["catalog".into(), "seed".into(), "--catalog".into(), w("seeded")],
        vec!["catalog".into(), "list".into(), "--catalog".into(), w("seeded"), "--scale".into(), "tract".into(), "--json".into()],
        vec!["dataset".into(), "ingest".into(), "--catalog".into(), w("cat"), "--manifest".into(), w("manifest.json"), "--in".into(), w("svi.csv")],
        vec!["catalog".into(), "list".into(), "--catalog".into(), w("cat")],
        vec!["resolve".into(), "--index".into(), w("idx"), "--in".into(), w("points.csv"), "--out".into(), w("fips.csv")],
        vec!["--threads".into(), "1".into(), "link".into(), "--catalog".into(), w("cat"), "--select".into(), w("selection.json"), "--in".into(), w("cohort.csv"), "--out".into(), w("fips.zip")],
        vec!["link".into(), "--catalog".into(), w("cat"), "--select".into(), SELECTION.into(), "--index".into(), w("idx"), "--in".into(), w("points.csv"), "--out".into(), w("points.zip")],
    ];
    for args in &offline {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let (out, calls) = run_isolated(&shim, &log, &argv);
        if !out.status.success() {
            return Err(format!("{argv:?} exited {:?}: {}", out.status.code(), stderr(&out)));
        }
        if !calls.is_empty() {
            return Err(format!("{argv:?} attempted {calls:?}"));
        }
    }
    for f in ["fips.csv", "fips.zip", "points.zip", "idx/boundaries.alsi"] {
        if !work.join(f).is_file() {
            return Err(format!("{f} was not written"));
        }
    }

    // control: the shim must actually stop the one networked subcommand
    std::fs::write(work.join("tokens.toml"), "[[tokens]]\ntoken = \"isolation-test-token-0001\"\nowner = \"a\"\n").unwrap();
    std::fs::write(
        work.join("service.toml"),
        "bind = \"127.0.0.1:0\"\ndata_dir = \"tasks\"\ncatalog_dir = \"cat\"\ntoken_file = \"tokens.toml\"\nworkers = 1\n",
    )
    .unwrap();
    let (out, calls) = run_isolated(&shim, &log, &["serve", "--config", &w("service.toml")]);
    if out.status.success() || calls.is_empty() {
        return Err(format!("serve was not blocked (exit {:?}, calls {calls:?}); the shim is ineffective", out.status.code()));
    }
    Ok(())
}
