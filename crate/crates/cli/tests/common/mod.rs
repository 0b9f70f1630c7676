#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use repairbot::fixtures::{standard_feed, FixtureFeed};

pub const END: &str = "2017-01-15T06:00:00Z";

pub fn bin(workdir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_repairbot"));
    c.env("REPAIRBOT_WORKDIR", workdir).env("RUST_BACKTRACE", "0").env_remove("REPAIRBOT_TOKEN");
    c
}

pub fn ok(mut cmd: Command) -> String {
    let out: Output = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn fixture(dir: &Path) -> FixtureFeed {
    standard_feed(&dir.join("feed")).unwrap()
}

/// `run` over the whole fixture window.
pub fn run_cmd(workdir: &Path, feed: &FixtureFeed) -> Command {
    let mut c = bin(workdir);
    c.args(["run", "--feed"]).arg(&feed.root).arg("--catalog").arg(&feed.catalog);
    c.args(["--window-hours", "6", "--end", END]);
    c
}

pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Starts `serve` on a free port and waits for its address.
pub fn serve(workdir: &Path, feed: &FixtureFeed, extra: &[&str]) -> Server {
    let mut c = bin(workdir);
    c.args(["serve", "--listen", "127.0.0.1:0", "--feed"]).arg(&feed.root).arg("--catalog").arg(&feed.catalog);
    c.args(extra).stdout(Stdio::piped()).stderr(Stdio::inherit());
    let mut child = c.spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected `{line}`")).to_string();
    Server { child, base: format!("http://{addr}") }
}

pub fn state(dir: &Path) -> PathBuf {
    dir.join("state")
}
