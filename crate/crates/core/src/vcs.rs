//! Thin wrapper over the `git` command line.
//!
//! Every invocation ignores system and user configuration and uses a fixed
//! identity, so fixture repositories and merge commits are reproducible.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

pub const BOT_NAME: &str = "repairbot";
pub const BOT_EMAIL: &str = "repairbot@localhost";

#[derive(Debug, Error)]
pub enum GitError {
    #[error("could not run git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("git {args} failed: {stderr}")]
    Failed { args: String, stderr: String },
    #[error("git {args} timed out after {secs}s")]
    Timeout { args: String, secs: u64 },
}

fn command(dir: &Path, args: &[&str]) -> Command {
    let mut cmd = Command::new("git");
    cmd.current_dir(dir)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_TERMINAL_PROMPT", "0")
        .args(["-c", &format!("user.name={BOT_NAME}")])
        .args(["-c", &format!("user.email={BOT_EMAIL}")])
        .args(["-c", "init.defaultBranch=master"])
        .args(["-c", "commit.gpgsign=false"])
        .args(args);
    cmd
}

/// Runs git in `dir` and returns trimmed stdout.
pub fn git(dir: &Path, args: &[&str]) -> Result<String, GitError> {
    git_env(dir, args, &[])
}

pub fn git_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Result<String, GitError> {
    let mut cmd = command(dir, args);
    cmd.envs(env.iter().copied());
    let out = cmd.output()?;
    if !out.status.success() {
        return Err(GitError::Failed {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Like [`git`] but kills the process once `timeout` elapses.
pub fn git_timeout(dir: &Path, args: &[&str], timeout: Duration) -> Result<String, GitError> {
    let mut child = command(dir, args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    // Outputs here are small, so reading after exit cannot deadlock on a full pipe.
    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(GitError::Timeout { args: args.join(" "), secs: timeout.as_secs() });
        }
    };
    let mut stdout = String::new();
    let mut stderr = String::new();
    if let Some(mut s) = child.stdout.take() {
        s.read_to_string(&mut stdout)?;
    }
    if let Some(mut s) = child.stderr.take() {
        s.read_to_string(&mut stderr)?;
    }
    if !status.success() {
        return Err(GitError::Failed { args: args.join(" "), stderr: stderr.trim().to_string() });
    }
    Ok(stdout.trim().to_string())
}

pub fn commit_exists(repo: &Path, commit: &str) -> bool {
    git(repo, &["cat-file", "-e", &format!("{commit}^{{commit}}")]).is_ok()
}

pub fn head_tree(repo: &Path) -> Result<String, GitError> {
    git(repo, &["rev-parse", "HEAD^{tree}"])
}

pub fn rev_parse(repo: &Path, rev: &str) -> Result<String, GitError> {
    git(repo, &["rev-parse", "--verify", &format!("{rev}^{{commit}}")])
}

pub fn commit_time(repo: &Path, rev: &str) -> Result<i64, GitError> {
    let out = git(repo, &["show", "-s", "--format=%ct", rev])?;
    out.parse().map_err(|_| GitError::Failed {
        args: format!("show {rev}"),
        stderr: format!("unexpected timestamp `{out}`"),
    })
}

/// Merges `head` into the checked-out commit the way a CI service builds a
/// pull request. A conflicting merge is aborted and reported as an error.
pub fn merge_no_ff(repo: &Path, head: &str, date: &str) -> Result<String, GitError> {
    let env = [("GIT_AUTHOR_DATE", date), ("GIT_COMMITTER_DATE", date)];
    match git_env(repo, &["merge", "--no-ff", "--no-edit", "-q", head], &env) {
        Ok(_) => rev_parse(repo, "HEAD"),
        Err(e) => {
            let _ = git(repo, &["merge", "--abort"]);
            Err(e)
        }
    }
}

/// Stages everything and commits with a fixed timestamp.
pub fn commit_all(repo: &Path, message: &str, unix_time: i64) -> Result<String, GitError> {
    git(repo, &["add", "-A"])?;
    let date = format!("@{unix_time} +0000");
    let env = [("GIT_AUTHOR_DATE", date.as_str()), ("GIT_COMMITTER_DATE", date.as_str())];
    git_env(repo, &["commit", "-q", "--allow-empty", "-m", message], &env)?;
    rev_parse(repo, "HEAD")
}
