use std::path::Path;
use std::process::Command;

use super::{parse_churn_tsv, ChurnLog, CommitRecord};
use crate::error::{Error, Result};
use crate::history::Timestamp;

const HEADER_FORMAT: &str = "--format=C%x09%H%x09%ct%x09%ae";

fn git(repo: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.arg("-C").arg(repo).args(["-c", "core.quotePath=false"]);
    cmd
}

fn run(mut cmd: Command) -> Result<std::process::Output> {
    cmd.output()
        .map_err(|e| Error::Vcs(format!("cannot run git: {e}")))
}

/// Exports the first-parent history of the checked-out branch as a
/// [`ChurnLog`], keeping commits with `timestamp >= since` that touch at
/// least one file. Merge commits are diffed against their first parent.
pub fn export_churn_from_vcs(repo_path: &Path, since: Timestamp) -> Result<ChurnLog> {
    let repo_id = repo_path
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| repo_path.display().to_string());

    let mut probe = git(repo_path);
    probe.args(["rev-parse", "--git-dir"]);
    let out = run(probe)?;
    if !out.status.success() {
        return Err(Error::Vcs(format!(
            "{} is not a readable repository: {}",
            repo_path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }

    let mut head = git(repo_path);
    head.args(["rev-parse", "--verify", "-q", "HEAD"]);
    if !run(head)?.status.success() {
        return Ok(ChurnLog::empty(repo_id));
    }

    let mut log = git(repo_path);
    log.args(["log", "--first-parent", "-m", "--name-only", "--no-renames", HEADER_FORMAT]);
    let out = run(log)?;
    if !out.status.success() {
        return Err(Error::Vcs(String::from_utf8_lossy(&out.stderr).trim().to_string()));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);

    let mut tsv = String::new();
    for line in stdout.lines() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("C\t") {
            let fields: Vec<&str> = rest.split('\t').collect();
            if fields.len() == 3 && fields[0].len() >= 40 && fields[0].bytes().all(|b| b.is_ascii_hexdigit()) {
                tsv.push_str(&format!(
                    "C\t{}\t{}\t{}\n",
                    fields[0],
                    fields[1],
                    fields[2].to_lowercase()
                ));
                continue;
            }
        }
        tsv.push_str("F\t");
        tsv.push_str(line);
        tsv.push('\n');
    }

    let parsed = parse_churn_tsv(&repo_id, &tsv)?;
    let kept: Vec<CommitRecord> = parsed
        .commits()
        .iter()
        .filter(|c| c.timestamp >= since && !c.changed_paths.is_empty())
        .cloned()
        .collect();
    ChurnLog::new(repo_id, kept)
}
