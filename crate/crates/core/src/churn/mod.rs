//! Version-control churn: commit logs, the portable TSV format, and
//! pull-request metadata.

mod vcs;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::Timestamp;

pub use vcs::export_churn_from_vcs;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    /// Commit time, UTC seconds.
    pub timestamp: Timestamp,
    /// Lowercased author email.
    pub author_id: String,
    /// Repository-relative, forward-slash separated.
    pub changed_paths: Vec<String>,
}

/// Commits of one repository in ascending timestamp order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChurnLog {
    pub repo_id: String,
    commits: Vec<CommitRecord>,
}

impl ChurnLog {
    /// Sorts commits by timestamp (stable) and rejects duplicate ids.
    pub fn new(repo_id: impl Into<String>, mut commits: Vec<CommitRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &commits {
            if !seen.insert(c.commit_id.as_str()) {
                return Err(Error::DuplicateCommit(c.commit_id.clone()));
            }
        }
        commits.sort_by_key(|c| c.timestamp);
        Ok(ChurnLog {
            repo_id: repo_id.into(),
            commits,
        })
    }

    pub fn empty(repo_id: impl Into<String>) -> Self {
        ChurnLog {
            repo_id: repo_id.into(),
            commits: Vec::new(),
        }
    }

    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }

    /// Commits with `from <= timestamp <= to`.
    pub fn between(&self, from: Timestamp, to: Timestamp) -> &[CommitRecord] {
        let lo = self.commits.partition_point(|c| c.timestamp < from);
        let hi = self.commits.partition_point(|c| c.timestamp <= to);
        if lo >= hi {
            &[]
        } else {
            &self.commits[lo..hi]
        }
    }

    /// Merges another log of the same repository into this one.
    pub fn extend(&mut self, other: Vec<CommitRecord>) -> Result<()> {
        let mut all = std::mem::take(&mut self.commits);
        all.extend(other);
        *self = ChurnLog::new(self.repo_id.clone(), all)?;
        Ok(())
    }

    /// Renders the log in the format read by [`parse_churn_tsv`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in &self.commits {
            out.push_str(&format!("C\t{}\t{}\t{}\n", c.commit_id, c.timestamp, c.author_id));
            for p in &c.changed_paths {
                out.push_str("F\t");
                out.push_str(p);
                out.push('\n');
            }
        }
        out
    }
}

/// Extension of a path: text after the final dot of the basename,
/// lowercased. No dot yields the empty string.
pub fn file_extension(path: &str) -> String {
    let base = path.rsplit('/').next().unwrap_or(path);
    match base.rfind('.') {
        Some(i) => base[i + 1..].to_ascii_lowercase(),
        None => String::new(),
    }
}

fn tsv_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

/// Parses the portable commit log: `C<TAB>id<TAB>unix_ts<TAB>author`
/// headers, each followed by `F<TAB>path` lines.
pub fn parse_churn_tsv(repo_id: &str, text: &str) -> Result<ChurnLog> {
    let mut commits: Vec<CommitRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split('\t');
        match fields.next() {
            Some("C") => {
                let parts: Vec<&str> = fields.collect();
                if parts.len() != 3 {
                    return Err(tsv_err(line, "commit header needs 3 fields"));
                }
                let timestamp: Timestamp = parts[1]
                    .trim()
                    .parse()
                    .map_err(|_| tsv_err(line, "invalid timestamp"))?;
                commits.push(CommitRecord {
                    commit_id: parts[0].to_string(),
                    timestamp,
                    author_id: parts[2].to_string(),
                    changed_paths: Vec::new(),
                });
            }
            Some("F") => {
                let path: Vec<&str> = fields.collect();
                let path = path.join("\t").replace('\\', "/");
                let commit = commits
                    .last_mut()
                    .ok_or_else(|| tsv_err(line, "file line before any commit header"))?;
                commit.changed_paths.push(path);
            }
            Some(tag) => return Err(tsv_err(line, format!("unknown record tag {tag:?}"))),
            None => unreachable!("split yields at least one field"),
        }
    }
    ChurnLog::new(repo_id, commits)
}

/// Change metadata of the pull request under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PullRequestInfo {
    pub changed_file_count: usize,
    pub contributor_count: usize,
}

/// Aggregates PR metadata from the commits that make up the PR.
pub fn pull_request_info<S: AsRef<str>>(log: &ChurnLog, pr_commit_ids: &[S]) -> Result<PullRequestInfo> {
    let by_id: HashMap<&str, &CommitRecord> =
        log.commits.iter().map(|c| (c.commit_id.as_str(), c)).collect();
    let mut files = BTreeSet::new();
    let mut authors = BTreeSet::new();
    for id in pr_commit_ids {
        let id = id.as_ref();
        let c = by_id
            .get(id)
            .ok_or_else(|| Error::UnknownCommit(id.to_string()))?;
        files.extend(c.changed_paths.iter().map(String::as_str));
        authors.insert(c.author_id.as_str());
    }
    Ok(PullRequestInfo {
        changed_file_count: files.len(),
        contributor_count: authors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn commit(id: &str, ts: i64, author: &str, paths: &[&str]) -> CommitRecord {
        CommitRecord {
            commit_id: id.into(),
            timestamp: ts,
            author_id: author.into(),
            changed_paths: paths.iter().map(|p| p.to_string()).collect(),
        }
    }

    #[test]
    fn one_commit_two_files() {
        let log = parse_churn_tsv("r", "C\tabc\t100\tme@x\nF\ta.c\nF\tb/c.h\n").unwrap();
        assert_eq!(log.commits().len(), 1);
        assert_eq!(log.commits()[0].changed_paths, vec!["a.c", "b/c.h"]);
    }

    #[test]
    fn commits_sorted_ascending() {
        let log = parse_churn_tsv("r", "C\tb\t200\tx\nF\ta\nC\ta\t100\tx\nF\tb\n").unwrap();
        let ids: Vec<_> = log.commits().iter().map(|c| c.commit_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn bad_timestamp_names_line() {
        let err = parse_churn_tsv("r", "C\tabc\tnotanumber\tme").unwrap_err();
        assert_eq!(err.to_string(), "invalid timestamp at line 1");
    }

    #[test]
    fn file_line_before_header_is_rejected() {
        let err = parse_churn_tsv("r", "F\ta.c\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(
            parse_churn_tsv("r", "C\ta\t1\tx\nC\ta\t2\tx\n"),
            Err(Error::DuplicateCommit(_))
        ));
    }

    #[test]
    fn extensions() {
        assert_eq!(file_extension("src/a.CPP"), "cpp");
        assert_eq!(file_extension("Makefile"), "");
        assert_eq!(file_extension("dir.d/README"), "");
        assert_eq!(file_extension("x.tar.gz"), "gz");
        assert_eq!(file_extension(".bazelrc"), "bazelrc");
    }

    #[test]
    fn pr_info_unions_files_and_counts_authors() {
        let log = ChurnLog::new(
            "r",
            vec![
                commit("1", 1, "x", &["a.c"]),
                commit("2", 2, "x", &["a.c", "b.c"]),
                commit("3", 3, "y", &["c.c"]),
                commit("4", 4, "x", &["d.c"]),
            ],
        )
        .unwrap();
        let info = pull_request_info(&log, &["1", "2"]).unwrap();
        assert_eq!(info, PullRequestInfo { changed_file_count: 2, contributor_count: 1 });
        let info = pull_request_info(&log, &["3"]).unwrap();
        assert_eq!(info, PullRequestInfo { changed_file_count: 1, contributor_count: 1 });
        let info = pull_request_info(&log, &["2", "3", "4"]).unwrap();
        assert_eq!(info.contributor_count, 2);
        assert!(matches!(pull_request_info(&log, &["zz"]), Err(Error::UnknownCommit(id)) if id == "zz"));
    }

    #[test]
    fn between_is_inclusive() {
        let log = ChurnLog::new(
            "r",
            vec![commit("1", 10, "x", &["a"]), commit("2", 20, "x", &["a"]), commit("3", 30, "x", &["a"])],
        )
        .unwrap();
        assert_eq!(log.between(10, 20).len(), 2);
        assert_eq!(log.between(21, 29).len(), 0);
        assert_eq!(log.between(31, 5).len(), 0);
    }

    fn arb_log() -> impl Strategy<Value = ChurnLog> {
        proptest::collection::vec(
            (0i64..1_000_000, "[a-z]{1,5}@[a-z]{1,3}", proptest::collection::vec("[a-z/]{0,6}[a-z]\\.[a-z]{1,3}", 0..4)),
            0..12,
        )
        .prop_map(|cs| {
            let commits = cs
                .into_iter()
                .enumerate()
                .map(|(i, (ts, author, paths))| CommitRecord {
                    commit_id: format!("c{i}"),
                    timestamp: ts,
                    author_id: author,
                    changed_paths: paths,
                })
                .collect();
            ChurnLog::new("r", commits).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tsv_round_trip(log in arb_log()) {
            prop_assert_eq!(parse_churn_tsv("r", &log.to_tsv()).unwrap(), log);
        }

        #[test]
        fn pr_file_count_bounded_by_event_count(log in arb_log()) {
            let ids: Vec<&str> = log.commits().iter().map(|c| c.commit_id.as_str()).collect();
            let info = pull_request_info(&log, &ids).unwrap();
            let events: usize = log.commits().iter().map(|c| c.changed_paths.len()).sum();
            let distinct: BTreeSet<&str> = log.commits().iter()
                .flat_map(|c| c.changed_paths.iter().map(String::as_str)).collect();
            prop_assert!(info.changed_file_count <= events);
            prop_assert_eq!(info.changed_file_count == events, distinct.len() == events);
        }
    }
}
