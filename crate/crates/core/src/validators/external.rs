//! Operator-allow-listed external checker processes.
//!
//! A checker receives the snippet on standard input and reports findings
//! on standard output, one per line, as `LINE:COL:SEVERITY:MESSAGE`
//! (1-based line and column, column in code points). Exit status 0 means
//! the checker ran, whether or not it found anything.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

use super::code_style::lines;
use super::Finding;
use crate::rules::Severity;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckerSpec {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl CheckerSpec {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckerError {
    #[error("checker `{0}` is not in the allow-list")]
    NotAllowed(String),
    #[error("checker `{id}` could not be started: {reason}")]
    Spawn { id: String, reason: String },
    #[error("checker timed out")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckerOutput {
    pub status: Option<i32>,
    pub stdout: String,
}

pub const DEFAULT_MAX_CONCURRENT: usize = 4;

/// Runs allow-listed checkers with a cap on simultaneous processes.
#[derive(Debug)]
pub struct CheckerPool {
    allowlist: BTreeMap<String, CheckerSpec>,
    max_concurrent: usize,
    running: Mutex<usize>,
    slot_freed: Condvar,
}

impl Default for CheckerPool {
    fn default() -> Self {
        Self::new(BTreeMap::new(), DEFAULT_MAX_CONCURRENT)
    }
}

struct Slot<'a>(&'a CheckerPool);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.0.running.lock().unwrap() -= 1;
        self.0.slot_freed.notify_one();
    }
}

impl CheckerPool {
    pub fn new(allowlist: BTreeMap<String, CheckerSpec>, max_concurrent: usize) -> Self {
        Self {
            allowlist,
            max_concurrent: max_concurrent.max(1),
            running: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.allowlist.keys().map(String::as_str)
    }

    fn acquire(&self) -> Slot<'_> {
        let mut running = self.running.lock().unwrap();
        while *running >= self.max_concurrent {
            running = self.slot_freed.wait(running).unwrap();
        }
        *running += 1;
        Slot(self)
    }

    pub fn run(&self, command_id: &str, snippet: &str, timeout: Duration) -> Result<CheckerOutput, CheckerError> {
        let spec = self
            .allowlist
            .get(command_id)
            .ok_or_else(|| CheckerError::NotAllowed(command_id.to_string()))?;
        let _slot = self.acquire();
        let spawn_err = |e: std::io::Error| CheckerError::Spawn {
            id: command_id.to_string(),
            reason: e.to_string(),
        };
        let mut child = Command::new(&spec.program)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(spawn_err)?;

        let mut stdin = child.stdin.take().expect("stdin is piped");
        let input = snippet.as_bytes().to_vec();
        thread::spawn(move || {
            // The checker may exit without reading its input.
            let _ = stdin.write_all(&input);
        });
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });

        match child.wait_timeout(timeout).map_err(spawn_err)? {
            Some(status) => {
                let buf = reader.join().unwrap_or_default();
                Ok(CheckerOutput {
                    status: status.code(),
                    stdout: String::from_utf8_lossy(&buf).into_owned(),
                })
            }
            None => {
                let _ = child.kill();
                let _ = child.wait();
                Err(CheckerError::Timeout)
            }
        }
    }
}

/// A checker finding relative to the snippet: code-point range, if the
/// reported position falls inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnippetFinding {
    pub range: Option<(usize, usize)>,
    pub severity: Severity,
    pub message: String,
}

fn parse_severity(s: &str) -> Option<Severity> {
    match s.trim().to_ascii_lowercase().as_str() {
        "error" | "fatal" => Some(Severity::Error),
        "warning" | "warn" => Some(Severity::Warning),
        "info" | "note" | "hint" => Some(Severity::Info),
        _ => None,
    }
}

/// Parses `LINE:COL:SEVERITY:MESSAGE` lines; anything else is ignored.
pub fn parse_checker_output(snippet: &str, stdout: &str) -> Vec<SnippetFinding> {
    let snippet_lines = lines(snippet);
    stdout
        .lines()
        .filter_map(|l| {
            let mut parts = l.splitn(4, ':');
            let line: usize = parts.next()?.trim().parse().ok()?;
            let col: usize = parts.next()?.trim().parse().ok()?;
            let severity = parse_severity(parts.next()?)?;
            let message = parts.next()?.trim().to_string();
            let range = match (line.checked_sub(1).and_then(|i| snippet_lines.get(i)), col) {
                (Some((start, chars)), col) if col >= 1 => {
                    let at = (col - 1).min(chars.len());
                    let end = (at + 1).min(chars.len());
                    Some((start + at, start + end))
                }
                _ => None,
            };
            Some(SnippetFinding { range, severity, message })
        })
        .collect()
}

/// Runs a checker and converts its report to snippet-relative findings.
/// Timeouts and failures become single warning findings.
pub fn run_external_checker(pool: &CheckerPool, snippet: &str, command_id: &str, timeout: Duration) -> Vec<SnippetFinding> {
    let warning = |message: String| {
        vec![SnippetFinding {
            range: None,
            severity: Severity::Warning,
            message,
        }]
    };
    match pool.run(command_id, snippet, timeout) {
        Err(CheckerError::Timeout) => warning("checker timed out".to_string()),
        Err(e) => warning(e.to_string()),
        Ok(out) => {
            let findings = parse_checker_output(snippet, &out.stdout);
            if out.status != Some(0) && findings.is_empty() {
                let status = out.status.map_or("a signal".to_string(), |c| format!("status {c}"));
                warning(format!("checker `{command_id}` failed with {status}"))
            } else {
                findings
            }
        }
    }
}

impl From<SnippetFinding> for Finding {
    fn from(f: SnippetFinding) -> Self {
        Finding::page(f.message).with_severity(f.severity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_line_and_column() {
        let f = parse_checker_output("let x = ;\nfoo()", "1:3:error:unexpected token\n2:1:warning:w: colon\n");
        assert_eq!(
            f,
            [
                SnippetFinding {
                    range: Some((2, 3)),
                    severity: Severity::Error,
                    message: "unexpected token".into()
                },
                SnippetFinding {
                    range: Some((10, 11)),
                    severity: Severity::Warning,
                    message: "w: colon".into()
                },
            ]
        );
    }

    #[test]
    fn out_of_range_positions_are_page_level() {
        let f = parse_checker_output("ab", "7:1:info:far away\n1:9:info:past end\nnot a finding\n");
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].range, None);
        assert_eq!(f[1].range, Some((2, 2)));
    }

    #[test]
    fn unknown_checker_is_a_warning() {
        let pool = CheckerPool::default();
        let f = run_external_checker(&pool, "x", "lint", Duration::from_secs(1));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::Warning);
        assert!(f[0].message.contains("allow-list"));
    }

    #[cfg(unix)]
    mod process {
        use super::*;
        use std::os::unix::fs::PermissionsExt;

        fn script(dir: &tempfile::TempDir, name: &str, body: &str) -> CheckerSpec {
            let path = dir.path().join(name);
            std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
            std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
            CheckerSpec::new(path)
        }

        fn pool(dir: &tempfile::TempDir) -> CheckerPool {
            let mut allow = BTreeMap::new();
            allow.insert("echo".to_string(), script(dir, "echo.sh", "cat >/dev/null; echo '1:3:error:unexpected token'"));
            allow.insert("clean".to_string(), script(dir, "clean.sh", "cat >/dev/null; exit 0"));
            allow.insert("crash".to_string(), script(dir, "crash.sh", "echo garbage; exit 3"));
            allow.insert("slow".to_string(), script(dir, "slow.sh", "exec sleep 5"));
            allow.insert("stdin".to_string(), script(dir, "stdin.sh", "n=$(wc -l); echo \"1:1:info:$n\""));
            CheckerPool::new(allow, 2)
        }

        #[test]
        fn reports_findings() {
            let dir = tempfile::tempdir().unwrap();
            let f = run_external_checker(&pool(&dir), "abcdef", "echo", Duration::from_secs(5));
            assert_eq!(f.len(), 1);
            assert_eq!(f[0].range, Some((2, 3)));
            assert_eq!(f[0].severity, Severity::Error);
        }

        #[test]
        fn clean_exit_no_findings() {
            let dir = tempfile::tempdir().unwrap();
            assert!(run_external_checker(&pool(&dir), "abc", "clean", Duration::from_secs(5)).is_empty());
        }

        #[test]
        fn failure_without_output_is_a_warning() {
            let dir = tempfile::tempdir().unwrap();
            let f = run_external_checker(&pool(&dir), "abc", "crash", Duration::from_secs(5));
            assert_eq!(f.len(), 1);
            assert!(f[0].message.contains("status 3"), "{}", f[0].message);
        }

        #[test]
        fn timeout_is_a_warning() {
            let dir = tempfile::tempdir().unwrap();
            let started = std::time::Instant::now();
            let f = run_external_checker(&pool(&dir), "abc", "slow", Duration::from_millis(200));
            assert!(started.elapsed() < Duration::from_secs(3));
            assert_eq!(f[0].message, "checker timed out");
            assert_eq!(f[0].severity, Severity::Warning);
        }

        #[test]
        fn snippet_arrives_on_stdin() {
            let dir = tempfile::tempdir().unwrap();
            let f = run_external_checker(&pool(&dir), "a\nb\nc\n", "stdin", Duration::from_secs(5));
            assert_eq!(f[0].message, "3");
        }
    }
}
