// SPDX-License-Identifier: Apache-2.0

//! Run reports, their text and JSON renderings, and verdict matching.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::guest_memory::{AccessKind, PartitionId};
use crate::sched::{ProcessId, Ticks};

use super::scenario::ExpectedViolation;

/// Every kind a [`ViolationRecord`] can carry.
pub const FINDING_KINDS: &[&str] = &[
    "LEFT_REDZONE",
    "RIGHT_REDZONE",
    "PARTITION_RESET",
    "MANUAL_BLACKLIST",
    "WILD_ADDRESS",
    "UNINIT",
    "ADD_OVERFLOW",
    "SUB_OVERFLOW",
    "MUL_OVERFLOW",
    "DIV_BY_ZERO",
    "DIV_OVERFLOW",
    "SHIFT_RANGE",
    "MISALIGNED",
    "NULL_DEREF",
    "BOOL_RANGE",
    "ENUM_RANGE",
    "TRUNCATION",
    "MESSAGE_TOO_LONG",
    "QUEUE_FULL",
    "DEADLINE_MISS",
    "CONTRACT",
    "PHASE_ERROR",
    "OUT_OF_MEMORY",
    "STEP_ERROR",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub kind: String,
    pub part: PartitionId,
    /// Process that ran the step; 0 is the main context.
    pub proc: ProcessId,
    pub addr: Option<u64>,
    pub size: u64,
    pub access: Option<AccessKind>,
    pub step: Option<usize>,
    /// Region the address belongs to or is closest to.
    pub region: Option<String>,
    /// Address relative to the region base.
    pub region_offset: Option<i64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: String,
    /// Virtual time.
    pub t: Ticks,
    pub part: PartitionId,
    pub proc: Option<ProcessId>,
    pub step: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Match,
    Mismatch,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Match => "MATCH",
            Verdict::Mismatch => "MISMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub raw_ticks: Ticks,
    pub virtual_ticks: Ticks,
    pub violations: Vec<ViolationRecord>,
    pub events: Vec<Event>,
    pub verdict: Verdict,
    /// Why the verdict is MISMATCH; empty on MATCH.
    pub diagnostics: Vec<String>,
}

impl RunReport {
    pub fn count(&self, kind: &str) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}` (text or json)")),
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn or_dash<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn violation_line(v: &ViolationRecord) -> String {
    let mut detail = v.detail.clone();
    if let Some(region) = &v.region {
        let offset = v.region_offset.map_or(String::new(), |o| format!("{o:+}"));
        detail = format!("{detail} region={region}{offset}");
    }
    if v.proc.0 != 0 {
        detail = format!("{detail} proc={}", v.proc);
    }
    format!(
        "VIOLATION kind={} part={} addr={} size={} access={} step={} detail={}",
        v.kind,
        v.part,
        v.addr
            .map_or_else(|| "-".to_string(), |a| format!("{a:#x}")),
        v.size,
        or_dash(v.access.map(AccessKind::letter)),
        or_dash(v.step),
        quote(detail.trim()),
    )
}

fn event_line(e: &Event) -> String {
    format!(
        "EVENT kind={} t={} part={} proc={} step={} detail={}",
        e.kind,
        e.t,
        e.part,
        or_dash(e.proc),
        or_dash(e.step),
        quote(&e.detail),
    )
}

/// Render a report. Both formats are byte-stable for a given report.
pub fn emit_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let mut out = String::new();
            writeln!(
                out,
                "REPORT scenario={} seed={} raw_ticks={} virtual_ticks={}",
                report.scenario, report.seed, report.raw_ticks, report.virtual_ticks
            )
            .unwrap();
            for v in &report.violations {
                writeln!(out, "{}", violation_line(v)).unwrap();
            }
            for e in &report.events {
                writeln!(out, "{}", event_line(e)).unwrap();
            }
            for d in &report.diagnostics {
                writeln!(out, "DIAGNOSTIC {}", quote(d)).unwrap();
            }
            writeln!(out, "VERDICT {}", report.verdict.name()).unwrap();
            out
        }
    }
}

pub fn parse_json_report(text: &str) -> serde_json::Result<RunReport> {
    serde_json::from_str(text)
}

fn matches(pattern: &ExpectedViolation, v: &ViolationRecord) -> bool {
    pattern.kind == v.kind
        && pattern.part.is_none_or(|p| p == v.part)
        && pattern.proc.is_none_or(|p| p == v.proc)
        && pattern.step.is_none_or(|s| Some(s) == v.step)
        && pattern
            .region
            .as_ref()
            .is_none_or(|r| Some(r) == v.region.as_ref())
        && pattern.offset.is_none_or(|o| Some(o) == v.region_offset)
        && pattern.addr.is_none_or(|a| Some(a) == v.addr)
}

/// Pair every finding with a distinct pattern and every pattern with a
/// distinct finding. Returns the unmatched patterns and findings.
pub fn match_expected(
    expected: &[ExpectedViolation],
    found: &[ViolationRecord],
) -> (Vec<usize>, Vec<usize>) {
    let edges: Vec<Vec<usize>> = expected
        .iter()
        .map(|p| {
            (0..found.len())
                .filter(|&j| matches(p, &found[j]))
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; found.len()];

    fn augment(
        i: usize,
        edges: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &j in &edges[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, edges, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }

    let mut unmatched_expected = Vec::new();
    for i in 0..expected.len() {
        let mut seen = vec![false; found.len()];
        if !augment(i, &edges, &mut owner, &mut seen) {
            unmatched_expected.push(i);
        }
    }
    let unmatched_found = (0..found.len()).filter(|&j| owner[j].is_none()).collect();
    (unmatched_expected, unmatched_found)
}

/// Verdict and diagnostics for a set of findings.
pub fn judge(expected: &[ExpectedViolation], found: &[ViolationRecord]) -> (Verdict, Vec<String>) {
    let (missing, unexpected) = match_expected(expected, found);
    let mut diagnostics = Vec::new();
    for i in missing {
        let json = serde_json::to_string(&expected[i]).expect("patterns serialize");
        diagnostics.push(format!("expected but not found: {json}"));
    }
    for j in unexpected {
        diagnostics.push(format!("unexpected: {}", violation_line(&found[j])));
    }
    let verdict = if diagnostics.is_empty() {
        Verdict::Match
    } else {
        Verdict::Mismatch
    };
    (verdict, diagnostics)
}
