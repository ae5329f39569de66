// SPDX-License-Identifier: Apache-2.0

//! Cyclic executive and the instrumented time model.
//!
//! Instrumented code advances a raw tick counter; the scheduler only ever
//! looks at virtual time, which is the raw counter divided by a slowdown
//! factor. Everything is integral and floors.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guest_memory::PartitionId;

pub type Ticks = u64;

/// Positive rational factor, written as `2`, `"2"` or `"3/2"` in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FactorRepr", into = "String")]
pub struct Factor(Ratio<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum FactorRepr {
    Int(u64),
    Text(String),
}

impl Factor {
    pub const ONE: Factor = Factor(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if numer == 0 || denom == 0 {
            return Err(Error::config(
                "/factor",
                "factor must be a positive rational",
            ));
        }
        Ok(Factor(Ratio::new(numer, denom)))
    }

    pub fn integer(n: u64) -> Result<Self> {
        Factor::new(n, 1)
    }

    pub fn numer(self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(self) -> u64 {
        *self.0.denom()
    }

    /// `floor(ticks / self)`.
    pub fn divide_floor(self, ticks: u64) -> u64 {
        (u128::from(ticks) * u128::from(self.denom()) / u128::from(self.numer())) as u64
    }

    /// `floor(ticks * self)`.
    pub fn scale_floor(self, ticks: u64) -> u64 {
        (u128::from(ticks) * u128::from(self.numer()) / u128::from(self.denom())) as u64
    }

    /// `ceil(ticks * self)`.
    pub fn scale_ceil(self, ticks: u64) -> u64 {
        (u128::from(ticks) * u128::from(self.numer())).div_ceil(u128::from(self.denom())) as u64
    }

    pub fn at_least_one(self) -> bool {
        self.numer() >= self.denom()
    }
}

impl Default for Factor {
    fn default() -> Self {
        Factor::ONE
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("/factor", format!("invalid factor `{s}`"));
        let (numer, denom) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Factor::new(
            numer.parse().map_err(|_| bad())?,
            denom.parse().map_err(|_| bad())?,
        )
    }
}

impl TryFrom<FactorRepr> for Factor {
    type Error = Error;

    fn try_from(value: FactorRepr) -> Result<Self> {
        match value {
            FactorRepr::Int(n) => Factor::integer(n),
            FactorRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Factor> for String {
    fn from(value: Factor) -> String {
        value.to_string()
    }
}

/// Raw tick cost of a workload step and of each inserted check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckCosts {
    pub step: Ticks,
    pub asan: Ticks,
    pub msan: Ticks,
    pub ub: Ticks,
}

impl CheckCosts {
    /// No instrumentation overhead at all.
    pub fn uninstrumented(step: Ticks) -> Self {
        CheckCosts {
            step,
            asan: 0,
            msan: 0,
            ub: 0,
        }
    }
}

impl Default for CheckCosts {
    fn default() -> Self {
        CheckCosts {
            step: 1,
            asan: 1,
            msan: 1,
            ub: 1,
        }
    }
}

/// Checks executed by one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckCounts {
    pub asan: u64,
    pub msan: u64,
    pub ub: u64,
}

impl CheckCounts {
    pub fn total(&self) -> u64 {
        self.asan + self.msan + self.ub
    }
}

/// Raw instrumented ticks and the virtual clock derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeModel {
    raw_ticks: Ticks,
    slowdown: Factor,
    costs: CheckCosts,
}

impl TimeModel {
    pub fn new(slowdown: Factor, costs: CheckCosts) -> Self {
        TimeModel {
            raw_ticks: 0,
            slowdown,
            costs,
        }
    }

    pub fn raw_ticks(&self) -> Ticks {
        self.raw_ticks
    }

    pub fn slowdown(&self) -> Factor {
        self.slowdown
    }

    pub fn costs(&self) -> &CheckCosts {
        &self.costs
    }

    pub fn virtual_now(&self) -> Ticks {
        self.slowdown.divide_floor(self.raw_ticks)
    }

    /// Raw cost of a step with the given checks.
    pub fn step_cost(&self, base: Ticks, counts: CheckCounts) -> Ticks {
        base + counts.asan * self.costs.asan
            + counts.msan * self.costs.msan
            + counts.ub * self.costs.ub
    }

    pub fn advance(&mut self, base: Ticks, counts: CheckCounts) {
        self.raw_ticks += self.step_cost(base, counts);
    }

    /// Wait until virtual time reaches `target`; no-op if already there.
    pub fn idle_until(&mut self, target: Ticks) {
        if self.virtual_now() < target {
            self.raw_ticks = self.raw_ticks.max(self.slowdown.scale_ceil(target));
        }
    }

    /// Let `n` virtual ticks pass.
    pub fn idle(&mut self, n: Ticks) {
        let target = self.virtual_now() + n;
        self.idle_until(target);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub partition: PartitionId,
    pub start: Ticks,
    pub len: Ticks,
}

impl Window {
    pub fn end(&self) -> Ticks {
        self.start + self.len
    }
}

/// The repeating schedule. Windows tile `[0, frame_len)` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MajorFrameRepr")]
pub struct MajorFrame {
    frame_len: Ticks,
    windows: Vec<Window>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MajorFrameRepr {
    frame_len: Ticks,
    windows: Vec<Window>,
}

impl TryFrom<MajorFrameRepr> for MajorFrame {
    type Error = Error;

    fn try_from(value: MajorFrameRepr) -> Result<Self> {
        MajorFrame::new(value.frame_len, value.windows)
    }
}

impl MajorFrame {
    pub fn new(frame_len: Ticks, windows: Vec<Window>) -> Result<Self> {
        const PATH: &str = "/time/major_frame";
        if frame_len == 0 {
            return Err(Error::config(
                format!("{PATH}/frame_len"),
                "frame length must be positive",
            ));
        }
        if windows.is_empty() {
            return Err(Error::config(
                format!("{PATH}/windows"),
                "at least one window is required",
            ));
        }
        let mut cursor = 0;
        for (i, w) in windows.iter().enumerate() {
            let path = format!("{PATH}/windows/{i}");
            if w.len == 0 {
                return Err(Error::config(path, "window length must be positive"));
            }
            if w.start < cursor {
                return Err(Error::config(
                    path,
                    format!(
                        "window starting at {} overlaps the previous one ending at {cursor}",
                        w.start
                    ),
                ));
            }
            if w.start > cursor {
                return Err(Error::config(
                    path,
                    format!("gap [{cursor}, {}) is not covered by any window", w.start),
                ));
            }
            cursor = w.end();
            if cursor > frame_len {
                return Err(Error::config(
                    path,
                    format!("window ends at {cursor}, past the frame length {frame_len}"),
                ));
            }
        }
        if cursor != frame_len {
            return Err(Error::config(
                format!("{PATH}/windows"),
                format!("windows end at {cursor} but the frame is {frame_len} long"),
            ));
        }
        Ok(MajorFrame { frame_len, windows })
    }

    /// One window owned by `partition` spanning the whole frame.
    pub fn single(partition: PartitionId, frame_len: Ticks) -> Self {
        MajorFrame::new(
            frame_len,
            vec![Window {
                partition,
                start: 0,
                len: frame_len,
            }],
        )
        .expect("a single full window is valid")
    }

    pub fn frame_len(&self) -> Ticks {
        self.frame_len
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn has_window_for(&self, partition: PartitionId) -> bool {
        self.windows.iter().any(|w| w.partition == partition)
    }

    /// Owner of the window containing `now` and the ticks left in it.
    pub fn current_window(&self, now: Ticks) -> (PartitionId, Ticks) {
        let position = now % self.frame_len;
        let index = self.windows.partition_point(|w| w.end() <= position);
        let w = &self.windows[index];
        (w.partition, w.end() - position)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Identifier reported for the partition's main context.
pub const MAIN_PROCESS_ID: ProcessId = ProcessId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProcessState {
    Dormant,
    Ready,
    Running,
    Waiting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub id: ProcessId,
    /// `None` for aperiodic processes.
    #[serde(default)]
    pub period: Option<Ticks>,
    pub time_capacity: Ticks,
    #[serde(default)]
    pub priority: i32,
    #[serde(default = "ProcessConfig::default_state")]
    pub initial_state: ProcessState,
}

impl ProcessConfig {
    fn default_state() -> ProcessState {
        ProcessState::Ready
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.id == MAIN_PROCESS_ID {
            return Err(Error::config(
                format!("{path}/id"),
                "process id 0 is reserved for the main context",
            ));
        }
        if let Some(period) = self.period {
            if period == 0 {
                return Err(Error::config(
                    format!("{path}/period"),
                    "period must be positive",
                ));
            }
            if self.time_capacity > period {
                return Err(Error::config(
                    format!("{path}/time_capacity"),
                    format!("capacity {} exceeds period {period}", self.time_capacity),
                ));
            }
        }
        if !matches!(
            self.initial_state,
            ProcessState::Ready | ProcessState::Dormant
        ) {
            return Err(Error::config(
                format!("{path}/initial_state"),
                "processes start READY or DORMANT",
            ));
        }
        Ok(())
    }
}

/// Run-time state of one process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    pub config: ProcessConfig,
    pub state: ProcessState,
    /// Virtual time of the current activation.
    pub activation: Option<Ticks>,
}

impl Process {
    pub fn new(config: ProcessConfig) -> Self {
        let state = config.initial_state;
        Process {
            config,
            state,
            activation: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.config.id
    }

    pub fn activate(&mut self, now: Ticks) {
        self.state = ProcessState::Ready;
        self.activation = Some(now);
    }
}

/// Pick the highest-priority READY (or RUNNING) process, lowest id on ties.
///
/// The winner becomes RUNNING; a preempted RUNNING process drops to READY.
/// `None` means the partition idles.
pub fn dispatch(processes: &mut [Process]) -> Option<ProcessId> {
    let chosen = processes
        .iter()
        .filter(|p| matches!(p.state, ProcessState::Ready | ProcessState::Running))
        .min_by_key(|p| (std::cmp::Reverse(p.config.priority), p.config.id))
        .map(Process::id)?;
    for p in processes.iter_mut() {
        if p.id() == chosen {
            p.state = ProcessState::Running;
        } else if p.state == ProcessState::Running {
            p.state = ProcessState::Ready;
        }
    }
    Some(chosen)
}

/// Local scaling of one process's deadline budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeoutOverride {
    pub process: ProcessId,
    pub multiplier: Factor,
}

impl TimeoutOverride {
    pub fn new(process: ProcessId, multiplier: Factor) -> Result<Self> {
        if !multiplier.at_least_one() {
            return Err(Error::config(
                "/multiplier",
                "timeout multipliers must be at least 1",
            ));
        }
        Ok(TimeoutOverride {
            process,
            multiplier,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadlineStatus {
    Pass,
    Miss { elapsed: Ticks, budget: Ticks },
}

/// Budget after applying an override, if one targets this process.
pub fn effective_capacity(process: &ProcessConfig, overrides: &[TimeoutOverride]) -> Ticks {
    overrides
        .iter()
        .find(|o| o.process == process.id)
        .map_or(process.time_capacity, |o| {
            o.multiplier.scale_floor(process.time_capacity)
        })
}

pub fn check_deadline(
    process: &Process,
    now: Ticks,
    overrides: &[TimeoutOverride],
) -> DeadlineStatus {
    let Some(activation) = process.activation else {
        return DeadlineStatus::Pass;
    };
    let elapsed = now.saturating_sub(activation);
    let budget = effective_capacity(&process.config, overrides);
    if elapsed > budget {
        DeadlineStatus::Miss { elapsed, budget }
    } else {
        DeadlineStatus::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Caller {
    Main,
    Process(ProcessId),
}

/// APEX return code for GET_MY_ID on older standard revisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvalidMode;

/// GET_MY_ID. `legacy` reproduces the pre-revision behavior that had no id
/// for the main context.
pub fn get_my_id(caller: Caller, legacy: bool) -> std::result::Result<ProcessId, InvalidMode> {
    match caller {
        Caller::Process(id) => Ok(id),
        Caller::Main if legacy => Err(InvalidMode),
        Caller::Main => Ok(MAIN_PROCESS_ID),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(asan: u64) -> CheckCounts {
        CheckCounts {
            asan,
            ..CheckCounts::default()
        }
    }

    #[test]
    fn advance_examples() {
        let mut t = TimeModel::new(Factor::ONE, CheckCosts::default());
        t.advance(1, CheckCounts::default());
        assert_eq!(t.virtual_now(), 1);

        let mut t = TimeModel::new(Factor::integer(2).unwrap(), CheckCosts::default());
        t.advance(1, counts(1));
        assert_eq!((t.raw_ticks(), t.virtual_now()), (2, 1));

        let mut t = TimeModel::new(Factor::integer(2).unwrap(), CheckCosts::default());
        for _ in 0..40 {
            t.advance(1, counts(1));
        }
        assert_eq!((t.raw_ticks(), t.virtual_now()), (80, 40));
    }

    #[test]
    fn rational_factor_floors() {
        let f: Factor = "3/2".parse().unwrap();
        let mut t = TimeModel::new(f, CheckCosts::default());
        t.advance(4, CheckCounts::default());
        assert_eq!(t.virtual_now(), 2);
        t.idle_until(10);
        assert_eq!(t.virtual_now(), 10);
        assert_eq!(t.raw_ticks(), 15);
        assert!("0".parse::<Factor>().is_err());
        assert!("1/0".parse::<Factor>().is_err());
        assert_eq!(
            serde_json::from_str::<Factor>("2").unwrap(),
            Factor::integer(2).unwrap()
        );
        assert_eq!(serde_json::from_str::<Factor>("\"3/2\"").unwrap(), f);
    }

    fn two_windows() -> MajorFrame {
        MajorFrame::new(
            100,
            vec![
                Window {
                    partition: PartitionId(1),
                    start: 0,
                    len: 50,
                },
                Window {
                    partition: PartitionId(2),
                    start: 50,
                    len: 50,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn current_window_examples() {
        let f = two_windows();
        assert_eq!(f.current_window(0), (PartitionId(1), 50));
        assert_eq!(f.current_window(50), (PartitionId(2), 50));
        assert_eq!(f.current_window(237), (PartitionId(1), 13));
        assert_eq!(f.current_window(287), (PartitionId(2), 13));
        assert_eq!(f.current_window(49), (PartitionId(1), 1));
    }

    #[test]
    fn frame_validation_paths() {
        let w = |start, len| Window {
            partition: PartitionId(1),
            start,
            len,
        };
        let err = MajorFrame::new(100, vec![w(0, 60), w(50, 50)]).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref path, .. } if path == "/time/major_frame/windows/1")
        );
        assert!(MajorFrame::new(100, vec![w(0, 40), w(50, 50)]).is_err());
        assert!(MajorFrame::new(100, vec![w(0, 50)]).is_err());
        assert!(MajorFrame::new(100, vec![]).is_err());
        assert!(MajorFrame::new(100, vec![w(0, 120)]).is_err());
    }

    fn proc(id: u32, priority: i32) -> Process {
        Process::new(ProcessConfig {
            id: ProcessId(id),
            period: None,
            time_capacity: 100,
            priority,
            initial_state: ProcessState::Ready,
        })
    }

    #[test]
    fn dispatch_examples() {
        let mut ps = vec![proc(1, 5), proc(2, 9)];
        assert_eq!(dispatch(&mut ps), Some(ProcessId(2)));
        assert_eq!(ps[1].state, ProcessState::Running);

        let mut ps = vec![proc(2, 5), proc(1, 5)];
        assert_eq!(dispatch(&mut ps), Some(ProcessId(1)));

        let mut ps = vec![proc(1, 5)];
        ps[0].state = ProcessState::Dormant;
        assert_eq!(dispatch(&mut ps), None);
    }

    #[test]
    fn dispatch_demotes_previous_runner() {
        let mut ps = vec![proc(1, 5), proc(2, 1)];
        ps[1].state = ProcessState::Running;
        assert_eq!(dispatch(&mut ps), Some(ProcessId(1)));
        assert_eq!(ps[1].state, ProcessState::Ready);
    }

    /// Exhaustive check of the tie-break over every priority assignment of
    /// three READY processes drawn from three levels.
    #[test]
    fn dispatch_tie_break_enumeration() {
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let prios = [a, b, c];
                    let mut ps: Vec<_> = (0..3).map(|i| proc(i as u32 + 1, prios[i])).collect();
                    let top = *prios.iter().max().unwrap();
                    let expected = prios.iter().position(|&p| p == top).unwrap() as u32 + 1;
                    assert_eq!(dispatch(&mut ps), Some(ProcessId(expected)));
                }
            }
        }
    }

    #[test]
    fn deadline_examples() {
        let mut p = proc(1, 0);
        p.config.time_capacity = 50;
        p.activate(0);
        assert_eq!(check_deadline(&p, 40, &[]), DeadlineStatus::Pass);
        assert_eq!(check_deadline(&p, 50, &[]), DeadlineStatus::Pass);
        assert_eq!(
            check_deadline(&p, 80, &[]),
            DeadlineStatus::Miss {
                elapsed: 80,
                budget: 50
            }
        );
        let o = TimeoutOverride::new(ProcessId(1), Factor::integer(2).unwrap()).unwrap();
        assert_eq!(check_deadline(&p, 80, &[o]), DeadlineStatus::Pass);
        assert!(TimeoutOverride::new(ProcessId(1), "1/2".parse().unwrap()).is_err());
    }

    #[test]
    fn get_my_id_examples() {
        assert_eq!(get_my_id(Caller::Main, false), Ok(MAIN_PROCESS_ID));
        assert_eq!(
            get_my_id(Caller::Process(ProcessId(3)), false),
            Ok(ProcessId(3))
        );
        assert_eq!(get_my_id(Caller::Main, true), Err(InvalidMode));
        assert_eq!(
            get_my_id(Caller::Process(ProcessId(3)), true),
            Ok(ProcessId(3))
        );
    }

    #[test]
    fn capacity_must_fit_period() {
        let cfg = ProcessConfig {
            id: ProcessId(1),
            period: Some(10),
            time_capacity: 20,
            priority: 0,
            initial_state: ProcessState::Ready,
        };
        assert!(cfg.validate("/p").is_err());
    }
}
