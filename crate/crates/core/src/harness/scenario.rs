// SPDX-License-Identifier: Apache-2.0

//! Scenario files: schema, loading and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asan_shadow::Granularity;
use crate::error::{Error, Result};
use crate::guest_memory::{MemoryConfig, PartitionId};
use crate::msan_shadow::{PaddingRegistry, ReservedInitConfig};
use crate::sched::{
    CheckCosts, Factor, MajorFrame, ProcessConfig, ProcessId, Ticks, TimeoutOverride, Window,
};
use crate::syscall_annotations::{parse_template, SyscallSpec};
use crate::ub_checks::{Alignment, ArithOp, IntSpec};

use super::report::FINDING_KINDS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub partitions: Vec<PartitionSpec>,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ports: Vec<PortSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub types: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub padding: BTreeMap<String, Vec<PaddingRange>>,
    #[serde(default)]
    pub reserved_init: ReservedInitConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub syscalls: Vec<String>,
    #[serde(default)]
    pub workload: Vec<Step>,
    #[serde(default)]
    pub expect: Vec<ExpectedViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub id: PartitionId,
    pub memory_size: u64,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default = "default_redzone")]
    pub redzone: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub processes: Vec<ProcessConfig>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub legacy_get_my_id: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub strict_unsigned: bool,
}

fn default_redzone() -> u64 {
    MemoryConfig::DEFAULT_REDZONE
}

fn is_false(v: &bool) -> bool {
    !v
}

/// A region laid out before the workload starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub label: String,
    /// Defaults to the size of `type`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub slowdown_factor: Factor,
    #[serde(default)]
    pub costs: CheckCosts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major_frame: Option<FrameSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timeout_overrides: Vec<TimeoutOverride>,
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            slowdown_factor: Factor::ONE,
            costs: CheckCosts::default(),
            major_frame: None,
            timeout_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub frame_len: Ticks,
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortKind {
    Sampling,
    Queueing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub name: String,
    pub kind: PortKind,
    pub source: PartitionId,
    pub destination: PartitionId,
    pub max_message_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_period: Option<Ticks>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaddingRange {
    pub offset: u64,
    pub len: u64,
}

/// A guest address named by region label or absolute offset.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemRef {
    /// Memory of another partition; defaults to the executing one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<PartitionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// Signed offset from the region base.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<u64>,
}

fn is_zero(v: &i64) -> bool {
    *v == 0
}

impl MemRef {
    pub fn region(label: &str, offset: i64) -> Self {
        MemRef {
            region: Some(label.to_string()),
            offset,
            ..MemRef::default()
        }
    }

    pub fn abs(offset: u64) -> Self {
        MemRef {
            abs: Some(offset),
            ..MemRef::default()
        }
    }
}

/// Integer literal; strings allow the full 128-bit range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntLit {
    Signed(i64),
    Unsigned(u64),
    Text(String),
}

impl IntLit {
    pub fn value(&self) -> std::result::Result<i128, String> {
        match self {
            IntLit::Signed(v) => Ok(i128::from(*v)),
            IntLit::Unsigned(v) => Ok(i128::from(*v)),
            IntLit::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| format!("`{s}` is not an integer")),
        }
    }
}

impl From<i128> for IntLit {
    fn from(v: i128) -> Self {
        match (i64::try_from(v), u64::try_from(v)) {
            (Ok(v), _) => IntLit::Signed(v),
            (_, Ok(v)) => IntLit::Unsigned(v),
            _ => IntLit::Text(v.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Operand {
    Lit(IntLit),
    Mem(MemRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Data {
    Hex(String),
    Fill { byte: u8, len: u64 },
    Int { value: IntLit, spec: IntSpec },
}

/// How one syscall parameter is bound to guest memory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr_of: Option<MemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<MemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deref: Option<MemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deref_size: Option<u64>,
}

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Alloc {
        region: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size: Option<u64>,
        #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
        type_name: Option<String>,
    },
    Write {
        at: MemRef,
        data: Data,
    },
    Read {
        at: MemRef,
        len: u64,
    },
    Copy {
        from: MemRef,
        to: MemRef,
        len: u64,
    },
    BranchOn {
        at: MemRef,
        len: u64,
    },
    Arith {
        #[serde(rename = "operator")]
        operator: ArithOp,
        a: Operand,
        b: Operand,
        spec: IntSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dst: Option<MemRef>,
    },
    Div {
        a: Operand,
        b: Operand,
        spec: IntSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dst: Option<MemRef>,
    },
    Shift {
        a: Operand,
        b: Operand,
        spec: IntSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dst: Option<MemRef>,
    },
    Trunc {
        a: Operand,
        from: IntSpec,
        to: IntSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dst: Option<MemRef>,
    },
    FloatCast {
        value: f64,
        to: IntSpec,
    },
    AlignCheck {
        at: MemRef,
        align: Alignment,
    },
    NonnullCheck {
        at: MemRef,
    },
    BoolCheck {
        v: Operand,
    },
    EnumCheck {
        v: Operand,
        name: String,
        allowed: Vec<i64>,
    },
    Syscall {
        syscall: String,
        #[serde(default)]
        bind: BTreeMap<String, BindSpec>,
        #[serde(default = "yes", skip_serializing_if = "is_true")]
        succeed: bool,
    },
    Send {
        port: String,
        from: MemRef,
        len: u64,
    },
    Receive {
        port: String,
        to: MemRef,
    },
    SamplingWrite {
        port: String,
        from: MemRef,
        len: u64,
    },
    SamplingRead {
        port: String,
        to: MemRef,
    },
    ResetPartition,
    GetMyId,
    Idle {
        ticks: Ticks,
    },
}

/// One workload step and the context that executes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Defaults to the first partition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<PartitionId>,
    /// Defaults to the partition's main context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proc: Option<ProcessId>,
    #[serde(flatten)]
    pub action: Action,
}

impl Step {
    pub fn main(action: Action) -> Self {
        Step {
            part: None,
            proc: None,
            action,
        }
    }
}

/// Pattern for one expected finding; unset fields match anything.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedViolation {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<PartitionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proc: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// Address relative to the region base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<u64>,
}

impl ExpectedViolation {
    pub fn kind(kind: &str) -> Self {
        ExpectedViolation {
            kind: kind.to_string(),
            ..Self::default()
        }
    }
}

/// Everything the interpreter needs, derived from a validated scenario.
#[derive(Debug, Clone)]
pub struct Plan {
    pub frame: MajorFrame,
    pub padding: PaddingRegistry,
    pub syscalls: Vec<SyscallSpec>,
    /// Partition index for each step.
    pub step_partition: Vec<usize>,
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        out.push('/');
        match segment {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(json_pointer(e.path()), e.inner().to_string()))?;
        scenario.plan()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    pub fn partition_index(&self, id: PartitionId) -> Option<usize> {
        self.partitions.iter().position(|p| p.id == id)
    }

    /// Partition index a step runs in.
    pub fn step_partition(&self, step: &Step) -> Option<usize> {
        match step.part {
            Some(id) => self.partition_index(id),
            None => (!self.partitions.is_empty()).then_some(0),
        }
    }

    pub fn port(&self, name: &str) -> Option<&PortSpec> {
        self.ports.iter().find(|p| p.name == name)
    }

    /// Size of a region declared up front, from its size or its type.
    pub fn region_size(&self, region: &RegionSpec) -> Option<u64> {
        region.size.or_else(|| {
            region
                .type_name
                .as_ref()
                .and_then(|t| self.types.get(t).copied())
        })
    }

    fn frame(&self) -> Result<MajorFrame> {
        match &self.time.major_frame {
            Some(spec) => MajorFrame::new(spec.frame_len, spec.windows.clone()),
            None => {
                const WINDOW: Ticks = 1000;
                let windows = self
                    .partitions
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Window {
                        partition: p.id,
                        start: i as Ticks * WINDOW,
                        len: WINDOW,
                    })
                    .collect();
                MajorFrame::new(WINDOW * self.partitions.len() as Ticks, windows)
            }
        }
    }

    /// Check every cross-reference and derive the run plan.
    pub fn plan(&self) -> Result<Plan> {
        if self.name.trim().is_empty() {
            return Err(Error::config("/name", "scenario name must not be empty"));
        }
        if self.partitions.is_empty() {
            return Err(Error::config(
                "/partitions",
                "at least one partition is required",
            ));
        }
        let mut ids = BTreeSet::new();
        let mut processes: BTreeMap<ProcessId, PartitionId> = BTreeMap::new();
        for (i, p) in self.partitions.iter().enumerate() {
            let path = format!("/partitions/{i}");
            if !ids.insert(p.id) {
                return Err(Error::config(
                    format!("{path}/id"),
                    format!("duplicate partition {}", p.id),
                ));
            }
            if p.memory_size == 0 || !p.granularity.is_aligned(p.memory_size) {
                return Err(Error::config(
                    format!("{path}/memory_size"),
                    format!(
                        "must be a positive multiple of granularity {}",
                        p.granularity.get()
                    ),
                ));
            }
            if p.redzone < p.granularity.get() || !p.granularity.is_aligned(p.redzone) {
                return Err(Error::config(
                    format!("{path}/redzone"),
                    format!(
                        "must be a non-zero multiple of granularity {}",
                        p.granularity.get()
                    ),
                ));
            }
            let mut labels = BTreeSet::new();
            for (j, r) in p.regions.iter().enumerate() {
                let rpath = format!("{path}/regions/{j}");
                if !labels.insert(r.label.as_str()) {
                    return Err(Error::config(
                        format!("{rpath}/label"),
                        format!("duplicate region `{}`", r.label),
                    ));
                }
                if let Some(t) = &r.type_name {
                    if !self.types.contains_key(t) {
                        return Err(Error::config(
                            format!("{rpath}/type"),
                            format!("unknown type `{t}`"),
                        ));
                    }
                }
                match self.region_size(r) {
                    Some(0) | None => {
                        return Err(Error::config(
                            format!("{rpath}/size"),
                            "region needs a positive size or a type",
                        ))
                    }
                    Some(_) => {}
                }
            }
            for (j, proc) in p.processes.iter().enumerate() {
                let ppath = format!("{path}/processes/{j}");
                proc.validate(&ppath)?;
                if processes.insert(proc.id, p.id).is_some() {
                    return Err(Error::config(
                        format!("{ppath}/id"),
                        format!("duplicate process {}", proc.id),
                    ));
                }
            }
        }

        let frame = self.frame()?;
        for (i, w) in frame.windows().iter().enumerate() {
            if !ids.contains(&w.partition) {
                return Err(Error::config(
                    format!("/time/major_frame/windows/{i}/partition"),
                    format!("unknown partition {}", w.partition),
                ));
            }
        }
        for (i, p) in self.partitions.iter().enumerate() {
            if !frame.has_window_for(p.id) {
                return Err(Error::config(
                    format!("/partitions/{i}/id"),
                    format!("partition {} has no window in the major frame", p.id),
                ));
            }
        }
        for (i, o) in self.time.timeout_overrides.iter().enumerate() {
            let path = format!("/time/timeout_overrides/{i}");
            if !processes.contains_key(&o.process) {
                return Err(Error::config(
                    format!("{path}/process"),
                    format!("unknown process {}", o.process),
                ));
            }
            if !o.multiplier.at_least_one() {
                return Err(Error::config(
                    format!("{path}/multiplier"),
                    "timeout multipliers must be at least 1",
                ));
            }
        }

        let mut port_names = BTreeSet::new();
        for (i, port) in self.ports.iter().enumerate() {
            let path = format!("/ports/{i}");
            if !port_names.insert(port.name.as_str()) {
                return Err(Error::config(
                    format!("{path}/name"),
                    format!("duplicate port `{}`", port.name),
                ));
            }
            for (field, id) in [("source", port.source), ("destination", port.destination)] {
                if !ids.contains(&id) {
                    return Err(Error::config(
                        format!("{path}/{field}"),
                        format!("unknown partition {id}"),
                    ));
                }
            }
            if port.max_message_size == 0 {
                return Err(Error::config(
                    format!("{path}/max_message_size"),
                    "must be positive",
                ));
            }
            match port.kind {
                PortKind::Sampling if port.refresh_period.is_none() => {
                    return Err(Error::config(
                        format!("{path}/refresh_period"),
                        "sampling ports need a refresh period",
                    ))
                }
                PortKind::Queueing if port.capacity.unwrap_or(0) == 0 => {
                    return Err(Error::config(
                        format!("{path}/capacity"),
                        "queueing ports need a positive capacity",
                    ))
                }
                _ => {}
            }
        }

        for (name, &size) in &self.types {
            if size == 0 {
                return Err(Error::config(
                    format!("/types/{name}"),
                    "type sizes must be positive",
                ));
            }
        }
        let mut padding = PaddingRegistry::new();
        for (name, ranges) in &self.padding {
            let size = *self.types.get(name).ok_or_else(|| {
                Error::config(format!("/padding/{name}"), format!("unknown type `{name}`"))
            })?;
            padding.register(
                name.clone(),
                size,
                ranges.iter().map(|r| (r.offset, r.len)).collect(),
            )?;
        }

        let mut syscalls: Vec<SyscallSpec> = Vec::new();
        for (i, text) in self.syscalls.iter().enumerate() {
            let spec = parse_template(text)
                .map_err(|e| Error::config(format!("/syscalls/{i}"), e.to_string()))?;
            if syscalls.iter().any(|s| s.syscall_name == spec.syscall_name) {
                return Err(Error::config(
                    format!("/syscalls/{i}"),
                    format!("duplicate syscall `{}`", spec.syscall_name),
                ));
            }
            syscalls.push(spec);
        }

        let mut step_partition = Vec::with_capacity(self.workload.len());
        for (i, step) in self.workload.iter().enumerate() {
            let path = format!("/workload/{i}");
            let part = self
                .step_partition(step)
                .ok_or_else(|| Error::config(format!("{path}/part"), "unknown partition"))?;
            let pspec = &self.partitions[part];
            if let Some(proc) = step.proc {
                if !pspec.processes.iter().any(|p| p.id == proc) {
                    return Err(Error::config(
                        format!("{path}/proc"),
                        format!("partition {} has no process {proc}", pspec.id),
                    ));
                }
            }
            self.check_action(&path, pspec, &step.action, &syscalls)?;
            step_partition.push(part);
        }

        for (i, e) in self.expect.iter().enumerate() {
            let path = format!("/expect/{i}");
            if !FINDING_KINDS.contains(&e.kind.as_str()) {
                return Err(Error::config(
                    format!("{path}/kind"),
                    format!("unknown finding kind `{}`", e.kind),
                ));
            }
            if let Some(part) = e.part {
                if !ids.contains(&part) {
                    return Err(Error::config(
                        format!("{path}/part"),
                        format!("unknown partition {part}"),
                    ));
                }
            }
            if e.offset.is_some() && e.region.is_none() {
                return Err(Error::config(
                    format!("{path}/offset"),
                    "an offset needs a region",
                ));
            }
        }

        Ok(Plan {
            frame,
            padding,
            syscalls,
            step_partition,
        })
    }

    fn declares_region(&self, part: &PartitionSpec, label: &str) -> bool {
        part.regions.iter().any(|r| r.label == label)
            || self.workload.iter().any(|s| {
                self.step_partition(s).map(|i| self.partitions[i].id) == Some(part.id)
                    && matches!(&s.action, Action::Alloc { region, .. } if region == label)
            })
    }

    fn check_ref(&self, path: &str, part: &PartitionSpec, r: &MemRef) -> Result<()> {
        let target = match r.part {
            Some(id) => self
                .partition_index(id)
                .map(|i| &self.partitions[i])
                .ok_or_else(|| {
                    Error::config(format!("{path}/part"), format!("unknown partition {id}"))
                })?,
            None => part,
        };
        match (&r.region, r.abs) {
            (Some(label), None) if self.declares_region(target, label) => Ok(()),
            (Some(label), None) => Err(Error::config(
                format!("{path}/region"),
                format!("partition {} has no region `{label}`", target.id),
            )),
            (None, Some(_)) if r.offset == 0 => Ok(()),
            (None, Some(_)) => Err(Error::config(
                format!("{path}/offset"),
                "absolute references take no offset",
            )),
            _ => Err(Error::config(
                path,
                "give exactly one of `region` and `abs`",
            )),
        }
    }

    fn check_operand(&self, path: &str, part: &PartitionSpec, op: &Operand) -> Result<()> {
        match op {
            Operand::Lit(lit) => lit
                .value()
                .map(drop)
                .map_err(|m| Error::config(format!("{path}/lit"), m)),
            Operand::Mem(r) => self.check_ref(&format!("{path}/mem"), part, r),
        }
    }

    fn check_port(
        &self,
        path: &str,
        part: &PartitionSpec,
        name: &str,
        kind: PortKind,
        sending: bool,
    ) -> Result<()> {
        let port = self.port(name).ok_or_else(|| {
            Error::config(format!("{path}/port"), format!("unknown port `{name}`"))
        })?;
        if port.kind != kind {
            return Err(Error::config(
                format!("{path}/port"),
                format!("port `{name}` is not a {kind:?} port"),
            ));
        }
        let (endpoint, role) = if sending {
            (port.source, "source")
        } else {
            (port.destination, "destination")
        };
        if endpoint != part.id {
            return Err(Error::config(
                format!("{path}/part"),
                format!("partition {} is not the {role} of port `{name}`", part.id),
            ));
        }
        Ok(())
    }

    fn check_action(
        &self,
        path: &str,
        part: &PartitionSpec,
        action: &Action,
        syscalls: &[SyscallSpec],
    ) -> Result<()> {
        let dst = |d: &Option<MemRef>| match d {
            Some(r) => self.check_ref(&format!("{path}/dst"), part, r),
            None => Ok(()),
        };
        match action {
            Action::Alloc {
                size, type_name, ..
            } => {
                if let Some(t) = type_name {
                    if !self.types.contains_key(t) {
                        return Err(Error::config(
                            format!("{path}/type"),
                            format!("unknown type `{t}`"),
                        ));
                    }
                }
                let resolved =
                    size.or_else(|| type_name.as_ref().and_then(|t| self.types.get(t).copied()));
                if resolved.unwrap_or(0) == 0 {
                    return Err(Error::config(
                        format!("{path}/size"),
                        "region needs a positive size or a type",
                    ));
                }
                Ok(())
            }
            Action::Write { at, data } => {
                self.check_ref(&format!("{path}/at"), part, at)?;
                match data {
                    Data::Hex(h) => hex::decode(h)
                        .map(drop)
                        .map_err(|e| Error::config(format!("{path}/data/hex"), e.to_string())),
                    Data::Fill { .. } => Ok(()),
                    Data::Int { value, .. } => value
                        .value()
                        .map(drop)
                        .map_err(|m| Error::config(format!("{path}/data/int/value"), m)),
                }
            }
            Action::Read { at, .. }
            | Action::BranchOn { at, .. }
            | Action::AlignCheck { at, .. }
            | Action::NonnullCheck { at } => self.check_ref(&format!("{path}/at"), part, at),
            Action::Copy { from, to, .. } => {
                self.check_ref(&format!("{path}/from"), part, from)?;
                self.check_ref(&format!("{path}/to"), part, to)
            }
            Action::Arith { a, b, dst: d, .. }
            | Action::Div { a, b, dst: d, .. }
            | Action::Shift { a, b, dst: d, .. } => {
                self.check_operand(&format!("{path}/a"), part, a)?;
                self.check_operand(&format!("{path}/b"), part, b)?;
                dst(d)
            }
            Action::Trunc { a, dst: d, .. } => {
                self.check_operand(&format!("{path}/a"), part, a)?;
                dst(d)
            }
            Action::FloatCast { .. }
            | Action::ResetPartition
            | Action::GetMyId
            | Action::Idle { .. } => Ok(()),
            Action::BoolCheck { v } => self.check_operand(&format!("{path}/v"), part, v),
            Action::EnumCheck { v, allowed, .. } => {
                if allowed.is_empty() {
                    return Err(Error::config(
                        format!("{path}/allowed"),
                        "an enum needs at least one value",
                    ));
                }
                self.check_operand(&format!("{path}/v"), part, v)
            }
            Action::Syscall { syscall, bind, .. } => {
                let spec = syscalls
                    .iter()
                    .find(|s| {
                        &s.syscall_name == syscall
                            || s.user_name.as_deref() == Some(syscall.as_str())
                    })
                    .ok_or_else(|| {
                        Error::config(
                            format!("{path}/syscall"),
                            format!("unknown syscall `{syscall}`"),
                        )
                    })?;
                for (name, b) in bind {
                    let bpath = format!("{path}/bind/{name}");
                    if spec.param(name).is_none() {
                        return Err(Error::config(
                            &bpath,
                            format!("`{syscall}` has no parameter `{name}`"),
                        ));
                    }
                    for (field, r) in [
                        ("addr_of", &b.addr_of),
                        ("value", &b.value),
                        ("deref", &b.deref),
                    ] {
                        if let Some(r) = r {
                            self.check_ref(&format!("{bpath}/{field}"), part, r)?;
                        }
                    }
                }
                Ok(())
            }
            Action::Send { port, from, .. } => {
                self.check_port(path, part, port, PortKind::Queueing, true)?;
                self.check_ref(&format!("{path}/from"), part, from)
            }
            Action::SamplingWrite { port, from, .. } => {
                self.check_port(path, part, port, PortKind::Sampling, true)?;
                self.check_ref(&format!("{path}/from"), part, from)
            }
            Action::Receive { port, to } => {
                self.check_port(path, part, port, PortKind::Queueing, false)?;
                self.check_ref(&format!("{path}/to"), part, to)
            }
            Action::SamplingRead { port, to } => {
                self.check_port(path, part, port, PortKind::Sampling, false)?;
                self.check_ref(&format!("{path}/to"), part, to)
            }
        }
    }
}

/// Read and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("/", format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text)
}
