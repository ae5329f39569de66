// SPDX-License-Identifier: Apache-2.0

//! Workload interpreter.
//!
//! The major frame decides which partition runs. Inside a partition the main
//! context runs first, in INIT phase; once its steps are exhausted the
//! partition starts and its processes are dispatched by priority. Every step
//! is charged its base cost plus the cost of the checks it executed, and
//! findings are recorded without stopping the run.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::asan_shadow::AsanViolation;
use crate::error::{Error, Result};
use crate::guest_memory::{AccessKind, GuestAddr, MemoryConfig, MemoryViolation, PartitionMemory};
use crate::msan_shadow::{MsanViolation, Origin, UseSite};
use crate::ports::{Endpoints, PortError, QueueingPort, SamplingPort, Validity};
use crate::sched::{
    check_deadline, dispatch, get_my_id, Caller, CheckCounts, DeadlineStatus, Process, ProcessId,
    ProcessState, TimeModel, MAIN_PROCESS_ID,
};
use crate::syscall_annotations::{enforce_post, enforce_pre, resolve_sizes, ParamBinding};
use crate::ub_checks::{
    check_align, check_bool, check_enum, check_nonnull, checked_arith, checked_div,
    checked_float_to_int, checked_shift, checked_trunc, EnumSpec, IntSpec, UbConfig, UbKind,
    UbViolation,
};

use super::report::{judge, Event, RunReport, ViolationRecord};
use super::scenario::{Action, Data, MemRef, Operand, Plan, PortKind, Scenario};

struct Label {
    name: String,
    base: u64,
    len: u64,
    span: (u64, u64),
}

struct Part {
    memory: PartitionMemory,
    /// Every region ever allocated, kept across resets so stale references
    /// still resolve.
    labels: Vec<Label>,
    main: VecDeque<usize>,
    procs: Vec<Process>,
    queues: BTreeMap<ProcessId, VecDeque<usize>>,
    started: bool,
    running: Option<ProcessId>,
    missed: BTreeSet<ProcessId>,
    legacy: bool,
    ub: UbConfig,
}

impl Part {
    fn has_work(&self) -> bool {
        !self.main.is_empty()
            || self.procs.iter().any(|p| {
                matches!(p.state, ProcessState::Ready | ProcessState::Running)
                    && self.queues.get(&p.id()).is_some_and(|q| !q.is_empty())
            })
    }

    fn label(&self, name: &str) -> Option<&Label> {
        self.labels.iter().rev().find(|l| l.name == name)
    }

    /// Region an offset belongs to, or the closest one.
    fn attribute(&self, offset: u64) -> Option<(String, i64)> {
        let inside = self
            .labels
            .iter()
            .rev()
            .find(|l| (l.span.0..l.span.1).contains(&offset));
        let label = inside.or_else(|| {
            self.labels.iter().rev().min_by_key(|l| {
                if offset < l.base {
                    l.base - offset
                } else {
                    offset.saturating_sub(l.base + l.len)
                }
            })
        })?;
        Some((label.name.clone(), offset as i64 - label.base as i64))
    }
}

enum Port {
    Sampling(SamplingPort),
    Queueing(QueueingPort),
}

/// Step being executed.
#[derive(Clone, Copy)]
struct Ctx {
    step: usize,
    part: usize,
    proc: ProcessId,
    now: u64,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    plan: Plan,
    parts: Vec<Part>,
    ports: BTreeMap<String, Port>,
    time: TimeModel,
    counts: CheckCounts,
    violations: Vec<ViolationRecord>,
    events: Vec<Event>,
}

/// Run a scenario to completion. Findings never abort the run; only an
/// invalid scenario is an error.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<RunReport> {
    let mut sim = Sim::new(scenario)?;
    sim.run();
    let (verdict, diagnostics) = judge(&scenario.expect, &sim.violations);
    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed,
        raw_ticks: sim.time.raw_ticks(),
        virtual_ticks: sim.time.virtual_now(),
        violations: sim.violations,
        events: sim.events,
        verdict,
        diagnostics,
    })
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self> {
        let plan = scenario.plan()?;
        let mut parts = Vec::with_capacity(scenario.partitions.len());
        for (i, spec) in scenario.partitions.iter().enumerate() {
            let config = MemoryConfig {
                granularity: spec.granularity,
                redzone: spec.redzone,
                reserved_init: scenario.reserved_init,
            };
            let memory = PartitionMemory::create(spec.id, spec.memory_size, config).map_err(
                |e| match e {
                    Error::Config { path, message } => {
                        Error::config(format!("/partitions/{i}{path}"), message)
                    }
                    other => other,
                },
            )?;
            let mut part = Part {
                memory,
                labels: Vec::new(),
                main: VecDeque::new(),
                procs: spec.processes.iter().cloned().map(Process::new).collect(),
                queues: spec
                    .processes
                    .iter()
                    .map(|p| (p.id, VecDeque::new()))
                    .collect(),
                started: false,
                running: None,
                missed: BTreeSet::new(),
                legacy: spec.legacy_get_my_id,
                ub: UbConfig {
                    strict_unsigned: spec.strict_unsigned,
                },
            };
            for (j, region) in spec.regions.iter().enumerate() {
                let size = scenario.region_size(region).expect("validated");
                allocate(
                    &mut part,
                    &plan,
                    &region.label,
                    size,
                    region.type_name.as_deref(),
                    Origin::Declared,
                )
                .map_err(|e| {
                    Error::config(format!("/partitions/{i}/regions/{j}"), e.to_string())
                })?;
            }
            parts.push(part);
        }
        for (idx, step) in scenario.workload.iter().enumerate() {
            let part = &mut parts[plan.step_partition[idx]];
            match step.proc {
                Some(proc) => part
                    .queues
                    .get_mut(&proc)
                    .expect("validated")
                    .push_back(idx),
                None => part.main.push_back(idx),
            }
        }
        let ports = scenario
            .ports
            .iter()
            .map(|p| {
                let endpoints = Endpoints {
                    name: p.name.clone(),
                    source: p.source,
                    destination: p.destination,
                    max_message_size: p.max_message_size,
                };
                let port = match p.kind {
                    PortKind::Sampling => Port::Sampling(SamplingPort::new(
                        endpoints,
                        p.refresh_period.expect("validated"),
                    )),
                    PortKind::Queueing => {
                        Port::Queueing(QueueingPort::new(endpoints, p.capacity.expect("validated")))
                    }
                };
                (p.name.clone(), port)
            })
            .collect();
        Ok(Sim {
            scenario,
            plan,
            parts,
            ports,
            time: TimeModel::new(scenario.time.slowdown_factor, scenario.time.costs),
            counts: CheckCounts::default(),
            violations: Vec::new(),
            events: Vec::new(),
        })
    }

    fn partition_index(&self, id: crate::guest_memory::PartitionId) -> usize {
        self.scenario.partition_index(id).expect("validated")
    }

    fn run(&mut self) {
        while self.parts.iter().any(Part::has_work) {
            let now = self.time.virtual_now();
            let (id, remaining) = self.plan.frame.current_window(now);
            let pi = self.partition_index(id);
            if self.parts[pi].has_work() {
                self.run_one(pi);
            } else {
                self.time.idle_until(now + remaining);
            }
        }
    }

    fn event(
        &mut self,
        kind: &str,
        part: usize,
        proc: Option<ProcessId>,
        step: Option<usize>,
        detail: String,
    ) {
        self.events.push(Event {
            kind: kind.to_string(),
            t: self.time.virtual_now(),
            part: self.scenario.partitions[part].id,
            proc,
            step,
            detail,
        });
    }

    fn run_one(&mut self, pi: usize) {
        if let Some(idx) = self.parts[pi].main.pop_front() {
            self.exec(idx, pi, MAIN_PROCESS_ID);
            return;
        }
        let now = self.time.virtual_now();
        if !self.parts[pi].started {
            let part = &mut self.parts[pi];
            part.started = true;
            part.memory.start();
            for p in part.procs.iter_mut() {
                let has_steps = part.queues.get(&p.id()).is_some_and(|q| !q.is_empty());
                match p.state {
                    ProcessState::Ready if has_steps => p.activate(now),
                    ProcessState::Ready => p.state = ProcessState::Dormant,
                    _ => {}
                }
            }
            self.event("START", pi, None, None, String::new());
        }
        let Some(id) = dispatch(&mut self.parts[pi].procs) else {
            let (_, remaining) = self.plan.frame.current_window(now);
            self.time.idle_until(now + remaining);
            return;
        };
        if self.parts[pi].running != Some(id) {
            self.parts[pi].running = Some(id);
            let priority = self.parts[pi]
                .procs
                .iter()
                .find(|p| p.id() == id)
                .map_or(0, |p| p.config.priority);
            self.event(
                "DISPATCH",
                pi,
                Some(id),
                None,
                format!("priority={priority}"),
            );
        }
        let idx = self.parts[pi]
            .queues
            .get_mut(&id)
            .and_then(VecDeque::pop_front)
            .expect("dispatched with work");
        self.exec(idx, pi, id);
        self.check_deadlines(pi, idx);
        let part = &mut self.parts[pi];
        if part.queues.get(&id).is_some_and(VecDeque::is_empty) {
            if let Some(p) = part.procs.iter_mut().find(|p| p.id() == id) {
                p.state = ProcessState::Dormant;
            }
            part.running = None;
            self.event("COMPLETE", pi, Some(id), Some(idx), String::new());
        }
    }

    fn check_deadlines(&mut self, pi: usize, idx: usize) {
        let now = self.time.virtual_now();
        let overrides = &self.scenario.time.timeout_overrides;
        let misses: Vec<(ProcessId, u64, u64)> = self.parts[pi]
            .procs
            .iter()
            .filter(|p| matches!(p.state, ProcessState::Ready | ProcessState::Running))
            .filter(|p| !self.parts[pi].missed.contains(&p.id()))
            .filter_map(|p| match check_deadline(p, now, overrides) {
                DeadlineStatus::Miss { elapsed, budget } => Some((p.id(), elapsed, budget)),
                DeadlineStatus::Pass => None,
            })
            .collect();
        for (id, elapsed, budget) in misses {
            self.parts[pi].missed.insert(id);
            let detail = format!("elapsed={elapsed} budget={budget}");
            self.event("DEADLINE_MISS", pi, Some(id), Some(idx), detail.clone());
            let ctx = Ctx {
                step: idx,
                part: pi,
                proc: id,
                now,
            };
            self.record(ctx, "DEADLINE_MISS", None, 0, None, detail);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        ctx: Ctx,
        kind: &str,
        addr: Option<GuestAddr>,
        size: u64,
        access: Option<AccessKind>,
        detail: String,
    ) {
        let own = self.scenario.partitions[ctx.part].id;
        let attributed = addr
            .filter(|a| a.partition == own)
            .and_then(|a| self.parts[ctx.part].attribute(a.offset));
        let (region, region_offset) = match attributed {
            Some((r, o)) => (Some(r), Some(o)),
            None => (None, None),
        };
        self.violations.push(ViolationRecord {
            kind: kind.to_string(),
            part: own,
            proc: ctx.proc,
            addr: addr.map(|a| a.offset),
            size,
            access,
            step: Some(ctx.step),
            region,
            region_offset,
            detail,
        });
    }

    fn record_asan(&mut self, ctx: Ctx, v: AsanViolation) {
        let detail = if v.addr.partition != self.scenario.partitions[ctx.part].id {
            format!("access to partition {} memory", v.addr.partition)
        } else {
            String::new()
        };
        self.record(
            ctx,
            v.kind.name(),
            Some(v.addr),
            v.requested_len,
            Some(v.access),
            detail,
        );
    }

    fn record_msan(&mut self, ctx: Ctx, v: MsanViolation) {
        let origin = v
            .origin
            .map_or_else(|| "unknown".to_string(), |o| o.to_string());
        let detail = format!("context={} origin={origin}", v.context.name());
        self.record(ctx, "UNINIT", Some(v.addr), v.requested_len, None, detail);
    }

    fn record_memory(&mut self, ctx: Ctx, v: MemoryViolation) {
        match v {
            MemoryViolation::Asan(v) => self.record_asan(ctx, v),
            MemoryViolation::Msan(v) => self.record_msan(ctx, v),
        }
    }

    fn record_ub(&mut self, ctx: Ctx, v: UbViolation, addr: Option<GuestAddr>) {
        let size = v.spec.map_or(0, |s| s.bytes() as u64);
        self.record(ctx, v.kind.name(), addr, size, None, v.describe());
    }

    fn record_port(&mut self, ctx: Ctx, e: PortError) {
        match e {
            PortError::Asan(v) => self.record_asan(ctx, v),
            PortError::Msan(v) => self.record_msan(ctx, v),
            PortError::MessageTooLong { port, len, max } => self.record(
                ctx,
                "MESSAGE_TOO_LONG",
                None,
                len,
                None,
                format!("port={port} max={max}"),
            ),
            PortError::QueueFull { port, capacity } => self.record(
                ctx,
                "QUEUE_FULL",
                None,
                0,
                None,
                format!("port={port} capacity={capacity}"),
            ),
            PortError::WrongEndpoint { port, partition } => self.record(
                ctx,
                "STEP_ERROR",
                None,
                0,
                None,
                format!("partition {partition} is not an endpoint of port {port}"),
            ),
        }
    }

    fn resolve(&self, ctx: Ctx, r: &MemRef) -> std::result::Result<GuestAddr, String> {
        let target = r.part.map_or(ctx.part, |id| self.partition_index(id));
        let id = self.scenario.partitions[target].id;
        if let Some(abs) = r.abs {
            return Ok(GuestAddr::new(id, abs));
        }
        let name = r.region.as_deref().expect("validated");
        let label = self.parts[target]
            .label(name)
            .ok_or_else(|| format!("region `{name}` is not allocated"))?;
        label
            .base
            .checked_add_signed(r.offset)
            .map(|offset| GuestAddr::new(id, offset))
            .ok_or_else(|| format!("`{name}`{:+} is below address zero", r.offset))
    }

    fn resolve_or_record(&mut self, ctx: Ctx, r: &MemRef) -> Option<GuestAddr> {
        match self.resolve(ctx, r) {
            Ok(addr) => Some(addr),
            Err(message) => {
                self.record(ctx, "STEP_ERROR", None, 0, None, message);
                None
            }
        }
    }

    /// Value of an operand; memory operands are use sites.
    fn operand(&mut self, ctx: Ctx, op: &Operand, spec: IntSpec, site: UseSite) -> Option<i128> {
        match op {
            Operand::Lit(lit) => Some(lit.value().expect("validated")),
            Operand::Mem(r) => {
                let addr = self.resolve_or_record(ctx, r)?;
                let len = spec.bytes() as u64;
                self.counts.asan += 1;
                let bytes = match self.parts[ctx.part].memory.checked_read(addr, len) {
                    Ok(bytes) => bytes,
                    Err(v) => {
                        self.record_asan(ctx, v);
                        return None;
                    }
                };
                self.counts.msan += 1;
                if let Err(v) = self.parts[ctx.part].memory.msan_check(addr, len, site) {
                    self.record_memory(ctx, v);
                    return None;
                }
                Some(spec.from_le_bytes(&bytes))
            }
        }
    }

    fn store(&mut self, ctx: Ctx, dst: &Option<MemRef>, spec: IntSpec, value: i128) {
        let Some(dst) = dst else { return };
        let Some(addr) = self.resolve_or_record(ctx, dst) else {
            return;
        };
        self.counts.asan += 1;
        let bytes = spec.to_le_bytes(value);
        if let Err(v) =
            self.parts[ctx.part]
                .memory
                .checked_write(addr, &bytes, Origin::Step(ctx.step as u32))
        {
            self.record_asan(ctx, v);
        }
    }

    fn ub_result(
        &mut self,
        ctx: Ctx,
        result: std::result::Result<i128, UbViolation>,
        dst: &Option<MemRef>,
        spec: IntSpec,
    ) {
        self.counts.ub += 1;
        match result {
            Ok(value) => self.store(ctx, dst, spec, value),
            Err(v) => self.record_ub(ctx, v, None),
        }
    }

    fn exec(&mut self, idx: usize, pi: usize, proc: ProcessId) {
        let ctx = Ctx {
            step: idx,
            part: pi,
            proc,
            now: self.time.virtual_now(),
        };
        self.counts = CheckCounts::default();
        let action = &self.scenario.workload[idx].action;
        if let Action::Idle { ticks } = action {
            self.time.idle(*ticks);
            return;
        }
        self.perform(ctx, action);
        self.time
            .advance(self.scenario.time.costs.step, self.counts);
    }

    fn perform(&mut self, ctx: Ctx, action: &Action) {
        let origin = Origin::Step(ctx.step as u32);
        match action {
            Action::Alloc {
                region,
                size,
                type_name,
            } => {
                let size = size
                    .or_else(|| {
                        type_name
                            .as_ref()
                            .and_then(|t| self.scenario.types.get(t).copied())
                    })
                    .expect("validated");
                let part = &mut self.parts[ctx.part];
                if let Err(e) =
                    allocate(part, &self.plan, region, size, type_name.as_deref(), origin)
                {
                    let kind = match e {
                        Error::Phase(_) => "PHASE_ERROR",
                        Error::OutOfMemory { .. } => "OUT_OF_MEMORY",
                        _ => "STEP_ERROR",
                    };
                    self.record(ctx, kind, None, size, None, e.to_string());
                }
            }
            Action::Write { at, data } => {
                let bytes = match data {
                    Data::Hex(h) => hex::decode(h).expect("validated"),
                    Data::Fill { byte, len } => vec![*byte; *len as usize],
                    Data::Int { value, spec } => {
                        let value = value.value().expect("validated");
                        if !spec.contains(value) {
                            let v = UbViolation {
                                kind: UbKind::Truncation,
                                operands: vec![value],
                                spec: Some(*spec),
                            };
                            self.record_ub(ctx, v, None);
                            return;
                        }
                        spec.to_le_bytes(value)
                    }
                };
                let Some(addr) = self.resolve_or_record(ctx, at) else {
                    return;
                };
                self.counts.asan += 1;
                if let Err(v) = self.parts[ctx.part]
                    .memory
                    .checked_write(addr, &bytes, origin)
                {
                    self.record_asan(ctx, v);
                }
            }
            Action::Read { at, len } => {
                let Some(addr) = self.resolve_or_record(ctx, at) else {
                    return;
                };
                self.counts.asan += 1;
                if let Err(v) = self.parts[ctx.part].memory.checked_read(addr, *len) {
                    self.record_asan(ctx, v);
                }
            }
            Action::Copy { from, to, len } => {
                let Some(src) = self.resolve_or_record(ctx, from) else {
                    return;
                };
                let Some(dst) = self.resolve_or_record(ctx, to) else {
                    return;
                };
                self.counts.asan += 2;
                if let Err(v) = self.parts[ctx.part].memory.checked_copy(src, dst, *len) {
                    self.record_asan(ctx, v);
                }
            }
            Action::BranchOn { at, len } => {
                let Some(addr) = self.resolve_or_record(ctx, at) else {
                    return;
                };
                self.counts.asan += 1;
                if let Err(v) = self.parts[ctx.part].memory.checked_read(addr, *len) {
                    self.record_asan(ctx, v);
                    return;
                }
                self.counts.msan += 1;
                if let Err(v) = self.parts[ctx.part]
                    .memory
                    .msan_check(addr, *len, UseSite::Branch)
                {
                    self.record_memory(ctx, v);
                }
            }
            Action::Arith {
                operator,
                a,
                b,
                spec,
                dst,
            } => {
                let Some(a) = self.operand(ctx, a, *spec, UseSite::Arith) else {
                    return;
                };
                let Some(b) = self.operand(ctx, b, *spec, UseSite::Arith) else {
                    return;
                };
                let config = self.parts[ctx.part].ub;
                self.ub_result(
                    ctx,
                    checked_arith(*operator, a, b, *spec, config),
                    dst,
                    *spec,
                );
            }
            Action::Div { a, b, spec, dst } => {
                let Some(a) = self.operand(ctx, a, *spec, UseSite::Arith) else {
                    return;
                };
                let Some(b) = self.operand(ctx, b, *spec, UseSite::Arith) else {
                    return;
                };
                self.ub_result(ctx, checked_div(a, b, *spec), dst, *spec);
            }
            Action::Shift { a, b, spec, dst } => {
                let Some(a) = self.operand(ctx, a, *spec, UseSite::Arith) else {
                    return;
                };
                let Some(b) = self.operand(ctx, b, *spec, UseSite::Arith) else {
                    return;
                };
                let config = self.parts[ctx.part].ub;
                self.ub_result(ctx, checked_shift(a, b, *spec, config), dst, *spec);
            }
            Action::Trunc { a, from, to, dst } => {
                let Some(a) = self.operand(ctx, a, *from, UseSite::Arith) else {
                    return;
                };
                self.ub_result(ctx, checked_trunc(a, *from, *to), dst, *to);
            }
            Action::FloatCast { value, to } => {
                self.ub_result(ctx, checked_float_to_int(*value, *to), &None, *to);
            }
            Action::AlignCheck { at, align } => {
                let Some(addr) = self.resolve_or_record(ctx, at) else {
                    return;
                };
                self.counts.ub += 1;
                if let Err(v) = check_align(addr, *align) {
                    self.record_ub(ctx, v, Some(addr));
                }
            }
            Action::NonnullCheck { at } => {
                let Some(addr) = self.resolve_or_record(ctx, at) else {
                    return;
                };
                self.counts.ub += 1;
                if let Err(v) = check_nonnull(addr) {
                    self.record_ub(ctx, v, Some(addr));
                }
            }
            Action::BoolCheck { v } => {
                let Some(v) = self.operand(ctx, v, IntSpec::U8, UseSite::Branch) else {
                    return;
                };
                self.counts.ub += 1;
                if let Err(v) = check_bool(v) {
                    self.record_ub(ctx, v, None);
                }
            }
            Action::EnumCheck { v, name, allowed } => {
                let Some(v) = self.operand(ctx, v, IntSpec::I32, UseSite::Branch) else {
                    return;
                };
                let spec = EnumSpec::new(name.clone(), allowed.iter().map(|&a| i128::from(a)))
                    .expect("validated");
                self.counts.ub += 1;
                if let Err(v) = check_enum(v, &spec) {
                    self.record_ub(ctx, v, None);
                }
            }
            Action::Syscall {
                syscall,
                bind,
                succeed,
            } => self.syscall(ctx, syscall, bind, *succeed),
            Action::Send { port, from, len } | Action::SamplingWrite { port, from, len } => {
                let Some(addr) = self.resolve_or_record(ctx, from) else {
                    return;
                };
                self.counts.asan += 1;
                self.counts.msan += 1;
                let memory = &self.parts[ctx.part].memory;
                let result = match self.ports.get_mut(port).expect("validated") {
                    Port::Queueing(q) => q.send_queueing(memory, addr, *len, ctx.now),
                    Port::Sampling(s) => s.write_sampling(memory, addr, *len, ctx.now),
                };
                match result {
                    Ok(()) => self.event(
                        "SEND",
                        ctx.part,
                        Some(ctx.proc),
                        Some(ctx.step),
                        format!("port={port} len={len}"),
                    ),
                    Err(e) => self.record_port(ctx, e),
                }
            }
            Action::Receive { port, to } | Action::SamplingRead { port, to } => {
                let Some(addr) = self.resolve_or_record(ctx, to) else {
                    return;
                };
                self.counts.asan += 1;
                let memory = &mut self.parts[ctx.part].memory;
                let (kind, result) = match self.ports.get_mut(port).expect("validated") {
                    Port::Queueing(q) => (
                        "RECEIVE",
                        q.receive_queueing(memory, addr).map(|m| {
                            m.map(|m| {
                                format!("data={} sent={}", hex::encode(&m.bytes), m.send_time)
                            })
                        }),
                    ),
                    Port::Sampling(s) => (
                        "SAMPLING_READ",
                        s.read_sampling(memory, addr, ctx.now).map(|m| {
                            m.map(|(bytes, validity)| {
                                let validity = match validity {
                                    Validity::Valid => "VALID",
                                    Validity::Stale => "STALE",
                                };
                                format!("data={} validity={validity}", hex::encode(bytes))
                            })
                        }),
                    ),
                };
                match result {
                    Ok(Some(detail)) => self.event(
                        kind,
                        ctx.part,
                        Some(ctx.proc),
                        Some(ctx.step),
                        format!("port={port} {detail}"),
                    ),
                    Ok(None) => self.event(
                        "EMPTY",
                        ctx.part,
                        Some(ctx.proc),
                        Some(ctx.step),
                        format!("port={port}"),
                    ),
                    Err(e) => self.record_port(ctx, e),
                }
            }
            Action::ResetPartition => {
                let part = &mut self.parts[ctx.part];
                part.memory.reset();
                if part.started {
                    part.memory.start();
                }
                self.event(
                    "RESET",
                    ctx.part,
                    Some(ctx.proc),
                    Some(ctx.step),
                    String::new(),
                );
            }
            Action::GetMyId => {
                let caller = if ctx.proc == MAIN_PROCESS_ID {
                    Caller::Main
                } else {
                    Caller::Process(ctx.proc)
                };
                match get_my_id(caller, self.parts[ctx.part].legacy) {
                    Ok(id) => self.event(
                        "GET_MY_ID",
                        ctx.part,
                        Some(ctx.proc),
                        Some(ctx.step),
                        format!("id={id}"),
                    ),
                    Err(_) => {
                        self.event(
                            "GET_MY_ID",
                            ctx.part,
                            Some(ctx.proc),
                            Some(ctx.step),
                            "INVALID_MODE".into(),
                        );
                        self.record(
                            ctx,
                            "CONTRACT",
                            None,
                            0,
                            None,
                            "GET_MY_ID returned INVALID_MODE for the main process instead of MAIN_PROCESS_ID".into(),
                        );
                    }
                }
            }
            Action::Idle { .. } => unreachable!("handled by exec"),
        }
    }

    fn syscall(
        &mut self,
        ctx: Ctx,
        name: &str,
        bind: &BTreeMap<String, super::scenario::BindSpec>,
        succeed: bool,
    ) {
        let spec = self
            .plan
            .syscalls
            .iter()
            .find(|s| s.syscall_name == name || s.user_name.as_deref() == Some(name))
            .expect("validated")
            .clone();
        let mut bindings = BTreeMap::new();
        for (param, b) in bind {
            let mut binding = ParamBinding {
                size: b.size,
                deref_size: b.deref_size,
                ..ParamBinding::default()
            };
            for (slot, r) in [
                (&mut binding.addr_of, &b.addr_of),
                (&mut binding.value, &b.value),
                (&mut binding.deref, &b.deref),
            ] {
                if let Some(r) = r {
                    match self.resolve(ctx, r) {
                        Ok(addr) => *slot = Some(addr),
                        Err(message) => {
                            self.record(ctx, "STEP_ERROR", None, 0, None, message);
                            return;
                        }
                    }
                }
            }
            bindings.insert(param.clone(), binding);
        }
        let resolved = match resolve_sizes(&spec, &self.scenario.types, &bindings) {
            Ok(r) => r,
            Err(e) => {
                self.record(
                    ctx,
                    "STEP_ERROR",
                    None,
                    0,
                    None,
                    format!("{}: {e}", spec.syscall_name),
                );
                return;
            }
        };
        self.counts.msan += resolved.pre.len() as u64;
        let memory = &mut self.parts[ctx.part].memory;
        let outcome = match enforce_pre(&resolved, memory) {
            Err(v) => {
                self.record_memory(ctx, v);
                "REJECTED"
            }
            Ok(()) => match enforce_post(&resolved, memory, succeed) {
                Err(v) => {
                    self.record_memory(ctx, v);
                    "FAILED"
                }
                Ok(()) if succeed => "OK",
                Ok(()) => "FAILED",
            },
        };
        self.event(
            "SYSCALL",
            ctx.part,
            Some(ctx.proc),
            Some(ctx.step),
            format!("name={} result={outcome}", spec.syscall_name),
        );
    }
}

fn allocate(
    part: &mut Part,
    plan: &Plan,
    label: &str,
    size: u64,
    type_name: Option<&str>,
    origin: Origin,
) -> Result<()> {
    let region = part.memory.alloc_region(size, label, origin)?;
    if let Some(t) = type_name {
        if plan.padding.layout(t).is_some() {
            part.memory
                .init_shadow_mut()
                .unpoison_padding(&plan.padding, t, region.base.offset)?;
        }
    }
    part.labels.push(Label {
        name: label.to_string(),
        base: region.base.offset,
        len: region.payload_len,
        span: (region.span_start(), region.span_end()),
    });
    Ok(())
}
