// SPDX-License-Identifier: Apache-2.0

//! Naive reference models shared by the integration tests and the
//! acceptance runner. None of them reuse library logic.

#![allow(dead_code)]

use partsan::asan_shadow::{AsanKind, Granularity, PoisonKind, ShadowMap};
use partsan::guest_memory::{AccessKind, GuestAddr, PartitionId};
use partsan::msan_shadow::{InitShadow, Origin, UseSite};
use partsan::ub_checks::{
    checked_arith, checked_div, checked_shift, checked_trunc, ArithOp, IntSpec, UbConfig, UbKind,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PART: PartitionId = PartitionId(1);

pub const GRANULARITIES: [u64; 5] = [1, 2, 4, 8, 16];

pub const SPECS: [IntSpec; 8] = [
    IntSpec::I8,
    IntSpec::I16,
    IntSpec::I32,
    IntSpec::I64,
    IntSpec::U8,
    IntSpec::U16,
    IntSpec::U32,
    IntSpec::U64,
];

// ---------------------------------------------------------------------------
// Address validity

/// One entry per byte: `None` is addressable.
struct ByteMap {
    bytes: Vec<Option<PoisonKind>>,
    g: usize,
}

impl ByteMap {
    /// Every block must have its addressable bytes as a prefix.
    fn representable(bytes: &[Option<PoisonKind>], g: usize) -> bool {
        bytes.chunks(g).all(|block| {
            let valid = block.iter().take_while(|b| b.is_none()).count();
            block[valid..].iter().all(Option::is_some)
        })
    }

    /// First unaddressable byte in `[offset, offset + max(len, 1))`, with
    /// accesses past the end counting as wild.
    fn check(&self, offset: u64, len: u64) -> Option<(bool, u64)> {
        let end = offset.checked_add(len.max(1));
        match end {
            Some(end) if end <= self.bytes.len() as u64 => (offset..end)
                .find(|&o| self.bytes[o as usize].is_some())
                .map(|o| (false, o)),
            _ => Some((true, offset.max(self.bytes.len() as u64))),
        }
    }

    /// Kind every byte of the block shares, if the block is uniform.
    fn uniform_kind(&self, offset: u64) -> Option<PoisonKind> {
        let start = offset as usize / self.g * self.g;
        let block = &self.bytes[start..start + self.g];
        let first = block[0]?;
        block.iter().all(|b| *b == Some(first)).then_some(first)
    }
}

#[derive(Debug, Default)]
pub struct OracleTally {
    pub ops: usize,
    pub checks: usize,
    pub divergences: Vec<String>,
}

/// Random poison/unpoison/check sequence against a per-byte map.
pub fn shadow_oracle_run(granularity: u64, size: u64, ops: usize, seed: u64) -> OracleTally {
    let g = Granularity::new(granularity).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ granularity);
    let mut map = ShadowMap::new(PART, size, g).unwrap();
    let mut naive = ByteMap {
        bytes: vec![Some(PoisonKind::ManualBlacklist); size as usize],
        g: granularity as usize,
    };
    let mut tally = OracleTally::default();
    let diverge = |tally: &mut OracleTally, msg: String| {
        if tally.divergences.len() < 20 {
            tally.divergences.push(msg);
        }
    };

    for op in 0..ops {
        tally.ops += 1;
        match rng.gen_range(0..10) {
            0..=2 => {
                let offset = rng.gen_range(0..size);
                let len = rng.gen_range(0..=(size - offset).min(96));
                let kind = *PoisonKind::ALL.choose(&mut rng).unwrap();
                let mut next = naive.bytes.clone();
                // A block takes the new reason when the op covers all of it or
                // kills one of its addressable bytes; otherwise its reason stays.
                let g = naive.g;
                let (lo_all, hi_all) = (offset as usize, (offset + len) as usize);
                let mut block = lo_all / g * g;
                while block < hi_all {
                    let (lo, hi) = (lo_all.max(block), hi_all.min(block + g));
                    let valid = block
                        + naive.bytes[block..block + g]
                            .iter()
                            .take_while(|b| b.is_none())
                            .count();
                    if (lo == block && hi == block + g) || lo < valid {
                        for b in &mut next[lo..hi] {
                            *b = Some(kind);
                        }
                        if lo == block {
                            for b in next[block..block + g].iter_mut().filter(|b| b.is_some()) {
                                *b = Some(kind);
                            }
                        }
                    }
                    block += g;
                }
                let expect_ok = ByteMap::representable(&next, naive.g);
                let result = map.poison(offset, len, kind);
                if result.is_ok() != expect_ok {
                    diverge(
                        &mut tally,
                        format!(
                            "op {op}: poison({offset}, {len}) -> {result:?}, oracle ok={expect_ok}"
                        ),
                    );
                }
                if result.is_ok() {
                    naive.bytes = next;
                }
            }
            3..=4 => {
                let offset = rng.gen_range(0..size / granularity) * granularity;
                let len = rng.gen_range(0..=(size - offset).min(96));
                if map.unpoison(offset, len).is_err() {
                    diverge(
                        &mut tally,
                        format!("op {op}: unpoison({offset}, {len}) rejected"),
                    );
                } else {
                    naive.bytes[offset as usize..(offset + len) as usize].fill(None);
                }
            }
            _ => {
                tally.checks += 1;
                let offset = rng.gen_range(0..size + 8);
                let len = rng.gen_range(0..48);
                let access = if rng.gen_bool(0.5) {
                    AccessKind::Read
                } else {
                    AccessKind::Write
                };
                let got = map.check_access(GuestAddr::new(PART, offset), len, access);
                let want = naive.check(offset, len);
                let agree = match (&got, want) {
                    (Ok(()), None) => true,
                    (Err(v), Some((wild, at))) => {
                        v.addr.offset == at
                            && (v.kind == AsanKind::WildAddress) == wild
                            && match (v.kind, naive.uniform_kind(at.min(size - 1))) {
                                (AsanKind::Poisoned(k), Some(expected)) if !wild => k == expected,
                                _ => true,
                            }
                    }
                    _ => false,
                };
                if !agree {
                    diverge(
                        &mut tally,
                        format!("op {op}: check({offset}, {len}) -> {got:?}, oracle {want:?}"),
                    );
                }
            }
        }
        if op % 97 == 0 {
            for o in 0..size {
                if map.is_addressable(o) != naive.bytes[o as usize].is_none() {
                    diverge(
                        &mut tally,
                        format!("op {op}: byte {o} addressability differs"),
                    );
                    break;
                }
            }
        }
    }
    tally
}

// ---------------------------------------------------------------------------
// Initialization

#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
struct InitByte {
    origin: Option<Origin>,
    alloc: Option<Origin>,
    /// Allocation attribution arrived through a copy.
    copied: bool,
}

#[derive(Debug, Default)]
pub struct InitTally {
    pub ops: usize,
    pub copy_hop_reports: usize,
    pub divergences: Vec<String>,
}

/// Random write/alloc/unpoison/copy/check sequence against a per-byte model,
/// compared on every byte after every operation.
pub fn init_oracle_run(size: u64, ops: usize, seed: u64) -> InitTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shadow = InitShadow::new(PART, size);
    let mut naive = vec![InitByte::default(); size as usize];
    let mut tally = InitTally::default();
    let push = |tally: &mut InitTally, msg: String| {
        if tally.divergences.len() < 20 {
            tally.divergences.push(msg);
        }
    };

    for op in 0..ops {
        tally.ops += 1;
        let step = Origin::Step(op as u32);
        let offset = rng.gen_range(0..size);
        let len = rng.gen_range(0..=(size - offset).min(64));
        let range = offset as usize..(offset + len) as usize;
        match rng.gen_range(0..10) {
            0..=1 => {
                shadow.mark_initialized(offset, len, step).unwrap();
                for b in &mut naive[range] {
                    b.origin = Some(step);
                }
            }
            2..=3 => {
                shadow.mark_uninitialized(offset, len, Some(step)).unwrap();
                for b in &mut naive[range] {
                    *b = InitByte {
                        origin: None,
                        alloc: Some(step),
                        copied: false,
                    };
                }
            }
            4 => {
                shadow.msan_unpoison(offset, len).unwrap();
                for b in &mut naive[range] {
                    b.origin.get_or_insert(Origin::Annotation);
                }
            }
            5..=6 => {
                let dst = rng.gen_range(0..=size - len);
                shadow.copy_propagate(offset, dst, len).unwrap();
                let src: Vec<InitByte> = naive[range].to_vec();
                for (i, b) in src.into_iter().enumerate() {
                    naive[dst as usize + i] = InitByte { copied: true, ..b };
                }
            }
            _ => {
                let got = shadow.msan_check(offset, len, UseSite::Branch);
                let first_bad = naive[range].iter().position(|b| b.origin.is_none());
                match (&got, first_bad) {
                    (Ok(()), None) => {}
                    (Err(v), Some(i)) => {
                        let want = naive[offset as usize + i];
                        if v.addr.offset != offset + i as u64 || v.origin != want.alloc {
                            push(&mut tally, format!("op {op}: check({offset}, {len}) -> {v:?}, oracle {want:?} at +{i}"));
                        } else if want.copied && want.alloc.is_some() {
                            tally.copy_hop_reports += 1;
                        }
                    }
                    _ => push(&mut tally, format!("op {op}: check({offset}, {len}) -> {got:?}, oracle bad at {first_bad:?}")),
                }
            }
        }
        for (o, b) in naive.iter().enumerate() {
            let o = o as u64;
            if shadow.origin(o) != b.origin || shadow.alloc_origin(o) != b.alloc {
                push(&mut tally, format!("op {op}: byte {o} differs"));
                break;
            }
        }
    }
    tally
}

// ---------------------------------------------------------------------------
// Integer checks

/// What the wide reference says a check should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Value(i128),
    Fault(UbKind),
}

fn fits(spec: IntSpec, v: i128) -> bool {
    spec.contains(v)
}

fn wrap_unsigned(spec: IntSpec, v: u128) -> i128 {
    let bits = spec.bits();
    let mask = if bits == 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    };
    (v & mask) as i128
}

pub fn reference_arith(op: ArithOp, a: i128, b: i128, spec: IntSpec) -> Expected {
    if !fits(spec, a) || !fits(spec, b) {
        return Expected::Fault(UbKind::Truncation);
    }
    if !spec.signed() {
        let (x, y) = (a as u128, b as u128);
        let v = match op {
            ArithOp::Add => x.wrapping_add(y),
            ArithOp::Sub => x.wrapping_sub(y),
            ArithOp::Mul => x.wrapping_mul(y),
        };
        return Expected::Value(wrap_unsigned(spec, v));
    }
    let (exact, kind) = match op {
        ArithOp::Add => (a + b, UbKind::AddOverflow),
        ArithOp::Sub => (a - b, UbKind::SubOverflow),
        ArithOp::Mul => (a * b, UbKind::MulOverflow),
    };
    if fits(spec, exact) {
        Expected::Value(exact)
    } else {
        Expected::Fault(kind)
    }
}

pub fn reference_div(a: i128, b: i128, spec: IntSpec) -> Expected {
    if !fits(spec, a) || !fits(spec, b) {
        return Expected::Fault(UbKind::Truncation);
    }
    if b == 0 {
        return Expected::Fault(UbKind::DivByZero);
    }
    let q = a / b;
    if fits(spec, q) {
        Expected::Value(q)
    } else {
        Expected::Fault(UbKind::DivOverflow)
    }
}

pub fn reference_shift(a: i128, s: i128, spec: IntSpec) -> Expected {
    if !fits(spec, a) {
        return Expected::Fault(UbKind::Truncation);
    }
    if s < 0 || s >= i128::from(spec.bits()) {
        return Expected::Fault(UbKind::ShiftRange);
    }
    let exact = a * (1i128 << s);
    if !spec.signed() {
        return Expected::Value(wrap_unsigned(spec, exact as u128));
    }
    if fits(spec, exact) {
        Expected::Value(exact)
    } else {
        Expected::Fault(UbKind::ShiftRange)
    }
}

pub fn reference_trunc(a: i128, from: IntSpec, to: IntSpec) -> Expected {
    if fits(from, a) && fits(to, a) {
        Expected::Value(a)
    } else {
        Expected::Fault(UbKind::Truncation)
    }
}

/// Operand biased towards the edges of `spec`, occasionally just outside.
pub fn sample_operand(rng: &mut impl Rng, spec: IntSpec) -> i128 {
    let (lo, hi) = (spec.min(), spec.max());
    match rng.gen_range(0..10) {
        0 => *[lo, hi, 0, 1, -1, lo + 1, hi - 1].choose(rng).unwrap(),
        1 => *[lo - 1, hi + 1].choose(rng).unwrap(),
        2 => rng.gen_range(-300..=300),
        3 => {
            let bits = rng.gen_range(0..spec.bits());
            let mag = 1i128 << bits;
            if spec.signed() && rng.gen_bool(0.5) {
                -mag
            } else {
                mag.min(hi)
            }
        }
        _ => rng.gen_range(lo..=hi),
    }
}

fn from_result(r: Result<i128, partsan::ub_checks::UbViolation>) -> Expected {
    match r {
        Ok(v) => Expected::Value(v),
        Err(v) => Expected::Fault(v.kind),
    }
}

#[derive(Debug, Default)]
pub struct UbTally {
    pub samples: usize,
    pub disagreements: Vec<String>,
}

/// `samples` random operand pairs for each operation on `spec`.
pub fn ub_oracle_run(spec: IntSpec, samples: usize, seed: u64) -> UbTally {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ u64::from(spec.bits()) ^ u64::from(spec.signed()) << 8);
    let mut tally = UbTally::default();
    let cfg = UbConfig::default();
    let record = |tally: &mut UbTally, what: String, got: Expected, want: Expected| {
        tally.samples += 1;
        if got != want && tally.disagreements.len() < 20 {
            tally
                .disagreements
                .push(format!("{what}: got {got:?}, reference {want:?}"));
        }
    };
    for op in [ArithOp::Add, ArithOp::Sub, ArithOp::Mul] {
        for _ in 0..samples {
            let (a, b) = (
                sample_operand(&mut rng, spec),
                sample_operand(&mut rng, spec),
            );
            let got = from_result(checked_arith(op, a, b, spec, cfg));
            record(
                &mut tally,
                format!("{op:?}({a}, {b}) {spec}"),
                got,
                reference_arith(op, a, b, spec),
            );
        }
    }
    for _ in 0..samples {
        let a = sample_operand(&mut rng, spec);
        let b = if rng.gen_bool(0.05) {
            0
        } else {
            sample_operand(&mut rng, spec)
        };
        let got = from_result(checked_div(a, b, spec));
        record(
            &mut tally,
            format!("div({a}, {b}) {spec}"),
            got,
            reference_div(a, b, spec),
        );
    }
    for _ in 0..samples {
        let a = sample_operand(&mut rng, spec);
        let s = rng.gen_range(-2..=i128::from(spec.bits()) + 2);
        let got = from_result(checked_shift(a, s, spec, cfg));
        record(
            &mut tally,
            format!("shl({a}, {s}) {spec}"),
            got,
            reference_shift(a, s, spec),
        );
    }
    for _ in 0..samples {
        let from = *SPECS.choose(&mut rng).unwrap();
        let a = sample_operand(&mut rng, from);
        let got = from_result(checked_trunc(a, from, spec));
        record(
            &mut tally,
            format!("trunc({a}, {from} -> {spec})"),
            got,
            reference_trunc(a, from, spec),
        );
    }
    tally
}

// ---------------------------------------------------------------------------
// Slowdown compensation

use partsan::harness::{run_scenario, Scenario};
use serde_json::{json, Value};
use std::collections::BTreeSet;

/// A single-partition, single-window workload whose every step costs at
/// most `f` times its uninstrumented cost. Returns the scenario JSON with
/// no time section, the base step cost and the matching factor `(b + 2)/b`.
pub fn compensation_workload(seed: u64) -> (Value, u64, (u64, u64)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rng.gen_range(1..=4u64);
    let frame_len = rng.gen_range(50..=1000u64);
    let procs = rng.gen_range(1..=8u32);
    let mut processes = Vec::new();
    let mut steps = vec![
        json!({"op": "WRITE", "at": {"region": "buf", "offset": 0}, "data": {"fill": {"byte": 7, "len": 64}}}),
    ];
    let mut order: Vec<(i32, u32)> = Vec::new();
    for id in 1..=procs {
        let priority = rng.gen_range(0..4);
        processes
            .push(json!({"id": id, "time_capacity": rng.gen_range(1..=600), "priority": priority}));
        order.push((-priority, id));
    }
    order.sort();
    for (_, id) in order {
        for _ in 0..rng.gen_range(1..=25) {
            let offset = rng.gen_range(0..32);
            let len = rng.gen_range(1..=32);
            let action = match rng.gen_range(0..7) {
                0 => {
                    json!({"op": "WRITE", "at": {"region": "buf", "offset": offset}, "data": {"hex": "0102"}})
                }
                1 => json!({"op": "READ", "at": {"region": "buf", "offset": offset}, "len": len}),
                2 => {
                    json!({"op": "COPY", "from": {"region": "buf", "offset": offset}, "to": {"region": "buf", "offset": 32}, "len": len})
                }
                3 => {
                    json!({"op": "BRANCH_ON", "at": {"region": "buf", "offset": offset}, "len": len})
                }
                4 => {
                    json!({"op": "ARITH", "operator": "ADD", "a": {"lit": offset}, "b": {"lit": len}, "spec": "i32"})
                }
                5 => json!({"op": "GET_MY_ID"}),
                _ => json!({"op": "IDLE", "ticks": rng.gen_range(1..=10)}),
            };
            let mut step = action;
            step["proc"] = json!(id);
            steps.push(step);
        }
    }
    let scenario = json!({
        "name": format!("compensation_{seed}"),
        "partitions": [{"id": 1, "memory_size": 256, "regions": [{"label": "buf", "size": 64}], "processes": processes}],
        "frame": {"frame_len": frame_len, "windows": [{"partition": 1, "start": 0, "len": frame_len}]},
        "workload": steps
    });
    (scenario, base, (base + 2, base))
}

fn with_time(mut scenario: Value, factor: (u64, u64), costs: Value) -> Scenario {
    let frame = scenario.as_object_mut().unwrap().remove("frame").unwrap();
    scenario["time"] = json!({
        "slowdown_factor": format!("{}/{}", factor.0, factor.1),
        "costs": costs,
        "major_frame": frame
    });
    Scenario::from_json(&scenario.to_string()).unwrap()
}

fn missed(scenario: &Scenario) -> (BTreeSet<u32>, usize) {
    let report = run_scenario(scenario, 0).unwrap();
    let misses: BTreeSet<u32> = report
        .violations
        .iter()
        .filter(|v| v.kind == "DEADLINE_MISS")
        .map(|v| v.proc.0)
        .collect();
    (
        misses,
        report.violations.len() - report.count("DEADLINE_MISS"),
    )
}

#[derive(Debug, Default)]
pub struct CompensationTally {
    pub workloads: usize,
    pub deadlines: usize,
    /// Deadlines met uninstrumented but missed instrumented at `f`.
    pub counterexamples: Vec<String>,
    /// Deadlines that only the slowdown factor saves.
    pub rescued: usize,
    /// Findings other than deadline misses, which would mean a dirty workload.
    pub stray_findings: usize,
}

pub fn compensation_run(workloads: u64, seed: u64) -> CompensationTally {
    let mut tally = CompensationTally::default();
    for i in 0..workloads {
        let (value, base, factor) = compensation_workload(seed.wrapping_add(i));
        let procs = value["partitions"][0]["processes"]
            .as_array()
            .unwrap()
            .len();
        let instrumented_costs = json!({"step": base, "asan": 1, "msan": 1, "ub": 1});
        let plain = with_time(
            value.clone(),
            (1, 1),
            json!({"step": base, "asan": 0, "msan": 0, "ub": 0}),
        );
        let compensated = with_time(value.clone(), factor, instrumented_costs.clone());
        let uncompensated = with_time(value, (1, 1), instrumented_costs);
        let (plain_miss, s1) = missed(&plain);
        let (comp_miss, s2) = missed(&compensated);
        let (uncomp_miss, s3) = missed(&uncompensated);
        tally.workloads += 1;
        tally.deadlines += procs;
        tally.stray_findings += s1 + s2 + s3;
        for id in 1..=procs as u32 {
            if !plain_miss.contains(&id) && comp_miss.contains(&id) {
                tally
                    .counterexamples
                    .push(format!("workload {i} process {id}"));
            }
            if !comp_miss.contains(&id) && uncomp_miss.contains(&id) {
                tally.rescued += 1;
            }
        }
    }
    tally
}

// ---------------------------------------------------------------------------
// Scenario variants

/// A built-in with top-level fields replaced.
pub fn variant(name: &str, replace: Value) -> Scenario {
    let mut value: Value =
        serde_json::from_str(&partsan::harness::builtin(name, 0).unwrap().to_json()).unwrap();
    for (k, v) in replace.as_object().unwrap() {
        value[k] = v.clone();
    }
    Scenario::from_json(&value.to_string()).unwrap()
}

/// Listing 1 with its out-of-bounds stores replaced by a store to every
/// payload byte.
pub fn listing1_in_bounds_sweep() -> Scenario {
    let original = partsan::harness::builtin("listing1_overflow", 0).unwrap();
    let setup: Vec<Value> = original
        .workload
        .iter()
        .filter(|s| !matches!(s.action, partsan::harness::scenario::Action::Write { ref at, .. } if at.region.as_deref() == Some("buffer")))
        .map(|s| serde_json::to_value(s).unwrap())
        .collect();
    let sweep = (0..16).map(
        |i| json!({"op": "WRITE", "at": {"region": "buffer", "offset": i}, "data": {"hex": "01"}}),
    );
    let workload: Vec<Value> = setup.into_iter().chain(sweep).collect();
    variant(
        "listing1_overflow",
        json!({"name": "listing1_in_bounds_sweep", "workload": workload, "expect": []}),
    )
}

/// The padding scenario with its padding registry emptied.
pub fn padding_without_registry() -> Scenario {
    variant(
        "padding_false_positive",
        json!({
            "name": "padding_false_positive_empty_registry",
            "padding": {},
            "types": {"pkt_t": 8},
            "expect": [
                {"kind": "UNINIT", "part": 1, "step": 2, "region": "pkt", "offset": 5},
                {"kind": "UNINIT", "part": 1, "step": 3, "region": "raw_pkt", "offset": 5}
            ]
        }),
    )
}

// ---------------------------------------------------------------------------
// Thread status syscall

use partsan::guest_memory::{MemoryConfig, PartitionMemory};
use partsan::syscall_annotations::{
    CheckDirective, CheckKind, Param, ParamBinding, Phase, SizeExpr, SyscallSpec, Target,
};
use std::collections::BTreeMap;

pub fn directive(phase: Phase, kind: CheckKind, target: Target, size: SizeExpr) -> CheckDirective {
    CheckDirective {
        phase,
        kind,
        target,
        size,
    }
}

pub fn param(type_name: &str, name: &str) -> Param {
    Param {
        type_name: type_name.into(),
        name: name.into(),
    }
}

pub fn thread_status_spec() -> SyscallSpec {
    let unpoison = |target: &str, size| {
        directive(
            Phase::Post,
            CheckKind::MsanUnpoison,
            Target::Param(target.into()),
            size,
        )
    };
    SyscallSpec {
        user_name: Some("jet_thread_status".into()),
        return_type: "jet_syscall_thread_status_t".into(),
        syscall_name: "jet_thread_get_status".into(),
        params: vec![
            param("jet_thread_id_t", "thread_id"),
            param("max_name_t", "name"),
            param("void**", "entry"),
            param("jet_thread_status_t*", "status"),
        ],
        pre_checks: vec![directive(
            Phase::Pre,
            CheckKind::MsanCheck,
            Target::AddrOf("thread_id".into()),
            SizeExpr::SizeofParam("thread_id".into()),
        )],
        post_checks: vec![
            unpoison("name", SizeExpr::SizeofType("max_name_t".into())),
            unpoison("entry", SizeExpr::SizeofDeref("entry".into())),
            unpoison("status", SizeExpr::SizeofDeref("status".into())),
        ],
    }
}

pub fn thread_status_sizes() -> BTreeMap<String, u64> {
    [
        ("jet_thread_id_t", 4),
        ("max_name_t", 32),
        ("void*", 8),
        ("void**", 8),
        ("jet_thread_status_t", 16),
        ("jet_thread_status_t*", 8),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Guest memory laid out for one `jet_thread_get_status` call.
pub fn call_site() -> (PartitionMemory, BTreeMap<String, ParamBinding>) {
    let mut mem = PartitionMemory::create(PartitionId(1), 512, MemoryConfig::default()).unwrap();
    let mut bind = BTreeMap::new();
    let region = |mem: &mut PartitionMemory, label: &str, size| {
        mem.alloc_region(size, label, Origin::Declared)
            .unwrap()
            .base
    };
    let thread_id = region(&mut mem, "thread_id", 4);
    let name = region(&mut mem, "name", 32);
    let entry = region(&mut mem, "entry", 8);
    let status = region(&mut mem, "status", 16);
    mem.start();
    bind.insert(
        "thread_id".into(),
        ParamBinding {
            addr_of: Some(thread_id),
            ..Default::default()
        },
    );
    bind.insert(
        "name".into(),
        ParamBinding {
            value: Some(name),
            ..Default::default()
        },
    );
    bind.insert(
        "entry".into(),
        ParamBinding {
            value: Some(entry),
            ..Default::default()
        },
    );
    bind.insert(
        "status".into(),
        ParamBinding {
            value: Some(status),
            ..Default::default()
        },
    );
    (mem, bind)
}
