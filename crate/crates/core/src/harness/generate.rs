// SPDX-License-Identifier: Apache-2.0

//! Seeded generator of clean workloads.
//!
//! Workloads stay inside their regions, define bytes before using them and
//! only do representable arithmetic, so a correct runtime reports nothing.
//! The generator keeps a byte-level model of memory to guarantee this.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asan_shadow::Granularity;
use crate::guest_memory::PartitionId;
use crate::msan_shadow::ReservedInitConfig;
use crate::sched::{ProcessConfig, ProcessId, ProcessState};
use crate::ub_checks::{Alignment, ArithOp, IntSpec};

use super::scenario::{
    Action, Data, IntLit, MemRef, Operand, PartitionSpec, PortKind, PortSpec, RegionSpec, Scenario,
    Step, TimeSpec,
};

pub const RANDOM_CLEAN: &str = "random_clean";

const PORT: &str = "loop";
const MAX_MESSAGE: u64 = 48;

struct ModelRegion {
    label: String,
    bytes: Vec<u8>,
    init: Vec<bool>,
}

struct Model {
    rng: ChaCha8Rng,
    regions: Vec<ModelRegion>,
    queue: VecDeque<Vec<u8>>,
    steps: Vec<Step>,
    proc: Option<ProcessId>,
    /// Operand slots of the step being generated.
    operands: Vec<(usize, u64, u64)>,
}

impl Model {
    fn push(&mut self, action: Action) {
        if !matches!(action, Action::Write { .. }) {
            self.operands.clear();
        }
        self.steps.push(Step {
            part: None,
            proc: self.proc,
            action,
        });
    }

    fn pick_region(&mut self) -> usize {
        self.rng.gen_range(0..self.regions.len())
    }

    /// A random in-bounds range of a region, `len` capped at `max`.
    fn pick_range(&mut self, r: usize, max: u64) -> (u64, u64) {
        let size = self.regions[r].bytes.len() as u64;
        let len = self.rng.gen_range(1..=size.min(max));
        let offset = self.rng.gen_range(0..=size - len);
        (offset, len)
    }

    fn at(&self, r: usize, offset: u64) -> MemRef {
        MemRef::region(&self.regions[r].label, offset as i64)
    }

    fn is_init(&self, r: usize, offset: u64, len: u64) -> bool {
        self.regions[r].init[offset as usize..(offset + len) as usize]
            .iter()
            .all(|&b| b)
    }

    fn store(&mut self, r: usize, offset: u64, data: &[u8]) {
        let region = &mut self.regions[r];
        let range = offset as usize..offset as usize + data.len();
        region.bytes[range.clone()].copy_from_slice(data);
        region.init[range].fill(true);
    }

    fn write(&mut self, r: usize, offset: u64, len: u64) {
        let data: Vec<u8> = (0..len).map(|_| self.rng.gen()).collect();
        self.store(r, offset, &data);
        let at = self.at(r, offset);
        self.push(Action::Write {
            at,
            data: Data::Hex(hex::encode(&data)),
        });
    }

    /// A defined range, writing one first if needed.
    fn defined_range(&mut self, max: u64) -> (usize, u64, u64) {
        let r = self.pick_region();
        let (offset, len) = self.pick_range(r, max);
        if !self.is_init(r, offset, len) {
            self.write(r, offset, len);
        }
        (r, offset, len)
    }

    /// A region slot of `spec` width, if some region is wide enough.
    fn slot(&mut self, spec: IntSpec) -> Option<(usize, u64)> {
        let width = spec.bytes() as u64;
        let candidates: Vec<usize> = (0..self.regions.len())
            .filter(|&r| self.regions[r].bytes.len() as u64 >= width)
            .collect();
        for _ in 0..8 {
            let &r = candidates.choose(&mut self.rng)?;
            let offset = self
                .rng
                .gen_range(0..=self.regions[r].bytes.len() as u64 - width);
            let taken = self
                .operands
                .iter()
                .any(|&(or, oo, ow)| or == r && offset < oo + ow && oo < offset + width);
            if !taken {
                return Some((r, offset));
            }
        }
        None
    }

    /// An operand holding `value`: a literal, or a defined memory slot.
    fn operand(&mut self, spec: IntSpec, value: i128) -> Operand {
        if self.rng.gen_bool(0.5) {
            if let Some((r, offset)) = self.slot(spec) {
                let data = spec.to_le_bytes(value);
                self.operands.push((r, offset, data.len() as u64));
                self.store(r, offset, &data);
                let at = self.at(r, offset);
                self.push(Action::Write {
                    at: at.clone(),
                    data: Data::Int {
                        value: IntLit::from(value),
                        spec,
                    },
                });
                return Operand::Mem(at);
            }
        }
        Operand::Lit(IntLit::from(value))
    }

    fn dst(&mut self, spec: IntSpec, value: i128) -> Option<MemRef> {
        if !self.rng.gen_bool(0.5) {
            return None;
        }
        let (r, offset) = self.slot(spec)?;
        self.store(r, offset, &spec.to_le_bytes(value));
        Some(self.at(r, offset))
    }

    fn arith(&mut self) {
        let spec = *[IntSpec::I32, IntSpec::I64, IntSpec::U32, IntSpec::I16]
            .choose(&mut self.rng)
            .unwrap();
        let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul]
            .choose(&mut self.rng)
            .unwrap();
        let (lo, hi) = if spec.signed() { (-100, 100) } else { (0, 100) };
        let a: i128 = self.rng.gen_range(lo..=hi);
        let mut b: i128 = self.rng.gen_range(lo..=hi);
        if !spec.signed() && op == ArithOp::Sub && b > a {
            b = a;
        }
        let result = match op {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
        };
        let a = self.operand(spec, a);
        let b = self.operand(spec, b);
        let dst = self.dst(spec, result);
        self.push(Action::Arith {
            operator: op,
            a,
            b,
            spec,
            dst,
        });
    }

    fn div(&mut self) {
        let spec = *[IntSpec::I32, IntSpec::I64, IntSpec::U16]
            .choose(&mut self.rng)
            .unwrap();
        let a: i128 = if spec.signed() {
            self.rng.gen_range(-1000..=1000)
        } else {
            self.rng.gen_range(0..=1000)
        };
        let b: i128 = self.rng.gen_range(1..=50);
        let a_op = self.operand(spec, a);
        let b_op = self.operand(spec, b);
        let dst = self.dst(spec, a / b);
        self.push(Action::Div {
            a: a_op,
            b: b_op,
            spec,
            dst,
        });
    }

    fn shift(&mut self) {
        let spec = *[IntSpec::I32, IntSpec::I64, IntSpec::U32]
            .choose(&mut self.rng)
            .unwrap();
        let a: i128 = self.rng.gen_range(0..=100);
        let s: i128 = self.rng.gen_range(0..=i128::from(spec.bits() as u8 - 8));
        let a_op = self.operand(spec, a);
        let s_op = self.operand(spec, s);
        let dst = self.dst(spec, a << s);
        self.push(Action::Shift {
            a: a_op,
            b: s_op,
            spec,
            dst,
        });
    }

    fn step(&mut self) {
        match self.rng.gen_range(0..15) {
            0..=2 => {
                let r = self.pick_region();
                let (offset, len) = self.pick_range(r, 64);
                self.write(r, offset, len);
            }
            3 => {
                let r = self.pick_region();
                let (offset, len) = self.pick_range(r, 64);
                let at = self.at(r, offset);
                self.push(Action::Read { at, len });
            }
            4 => {
                let src = self.pick_region();
                let (src_off, len) = self.pick_range(src, 64);
                let dst_candidates: Vec<usize> = (0..self.regions.len())
                    .filter(|&r| self.regions[r].bytes.len() as u64 >= len)
                    .collect();
                let dst = *dst_candidates
                    .choose(&mut self.rng)
                    .expect("the source fits itself");
                let dst_off = self
                    .rng
                    .gen_range(0..=self.regions[dst].bytes.len() as u64 - len);
                let range = src_off as usize..(src_off + len) as usize;
                let bytes = self.regions[src].bytes[range.clone()].to_vec();
                let init = self.regions[src].init[range].to_vec();
                let target = dst_off as usize..(dst_off + len) as usize;
                self.regions[dst].bytes[target.clone()].copy_from_slice(&bytes);
                self.regions[dst].init[target].copy_from_slice(&init);
                let (from, to) = (self.at(src, src_off), self.at(dst, dst_off));
                self.push(Action::Copy { from, to, len });
            }
            5 => {
                let (r, offset, len) = self.defined_range(64);
                let at = self.at(r, offset);
                self.push(Action::BranchOn { at, len });
            }
            6 => self.arith(),
            7 => self.div(),
            8 => self.shift(),
            9 => {
                let value: i128 = self.rng.gen_range(0..=255);
                let a = self.operand(IntSpec::I32, value);
                let dst = self.dst(IntSpec::U8, value);
                self.push(Action::Trunc {
                    a,
                    from: IntSpec::I32,
                    to: IntSpec::U8,
                    dst,
                });
            }
            10 => match self.rng.gen_range(0..4) {
                0 => {
                    let align = 1u64 << self.rng.gen_range(0..4);
                    let at = MemRef::abs(align * self.rng.gen_range(1..64));
                    self.push(Action::AlignCheck {
                        at,
                        align: Alignment::new(align).expect("power of two"),
                    });
                }
                1 => {
                    let at = MemRef::abs(self.rng.gen_range(1..4096));
                    self.push(Action::NonnullCheck { at });
                }
                2 => {
                    let value = self.rng.gen_range(0..=1);
                    let v = self.operand(IntSpec::U8, value);
                    self.push(Action::BoolCheck { v });
                }
                _ => {
                    let value = self.rng.gen_range(0..=3);
                    let v = self.operand(IntSpec::I32, value);
                    self.push(Action::EnumCheck {
                        v,
                        name: "mode".into(),
                        allowed: vec![0, 1, 2, 3],
                    });
                }
            },
            11 => {
                let (r, offset, len) = self.defined_range(MAX_MESSAGE);
                let bytes =
                    self.regions[r].bytes[offset as usize..(offset + len) as usize].to_vec();
                self.queue.push_back(bytes);
                let from = self.at(r, offset);
                self.push(Action::Send {
                    port: PORT.into(),
                    from,
                    len,
                });
            }
            12 => {
                let head = self.queue.front().map_or(1, |m| m.len() as u64);
                let candidates: Vec<usize> = (0..self.regions.len())
                    .filter(|&r| self.regions[r].bytes.len() as u64 >= head)
                    .collect();
                let Some(&r) = candidates.choose(&mut self.rng) else {
                    return;
                };
                let offset = self
                    .rng
                    .gen_range(0..=self.regions[r].bytes.len() as u64 - head);
                if let Some(message) = self.queue.pop_front() {
                    self.store(r, offset, &message);
                }
                let to = self.at(r, offset);
                self.push(Action::Receive {
                    port: PORT.into(),
                    to,
                });
            }
            13 => self.push(Action::GetMyId),
            _ => {
                let ticks = self.rng.gen_range(1..=20);
                self.push(Action::Idle { ticks });
            }
        }
    }
}

/// A clean single-partition workload of roughly `steps` steps.
///
/// The main context runs first, then processes in descending priority, so
/// steps are generated in exactly that order.
pub fn random_clean(seed: u64, steps: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let granularity = Granularity::new(*[1, 2, 4, 8, 16].choose(&mut rng).unwrap()).expect("valid");
    let region_count = rng.gen_range(2..=6);
    let regions: Vec<RegionSpec> = (0..region_count)
        .map(|i| RegionSpec {
            label: format!("r{i}"),
            size: Some(rng.gen_range(1..=64)),
            type_name: None,
        })
        .collect();
    let process_count = rng.gen_range(0..=3u32);
    let mut processes: Vec<ProcessConfig> = (1..=process_count)
        .map(|id| ProcessConfig {
            id: ProcessId(id),
            period: None,
            time_capacity: 1_000_000,
            priority: rng.gen_range(0..3),
            initial_state: ProcessState::Ready,
        })
        .collect();

    let mut model = Model {
        rng,
        regions: regions
            .iter()
            .map(|r| ModelRegion {
                label: r.label.clone(),
                bytes: vec![0; r.size.unwrap() as usize],
                init: vec![false; r.size.unwrap() as usize],
            })
            .collect(),
        queue: VecDeque::new(),
        steps: Vec::new(),
        proc: None,
        operands: Vec::new(),
    };

    let allocs = model.rng.gen_range(0..=3);
    for i in 0..allocs {
        let size = model.rng.gen_range(1..=64u64);
        let label = format!("a{i}");
        model.push(Action::Alloc {
            region: label.clone(),
            size: Some(size),
            type_name: None,
        });
        model.regions.push(ModelRegion {
            label,
            bytes: vec![0; size as usize],
            init: vec![false; size as usize],
        });
    }

    let mut order: Vec<Option<ProcessId>> = vec![None];
    let mut by_priority = processes.clone();
    by_priority.sort_by_key(|p| (std::cmp::Reverse(p.priority), p.id));
    order.extend(by_priority.iter().map(|p| Some(p.id)));
    let per_context = steps.div_ceil(order.len()).max(1);
    for ctx in order {
        model.proc = ctx;
        let target = model.steps.len() + per_context;
        while model.steps.len() < target {
            model.step();
        }
    }
    processes.retain(|p| model.steps.iter().any(|s| s.proc == Some(p.id)));

    Scenario {
        name: RANDOM_CLEAN.into(),
        description: Some(format!("generated clean workload, seed {seed}")),
        partitions: vec![PartitionSpec {
            id: PartitionId(1),
            memory_size: 4096,
            granularity,
            redzone: 16,
            regions,
            processes,
            legacy_get_my_id: false,
            strict_unsigned: false,
        }],
        time: TimeSpec::default(),
        ports: vec![PortSpec {
            name: PORT.into(),
            kind: PortKind::Queueing,
            source: PartitionId(1),
            destination: PartitionId(1),
            max_message_size: MAX_MESSAGE,
            refresh_period: None,
            capacity: Some(4096),
        }],
        types: Default::default(),
        padding: Default::default(),
        reserved_init: ReservedInitConfig::default(),
        syscalls: Vec::new(),
        workload: model.steps,
        expect: Vec::new(),
    }
}
