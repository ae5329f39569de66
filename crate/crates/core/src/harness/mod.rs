// SPDX-License-Identifier: Apache-2.0

//! Scenario loading, workload interpretation and reporting.

pub mod builtins;
pub mod generate;
pub mod interp;
pub mod report;
pub mod scenario;

pub use builtins::{builtin, builtin_scenarios, BUILTIN_NAMES};
pub use interp::run_scenario;
pub use report::{emit_report, ReportFormat, RunReport, Verdict, ViolationRecord};
pub use scenario::{load_scenario, Scenario};

use crate::asan_shadow::Granularity;
use crate::sched::Factor;

/// Command-line adjustments applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub slowdown_factor: Option<Factor>,
    pub granularity: Option<Granularity>,
    pub legacy_get_my_id: bool,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) {
        if let Some(f) = self.slowdown_factor {
            scenario.time.slowdown_factor = f;
        }
        for p in &mut scenario.partitions {
            if let Some(g) = self.granularity {
                p.granularity = g;
                p.redzone = p.redzone.max(g.get()).div_ceil(g.get()) * g.get();
                p.memory_size = p.memory_size.div_ceil(g.get()) * g.get();
            }
            p.legacy_get_my_id |= self.legacy_get_my_id;
        }
    }
}
