// SPDX-License-Identifier: Apache-2.0

//! Deterministic ARINC 653-style partition simulator with sanitizer runtimes.
//!
//! Each partition owns a statically sized guest memory backed by two shadow
//! maps: an address-validity map with k:1 compression ([`asan_shadow`]) and a
//! 1:1 initialization map with origins ([`msan_shadow`]). Workloads run under a
//! cyclic major-frame scheduler whose virtual clock can be slowed down to
//! compensate for instrumentation overhead ([`sched`]). Inter-partition ports
//! refuse to transmit uninitialized bytes ([`ports`]), syscall contracts are
//! written in a small annotation language ([`syscall_annotations`]) and the
//! [`harness`] ties it all together into scenario runs with structured reports.

pub mod asan_shadow;
pub mod error;
pub mod guest_memory;
pub mod harness;
pub mod msan_shadow;
pub mod ports;
pub mod sched;
pub mod syscall_annotations;
pub mod ub_checks;

pub use error::{Error, Result};
pub use guest_memory::{AccessKind, GuestAddr, PartitionId, PartitionMemory, Region};
