// SPDX-License-Identifier: Apache-2.0

//! Statically sized partition memory with redzoned regions.
//!
//! All guest accesses go through [`PartitionMemory::checked_read`] and
//! [`PartitionMemory::checked_write`], which consult the validity shadow
//! first and keep the initialization shadow in sync with stores.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asan_shadow::{AsanKind, AsanViolation, Granularity, PoisonKind, ShadowMap};
use crate::error::{Error, Result};
use crate::msan_shadow::{InitShadow, MsanViolation, Origin, ReservedInitConfig, UseSite};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PartitionId(pub u32);

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A byte address inside one partition's memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GuestAddr {
    pub partition: PartitionId,
    pub offset: u64,
}

impl GuestAddr {
    pub fn new(partition: PartitionId, offset: u64) -> Self {
        GuestAddr { partition, offset }
    }

    pub fn checked_add(self, delta: u64) -> Option<Self> {
        self.offset
            .checked_add(delta)
            .map(|offset| GuestAddr { offset, ..self })
    }

    /// Guest null: offset zero of any partition.
    pub fn is_null(self) -> bool {
        self.offset == 0
    }
}

impl fmt::Display for GuestAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:#x}", self.partition, self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
}

impl AccessKind {
    pub fn letter(self) -> char {
        match self {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Init,
    Running,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub base: GuestAddr,
    pub payload_len: u64,
    pub redzone_left: u64,
    /// Includes the alignment slack between payload end and the next block.
    pub redzone_right: u64,
    pub label: String,
}

impl Region {
    pub fn span_start(&self) -> u64 {
        self.base.offset - self.redzone_left
    }

    pub fn span_end(&self) -> u64 {
        self.base.offset + self.payload_len + self.redzone_right
    }

    pub fn payload_end(&self) -> u64 {
        self.base.offset + self.payload_len
    }

    pub fn contains_payload(&self, offset: u64) -> bool {
        (self.base.offset..self.payload_end()).contains(&offset)
    }

    /// Distance from `offset` to the payload, zero when inside.
    fn distance(&self, offset: u64) -> u64 {
        if offset < self.base.offset {
            self.base.offset - offset
        } else {
            offset.saturating_sub(self.payload_end().saturating_sub(1))
        }
    }
}

/// Per-partition memory configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryConfig {
    pub granularity: Granularity,
    /// Minimum redzone on each side of a payload.
    pub redzone: u64,
    pub reserved_init: ReservedInitConfig,
}

impl MemoryConfig {
    pub const DEFAULT_REDZONE: u64 = 16;
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            granularity: Granularity::default(),
            redzone: Self::DEFAULT_REDZONE,
            reserved_init: ReservedInitConfig::default(),
        }
    }
}

/// Bytes at the start of every partition that are never handed out, so the
/// guest null address stays unaddressable.
pub const NULL_GUARD: u64 = 16;

/// A validity or initialization finding raised by a memory operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemoryViolation {
    Asan(AsanViolation),
    Msan(MsanViolation),
}

impl From<AsanViolation> for MemoryViolation {
    fn from(v: AsanViolation) -> Self {
        MemoryViolation::Asan(v)
    }
}

impl From<MsanViolation> for MemoryViolation {
    fn from(v: MsanViolation) -> Self {
        MemoryViolation::Msan(v)
    }
}

#[derive(Debug, Clone)]
pub struct PartitionMemory {
    id: PartitionId,
    config: MemoryConfig,
    bytes: Vec<u8>,
    phase: Phase,
    regions: Vec<Region>,
    next_free: u64,
    asan: ShadowMap,
    msan: InitShadow,
}

impl PartitionMemory {
    /// Fresh memory: fully blacklisted, fully uninitialized, no regions.
    pub fn create(id: PartitionId, size_bytes: u64, config: MemoryConfig) -> Result<Self> {
        let g = config.granularity;
        if size_bytes == 0 {
            return Err(Error::config(
                "/memory_size",
                "partition memory must not be empty",
            ));
        }
        if config.redzone < g.get() || !g.is_aligned(config.redzone) {
            return Err(Error::config(
                "/redzone",
                format!(
                    "redzone {} must be a non-zero multiple of granularity {}",
                    config.redzone,
                    g.get()
                ),
            ));
        }
        let asan = ShadowMap::new(id, size_bytes, g)?;
        Ok(PartitionMemory {
            id,
            config,
            bytes: vec![0; size_bytes as usize],
            phase: Phase::Init,
            regions: Vec::new(),
            next_free: g.align_up(NULL_GUARD),
            asan,
            msan: InitShadow::new(id, size_bytes),
        })
    }

    pub fn id(&self) -> PartitionId {
        self.id
    }

    pub fn size(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, label: &str) -> Option<&Region> {
        self.regions.iter().rev().find(|r| r.label == label)
    }

    pub fn shadow(&self) -> &ShadowMap {
        &self.asan
    }

    pub fn init_shadow(&self) -> &InitShadow {
        &self.msan
    }

    pub fn init_shadow_mut(&mut self) -> &mut InitShadow {
        &mut self.msan
    }

    pub fn addr(&self, offset: u64) -> GuestAddr {
        GuestAddr::new(self.id, offset)
    }

    /// Carve a redzoned region out of the unallocated space.
    pub fn alloc_region(
        &mut self,
        payload_len: u64,
        label: impl Into<String>,
        origin: Origin,
    ) -> Result<Region> {
        if self.phase != Phase::Init {
            return Err(Error::Phase(self.id));
        }
        if payload_len == 0 {
            return Err(Error::config("/size", "region payload must not be empty"));
        }
        let g = self.config.granularity;
        let rz = self.config.redzone;
        let start = self.next_free;
        let base = start + rz;
        let right = base
            .checked_add(payload_len)
            .map(|end| g.align_up(end))
            .and_then(|end| end.checked_add(rz));
        let end = match right {
            Some(end) if end <= self.size() => end,
            _ => {
                return Err(Error::OutOfMemory {
                    partition: self.id,
                    requested: payload_len.saturating_add(2 * rz),
                    available: self.size() - start,
                })
            }
        };
        self.asan.poison(start, rz, PoisonKind::LeftRedzone)?;
        self.asan.unpoison(base, payload_len)?;
        let right_start = g.align_up(base + payload_len);
        self.asan
            .poison(right_start, rz, PoisonKind::RightRedzone)?;
        self.msan
            .mark_uninitialized(base, payload_len, Some(origin))?;
        let region = Region {
            base: self.addr(base),
            payload_len,
            redzone_left: rz,
            redzone_right: end - (base + payload_len),
            label: label.into(),
        };
        self.next_free = end;
        self.regions.push(region.clone());
        Ok(region)
    }

    /// Leave initialization; the region table is frozen from now on.
    pub fn start(&mut self) {
        self.phase = Phase::Running;
    }

    /// Partition restart: everything is reclaimed and poisoned.
    pub fn reset(&mut self) {
        self.phase = Phase::Init;
        self.regions.clear();
        self.next_free = self.config.granularity.align_up(NULL_GUARD);
        self.asan.poison_all(PoisonKind::PartitionReset);
        self.msan.reset();
    }

    fn nearest_label(&self, offset: u64) -> Option<String> {
        self.regions
            .iter()
            .filter(|r| (r.span_start()..r.span_end()).contains(&offset))
            .chain(self.regions.iter())
            .min_by_key(|r| r.distance(offset))
            .map(|r| r.label.clone())
    }

    /// Run the inserted validity check for an access.
    pub fn check_access(
        &self,
        addr: GuestAddr,
        len: u64,
        access: AccessKind,
    ) -> std::result::Result<(), AsanViolation> {
        self.asan.check_access(addr, len, access).map_err(|mut v| {
            if v.kind != AsanKind::WildAddress {
                v.region_label = self.nearest_label(v.addr.offset);
            }
            v
        })
    }

    /// Validity-checked load. Does not look at initialization.
    pub fn checked_read(
        &self,
        addr: GuestAddr,
        len: u64,
    ) -> std::result::Result<Vec<u8>, AsanViolation> {
        self.check_access(addr, len, AccessKind::Read)?;
        let start = addr.offset as usize;
        Ok(self.bytes[start..start + len as usize].to_vec())
    }

    /// Validity-checked store; the span becomes initialized unless the write
    /// consists solely of the reserved initialization pattern.
    pub fn checked_write(
        &mut self,
        addr: GuestAddr,
        data: &[u8],
        origin: Origin,
    ) -> std::result::Result<(), AsanViolation> {
        self.check_access(addr, data.len() as u64, AccessKind::Write)?;
        let start = addr.offset as usize;
        self.bytes[start..start + data.len()].copy_from_slice(data);
        if !self.config.reserved_init.is_reserved_write(data) {
            self.msan
                .mark_initialized(addr.offset, data.len() as u64, origin)
                .expect("range validated by the access check");
        }
        Ok(())
    }

    /// Store bytes that bypass both shadows, as a kernel would.
    pub fn store_raw(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        let end = offset
            .checked_add(data.len() as u64)
            .filter(|&end| end <= self.size())
            .ok_or(Error::OutOfRange {
                offset,
                len: data.len() as u64,
                size: self.size(),
            })?;
        self.bytes[offset as usize..end as usize].copy_from_slice(data);
        Ok(())
    }

    /// Use-site initialization check; out-of-partition ranges are wild.
    pub fn msan_check(
        &self,
        addr: GuestAddr,
        len: u64,
        context: UseSite,
    ) -> std::result::Result<(), MemoryViolation> {
        self.in_bounds(addr, len, AccessKind::Read)?;
        self.msan.msan_check(addr.offset, len, context)?;
        Ok(())
    }

    pub fn msan_unpoison(
        &mut self,
        addr: GuestAddr,
        len: u64,
    ) -> std::result::Result<(), AsanViolation> {
        self.in_bounds(addr, len, AccessKind::Write)?;
        self.msan
            .msan_unpoison(addr.offset, len)
            .expect("range validated above");
        Ok(())
    }

    fn in_bounds(
        &self,
        addr: GuestAddr,
        len: u64,
        access: AccessKind,
    ) -> std::result::Result<(), AsanViolation> {
        let fits = addr.partition == self.id
            && addr
                .offset
                .checked_add(len)
                .is_some_and(|end| end <= self.size());
        if fits {
            Ok(())
        } else {
            Err(AsanViolation {
                kind: AsanKind::WildAddress,
                addr: GuestAddr::new(addr.partition, addr.offset.max(self.size())),
                access,
                requested_len: len,
                region_label: None,
            })
        }
    }

    /// Validity-checked copy inside this partition. Initialization state
    /// travels with the bytes.
    pub fn checked_copy(
        &mut self,
        src: GuestAddr,
        dst: GuestAddr,
        len: u64,
    ) -> std::result::Result<(), AsanViolation> {
        let data = self.checked_read(src, len)?;
        self.check_access(dst, len, AccessKind::Write)?;
        let start = dst.offset as usize;
        self.bytes[start..start + data.len()].copy_from_slice(&data);
        self.msan
            .copy_propagate(src.offset, dst.offset, len)
            .expect("ranges validated by the access checks");
        Ok(())
    }

    /// Raw bytes, for inspection.
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}
