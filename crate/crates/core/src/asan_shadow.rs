// SPDX-License-Identifier: Apache-2.0

//! Address-validity shadow memory.
//!
//! Every `g` bytes of partition memory are summarized by one shadow byte:
//!
//! * `0x00`: all `g` bytes are addressable,
//! * `0x01..g`: only that many leading bytes are addressable,
//! * `>= 0xF0`: the whole block is poisoned, the value names the reason.
//!
//! Interior holes inside a block cannot be expressed. Operations that would
//! need one fail with [`Error::Encoding`] and leave the map untouched.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guest_memory::{AccessKind, GuestAddr, PartitionId};

/// Poison reasons with their stable shadow byte codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum PoisonKind {
    LeftRedzone = 0xF1,
    RightRedzone = 0xF3,
    PartitionReset = 0xF8,
    ManualBlacklist = 0xFE,
}

impl PoisonKind {
    pub const ALL: [PoisonKind; 4] = [
        PoisonKind::LeftRedzone,
        PoisonKind::RightRedzone,
        PoisonKind::PartitionReset,
        PoisonKind::ManualBlacklist,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            PoisonKind::LeftRedzone => "LEFT_REDZONE",
            PoisonKind::RightRedzone => "RIGHT_REDZONE",
            PoisonKind::PartitionReset => "PARTITION_RESET",
            PoisonKind::ManualBlacklist => "MANUAL_BLACKLIST",
        }
    }
}

impl fmt::Display for PoisonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bytes of origin memory summarized by one shadow byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Granularity(u64);

impl Granularity {
    pub const SUPPORTED: [u64; 5] = [1, 2, 4, 8, 16];

    pub fn new(bytes: u64) -> Result<Self> {
        if Self::SUPPORTED.contains(&bytes) {
            Ok(Granularity(bytes))
        } else {
            Err(Error::config(
                "/granularity",
                format!("granularity {bytes} is not one of {:?}", Self::SUPPORTED),
            ))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn align_down(self, offset: u64) -> u64 {
        offset & !(self.0 - 1)
    }

    pub fn align_up(self, offset: u64) -> u64 {
        self.align_down(offset + self.0 - 1)
    }

    pub fn is_aligned(self, offset: u64) -> bool {
        offset.is_multiple_of(self.0)
    }
}

impl Default for Granularity {
    fn default() -> Self {
        Granularity(8)
    }
}

impl TryFrom<u64> for Granularity {
    type Error = Error;

    fn try_from(value: u64) -> Result<Self> {
        Granularity::new(value)
    }
}

impl From<Granularity> for u64 {
    fn from(value: Granularity) -> u64 {
        value.0
    }
}

/// Number of shadow bytes needed to describe `memory_size` bytes.
pub fn shadow_size_for(memory_size: u64, granularity: Granularity) -> Result<u64> {
    if !granularity.is_aligned(memory_size) {
        return Err(Error::config(
            "/memory_size",
            format!(
                "memory size {memory_size} is not a multiple of granularity {}",
                granularity.get()
            ),
        ));
    }
    Ok(memory_size / granularity.get())
}

/// Decoded meaning of one shadow byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowByte {
    Addressable,
    /// Number of leading addressable bytes, `1..g`.
    Partial(u8),
    Poisoned(PoisonKind),
}

impl ShadowByte {
    pub fn encode(self) -> u8 {
        match self {
            ShadowByte::Addressable => 0,
            ShadowByte::Partial(n) => n,
            ShadowByte::Poisoned(kind) => kind.code(),
        }
    }

    pub fn decode(byte: u8, granularity: Granularity) -> Option<Self> {
        match byte {
            0 => Some(ShadowByte::Addressable),
            n if u64::from(n) < granularity.get() => Some(ShadowByte::Partial(n)),
            code => PoisonKind::from_code(code).map(ShadowByte::Poisoned),
        }
    }

    /// Leading addressable bytes in the block.
    fn addressable(self, granularity: Granularity) -> u64 {
        match self {
            ShadowByte::Addressable => granularity.get(),
            ShadowByte::Partial(n) => u64::from(n),
            ShadowByte::Poisoned(_) => 0,
        }
    }
}

/// Why an access was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AsanKind {
    Poisoned(PoisonKind),
    WildAddress,
}

impl AsanKind {
    pub fn name(self) -> &'static str {
        match self {
            AsanKind::Poisoned(kind) => kind.name(),
            AsanKind::WildAddress => "WILD_ADDRESS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsanViolation {
    pub kind: AsanKind,
    /// Lowest invalid byte of the requested range.
    pub addr: GuestAddr,
    pub access: AccessKind,
    pub requested_len: u64,
    pub region_label: Option<String>,
}

/// Per-partition k:1 validity shadow.
#[derive(Debug, Clone)]
pub struct ShadowMap {
    partition: PartitionId,
    granularity: Granularity,
    size: u64,
    shadow: Vec<u8>,
}

impl ShadowMap {
    /// A map for `size` bytes with everything blacklisted.
    pub fn new(partition: PartitionId, size: u64, granularity: Granularity) -> Result<Self> {
        let blocks = shadow_size_for(size, granularity)?;
        Ok(ShadowMap {
            partition,
            granularity,
            size,
            shadow: vec![PoisonKind::ManualBlacklist.code(); blocks as usize],
        })
    }

    pub fn partition(&self) -> PartitionId {
        self.partition
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn memory_size(&self) -> u64 {
        self.size
    }

    pub fn shadow_bytes(&self) -> &[u8] {
        &self.shadow
    }

    fn block(&self, offset: u64) -> ShadowByte {
        let raw = self.shadow[(offset / self.granularity.get()) as usize];
        ShadowByte::decode(raw, self.granularity)
            .unwrap_or_else(|| panic!("corrupt shadow byte {raw:#04x}"))
    }

    fn check_range(&self, offset: u64, len: u64) -> Result<u64> {
        match offset.checked_add(len) {
            Some(end) if end <= self.size => Ok(end),
            _ => Err(Error::OutOfRange {
                offset,
                len,
                size: self.size,
            }),
        }
    }

    /// Fill the whole map with one poison kind.
    pub fn poison_all(&mut self, kind: PoisonKind) {
        self.shadow.fill(kind.code());
    }

    /// Mark `[offset, offset + len)` unaddressable.
    ///
    /// Blocks only partially covered by the range keep their encoding as long
    /// as the result is still "leading bytes addressable"; anything else is an
    /// encoding error.
    pub fn poison(&mut self, offset: u64, len: u64, kind: PoisonKind) -> Result<()> {
        let end = self.check_range(offset, len)?;
        if len == 0 {
            return Ok(());
        }
        let g = self.granularity.get();
        let mut updates = Vec::new();
        let mut block_start = self.granularity.align_down(offset);
        while block_start < end {
            let lo = offset.max(block_start) - block_start;
            let hi = end.min(block_start + g) - block_start;
            let current = self.block(block_start);
            let next = if lo == 0 && hi == g {
                Some(ShadowByte::Poisoned(kind))
            } else {
                let valid = current.addressable(self.granularity);
                if lo >= valid {
                    // Nothing addressable gets poisoned; keep the old reason.
                    None
                } else if hi < valid {
                    return Err(Error::Encoding {
                        operation: "poison",
                        offset,
                        len,
                    });
                } else if lo == 0 {
                    Some(ShadowByte::Poisoned(kind))
                } else {
                    Some(ShadowByte::Partial(lo as u8))
                }
            };
            if let Some(byte) = next {
                updates.push(((block_start / g) as usize, byte.encode()));
            }
            block_start += g;
        }
        for (index, value) in updates {
            self.shadow[index] = value;
        }
        Ok(())
    }

    /// Mark `[offset, offset + len)` addressable. `offset` must be block
    /// aligned; a trailing partial block gets at least `len % g` leading
    /// addressable bytes.
    pub fn unpoison(&mut self, offset: u64, len: u64) -> Result<()> {
        let end = self.check_range(offset, len)?;
        if !self.granularity.is_aligned(offset) {
            return Err(Error::Encoding {
                operation: "unpoison",
                offset,
                len,
            });
        }
        let g = self.granularity.get();
        let first = (offset / g) as usize;
        let full = (len / g) as usize;
        self.shadow[first..first + full].fill(0);
        let tail = len % g;
        if tail != 0 {
            let index = (end / g) as usize;
            let valid = self.block(end).addressable(self.granularity).max(tail);
            self.shadow[index] = if valid == g { 0 } else { valid as u8 };
        }
        Ok(())
    }

    pub fn is_addressable(&self, offset: u64) -> bool {
        offset < self.size
            && offset - self.granularity.align_down(offset)
                < self.block(offset).addressable(self.granularity)
    }

    /// Poison kind reported for a byte, `None` when it is addressable.
    ///
    /// The unaddressable tail of a partial block borrows the kind of the
    /// following block, or [`PoisonKind::RightRedzone`] when that block is
    /// not poisoned.
    pub fn classify(&self, offset: u64) -> Option<PoisonKind> {
        if self.is_addressable(offset) {
            return None;
        }
        match self.block(offset) {
            ShadowByte::Poisoned(kind) => Some(kind),
            _ => {
                let next = self.granularity.align_down(offset) + self.granularity.get();
                match (next < self.size).then(|| self.block(next)) {
                    Some(ShadowByte::Poisoned(kind)) => Some(kind),
                    _ => Some(PoisonKind::RightRedzone),
                }
            }
        }
    }

    /// Validate an access of `len` bytes. Never mutates the map.
    pub fn check_access(
        &self,
        addr: GuestAddr,
        len: u64,
        access: AccessKind,
    ) -> std::result::Result<(), AsanViolation> {
        let violation = |kind, offset| AsanViolation {
            kind,
            addr: GuestAddr::new(addr.partition, offset),
            access,
            requested_len: len,
            region_label: None,
        };
        if addr.partition != self.partition {
            return Err(violation(AsanKind::WildAddress, addr.offset));
        }
        let end = match addr.offset.checked_add(len.max(1)) {
            Some(end) if end <= self.size => end,
            _ => return Err(violation(AsanKind::WildAddress, addr.offset.max(self.size))),
        };
        let g = self.granularity.get();
        let mut offset = addr.offset;
        while offset < end {
            let block_start = self.granularity.align_down(offset);
            let valid_end = block_start + self.block(offset).addressable(self.granularity);
            if offset >= valid_end {
                let kind = self
                    .classify(offset)
                    .expect("unaddressable byte has a kind");
                return Err(violation(AsanKind::Poisoned(kind), offset));
            }
            if valid_end < block_start + g && end > valid_end {
                let kind = self
                    .classify(valid_end)
                    .expect("unaddressable byte has a kind");
                return Err(violation(AsanKind::Poisoned(kind), valid_end));
            }
            offset = block_start + g;
        }
        Ok(())
    }
}
