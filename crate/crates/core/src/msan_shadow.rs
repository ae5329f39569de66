// SPDX-License-Identifier: Apache-2.0

//! Initialization shadow with origin tracking.
//!
//! One entry per origin byte. Reads and copies never report: a violation is
//! raised only when a value reaches a use site (syscall input, branch,
//! arithmetic, port send).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guest_memory::{GuestAddr, PartitionId};

/// Who made a byte what it is. Depth one: no chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Workload step index.
    Step(u32),
    /// Region declared in the scenario before the workload starts.
    Declared,
    /// `msan_unpoison` from a contract annotation.
    Annotation,
    /// Registered structure padding.
    Padding,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Step(step) => write!(f, "step:{step}"),
            Origin::Declared => f.write_str("declared"),
            Origin::Annotation => f.write_str("annotation"),
            Origin::Padding => f.write_str("padding"),
        }
    }
}

/// Program point at which uninitialized data is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UseSite {
    SyscallPre,
    Branch,
    Arith,
    PortSend,
}

impl UseSite {
    pub fn name(self) -> &'static str {
        match self {
            UseSite::SyscallPre => "SYSCALL_PRE",
            UseSite::Branch => "BRANCH",
            UseSite::Arith => "ARITH",
            UseSite::PortSend => "PORT_SEND",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsanViolation {
    /// Lowest uninitialized byte of the checked range.
    pub addr: GuestAddr,
    pub requested_len: u64,
    pub context: UseSite,
    /// Allocation that produced the uninitialized byte.
    pub origin: Option<Origin>,
}

/// Sentinel value that does not count as initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservedInitConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "ReservedInitConfig::default_pattern")]
    pub pattern: u8,
}

impl ReservedInitConfig {
    pub const DEFAULT_PATTERN: u8 = 0xCD;

    fn default_pattern() -> u8 {
        Self::DEFAULT_PATTERN
    }

    pub fn enabled(pattern: u8) -> Self {
        ReservedInitConfig {
            enabled: true,
            pattern,
        }
    }

    /// A write made only of the pattern byte leaves the shadow alone.
    pub fn is_reserved_write(&self, bytes: &[u8]) -> bool {
        self.enabled && !bytes.is_empty() && bytes.iter().all(|&b| b == self.pattern)
    }
}

impl Default for ReservedInitConfig {
    fn default() -> Self {
        ReservedInitConfig {
            enabled: false,
            pattern: Self::DEFAULT_PATTERN,
        }
    }
}

/// Layout of a structure type: total size and its padding holes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeLayout {
    pub size: u64,
    pub padding: Vec<(u64, u64)>,
}

/// Padding ranges per type name, declared by the scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PaddingRegistry {
    types: BTreeMap<String, TypeLayout>,
}

impl PaddingRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ranges are `(offset, len)` pairs; they must be non-empty, inside the
    /// type and must not overlap.
    pub fn register(
        &mut self,
        type_name: impl Into<String>,
        size: u64,
        padding: Vec<(u64, u64)>,
    ) -> Result<()> {
        let type_name = type_name.into();
        let path = format!("/padding/{type_name}");
        let mut sorted = padding.clone();
        sorted.sort_unstable();
        let mut cursor = 0;
        for &(offset, len) in &sorted {
            if len == 0 {
                return Err(Error::config(&path, "empty padding range"));
            }
            if offset.checked_add(len).is_none_or(|end| end > size) {
                return Err(Error::config(
                    &path,
                    format!("padding [{offset}, +{len}) exceeds type size {size}"),
                ));
            }
            if offset < cursor {
                return Err(Error::config(&path, "overlapping padding ranges"));
            }
            cursor = offset + len;
        }
        self.types.insert(type_name, TypeLayout { size, padding });
        Ok(())
    }

    pub fn layout(&self, type_name: &str) -> Option<&TypeLayout> {
        self.types.get(type_name)
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// Initialization state of a byte range, detached from its location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSpan {
    init: Vec<Option<Origin>>,
    alloc: Vec<Option<Origin>>,
}

impl InitSpan {
    pub fn len(&self) -> usize {
        self.init.len()
    }

    pub fn is_empty(&self) -> bool {
        self.init.is_empty()
    }

    pub fn is_fully_initialized(&self) -> bool {
        self.init.iter().all(Option::is_some)
    }
}

/// 1:1 initialization shadow of one partition.
///
/// `init[i]` is set exactly when byte `i` holds a defined value and names the
/// step that defined it. `alloc[i]` remembers the allocation the byte came
/// from and is what violations point at.
#[derive(Debug, Clone)]
pub struct InitShadow {
    partition: PartitionId,
    init: Vec<Option<Origin>>,
    alloc: Vec<Option<Origin>>,
}

impl InitShadow {
    pub fn new(partition: PartitionId, size: u64) -> Self {
        InitShadow {
            partition,
            init: vec![None; size as usize],
            alloc: vec![None; size as usize],
        }
    }

    pub fn len(&self) -> u64 {
        self.init.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.init.is_empty()
    }

    fn range(&self, offset: u64, len: u64) -> Result<std::ops::Range<usize>> {
        match offset.checked_add(len) {
            Some(end) if end <= self.len() => Ok(offset as usize..end as usize),
            _ => Err(Error::OutOfRange {
                offset,
                len,
                size: self.len(),
            }),
        }
    }

    pub fn is_initialized(&self, offset: u64) -> bool {
        self.init.get(offset as usize).is_some_and(Option::is_some)
    }

    /// Origin of an initialized byte.
    pub fn origin(&self, offset: u64) -> Option<Origin> {
        self.init.get(offset as usize).copied().flatten()
    }

    /// Allocation origin of a byte, initialized or not.
    pub fn alloc_origin(&self, offset: u64) -> Option<Origin> {
        self.alloc.get(offset as usize).copied().flatten()
    }

    /// Check that every byte of the range holds a defined value.
    ///
    /// Bytes outside the partition count as uninitialized.
    pub fn msan_check(
        &self,
        offset: u64,
        len: u64,
        context: UseSite,
    ) -> std::result::Result<(), MsanViolation> {
        let first_bad = (offset..offset.saturating_add(len)).find(|&o| !self.is_initialized(o));
        match first_bad {
            None => Ok(()),
            Some(bad) => Err(MsanViolation {
                addr: GuestAddr::new(self.partition, bad),
                requested_len: len,
                context,
                origin: self.alloc_origin(bad),
            }),
        }
    }

    /// Annotation-driven unpoison. Bytes that already hold a value keep
    /// their origin.
    pub fn msan_unpoison(&mut self, offset: u64, len: u64) -> Result<()> {
        self.mark_defined_preserving(offset, len, Origin::Annotation)
    }

    fn mark_defined_preserving(&mut self, offset: u64, len: u64, origin: Origin) -> Result<()> {
        let range = self.range(offset, len)?;
        for slot in &mut self.init[range] {
            slot.get_or_insert(origin);
        }
        Ok(())
    }

    /// A store: the whole span now holds values defined by `origin`.
    pub fn mark_initialized(&mut self, offset: u64, len: u64, origin: Origin) -> Result<()> {
        let range = self.range(offset, len)?;
        self.init[range].fill(Some(origin));
        Ok(())
    }

    /// Fresh allocation: the span is undefined and attributed to `origin`.
    pub fn mark_uninitialized(
        &mut self,
        offset: u64,
        len: u64,
        origin: Option<Origin>,
    ) -> Result<()> {
        let range = self.range(offset, len)?;
        self.init[range.clone()].fill(None);
        self.alloc[range].fill(origin);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.init.fill(None);
        self.alloc.fill(None);
    }

    pub fn snapshot(&self, offset: u64, len: u64) -> Result<InitSpan> {
        let range = self.range(offset, len)?;
        Ok(InitSpan {
            init: self.init[range.clone()].to_vec(),
            alloc: self.alloc[range].to_vec(),
        })
    }

    pub fn apply(&mut self, offset: u64, span: &InitSpan) -> Result<()> {
        let range = self.range(offset, span.len() as u64)?;
        self.init[range.clone()].copy_from_slice(&span.init);
        self.alloc[range].copy_from_slice(&span.alloc);
        Ok(())
    }

    /// Copy initialization state (and origins) from `src` to `dst`.
    /// Copying undefined data is not itself an error.
    pub fn copy_propagate(&mut self, src: u64, dst: u64, len: u64) -> Result<()> {
        self.range(dst, len)?;
        let span = self.snapshot(src, len)?;
        self.apply(dst, &span)
    }

    /// Mark the padding holes of a `type_name` object at `base` as defined.
    pub fn unpoison_padding(
        &mut self,
        registry: &PaddingRegistry,
        type_name: &str,
        base: u64,
    ) -> Result<()> {
        let layout = registry.layout(type_name).ok_or_else(|| {
            Error::config(
                format!("/padding/{type_name}"),
                format!("type `{type_name}` has no registered layout"),
            )
        })?;
        for &(offset, len) in &layout.padding {
            let start = base.checked_add(offset).ok_or(Error::OutOfRange {
                offset: base,
                len: offset,
                size: self.len(),
            })?;
            self.mark_defined_preserving(start, len, Origin::Padding)?;
        }
        Ok(())
    }
}
