// SPDX-License-Identifier: Apache-2.0

//! Sampling and queueing ports between partitions.
//!
//! Every send runs the validity check and the initialization check on the
//! source buffer first, so uninitialized bytes never leave a partition.
//! Delivered bytes carry their initialization state with them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::asan_shadow::AsanViolation;
use crate::guest_memory::{AccessKind, GuestAddr, MemoryViolation, PartitionId, PartitionMemory};
use crate::msan_shadow::{InitSpan, MsanViolation, UseSite};
use crate::sched::Ticks;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub bytes: Vec<u8>,
    pub send_time: Ticks,
    pub source: PartitionId,
    init: InitSpan,
}

impl Message {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Validity {
    Valid,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortError {
    Asan(AsanViolation),
    Msan(MsanViolation),
    MessageTooLong {
        port: String,
        len: u64,
        max: u64,
    },
    QueueFull {
        port: String,
        capacity: usize,
    },
    /// The partition is not the configured endpoint for this direction.
    WrongEndpoint {
        port: String,
        partition: PartitionId,
    },
}

impl From<MemoryViolation> for PortError {
    fn from(v: MemoryViolation) -> Self {
        match v {
            MemoryViolation::Asan(v) => PortError::Asan(v),
            MemoryViolation::Msan(v) => PortError::Msan(v),
        }
    }
}

impl From<AsanViolation> for PortError {
    fn from(v: AsanViolation) -> Self {
        PortError::Asan(v)
    }
}

/// Endpoints and limits shared by both port kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoints {
    pub name: String,
    pub source: PartitionId,
    pub destination: PartitionId,
    pub max_message_size: u64,
}

impl Endpoints {
    fn expect(&self, want: PartitionId, got: PartitionId) -> Result<(), PortError> {
        if want == got {
            Ok(())
        } else {
            Err(PortError::WrongEndpoint {
                port: self.name.clone(),
                partition: got,
            })
        }
    }

    /// Length, validity and initialization checks on a source buffer.
    fn capture(
        &self,
        src: &PartitionMemory,
        addr: GuestAddr,
        len: u64,
        now: Ticks,
    ) -> Result<Message, PortError> {
        self.expect(self.source, src.id())?;
        if len > self.max_message_size {
            return Err(PortError::MessageTooLong {
                port: self.name.clone(),
                len,
                max: self.max_message_size,
            });
        }
        let bytes = src.checked_read(addr, len)?;
        src.msan_check(addr, len, UseSite::PortSend)?;
        let init = src
            .init_shadow()
            .snapshot(addr.offset, len)
            .expect("range validated by the access check");
        Ok(Message {
            bytes,
            send_time: now,
            source: src.id(),
            init,
        })
    }

    fn deliver_check(
        &self,
        dst: &PartitionMemory,
        addr: GuestAddr,
        len: u64,
    ) -> Result<(), PortError> {
        self.expect(self.destination, dst.id())?;
        dst.check_access(addr, len, AccessKind::Write)?;
        Ok(())
    }
}

/// Store the message bytes and copy their initialization state over.
fn deliver(dst: &mut PartitionMemory, addr: GuestAddr, message: &Message) {
    dst.store_raw(addr.offset, &message.bytes)
        .expect("range validated by the access check");
    dst.init_shadow_mut()
        .apply(addr.offset, &message.init)
        .expect("range validated by the access check");
}

/// Latest-value channel with a freshness bound.
#[derive(Debug, Clone)]
pub struct SamplingPort {
    pub endpoints: Endpoints,
    pub refresh_period: Ticks,
    latest: Option<Message>,
}

impl SamplingPort {
    pub fn new(endpoints: Endpoints, refresh_period: Ticks) -> Self {
        SamplingPort {
            endpoints,
            refresh_period,
            latest: None,
        }
    }

    pub fn latest(&self) -> Option<&Message> {
        self.latest.as_ref()
    }

    /// Replace the stored message. Nothing is stored if any check fails.
    pub fn write_sampling(
        &mut self,
        src: &PartitionMemory,
        addr: GuestAddr,
        len: u64,
        now: Ticks,
    ) -> Result<(), PortError> {
        let message = self.endpoints.capture(src, addr, len, now)?;
        self.latest = Some(message);
        Ok(())
    }

    /// Copy the latest message to `addr`. `Ok(None)` if nothing was ever
    /// written. A message is VALID while its age is at most the refresh
    /// period.
    pub fn read_sampling(
        &self,
        dst: &mut PartitionMemory,
        addr: GuestAddr,
        now: Ticks,
    ) -> Result<Option<(Vec<u8>, Validity)>, PortError> {
        self.endpoints
            .expect(self.endpoints.destination, dst.id())?;
        let Some(message) = &self.latest else {
            return Ok(None);
        };
        self.endpoints
            .deliver_check(dst, addr, message.len() as u64)?;
        deliver(dst, addr, message);
        let validity = if now.saturating_sub(message.send_time) <= self.refresh_period {
            Validity::Valid
        } else {
            Validity::Stale
        };
        Ok(Some((message.bytes.clone(), validity)))
    }
}

/// Bounded FIFO channel. A send to a full queue is dropped and reported.
#[derive(Debug, Clone)]
pub struct QueueingPort {
    pub endpoints: Endpoints,
    pub capacity: usize,
    queue: VecDeque<Message>,
}

impl QueueingPort {
    pub fn new(endpoints: Endpoints, capacity: usize) -> Self {
        QueueingPort {
            endpoints,
            capacity,
            queue: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn send_queueing(
        &mut self,
        src: &PartitionMemory,
        addr: GuestAddr,
        len: u64,
        now: Ticks,
    ) -> Result<(), PortError> {
        let message = self.endpoints.capture(src, addr, len, now)?;
        if self.queue.len() >= self.capacity {
            return Err(PortError::QueueFull {
                port: self.endpoints.name.clone(),
                capacity: self.capacity,
            });
        }
        self.queue.push_back(message);
        Ok(())
    }

    /// Dequeue the head into `addr`. The head stays queued if the
    /// destination is not writable.
    pub fn receive_queueing(
        &mut self,
        dst: &mut PartitionMemory,
        addr: GuestAddr,
    ) -> Result<Option<Message>, PortError> {
        self.endpoints
            .expect(self.endpoints.destination, dst.id())?;
        let Some(head) = self.queue.front() else {
            return Ok(None);
        };
        self.endpoints.deliver_check(dst, addr, head.len() as u64)?;
        let message = self.queue.pop_front().expect("head exists");
        deliver(dst, addr, &message);
        Ok(Some(message))
    }
}
