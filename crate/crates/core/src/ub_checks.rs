// SPDX-License-Identifier: Apache-2.0

//! Checked primitives for the undefined-behavior catalogue.
//!
//! Values travel as `i128` so every supported width fits; the arithmetic
//! itself is done in the native Rust type of the requested width.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guest_memory::GuestAddr;

/// Width and signedness of a guest integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IntSpec {
    bits: u8,
    signed: bool,
}

impl IntSpec {
    pub const I8: IntSpec = IntSpec {
        bits: 8,
        signed: true,
    };
    pub const I16: IntSpec = IntSpec {
        bits: 16,
        signed: true,
    };
    pub const I32: IntSpec = IntSpec {
        bits: 32,
        signed: true,
    };
    pub const I64: IntSpec = IntSpec {
        bits: 64,
        signed: true,
    };
    pub const U8: IntSpec = IntSpec {
        bits: 8,
        signed: false,
    };
    pub const U16: IntSpec = IntSpec {
        bits: 16,
        signed: false,
    };
    pub const U32: IntSpec = IntSpec {
        bits: 32,
        signed: false,
    };
    pub const U64: IntSpec = IntSpec {
        bits: 64,
        signed: false,
    };

    pub const ALL: [IntSpec; 8] = [
        Self::I8,
        Self::I16,
        Self::I32,
        Self::I64,
        Self::U8,
        Self::U16,
        Self::U32,
        Self::U64,
    ];

    pub fn new(bits: u8, signed: bool) -> Result<Self> {
        match bits {
            8 | 16 | 32 | 64 => Ok(IntSpec { bits, signed }),
            _ => Err(Error::config(
                "/spec",
                format!("unsupported integer width {bits}"),
            )),
        }
    }

    pub fn bits(self) -> u32 {
        u32::from(self.bits)
    }

    pub fn bytes(self) -> usize {
        usize::from(self.bits / 8)
    }

    pub fn signed(self) -> bool {
        self.signed
    }

    pub fn min(self) -> i128 {
        if self.signed {
            -(1i128 << (self.bits - 1))
        } else {
            0
        }
    }

    pub fn max(self) -> i128 {
        if self.signed {
            (1i128 << (self.bits - 1)) - 1
        } else {
            (1i128 << self.bits) - 1
        }
    }

    pub fn contains(self, value: i128) -> bool {
        (self.min()..=self.max()).contains(&value)
    }

    /// Little-endian guest representation.
    pub fn to_le_bytes(self, value: i128) -> Vec<u8> {
        value.to_le_bytes()[..self.bytes()].to_vec()
    }

    /// Read a little-endian guest value, sign-extending when signed.
    pub fn from_le_bytes(self, bytes: &[u8]) -> i128 {
        let mut buf = [0u8; 16];
        buf[..bytes.len()].copy_from_slice(bytes);
        let raw = i128::from_le_bytes(buf);
        let shift = 128 - self.bits();
        if self.signed {
            (raw << shift) >> shift
        } else {
            raw
        }
    }
}

impl fmt::Display for IntSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.signed { 'i' } else { 'u' }, self.bits)
    }
}

impl FromStr for IntSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("/spec", format!("invalid integer spec `{s}`"));
        let signed = match s.chars().next() {
            Some('i') => true,
            Some('u') => false,
            _ => return Err(bad()),
        };
        let bits: u8 = s[1..].parse().map_err(|_| bad())?;
        IntSpec::new(bits, signed).map_err(|_| bad())
    }
}

impl TryFrom<String> for IntSpec {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<IntSpec> for String {
    fn from(value: IntSpec) -> String {
        value.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UbKind {
    AddOverflow,
    SubOverflow,
    MulOverflow,
    DivByZero,
    DivOverflow,
    ShiftRange,
    Misaligned,
    NullDeref,
    BoolRange,
    EnumRange,
    Truncation,
}

impl UbKind {
    pub const ALL: [UbKind; 11] = [
        UbKind::AddOverflow,
        UbKind::SubOverflow,
        UbKind::MulOverflow,
        UbKind::DivByZero,
        UbKind::DivOverflow,
        UbKind::ShiftRange,
        UbKind::Misaligned,
        UbKind::NullDeref,
        UbKind::BoolRange,
        UbKind::EnumRange,
        UbKind::Truncation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UbKind::AddOverflow => "ADD_OVERFLOW",
            UbKind::SubOverflow => "SUB_OVERFLOW",
            UbKind::MulOverflow => "MUL_OVERFLOW",
            UbKind::DivByZero => "DIV_BY_ZERO",
            UbKind::DivOverflow => "DIV_OVERFLOW",
            UbKind::ShiftRange => "SHIFT_RANGE",
            UbKind::Misaligned => "MISALIGNED",
            UbKind::NullDeref => "NULL_DEREF",
            UbKind::BoolRange => "BOOL_RANGE",
            UbKind::EnumRange => "ENUM_RANGE",
            UbKind::Truncation => "TRUNCATION",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UbViolation {
    pub kind: UbKind,
    pub operands: Vec<i128>,
    pub spec: Option<IntSpec>,
}

impl UbViolation {
    fn new(kind: UbKind, operands: &[i128], spec: Option<IntSpec>) -> Self {
        UbViolation {
            kind,
            operands: operands.to_vec(),
            spec,
        }
    }

    pub fn describe(&self) -> String {
        let ops: Vec<String> = self.operands.iter().map(i128::to_string).collect();
        match self.spec {
            Some(spec) => format!(
                "{} operands=[{}] spec={spec}",
                self.kind.name(),
                ops.join(",")
            ),
            None => format!("{} operands=[{}]", self.kind.name(), ops.join(",")),
        }
    }
}

pub type UbResult<T> = std::result::Result<T, UbViolation>;

/// Implicit conversion of an operand into its declared type.
fn operand(value: i128, spec: IntSpec) -> UbResult<()> {
    if spec.contains(value) {
        Ok(())
    } else {
        Err(UbViolation::new(UbKind::Truncation, &[value], Some(spec)))
    }
}

trait Native: Copy {
    fn from_i128(v: i128) -> Self;
    fn to_i128(self) -> i128;
    fn checked(op: ArithOp, a: Self, b: Self) -> Option<Self>;
    fn wrapping(op: ArithOp, a: Self, b: Self) -> Self;
    fn checked_div(a: Self, b: Self) -> Option<Self>;
    fn shl_exact(a: Self, s: u32) -> Option<Self>;
    fn shl_wrapping(a: Self, s: u32) -> Self;
}

macro_rules! native {
    ($($t:ty),*) => {$(
        impl Native for $t {
            fn from_i128(v: i128) -> Self {
                v as $t
            }
            fn to_i128(self) -> i128 {
                self as i128
            }
            fn checked(op: ArithOp, a: Self, b: Self) -> Option<Self> {
                match op {
                    ArithOp::Add => a.checked_add(b),
                    ArithOp::Sub => a.checked_sub(b),
                    ArithOp::Mul => a.checked_mul(b),
                }
            }
            fn wrapping(op: ArithOp, a: Self, b: Self) -> Self {
                match op {
                    ArithOp::Add => a.wrapping_add(b),
                    ArithOp::Sub => a.wrapping_sub(b),
                    ArithOp::Mul => a.wrapping_mul(b),
                }
            }
            fn checked_div(a: Self, b: Self) -> Option<Self> {
                a.checked_div(b)
            }
            fn shl_exact(a: Self, s: u32) -> Option<Self> {
                let shifted = a.wrapping_shl(s);
                (shifted.wrapping_shr(s) == a).then_some(shifted)
            }
            fn shl_wrapping(a: Self, s: u32) -> Self {
                a.wrapping_shl(s)
            }
        }
    )*};
}

native!(i8, i16, i32, i64, u8, u16, u32, u64);

macro_rules! with_native {
    ($spec:expr, $f:ident($($arg:expr),*)) => {
        match ($spec.bits, $spec.signed) {
            (8, true) => $f::<i8>($($arg),*),
            (16, true) => $f::<i16>($($arg),*),
            (32, true) => $f::<i32>($($arg),*),
            (64, true) => $f::<i64>($($arg),*),
            (8, false) => $f::<u8>($($arg),*),
            (16, false) => $f::<u16>($($arg),*),
            (32, false) => $f::<u32>($($arg),*),
            (64, false) => $f::<u64>($($arg),*),
            _ => unreachable!("IntSpec widths are validated"),
        }
    };
}

fn arith_native<T: Native>(op: ArithOp, a: i128, b: i128, wrap: bool) -> Option<i128> {
    let (a, b) = (T::from_i128(a), T::from_i128(b));
    if wrap {
        Some(T::wrapping(op, a, b).to_i128())
    } else {
        T::checked(op, a, b).map(T::to_i128)
    }
}

fn div_native<T: Native>(a: i128, b: i128) -> Option<i128> {
    T::checked_div(T::from_i128(a), T::from_i128(b)).map(T::to_i128)
}

fn shl_native<T: Native>(a: i128, s: u32, wrap: bool) -> Option<i128> {
    let a = T::from_i128(a);
    if wrap {
        Some(T::shl_wrapping(a, s).to_i128())
    } else {
        T::shl_exact(a, s).map(T::to_i128)
    }
}

/// Overflow policy for unsigned arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UbConfig {
    /// Report unsigned wraparound instead of wrapping silently.
    pub strict_unsigned: bool,
}

pub fn checked_arith(
    op: ArithOp,
    a: i128,
    b: i128,
    spec: IntSpec,
    config: UbConfig,
) -> UbResult<i128> {
    operand(a, spec)?;
    operand(b, spec)?;
    let wrap = !spec.signed && !config.strict_unsigned;
    with_native!(spec, arith_native(op, a, b, wrap)).ok_or_else(|| {
        let kind = match op {
            ArithOp::Add => UbKind::AddOverflow,
            ArithOp::Sub => UbKind::SubOverflow,
            ArithOp::Mul => UbKind::MulOverflow,
        };
        UbViolation::new(kind, &[a, b], Some(spec))
    })
}

/// Division truncating toward zero.
pub fn checked_div(a: i128, b: i128, spec: IntSpec) -> UbResult<i128> {
    operand(a, spec)?;
    operand(b, spec)?;
    if b == 0 {
        return Err(UbViolation::new(UbKind::DivByZero, &[a, b], Some(spec)));
    }
    with_native!(spec, div_native(a, b))
        .ok_or_else(|| UbViolation::new(UbKind::DivOverflow, &[a, b], Some(spec)))
}

/// Left shift. Signed results must equal `a * 2^s` exactly.
pub fn checked_shift(a: i128, s: i128, spec: IntSpec, config: UbConfig) -> UbResult<i128> {
    operand(a, spec)?;
    if s < 0 || s >= i128::from(spec.bits()) {
        return Err(UbViolation::new(UbKind::ShiftRange, &[a, s], Some(spec)));
    }
    let wrap = !spec.signed && !config.strict_unsigned;
    with_native!(spec, shl_native(a, s as u32, wrap))
        .ok_or_else(|| UbViolation::new(UbKind::ShiftRange, &[a, s], Some(spec)))
}

/// Narrowing conversion; the value must survive unchanged.
pub fn checked_trunc(a: i128, from: IntSpec, to: IntSpec) -> UbResult<i128> {
    operand(a, from)?;
    if to.contains(a) {
        Ok(a)
    } else {
        Err(UbViolation::new(UbKind::Truncation, &[a], Some(to)))
    }
}

/// Float to integer cast, truncating toward zero.
pub fn checked_float_to_int(value: f64, to: IntSpec) -> UbResult<i128> {
    let truncated = value.trunc();
    // Both bounds are powers of two (or zero) and exact as f64.
    let lo = to.min() as f64;
    let hi_exclusive = (to.max() + 1) as f64;
    if value.is_finite() && truncated >= lo && truncated < hi_exclusive {
        Ok(truncated as i128)
    } else {
        Err(UbViolation::new(
            UbKind::Truncation,
            &[value.to_bits() as i128],
            Some(to),
        ))
    }
}

/// A validated power-of-two alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Alignment(u64);

impl Alignment {
    pub fn new(align: u64) -> Result<Self> {
        if align.is_power_of_two() {
            Ok(Alignment(align))
        } else {
            Err(Error::config(
                "/align",
                format!("alignment {align} is not a power of two"),
            ))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl TryFrom<u64> for Alignment {
    type Error = Error;

    fn try_from(value: u64) -> Result<Self> {
        Alignment::new(value)
    }
}

impl From<Alignment> for u64 {
    fn from(value: Alignment) -> u64 {
        value.0
    }
}

pub fn check_align(addr: GuestAddr, align: Alignment) -> UbResult<()> {
    if addr.offset.is_multiple_of(align.get()) {
        Ok(())
    } else {
        Err(UbViolation::new(
            UbKind::Misaligned,
            &[i128::from(addr.offset), i128::from(align.get())],
            None,
        ))
    }
}

pub fn check_nonnull(addr: GuestAddr) -> UbResult<()> {
    if addr.is_null() {
        Err(UbViolation::new(UbKind::NullDeref, &[0], None))
    } else {
        Ok(())
    }
}

pub fn check_bool(value: i128) -> UbResult<()> {
    if value == 0 || value == 1 {
        Ok(())
    } else {
        Err(UbViolation::new(UbKind::BoolRange, &[value], None))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumSpec {
    pub name: String,
    allowed: BTreeSet<i128>,
}

impl EnumSpec {
    pub fn new(name: impl Into<String>, allowed: impl IntoIterator<Item = i128>) -> Result<Self> {
        let name = name.into();
        let allowed: BTreeSet<i128> = allowed.into_iter().collect();
        if allowed.is_empty() {
            return Err(Error::config(
                "/allowed",
                format!("enum `{name}` has no values"),
            ));
        }
        Ok(EnumSpec { name, allowed })
    }

    pub fn allows(&self, value: i128) -> bool {
        self.allowed.contains(&value)
    }
}

pub fn check_enum(value: i128, spec: &EnumSpec) -> UbResult<()> {
    if spec.allows(value) {
        Ok(())
    } else {
        Err(UbViolation::new(UbKind::EnumRange, &[value], None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guest_memory::PartitionId;

    const LAX: UbConfig = UbConfig {
        strict_unsigned: false,
    };

    fn kind<T>(r: UbResult<T>) -> UbKind {
        r.err().expect("expected a violation").kind
    }

    #[test]
    fn arith_examples() {
        let max = i128::from(i32::MAX);
        assert_eq!(
            kind(checked_arith(ArithOp::Add, max, 1, IntSpec::I32, LAX)),
            UbKind::AddOverflow
        );
        assert_eq!(checked_arith(ArithOp::Add, 1, 2, IntSpec::I32, LAX), Ok(3));
        assert_eq!(
            kind(checked_arith(ArithOp::Mul, 65535, 65537, IntSpec::I32, LAX)),
            UbKind::MulOverflow
        );
        assert_eq!(
            checked_arith(ArithOp::Mul, 65535, 65537, IntSpec::I64, LAX),
            Ok(4_294_967_295)
        );
    }

    #[test]
    fn unsigned_wraps_unless_strict() {
        assert_eq!(checked_arith(ArithOp::Sub, 0, 1, IntSpec::U8, LAX), Ok(255));
        let strict = UbConfig {
            strict_unsigned: true,
        };
        assert_eq!(
            kind(checked_arith(ArithOp::Sub, 0, 1, IntSpec::U8, strict)),
            UbKind::SubOverflow
        );
    }

    #[test]
    fn div_examples() {
        assert_eq!(kind(checked_div(1, 0, IntSpec::I32)), UbKind::DivByZero);
        assert_eq!(
            kind(checked_div(i128::from(i32::MIN), -1, IntSpec::I32)),
            UbKind::DivOverflow
        );
        assert_eq!(checked_div(7, 2, IntSpec::I32), Ok(3));
        assert_eq!(checked_div(-7, 2, IntSpec::I32), Ok(-3));
    }

    #[test]
    fn shift_examples() {
        assert_eq!(
            kind(checked_shift(1, 32, IntSpec::I32, LAX)),
            UbKind::ShiftRange
        );
        assert_eq!(
            kind(checked_shift(1, -1, IntSpec::I32, LAX)),
            UbKind::ShiftRange
        );
        assert_eq!(
            kind(checked_shift(1, 31, IntSpec::I32, LAX)),
            UbKind::ShiftRange
        );
        assert_eq!(
            checked_shift(-1, 31, IntSpec::I32, LAX),
            Ok(i128::from(i32::MIN))
        );
        assert_eq!(checked_shift(3, 4, IntSpec::U8, LAX), Ok(48));
        assert_eq!(checked_shift(0x81, 1, IntSpec::U8, LAX), Ok(2));
    }

    #[test]
    fn pointer_and_range_checks() {
        let at = |o| GuestAddr::new(PartitionId(1), o);
        let four = Alignment::new(4).unwrap();
        assert_eq!(kind(check_align(at(5), four)), UbKind::Misaligned);
        assert!(check_align(at(8), four).is_ok());
        assert!(Alignment::new(3).is_err());
        assert_eq!(kind(check_nonnull(at(0))), UbKind::NullDeref);
        assert!(check_nonnull(at(16)).is_ok());
        assert_eq!(kind(check_bool(2)), UbKind::BoolRange);
        assert!(check_bool(1).is_ok());
        let color = EnumSpec::new("color", [0, 1, 2]).unwrap();
        assert_eq!(kind(check_enum(3, &color)), UbKind::EnumRange);
        assert!(check_enum(2, &color).is_ok());
        assert!(EnumSpec::new("empty", []).is_err());
    }

    #[test]
    fn truncation_and_float_casts() {
        assert_eq!(checked_trunc(127, IntSpec::I32, IntSpec::I8), Ok(127));
        assert_eq!(
            kind(checked_trunc(128, IntSpec::I32, IntSpec::I8)),
            UbKind::Truncation
        );
        assert_eq!(
            kind(checked_trunc(-1, IntSpec::I32, IntSpec::U32)),
            UbKind::Truncation
        );
        assert_eq!(checked_float_to_int(-1.9, IntSpec::I8), Ok(-1));
        assert_eq!(checked_float_to_int(255.99, IntSpec::U8), Ok(255));
        assert_eq!(
            kind(checked_float_to_int(256.0, IntSpec::U8)),
            UbKind::Truncation
        );
        assert_eq!(
            kind(checked_float_to_int(f64::NAN, IntSpec::I32)),
            UbKind::Truncation
        );
        assert_eq!(
            checked_float_to_int(-9.2e18, IntSpec::I64),
            Ok(-9_200_000_000_000_000_000)
        );
    }

    #[test]
    fn operands_outside_spec_are_truncations() {
        assert_eq!(
            kind(checked_arith(ArithOp::Add, 300, 1, IntSpec::U8, LAX)),
            UbKind::Truncation
        );
    }

    #[test]
    fn spec_parsing_and_le_bytes() {
        assert_eq!("i32".parse::<IntSpec>().unwrap(), IntSpec::I32);
        assert!("i12".parse::<IntSpec>().is_err());
        assert!("x8".parse::<IntSpec>().is_err());
        assert_eq!(IntSpec::I16.to_le_bytes(-2), vec![0xFE, 0xFF]);
        assert_eq!(IntSpec::I16.from_le_bytes(&[0xFE, 0xFF]), -2);
        assert_eq!(IntSpec::U16.from_le_bytes(&[0xFE, 0xFF]), 0xFFFE);
    }
}
