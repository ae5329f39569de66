// SPDX-License-Identifier: Apache-2.0

//! Annotated syscall templates.
//!
//! A template is a run of `//!` annotation lines followed by one
//! `syscall_declare(...)` form:
//!
//! ```text
//! //!USER_NAME: jet_thread_status
//! //!PRE: msan_check (
//!     &thread_id, sizeof (thread_id));
//! //!POST: msan_unpoison (
//!     name, sizeof (max_name_t));
//! syscall_declare (
//!    jet_syscall_thread_status_t,
//!    jet_thread_get_status,
//!    jet_thread_id_t, thread_id,
//!    max_name_t, name)
//! ```
//!
//! Whitespace, including newlines, is insignificant between tokens, so a
//! directive may continue on the following lines. Inside `sizeof (x)` the
//! name is looked up as a parameter first and as a type otherwise.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guest_memory::{GuestAddr, MemoryViolation, PartitionMemory};
use crate::msan_shadow::UseSite;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckKind {
    MsanCheck,
    MsanUnpoison,
}

impl CheckKind {
    fn keyword(self) -> &'static str {
        match self {
            CheckKind::MsanCheck => "msan_check",
            CheckKind::MsanUnpoison => "msan_unpoison",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Target {
    /// `name`: the pointer value held by the parameter.
    Param(String),
    /// `&name`: where the parameter itself is stored.
    AddrOf(String),
    /// `*name`: the pointer stored where the parameter points.
    Deref(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SizeExpr {
    SizeofParam(String),
    SizeofDeref(String),
    SizeofType(String),
    Literal(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckDirective {
    pub phase: Phase,
    pub kind: CheckKind,
    pub target: Target,
    pub size: SizeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub type_name: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallSpec {
    pub user_name: Option<String>,
    pub return_type: String,
    pub syscall_name: String,
    pub params: Vec<Param>,
    pub pre_checks: Vec<CheckDirective>,
    pub post_checks: Vec<CheckDirective>,
}

impl SyscallSpec {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Canonical template text; parses back to the same spec.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(user) = &self.user_name {
            out.push_str(&format!("//!USER_NAME: {user}\n"));
        }
        for d in self.pre_checks.iter().chain(&self.post_checks) {
            out.push_str(&format!("{d}\n"));
        }
        out.push_str(&format!(
            "syscall_declare ({}, {}",
            self.return_type, self.syscall_name
        ));
        for p in &self.params {
            out.push_str(&format!(", {}, {}", p.type_name, p.name));
        }
        out.push_str(")\n");
        out
    }
}

impl fmt::Display for CheckDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let phase = match self.phase {
            Phase::Pre => "PRE",
            Phase::Post => "POST",
        };
        let target = match &self.target {
            Target::Param(n) => n.clone(),
            Target::AddrOf(n) => format!("&{n}"),
            Target::Deref(n) => format!("*{n}"),
        };
        let size = match &self.size {
            SizeExpr::SizeofParam(n) | SizeExpr::SizeofType(n) => format!("sizeof ({n})"),
            SizeExpr::SizeofDeref(n) => format!("sizeof (*{n})"),
            SizeExpr::Literal(v) => v.to_string(),
        };
        write!(f, "//!{phase}: {} ({target}, {size});", self.kind.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Annotation,
    Ident(String),
    Int(u64),
    Punct(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Annotation => f.write_str("`//!`"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Punct(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn error(self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

fn tokenize(text: &str) -> std::result::Result<(Vec<(Tok, Pos)>, Pos), ParseError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let mut pos = Pos { line: 1, column: 1 };
    let bump = |pos: &mut Pos, c: char| {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else {
            pos.column += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let start = pos;
        if c.is_whitespace() {
            chars.next();
            bump(&mut pos, c);
        } else if c == '/' {
            let mut lead = String::new();
            while lead.len() < 3 {
                match chars.peek() {
                    Some(&c @ ('/' | '!')) if lead.len() < 2 || c == '!' => {
                        lead.push(c);
                        chars.next();
                        bump(&mut pos, c);
                    }
                    _ => break,
                }
            }
            if lead != "//!" {
                return Err(start.error("comments are not allowed outside `//!` annotations"));
            }
            tokens.push((Tok::Annotation, start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(&c) = chars.peek() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                ident.push(c);
                chars.next();
                bump(&mut pos, c);
            }
            tokens.push((Tok::Ident(ident), start));
        } else if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(&c) = chars.peek() {
                if !c.is_ascii_digit() {
                    break;
                }
                digits.push(c);
                chars.next();
                bump(&mut pos, c);
            }
            let value = digits
                .parse()
                .map_err(|_| start.error(format!("integer `{digits}` is too large")))?;
            tokens.push((Tok::Int(value), start));
        } else if "():,&*;".contains(c) {
            chars.next();
            bump(&mut pos, c);
            tokens.push((Tok::Punct(c), start));
        } else {
            return Err(start.error(format!("unexpected character `{c}`")));
        }
    }
    Ok((tokens, pos))
}

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    index: usize,
    eof: Pos,
}

/// A name reference waiting to be resolved against the declaration.
struct Pending {
    name: String,
    pos: Pos,
}

struct RawDirective {
    phase: Phase,
    kind: CheckKind,
    target: (Target, Pos),
    size: RawSize,
}

enum RawSize {
    Named(Pending),
    Deref(Pending),
    Literal(u64),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.index).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.tokens.get(self.index).map_or(self.eof, |(_, p)| *p)
    }

    fn next(&mut self, expected: &str) -> std::result::Result<(Tok, Pos), ParseError> {
        match self.tokens.get(self.index) {
            Some(tok) => {
                self.index += 1;
                Ok(tok.clone())
            }
            None => Err(self
                .eof
                .error(format!("expected {expected}, found end of input"))),
        }
    }

    fn punct(&mut self, c: char) -> std::result::Result<Pos, ParseError> {
        match self.next(&format!("`{c}`"))? {
            (Tok::Punct(p), pos) if p == c => Ok(pos),
            (tok, pos) => Err(pos.error(format!("expected `{c}`, found {tok}"))),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.index += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> std::result::Result<(String, Pos), ParseError> {
        match self.next(what)? {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (tok, pos) => Err(pos.error(format!("expected {what}, found {tok}"))),
        }
    }

    fn call(&mut self, phase: Phase) -> std::result::Result<RawDirective, ParseError> {
        let (name, pos) = self.ident("`msan_check` or `msan_unpoison`")?;
        let kind = match name.as_str() {
            "msan_check" => CheckKind::MsanCheck,
            "msan_unpoison" => CheckKind::MsanUnpoison,
            other => return Err(pos.error(format!("unknown check `{other}`"))),
        };
        self.punct('(')?;
        let target_pos = self.pos();
        let target = if self.eat('&') {
            Target::AddrOf(self.ident("parameter name")?.0)
        } else if self.eat('*') {
            Target::Deref(self.ident("parameter name")?.0)
        } else {
            Target::Param(self.ident("parameter name")?.0)
        };
        self.punct(',')?;
        let size = match self.next("size expression")? {
            (Tok::Int(v), _) => RawSize::Literal(v),
            (Tok::Ident(s), _) if s == "sizeof" => {
                self.punct('(')?;
                let deref = self.eat('*');
                let (name, pos) = self.ident("name")?;
                self.punct(')')?;
                let pending = Pending { name, pos };
                if deref {
                    RawSize::Deref(pending)
                } else {
                    RawSize::Named(pending)
                }
            }
            (tok, pos) => {
                return Err(pos.error(format!("expected `sizeof` or an integer, found {tok}")))
            }
        };
        self.punct(')')?;
        self.eat(';');
        Ok(RawDirective {
            phase,
            kind,
            target: (target, target_pos),
            size,
        })
    }

    fn type_name(&mut self) -> std::result::Result<String, ParseError> {
        let (mut ty, _) = self.ident("type name")?;
        while self.eat('*') {
            ty.push('*');
        }
        Ok(ty)
    }
}

/// Parse one template into a [`SyscallSpec`].
pub fn parse_template(text: &str) -> std::result::Result<SyscallSpec, ParseError> {
    let (tokens, eof) = tokenize(text)?;
    let mut p = Parser {
        tokens,
        index: 0,
        eof,
    };
    let mut user_name = None;
    let mut raw = Vec::new();
    while p.peek() == Some(&Tok::Annotation) {
        p.index += 1;
        let (key, key_pos) = p.ident("annotation key")?;
        p.punct(':')?;
        match key.as_str() {
            "USER_NAME" => {
                let (name, _) = p.ident("user name")?;
                if user_name.replace(name).is_some() {
                    return Err(key_pos.error("duplicate USER_NAME"));
                }
            }
            "PRE" => raw.push(p.call(Phase::Pre)?),
            "POST" => raw.push(p.call(Phase::Post)?),
            other => return Err(key_pos.error(format!("unknown annotation key `{other}`"))),
        }
    }

    let (decl, decl_pos) = p.ident("`syscall_declare`")?;
    if decl != "syscall_declare" {
        return Err(decl_pos.error(format!("expected `syscall_declare`, found `{decl}`")));
    }
    p.punct('(')?;
    let (return_type, _) = p.ident("return type")?;
    p.punct(',')?;
    let (syscall_name, _) = p.ident("syscall name")?;
    let mut params: Vec<Param> = Vec::new();
    while p.eat(',') {
        let type_name = p.type_name()?;
        p.punct(',')?;
        let (name, pos) = p.ident("parameter name")?;
        if params.iter().any(|q| q.name == name) {
            return Err(pos.error(format!("duplicate parameter `{name}`")));
        }
        params.push(Param { type_name, name });
    }
    p.punct(')')?;
    p.eat(';');
    if let Some((tok, pos)) = p.tokens.get(p.index) {
        return Err(pos.error(format!("unexpected {tok} after the declaration")));
    }

    let is_param = |n: &str| params.iter().any(|q| q.name == n);
    let require = |n: &str, pos: Pos| {
        if is_param(n) {
            Ok(n.to_string())
        } else {
            Err(pos.error(format!("`{n}` is not a parameter of `{syscall_name}`")))
        }
    };
    let mut pre_checks = Vec::new();
    let mut post_checks = Vec::new();
    for d in raw {
        let (target, target_pos) = d.target;
        match &target {
            Target::Param(n) | Target::AddrOf(n) | Target::Deref(n) => {
                require(n, target_pos)?;
            }
        }
        let size = match d.size {
            RawSize::Literal(v) => SizeExpr::Literal(v),
            RawSize::Deref(Pending { name, pos }) => SizeExpr::SizeofDeref(require(&name, pos)?),
            RawSize::Named(Pending { name, .. }) if is_param(&name) => SizeExpr::SizeofParam(name),
            RawSize::Named(Pending { name, .. }) => SizeExpr::SizeofType(name),
        };
        let directive = CheckDirective {
            phase: d.phase,
            kind: d.kind,
            target,
            size,
        };
        match d.phase {
            Phase::Pre => pre_checks.push(directive),
            Phase::Post => post_checks.push(directive),
        }
    }
    Ok(SyscallSpec {
        user_name,
        return_type,
        syscall_name,
        params,
        pre_checks,
        post_checks,
    })
}

/// Type name to size in bytes.
pub type TypeSizeTable = BTreeMap<String, u64>;

/// Where a parameter lives in guest memory for one call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBinding {
    /// Storage of the parameter itself (`&p`).
    pub addr_of: Option<GuestAddr>,
    /// Memory the parameter points at (`p`).
    pub value: Option<GuestAddr>,
    /// Memory the pointee points at (`*p`).
    pub deref: Option<GuestAddr>,
    /// `sizeof (p)`; defaults to the declared type's size.
    pub size: Option<u64>,
    /// `sizeof (*p)`; defaults to the size of the type without one `*`.
    pub deref_size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedCheck {
    pub kind: CheckKind,
    pub addr: GuestAddr,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSpec {
    pub syscall_name: String,
    pub pre: Vec<ResolvedCheck>,
    pub post: Vec<ResolvedCheck>,
}

fn type_size(table: &TypeSizeTable, name: &str) -> Result<u64> {
    table
        .get(name)
        .copied()
        .ok_or_else(|| Error::UnknownType(name.to_string()))
}

/// Reduce every target to an address and every size to a byte count.
pub fn resolve_sizes(
    spec: &SyscallSpec,
    table: &TypeSizeTable,
    bindings: &BTreeMap<String, ParamBinding>,
) -> Result<ResolvedSpec> {
    let binding = |name: &str| {
        bindings
            .get(name)
            .ok_or_else(|| Error::Bind(name.to_string()))
    };
    let declared = |name: &str| {
        spec.param(name)
            .map(|p| p.type_name.as_str())
            .ok_or_else(|| Error::Bind(name.to_string()))
    };
    let resolve = |d: &CheckDirective| -> Result<ResolvedCheck> {
        let addr = match &d.target {
            Target::AddrOf(n) => binding(n)?.addr_of,
            Target::Param(n) => binding(n)?.value,
            Target::Deref(n) => binding(n)?.deref,
        };
        let name = match &d.target {
            Target::AddrOf(n) | Target::Param(n) | Target::Deref(n) => n,
        };
        let addr =
            addr.ok_or_else(|| Error::Bind(format!("{name} ({})", target_role(&d.target))))?;
        let len = match &d.size {
            SizeExpr::Literal(v) => *v,
            SizeExpr::SizeofType(t) => type_size(table, t)?,
            SizeExpr::SizeofParam(n) => match bindings.get(n).and_then(|b| b.size) {
                Some(size) => size,
                None => type_size(table, declared(n)?)?,
            },
            SizeExpr::SizeofDeref(n) => match bindings.get(n).and_then(|b| b.deref_size) {
                Some(size) => size,
                None => {
                    let ty = declared(n)?;
                    let pointee = ty
                        .strip_suffix('*')
                        .ok_or_else(|| Error::UnknownType(format!("*{ty}")))?;
                    type_size(table, pointee)?
                }
            },
        };
        Ok(ResolvedCheck {
            kind: d.kind,
            addr,
            len,
        })
    };
    Ok(ResolvedSpec {
        syscall_name: spec.syscall_name.clone(),
        pre: spec.pre_checks.iter().map(resolve).collect::<Result<_>>()?,
        post: spec
            .post_checks
            .iter()
            .map(resolve)
            .collect::<Result<_>>()?,
    })
}

fn target_role(t: &Target) -> &'static str {
    match t {
        Target::AddrOf(_) => "addr_of",
        Target::Param(_) => "value",
        Target::Deref(_) => "deref",
    }
}

fn apply(
    check: &ResolvedCheck,
    memory: &mut PartitionMemory,
    context: UseSite,
) -> std::result::Result<(), MemoryViolation> {
    match check.kind {
        CheckKind::MsanCheck => memory.msan_check(check.addr, check.len, context),
        CheckKind::MsanUnpoison => Ok(memory.msan_unpoison(check.addr, check.len)?),
    }
}

/// Run the PRE directives in order, stopping at the first violation.
pub fn enforce_pre(
    resolved: &ResolvedSpec,
    memory: &mut PartitionMemory,
) -> std::result::Result<(), MemoryViolation> {
    resolved
        .pre
        .iter()
        .try_for_each(|c| apply(c, memory, UseSite::SyscallPre))
}

/// Run the POST directives, only if the syscall succeeded.
pub fn enforce_post(
    resolved: &ResolvedSpec,
    memory: &mut PartitionMemory,
    syscall_succeeded: bool,
) -> std::result::Result<(), MemoryViolation> {
    if !syscall_succeeded {
        return Ok(());
    }
    resolved
        .post
        .iter()
        .try_for_each(|c| apply(c, memory, UseSite::SyscallPre))
}
