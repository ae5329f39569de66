// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{call_site, thread_status_sizes, thread_status_spec};
use partsan::guest_memory::MemoryViolation;
use partsan::harness::builtins::THREAD_STATUS_TEMPLATE;
use partsan::msan_shadow::{Origin, UseSite};
use partsan::syscall_annotations::{enforce_post, enforce_pre, parse_template, resolve_sizes};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn thread_status_template_parses_to_the_documented_spec() {
    assert_eq!(
        parse_template(THREAD_STATUS_TEMPLATE).unwrap(),
        thread_status_spec()
    );
}

const OTHER_TEMPLATES: &[&str] = &[
    "syscall_declare (int, jet_yield)",
    "//!PRE: msan_check (buf, 16)\nsyscall_declare (int, jet_write, char*, buf, size_t, len)",
    "//!USER_NAME: jet_port\n//!PRE: msan_check (*msg, sizeof (*msg))\n//!PRE: msan_check (&id, sizeof (id))\n\
     //!POST: msan_unpoison (msg, sizeof (port_msg_t))\nsyscall_declare (jet_ret_t, jet_port_recv, port_id_t, id, port_msg_t**, msg)",
];

fn corpus() -> Vec<&'static str> {
    std::iter::once(THREAD_STATUS_TEMPLATE)
        .chain(OTHER_TEMPLATES.iter().copied())
        .collect()
}

#[test]
fn render_is_normalization_stable_on_the_corpus() {
    for text in corpus() {
        let spec = parse_template(text).unwrap();
        let rendered = spec.render();
        assert_eq!(parse_template(&rendered).unwrap(), spec, "{rendered}");
        assert_eq!(parse_template(&rendered).unwrap().render(), rendered);
    }
}

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> String {
    const ALPHABET: &[char] = &[
        '(', ')', ',', '*', '&', '/', '!', ':', ' ', '\n', 'a', '_', '9', 'é', '#',
    ];
    const WORDS: &[&str] = &[
        "sizeof",
        "msan_check",
        "//!PRE:",
        "//!POST:",
        "//!BOGUS:",
        "syscall_declare",
        "thread_id",
    ];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.gen_range(1..=4) {
        let at = rng.gen_range(0..=chars.len());
        match rng.gen_range(0..5) {
            0 if at < chars.len() => {
                chars.remove(at);
            }
            1 => chars.insert(at, *ALPHABET.choose(rng).unwrap()),
            2 => {
                let word = WORDS.choose(rng).unwrap();
                for (i, c) in word.chars().enumerate() {
                    chars.insert(at + i, c);
                }
            }
            3 if at < chars.len() => chars.truncate(at),
            _ if chars.len() > 1 => {
                let other = rng.gen_range(0..chars.len());
                let at = at.min(chars.len() - 1);
                chars.swap(at, other);
            }
            _ => {}
        }
    }
    chars.into_iter().collect()
}

#[test]
fn ten_thousand_mutated_templates_never_crash() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c);
    let corpus = corpus();
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..10_000 {
        let seed_text = *corpus.choose(&mut rng).unwrap();
        let text = mutate(&mut rng, seed_text);
        let outcome = std::panic::catch_unwind(|| parse_template(&text));
        let result = outcome.unwrap_or_else(|_| panic!("parser panicked on {text:?}"));
        assert_eq!(
            parse_template(&text),
            result,
            "non-deterministic on {text:?}"
        );
        match result {
            Ok(spec) => {
                accepted += 1;
                assert_eq!(parse_template(&spec.render()).unwrap(), spec, "{text:?}");
            }
            Err(e) => {
                rejected += 1;
                let lines = text.split('\n').count();
                assert!(e.line >= 1 && e.line <= lines, "{e} for {text:?}");
                assert!(e.column >= 1, "{e} for {text:?}");
                assert!(!e.message.is_empty());
            }
        }
    }
    assert!(
        accepted > 0 && rejected > 0,
        "accepted {accepted}, rejected {rejected}"
    );
}

#[test]
fn success_path_defines_every_output() {
    let (mut mem, bind) = call_site();
    let resolved = resolve_sizes(&thread_status_spec(), &thread_status_sizes(), &bind).unwrap();
    assert_eq!(
        resolved.post.iter().map(|c| c.len).collect::<Vec<_>>(),
        vec![32, 8, 16]
    );
    mem.checked_write(
        bind["thread_id"].addr_of.unwrap(),
        &7u32.to_le_bytes(),
        Origin::Step(0),
    )
    .unwrap();
    enforce_pre(&resolved, &mut mem).unwrap();
    enforce_post(&resolved, &mut mem, true).unwrap();
    for (label, len) in [("name", 32), ("entry", 8), ("status", 16)] {
        let base = mem.region(label).unwrap().base;
        mem.msan_check(base, len, UseSite::Branch).unwrap();
    }
}

#[test]
fn uninitialized_thread_id_is_caught_before_the_call() {
    let (mut mem, bind) = call_site();
    let resolved = resolve_sizes(&thread_status_spec(), &thread_status_sizes(), &bind).unwrap();
    match enforce_pre(&resolved, &mut mem) {
        Err(MemoryViolation::Msan(v)) => {
            assert_eq!(v.context, UseSite::SyscallPre);
            assert_eq!(v.addr, bind["thread_id"].addr_of.unwrap());
        }
        other => panic!("expected a SYSCALL_PRE violation, got {other:?}"),
    }
}

#[test]
fn failed_call_leaves_outputs_undefined() {
    let (mut mem, bind) = call_site();
    let resolved = resolve_sizes(&thread_status_spec(), &thread_status_sizes(), &bind).unwrap();
    mem.checked_write(
        bind["thread_id"].addr_of.unwrap(),
        &[1, 0, 0, 0],
        Origin::Step(0),
    )
    .unwrap();
    enforce_pre(&resolved, &mut mem).unwrap();
    enforce_post(&resolved, &mut mem, false).unwrap();
    let status = mem.region("status").unwrap().base;
    assert!(mem.msan_check(status, 16, UseSite::Branch).is_err());
}
