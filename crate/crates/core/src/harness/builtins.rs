// SPDX-License-Identifier: Apache-2.0

//! Built-in fault-injection scenarios.

use serde_json::{json, Value};

use super::generate::{random_clean, RANDOM_CLEAN};
use super::scenario::Scenario;

/// The annotated `jet_thread_get_status` syscall template.
pub const THREAD_STATUS_TEMPLATE: &str =
    include_str!("../../scenarios/templates/jet_thread_status.syscall");

/// Names of the fixed built-ins, in listing order.
pub const BUILTIN_NAMES: &[&str] = &[
    "listing1_overflow",
    "uninit_syscall_param",
    "padding_false_positive",
    "reserved_init_still_poisoned",
    "off_schedule_with_and_without_slowdown",
    "local_timeout_override",
    "get_my_id_regression",
    "port_uninit_send",
    "queueing_fifo",
    "sampling_freshness",
    "ub_catalogue",
    "partition_reset_use_after",
];

fn at(region: &str, offset: i64) -> Value {
    json!({"region": region, "offset": offset})
}

fn byte(value: i64) -> Value {
    json!({"int": {"value": value, "spec": "u8"}})
}

fn listing1_overflow() -> Value {
    json!({
        "name": "listing1_overflow",
        "description": "Three adjacent 16-byte buffers; one byte is written just before and just after the middle one.",
        "partitions": [{"id": 1, "memory_size": 512}],
        "workload": [
            {"op": "ALLOC", "region": "buffer_prev", "size": 16},
            {"op": "ALLOC", "region": "buffer", "size": 16},
            {"op": "ALLOC", "region": "buffer_next", "size": 16},
            {"op": "ALLOC", "region": "sz", "size": 8},
            {"op": "WRITE", "at": at("sz", 0), "data": {"int": {"value": 16, "spec": "u64"}}},
            {"op": "WRITE", "at": at("buffer", -1), "data": byte(1)},
            {"op": "WRITE", "at": at("buffer", 16), "data": byte(1)}
        ],
        "expect": [
            {"kind": "LEFT_REDZONE", "part": 1, "step": 5, "region": "buffer", "offset": -1},
            {"kind": "RIGHT_REDZONE", "part": 1, "step": 6, "region": "buffer", "offset": 16}
        ]
    })
}

fn thread_status_types() -> Value {
    json!({
        "jet_syscall_thread_status_t": 4,
        "jet_thread_id_t": 4,
        "max_name_t": 32,
        "void*": 8,
        "jet_thread_status_t": 16
    })
}

fn uninit_syscall_param() -> Value {
    let call = json!({
        "op": "SYSCALL",
        "syscall": "jet_thread_get_status",
        "bind": {
            "thread_id": {"addr_of": at("thread_id", 0)},
            "name": {"value": at("name", 0)},
            "entry": {"value": at("entry", 0)},
            "status": {"value": at("status", 0)}
        }
    });
    json!({
        "name": "uninit_syscall_param",
        "description": "The thread id is passed before it is set; a second call after setting it succeeds and defines every output.",
        "partitions": [{
            "id": 1,
            "memory_size": 512,
            "regions": [
                {"label": "thread_id", "type": "jet_thread_id_t"},
                {"label": "name", "type": "max_name_t"},
                {"label": "entry", "size": 8},
                {"label": "status", "type": "jet_thread_status_t"}
            ]
        }],
        "types": thread_status_types(),
        "syscalls": [THREAD_STATUS_TEMPLATE],
        "workload": [
            call,
            {"op": "WRITE", "at": at("thread_id", 0), "data": {"int": {"value": 7, "spec": "u32"}}},
            call,
            {"op": "BRANCH_ON", "at": at("name", 0), "len": 32},
            {"op": "BRANCH_ON", "at": at("entry", 0), "len": 8},
            {"op": "BRANCH_ON", "at": at("status", 0), "len": 16}
        ],
        "expect": [
            {"kind": "UNINIT", "part": 1, "step": 0, "region": "thread_id", "offset": 0}
        ]
    })
}

fn padding_false_positive() -> Value {
    json!({
        "name": "padding_false_positive",
        "description": "Two packets with five defined bytes and three padding bytes are compared whole; only the typed one has its padding declared.",
        "partitions": [{
            "id": 1,
            "memory_size": 256,
            "regions": [
                {"label": "pkt", "type": "pkt_t"},
                {"label": "raw_pkt", "size": 8}
            ]
        }],
        "types": {"pkt_t": 8},
        "padding": {"pkt_t": [{"offset": 5, "len": 3}]},
        "workload": [
            {"op": "WRITE", "at": at("pkt", 0), "data": {"hex": "0102030405"}},
            {"op": "WRITE", "at": at("raw_pkt", 0), "data": {"hex": "0102030405"}},
            {"op": "BRANCH_ON", "at": at("pkt", 0), "len": 8},
            {"op": "BRANCH_ON", "at": at("raw_pkt", 0), "len": 8}
        ],
        "expect": [
            {"kind": "UNINIT", "part": 1, "step": 3, "region": "raw_pkt", "offset": 5}
        ]
    })
}

fn reserved_init_still_poisoned() -> Value {
    json!({
        "name": "reserved_init_still_poisoned",
        "description": "A variable filled with the reserved pattern is still undefined; a real store defines it.",
        "partitions": [{"id": 1, "memory_size": 256, "regions": [{"label": "var", "size": 4}]}],
        "reserved_init": {"enabled": true, "pattern": 205},
        "workload": [
            {"op": "WRITE", "at": at("var", 0), "data": {"fill": {"byte": 205, "len": 4}}},
            {"op": "BRANCH_ON", "at": at("var", 0), "len": 4},
            {"op": "WRITE", "at": at("var", 0), "data": {"hex": "2a000000"}},
            {"op": "BRANCH_ON", "at": at("var", 0), "len": 4}
        ],
        "expect": [
            {"kind": "UNINIT", "part": 1, "step": 1, "region": "var", "offset": 0}
        ]
    })
}

/// 40 one-byte stores, each costing one base tick plus one check tick.
fn timed_writes(name: &str, description: &str, time: Value) -> Value {
    let workload: Vec<Value> = (0..40)
        .map(|i| json!({"proc": 1, "op": "WRITE", "at": at("buf", i), "data": byte(i)}))
        .collect();
    json!({
        "name": name,
        "description": description,
        "partitions": [{
            "id": 1,
            "memory_size": 256,
            "regions": [{"label": "buf", "size": 64}],
            "processes": [{"id": 1, "time_capacity": 50, "priority": 1}]
        }],
        "time": time,
        "workload": workload,
        "expect": []
    })
}

fn off_schedule() -> Value {
    timed_writes(
        "off_schedule_with_and_without_slowdown",
        "80 raw ticks of instrumented work against a 50-tick budget; a slowdown factor of 2 keeps it on schedule.",
        json!({
            "slowdown_factor": 2,
            "costs": {"step": 1, "asan": 1, "msan": 1, "ub": 1},
            "major_frame": {"frame_len": 1000, "windows": [{"partition": 1, "start": 0, "len": 1000}]}
        }),
    )
}

fn local_timeout_override() -> Value {
    timed_writes(
        "local_timeout_override",
        "The same instrumented work without slowdown; doubling this one budget keeps it on schedule.",
        json!({
            "slowdown_factor": 1,
            "costs": {"step": 1, "asan": 1, "msan": 1, "ub": 1},
            "major_frame": {"frame_len": 1000, "windows": [{"partition": 1, "start": 0, "len": 1000}]},
            "timeout_overrides": [{"process": 1, "multiplier": 2}]
        }),
    )
}

fn get_my_id_regression() -> Value {
    json!({
        "name": "get_my_id_regression",
        "description": "GET_MY_ID from the main process must return MAIN_PROCESS_ID, not INVALID_MODE.",
        "partitions": [{
            "id": 1,
            "memory_size": 256,
            "processes": [{"id": 1, "time_capacity": 100, "priority": 1}]
        }],
        "workload": [
            {"op": "GET_MY_ID"},
            {"proc": 1, "op": "GET_MY_ID"}
        ],
        "expect": []
    })
}

fn two_partitions(regions1: Value, regions2: Value, window: u64) -> Value {
    json!({
        "partitions": [
            {"id": 1, "memory_size": 256, "regions": regions1},
            {"id": 2, "memory_size": 256, "regions": regions2}
        ],
        "time": {"major_frame": {"frame_len": 2 * window, "windows": [
            {"partition": 1, "start": 0, "len": window},
            {"partition": 2, "start": window, "len": window}
        ]}}
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn port_uninit_send() -> Value {
    merge(
        two_partitions(
            json!([{"label": "msg", "size": 8}]),
            json!([{"label": "inbox", "size": 8}]),
            100,
        ),
        json!({
            "name": "port_uninit_send",
            "description": "A half-initialized message is refused at send time; the completed one arrives fully defined.",
            "ports": [{"name": "telemetry", "kind": "queueing", "source": 1, "destination": 2, "max_message_size": 16, "capacity": 4}],
            "workload": [
                {"part": 1, "op": "WRITE", "at": at("msg", 0), "data": {"hex": "01020304"}},
                {"part": 1, "op": "SEND", "port": "telemetry", "from": at("msg", 0), "len": 8},
                {"part": 1, "op": "WRITE", "at": at("msg", 4), "data": {"hex": "05060708"}},
                {"part": 1, "op": "SEND", "port": "telemetry", "from": at("msg", 0), "len": 8},
                {"part": 2, "op": "RECEIVE", "port": "telemetry", "to": at("inbox", 0)},
                {"part": 2, "op": "BRANCH_ON", "at": at("inbox", 0), "len": 8},
                {"part": 2, "op": "RECEIVE", "port": "telemetry", "to": at("inbox", 0)}
            ],
            "expect": [
                {"kind": "UNINIT", "part": 1, "step": 1, "region": "msg", "offset": 4}
            ]
        }),
    )
}

fn queueing_fifo() -> Value {
    let mut workload = Vec::new();
    for i in 0..100 {
        workload.push(json!({"part": 1, "op": "WRITE", "at": at("out", 0), "data": {"int": {"value": i, "spec": "u32"}}}));
        workload
            .push(json!({"part": 1, "op": "SEND", "port": "fifo", "from": at("out", 0), "len": 4}));
    }
    for _ in 0..100 {
        workload.push(json!({"part": 2, "op": "RECEIVE", "port": "fifo", "to": at("in", 0)}));
    }
    merge(
        two_partitions(
            json!([{"label": "out", "size": 4}]),
            json!([{"label": "in", "size": 4}]),
            1000,
        ),
        json!({
            "name": "queueing_fifo",
            "description": "100 numbered messages cross a queueing port and arrive in send order.",
            "ports": [{"name": "fifo", "kind": "queueing", "source": 1, "destination": 2, "max_message_size": 4, "capacity": 100}],
            "workload": workload,
            "expect": []
        }),
    )
}

fn sampling_freshness() -> Value {
    json!({
        "name": "sampling_freshness",
        "description": "A sampled value read at its refresh period is VALID; read later it is STALE.",
        "partitions": [{"id": 1, "memory_size": 256, "regions": [{"label": "src", "size": 4}, {"label": "dst", "size": 4}]}],
        "ports": [{"name": "status", "kind": "sampling", "source": 1, "destination": 1, "max_message_size": 4, "refresh_period": 10}],
        "workload": [
            {"op": "WRITE", "at": at("src", 0), "data": {"hex": "aabbccdd"}},
            {"op": "SAMPLING_WRITE", "port": "status", "from": at("src", 0), "len": 4},
            {"op": "IDLE", "ticks": 7},
            {"op": "SAMPLING_READ", "port": "status", "to": at("dst", 0)},
            {"op": "SAMPLING_READ", "port": "status", "to": at("dst", 0)},
            {"op": "BRANCH_ON", "at": at("dst", 0), "len": 4}
        ],
        "expect": []
    })
}

fn ub_catalogue() -> Value {
    let lit = |v: i64| json!({"lit": v});
    json!({
        "name": "ub_catalogue",
        "description": "One step for every undefined-behavior kind.",
        "partitions": [{"id": 1, "memory_size": 256, "regions": [{"label": "word", "size": 8}]}],
        "workload": [
            {"op": "ARITH", "operator": "ADD", "a": lit(2147483647), "b": lit(1), "spec": "i32"},
            {"op": "ARITH", "operator": "SUB", "a": lit(-2147483648), "b": lit(1), "spec": "i32"},
            {"op": "ARITH", "operator": "MUL", "a": lit(65536), "b": lit(65536), "spec": "i32"},
            {"op": "DIV", "a": lit(1), "b": lit(0), "spec": "i32"},
            {"op": "DIV", "a": lit(-2147483648), "b": lit(-1), "spec": "i32"},
            {"op": "SHIFT", "a": lit(1), "b": lit(32), "spec": "i32"},
            {"op": "ALIGN_CHECK", "at": at("word", 1), "align": 4},
            {"op": "NONNULL_CHECK", "at": {"abs": 0}},
            {"op": "BOOL_CHECK", "v": lit(2)},
            {"op": "ENUM_CHECK", "v": lit(7), "name": "color", "allowed": [0, 1, 2]},
            {"op": "TRUNC", "a": lit(300), "from": "i32", "to": "u8"}
        ],
        "expect": [
            {"kind": "ADD_OVERFLOW", "step": 0},
            {"kind": "SUB_OVERFLOW", "step": 1},
            {"kind": "MUL_OVERFLOW", "step": 2},
            {"kind": "DIV_BY_ZERO", "step": 3},
            {"kind": "DIV_OVERFLOW", "step": 4},
            {"kind": "SHIFT_RANGE", "step": 5},
            {"kind": "MISALIGNED", "step": 6},
            {"kind": "NULL_DEREF", "step": 7},
            {"kind": "BOOL_RANGE", "step": 8},
            {"kind": "ENUM_RANGE", "step": 9},
            {"kind": "TRUNCATION", "step": 10}
        ]
    })
}

fn partition_reset_use_after() -> Value {
    json!({
        "name": "partition_reset_use_after",
        "description": "A process keeps using a buffer after its partition was reset.",
        "partitions": [{
            "id": 1,
            "memory_size": 256,
            "processes": [{"id": 1, "time_capacity": 100, "priority": 1}]
        }],
        "workload": [
            {"op": "ALLOC", "region": "state", "size": 16},
            {"op": "WRITE", "at": at("state", 0), "data": {"fill": {"byte": 1, "len": 16}}},
            {"proc": 1, "op": "READ", "at": at("state", 0), "len": 16},
            {"proc": 1, "op": "RESET_PARTITION"},
            {"proc": 1, "op": "READ", "at": at("state", 0), "len": 16}
        ],
        "expect": [
            {"kind": "PARTITION_RESET", "part": 1, "proc": 1, "step": 4, "region": "state", "offset": 0}
        ]
    })
}

fn definition(name: &str) -> Option<Value> {
    Some(match name {
        "listing1_overflow" => listing1_overflow(),
        "uninit_syscall_param" => uninit_syscall_param(),
        "padding_false_positive" => padding_false_positive(),
        "reserved_init_still_poisoned" => reserved_init_still_poisoned(),
        "off_schedule_with_and_without_slowdown" => off_schedule(),
        "local_timeout_override" => local_timeout_override(),
        "get_my_id_regression" => get_my_id_regression(),
        "port_uninit_send" => port_uninit_send(),
        "queueing_fifo" => queueing_fifo(),
        "sampling_freshness" => sampling_freshness(),
        "ub_catalogue" => ub_catalogue(),
        "partition_reset_use_after" => partition_reset_use_after(),
        _ => return None,
    })
}

/// A built-in by name. `random_clean` is generated from `seed`.
pub fn builtin(name: &str, seed: u64) -> Option<Scenario> {
    if name == RANDOM_CLEAN {
        return Some(random_clean(seed, 200));
    }
    let value = definition(name)?;
    Some(
        Scenario::from_json(&value.to_string())
            .unwrap_or_else(|e| panic!("built-in {name} is invalid: {e}")),
    )
}

/// Every fixed built-in, in listing order.
pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN_NAMES
        .iter()
        .map(|name| builtin(name, 0).expect("listed"))
        .collect()
}
