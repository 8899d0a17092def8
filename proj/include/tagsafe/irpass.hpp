#pragma once

#include <map>
#include <set>

#include "tagsafe/engine.hpp"
#include "tagsafe/ir.hpp"
#include "tagsafe/trace.hpp"

namespace tagsafe::ir {

/// Per global-access address value: the set of root definitions (value
/// names) that reach it. Roots are parameters, loaded values and opaque
/// computation results; mov/ptradd are traversed, phis union their inputs.
struct RootAnalysis {
    std::map<std::string, std::set<std::string>> roots_of_access; // address value -> roots
    std::set<std::string> all_roots;
};

RootAnalysis find_roots(const IrFunction& fn);

struct InstrumentInfo {
    u64 static_loadmeta = 0;
    u64 static_memcheck_g = 0;
    u64 static_memcheck_s = 0;
    u64 companion_movs = 0;
    u64 companion_phis = 0;
};

/// Insert one LOADMETA per root at its definition point (entry block for
/// parameter roots), mirror the metadata value along mov/phi chains, and
/// place a check before every memory access. Shared accesses get their
/// statically resolved base and size; an unresolvable shared address is an
/// error.
IrFunction instrument(const IrFunction& fn, InstrumentInfo* info = nullptr);

/// Launch description for the deterministic interpreter: a flat tid range,
/// parameter bindings, backing allocations and optional initial memory
/// words (which may hold pointers).
struct KernelInput {
    struct Binding {
        bool is_ptr = false;
        u64 scalar = 0;
        PtrExpr ptr;
        static Binding of_scalar(u64 v) { return {false, v, {}}; }
        static Binding of_ptr(u64 id, i64 off) { return {true, 0, {id, off}}; }
    };

    u64 tid_count = 1;
    std::vector<AllocEv> allocs;
    std::map<std::string, Binding> params;
    std::vector<std::pair<PtrExpr, Binding>> mem_init; // pre-launch stores
    EngineConfig engine;
};

enum class CoverageClass { Full, Partial, TaggingOnly };

std::string_view coverage_class_name(CoverageClass c);

struct DynCheck {
    u64 tid = 0;
    bool shared = false;
    std::optional<ViolationKind> violation;
    std::optional<CoverageClass> coverage; // global checks with a live covering allocation
};

struct ExecResult {
    u64 dyn_insts = 0;
    std::vector<DynCheck> checks;
    std::map<u64, u64> global_mem; // masked address -> raw value, at exit
    std::vector<std::pair<u64, u64>> stores; // (masked address, raw) in order
    std::vector<u64> loaded_values;          // LDG/LDS results in order
    std::map<CoverageClass, u64> coverage;
    Trace lowered; // populated when emit_trace is set
};

/// Execute the kernel for tids [0, tid_count). Check violations are
/// recorded and the guarded access is skipped; execution continues.
ExecResult interpret(const IrFunction& fn, const KernelInput& input, bool emit_trace = false);

/// Dynamic instruction bloat of instrumentation: instrumented/baseline - 1.
double bloat(const IrFunction& baseline, const IrFunction& instrumented,
             const KernelInput& input);

/// Replayable trace whose check outcomes reproduce the interpreter's,
/// event for event, under the same engine config.
Trace lower(const IrFunction& instrumented, const KernelInput& input);

} // namespace tagsafe::ir
