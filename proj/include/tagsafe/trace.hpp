#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tagsafe/arch.hpp"
#include "tagsafe/engine.hpp"

namespace tagsafe {

/// Symbolic pointer: allocation id plus signed byte offset. Resolved at
/// replay to the tagged address captured when the id was allocated, so a
/// reference to a freed id yields the stale tagged pointer.
struct PtrExpr {
    u64 alloc_id = 0;
    i64 offset = 0;
    friend bool operator==(const PtrExpr&, const PtrExpr&) = default;
};

struct AllocEv {
    u64 id = 0;
    u64 size = 0;
    friend bool operator==(const AllocEv&, const AllocEv&) = default;
};
struct FreeEv {
    u64 id = 0;
    friend bool operator==(const FreeEv&, const FreeEv&) = default;
};
struct LoadMetaEv {
    std::string vreg;
    PtrExpr ptr;
    friend bool operator==(const LoadMetaEv&, const LoadMetaEv&) = default;
};
struct CheckGEv {
    bool is_store = false;
    std::optional<std::string> vreg; // nullopt = literal NULL operand
    PtrExpr ptr;
    u64 width = 4;
    friend bool operator==(const CheckGEv&, const CheckGEv&) = default;
};
struct CheckSEv {
    u32 addr = 0;
    u32 base = 0;
    u32 size = 0;
    u64 width = 4;
    friend bool operator==(const CheckSEv&, const CheckSEv&) = default;
};
struct AccessEv { // per-access path, no compiler support
    bool is_store = false;
    PtrExpr ptr;
    u64 width = 4;
    friend bool operator==(const AccessEv&, const AccessEv&) = default;
};
struct NopEv { // non-memory instruction mass
    u64 count = 0;
    friend bool operator==(const NopEv&, const NopEv&) = default;
};
struct KernelBeginEv {
    u64 id = 0;
    friend bool operator==(const KernelBeginEv&, const KernelBeginEv&) = default;
};
struct KernelEndEv {
    u64 id = 0;
    friend bool operator==(const KernelEndEv&, const KernelEndEv&) = default;
};

using TraceEvent = std::variant<AllocEv, FreeEv, LoadMetaEv, CheckGEv, CheckSEv, AccessEv,
                                NopEv, KernelBeginEv, KernelEndEv>;

struct Trace {
    std::vector<TraceEvent> events;
    friend bool operator==(const Trace&, const Trace&) = default;
};

// Line grammar, one event per line, '#' comments, decimal or 0x-hex
// integers, offsets may be negative:
//   K <id> BEGIN | K <id> END
//   A <id> <size>
//   F <id>
//   L <vreg> <id>+<offset>
//   G <LD|ST> <vreg|NULL> <id>+<offset> <width>
//   S <addr32> <base32> <size32> <width>
//   X <LD|ST> <id>+<offset> <width>
//   N <count>
Trace parse_trace(std::string_view text);
std::string serialize_trace(const Trace& trace);

/// Parameters for the deterministic synthetic workload generator. The
/// produced trace is clean (no violations in any mode) and its measured
/// allocation working set equals `working_set` exactly.
struct SynthSpec {
    u64 alloc_count = 1;
    u64 size_min = 256; // rounded up to a 256 multiple
    u64 size_max = 4096;
    u64 working_set = 1;
    u64 access_count = 1;
    u64 kernel_count = 1;
    u64 nop_count = 0;
    u64 shared_count = 0;
    u64 width = 4;
    bool hwonly_style = false; // emit X accesses instead of L/G pairs
    bool free_all = true;      // free every allocation at the end
    u64 seed = 0;
};

Trace generate_trace(const SynthSpec& spec);

} // namespace tagsafe
