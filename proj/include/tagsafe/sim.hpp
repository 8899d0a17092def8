#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tagsafe/engine.hpp"
#include "tagsafe/trace.hpp"

namespace tagsafe {

struct InstrMix {
    double global = 0;
    double shared = 0;
    double other = 0;
};

struct KernelStats {
    u64 kernel_id = 0; // 0 = events outside any kernel
    u64 global_checks = 0;
    u64 shared_checks = 0;
    u64 nops = 0;
    u64 metadata_loads = 0;
    u64 violations = 0;
};

struct ReplayStats {
    std::map<std::string, u64> event_counts;
    u64 traversals = 0;      // metadata-structure searches (MLB misses)
    u64 traversal_loads = 0; // 16-byte loads spent traversing
    u64 readat_loads = 0;    // direct entry fetches on location misses
    u64 metadata_loads = 0;  // traversal_loads + readat_loads
    MlbStats mlb;
    std::vector<Violation> violations;
    std::vector<KernelStats> kernels; // in order of first appearance
    InstrMix mix;
    u64 live_max = 0;
    u64 store_bytes = 0;
};

/// Drive every event through a fresh engine, in order. Violations are
/// recorded with their event index and replay continues; malformed event
/// sequences (id reuse, double free, stale metadata refs) abort with a
/// TraceError naming the event.
ReplayStats replay(const Trace& trace, const EngineConfig& config);

// Allocation-granularity LRU stack: the smallest fully associative LRU
// capacity that incurs only compulsory misses over the trace's touches.
u64 working_set(const Trace& trace);

// Peak count of simultaneously existing allocations.
u64 live_allocations(const Trace& trace);

struct SizePercentiles {
    u64 p25 = 0;
    u64 p50 = 0;
    u64 p75 = 0;
    u64 max = 0;
};

// Nearest-rank percentiles over allocation sizes; throws on a trace with
// no allocations.
SizePercentiles size_distribution(const Trace& trace);

// Fractions of global (G/X), shared (S) and non-memory (N mass)
// instructions; (0,0,0) for an empty trace.
InstrMix instr_mix(const Trace& trace);

struct CharacterizationReport {
    SizePercentiles sizes;
    u64 live_max = 0;
    u64 working_set = 0;
    InstrMix mix;
    u64 alloc_count = 0;
};

CharacterizationReport characterize(const Trace& trace);

/// Metadata cost rule of one protection scheme: a flat per-object record
/// or tag bits per fixed-size granule.
struct SchemeModel {
    enum class Kind { PerObject, PerGranule, None };
    std::string name;
    Kind kind = Kind::None;
    u64 per_object_bytes = 0;
    u64 bits_per_granule = 0;
    u64 granule_bytes = 16;

    static const std::vector<SchemeModel>& builtin();
    static SchemeModel by_name(std::string_view name);
};

struct StorageReport {
    double metadata_bytes = 0;
    double percent = 0; // of footprint
    u64 footprint = 0;
    u64 object_count = 0;
};

StorageReport storage_overhead(u64 footprint_bytes, std::span<const u64> object_sizes,
                               const SchemeModel& scheme);
// Convenience: `object_count` uniform objects splitting the footprint.
StorageReport storage_overhead(u64 footprint_bytes, u64 object_count, const SchemeModel& scheme);

// Probability a random-tag mismatch catches a fault: 1 - 1/valid_tags.
double detection_rate(u64 valid_tags);

// One-decimal percent formatting, e.g. 0.992063... -> "99.2%".
std::string format_percent(double fraction);

} // namespace tagsafe
