#pragma once

#include <string_view>
#include <vector>

#include "tagsafe/engine.hpp"
#include "tagsafe/trace.hpp"

namespace tagsafe {

enum class FaultClass {
    AdjOOB,         // overflow into the bump-adjacent neighbor
    NonAdjIntraOOB, // checked with the victim's own root: deterministic bounds miss
    NonAdjInterOOB, // lands in a non-adjacent live allocation: tag mismatch
    UafImmediate,   // access after free, before any reuse: tombstone mismatch
    UafDelayed      // access after free and exact-size reuse: random-tag mismatch
};

FaultClass fault_class_from_name(std::string_view name);
std::string_view fault_class_name(FaultClass cls);

struct FaultSpec {
    FaultClass cls = FaultClass::AdjOOB;
    u64 count = 1;
    u64 seed = 0;
    // Only AdjOOB is expressible both ways; NonAdjIntraOOB is inherently a
    // compiled-pipeline fault and the remaining classes are per-access
    // faults regardless of mode.
    EngineMode mode = EngineMode::HWOnly;
    u64 width = 4;
};

struct Injection {
    FaultClass cls;
    u64 check_index = 0;             // event whose check must fire
    std::vector<u64> added_indices;  // every event this injection appended
};

struct LabeledTrace {
    Trace trace;
    std::vector<Injection> injections;
};

/// Append `spec.count` self-contained fault sites to a clean trace. Each
/// injection allocates fresh scaffolding ids with sizes never seen before
/// in the trace, so placement is pure bump allocation, the original events
/// are untouched, and removing the added events restores the clean trace.
LabeledTrace inject(const Trace& clean, const FaultSpec& spec);

struct ClassReport {
    u64 injected = 0;
    u64 detected = 0;
    double rate = 0;
    double ci_low = 0;  // two-sided 95% Wilson interval
    double ci_high = 0;
};

struct DetectionReport {
    FaultClass cls;
    ClassReport report;
    u64 stray_violations = 0; // violations at non-injected events (expect 0)
};

/// Replay the labeled trace and count, per injection, whether any
/// violation fired at its check event.
DetectionReport score(const LabeledTrace& labeled, const EngineConfig& config);

// Wilson score interval at 95% confidence.
void wilson_interval(u64 successes, u64 trials, double& low, double& high);

} // namespace tagsafe
