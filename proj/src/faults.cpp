#include "tagsafe/faults.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tagsafe/sim.hpp"

namespace tagsafe {

FaultClass fault_class_from_name(std::string_view name) {
    if (name == "adj-oob")
        return FaultClass::AdjOOB;
    if (name == "nonadj-intra")
        return FaultClass::NonAdjIntraOOB;
    if (name == "nonadj-inter")
        return FaultClass::NonAdjInterOOB;
    if (name == "uaf-immediate")
        return FaultClass::UafImmediate;
    if (name == "uaf-delayed")
        return FaultClass::UafDelayed;
    throw TraceError("unknown fault class: " + std::string(name));
}

std::string_view fault_class_name(FaultClass cls) {
    switch (cls) {
    case FaultClass::AdjOOB: return "adj-oob";
    case FaultClass::NonAdjIntraOOB: return "nonadj-intra";
    case FaultClass::NonAdjInterOOB: return "nonadj-inter";
    case FaultClass::UafImmediate: return "uaf-immediate";
    case FaultClass::UafDelayed: return "uaf-delayed";
    }
    return "?";
}

LabeledTrace inject(const Trace& clean, const FaultSpec& spec) {
    if (spec.count == 0)
        throw TraceError("inject: count must be >= 1");
    if (spec.width == 0)
        throw TraceError("inject: width must be >= 1");
    if (spec.cls == FaultClass::NonAdjIntraOOB && spec.mode == EngineMode::HWOnly)
        throw TraceError("inject: nonadj-intra is a compiled-pipeline fault class");

    u64 max_id = 0;
    u64 max_size = 0;
    u64 max_kernel = 0;
    for (const TraceEvent& ev : clean.events) {
        if (const auto* a = std::get_if<AllocEv>(&ev)) {
            max_id = std::max(max_id, a->id);
            max_size = std::max(max_size, a->size);
        } else if (const auto* k = std::get_if<KernelBeginEv>(&ev)) {
            max_kernel = std::max(max_kernel, k->id);
        }
    }

    // Fresh sizes above anything the trace ever allocated or freed: the
    // engine's exact-size reuse can never hijack scaffolding placement, so
    // consecutive allocations here are bump-adjacent by construction.
    const u64 size_floor = (max_size + 255) / 256 * 256 + 256;

    LabeledTrace out;
    out.trace = clean;
    TagRng rng(spec.seed);
    u64 next_id = max_id + 1;
    u64 next_vreg = 0;

    auto append = [&](TraceEvent ev, Injection& inj) {
        inj.added_indices.push_back(out.trace.events.size());
        out.trace.events.push_back(std::move(ev));
    };

    Injection kernel_marker{spec.cls, 0, {}};
    append(KernelBeginEv{max_kernel + 1}, kernel_marker);

    for (u64 k = 0; k < spec.count; ++k) {
        Injection inj{spec.cls, 0, {}};
        const u64 unit = size_floor + 0x1000 * k;
        switch (spec.cls) {
        case FaultClass::AdjOOB: {
            const u64 victim = next_id++;
            const u64 neighbor = next_id++;
            const u64 sv = unit;
            const u64 sn = unit + 256;
            append(AllocEv{victim, sv}, inj);
            append(AllocEv{neighbor, sn}, inj);
            const i64 off = static_cast<i64>(sv + rng.bounded(sn - spec.width + 1));
            if (spec.mode == EngineMode::Compiled) {
                const std::string vreg = "fv" + std::to_string(next_vreg++);
                append(LoadMetaEv{vreg, {victim, 0}}, inj);
                inj.check_index = out.trace.events.size();
                append(CheckGEv{false, vreg, {victim, off}, spec.width}, inj);
            } else {
                inj.check_index = out.trace.events.size();
                append(AccessEv{false, {victim, off}, spec.width}, inj);
            }
            break;
        }
        case FaultClass::NonAdjIntraOOB:
        case FaultClass::NonAdjInterOOB: {
            const u64 victim = next_id++;
            const u64 middle = next_id++;
            const u64 target = next_id++;
            const u64 sv = unit;
            const u64 sm = unit + 256;
            const u64 st = unit + 512;
            append(AllocEv{victim, sv}, inj);
            append(AllocEv{middle, sm}, inj);
            append(AllocEv{target, st}, inj);
            const i64 off = static_cast<i64>(sv + sm + rng.bounded(st - spec.width + 1));
            if (spec.cls == FaultClass::NonAdjIntraOOB) {
                const std::string vreg = "fv" + std::to_string(next_vreg++);
                append(LoadMetaEv{vreg, {victim, 0}}, inj);
                inj.check_index = out.trace.events.size();
                append(CheckGEv{false, vreg, {victim, off}, spec.width}, inj);
            } else {
                inj.check_index = out.trace.events.size();
                append(AccessEv{false, {victim, off}, spec.width}, inj);
            }
            break;
        }
        case FaultClass::UafImmediate: {
            const u64 victim = next_id++;
            append(AllocEv{victim, unit}, inj);
            append(FreeEv{victim}, inj);
            const i64 off = static_cast<i64>(rng.bounded(unit - spec.width + 1));
            inj.check_index = out.trace.events.size();
            append(AccessEv{false, {victim, off}, spec.width}, inj);
            break;
        }
        case FaultClass::UafDelayed: {
            const u64 victim = next_id++;
            const u64 reuse = next_id++;
            append(AllocEv{victim, unit}, inj);
            append(FreeEv{victim}, inj);
            append(AllocEv{reuse, unit}, inj); // exact-size LIFO reuse of the region
            const i64 off = static_cast<i64>(rng.bounded(unit - spec.width + 1));
            inj.check_index = out.trace.events.size();
            append(AccessEv{false, {victim, off}, spec.width}, inj);
            break;
        }
        }
        out.injections.push_back(std::move(inj));
    }

    Injection& first = out.injections.front();
    first.added_indices.insert(first.added_indices.begin(), kernel_marker.added_indices.front());
    first.added_indices.push_back(out.trace.events.size());
    out.trace.events.push_back(KernelEndEv{max_kernel + 1});
    return out;
}

DetectionReport score(const LabeledTrace& labeled, const EngineConfig& config) {
    const ReplayStats stats = replay(labeled.trace, config);
    std::set<u64> fired;
    for (const Violation& v : stats.violations)
        fired.insert(v.event_index);

    DetectionReport rep;
    rep.cls = labeled.injections.empty() ? FaultClass::AdjOOB : labeled.injections.front().cls;

    std::set<u64> check_indices;
    for (const Injection& inj : labeled.injections)
        check_indices.insert(inj.check_index);
    for (const Violation& v : stats.violations)
        if (!check_indices.count(v.event_index))
            ++rep.stray_violations;

    rep.report.injected = labeled.injections.size();
    for (const Injection& inj : labeled.injections)
        if (fired.count(inj.check_index))
            ++rep.report.detected;
    rep.report.rate = rep.report.injected == 0
                          ? 0.0
                          : static_cast<double>(rep.report.detected) / rep.report.injected;
    wilson_interval(rep.report.detected, rep.report.injected, rep.report.ci_low,
                    rep.report.ci_high);
    return rep;
}

void wilson_interval(u64 successes, u64 trials, double& low, double& high) {
    if (trials == 0) {
        low = high = 0;
        return;
    }
    const double z = 1.959963984540054; // two-sided 95%
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2 * n)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
    low = std::max(0.0, center - half);
    high = std::min(1.0, center + half);
}

} // namespace tagsafe
