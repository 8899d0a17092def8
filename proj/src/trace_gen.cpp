#include "tagsafe/trace.hpp"

namespace tagsafe {

namespace {

// Touch schedule with an exact LRU working set: each window of
// `working_set` consecutive allocations is cycled twice before sliding by
// one, so the maximum finite stack distance over the whole schedule equals
// `working_set` (touched in the repeat round) and never exceeds it.
std::vector<u64> touch_schedule(u64 alloc_count, u64 working_set, u64 touches) {
    std::vector<u64> ids;
    ids.reserve(touches);
    u64 start = 1;
    u64 round = 0;
    while (ids.size() < touches) {
        for (u64 k = 0; k < working_set && ids.size() < touches; ++k)
            ids.push_back(start + k);
        if (++round % 2 == 0 && start + working_set <= alloc_count)
            ++start;
    }
    return ids;
}

} // namespace

Trace generate_trace(const SynthSpec& spec) {
    if (spec.alloc_count == 0)
        throw TraceError("synth spec: alloc_count must be >= 1");
    if (spec.working_set == 0 || spec.working_set > spec.alloc_count)
        throw TraceError("synth spec: working_set must be in [1, alloc_count]");
    if (spec.access_count == 0)
        throw TraceError("synth spec: access_count must be >= 1");
    if (spec.working_set > 1 && spec.access_count < spec.working_set + 1)
        throw TraceError("synth spec: access_count too small to realize the working set");
    if (spec.kernel_count == 0 || spec.kernel_count > spec.access_count)
        throw TraceError("synth spec: kernel_count must be in [1, access_count]");
    if (spec.width == 0)
        throw TraceError("synth spec: width must be >= 1");
    const u64 lo = (std::max<u64>(spec.size_min, 256) + 255) / 256;
    const u64 hi = spec.size_max / 256;
    if (lo > hi)
        throw TraceError("synth spec: empty size range");
    if (spec.width > lo * 256)
        throw TraceError("synth spec: width exceeds the smallest size");

    TagRng rng(spec.seed);
    Trace trace;

    std::vector<u64> sizes(spec.alloc_count + 1, 0);
    for (u64 id = 1; id <= spec.alloc_count; ++id) {
        sizes[id] = 256 * (lo + rng.bounded(hi - lo + 1));
        trace.events.emplace_back(AllocEv{id, sizes[id]});
    }

    const std::vector<u64> touches =
        touch_schedule(spec.alloc_count, spec.working_set, spec.access_count);

    // Spread nop mass and shared checks evenly across the accesses.
    const u64 nop_per = spec.nop_count / spec.access_count;
    u64 nop_rem = spec.nop_count % spec.access_count;
    const u64 shared_per = spec.shared_count / spec.access_count;
    u64 shared_rem = spec.shared_count % spec.access_count;
    constexpr u32 kSharedBase = 0x100;
    constexpr u32 kSharedSize = 0x1000;

    const u64 per_kernel = spec.access_count / spec.kernel_count;
    u64 kernel_rem = spec.access_count % spec.kernel_count;
    u64 next_touch = 0;
    for (u64 k = 1; k <= spec.kernel_count; ++k) {
        trace.events.emplace_back(KernelBeginEv{k});
        u64 quota = per_kernel + (kernel_rem > 0 ? 1 : 0);
        if (kernel_rem > 0)
            --kernel_rem;
        u64 vreg = 0;
        for (u64 q = 0; q < quota; ++q, ++next_touch) {
            const u64 id = touches[next_touch];
            const u64 off = rng.bounded(sizes[id] - spec.width + 1);
            if (spec.hwonly_style) {
                trace.events.emplace_back(AccessEv{false, {id, static_cast<i64>(off)}, spec.width});
            } else {
                const std::string name = "v" + std::to_string(vreg++);
                trace.events.emplace_back(LoadMetaEv{name, {id, 0}});
                trace.events.emplace_back(
                    CheckGEv{false, name, {id, static_cast<i64>(off)}, spec.width});
            }
            u64 nops = nop_per + (nop_rem > 0 ? 1 : 0);
            if (nop_rem > 0)
                --nop_rem;
            if (nops > 0)
                trace.events.emplace_back(NopEv{nops});
            u64 shared = shared_per + (shared_rem > 0 ? 1 : 0);
            if (shared_rem > 0)
                --shared_rem;
            for (u64 s = 0; s < shared; ++s) {
                const u32 soff = static_cast<u32>(rng.bounded(kSharedSize - spec.width + 1));
                trace.events.emplace_back(
                    CheckSEv{kSharedBase + soff, kSharedBase, kSharedSize, spec.width});
            }
        }
        trace.events.emplace_back(KernelEndEv{k});
    }

    if (spec.free_all)
        for (u64 id = spec.alloc_count; id >= 1; --id)
            trace.events.emplace_back(FreeEv{id});

    return trace;
}

} // namespace tagsafe
