#include "tagsafe/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <unordered_map>

namespace tagsafe {

namespace {

struct Replayer {
    Engine engine;
    ReplayStats stats;
    std::unordered_map<std::string, MetadataRef> vregs;
    std::vector<KernelStats> kernels;
    std::unordered_map<u64, std::size_t> kernel_slot;
    u64 current_kernel = 0;
    u64 event_index = 0;
    u64 live = 0;

    explicit Replayer(const EngineConfig& config) : engine(config) {
        kernel_slot[0] = 0;
        kernels.push_back(KernelStats{0});
    }

    KernelStats& kstats() { return kernels[kernel_slot.at(current_kernel)]; }

    u64 resolve(const PtrExpr& p) {
        const AllocRecord& rec = engine.record(p.alloc_id);
        const u64 base = mask_addr(rec.base_tagged, engine.config().arch);
        const u64 va = (base + static_cast<u64>(p.offset)) & engine.config().arch.va_mask();
        return encode_addr(va, tag_of(rec.base_tagged, engine.config().arch),
                           engine.config().arch);
    }

    void count(const char* kind) { ++stats.event_counts[kind]; }

    void record_outcome(const CheckOutcome& out, u64 addr) {
        if (out.violation) {
            stats.violations.push_back(Violation{*out.violation, event_index, addr, out.entry});
            ++kstats().violations;
        }
    }

    template <class F>
    void with_load_attribution(F&& body) {
        const u64 before = engine.counters().total_loads();
        body();
        kstats().metadata_loads += engine.counters().total_loads() - before;
    }

    void operator()(const AllocEv& e) {
        count("alloc");
        engine.alloc(e.id, e.size);
        ++live;
        stats.live_max = std::max(stats.live_max, live);
    }
    void operator()(const FreeEv& e) {
        count("free");
        engine.free_alloc(e.id);
        --live;
    }
    void operator()(const LoadMetaEv& e) {
        count("loadmeta");
        with_load_attribution([&] { vregs[e.vreg] = engine.loadmeta(resolve(e.ptr)); });
    }
    void operator()(const CheckGEv& e) {
        count("check_g");
        ++kstats().global_checks;
        const u64 addr = resolve(e.ptr);
        MetadataRef ref;
        if (e.vreg) {
            auto it = vregs.find(*e.vreg);
            if (it == vregs.end())
                throw TraceError("event " + std::to_string(event_index) + ": vreg '" + *e.vreg +
                                 "' undefined at replay");
            ref = it->second;
        }
        with_load_attribution([&] { record_outcome(engine.memcheck_g(addr, ref, e.width), addr); });
    }
    void operator()(const CheckSEv& e) {
        count("check_s");
        ++kstats().shared_checks;
        record_outcome(engine.memcheck_s(e.addr, e.base, e.size, e.width), e.addr);
    }
    void operator()(const AccessEv& e) {
        count("access");
        ++kstats().global_checks;
        const u64 addr = resolve(e.ptr);
        with_load_attribution([&] { record_outcome(engine.hwonly_access(addr, e.width), addr); });
    }
    void operator()(const NopEv& e) {
        count("nop");
        kstats().nops += e.count;
    }
    void operator()(const KernelBeginEv& e) {
        count("kernel_begin");
        current_kernel = e.id;
        if (!kernel_slot.count(e.id)) {
            kernel_slot[e.id] = kernels.size();
            kernels.push_back(KernelStats{e.id});
        }
        vregs.clear();
    }
    void operator()(const KernelEndEv&) {
        count("kernel_end");
        current_kernel = 0;
        vregs.clear();
    }
};

} // namespace

ReplayStats replay(const Trace& trace, const EngineConfig& config) {
    Replayer r(config);
    for (const TraceEvent& ev : trace.events) {
        try {
            std::visit(r, ev);
        } catch (const StoreError& err) {
            throw TraceError("event " + std::to_string(r.event_index) + ": " + err.what());
        } catch (const CodecError& err) {
            throw TraceError("event " + std::to_string(r.event_index) + ": " + err.what());
        }
        ++r.event_index;
    }
    ReplayStats stats = std::move(r.stats);
    stats.traversals = r.engine.counters().traversals;
    stats.traversal_loads = r.engine.counters().traversal_loads;
    stats.readat_loads = r.engine.counters().readat_loads;
    stats.metadata_loads = r.engine.counters().total_loads();
    stats.mlb = r.engine.mlb_stats();
    stats.mix = instr_mix(trace);
    stats.store_bytes = r.engine.store().storage_bytes();
    // Drop kernel buckets that saw nothing (typically the host bucket).
    for (const KernelStats& k : r.kernels)
        if (k.global_checks || k.shared_checks || k.nops || k.metadata_loads || k.violations)
            stats.kernels.push_back(k);
    return stats;
}

namespace {

// Touched allocation ids, in trace order.
std::vector<u64> touch_sequence(const Trace& trace) {
    std::vector<u64> ids;
    for (const TraceEvent& ev : trace.events) {
        if (const auto* l = std::get_if<LoadMetaEv>(&ev))
            ids.push_back(l->ptr.alloc_id);
        else if (const auto* g = std::get_if<CheckGEv>(&ev))
            ids.push_back(g->ptr.alloc_id);
        else if (const auto* x = std::get_if<AccessEv>(&ev))
            ids.push_back(x->ptr.alloc_id);
    }
    return ids;
}

} // namespace

u64 working_set(const Trace& trace) {
    const std::vector<u64> ids = touch_sequence(trace);
    if (ids.empty())
        return 0;
    std::deque<u64> stack; // front = most recently used
    u64 max_dist = 1;
    for (const u64 id : ids) {
        auto it = std::find(stack.begin(), stack.end(), id);
        if (it != stack.end()) {
            const u64 dist = static_cast<u64>(it - stack.begin()) + 1;
            max_dist = std::max(max_dist, dist);
            stack.erase(it);
        }
        stack.push_front(id);
    }
    return max_dist;
}

u64 live_allocations(const Trace& trace) {
    u64 live = 0;
    u64 peak = 0;
    for (const TraceEvent& ev : trace.events) {
        if (std::holds_alternative<AllocEv>(ev))
            peak = std::max(peak, ++live);
        else if (std::holds_alternative<FreeEv>(ev))
            --live;
    }
    return peak;
}

SizePercentiles size_distribution(const Trace& trace) {
    std::vector<u64> sizes;
    for (const TraceEvent& ev : trace.events)
        if (const auto* a = std::get_if<AllocEv>(&ev))
            sizes.push_back(a->size);
    if (sizes.empty())
        throw TraceError("size_distribution: trace has no allocations");
    std::sort(sizes.begin(), sizes.end());
    const auto rank = [&](double q) {
        const std::size_t r = static_cast<std::size_t>(std::ceil(q * sizes.size()));
        return sizes[std::max<std::size_t>(r, 1) - 1];
    };
    return {rank(0.25), rank(0.50), rank(0.75), sizes.back()};
}

InstrMix instr_mix(const Trace& trace) {
    u64 global = 0, shared = 0, other = 0;
    for (const TraceEvent& ev : trace.events) {
        if (std::holds_alternative<CheckGEv>(ev) || std::holds_alternative<AccessEv>(ev))
            ++global;
        else if (std::holds_alternative<CheckSEv>(ev))
            ++shared;
        else if (const auto* n = std::get_if<NopEv>(&ev))
            other += n->count;
    }
    const double total = static_cast<double>(global + shared + other);
    if (total == 0)
        return {0, 0, 0};
    return {global / total, shared / total, other / total};
}

CharacterizationReport characterize(const Trace& trace) {
    CharacterizationReport rep;
    rep.sizes = size_distribution(trace);
    rep.live_max = live_allocations(trace);
    rep.working_set = working_set(trace);
    rep.mix = instr_mix(trace);
    for (const TraceEvent& ev : trace.events)
        if (std::holds_alternative<AllocEv>(ev))
            ++rep.alloc_count;
    return rep;
}

const std::vector<SchemeModel>& SchemeModel::builtin() {
    using K = SchemeModel::Kind;
    static const std::vector<SchemeModel> models = {
        {"cucatch", K::PerGranule, 0, 32, 32},
        {"lak8", K::PerGranule, 0, 8, 16},
        {"lak4", K::PerGranule, 0, 4, 16},
        {"mte", K::PerGranule, 0, 4, 16},
        {"gmod", K::PerObject, 8, 0, 0},
        {"clarmor", K::PerObject, 8, 0, 0},
        {"tagsafe-list", K::PerObject, 32, 0, 0},
        {"tagsafe-tree", K::PerObject, 32, 0, 0},
        {"tagsafe-sol", K::PerObject, 16, 0, 0},
        {"imt", K::None, 0, 0, 0},
    };
    return models;
}

SchemeModel SchemeModel::by_name(std::string_view name) {
    for (const SchemeModel& m : builtin())
        if (m.name == name)
            return m;
    throw std::invalid_argument("unknown scheme: " + std::string(name));
}

StorageReport storage_overhead(u64 footprint_bytes, std::span<const u64> object_sizes,
                               const SchemeModel& scheme) {
    if (footprint_bytes == 0)
        throw std::invalid_argument("storage_overhead: footprint must be > 0");
    double bytes = 0;
    switch (scheme.kind) {
    case SchemeModel::Kind::PerObject:
        bytes = static_cast<double>(scheme.per_object_bytes) * object_sizes.size();
        break;
    case SchemeModel::Kind::PerGranule: {
        u64 bits = 0;
        for (const u64 size : object_sizes) {
            const u64 granules = (size + scheme.granule_bytes - 1) / scheme.granule_bytes;
            bits += granules * scheme.bits_per_granule;
        }
        bytes = static_cast<double>(bits) / 8.0;
        break;
    }
    case SchemeModel::Kind::None:
        bytes = 0;
        break;
    }
    StorageReport rep;
    rep.metadata_bytes = bytes;
    rep.percent = bytes / static_cast<double>(footprint_bytes) * 100.0;
    rep.footprint = footprint_bytes;
    rep.object_count = object_sizes.size();
    return rep;
}

StorageReport storage_overhead(u64 footprint_bytes, u64 object_count, const SchemeModel& scheme) {
    if (object_count == 0)
        throw std::invalid_argument("storage_overhead: object count must be > 0");
    std::vector<u64> sizes(object_count, footprint_bytes / object_count);
    return storage_overhead(footprint_bytes, sizes, scheme);
}

double detection_rate(u64 valid_tags) {
    if (valid_tags < 1)
        throw std::invalid_argument("detection_rate: valid_tags must be >= 1");
    return 1.0 - 1.0 / static_cast<double>(valid_tags);
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", fraction * 100.0);
    return buf;
}

} // namespace tagsafe
