#include "tagsafe/report.hpp"

#include <cstdio>
#include <sstream>

namespace tagsafe {

namespace {

std::string hex_str(u64 v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

json config_json(const EngineConfig& config) {
    json j;
    j["arch"] = config.arch.va_bits == 57 ? "va57t7" : "va48t16";
    j["alignment"] = config.arch.alignment;
    j["distinct_adjacent_tags"] = config.arch.distinct_adjacent_tags;
    j["store"] = std::string(store_kind_name(config.store_kind));
    j["mlb_capacity"] = config.mlb_capacity;
    j["mlb_fill_on_memcheck"] = config.mlb_fill_on_memcheck;
    j["mode"] = std::string(engine_mode_name(config.mode));
    j["seed"] = config.seed;
    j["reclaim_threshold"] =
        config.reclaim_threshold == kNoReclaim ? json(nullptr) : json(config.reclaim_threshold);
    j["point_check"] = config.point_check;
    return j;
}

json replay_json(const ReplayStats& stats) {
    json j;
    j["events"] = stats.event_counts;
    json loads;
    loads["total"] = stats.metadata_loads;
    loads["traversals"] = stats.traversals;
    loads["traversal_loads"] = stats.traversal_loads;
    loads["readat_loads"] = stats.readat_loads;
    j["metadata_loads"] = loads;
    json mlb;
    mlb["lookups"] = stats.mlb.lookups;
    mlb["hits"] = stats.mlb.hits;
    mlb["misses"] = stats.mlb.misses;
    mlb["evictions"] = stats.mlb.evictions;
    mlb["invalidations"] = stats.mlb.invalidations;
    j["mlb"] = mlb;
    json viols = json::array();
    for (const Violation& v : stats.violations) {
        json e;
        e["kind"] = std::string(violation_kind_name(v.kind));
        e["event_index"] = v.event_index;
        e["addr"] = hex_str(v.addr);
        if (v.entry) {
            e["entry_base"] = hex_str(v.entry->base_tagged);
            e["entry_size"] = v.entry->size;
        }
        viols.push_back(e);
    }
    j["violations"] = viols;
    json kernels = json::array();
    for (const KernelStats& k : stats.kernels) {
        json e;
        e["kernel"] = k.kernel_id;
        e["global_checks"] = k.global_checks;
        e["shared_checks"] = k.shared_checks;
        e["nops"] = k.nops;
        e["metadata_loads"] = k.metadata_loads;
        e["violations"] = k.violations;
        kernels.push_back(e);
    }
    j["kernels"] = kernels;
    json mix;
    mix["global"] = stats.mix.global;
    mix["shared"] = stats.mix.shared;
    mix["other"] = stats.mix.other;
    j["instr_mix"] = mix;
    j["live_max"] = stats.live_max;
    j["store_bytes"] = stats.store_bytes;
    return j;
}

json simulate_report(const EngineConfig& config, const ReplayStats& stats) {
    json j;
    j["config"] = config_json(config);
    j["stats"] = replay_json(stats);
    return j;
}

json characterize_report(const CharacterizationReport& rep) {
    json j;
    j["allocations"] = rep.alloc_count;
    json sizes;
    sizes["p25"] = rep.sizes.p25;
    sizes["p50"] = rep.sizes.p50;
    sizes["p75"] = rep.sizes.p75;
    sizes["max"] = rep.sizes.max;
    j["size_distribution"] = sizes;
    j["live_allocations"] = rep.live_max;
    j["working_set"] = rep.working_set;
    json mix;
    mix["global"] = rep.mix.global;
    mix["shared"] = rep.mix.shared;
    mix["other"] = rep.mix.other;
    j["instr_mix"] = mix;
    return j;
}

json detection_report_json(const FaultSpec& spec, const EngineConfig& config,
                           const DetectionReport& rep) {
    json j;
    j["class"] = std::string(fault_class_name(spec.cls));
    j["mode"] = std::string(engine_mode_name(spec.mode));
    j["seed"] = spec.seed;
    j["config"] = config_json(config);
    j["injected"] = rep.report.injected;
    j["detected"] = rep.report.detected;
    j["rate"] = rep.report.rate;
    j["rate_percent"] = format_percent(rep.report.rate);
    j["ci95_low"] = rep.report.ci_low;
    j["ci95_high"] = rep.report.ci_high;
    j["stray_violations"] = rep.stray_violations;
    return j;
}

json storage_report_json(const SchemeModel& scheme, const StorageReport& rep) {
    json j;
    j["scheme"] = scheme.name;
    j["footprint_bytes"] = rep.footprint;
    j["objects"] = rep.object_count;
    j["metadata_bytes"] = rep.metadata_bytes;
    j["percent"] = rep.percent;
    return j;
}

std::string simulate_csv(const EngineConfig& config, const ReplayStats& stats) {
    std::ostringstream out;
    out << "kernel,store,mlb,mode,seed,global_checks,shared_checks,nops,metadata_loads,"
           "violations\n";
    const auto row = [&](const std::string& kernel, u64 g, u64 s, u64 n, u64 loads, u64 v) {
        out << kernel << "," << store_kind_name(config.store_kind) << "," << config.mlb_capacity
            << "," << engine_mode_name(config.mode) << "," << config.seed << "," << g << "," << s
            << "," << n << "," << loads << "," << v << "\n";
    };
    for (const KernelStats& k : stats.kernels)
        row(std::to_string(k.kernel_id), k.global_checks, k.shared_checks, k.nops,
            k.metadata_loads, k.violations);
    u64 g = 0, s = 0, n = 0;
    for (const KernelStats& k : stats.kernels) {
        g += k.global_checks;
        s += k.shared_checks;
        n += k.nops;
    }
    row("total", g, s, n, stats.metadata_loads, stats.violations.size());
    return std::move(out).str();
}

} // namespace tagsafe
