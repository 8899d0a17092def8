#include "tagsafe/engine.hpp"

#include <algorithm>

namespace tagsafe {

EngineMode engine_mode_from_name(std::string_view name) {
    if (name == "compiled")
        return EngineMode::Compiled;
    if (name == "hwonly")
        return EngineMode::HWOnly;
    throw TraceError("unknown engine mode: " + std::string(name));
}

std::string_view engine_mode_name(EngineMode mode) {
    return mode == EngineMode::Compiled ? "compiled" : "hwonly";
}

std::string_view violation_kind_name(ViolationKind kind) {
    switch (kind) {
    case ViolationKind::SpatialOOB: return "spatial-oob";
    case ViolationKind::Temporal: return "temporal";
    case ViolationKind::SharedSpatial: return "shared-spatial";
    case ViolationKind::UnmappedAccess: return "unmapped-access";
    }
    return "?";
}

void EngineConfig::validate() const {
    arch.validate();
    if (mlb_capacity != 0)
        MlbConfig{mlb_capacity}.validate();
    if (heap_base % arch.alignment != 0)
        throw TraceError("heap base must be alignment-aligned");
    if (heap_base >= kMetadataRegionBase)
        throw TraceError("heap base collides with the metadata region");
}

Engine::Engine(const EngineConfig& config)
    : config_(config),
      store_(MetaStore::make(config.store_kind, config.arch, config.reclaim_threshold)),
      rng_(config.seed),
      bump_(config.heap_base) {
    config_.validate();
    if (config_.mlb_capacity != 0)
        mlb_ = std::make_unique<Mlb>(MlbConfig{config_.mlb_capacity}, config_.arch);
}

u64 Engine::place(u64 size) {
    // LIFO exact-size first fit over freed regions.
    for (auto it = reuse_.rbegin(); it != reuse_.rend(); ++it) {
        if (it->size == size) {
            const u64 base = it->base;
            reuse_.erase(std::next(it).base());
            return base;
        }
    }
    const u64 a = config_.arch.alignment;
    bump_ = (bump_ + a - 1) / a * a;
    const u64 base = bump_;
    bump_ += size;
    if (bump_ > kMetadataRegionBase)
        throw TraceError("simulated heap exhausted");
    return base;
}

u64 Engine::draw_tag(u64 base, u64 size) {
    const u64 n = config_.arch.valid_tag_count();
    u64 tag = 1 + rng_.bounded(n);
    if (!config_.arch.distinct_adjacent_tags)
        return tag;
    for (;;) {
        bool clash = false;
        if (auto it = live_by_end_.find(base); it != live_by_end_.end())
            clash |= tag_of(records_.at(it->second).base_tagged, config_.arch) == tag;
        if (auto it = live_by_base_.find(base + size); it != live_by_base_.end())
            clash |= tag_of(records_.at(it->second).base_tagged, config_.arch) == tag;
        if (!clash)
            return tag;
        tag = 1 + rng_.bounded(n);
    }
}

const AllocRecord& Engine::alloc(u64 id, u64 size) {
    if (size == 0)
        throw TraceError("alloc " + std::to_string(id) + ": size must be >= 1");
    if (size > (config_.arch.va_mask() >> 1))
        throw TraceError("alloc " + std::to_string(id) + ": size exceeds address space");
    if (records_.count(id))
        throw TraceError("alloc " + std::to_string(id) + ": id already used");

    const u64 base = place(size);
    const u64 tag = draw_tag(base, size);
    const u64 base_tagged = encode_addr(base, tag, config_.arch);
    const MetadataRef ref = store_->insert(MetadataEntry{base_tagged, size});

    AllocRecord rec{id, base_tagged, size, ref, AllocState::Live};
    auto [it, ok] = records_.emplace(id, rec);
    (void)ok;
    live_by_base_[base] = id;
    live_by_end_[base + size] = id;
    return it->second;
}

void Engine::free_alloc(u64 id) {
    auto it = records_.find(id);
    if (it == records_.end())
        throw TraceError("free " + std::to_string(id) + ": unknown id");
    AllocRecord& rec = it->second;
    if (rec.state == AllocState::Freed)
        throw TraceError("free " + std::to_string(id) + ": double free");

    store_->tombstone(rec.ref);
    if (mlb_)
        mlb_->invalidate(rec.ref);
    const u64 base = mask_addr(rec.base_tagged, config_.arch);
    live_by_base_.erase(base);
    live_by_end_.erase(base + rec.size);
    reuse_.push_back(Region{base, rec.size});
    rec.state = AllocState::Freed;
}

std::optional<MlbEntry> Engine::resolve_by_addr(u64 addr, bool fill) {
    if (mlb_) {
        if (auto hit = mlb_->lookup_by_addr(addr))
            return hit;
    }
    const LookupResult res = store_->find_containing(addr);
    ++counters_.traversals;
    counters_.traversal_loads += res.loads;
    if (!res.found)
        return std::nullopt;
    MlbEntry e{res.entry, res.ref};
    const bool tombstoned = tag_of(res.entry.base_tagged, config_.arch) == config_.arch.tombstone_tag();
    if (mlb_ && fill && !tombstoned)
        mlb_->fill(e);
    return e;
}

MetadataRef Engine::loadmeta(u64 root_ptr) {
    const u64 tag = tag_of(root_ptr, config_.arch);
    if (tag == ArchConfig::kNullTag)
        return {}; // untagged pointers skip metadata retrieval entirely
    const u64 addr = mask_addr(root_ptr, config_.arch);
    const auto hit = resolve_by_addr(addr, /*fill=*/true);
    if (!hit)
        return {};
    if (addr - mask_addr(hit->entry.base_tagged, config_.arch) >= hit->entry.size)
        return {};
    if (tag != tag_of(hit->entry.base_tagged, config_.arch))
        return {};
    return hit->location;
}

CheckOutcome Engine::memcheck_g(u64 addr, MetadataRef meta, u64 width) {
    const u64 masked = mask_addr(addr, config_.arch);
    if (meta.null())
        return {std::nullopt, masked, std::nullopt};

    MetadataEntry entry;
    std::optional<MlbEntry> hit = mlb_ ? mlb_->lookup_by_location(meta) : std::nullopt;
    if (hit) {
        entry = hit->entry;
    } else {
        entry = store_->read_at(meta); // throws on a stale/reclaimed ref
        ++counters_.readat_loads;
        const bool tombstoned =
            tag_of(entry.base_tagged, config_.arch) == config_.arch.tombstone_tag();
        if (mlb_ && config_.mlb_fill_on_memcheck && !tombstoned)
            mlb_->fill(MlbEntry{entry, meta});
    }

    const u64 off = masked - mask_addr(entry.base_tagged, config_.arch);
    if (off >= entry.size || (!config_.point_check && off + width > entry.size))
        return {ViolationKind::SpatialOOB, masked, entry};
    if (tag_of(addr, config_.arch) != tag_of(entry.base_tagged, config_.arch))
        return {ViolationKind::Temporal, masked, entry};
    return {std::nullopt, masked, entry};
}

CheckOutcome Engine::memcheck_s(u32 addr, u32 base, u32 size, u64 width) {
    const u32 off = addr - base;
    if (off >= size || (!config_.point_check && u64{off} + width > size))
        return {ViolationKind::SharedSpatial, addr, std::nullopt};
    return {std::nullopt, addr, std::nullopt};
}

CheckOutcome Engine::hwonly_access(u64 addr, u64 width) {
    const u64 masked = mask_addr(addr, config_.arch);
    const u64 tag = tag_of(addr, config_.arch);
    if (tag == ArchConfig::kNullTag)
        return {std::nullopt, masked, std::nullopt}; // binary-compat pass
    const auto hit = resolve_by_addr(masked, /*fill=*/true);
    if (!hit)
        return {ViolationKind::UnmappedAccess, masked, std::nullopt};
    const MetadataEntry& entry = hit->entry;
    const u64 off = masked - mask_addr(entry.base_tagged, config_.arch);
    if (off >= entry.size || (!config_.point_check && off + width > entry.size))
        return {ViolationKind::SpatialOOB, masked, entry};
    if (tag != tag_of(entry.base_tagged, config_.arch))
        return {ViolationKind::Temporal, masked, entry};
    return {std::nullopt, masked, entry};
}

const AllocRecord* Engine::find_record(u64 id) const {
    auto it = records_.find(id);
    return it == records_.end() ? nullptr : &it->second;
}

const AllocRecord& Engine::record(u64 id) const {
    if (const AllocRecord* r = find_record(id))
        return *r;
    throw TraceError("unknown allocation id " + std::to_string(id));
}

const AllocRecord* Engine::find_live_containing(u64 masked_addr) const {
    auto it = live_by_base_.upper_bound(masked_addr);
    if (it == live_by_base_.begin())
        return nullptr;
    --it;
    const AllocRecord& rec = records_.at(it->second);
    if (masked_addr - it->first < rec.size)
        return &rec;
    return nullptr;
}

u64 Engine::live_count() const {
    return live_by_base_.size();
}

} // namespace tagsafe
