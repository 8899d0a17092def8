#pragma once

#include <optional>
#include <vector>

#include "tagsafe/arch.hpp"
#include "tagsafe/metastore.hpp"

namespace tagsafe {

/// One cached metadata entry plus its node location: 24 bytes serialized.
struct MlbEntry {
    MetadataEntry entry;
    MetadataRef location;
};
static_assert(sizeof(MlbEntry) == 24);

struct MlbConfig {
    unsigned capacity = 8;
    void validate() const {
        if (capacity < 1 || capacity > 64)
            throw std::invalid_argument("MLB capacity must be in [1, 64]");
    }
};

struct MlbStats {
    u64 lookups = 0;
    u64 hits = 0;
    u64 misses = 0;
    u64 evictions = 0;
    u64 invalidations = 0;
};

/// Small fully associative cache of recently used metadata entries,
/// strict LRU replacement. Lookup is either by range containment of an
/// untagged address or by metadata node location. Deallocation must
/// invalidate the freed allocation's entry before the region can be
/// reused, so residents are never tombstoned.
class Mlb {
public:
    Mlb(const MlbConfig& config, const ArchConfig& arch);

    std::optional<MlbEntry> lookup_by_addr(u64 addr);
    std::optional<MlbEntry> lookup_by_location(MetadataRef ref);

    // Insert (or refresh) an entry as most recently used, evicting the
    // least recently used resident when full.
    void fill(const MlbEntry& e);

    // Drop the resident with this location, if any.
    void invalidate(MetadataRef ref);

    const MlbStats& stats() const { return stats_; }
    unsigned capacity() const { return config_.capacity; }
    std::size_t resident_count() const { return lines_.size(); }

private:
    struct Line {
        MlbEntry e;
        u64 last_use = 0;
    };

    void touch(Line& line) { line.last_use = ++tick_; }

    MlbConfig config_;
    ArchConfig arch_;
    std::vector<Line> lines_;
    u64 tick_ = 0;
    MlbStats stats_;
};

} // namespace tagsafe
