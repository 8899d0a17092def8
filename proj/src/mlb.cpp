#include "tagsafe/mlb.hpp"

#include <algorithm>

namespace tagsafe {

Mlb::Mlb(const MlbConfig& config, const ArchConfig& arch) : config_(config), arch_(arch) {
    config_.validate();
    lines_.reserve(config_.capacity);
}

std::optional<MlbEntry> Mlb::lookup_by_addr(u64 addr) {
    ++stats_.lookups;
    for (Line& line : lines_) {
        if (addr - mask_addr(line.e.entry.base_tagged, arch_) < line.e.entry.size) {
            touch(line);
            ++stats_.hits;
            return line.e;
        }
    }
    ++stats_.misses;
    return std::nullopt;
}

std::optional<MlbEntry> Mlb::lookup_by_location(MetadataRef ref) {
    ++stats_.lookups;
    for (Line& line : lines_) {
        if (line.e.location == ref) {
            touch(line);
            ++stats_.hits;
            return line.e;
        }
    }
    ++stats_.misses;
    return std::nullopt;
}

void Mlb::fill(const MlbEntry& e) {
    for (Line& line : lines_) {
        if (line.e.location == e.location) {
            line.e = e;
            touch(line);
            return;
        }
    }
    if (lines_.size() < config_.capacity) {
        lines_.push_back(Line{e, 0});
        touch(lines_.back());
        return;
    }
    auto victim = std::min_element(lines_.begin(), lines_.end(),
                                   [](const Line& a, const Line& b) { return a.last_use < b.last_use; });
    ++stats_.evictions;
    victim->e = e;
    touch(*victim);
}

void Mlb::invalidate(MetadataRef ref) {
    for (auto it = lines_.begin(); it != lines_.end(); ++it) {
        if (it->e.location == ref) {
            lines_.erase(it);
            ++stats_.invalidations;
            return;
        }
    }
}

} // namespace tagsafe
