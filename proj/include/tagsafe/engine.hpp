#pragma once

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "tagsafe/arch.hpp"
#include "tagsafe/metastore.hpp"
#include "tagsafe/mlb.hpp"

namespace tagsafe {

struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EngineMode { Compiled, HWOnly };

EngineMode engine_mode_from_name(std::string_view name);
std::string_view engine_mode_name(EngineMode mode);

enum class ViolationKind { SpatialOOB, Temporal, SharedSpatial, UnmappedAccess };

std::string_view violation_kind_name(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    u64 event_index = 0;
    u64 addr = 0; // offending (tagged) address as issued
    std::optional<MetadataEntry> entry;
};

enum class AllocState { Live, Freed };

struct AllocRecord {
    u64 id = 0;
    u64 base_tagged = 0; // tag captured at allocation time
    u64 size = 0;
    MetadataRef ref;
    AllocState state = AllocState::Live;
};

struct EngineConfig {
    ArchConfig arch;
    StoreKind store_kind = StoreKind::BalancedTree;
    unsigned mlb_capacity = 8; // 0 disables the MLB entirely
    bool mlb_fill_on_memcheck = true;
    EngineMode mode = EngineMode::Compiled;
    u64 seed = 0;
    u64 reclaim_threshold = kNoReclaim;
    bool point_check = false; // check only the address, not address+width
    u64 heap_base = 0x1'0000'0000ull;

    void validate() const;
};

/// Outcome of one check instruction: either a violation or a pass with the
/// tag bits cleared from the checked address.
struct CheckOutcome {
    std::optional<ViolationKind> violation;
    u64 masked_addr = 0;
    std::optional<MetadataEntry> entry;
    bool passed() const { return !violation.has_value(); }
};

/// Deterministic bounded draws on top of a fixed-width generator, so that
/// identical seeds give identical tag sequences on every platform.
class TagRng {
public:
    explicit TagRng(u64 seed) : gen_(seed) {}

    u64 bounded(u64 n) {
        const u64 limit = ~u64{0} - ~u64{0} % n;
        u64 x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 gen_;
};

/// The allocator runtime plus the check-instruction contracts, all
/// cost-accounted through the metadata store and the MLB. One engine per
/// replayed trace; strictly sequential use.
class Engine {
public:
    explicit Engine(const EngineConfig& config);

    // Simulated allocation: LIFO exact-size reuse of freed regions first,
    // otherwise an aligned bump; tag drawn uniformly from the assignable
    // range, re-drawn while it matches an address-adjacent live neighbor
    // when distinct_adjacent_tags is set.
    const AllocRecord& alloc(u64 id, u64 size);

    // Tombstones the metadata entry, invalidates the MLB, and pushes the
    // region on the reuse list.
    void free_alloc(u64 id);

    // Metadata retrieval for a root pointer. Never raises: returns the
    // null ref when the tag is zero, no entry covers the address, or the
    // covering entry's bounds/tag do not verify against the input.
    MetadataRef loadmeta(u64 root_ptr);

    // Global-memory check against the entry behind `meta`: spatial first,
    // then tag comparison using the just-fetched entry. A null `meta`
    // passes the address through unchecked.
    CheckOutcome memcheck_g(u64 addr, MetadataRef meta, u64 width);

    // Shared-memory bounds check; no tags, no metadata loads.
    CheckOutcome memcheck_s(u32 addr, u32 base, u32 size, u64 width);

    // Per-access path without compiler support: resolve the covering
    // entry by address and run the same spatial + tag checks.
    CheckOutcome hwonly_access(u64 addr, u64 width);

    const AllocRecord* find_record(u64 id) const;
    const AllocRecord& record(u64 id) const;

    // Live allocation covering an untagged address, if any. Bypasses the
    // store and its cost accounting; ground-truth lookups only.
    const AllocRecord* find_live_containing(u64 masked_addr) const;

    struct Counters {
        u64 traversals = 0;      // find_containing invocations
        u64 traversal_loads = 0; // 16-byte loads spent in those traversals
        u64 readat_loads = 0;    // direct entry fetches on MLB location misses
        u64 total_loads() const { return traversal_loads + readat_loads; }
    };

    const Counters& counters() const { return counters_; }
    const MetaStore& store() const { return *store_; }
    const Mlb* mlb() const { return mlb_.get(); }
    MlbStats mlb_stats() const { return mlb_ ? mlb_->stats() : MlbStats{}; }
    const EngineConfig& config() const { return config_; }
    u64 live_count() const;

private:
    struct Region {
        u64 base = 0;
        u64 size = 0;
    };

    u64 draw_tag(u64 base, u64 size);
    u64 place(u64 size);

    // Resolve the entry covering an untagged address, MLB first. Fills the
    // MLB on a store hit unless the entry is tombstoned (or `fill` is off).
    std::optional<MlbEntry> resolve_by_addr(u64 addr, bool fill);

    EngineConfig config_;
    std::unique_ptr<MetaStore> store_;
    std::unique_ptr<Mlb> mlb_;
    TagRng rng_;
    std::map<u64, AllocRecord> records_;
    std::map<u64, u64> live_by_base_; // masked base -> id
    std::map<u64, u64> live_by_end_;  // masked base + size -> id
    std::vector<Region> reuse_;       // LIFO free-region stack
    u64 bump_;
    Counters counters_;
};

} // namespace tagsafe
