#pragma once

#include <limits>
#include <memory>
#include <string_view>

#include "tagsafe/arch.hpp"

namespace tagsafe {

struct StoreError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One allocation's safety metadata: a tagged base address plus the byte
/// size. Serializes to exactly 16 bytes.
struct MetadataEntry {
    u64 base_tagged = 0;
    u64 size = 0;
};
static_assert(sizeof(MetadataEntry) == 16);

/// Address of a metadata node inside the reserved metadata region.
/// Location 0 is the null reference (lookup failure).
struct MetadataRef {
    u64 location = 0;
    bool null() const { return location == 0; }
    friend bool operator==(MetadataRef a, MetadataRef b) { return a.location == b.location; }
};

struct LookupResult {
    bool found = false;
    MetadataRef ref;
    MetadataEntry entry;
    u64 loads = 0; // 16-byte node loads spent on this search
};

enum class StoreKind { LinkedList, BalancedTree, Oracle };

StoreKind store_kind_from_name(std::string_view name);
std::string_view store_kind_name(StoreKind kind);

// The reserved simulated region that holds metadata nodes. Never handed
// out by the allocator.
inline constexpr u64 kMetadataRegionBase = 0x7000'0000'0000ull;

inline constexpr u64 kNoReclaim = std::numeric_limits<u64>::max();

/// Disjoint allocation-metadata structure. Three implementations with the
/// same observable results but different lookup costs:
///   LinkedList  - head insertion, hit cost = position from head, miss = N
///   BalancedTree - keyed by masked base, cost = nodes on the search path
///   Oracle      - exact table, unit cost (the unrealizable baseline)
///
/// Entries stay in the structure after tombstoning; a later insert over an
/// identical tombstoned range replaces that node in place (region reuse),
/// keeping its location stable. Once inserts + tombstones exceed the
/// reclamation threshold, tombstoned nodes are swept out.
class MetaStore {
public:
    virtual ~MetaStore() = default;

    virtual MetadataRef insert(const MetadataEntry& entry) = 0;
    virtual LookupResult find_containing(u64 addr) const = 0;
    virtual MetadataEntry read_at(MetadataRef ref) const = 0;
    virtual void tombstone(MetadataRef ref) = 0;

    virtual u64 storage_bytes() const = 0;
    virtual u64 entry_count() const = 0;
    virtual StoreKind kind() const = 0;

    static std::unique_ptr<MetaStore> make(StoreKind kind, const ArchConfig& cfg,
                                           u64 reclaim_threshold = kNoReclaim);
};

} // namespace tagsafe
