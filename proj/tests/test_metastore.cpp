#include "doctest.h"

#include <cmath>
#include <random>

#include "tagsafe/metastore.hpp"

using namespace tagsafe;

namespace {

const ArchConfig kArch = ArchConfig::preset("va57t7");

MetadataEntry entry_of(u64 base, u64 tag, u64 size) {
    return {encode_addr(base, tag, kArch), size};
}

} // namespace

TEST_CASE("insert then find_containing") {
    for (const StoreKind kind :
         {StoreKind::LinkedList, StoreKind::BalancedTree, StoreKind::Oracle}) {
        auto store = MetaStore::make(kind, kArch);
        const MetadataRef ref = store->insert(entry_of(0x1'0000'0000, 0x15, 0x300));
        CHECK(!ref.null());
        const LookupResult hit = store->find_containing(0x1'0000'0150);
        CHECK(hit.found);
        CHECK(hit.ref == ref);
        CHECK(mask_addr(hit.entry.base_tagged, kArch) == 0x1'0000'0000);
        CHECK(hit.entry.size == 0x300);
        CHECK_FALSE(store->find_containing(0x1'0000'0300).found); // one past the end
    }
}

TEST_CASE("insert rejects overlap with a live range") {
    for (const StoreKind kind :
         {StoreKind::LinkedList, StoreKind::BalancedTree, StoreKind::Oracle}) {
        auto store = MetaStore::make(kind, kArch);
        store->insert(entry_of(0x10000, 1, 0x200));
        CHECK_THROWS_AS(store->insert(entry_of(0x10100, 2, 0x200)), StoreError);
        CHECK_THROWS_AS(store->insert(entry_of(0x10000, 2, 0x200)), StoreError);
        // Partial overlap with a tombstoned range is just as structural.
        auto other = store->insert(entry_of(0x20000, 3, 0x300));
        store->tombstone(other);
        CHECK_THROWS_AS(store->insert(entry_of(0x20100, 4, 0x300)), StoreError);
    }
}

TEST_CASE("insert over an identical tombstoned range replaces the node") {
    for (const StoreKind kind :
         {StoreKind::LinkedList, StoreKind::BalancedTree, StoreKind::Oracle}) {
        auto store = MetaStore::make(kind, kArch);
        const MetadataRef ref = store->insert(entry_of(0x40000, 0x11, 0x100));
        store->tombstone(ref);
        const MetadataRef ref2 = store->insert(entry_of(0x40000, 0x22, 0x100));
        CHECK(ref2 == ref); // in-place replacement keeps the location
        CHECK(store->entry_count() == 1);
        const LookupResult hit = store->find_containing(0x40010);
        CHECK(hit.found);
        CHECK(tag_of(hit.entry.base_tagged, kArch) == 0x22);
    }
}

TEST_CASE("read_at returns the current entry and errors on bad refs") {
    for (const StoreKind kind :
         {StoreKind::LinkedList, StoreKind::BalancedTree, StoreKind::Oracle}) {
        auto store = MetaStore::make(kind, kArch);
        const MetadataRef ref = store->insert(entry_of(0x40000, 0x11, 0x100));
        CHECK(tag_of(store->read_at(ref).base_tagged, kArch) == 0x11);
        store->tombstone(ref);
        const MetadataEntry e = store->read_at(ref);
        CHECK(tag_of(e.base_tagged, kArch) == kArch.tombstone_tag());
        CHECK(mask_addr(e.base_tagged, kArch) == 0x40000);
        CHECK(e.size == 0x100);
        CHECK_THROWS_AS(store->read_at(MetadataRef{0xdead}), StoreError);
    }
}

TEST_CASE("tombstone keeps the node findable and double-tombstone errors") {
    for (const StoreKind kind :
         {StoreKind::LinkedList, StoreKind::BalancedTree, StoreKind::Oracle}) {
        auto store = MetaStore::make(kind, kArch);
        const MetadataRef ref = store->insert(entry_of(0x40000, 0x11, 0x100));
        store->tombstone(ref);
        const LookupResult hit = store->find_containing(0x40080);
        CHECK(hit.found);
        CHECK(tag_of(hit.entry.base_tagged, kArch) == kArch.tombstone_tag());
        CHECK_THROWS_AS(store->tombstone(ref), StoreError);
    }
}

TEST_CASE("reclamation removes tombstoned nodes past the threshold") {
    for (const StoreKind kind :
         {StoreKind::LinkedList, StoreKind::BalancedTree, StoreKind::Oracle}) {
        auto store = MetaStore::make(kind, kArch, /*reclaim_threshold=*/3);
        const MetadataRef a = store->insert(entry_of(0x10000, 1, 0x100)); // op 1
        store->insert(entry_of(0x20000, 2, 0x100));                       // op 2
        store->tombstone(a);                                              // op 3, not past 3
        CHECK(store->find_containing(0x10000).found);
        store->insert(entry_of(0x30000, 3, 0x100)); // op 4 > 3: sweep
        CHECK_FALSE(store->find_containing(0x10000).found);
        CHECK_THROWS_AS(store->read_at(a), StoreError);
        CHECK(store->entry_count() == 2);
    }
}

TEST_CASE("list lookup cost is the exact head-relative position") {
    auto store = MetaStore::make(StoreKind::LinkedList, kArch);
    store->insert(entry_of(0x10000, 1, 0x100)); // A
    store->insert(entry_of(0x20000, 2, 0x100)); // B
    store->insert(entry_of(0x30000, 3, 0x100)); // C, head
    CHECK(store->find_containing(0x30010).loads == 1);
    CHECK(store->find_containing(0x20010).loads == 2);
    CHECK(store->find_containing(0x10010).loads == 3);
    // Failed searches walk the whole list.
    const LookupResult miss = store->find_containing(0x90000);
    CHECK_FALSE(miss.found);
    CHECK(miss.loads == 3);
}

TEST_CASE("balanced tree of 7 entries answers within 3 loads") {
    auto store = MetaStore::make(StoreKind::BalancedTree, kArch);
    for (u64 i = 0; i < 7; ++i)
        store->insert(entry_of(0x10000 + 0x1000 * i, 1 + i, 0x100));
    for (u64 i = 0; i < 7; ++i) {
        const LookupResult hit = store->find_containing(0x10000 + 0x1000 * i + 0x40);
        CHECK(hit.found);
        CHECK(hit.loads <= 3);
    }
}

TEST_CASE("oracle lookups always cost one load") {
    auto store = MetaStore::make(StoreKind::Oracle, kArch);
    CHECK(store->find_containing(0x123).loads == 1);
    for (u64 i = 0; i < 100; ++i)
        store->insert(entry_of(0x10000 + 0x1000 * i, 1 + i % 126, 0x100));
    CHECK(store->find_containing(0x10000).loads == 1);
    CHECK(store->find_containing(0xf00'0000).loads == 1);
}

TEST_CASE("storage accounting") {
    auto tree = MetaStore::make(StoreKind::BalancedTree, kArch);
    auto list = MetaStore::make(StoreKind::LinkedList, kArch);
    auto oracle = MetaStore::make(StoreKind::Oracle, kArch);
    CHECK(tree->storage_bytes() == 0);
    for (u64 i = 0; i < 10; ++i) {
        const MetadataEntry e = entry_of(0x10000 + 0x1000 * i, 1, 0x100);
        tree->insert(e);
        list->insert(e);
        oracle->insert(e);
    }
    CHECK(tree->storage_bytes() == 320);
    CHECK(list->storage_bytes() == 320);
    CHECK(oracle->storage_bytes() == 160);
}

TEST_CASE("tree search path obeys the self-balancing height bound") {
    std::mt19937_64 gen(11);
    for (const u64 n : {8u, 64u, 512u, 4096u}) {
        auto store = MetaStore::make(StoreKind::BalancedTree, kArch);
        std::vector<u64> bases;
        for (u64 i = 0; i < n; ++i)
            bases.push_back(0x10000 + 0x1000 * i);
        std::shuffle(bases.begin(), bases.end(), gen);
        for (const u64 b : bases)
            store->insert(entry_of(b, 1 + b % 126, 0x200));
        const u64 bound = 2 * static_cast<u64>(std::log2(static_cast<double>(n))) + 2;
        for (int q = 0; q < 500; ++q) {
            const u64 b = bases[gen() % bases.size()];
            CHECK(store->find_containing(b + gen() % 0x200).loads <= bound);
        }
    }
}

// Property: the three store kinds are observationally identical on any
// insert/tombstone/find sequence; only the load counts may differ.
TEST_CASE("store equivalence over randomized operation sequences") {
    std::mt19937_64 gen(1234);
    for (int round = 0; round < 60; ++round) {
        auto list = MetaStore::make(StoreKind::LinkedList, kArch);
        auto tree = MetaStore::make(StoreKind::BalancedTree, kArch);
        auto oracle = MetaStore::make(StoreKind::Oracle, kArch);
        std::vector<std::pair<u64, u64>> ranges; // (base, size) ever inserted
        std::vector<std::array<MetadataRef, 3>> live_refs;
        u64 next_base = 0x10000;

        for (int op = 0; op < 120; ++op) {
            const u64 roll = gen() % 100;
            if (roll < 45 || live_refs.empty()) {
                const u64 size = 256 * (1 + gen() % 8);
                const u64 tag = 1 + gen() % 126;
                const MetadataEntry e = entry_of(next_base, tag, size);
                ranges.emplace_back(next_base, size);
                next_base += size + 256 * (gen() % 3);
                live_refs.push_back({list->insert(e), tree->insert(e), oracle->insert(e)});
            } else if (roll < 65) {
                const u64 pick = gen() % live_refs.size();
                list->tombstone(live_refs[pick][0]);
                tree->tombstone(live_refs[pick][1]);
                oracle->tombstone(live_refs[pick][2]);
                live_refs.erase(live_refs.begin() + static_cast<long>(pick));
            } else {
                const auto& [b, s] = ranges[gen() % ranges.size()];
                const u64 addr = b - 128 + gen() % (s + 256);
                const LookupResult rl = list->find_containing(addr);
                const LookupResult rt = tree->find_containing(addr);
                const LookupResult ro = oracle->find_containing(addr);
                CHECK(rl.found == rt.found);
                CHECK(rl.found == ro.found);
                if (rl.found) {
                    CHECK(rl.entry.base_tagged == rt.entry.base_tagged);
                    CHECK(rl.entry.base_tagged == ro.entry.base_tagged);
                    CHECK(rl.entry.size == rt.entry.size);
                    CHECK(rl.entry.size == ro.entry.size);
                }
            }
        }
    }
}
