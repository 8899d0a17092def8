#include "tagsafe/metastore.hpp"

#include <map>
#include <unordered_map>
#include <vector>

namespace tagsafe {

namespace {

bool ranges_overlap(u64 b1, u64 s1, u64 b2, u64 s2) {
    return b1 < b2 + s2 && b2 < b1 + s1;
}

void validate_entry(const MetadataEntry& e, const ArchConfig& cfg) {
    if (e.size == 0)
        throw StoreError("metadata entry size must be >= 1");
    const u64 base = mask_addr(e.base_tagged, cfg);
    if (base % cfg.alignment != 0)
        throw StoreError("metadata entry base not aligned");
    if (base + e.size - 1 > cfg.va_mask())
        throw StoreError("metadata entry range exceeds address space");
}

u64 tombstoned_base(u64 base, const ArchConfig& cfg) {
    return (cfg.tombstone_tag() << cfg.va_bits) | base;
}

// Linked list of 32-byte nodes (16-byte entry + two link words), head
// insertion. Hit cost is the node's 1-based position from the head; a
// failed search walks the whole list.
class ListStore final : public MetaStore {
public:
    ListStore(const ArchConfig& cfg, u64 threshold) : cfg_(cfg), threshold_(threshold) {}

    MetadataRef insert(const MetadataEntry& entry) override {
        validate_entry(entry, cfg_);
        const u64 base = mask_addr(entry.base_tagged, cfg_);
        for (u64 loc = head_; loc != 0; loc = nodes_.at(loc).next) {
            Node& n = nodes_.at(loc);
            const u64 nbase = mask_addr(n.entry.base_tagged, cfg_);
            if (!ranges_overlap(base, entry.size, nbase, n.entry.size))
                continue;
            if (nbase == base && n.entry.size == entry.size && is_tombstoned(n.entry)) {
                n.entry = entry; // region reuse keeps the node and its location
                count_op();
                return {loc};
            }
            throw StoreError("insert overlaps an existing metadata range");
        }
        const u64 loc = kMetadataRegionBase + 32 * next_slot_++;
        nodes_.emplace(loc, Node{entry, head_});
        head_ = loc;
        count_op();
        return {loc};
    }

    LookupResult find_containing(u64 addr) const override {
        u64 loads = 0;
        for (u64 loc = head_; loc != 0;) {
            const Node& n = nodes_.at(loc);
            ++loads;
            if (addr - mask_addr(n.entry.base_tagged, cfg_) < n.entry.size)
                return {true, {loc}, n.entry, loads};
            loc = n.next;
        }
        return {false, {}, {}, loads};
    }

    MetadataEntry read_at(MetadataRef ref) const override {
        auto it = nodes_.find(ref.location);
        if (it == nodes_.end())
            throw StoreError("read_at: invalid metadata reference");
        return it->second.entry;
    }

    void tombstone(MetadataRef ref) override {
        auto it = nodes_.find(ref.location);
        if (it == nodes_.end())
            throw StoreError("tombstone: invalid metadata reference");
        if (is_tombstoned(it->second.entry))
            throw StoreError("tombstone: entry already tombstoned");
        const u64 base = mask_addr(it->second.entry.base_tagged, cfg_);
        it->second.entry.base_tagged = tombstoned_base(base, cfg_);
        count_op();
    }

    u64 storage_bytes() const override { return 32 * nodes_.size(); }
    u64 entry_count() const override { return nodes_.size(); }
    StoreKind kind() const override { return StoreKind::LinkedList; }

private:
    struct Node {
        MetadataEntry entry;
        u64 next = 0;
    };

    bool is_tombstoned(const MetadataEntry& e) const {
        return tag_of(e.base_tagged, cfg_) == cfg_.tombstone_tag();
    }

    void count_op() {
        if (++ops_ > threshold_)
            sweep();
    }

    void sweep() {
        u64 prev = 0;
        u64 loc = head_;
        while (loc != 0) {
            const u64 next = nodes_.at(loc).next;
            if (is_tombstoned(nodes_.at(loc).entry)) {
                if (prev == 0)
                    head_ = next;
                else
                    nodes_.at(prev).next = next;
                nodes_.erase(loc);
            } else {
                prev = loc;
            }
            loc = next;
        }
    }

    ArchConfig cfg_;
    u64 threshold_;
    std::unordered_map<u64, Node> nodes_;
    u64 head_ = 0;
    u64 next_slot_ = 0;
    u64 ops_ = 0;
};

// AVL tree keyed by masked base address. Containment lookup follows the
// ordinary search path for the address; disjointness guarantees the
// covering node lies on that path, so the cost is the number of nodes
// visited before containment (or the full path on a miss).
class TreeStore final : public MetaStore {
public:
    TreeStore(const ArchConfig& cfg, u64 threshold) : cfg_(cfg), threshold_(threshold) {}

    MetadataRef insert(const MetadataEntry& entry) override {
        validate_entry(entry, cfg_);
        const u64 base = mask_addr(entry.base_tagged, cfg_);
        const int cand = floor_node(base + entry.size - 1);
        if (cand >= 0) {
            Node& c = pool_[cand];
            if (ranges_overlap(base, entry.size, c.base, c.entry.size)) {
                if (c.base == base && c.entry.size == entry.size && is_tombstoned(c.entry)) {
                    c.entry = entry;
                    count_op();
                    return {c.location};
                }
                throw StoreError("insert overlaps an existing metadata range");
            }
        }
        const u64 loc = kMetadataRegionBase + 32 * next_slot_++;
        const int idx = new_node(entry, base, loc);
        root_ = avl_insert(root_, idx);
        by_loc_[loc] = idx;
        count_op();
        return {loc};
    }

    LookupResult find_containing(u64 addr) const override {
        u64 loads = 0;
        int n = root_;
        while (n >= 0) {
            ++loads;
            const Node& nd = pool_[n];
            if (addr - nd.base < nd.entry.size)
                return {true, {nd.location}, nd.entry, loads};
            n = addr < nd.base ? nd.left : nd.right;
        }
        return {false, {}, {}, loads};
    }

    MetadataEntry read_at(MetadataRef ref) const override {
        auto it = by_loc_.find(ref.location);
        if (it == by_loc_.end())
            throw StoreError("read_at: invalid metadata reference");
        return pool_[it->second].entry;
    }

    void tombstone(MetadataRef ref) override {
        auto it = by_loc_.find(ref.location);
        if (it == by_loc_.end())
            throw StoreError("tombstone: invalid metadata reference");
        Node& n = pool_[it->second];
        if (is_tombstoned(n.entry))
            throw StoreError("tombstone: entry already tombstoned");
        n.entry.base_tagged = tombstoned_base(n.base, cfg_);
        count_op();
    }

    u64 storage_bytes() const override { return 32 * by_loc_.size(); }
    u64 entry_count() const override { return by_loc_.size(); }
    StoreKind kind() const override { return StoreKind::BalancedTree; }

private:
    struct Node {
        MetadataEntry entry;
        u64 base = 0;
        u64 location = 0;
        int left = -1;
        int right = -1;
        int height = 1;
    };

    bool is_tombstoned(const MetadataEntry& e) const {
        return tag_of(e.base_tagged, cfg_) == cfg_.tombstone_tag();
    }

    int new_node(const MetadataEntry& e, u64 base, u64 loc) {
        int idx;
        if (!free_.empty()) {
            idx = free_.back();
            free_.pop_back();
            pool_[idx] = Node{};
        } else {
            idx = static_cast<int>(pool_.size());
            pool_.emplace_back();
        }
        pool_[idx].entry = e;
        pool_[idx].base = base;
        pool_[idx].location = loc;
        return idx;
    }

    int height(int n) const { return n < 0 ? 0 : pool_[n].height; }

    void update(int n) {
        pool_[n].height = 1 + std::max(height(pool_[n].left), height(pool_[n].right));
    }

    int rotate_right(int n) {
        const int l = pool_[n].left;
        pool_[n].left = pool_[l].right;
        pool_[l].right = n;
        update(n);
        update(l);
        return l;
    }

    int rotate_left(int n) {
        const int r = pool_[n].right;
        pool_[n].right = pool_[r].left;
        pool_[r].left = n;
        update(n);
        update(r);
        return r;
    }

    int rebalance(int n) {
        update(n);
        const int bf = height(pool_[n].left) - height(pool_[n].right);
        if (bf > 1) {
            if (height(pool_[pool_[n].left].left) < height(pool_[pool_[n].left].right))
                pool_[n].left = rotate_left(pool_[n].left);
            return rotate_right(n);
        }
        if (bf < -1) {
            if (height(pool_[pool_[n].right].right) < height(pool_[pool_[n].right].left))
                pool_[n].right = rotate_right(pool_[n].right);
            return rotate_left(n);
        }
        return n;
    }

    int avl_insert(int n, int idx) {
        if (n < 0)
            return idx;
        if (pool_[idx].base < pool_[n].base)
            pool_[n].left = avl_insert(pool_[n].left, idx);
        else
            pool_[n].right = avl_insert(pool_[n].right, idx);
        return rebalance(n);
    }

    int avl_remove(int n, u64 base) {
        if (n < 0)
            throw StoreError("tree remove: key not found");
        if (base < pool_[n].base) {
            pool_[n].left = avl_remove(pool_[n].left, base);
        } else if (base > pool_[n].base) {
            pool_[n].right = avl_remove(pool_[n].right, base);
        } else {
            if (pool_[n].left < 0 || pool_[n].right < 0) {
                const int child = pool_[n].left >= 0 ? pool_[n].left : pool_[n].right;
                free_.push_back(n);
                return child;
            }
            int s = pool_[n].right;
            while (pool_[s].left >= 0)
                s = pool_[s].left;
            pool_[n].entry = pool_[s].entry;
            pool_[n].base = pool_[s].base;
            pool_[n].location = pool_[s].location;
            by_loc_[pool_[n].location] = n;
            pool_[n].right = avl_remove(pool_[n].right, pool_[s].base);
        }
        return rebalance(n);
    }

    // Greatest base <= addr, or -1.
    int floor_node(u64 addr) const {
        int best = -1;
        int n = root_;
        while (n >= 0) {
            if (pool_[n].base <= addr) {
                best = n;
                n = pool_[n].right;
            } else {
                n = pool_[n].left;
            }
        }
        return best;
    }

    void count_op() {
        if (++ops_ > threshold_)
            sweep();
    }

    void sweep() {
        std::vector<std::pair<u64, u64>> dead; // (base, location)
        for (const auto& [loc, idx] : by_loc_)
            if (is_tombstoned(pool_[idx].entry))
                dead.emplace_back(pool_[idx].base, loc);
        for (const auto& [base, loc] : dead) {
            root_ = avl_remove(root_, base);
            by_loc_.erase(loc);
        }
    }

    ArchConfig cfg_;
    u64 threshold_;
    std::vector<Node> pool_;
    std::vector<int> free_;
    int root_ = -1;
    std::unordered_map<u64, int> by_loc_;
    u64 next_slot_ = 0;
    u64 ops_ = 0;
};

// Exact map with unit lookup cost: the unrealizable baseline structure.
// Entries are 16 bytes with no link words.
class OracleStore final : public MetaStore {
public:
    OracleStore(const ArchConfig& cfg, u64 threshold) : cfg_(cfg), threshold_(threshold) {}

    MetadataRef insert(const MetadataEntry& entry) override {
        validate_entry(entry, cfg_);
        const u64 base = mask_addr(entry.base_tagged, cfg_);
        auto it = by_base_.upper_bound(base + entry.size - 1);
        if (it != by_base_.begin()) {
            --it;
            Slot& s = it->second;
            if (ranges_overlap(base, entry.size, it->first, s.entry.size)) {
                if (it->first == base && s.entry.size == entry.size && is_tombstoned(s.entry)) {
                    s.entry = entry;
                    count_op();
                    return {s.location};
                }
                throw StoreError("insert overlaps an existing metadata range");
            }
        }
        const u64 loc = kMetadataRegionBase + 16 * next_slot_++;
        by_base_.emplace(base, Slot{entry, loc});
        loc_to_base_[loc] = base;
        count_op();
        return {loc};
    }

    LookupResult find_containing(u64 addr) const override {
        auto it = by_base_.upper_bound(addr);
        if (it != by_base_.begin()) {
            --it;
            if (addr - it->first < it->second.entry.size)
                return {true, {it->second.location}, it->second.entry, 1};
        }
        return {false, {}, {}, 1};
    }

    MetadataEntry read_at(MetadataRef ref) const override {
        auto it = loc_to_base_.find(ref.location);
        if (it == loc_to_base_.end())
            throw StoreError("read_at: invalid metadata reference");
        return by_base_.at(it->second).entry;
    }

    void tombstone(MetadataRef ref) override {
        auto it = loc_to_base_.find(ref.location);
        if (it == loc_to_base_.end())
            throw StoreError("tombstone: invalid metadata reference");
        Slot& s = by_base_.at(it->second);
        if (is_tombstoned(s.entry))
            throw StoreError("tombstone: entry already tombstoned");
        s.entry.base_tagged = tombstoned_base(it->second, cfg_);
        count_op();
    }

    u64 storage_bytes() const override { return 16 * by_base_.size(); }
    u64 entry_count() const override { return by_base_.size(); }
    StoreKind kind() const override { return StoreKind::Oracle; }

private:
    struct Slot {
        MetadataEntry entry;
        u64 location = 0;
    };

    bool is_tombstoned(const MetadataEntry& e) const {
        return tag_of(e.base_tagged, cfg_) == cfg_.tombstone_tag();
    }

    void count_op() {
        if (++ops_ > threshold_)
            sweep();
    }

    void sweep() {
        for (auto it = by_base_.begin(); it != by_base_.end();) {
            if (is_tombstoned(it->second.entry)) {
                loc_to_base_.erase(it->second.location);
                it = by_base_.erase(it);
            } else {
                ++it;
            }
        }
    }

    ArchConfig cfg_;
    u64 threshold_;
    std::map<u64, Slot> by_base_;
    std::unordered_map<u64, u64> loc_to_base_;
    u64 next_slot_ = 0;
    u64 ops_ = 0;
};

} // namespace

StoreKind store_kind_from_name(std::string_view name) {
    if (name == "list")
        return StoreKind::LinkedList;
    if (name == "tree")
        return StoreKind::BalancedTree;
    if (name == "oracle")
        return StoreKind::Oracle;
    throw StoreError("unknown store kind: " + std::string(name));
}

std::string_view store_kind_name(StoreKind kind) {
    switch (kind) {
    case StoreKind::LinkedList: return "list";
    case StoreKind::BalancedTree: return "tree";
    case StoreKind::Oracle: return "oracle";
    }
    return "?";
}

std::unique_ptr<MetaStore> MetaStore::make(StoreKind kind, const ArchConfig& cfg,
                                           u64 reclaim_threshold) {
    cfg.validate();
    switch (kind) {
    case StoreKind::LinkedList: return std::make_unique<ListStore>(cfg, reclaim_threshold);
    case StoreKind::BalancedTree: return std::make_unique<TreeStore>(cfg, reclaim_threshold);
    case StoreKind::Oracle: return std::make_unique<OracleStore>(cfg, reclaim_threshold);
    }
    throw StoreError("unknown store kind");
}

} // namespace tagsafe
