#pragma once

#include <algorithm>
#include <deque>
#include <random>
#include <vector>

#include "tagsafe/trace.hpp"

namespace tagsafe::testing {

// Hand-rolled LRU stack-distance oracle, independent of sim.cpp: returns
// the distance of each touch (0 = first touch) and tracks the maximum.
struct LruStackOracle {
    std::deque<u64> stack;
    u64 max_dist = 0;

    u64 touch(u64 id) {
        auto it = std::find(stack.begin(), stack.end(), id);
        u64 dist = 0;
        if (it != stack.end()) {
            dist = static_cast<u64>(it - stack.begin()) + 1;
            max_dist = std::max(max_dist, dist);
            stack.erase(it);
        }
        stack.push_front(id);
        return dist;
    }
};

// Allocation-granularity model of a fully associative LRU cache with
// free-time invalidation: predicts how many metadata-structure searches a
// replay must perform (first touches, capacity misses, and re-touches
// after the cached entry was invalidated by a free).
struct MlbMissOracle {
    std::size_t capacity;
    std::deque<u64> resident; // front = most recently used
    u64 misses = 0;

    explicit MlbMissOracle(std::size_t cap) : capacity(cap) {}

    void touch(u64 id) {
        auto it = std::find(resident.begin(), resident.end(), id);
        if (it != resident.end()) {
            resident.erase(it);
        } else {
            ++misses;
            if (resident.size() == capacity)
                resident.pop_back();
        }
        resident.push_front(id);
    }

    void free(u64 id) {
        auto it = std::find(resident.begin(), resident.end(), id);
        if (it != resident.end())
            resident.erase(it);
    }

    // Feed a whole trace; touches are L/G/X events, frees invalidate.
    void run(const Trace& trace) {
        for (const TraceEvent& ev : trace.events) {
            if (const auto* l = std::get_if<LoadMetaEv>(&ev))
                touch(l->ptr.alloc_id);
            else if (const auto* g = std::get_if<CheckGEv>(&ev))
                touch(g->ptr.alloc_id);
            else if (const auto* x = std::get_if<AccessEv>(&ev))
                touch(x->ptr.alloc_id);
            else if (const auto* f = std::get_if<FreeEv>(&ev))
                free(f->id);
        }
    }
};

} // namespace tagsafe::testing
