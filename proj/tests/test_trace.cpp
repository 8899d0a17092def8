#include "doctest.h"

#include "support.hpp"
#include "tagsafe/sim.hpp"
#include "tagsafe/trace.hpp"

using namespace tagsafe;

TEST_CASE("parse well-formed events") {
    const Trace t = parse_trace("A 1 768\nL v0 1+0\nG LD v0 1+256 4\n");
    REQUIRE(t.events.size() == 3);
    CHECK(std::get<AllocEv>(t.events[0]) == AllocEv{1, 768});
    CHECK(std::get<LoadMetaEv>(t.events[1]) == LoadMetaEv{"v0", {1, 0}});
    CHECK(std::get<CheckGEv>(t.events[2]) == CheckGEv{false, "v0", {1, 256}, 4});
}

TEST_CASE("vreg must come from a prior L in the same kernel") {
    CHECK_THROWS_WITH_AS(parse_trace("A 1 768\nG LD v0 1+0 4\n"),
                         doctest::Contains("not defined by a prior L"), TraceError);
    // NULL is always permitted.
    CHECK_NOTHROW(parse_trace("A 1 768\nG LD NULL 1+0 4\n"));
    // Kernel boundaries clear vreg scope.
    CHECK_THROWS_AS(parse_trace("A 1 768\nK 1 BEGIN\nL v0 1+0\nK 1 END\n"
                                "K 2 BEGIN\nG LD v0 1+0 4\nK 2 END\n"),
                    TraceError);
}

TEST_CASE("undefined and reused ids are parse errors") {
    CHECK_THROWS_WITH_AS(parse_trace("F 9\n"), doctest::Contains("undefined allocation id"),
                         TraceError);
    CHECK_THROWS_WITH_AS(parse_trace("A 1 256\nA 1 256\n"), doctest::Contains("reused"),
                         TraceError);
    CHECK_THROWS_AS(parse_trace("X LD 4+0 4\n"), TraceError);
}

TEST_CASE("grammar diagnostics carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_trace("A 1 256\nQ 1\n"), doctest::Contains("line 2"), TraceError);
    CHECK_THROWS_AS(parse_trace("A 1\n"), TraceError);          // arity
    CHECK_THROWS_AS(parse_trace("G LD v0 1 4\n"), TraceError);  // malformed ptr
    CHECK_THROWS_AS(parse_trace("K 1 BEGIN\n"), TraceError);    // unterminated kernel
    CHECK_THROWS_AS(parse_trace("N 0\n"), TraceError);
}

TEST_CASE("hex and negative offsets, comments and blank lines") {
    const Trace t = parse_trace("# header\nA 1 0x300\n\nK 7 BEGIN\nX ST 1+-16 0x8\nK 7 END\n");
    REQUIRE(t.events.size() == 4);
    CHECK(std::get<AllocEv>(t.events[0]).size == 0x300);
    const AccessEv& x = std::get<AccessEv>(t.events[2]);
    CHECK(x.is_store);
    CHECK(x.ptr.offset == -16);
    CHECK(x.width == 8);
}

TEST_CASE("serialize / parse round trip on a generated trace") {
    SynthSpec spec;
    spec.alloc_count = 40;
    spec.working_set = 6;
    spec.access_count = 300;
    spec.kernel_count = 3;
    spec.nop_count = 900;
    spec.shared_count = 25;
    spec.seed = 9;
    const Trace t = generate_trace(spec);
    const std::string text = serialize_trace(t);
    const Trace back = parse_trace(text);
    CHECK(back == t);
    // Canonical form: serializing again is byte-stable.
    CHECK(serialize_trace(back) == text);
    CHECK(serialize_trace(Trace{}).empty());
}

TEST_CASE("generator hits the working-set target exactly") {
    SynthSpec spec;
    spec.alloc_count = 1081;
    spec.working_set = 4;
    spec.access_count = 4000;
    spec.seed = 17;
    const Trace t = generate_trace(spec);

    // Independent hand LRU oracle over the touch sequence.
    testing::LruStackOracle oracle;
    for (const TraceEvent& ev : t.events) {
        if (const auto* l = std::get_if<LoadMetaEv>(&ev))
            oracle.touch(l->ptr.alloc_id);
        else if (const auto* g = std::get_if<CheckGEv>(&ev))
            oracle.touch(g->ptr.alloc_id);
    }
    CHECK(oracle.max_dist == 4);
    CHECK(working_set(t) == 4);
    CHECK(live_allocations(t) == 1081);
}

TEST_CASE("single-allocation specs keep one live allocation") {
    SynthSpec spec;
    spec.alloc_count = 1;
    spec.working_set = 1;
    spec.access_count = 100;
    const Trace t = generate_trace(spec);
    u64 live = 0;
    for (const TraceEvent& ev : t.events) {
        if (std::holds_alternative<AllocEv>(ev))
            ++live;
        if (std::holds_alternative<FreeEv>(ev))
            --live;
        if (std::holds_alternative<CheckGEv>(ev))
            CHECK(live == 1);
    }
    CHECK(working_set(t) == 1);
}

TEST_CASE("same spec and seed give byte-identical traces") {
    SynthSpec spec;
    spec.alloc_count = 64;
    spec.working_set = 8;
    spec.access_count = 512;
    spec.seed = 123;
    CHECK(serialize_trace(generate_trace(spec)) == serialize_trace(generate_trace(spec)));
    spec.seed = 124;
    CHECK(serialize_trace(generate_trace(spec)) != serialize_trace(generate_trace(SynthSpec{
                                                       64, 256, 4096, 8, 512, 1, 0, 0, 4, false,
                                                       true, 123})));
}

TEST_CASE("infeasible specs are rejected") {
    SynthSpec spec;
    spec.alloc_count = 4;
    spec.working_set = 5; // more than the allocations
    spec.access_count = 100;
    CHECK_THROWS_AS(generate_trace(spec), TraceError);
    spec.working_set = 3;
    spec.access_count = 3; // cannot realize a reuse at distance 3
    CHECK_THROWS_AS(generate_trace(spec), TraceError);
    spec.access_count = 100;
    spec.size_min = 4096;
    spec.size_max = 256;
    CHECK_THROWS_AS(generate_trace(spec), TraceError);
}

TEST_CASE("generated hwonly-style traces use bare accesses") {
    SynthSpec spec;
    spec.alloc_count = 8;
    spec.working_set = 2;
    spec.access_count = 40;
    spec.hwonly_style = true;
    const Trace t = generate_trace(spec);
    u64 xs = 0;
    for (const TraceEvent& ev : t.events) {
        CHECK_FALSE(std::holds_alternative<LoadMetaEv>(ev));
        CHECK_FALSE(std::holds_alternative<CheckGEv>(ev));
        if (std::holds_alternative<AccessEv>(ev))
            ++xs;
    }
    CHECK(xs == 40);
}
