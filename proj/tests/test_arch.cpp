#include "doctest.h"

#include <random>

#include "tagsafe/arch.hpp"

using namespace tagsafe;

TEST_CASE("presets") {
    const ArchConfig a = ArchConfig::preset("va57t7");
    CHECK(a.va_bits == 57);
    CHECK(a.tag_bits == 7);
    CHECK(a.valid_tag_count() == 126);
    CHECK(a.tombstone_tag() == 0x7f);

    const ArchConfig b = ArchConfig::preset("va48t16");
    CHECK(b.va_bits == 48);
    CHECK(b.tag_bits == 16);
    CHECK(b.valid_tag_count() == 65534);
    CHECK(b.tombstone_tag() == 0xffff);

    CHECK_THROWS_AS(ArchConfig::preset("va60t4"), CodecError);

    ArchConfig bad = a;
    bad.va_bits = 56;
    bad.tag_bits = 8;
    CHECK_THROWS_AS(bad.validate(), CodecError);
    bad = a;
    bad.alignment = 192;
    CHECK_THROWS_AS(bad.validate(), CodecError);
}

TEST_CASE("encode places the tag in the topmost bits") {
    const ArchConfig t7 = ArchConfig::preset("va57t7");
    const ArchConfig t16 = ArchConfig::preset("va48t16");

    CHECK(encode_addr(0x1000, 0x2a, t7) == 0x5400'0000'0000'1000ull);
    CHECK(encode_addr(0x1000, 0x00, t7) == 0x0000'0000'0000'1000ull);
    CHECK(encode_addr(0x1000, 0xbeef, t16) == 0xbeef'0000'0000'1000ull);

    CHECK_THROWS_AS(encode_addr(u64{1} << 57, 1, t7), CodecError);
    CHECK_THROWS_AS(encode_addr(0x1000, 0x80, t7), CodecError);
}

TEST_CASE("mask and tag_of invert encode") {
    const ArchConfig t7 = ArchConfig::preset("va57t7");
    const ArchConfig t16 = ArchConfig::preset("va48t16");

    CHECK(mask_addr(0x5400'0000'0000'1000ull, t7) == 0x1000);
    CHECK(mask_addr(0x0000'0000'0000'1000ull, t7) == 0x1000);
    CHECK(mask_addr(0xbeef'0000'0000'1000ull, t16) == 0x1000);

    CHECK(tag_of(0x5400'0000'0000'1000ull, t7) == 0x2a);
    CHECK(tag_of(0x0000'0000'0000'1000ull, t7) == 0x00);
    CHECK(tag_of(0xfe00'0000'0000'0000ull, t7) == 0x7f);
}

TEST_CASE("round trip and idempotence over random values") {
    std::mt19937_64 gen(7);
    for (const char* preset : {"va57t7", "va48t16"}) {
        const ArchConfig cfg = ArchConfig::preset(preset);
        for (int i = 0; i < 2000; ++i) {
            const u64 va = gen() & cfg.va_mask();
            const u64 tag = gen() & (cfg.tag_count() - 1);
            const u64 p = encode_addr(va, tag, cfg);
            CHECK(mask_addr(p, cfg) == va);
            CHECK(tag_of(p, cfg) == tag);
            CHECK(mask_addr(mask_addr(p, cfg), cfg) == mask_addr(p, cfg));
        }
    }
}
