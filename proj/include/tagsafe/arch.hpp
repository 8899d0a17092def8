#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tagsafe {

using u8 = std::uint8_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Address-space split of the 64-bit simulated address: the topmost
/// `tag_bits` carry the allocation tag, the low `va_bits` carry the
/// virtual address. Addresses are synthetic values; nothing here is ever
/// dereferenced as host memory.
struct ArchConfig {
    unsigned va_bits = 57;
    unsigned tag_bits = 7;
    u64 alignment = 256; // allocator base alignment, power of two
    bool distinct_adjacent_tags = false;

    static constexpr u64 kNullTag = 0;

    // "va57t7" (57-bit VA, 7-bit tag) or "va48t16" (48-bit VA, 16-bit tag)
    static ArchConfig preset(std::string_view name);

    void validate() const;

    u64 va_mask() const { return (u64{1} << va_bits) - 1; }
    u64 tag_count() const { return u64{1} << tag_bits; }
    // Tags 0 (untagged/compat) and all-ones (tombstone) are reserved.
    u64 valid_tag_count() const { return tag_count() - 2; }
    u64 tombstone_tag() const { return tag_count() - 1; }
};

// Pack a virtual address and tag into one 64-bit value. Throws CodecError
// when either operand does not fit its field.
u64 encode_addr(u64 va, u64 tag, const ArchConfig& cfg);

// Clear the tag field, leaving the plain virtual address.
u64 mask_addr(u64 tagged, const ArchConfig& cfg);

// Extract the tag field.
u64 tag_of(u64 tagged, const ArchConfig& cfg);

} // namespace tagsafe
