#include "tagsafe/arch.hpp"

namespace tagsafe {

ArchConfig ArchConfig::preset(std::string_view name) {
    ArchConfig cfg;
    if (name == "va57t7") {
        cfg.va_bits = 57;
        cfg.tag_bits = 7;
    } else if (name == "va48t16") {
        cfg.va_bits = 48;
        cfg.tag_bits = 16;
    } else {
        throw CodecError("unknown arch preset: " + std::string(name));
    }
    return cfg;
}

void ArchConfig::validate() const {
    if (va_bits + tag_bits != 64)
        throw CodecError("va_bits + tag_bits must equal 64");
    const bool known = (va_bits == 57 && tag_bits == 7) ||
                       (va_bits == 48 && tag_bits == 16);
    if (!known)
        throw CodecError("unsupported address split: va" + std::to_string(va_bits) +
                         "/t" + std::to_string(tag_bits));
    if (alignment < 256 || (alignment & (alignment - 1)) != 0)
        throw CodecError("alignment must be a power of two >= 256");
}

u64 encode_addr(u64 va, u64 tag, const ArchConfig& cfg) {
    if (va > cfg.va_mask())
        throw CodecError("virtual address exceeds " + std::to_string(cfg.va_bits) + " bits");
    if (tag >= cfg.tag_count())
        throw CodecError("tag exceeds " + std::to_string(cfg.tag_bits) + " bits");
    return (tag << cfg.va_bits) | va;
}

u64 mask_addr(u64 tagged, const ArchConfig& cfg) {
    return tagged & cfg.va_mask();
}

u64 tag_of(u64 tagged, const ArchConfig& cfg) {
    return tagged >> cfg.va_bits;
}

} // namespace tagsafe
