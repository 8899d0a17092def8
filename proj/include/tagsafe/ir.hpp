#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tagsafe/arch.hpp"

namespace tagsafe::ir {

struct IrError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Opcode {
    Mov,
    Phi,
    PtrAdd, // pointer (first operand) plus scalar
    Ldg,
    Stg,
    Lds,
    Sts,
    LoadMeta,
    MemcheckG,
    MemcheckS,
    Br,
    Cbr,
    Ret,
    Other // opaque scalar computation; evaluates to the wrapping sum
};

struct Operand {
    enum class Kind { Value, Imm, Shared, Tid };
    Kind kind = Kind::Imm;
    std::string name; // Value / Shared
    i64 imm = 0;

    static Operand value(std::string n) { return {Kind::Value, std::move(n), 0}; }
    static Operand imm_of(i64 v) { return {Kind::Imm, {}, v}; }
    static Operand shared(std::string n) { return {Kind::Shared, std::move(n), 0}; }
    static Operand tid() { return {Kind::Tid, {}, 0}; }
};

struct Inst {
    Opcode op;
    std::string result;            // empty for void instructions
    std::vector<Operand> args;
    std::vector<std::string> phi_blocks; // parallel to args for Phi
    u64 width = 0;                 // access width for memory/check ops
    std::vector<std::string> targets;    // Br/Cbr successor labels
};

struct Block {
    std::string label;
    std::vector<Inst> insts;
};

struct ParamDecl {
    std::string name;
    bool is_ptr = false;
};

struct SharedDecl {
    std::string name;
    u32 size = 0;
    u32 base = 0; // assigned at parse, 16-aligned
};

/// One kernel in SSA form: every value defined once, every block ends in
/// exactly one terminator, phi inputs match the predecessor set.
struct IrFunction {
    std::string name;
    std::vector<ParamDecl> params;
    std::vector<SharedDecl> shared;
    std::vector<Block> blocks;

    const Block& entry() const { return blocks.at(0); }
    int block_index(const std::string& label) const;
    const SharedDecl* shared_decl(const std::string& name) const;
    std::vector<std::vector<int>> predecessors() const;
};

// Textual form:
//   kernel @name(ptr %p, i64 %n) {
//   shared @buf 1024
//   entry:
//     %a = mov %p
//     %q = ptradd %a, %tid
//     %v = ldg %q, 4
//     stg %q, %v, 4
//     cbr %n, left, right
//     ...
//     ret
//   }
// Phi: %x = phi [left: %a], [right: %b]
IrFunction parse_ir(std::string_view text);
std::string print_ir(const IrFunction& fn);

// Structural validation (also run by parse_ir).
void validate(const IrFunction& fn);

bool is_terminator(Opcode op);

} // namespace tagsafe::ir
