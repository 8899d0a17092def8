#include "tagsafe/ir.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

namespace tagsafe::ir {

bool is_terminator(Opcode op) {
    return op == Opcode::Br || op == Opcode::Cbr || op == Opcode::Ret;
}

int IrFunction::block_index(const std::string& label) const {
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].label == label)
            return static_cast<int>(i);
    return -1;
}

const SharedDecl* IrFunction::shared_decl(const std::string& nm) const {
    for (const SharedDecl& d : shared)
        if (d.name == nm)
            return &d;
    return nullptr;
}

std::vector<std::vector<int>> IrFunction::predecessors() const {
    std::vector<std::vector<int>> preds(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const Inst& term = blocks[b].insts.back();
        for (const std::string& t : term.targets) {
            const int ti = block_index(t);
            if (ti < 0)
                throw IrError("branch to unknown block '" + t + "'");
            preds[ti].push_back(static_cast<int>(b));
        }
    }
    return preds;
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
    throw IrError("line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> tokenize(std::string_view line) {
    std::vector<std::string> toks;
    std::string cur;
    for (const char c : line) {
        if (c == ' ' || c == '\t' || c == ',') {
            if (!cur.empty()) {
                toks.push_back(cur);
                cur.clear();
            }
        } else if (c == '(' || c == ')' || c == '{' || c == '}' || c == '[' || c == ']' ||
                   c == ':' || c == '=') {
            if (!cur.empty()) {
                toks.push_back(cur);
                cur.clear();
            }
            toks.push_back(std::string(1, c));
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty())
        toks.push_back(cur);
    return toks;
}

i64 parse_int(std::size_t line, const std::string& tok) {
    std::string_view sv = tok;
    bool neg = false;
    if (sv.starts_with("-")) {
        neg = true;
        sv.remove_prefix(1);
    }
    int base = 10;
    if (sv.starts_with("0x") || sv.starts_with("0X")) {
        sv.remove_prefix(2);
        base = 16;
    }
    u64 mag = 0;
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), mag, base);
    if (ec != std::errc{} || p != sv.data() + sv.size() || sv.empty())
        fail(line, "bad integer '" + tok + "'");
    return neg ? -static_cast<i64>(mag) : static_cast<i64>(mag);
}

Operand parse_operand(std::size_t line, const std::string& tok) {
    if (tok == "%tid")
        return Operand::tid();
    if (tok.starts_with("%"))
        return Operand::value(tok.substr(1));
    if (tok.starts_with("@"))
        return Operand::shared(tok.substr(1));
    return Operand::imm_of(parse_int(line, tok));
}

const std::map<std::string, Opcode>& opcode_table() {
    static const std::map<std::string, Opcode> table = {
        {"mov", Opcode::Mov},           {"phi", Opcode::Phi},
        {"ptradd", Opcode::PtrAdd},     {"ldg", Opcode::Ldg},
        {"stg", Opcode::Stg},           {"lds", Opcode::Lds},
        {"sts", Opcode::Sts},           {"loadmeta", Opcode::LoadMeta},
        {"memcheck.g", Opcode::MemcheckG}, {"memcheck.s", Opcode::MemcheckS},
        {"br", Opcode::Br},             {"cbr", Opcode::Cbr},
        {"ret", Opcode::Ret},           {"other", Opcode::Other},
    };
    return table;
}

std::string opcode_name(Opcode op) {
    for (const auto& [name, code] : opcode_table())
        if (code == op)
            return name;
    return "?";
}

struct Parser {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line_no = 0;

    std::optional<std::vector<std::string>> next_line() {
        while (pos <= text.size()) {
            if (pos == text.size())
                return std::nullopt;
            const std::size_t eol = text.find('\n', pos);
            std::string_view line =
                text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
            pos = eol == std::string_view::npos ? text.size() : eol + 1;
            ++line_no;
            if (const std::size_t hash = line.find('#'); hash != std::string_view::npos)
                line = line.substr(0, hash);
            auto toks = tokenize(line);
            if (!toks.empty())
                return toks;
        }
        return std::nullopt;
    }
};

Inst parse_inst(std::size_t line, const std::vector<std::string>& toks) {
    Inst inst;
    std::size_t i = 0;
    if (toks.size() >= 2 && toks[1] == "=") {
        if (!toks[0].starts_with("%"))
            fail(line, "result must be a %value");
        inst.result = toks[0].substr(1);
        i = 2;
    }
    if (i >= toks.size())
        fail(line, "missing opcode");
    const auto it = opcode_table().find(toks[i]);
    if (it == opcode_table().end())
        fail(line, "unknown opcode '" + toks[i] + "'");
    inst.op = it->second;
    ++i;

    const auto rest = [&](std::size_t from) {
        std::vector<std::string> out(toks.begin() + static_cast<long>(from), toks.end());
        return out;
    };

    switch (inst.op) {
    case Opcode::Phi: {
        // [label : %val] groups
        auto r = rest(i);
        std::size_t j = 0;
        while (j < r.size()) {
            if (r[j] != "[" || j + 4 >= r.size() || r[j + 2] != ":" || r[j + 4] != "]")
                fail(line, "malformed phi input, want [label: %value]");
            inst.phi_blocks.push_back(r[j + 1]);
            inst.args.push_back(parse_operand(line, r[j + 3]));
            j += 5;
        }
        if (inst.args.empty())
            fail(line, "phi needs at least one input");
        if (inst.result.empty())
            fail(line, "phi must define a value");
        break;
    }
    case Opcode::Br: {
        auto r = rest(i);
        if (r.size() != 1)
            fail(line, "br expects one target");
        inst.targets = {r[0]};
        break;
    }
    case Opcode::Cbr: {
        auto r = rest(i);
        if (r.size() != 3)
            fail(line, "cbr expects <cond>, <then>, <else>");
        inst.args.push_back(parse_operand(line, r[0]));
        inst.targets = {r[1], r[2]};
        break;
    }
    case Opcode::Ret: {
        if (i != toks.size())
            fail(line, "ret takes no operands");
        break;
    }
    default: {
        for (const std::string& tok : rest(i))
            inst.args.push_back(parse_operand(line, tok));
        break;
    }
    }

    // Width-carrying forms: last immediate is the access width.
    const auto take_width = [&](std::size_t argc_with_width) {
        if (inst.args.size() != argc_with_width || inst.args.back().kind != Operand::Kind::Imm ||
            inst.args.back().imm <= 0)
            fail(line, opcode_name(inst.op) + " expects " + std::to_string(argc_with_width - 1) +
                           " operand(s) plus a positive width");
        inst.width = static_cast<u64>(inst.args.back().imm);
        inst.args.pop_back();
    };
    switch (inst.op) {
    case Opcode::Ldg:
    case Opcode::Lds:
        take_width(2);
        if (inst.result.empty())
            fail(line, "load must define a value");
        break;
    case Opcode::Stg:
    case Opcode::Sts:
        take_width(3);
        break;
    case Opcode::MemcheckG:
        take_width(3);
        if (inst.result.empty())
            fail(line, "memcheck.g must define a value");
        break;
    case Opcode::MemcheckS:
        take_width(4);
        break;
    case Opcode::LoadMeta:
        if (inst.args.size() != 1)
            fail(line, "loadmeta expects one operand");
        if (inst.result.empty())
            fail(line, "loadmeta must define a value");
        break;
    case Opcode::Mov:
        if (inst.args.size() != 1)
            fail(line, "mov expects one operand");
        break;
    case Opcode::PtrAdd:
        if (inst.args.size() != 2)
            fail(line, "ptradd expects pointer, scalar");
        break;
    case Opcode::Other:
        if (inst.args.empty())
            fail(line, "other expects at least one operand");
        break;
    default:
        break;
    }
    if (!inst.result.empty() && is_terminator(inst.op))
        fail(line, "terminators do not define values");
    if (inst.result.empty() &&
        (inst.op == Opcode::Mov || inst.op == Opcode::PtrAdd || inst.op == Opcode::Other))
        fail(line, opcode_name(inst.op) + " must define a value");
    return inst;
}

} // namespace

IrFunction parse_ir(std::string_view text) {
    Parser p{text};
    IrFunction fn;

    auto header = p.next_line();
    if (!header)
        throw IrError("empty input");
    {
        const auto& t = *header;
        // kernel @name ( ptr %a , i64 %b ) {
        std::size_t i = 0;
        if (t.size() < 4 || t[i++] != "kernel")
            fail(p.line_no, "expected 'kernel @name(...) {'");
        if (!t[i].starts_with("@"))
            fail(p.line_no, "kernel name must start with '@'");
        fn.name = t[i++].substr(1);
        if (t[i++] != "(")
            fail(p.line_no, "expected '('");
        while (i < t.size() && t[i] != ")") {
            ParamDecl d;
            if (t[i] == "ptr")
                d.is_ptr = true;
            else if (t[i] != "i64")
                fail(p.line_no, "parameter type must be ptr or i64");
            ++i;
            if (i >= t.size() || !t[i].starts_with("%"))
                fail(p.line_no, "expected %name after parameter type");
            d.name = t[i++].substr(1);
            fn.params.push_back(d);
        }
        if (i >= t.size() || t[i++] != ")")
            fail(p.line_no, "expected ')'");
        if (i >= t.size() || t[i++] != "{")
            fail(p.line_no, "expected '{'");
    }

    u32 shared_cursor = 0x100;
    Block* cur = nullptr;
    bool closed = false;
    while (auto toksOpt = p.next_line()) {
        const auto& t = *toksOpt;
        if (t.size() == 1 && t[0] == "}") {
            closed = true;
            break;
        }
        if (t[0] == "shared") {
            if (cur != nullptr)
                fail(p.line_no, "shared declarations must precede the first block");
            if (t.size() != 3 || !t[1].starts_with("@"))
                fail(p.line_no, "want 'shared @name <bytes>'");
            SharedDecl d;
            d.name = t[1].substr(1);
            const i64 sz = parse_int(p.line_no, t[2]);
            if (sz <= 0)
                fail(p.line_no, "shared size must be positive");
            d.size = static_cast<u32>(sz);
            d.base = shared_cursor;
            shared_cursor = (shared_cursor + d.size + 15) / 16 * 16;
            fn.shared.push_back(d);
            continue;
        }
        if (t.size() == 2 && t[1] == ":") {
            fn.blocks.push_back(Block{t[0], {}});
            cur = &fn.blocks.back();
            continue;
        }
        if (cur == nullptr)
            fail(p.line_no, "instruction outside any block");
        cur->insts.push_back(parse_inst(p.line_no, t));
    }
    if (!closed)
        throw IrError("missing closing '}'");
    validate(fn);
    return fn;
}

void validate(const IrFunction& fn) {
    if (fn.blocks.empty())
        throw IrError("kernel has no blocks");
    std::set<std::string> defined;
    for (const ParamDecl& d : fn.params)
        if (!defined.insert(d.name).second)
            throw IrError("duplicate parameter %" + d.name);
    std::set<std::string> labels;
    for (const Block& b : fn.blocks)
        if (!labels.insert(b.label).second)
            throw IrError("duplicate block label '" + b.label + "'");

    for (const Block& b : fn.blocks) {
        if (b.insts.empty())
            throw IrError("block '" + b.label + "' is empty");
        bool seen_nonphi = false;
        for (std::size_t i = 0; i < b.insts.size(); ++i) {
            const Inst& inst = b.insts[i];
            const bool last = i + 1 == b.insts.size();
            if (is_terminator(inst.op) != last)
                throw IrError("block '" + b.label +
                              "' must end in exactly one terminator");
            if (inst.op == Opcode::Phi) {
                if (seen_nonphi)
                    throw IrError("phi after non-phi in block '" + b.label + "'");
            } else {
                seen_nonphi = true;
            }
            if (!inst.result.empty() && !defined.insert(inst.result).second)
                throw IrError("value %" + inst.result + " defined twice");
            for (const std::string& t : inst.targets)
                if (!labels.count(t))
                    throw IrError("branch to unknown block '" + t + "'");
        }
    }

    // Phi inputs must name exactly the block's predecessors.
    const auto preds = fn.predecessors();
    for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi) {
        std::set<std::string> pred_labels;
        for (const int p : preds[bi])
            pred_labels.insert(fn.blocks[p].label);
        for (const Inst& inst : fn.blocks[bi].insts) {
            if (inst.op != Opcode::Phi)
                continue;
            std::set<std::string> in(inst.phi_blocks.begin(), inst.phi_blocks.end());
            if (in != pred_labels)
                throw IrError("phi in block '" + fn.blocks[bi].label +
                              "' does not match its predecessors");
        }
    }

    // All value operands must be defined somewhere (params included).
    for (const Block& b : fn.blocks)
        for (const Inst& inst : b.insts)
            for (const Operand& a : inst.args) {
                if (a.kind == Operand::Kind::Value && !defined.count(a.name))
                    throw IrError("use of undefined value %" + a.name);
                if (a.kind == Operand::Kind::Shared && !fn.shared_decl(a.name))
                    throw IrError("use of undeclared shared array @" + a.name);
            }
}

namespace {

std::string operand_str(const Operand& a) {
    switch (a.kind) {
    case Operand::Kind::Value: return "%" + a.name;
    case Operand::Kind::Shared: return "@" + a.name;
    case Operand::Kind::Tid: return "%tid";
    case Operand::Kind::Imm: return std::to_string(a.imm);
    }
    return "?";
}

} // namespace

std::string print_ir(const IrFunction& fn) {
    std::ostringstream out;
    out << "kernel @" << fn.name << "(";
    for (std::size_t i = 0; i < fn.params.size(); ++i) {
        if (i)
            out << ", ";
        out << (fn.params[i].is_ptr ? "ptr %" : "i64 %") << fn.params[i].name;
    }
    out << ") {\n";
    for (const SharedDecl& d : fn.shared)
        out << "shared @" << d.name << " " << d.size << "\n";
    for (const Block& b : fn.blocks) {
        out << b.label << ":\n";
        for (const Inst& inst : b.insts) {
            out << "  ";
            if (!inst.result.empty())
                out << "%" << inst.result << " = ";
            out << opcode_name(inst.op);
            if (inst.op == Opcode::Phi) {
                for (std::size_t i = 0; i < inst.args.size(); ++i)
                    out << (i ? ", [" : " [") << inst.phi_blocks[i] << ": "
                        << operand_str(inst.args[i]) << "]";
            } else if (inst.op == Opcode::Br) {
                out << " " << inst.targets[0];
            } else if (inst.op == Opcode::Cbr) {
                out << " " << operand_str(inst.args[0]) << ", " << inst.targets[0] << ", "
                    << inst.targets[1];
            } else {
                for (std::size_t i = 0; i < inst.args.size(); ++i)
                    out << (i ? ", " : " ") << operand_str(inst.args[i]);
                if (inst.width)
                    out << (inst.args.empty() ? " " : ", ") << inst.width;
            }
            out << "\n";
        }
    }
    out << "}\n";
    return out.str();
}

} // namespace tagsafe::ir
