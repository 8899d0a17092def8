#include "tagsafe/trace.hpp"

#include <charconv>
#include <set>
#include <sstream>

namespace tagsafe {

namespace {

struct LineCtx {
    std::size_t line_no;
};

[[noreturn]] void fail(const LineCtx& ctx, const std::string& msg) {
    throw TraceError("line " + std::to_string(ctx.line_no) + ": " + msg);
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
            ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t')
            ++j;
        if (j > i)
            out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

u64 parse_u64(const LineCtx& ctx, std::string_view tok, const char* what) {
    u64 value = 0;
    int base = 10;
    std::string_view digits = tok;
    if (digits.starts_with("0x") || digits.starts_with("0X")) {
        digits.remove_prefix(2);
        base = 16;
    }
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value, base);
    if (ec != std::errc{} || p != digits.data() + digits.size() || digits.empty())
        fail(ctx, std::string("bad ") + what + " '" + std::string(tok) + "'");
    return value;
}

i64 parse_i64(const LineCtx& ctx, std::string_view tok, const char* what) {
    bool neg = false;
    if (tok.starts_with("-")) {
        neg = true;
        tok.remove_prefix(1);
    }
    const u64 mag = parse_u64(ctx, tok, what);
    if (mag > u64{1} << 62)
        fail(ctx, std::string(what) + " out of range");
    return neg ? -static_cast<i64>(mag) : static_cast<i64>(mag);
}

PtrExpr parse_ptr(const LineCtx& ctx, std::string_view tok) {
    const std::size_t plus = tok.find('+');
    if (plus == std::string_view::npos || plus == 0 || plus + 1 >= tok.size())
        fail(ctx, "bad pointer expression '" + std::string(tok) + "' (want <id>+<offset>)");
    PtrExpr p;
    p.alloc_id = parse_u64(ctx, tok.substr(0, plus), "allocation id");
    p.offset = parse_i64(ctx, tok.substr(plus + 1), "offset");
    return p;
}

bool parse_kind(const LineCtx& ctx, std::string_view tok) {
    if (tok == "LD")
        return false;
    if (tok == "ST")
        return true;
    fail(ctx, "bad access kind '" + std::string(tok) + "' (want LD or ST)");
}

void need_args(const LineCtx& ctx, const std::vector<std::string_view>& toks, std::size_t n) {
    if (toks.size() != n)
        fail(ctx, "'" + std::string(toks[0]) + "' expects " + std::to_string(n - 1) +
                      " operand(s), got " + std::to_string(toks.size() - 1));
}

// Static well-formedness: ids introduced once by A before use, vregs
// defined by L in the current kernel scope, kernels non-nested.
class Validator {
public:
    void on_alloc(const LineCtx& ctx, u64 id) {
        if (!ids_.insert(id).second)
            fail(ctx, "allocation id " + std::to_string(id) + " reused");
    }
    void check_id(const LineCtx& ctx, u64 id) {
        if (!ids_.count(id))
            fail(ctx, "undefined allocation id " + std::to_string(id));
    }
    void on_loadmeta(const LineCtx& ctx, const std::string& vreg) {
        if (vreg == "NULL")
            fail(ctx, "NULL is not a definable vreg");
        vregs_.insert(vreg);
    }
    void check_vreg(const LineCtx& ctx, const std::string& vreg) {
        if (!vregs_.count(vreg))
            fail(ctx, "vreg '" + vreg + "' not defined by a prior L in this kernel");
    }
    void on_kernel_begin(const LineCtx& ctx, u64 id) {
        if (in_kernel_)
            fail(ctx, "kernel " + std::to_string(id) + " begins inside kernel " +
                          std::to_string(kernel_id_));
        in_kernel_ = true;
        kernel_id_ = id;
        vregs_.clear();
    }
    void on_kernel_end(const LineCtx& ctx, u64 id) {
        if (!in_kernel_ || kernel_id_ != id)
            fail(ctx, "kernel " + std::to_string(id) + " ends without matching begin");
        in_kernel_ = false;
        vregs_.clear();
    }
    void on_eof(std::size_t line_no) {
        if (in_kernel_)
            throw TraceError("line " + std::to_string(line_no) + ": kernel " +
                             std::to_string(kernel_id_) + " never ends");
    }

private:
    std::set<u64> ids_;
    std::set<std::string> vregs_;
    bool in_kernel_ = false;
    u64 kernel_id_ = 0;
};

} // namespace

Trace parse_trace(std::string_view text) {
    Trace trace;
    Validator v;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (const std::size_t hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        const auto toks = split_ws(line);
        if (toks.empty())
            continue;
        const LineCtx ctx{line_no};
        const std::string_view op = toks[0];
        if (op == "K") {
            need_args(ctx, toks, 3);
            const u64 id = parse_u64(ctx, toks[1], "kernel id");
            if (toks[2] == "BEGIN") {
                v.on_kernel_begin(ctx, id);
                trace.events.emplace_back(KernelBeginEv{id});
            } else if (toks[2] == "END") {
                v.on_kernel_end(ctx, id);
                trace.events.emplace_back(KernelEndEv{id});
            } else {
                fail(ctx, "expected BEGIN or END");
            }
        } else if (op == "A") {
            need_args(ctx, toks, 3);
            AllocEv e{parse_u64(ctx, toks[1], "allocation id"), parse_u64(ctx, toks[2], "size")};
            if (e.size == 0)
                fail(ctx, "allocation size must be >= 1");
            v.on_alloc(ctx, e.id);
            trace.events.emplace_back(e);
        } else if (op == "F") {
            need_args(ctx, toks, 2);
            FreeEv e{parse_u64(ctx, toks[1], "allocation id")};
            v.check_id(ctx, e.id);
            trace.events.emplace_back(e);
        } else if (op == "L") {
            need_args(ctx, toks, 3);
            LoadMetaEv e{std::string(toks[1]), parse_ptr(ctx, toks[2])};
            v.check_id(ctx, e.ptr.alloc_id);
            v.on_loadmeta(ctx, e.vreg);
            trace.events.emplace_back(e);
        } else if (op == "G") {
            need_args(ctx, toks, 5);
            CheckGEv e;
            e.is_store = parse_kind(ctx, toks[1]);
            if (toks[2] != "NULL") {
                e.vreg = std::string(toks[2]);
                v.check_vreg(ctx, *e.vreg);
            }
            e.ptr = parse_ptr(ctx, toks[3]);
            e.width = parse_u64(ctx, toks[4], "width");
            if (e.width == 0)
                fail(ctx, "width must be >= 1");
            v.check_id(ctx, e.ptr.alloc_id);
            trace.events.emplace_back(e);
        } else if (op == "S") {
            need_args(ctx, toks, 5);
            CheckSEv e;
            e.addr = static_cast<u32>(parse_u64(ctx, toks[1], "shared address"));
            e.base = static_cast<u32>(parse_u64(ctx, toks[2], "shared base"));
            e.size = static_cast<u32>(parse_u64(ctx, toks[3], "shared size"));
            e.width = parse_u64(ctx, toks[4], "width");
            if (e.width == 0)
                fail(ctx, "width must be >= 1");
            trace.events.emplace_back(e);
        } else if (op == "X") {
            need_args(ctx, toks, 4);
            AccessEv e;
            e.is_store = parse_kind(ctx, toks[1]);
            e.ptr = parse_ptr(ctx, toks[2]);
            e.width = parse_u64(ctx, toks[3], "width");
            if (e.width == 0)
                fail(ctx, "width must be >= 1");
            v.check_id(ctx, e.ptr.alloc_id);
            trace.events.emplace_back(e);
        } else if (op == "N") {
            need_args(ctx, toks, 2);
            NopEv e{parse_u64(ctx, toks[1], "count")};
            if (e.count == 0)
                fail(ctx, "nop count must be >= 1");
            trace.events.emplace_back(e);
        } else {
            fail(ctx, "unknown opcode '" + std::string(op) + "'");
        }
    }
    v.on_eof(line_no);
    return trace;
}

namespace {

std::string ptr_str(const PtrExpr& p) {
    return std::to_string(p.alloc_id) + "+" + std::to_string(p.offset);
}

struct Serializer {
    std::ostringstream out;
    void operator()(const AllocEv& e) { out << "A " << e.id << " " << e.size << "\n"; }
    void operator()(const FreeEv& e) { out << "F " << e.id << "\n"; }
    void operator()(const LoadMetaEv& e) { out << "L " << e.vreg << " " << ptr_str(e.ptr) << "\n"; }
    void operator()(const CheckGEv& e) {
        out << "G " << (e.is_store ? "ST" : "LD") << " " << (e.vreg ? *e.vreg : "NULL") << " "
            << ptr_str(e.ptr) << " " << e.width << "\n";
    }
    void operator()(const CheckSEv& e) {
        out << "S " << e.addr << " " << e.base << " " << e.size << " " << e.width << "\n";
    }
    void operator()(const AccessEv& e) {
        out << "X " << (e.is_store ? "ST" : "LD") << " " << ptr_str(e.ptr) << " " << e.width
            << "\n";
    }
    void operator()(const NopEv& e) { out << "N " << e.count << "\n"; }
    void operator()(const KernelBeginEv& e) { out << "K " << e.id << " BEGIN\n"; }
    void operator()(const KernelEndEv& e) { out << "K " << e.id << " END\n"; }
};

} // namespace

std::string serialize_trace(const Trace& trace) {
    Serializer s;
    for (const TraceEvent& ev : trace.events)
        std::visit(s, ev);
    return std::move(s.out).str();
}

} // namespace tagsafe
