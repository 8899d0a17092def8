#include "tagsafe/irpass.hpp"

#include <algorithm>
#include <functional>

namespace tagsafe::ir {

std::string_view coverage_class_name(CoverageClass c) {
    switch (c) {
    case CoverageClass::Full: return "full";
    case CoverageClass::Partial: return "partial";
    case CoverageClass::TaggingOnly: return "tagging-only";
    }
    return "?";
}

namespace {

struct DefSite {
    bool is_param = false;
    int block = -1;
    int inst = -1;
};

std::map<std::string, DefSite> def_map(const IrFunction& fn) {
    std::map<std::string, DefSite> defs;
    for (const ParamDecl& p : fn.params)
        defs[p.name] = DefSite{true, -1, -1};
    for (std::size_t b = 0; b < fn.blocks.size(); ++b)
        for (std::size_t i = 0; i < fn.blocks[b].insts.size(); ++i)
            if (!fn.blocks[b].insts[i].result.empty())
                defs[fn.blocks[b].insts[i].result] =
                    DefSite{false, static_cast<int>(b), static_cast<int>(i)};
    return defs;
}

const Inst& def_inst(const IrFunction& fn, const DefSite& d) {
    return fn.blocks[static_cast<std::size_t>(d.block)].insts[static_cast<std::size_t>(d.inst)];
}

// True when the defining op is traversed by the backward root search
// rather than being a root itself.
bool is_pass_through(Opcode op) {
    return op == Opcode::Mov || op == Opcode::PtrAdd || op == Opcode::Phi;
}

std::vector<std::string> global_access_addrs(const IrFunction& fn) {
    std::vector<std::string> out;
    for (const Block& b : fn.blocks)
        for (const Inst& inst : b.insts)
            if (inst.op == Opcode::Ldg || inst.op == Opcode::Stg) {
                if (inst.args[0].kind != Operand::Kind::Value)
                    throw IrError("global access address has no pointer root");
                out.push_back(inst.args[0].name);
            }
    return out;
}

} // namespace

RootAnalysis find_roots(const IrFunction& fn) {
    const auto defs = def_map(fn);
    const auto addrs = global_access_addrs(fn);

    // Backward slice of values feeding global access addresses.
    std::set<std::string> slice;
    std::vector<std::string> work(addrs.begin(), addrs.end());
    while (!work.empty()) {
        const std::string v = std::move(work.back());
        work.pop_back();
        if (!slice.insert(v).second)
            continue;
        const auto it = defs.find(v);
        if (it == defs.end())
            throw IrError("use of undefined value %" + v);
        if (it->second.is_param)
            continue;
        const Inst& inst = def_inst(fn, it->second);
        if (!is_pass_through(inst.op))
            continue;
        if (inst.op == Opcode::PtrAdd) {
            if (inst.args[0].kind == Operand::Kind::Value)
                work.push_back(inst.args[0].name);
        } else { // Mov, Phi
            for (const Operand& a : inst.args)
                if (a.kind == Operand::Kind::Value)
                    work.push_back(a.name);
        }
    }

    // Kleene iteration to a fixpoint; cyclic phi webs converge because the
    // transfer function is a monotone union over a finite root universe.
    std::map<std::string, std::set<std::string>> roots;
    for (const std::string& v : slice)
        roots[v] = {};
    bool changed = true;
    while (changed) {
        changed = false;
        for (const std::string& v : slice) {
            const DefSite& d = defs.at(v);
            std::set<std::string> next;
            if (d.is_param) {
                next = {v};
            } else {
                const Inst& inst = def_inst(fn, d);
                if (!is_pass_through(inst.op)) {
                    next = {v};
                } else if (inst.op == Opcode::PtrAdd) {
                    if (inst.args[0].kind == Operand::Kind::Value)
                        next = roots.at(inst.args[0].name);
                    else
                        throw IrError("pointer arithmetic on a non-value base");
                } else {
                    for (const Operand& a : inst.args)
                        if (a.kind == Operand::Kind::Value)
                            for (const std::string& r : roots.at(a.name))
                                next.insert(r);
                }
            }
            if (next != roots.at(v)) {
                roots[v] = std::move(next);
                changed = true;
            }
        }
    }

    RootAnalysis out;
    for (const std::string& a : addrs) {
        const auto& r = roots.at(a);
        if (r.empty())
            throw IrError("global access via %" + a + " has no pointer root");
        out.roots_of_access[a] = r;
        out.all_roots.insert(r.begin(), r.end());
    }
    return out;
}

namespace {

// Walk a shared-memory address expression back to a unique shared array.
const SharedDecl* resolve_shared(const IrFunction& fn,
                                 const std::map<std::string, DefSite>& defs,
                                 const Operand& addr, std::set<std::string>& visiting) {
    if (addr.kind == Operand::Kind::Shared)
        return fn.shared_decl(addr.name);
    if (addr.kind != Operand::Kind::Value)
        return nullptr;
    if (!visiting.insert(addr.name).second)
        return nullptr; // cyclic phi with no shared base on this path
    const auto it = defs.find(addr.name);
    if (it == defs.end() || it->second.is_param)
        return nullptr;
    const Inst& inst = def_inst(fn, it->second);
    if (inst.op == Opcode::Mov || inst.op == Opcode::PtrAdd)
        return resolve_shared(fn, defs, inst.args[0], visiting);
    if (inst.op == Opcode::Phi) {
        const SharedDecl* found = nullptr;
        for (const Operand& a : inst.args) {
            const SharedDecl* d = resolve_shared(fn, defs, a, visiting);
            if (!d)
                return nullptr;
            if (found && found != d)
                return nullptr; // ambiguous
            found = d;
        }
        return found;
    }
    return nullptr;
}

std::string fresh_name(std::set<std::string>& taken, std::string base) {
    while (taken.count(base))
        base += "_";
    taken.insert(base);
    return base;
}

} // namespace

IrFunction instrument(const IrFunction& fn, InstrumentInfo* info) {
    validate(fn);
    const RootAnalysis ra = find_roots(fn);
    const auto defs = def_map(fn);

    std::set<std::string> taken;
    for (const auto& [name, d] : defs)
        taken.insert(name);

    // Slice values that need a metadata companion. Roots get a loadmeta
    // result; movs and phis get mirrored companions; ptradd forwards its
    // pointer operand's companion.
    std::set<std::string> slice;
    {
        std::vector<std::string> work;
        for (const auto& [addr, roots] : ra.roots_of_access)
            work.push_back(addr);
        while (!work.empty()) {
            const std::string v = std::move(work.back());
            work.pop_back();
            if (!slice.insert(v).second)
                continue;
            const DefSite& d = defs.at(v);
            if (d.is_param)
                continue;
            const Inst& inst = def_inst(fn, d);
            if (!is_pass_through(inst.op))
                continue;
            if (inst.op == Opcode::PtrAdd) {
                if (inst.args[0].kind == Operand::Kind::Value)
                    work.push_back(inst.args[0].name);
            } else {
                for (const Operand& a : inst.args)
                    if (a.kind == Operand::Kind::Value)
                        work.push_back(a.name);
            }
        }
    }

    // Phase 1: assign companion names.
    std::map<std::string, std::string> comp;
    for (const std::string& v : slice) {
        const DefSite& d = defs.at(v);
        const bool is_root = ra.all_roots.count(v) > 0;
        const bool mirrored =
            !d.is_param && !is_root &&
            (def_inst(fn, d).op == Opcode::Mov || def_inst(fn, d).op == Opcode::Phi);
        if (is_root || mirrored)
            comp[v] = fresh_name(taken, "md_" + v);
    }
    // Resolve through ptradd chains.
    const std::function<std::string(const std::string&)> comp_of =
        [&](const std::string& v) -> std::string {
        if (const auto it = comp.find(v); it != comp.end())
            return it->second;
        const DefSite& d = defs.at(v);
        if (d.is_param)
            throw IrError("missing companion for %" + v);
        const Inst& inst = def_inst(fn, d);
        if (inst.op == Opcode::PtrAdd && inst.args[0].kind == Operand::Kind::Value)
            return comp_of(inst.args[0].name);
        throw IrError("missing companion for %" + v);
    };

    InstrumentInfo counts;
    IrFunction out;
    out.name = fn.name;
    out.params = fn.params;
    out.shared = fn.shared;
    out.blocks.reserve(fn.blocks.size());

    u64 chk = 0;
    for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi) {
        const Block& b = fn.blocks[bi];
        Block nb{b.label, {}};

        // Original phis, then companion phis, keeping the group contiguous.
        std::size_t i = 0;
        for (; i < b.insts.size() && b.insts[i].op == Opcode::Phi; ++i)
            nb.insts.push_back(b.insts[i]);
        for (std::size_t j = 0; j < i; ++j) {
            const Inst& phi = b.insts[j];
            if (!slice.count(phi.result) || !comp.count(phi.result))
                continue;
            Inst cphi;
            cphi.op = Opcode::Phi;
            cphi.result = comp.at(phi.result);
            cphi.phi_blocks = phi.phi_blocks;
            for (const Operand& a : phi.args) {
                if (a.kind == Operand::Kind::Value && slice.count(a.name))
                    cphi.args.push_back(Operand::value(comp_of(a.name)));
                else
                    cphi.args.push_back(Operand::imm_of(0)); // null metadata
            }
            nb.insts.push_back(cphi);
            ++counts.companion_phis;
        }

        // Parameter-root fetches at the top of the entry block.
        if (bi == 0) {
            for (const ParamDecl& p : fn.params) {
                if (!ra.all_roots.count(p.name))
                    continue;
                Inst lm;
                lm.op = Opcode::LoadMeta;
                lm.result = comp.at(p.name);
                lm.args.push_back(Operand::value(p.name));
                nb.insts.push_back(lm);
                ++counts.static_loadmeta;
            }
        }

        for (; i < b.insts.size(); ++i) {
            const Inst& inst = b.insts[i];
            if (inst.op == Opcode::Ldg || inst.op == Opcode::Stg) {
                Inst check;
                check.op = Opcode::MemcheckG;
                check.result = fresh_name(taken, "chk" + std::to_string(chk++));
                check.args.push_back(inst.args[0]);
                check.args.push_back(Operand::value(comp_of(inst.args[0].name)));
                check.width = inst.width;
                nb.insts.push_back(check);
                ++counts.static_memcheck_g;
                Inst access = inst;
                access.args[0] = Operand::value(check.result);
                nb.insts.push_back(access);
                continue;
            }
            if (inst.op == Opcode::Lds || inst.op == Opcode::Sts) {
                std::set<std::string> visiting;
                const SharedDecl* decl = resolve_shared(fn, defs, inst.args[0], visiting);
                if (!decl)
                    throw IrError("shared access without statically resolvable base/size");
                Inst check;
                check.op = Opcode::MemcheckS;
                check.args.push_back(inst.args[0]);
                check.args.push_back(Operand::imm_of(static_cast<i64>(decl->base)));
                check.args.push_back(Operand::imm_of(static_cast<i64>(decl->size)));
                check.width = inst.width;
                nb.insts.push_back(check);
                ++counts.static_memcheck_s;
                nb.insts.push_back(inst);
                continue;
            }

            nb.insts.push_back(inst);

            // Companion mov mirrors a slice mov; instruction roots get
            // their fetch right after the defining instruction.
            if (!inst.result.empty() && slice.count(inst.result)) {
                if (ra.all_roots.count(inst.result)) {
                    Inst lm;
                    lm.op = Opcode::LoadMeta;
                    lm.result = comp.at(inst.result);
                    lm.args.push_back(Operand::value(inst.result));
                    nb.insts.push_back(lm);
                    ++counts.static_loadmeta;
                } else if (inst.op == Opcode::Mov) {
                    Inst cm;
                    cm.op = Opcode::Mov;
                    cm.result = comp.at(inst.result);
                    if (inst.args[0].kind == Operand::Kind::Value && slice.count(inst.args[0].name))
                        cm.args.push_back(Operand::value(comp_of(inst.args[0].name)));
                    else
                        cm.args.push_back(Operand::imm_of(0));
                    nb.insts.push_back(cm);
                    ++counts.companion_movs;
                }
            }
        }
        out.blocks.push_back(std::move(nb));
    }

    validate(out);
    if (info)
        *info = counts;
    return out;
}

} // namespace tagsafe::ir
