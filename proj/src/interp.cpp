#include "tagsafe/irpass.hpp"

#include <unordered_map>

namespace tagsafe::ir {

namespace {

constexpr u64 kStepBudget = 50'000'000;

struct Val {
    u64 raw = 0;
    std::optional<PtrExpr> prov; // symbolic pointer provenance
    // Metadata provenance, present on loadmeta results and their copies.
    bool has_md = false;
    MetadataRef md_ref;
    u64 md_root_raw = 0;
    std::optional<PtrExpr> md_root_prov;
    std::optional<std::string> md_vreg; // trace vreg that defined this metadata
    bool check_failed = false;          // set on a memcheck.g result whose check fired
};

Val scalar_val(u64 raw) {
    Val v;
    v.raw = raw;
    return v;
}

struct Frame {
    std::unordered_map<std::string, Val> regs;
};

// The kind (LD/ST) a check guards, and whether an access already has one.
struct Pairing {
    std::map<const Inst*, bool> check_is_store;
    std::set<const Inst*> guarded_access;
};

Pairing pair_checks(const IrFunction& fn) {
    Pairing p;
    for (const Block& b : fn.blocks) {
        for (std::size_t i = 0; i < b.insts.size(); ++i) {
            const Inst& inst = b.insts[i];
            if (inst.op == Opcode::MemcheckG) {
                bool is_store = false;
                for (std::size_t j = i + 1; j < b.insts.size(); ++j) {
                    const Inst& a = b.insts[j];
                    if ((a.op == Opcode::Ldg || a.op == Opcode::Stg) &&
                        a.args[0].kind == Operand::Kind::Value &&
                        a.args[0].name == inst.result) {
                        is_store = a.op == Opcode::Stg;
                        p.guarded_access.insert(&a);
                        break;
                    }
                }
                p.check_is_store[&inst] = is_store;
            } else if (inst.op == Opcode::MemcheckS) {
                for (std::size_t j = i + 1; j < b.insts.size(); ++j) {
                    const Inst& a = b.insts[j];
                    if ((a.op == Opcode::Lds || a.op == Opcode::Sts) &&
                        a.args[0].kind == Operand::Kind::Value &&
                        inst.args[0].kind == Operand::Kind::Value &&
                        a.args[0].name == inst.args[0].name) {
                        p.guarded_access.insert(&a);
                        break;
                    }
                }
            }
        }
    }
    return p;
}

struct Interp {
    const IrFunction& fn;
    const KernelInput& input;
    const bool emit;
    Engine engine;
    ExecResult result;
    Pairing pairing;

    std::map<u64, Val> gmem;  // masked global address -> stored value
    std::map<u32, Val> smem;
    u64 pending_nops = 0;
    u64 next_vreg = 0;
    bool pending_shared_violation = false;
    u64 steps = 0;

    Interp(const IrFunction& f, const KernelInput& in, bool e)
        : fn(f), input(in), emit(e), engine(in.engine), pairing(pair_checks(f)) {}

    const ArchConfig& arch() const { return engine.config().arch; }

    void emit_event(TraceEvent ev) {
        if (!emit)
            return;
        if (pending_nops) {
            result.lowered.events.emplace_back(NopEv{pending_nops});
            pending_nops = 0;
        }
        result.lowered.events.push_back(std::move(ev));
    }

    void flush_nops() {
        if (emit && pending_nops) {
            result.lowered.events.emplace_back(NopEv{pending_nops});
            pending_nops = 0;
        }
    }

    Val resolve_binding(const KernelInput::Binding& b) {
        if (!b.is_ptr)
            return scalar_val(b.scalar);
        const AllocRecord& rec = engine.record(b.ptr.alloc_id);
        const u64 base = mask_addr(rec.base_tagged, arch());
        const u64 va = (base + static_cast<u64>(b.ptr.offset)) & arch().va_mask();
        Val v;
        v.raw = encode_addr(va, tag_of(rec.base_tagged, arch()), arch());
        v.prov = b.ptr;
        return v;
    }

    void setup() {
        for (const AllocEv& a : input.allocs) {
            engine.alloc(a.id, a.size);
            emit_event(a);
        }
        for (const auto& [where, what] : input.mem_init) {
            const AllocRecord& rec = engine.record(where.alloc_id);
            const u64 addr =
                (mask_addr(rec.base_tagged, arch()) + static_cast<u64>(where.offset)) &
                arch().va_mask();
            gmem[addr] = resolve_binding(what);
        }
    }

    Val eval(const Frame& frame, const Operand& a, u64 tid) {
        switch (a.kind) {
        case Operand::Kind::Value: {
            auto it = frame.regs.find(a.name);
            if (it == frame.regs.end())
                throw IrError("use of %" + a.name + " before definition");
            return it->second;
        }
        case Operand::Kind::Imm:
            return scalar_val(static_cast<u64>(a.imm));
        case Operand::Kind::Tid:
            return scalar_val(tid);
        case Operand::Kind::Shared: {
            const SharedDecl* d = fn.shared_decl(a.name);
            if (!d)
                throw IrError("undeclared shared array @" + a.name);
            return scalar_val(d->base);
        }
        }
        throw IrError("bad operand");
    }

    PtrExpr require_prov(const Val& v, const char* what) {
        if (!v.prov)
            throw IrError(std::string("cannot lower: ") + what +
                          " has no allocation provenance");
        return *v.prov;
    }

    void classify(const Val& addr, const Val& md, DynCheck& rec) {
        if (!md.has_md || md.md_ref.null())
            return;
        const u64 masked = mask_addr(addr.raw, arch());
        const AllocRecord* cover = engine.find_live_containing(masked);
        if (!cover)
            return;
        const u64 root_masked = mask_addr(md.md_root_raw, arch());
        CoverageClass c;
        if (root_masked == mask_addr(cover->base_tagged, arch()))
            c = CoverageClass::Full;
        else if (root_masked == masked)
            c = CoverageClass::TaggingOnly;
        else
            c = CoverageClass::Partial;
        rec.coverage = c;
        ++result.coverage[c];
    }

    void run_thread(u64 tid) {
        Frame frame;
        for (const ParamDecl& p : fn.params) {
            auto it = input.params.find(p.name);
            if (it == input.params.end())
                throw IrError("no binding for parameter %" + p.name);
            frame.regs[p.name] = resolve_binding(it->second);
        }

        int bi = 0;
        int prev = -1;
        while (true) {
            if (++steps > kStepBudget)
                throw IrError("interpreter step budget exceeded");
            const Block& b = fn.blocks[static_cast<std::size_t>(bi)];

            // Phis read their inputs atomically on block entry.
            std::vector<std::pair<std::string, Val>> phi_vals;
            std::size_t i = 0;
            for (; i < b.insts.size() && b.insts[i].op == Opcode::Phi; ++i) {
                const Inst& phi = b.insts[i];
                if (prev < 0)
                    throw IrError("phi in entry block executed without predecessor");
                const std::string& from = fn.blocks[static_cast<std::size_t>(prev)].label;
                bool matched = false;
                for (std::size_t j = 0; j < phi.phi_blocks.size(); ++j) {
                    if (phi.phi_blocks[j] == from) {
                        phi_vals.emplace_back(phi.result, eval(frame, phi.args[j], tid));
                        matched = true;
                        break;
                    }
                }
                if (!matched)
                    throw IrError("phi has no input for predecessor '" + from + "'");
                ++result.dyn_insts;
                ++pending_nops;
            }
            for (auto& [name, v] : phi_vals)
                frame.regs[name] = std::move(v);

            int next = -1;
            bool done = false;
            for (; i < b.insts.size(); ++i) {
                const Inst& inst = b.insts[i];
                ++result.dyn_insts;
                if (++steps > kStepBudget)
                    throw IrError("interpreter step budget exceeded");
                switch (inst.op) {
                case Opcode::Mov:
                    frame.regs[inst.result] = eval(frame, inst.args[0], tid);
                    ++pending_nops;
                    break;
                case Opcode::PtrAdd: {
                    Val v = eval(frame, inst.args[0], tid);
                    const u64 add = eval(frame, inst.args[1], tid).raw;
                    v.raw += add;
                    if (v.prov)
                        v.prov->offset += static_cast<i64>(add);
                    v.has_md = false;
                    v.md_vreg.reset();
                    v.check_failed = false;
                    frame.regs[inst.result] = v;
                    ++pending_nops;
                    break;
                }
                case Opcode::Other: {
                    u64 sum = 0;
                    for (const Operand& a : inst.args)
                        sum += eval(frame, a, tid).raw;
                    frame.regs[inst.result] = scalar_val(sum);
                    ++pending_nops;
                    break;
                }
                case Opcode::LoadMeta: {
                    const Val root = eval(frame, inst.args[0], tid);
                    Val v;
                    v.has_md = true;
                    v.md_ref = engine.loadmeta(root.raw);
                    v.raw = v.md_ref.location;
                    v.md_root_raw = root.raw;
                    v.md_root_prov = root.prov;
                    if (emit && root.prov) {
                        const std::string vreg = "v" + std::to_string(next_vreg++);
                        emit_event(LoadMetaEv{vreg, *root.prov});
                        v.md_vreg = vreg;
                    }
                    frame.regs[inst.result] = v;
                    break;
                }
                case Opcode::MemcheckG: {
                    const Val addr = eval(frame, inst.args[0], tid);
                    const Val md = eval(frame, inst.args[1], tid);
                    if (!md.has_md && md.raw != 0)
                        throw IrError("memcheck.g metadata operand is not from loadmeta");
                    const MetadataRef ref = md.has_md ? md.md_ref : MetadataRef{};
                    const CheckOutcome out = engine.memcheck_g(addr.raw, ref, inst.width);
                    if (emit) {
                        const bool is_store = pairing.check_is_store.at(&inst);
                        emit_event(CheckGEv{is_store, md.md_vreg,
                                            require_prov(addr, "checked address"), inst.width});
                    }
                    DynCheck rec{tid, false, out.violation, std::nullopt};
                    classify(addr, md, rec);
                    result.checks.push_back(rec);
                    Val res;
                    res.raw = out.masked_addr;
                    res.prov = addr.prov;
                    res.check_failed = !out.passed();
                    frame.regs[inst.result] = res;
                    break;
                }
                case Opcode::MemcheckS: {
                    const Val addr = eval(frame, inst.args[0], tid);
                    const u32 base = static_cast<u32>(eval(frame, inst.args[1], tid).raw);
                    const u32 size = static_cast<u32>(eval(frame, inst.args[2], tid).raw);
                    const CheckOutcome out =
                        engine.memcheck_s(static_cast<u32>(addr.raw), base, size, inst.width);
                    emit_event(CheckSEv{static_cast<u32>(addr.raw), base, size, inst.width});
                    result.checks.push_back(DynCheck{tid, true, out.violation, std::nullopt});
                    pending_shared_violation = !out.passed();
                    break;
                }
                case Opcode::Ldg:
                case Opcode::Stg: {
                    const Val addr = eval(frame, inst.args[0], tid);
                    if (!pairing.guarded_access.count(&inst)) {
                        // Unchecked access: lowers to a pass-through check.
                        emit_event(CheckGEv{inst.op == Opcode::Stg, std::nullopt,
                                            require_prov(addr, "access address"), inst.width});
                    }
                    if (addr.check_failed) {
                        if (inst.op == Opcode::Ldg)
                            frame.regs[inst.result] = Val{};
                        break; // faulting access suppressed
                    }
                    const u64 key = mask_addr(addr.raw, arch());
                    if (inst.op == Opcode::Ldg) {
                        const Val v = gmem.count(key) ? gmem.at(key) : Val{};
                        result.loaded_values.push_back(v.raw);
                        frame.regs[inst.result] = v;
                    } else {
                        const Val v = eval(frame, inst.args[1], tid);
                        gmem[key] = v;
                        result.stores.emplace_back(key, v.raw);
                    }
                    break;
                }
                case Opcode::Lds:
                case Opcode::Sts: {
                    const Val addr = eval(frame, inst.args[0], tid);
                    const u32 key = static_cast<u32>(addr.raw);
                    if (!pairing.guarded_access.count(&inst))
                        emit_event(CheckSEv{key, 0, 0xffffffffu, inst.width});
                    if (pending_shared_violation) {
                        pending_shared_violation = false;
                        if (inst.op == Opcode::Lds)
                            frame.regs[inst.result] = Val{};
                        break;
                    }
                    if (inst.op == Opcode::Lds) {
                        const Val v = smem.count(key) ? smem.at(key) : Val{};
                        result.loaded_values.push_back(v.raw);
                        frame.regs[inst.result] = v;
                    } else {
                        smem[key] = eval(frame, inst.args[1], tid);
                    }
                    break;
                }
                case Opcode::Br:
                    next = fn.block_index(inst.targets[0]);
                    ++pending_nops;
                    break;
                case Opcode::Cbr:
                    next = eval(frame, inst.args[0], tid).raw != 0
                               ? fn.block_index(inst.targets[0])
                               : fn.block_index(inst.targets[1]);
                    ++pending_nops;
                    break;
                case Opcode::Ret:
                    done = true;
                    ++pending_nops;
                    break;
                case Opcode::Phi:
                    throw IrError("phi after non-phi instruction");
                }
                if (done || next >= 0)
                    break;
            }
            if (done)
                return;
            if (next < 0)
                throw IrError("block fell through without a terminator");
            prev = bi;
            bi = next;
        }
    }

    void run() {
        setup();
        if (emit)
            emit_event(KernelBeginEv{1});
        for (u64 tid = 0; tid < input.tid_count; ++tid)
            run_thread(tid);
        flush_nops();
        if (emit)
            result.lowered.events.emplace_back(KernelEndEv{1});
        for (const auto& [addr, v] : gmem)
            result.global_mem[addr] = v.raw;
    }
};

} // namespace

ExecResult interpret(const IrFunction& fn, const KernelInput& input, bool emit_trace) {
    validate(fn);
    Interp interp(fn, input, emit_trace);
    interp.run();
    return std::move(interp.result);
}

double bloat(const IrFunction& baseline, const IrFunction& instrumented,
             const KernelInput& input) {
    const ExecResult base = interpret(baseline, input, false);
    const ExecResult inst = interpret(instrumented, input, false);
    if (base.dyn_insts == 0)
        throw IrError("bloat: baseline executed no instructions");
    return static_cast<double>(inst.dyn_insts) / static_cast<double>(base.dyn_insts) - 1.0;
}

Trace lower(const IrFunction& instrumented, const KernelInput& input) {
    return interpret(instrumented, input, true).lowered;
}

} // namespace tagsafe::ir
