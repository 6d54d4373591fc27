#include <atomic>
#include <cstdlib>

#include "tables.hpp"

namespace secnn {
namespace {

bool cpu_has(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable* compiled_table(Isa isa) {
    switch (isa) {
        case Isa::scalar: return &detail::scalar_table();
        case Isa::avx2: return detail::avx2_table();
        case Isa::neon: return detail::neon_table();
    }
    return nullptr;
}

const KernelTable* choose_default() {
    if (const char* env = std::getenv("SECNN_ISA")) {
        if (auto isa = parse_isa(env)) {
            if (const KernelTable* t = kernels_for(*isa)) return t;
        }
    }
    for (Isa isa : {Isa::avx2, Isa::neon}) {
        if (const KernelTable* t = kernels_for(isa)) return t;
    }
    return &detail::scalar_table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

std::string_view to_string(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) noexcept {
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2") return Isa::avx2;
    if (name == "neon") return Isa::neon;
    return std::nullopt;
}

const KernelTable* kernels_for(Isa isa) {
    if (!cpu_has(isa)) return nullptr;
    return compiled_table(isa);
}

std::vector<Isa> available_isas() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
        if (kernels_for(isa)) out.push_back(isa);
    return out;
}

const KernelTable& active_kernels() {
    const KernelTable* t = g_active.load(std::memory_order_acquire);
    if (!t) {
        t = choose_default();
        g_active.store(t, std::memory_order_release);
    }
    return *t;
}

bool set_active_isa(Isa isa) {
    const KernelTable* t = kernels_for(isa);
    if (!t) return false;
    g_active.store(t, std::memory_order_release);
    return true;
}

}  // namespace secnn
