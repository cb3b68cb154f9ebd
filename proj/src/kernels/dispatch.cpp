#include <atomic>
#include <cstdlib>
#include <string_view>

#include "gfield/kernels.hpp"

namespace gfield::kernels {

#ifdef GFIELD_HAVE_AVX2
const KernelTable& avx2_kernels();
#endif

const KernelTable* avx2_table() {
#if defined(GFIELD_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &avx2_kernels() : nullptr;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable* initial() {
    const char* env = std::getenv("GFIELD_KERNELS");
    if (env && std::string_view(env) == "scalar") return &scalar_table();
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{initial()};
    return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
    if (name == "scalar") {
        current().store(&scalar_table(), std::memory_order_release);
        return true;
    }
    if (name == "avx2") {
        if (const KernelTable* t = avx2_table()) {
            current().store(t, std::memory_order_release);
            return true;
        }
    }
    return false;
}

}  // namespace gfield::kernels
