#include <atomic>
#include <cstdlib>
#include <cstring>

#include "ddrid/common.hpp"
#include "ddrid/kernels.hpp"

namespace ddrid::kern {
namespace {

const Kernels* pick(const char* name) {
    if (name != nullptr) {
        if (std::strcmp(name, "scalar") == 0) return &scalar();
#if defined(__x86_64__) || defined(_M_X64)
        if (std::strcmp(name, "avx2") == 0) {
            if (!cpu_has_avx2_fma()) throw ArgumentError("avx2 kernels requested but CPU lacks AVX2/FMA");
            return &avx2();
        }
#endif
        throw ArgumentError(std::string("unknown kernel variant: ") + name);
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2_fma()) return &avx2();
#endif
    return &scalar();
}

std::atomic<const Kernels*>& slot() {
    static std::atomic<const Kernels*> s{pick(std::getenv("DDRID_KERNELS"))};
    return s;
}

}  // namespace

const Kernels& active() { return *slot().load(std::memory_order_acquire); }

void force(const std::string& name) {
    slot().store(pick(name.c_str()), std::memory_order_release);
}

}  // namespace ddrid::kern
