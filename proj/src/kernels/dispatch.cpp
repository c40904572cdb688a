// Runtime backend selection. This translation unit is built without AVX2
// flags; AVX2 code is only reachable after the CPUID check passes.

#include "actlearn/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "actlearn/errors.hpp"

namespace actlearn::kernels {

const Backend* avx2_backend_raw(); // defined in avx2.cpp

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") &&
           avx2_backend_raw() != nullptr;
#else
    return false;
#endif
}

const Backend* avx2_backend() {
    return avx2_supported() ? avx2_backend_raw() : nullptr;
}

namespace {

const Backend* initial_backend() {
    if (const char* env = std::getenv("ACTLEARN_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return &scalar_backend();
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return avx2_backend();
        // unknown or unsupported value: fall through to auto-detection
    }
    if (const Backend* b = avx2_backend()) return b;
    return &scalar_backend();
}

std::atomic<const Backend*>& active_slot() {
    static std::atomic<const Backend*> slot{initial_backend()};
    return slot;
}

} // namespace

const Backend& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active(const std::string& name) {
    if (name == "scalar") {
        active_slot().store(&scalar_backend(), std::memory_order_relaxed);
        return;
    }
    if (name == "avx2") {
        if (const Backend* b = avx2_backend()) {
            active_slot().store(b, std::memory_order_relaxed);
            return;
        }
        throw ConfigError("avx2 kernels are not supported on this CPU/build");
    }
    throw ConfigError("unknown kernel backend: " + name);
}

} // namespace actlearn::kernels
