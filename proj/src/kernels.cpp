#include "calib/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace calib::kernels {
namespace {

std::atomic<const Ops*> g_active{nullptr};

const Ops* resolve(std::string_view name) {
    if (name == "scalar") return &scalar_ops();
    if (name == "avx2") return avx2_ops();
    if (name == "auto" || name.empty()) {
        if (const Ops* v = avx2_ops()) return v;
        return &scalar_ops();
    }
    return nullptr;
}

}  // namespace

const Ops& active() {
    const Ops* cur = g_active.load(std::memory_order_acquire);
    if (cur) return *cur;
    const char* env = std::getenv("CALIB_SIMD");
    const Ops* chosen = resolve(env ? std::string_view(env) : std::string_view("auto"));
    if (!chosen) chosen = &scalar_ops();  // unknown or unsupported request
    g_active.store(chosen, std::memory_order_release);
    return *chosen;
}

bool select(std::string_view name) {
    const Ops* chosen = resolve(name);
    if (!chosen) return false;
    g_active.store(chosen, std::memory_order_release);
    return true;
}

}  // namespace calib::kernels
