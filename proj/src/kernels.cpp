#include <cstdlib>
#include <string_view>

#include "crdnet/kernels.hpp"

namespace crdnet::kernels {
namespace {

const Backend* pick_default() {
    if (const char* env = std::getenv("CRDNET_BACKEND")) {
        const std::string_view want(env);
        if (want == "scalar") return &scalar_backend();
        if (want == "avx2" && avx2_backend()) return avx2_backend();
        // Unknown or unavailable request falls through to auto-detect.
    }
    if (const Backend* b = avx2_backend()) return b;
    return &scalar_backend();
}

const Backend*& active_slot() {
    static const Backend* slot = pick_default();
    return slot;
}

}  // namespace

const Backend& active() { return *active_slot(); }

bool set_active(std::string_view name) {
    if (name == "scalar") {
        active_slot() = &scalar_backend();
        return true;
    }
    if (name == "avx2") {
        if (const Backend* b = avx2_backend()) {
            active_slot() = b;
            return true;
        }
        return false;
    }
    return false;
}

}  // namespace crdnet::kernels
