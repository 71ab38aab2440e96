#include "trajcast/kernels.hpp"

#include <cstdlib>

namespace traj::kern {

namespace {

bool initial_parallel() {
    const char* e = std::getenv("TRAJCAST_SERIAL");
    return !(e && e[0] == '1');
}

bool g_parallel = initial_parallel();

}  // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) { g_parallel = on; }

}  // namespace traj::kern
