#include "nonhyp/parallel.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

namespace nonhyp {

namespace {
std::atomic<int> g_override{0};
}

double standard_normal(Rng& rng) {
    double u1 = uniform(rng, 0.0, 1.0);
    const double u2 = uniform(rng, 0.0, 1.0);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int worker_count() {
    if (const int o = g_override.load(); o > 0) return o;
    if (const char* env = std::getenv("NONHYP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_worker_count(int workers) { g_override.store(workers > 0 ? workers : 0); }

}  // namespace nonhyp
