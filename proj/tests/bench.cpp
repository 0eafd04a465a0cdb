#include "polymer/partition.hpp"
#include "polymer/chaos.hpp"
#include <chrono>
#include <cstdio>
using namespace polymer;
using Clock = std::chrono::steady_clock;
double secs(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}
int main() {
    const std::int64_t N = 4096;
    {
        disorder::FieldGen gen(disorder::Law::gaussian, 999, 1);
        auto t0 = Clock::now();
        auto pv = partition::compute_Z(gen, 0.2, partition::WindowSpec::full(N), 0, 0, N, {});
        auto t1 = Clock::now();
        std::printf("forward Z gaussian N=4096: %.2f s (Z=%.4f)\n", secs(t0, t1), pv.value);
    }
    {
        disorder::FieldGen gen(disorder::Law::rademacher, 999, 1);
        auto t0 = Clock::now();
        auto pv = partition::compute_Z(gen, 0.2, partition::WindowSpec::full(N), 0, 0, N, {});
        auto t1 = Clock::now();
        std::printf("forward Z rademacher N=4096: %.2f s (Z=%.4f)\n", secs(t0, t1), pv.value);
    }
    {
        disorder::FieldGen gen(disorder::Law::gaussian, 999, 1);
        const std::int64_t L = 384; // supp(g_1 truncated) at sqrt(N)=64
        partition::FieldBox box{-L, L, -L, L};
        auto t0 = Clock::now();
        auto fr = partition::compute_field(gen, 0.2, partition::WindowSpec::full(N), N, box, {});
        auto t1 = Clock::now();
        std::printf("backward field gaussian N=4096 box %lld^2: %.2f s (Z(0,0)=%.4f)\n",
                    (long long)(2*L+1), secs(t0, t1), fr.at(0,0));
    }
    {
        auto t0 = Clock::now();
        auto curve = chaos::kernel_pairing_curve(N, analytic::TestFunction::gaussian(1.0));
        auto t1 = Clock::now();
        double s = 0; for (double v : curve) s += v;
        std::printf("kernel pairing curve N=4096: %.2f s (sum=%.6f)\n", secs(t0, t1), s);
    }
    return 0;
}
