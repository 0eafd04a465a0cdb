#include "polymer/chaos.hpp"
#include "polymer/hyper.hpp"
#include "polymer/stats.hpp"
#include <cstdio>
int main() {
    using namespace polymer;
    const double r1 = walks::expected_overlap(1);
    std::printf("R_1 = %.12f (expect 0.25)\n", r1);
    const double mgf0 = walks::overlap_mgf_exact(64, 0.0);
    std::printf("MGF(64, 0) = %.15f\n", mgf0);
    disorder::FieldGen gen(disorder::Law::gaussian, 12345, 0);
    auto pv = partition::compute_Z(gen, 0.3, partition::WindowSpec::full(32), 0, 0, 32, {});
    std::printf("Z(32) = %.12f log=%.12f lost=%.3e\n", pv.value, pv.log_value, pv.lost_mass);
    auto lad = chaos::chaos_eval(gen, 0.3, 0, 0, 16, 2);
    std::printf("X0=%.12f X1=%.5f X2=%.5f\n", lad.X[0], lad.X[1], lad.X[2]);
    std::printf("E1(1) = %.10f (expect 0.2193839344)\n", analytic::expint_E1(1.0));
    auto cp = hyper::estimate_cp(disorder::Law::gaussian, 3.0, 1e-3);
    std::printf("cp(gauss,3) = %.5f (expect 1.41421)\n", cp.c_p);
    return 0;
}
