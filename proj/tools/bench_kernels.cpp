// Times the serial reference kernels against their OpenMP counterparts and
// checks that both produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "microevo/kernels.hpp"

using clk = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = clk::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(clk::now() - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
    std::printf("%-24s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name,
                serial_ms, omp_ms, serial_ms / omp_ms,
                identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    auto fill = [&](std::vector<float>& v) {
        for (auto& x : v) x = dist(rng);
    };

    {
        const int h = 512, w = 512;
        std::vector<float> x(static_cast<size_t>(h) * w), ys(x.size()), yp(x.size());
        fill(x);
        const double ts = time_ms([&] { microevo::kernels::laplacian_serial(x.data(), ys.data(), h, w, 1.0f); }, 20);
        const double tp = time_ms([&] { microevo::kernels::laplacian_omp(x.data(), yp.data(), h, w, 1.0f); }, 20);
        report("laplacian 512x512", ts, tp,
               std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0);
    }
    {
        const int h = 512, w = 512;
        std::vector<float> u(static_cast<size_t>(h) * w), v(u.size());
        std::vector<float> us(u.size()), vs(u.size()), up(u.size()), vp(u.size());
        fill(u);
        fill(v);
        const double ts = time_ms([&] {
            microevo::kernels::gs_step_serial(u.data(), v.data(), us.data(), vs.data(),
                                              h, w, 1.0f, 0.12f, 0.08f, 0.02f, 0.05f, 1.0f);
        }, 20);
        const double tp = time_ms([&] {
            microevo::kernels::gs_step_omp(u.data(), v.data(), up.data(), vp.data(),
                                           h, w, 1.0f, 0.12f, 0.08f, 0.02f, 0.05f, 1.0f);
        }, 20);
        report("gray-scott 512x512", ts, tp,
               std::memcmp(us.data(), up.data(), us.size() * sizeof(float)) == 0 &&
                   std::memcmp(vs.data(), vp.data(), vs.size() * sizeof(float)) == 0);
    }
    {
        const int n = 4, ci = 16, h = 96, w = 132, co = 16, k = 3;
        std::vector<float> x(static_cast<size_t>(n) * ci * h * w);
        std::vector<float> wt(static_cast<size_t>(co) * ci * k * k), b(co);
        std::vector<float> ys(static_cast<size_t>(n) * co * h * w), yp(ys.size());
        fill(x);
        fill(wt);
        fill(b);
        const double ts = time_ms([&] {
            microevo::kernels::conv2d_forward_serial(x.data(), wt.data(), b.data(),
                                                     ys.data(), n, ci, h, w, co, k, k, 1, 1);
        }, 5);
        const double tp = time_ms([&] {
            microevo::kernels::conv2d_forward_omp(x.data(), wt.data(), b.data(),
                                                  yp.data(), n, ci, h, w, co, k, k, 1, 1);
        }, 5);
        report("conv2d 4x16x96x132", ts, tp,
               std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0);
    }
    return 0;
}
