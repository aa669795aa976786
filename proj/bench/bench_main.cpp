// Times the OpenMP scoring and quadrature kernels against their serial
// reference implementations and checks that results agree bit for bit.
#include <chrono>
#include <cmath>
#include <cstdio>

#include <omp.h>

#include "oodnorm/quadrature.hpp"
#include "oodnorm/rng.hpp"
#include "oodnorm/scoring.hpp"

using namespace oodnorm;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Matrix random_pool(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

double max_abs_diff(const Vector& a, const Vector& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

} // namespace

int main() {
    Rng rng(derive_seed(99, 0xbe7c));
    ConditionerFlowOptions opts;
    opts.couplings = 2;
    opts.hidden = {16, 16};
    const FlowModel model = make_conditioner_flow(2, opts, rng);

    const Matrix train_pool = random_pool(1024, 2, derive_seed(99, 1));
    const Matrix test_pool = random_pool(192, 2, derive_seed(99, 2));
    StatisticConfig cfg;
    cfg.mc_reps = 8;

    std::printf("threads available: %d\n\n", omp_get_max_threads());

    {
        auto t0 = std::chrono::steady_clock::now();
        const Vector serial_out = serial::eval_logliks(model, train_pool);
        const double t_serial = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        const Vector parallel_out = eval_logliks(model, train_pool, true);
        const double t_parallel = seconds_since(t0);
        std::printf("eval_logliks      serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   "
                    "max|diff| %g\n",
                    t_serial * 1e3, t_parallel * 1e3, t_serial / t_parallel,
                    max_abs_diff(serial_out, parallel_out));
    }
    {
        auto t0 = std::chrono::steady_clock::now();
        const Vector serial_out = serial::test_deltas(model, train_pool, test_pool, cfg);
        const double t_serial = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        const Vector parallel_out = test_deltas(model, train_pool, test_pool, cfg, true);
        const double t_parallel = seconds_since(t0);
        std::printf("test_deltas       serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   "
                    "max|diff| %g\n",
                    t_serial * 1e3, t_parallel * 1e3, t_serial / t_parallel,
                    max_abs_diff(serial_out, parallel_out));
    }
    {
        QuadratureSpec spec;
        spec.step = 0.1; // coarse grid keeps the benchmark quick
        Matrix companions(63, 2);
        Rng crng(derive_seed(99, 3));
        for (std::size_t r = 0; r < companions.rows(); ++r) {
            companions(r, 0) = crng.normal();
            companions(r, 1) = crng.normal();
        }
        auto t0 = std::chrono::steady_clock::now();
        const double serial_out = serial::conditional_quadrature(model, companions, spec);
        const double t_serial = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        const double parallel_out = conditional_quadrature(model, companions, spec, true);
        const double t_parallel = seconds_since(t0);
        std::printf("quadrature        serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   "
                    "max|diff| %g\n",
                    t_serial * 1e3, t_parallel * 1e3, t_serial / t_parallel,
                    std::abs(serial_out - parallel_out));
    }
    return 0;
}
