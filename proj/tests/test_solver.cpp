#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "grrhdr/rng.hpp"
#include "grrhdr/solver.hpp"

using namespace grrhdr;

namespace {

Measurement make_measurement(int w, int h, int bits,
                             const std::vector<uint16_t>& dn,
                             std::vector<uint8_t> erasure = {}) {
    Measurement m;
    m.width = w;
    m.height = h;
    m.bit_depth = bits;
    m.dn = dn;
    m.erasure = std::move(erasure);
    return m;
}

double sq(double v) { return v * v; }

double chain_obj(const std::vector<double>& p, const std::vector<double>& y,
                 double w) {
    double o = 0.0;
    for (size_t i = 0; i < p.size(); ++i) o += 0.5 * sq(p[i] - y[i]);
    for (size_t i = 0; i + 1 < p.size(); ++i) o += w * std::fabs(p[i + 1] - p[i]);
    return o;
}

// Exhaustive 1D prox via dynamic programming on a 401-point value grid.
// The grid minimum upper-bounds the continuous optimum, so the iterative
// prox must land at or below it (up to grid resolution).
double chain_prox_grid_obj(const std::vector<double>& y, double w) {
    const int G = 401;
    const double lo = *std::min_element(y.begin(), y.end());
    const double hi = *std::max_element(y.begin(), y.end());
    REQUIRE(hi - lo > 1e-9);
    std::vector<double> grid(G);
    for (int g = 0; g < G; ++g) grid[g] = lo + (hi - lo) * g / (G - 1);
    const double step_cost = w * (hi - lo) / (G - 1);
    std::vector<double> D(G), M(G), Dn(G);
    for (int g = 0; g < G; ++g) D[g] = 0.5 * sq(grid[g] - y[0]);
    for (size_t i = 1; i < y.size(); ++i) {
        M = D;  // distance transform under the |.| transition cost
        for (int g = 1; g < G; ++g) M[g] = std::min(M[g], M[g - 1] + step_cost);
        for (int g = G - 2; g >= 0; --g) M[g] = std::min(M[g], M[g + 1] + step_cost);
        for (int g = 0; g < G; ++g) Dn[g] = 0.5 * sq(grid[g] - y[i]) + M[g];
        D.swap(Dn);
    }
    return *std::min_element(D.begin(), D.end());
}

}  // namespace

TEST_CASE("tv_norm worked example and validation") {
    RadianceImage img(3, 2, 1);
    img.data = {1, 4, 2, 0, 0, 5};
    CHECK(tv_norm(img) == 18.0);  // horizontal 3+2+0+5, vertical 1+4+3
    CHECK(tv_norm(img.data, 3, 2) == 18.0);
    CHECK(tv_norm(std::vector<double>(4, 1.0), 2, 2) == 0.0);
    CHECK_THROWS_AS(tv_norm(img.data, 2, 2), param_error);
}

TEST_CASE("tv_prox matches the exhaustive 1D solution") {
    Rng rng(41);
    for (const double w : {0.05, 0.3, 1.0}) {
        for (int trial = 0; trial < 4; ++trial) {
            std::vector<double> y(9);
            for (double& v : y) v = rng.uniform() * 4.0 - 1.0;
            const double ref = chain_prox_grid_obj(y, w);
            const std::vector<double> ph =
                tv_prox(y, static_cast<int>(y.size()), 1, w, 400);
            const std::vector<double> pv =
                tv_prox(y, 1, static_cast<int>(y.size()), w, 400);
            CHECK(chain_obj(ph, y, w) <= ref * 1.01 + 1e-9);
            CHECK(chain_obj(pv, y, w) <= ref * 1.01 + 1e-9);
        }
    }
}

TEST_CASE("tv_prox identities and invariances") {
    Rng rng(42);
    std::vector<double> y(5 * 4);
    for (double& v : y) v = rng.uniform() * 10.0;

    SUBCASE("zero weight is the identity, bitwise") {
        CHECK(tv_prox(y, 5, 4, 0.0, 50) == y);
    }
    SUBCASE("zero inner iterations is the identity, bitwise") {
        CHECK(tv_prox(y, 5, 4, 0.7, 0) == y);
    }
    SUBCASE("constant input is returned unchanged, bitwise") {
        const std::vector<double> c(5 * 4, 0.7);
        CHECK(tv_prox(c, 5, 4, 0.3, 50) == c);
    }
    SUBCASE("prox objective does not exceed the value at the input") {
        const double w = 0.4;
        const std::vector<double> p = tv_prox(y, 5, 4, w, 60);
        double obj = w * tv_norm(p, 5, 4);
        for (size_t i = 0; i < y.size(); ++i) obj += 0.5 * sq(p[i] - y[i]);
        CHECK(obj <= w * tv_norm(y, 5, 4) + 1e-12);
    }
    SUBCASE("shifting the input by a constant shifts the output") {
        const std::vector<double> p = tv_prox(y, 5, 4, 0.4, 40);
        std::vector<double> ys = y;
        for (double& v : ys) v += 3.25;
        const std::vector<double> ps = tv_prox(ys, 5, 4, 0.4, 40);
        for (size_t i = 0; i < y.size(); ++i)
            CHECK(ps[i] == doctest::Approx(p[i] + 3.25).epsilon(1e-12));
    }
}

TEST_CASE("luma-chroma transform is exactly invertible") {
    Rng rng(43);
    RadianceImage img(6, 4, 3);
    for (double& v : img.data) v = rng.uniform() * 50.0;
    const RadianceImage fwd = color_transform(img, Direction::Forward);
    const RadianceImage back = color_transform(fwd, Direction::Inverse);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));

    RadianceImage px(1, 1, 3);
    px.data = {1.0, 0.0, 0.0};  // pure red
    RadianceImage t = color_transform(px, Direction::Forward);
    CHECK(t.data[0] == doctest::Approx(0.299).epsilon(1e-15));
    CHECK(t.data[2] == doctest::Approx(0.5).epsilon(1e-15));
    px.data = {0.0, 0.0, 1.0};  // pure blue
    t = color_transform(px, Direction::Forward);
    CHECK(t.data[0] == doctest::Approx(0.114).epsilon(1e-15));
    CHECK(t.data[1] == doctest::Approx(0.5).epsilon(1e-15));
    px.data = {0.6, 0.6, 0.6};  // gray has no chroma
    t = color_transform(px, Direction::Forward);
    CHECK(t.data[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(std::fabs(t.data[1]) < 1e-15);
    CHECK(std::fabs(t.data[2]) < 1e-15);

    RadianceImage gray1(2, 2, 1);
    CHECK_THROWS_AS(color_transform(gray1, Direction::Forward), param_error);
}

TEST_CASE("synthetic operator exposes the conjugated diagonal") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.25, 4);
    const PermutationMap map = make_permutation(12, 99);
    const double gain = 3.5;
    const SyntheticOperator op(sh, map, gain, 3);
    const std::vector<double> conj = conjugated_exposure(sh, map, 3);
    REQUIRE(op.diagonal().size() == 12);
    for (size_t i = 0; i < 12; ++i)
        CHECK(op.diagonal()[i] == gain * conj[i]);

    std::vector<double> x(12), y, back;
    Rng rng(7);
    for (double& v : x) v = rng.uniform();
    op.apply(x, y);
    for (size_t i = 0; i < 12; ++i) CHECK(y[i] == op.diagonal()[i] * x[i]);
    op.apply_adjoint(y, back);
    for (size_t i = 0; i < 12; ++i)
        CHECK(back[i] == op.diagonal()[i] * y[i]);
}

TEST_CASE("synthetic Lipschitz constant is the largest valid diagonal squared") {
    const ShutterProfile sh = make_grr_profile(1.0, 1.0, 3);  // exposures 1,2,3
    const SyntheticOperator op(sh, identity_permutation(6), 2.0, 2);
    std::vector<uint8_t> valid(6, 1);
    CHECK(op.lipschitz(valid) == 36.0);  // (2*3)^2
    valid[4] = valid[5] = 0;             // drop the longest row
    CHECK(op.lipschitz(valid) == 16.0);  // (2*2)^2
}

TEST_CASE("sparse operator applies calibrated flux times row exposure") {
    SparseSystemMatrix m;
    m.n_sensor = 4;
    m.n_scene = 3;
    // (sensor, scene, flux); sensors 0,1 sit on row 0, sensors 2,3 on row 1.
    m.entries = {{0, 0, 2.0}, {1, 1, 1.0}, {2, 0, 0.5}, {2, 2, 3.0}, {3, 1, 4.0}};
    const ShutterProfile sh = make_grr_profile(1.0, 0.5, 2);  // exposures 1, 1.5
    const SparseOperator op(m, sh, 2);
    REQUIRE(op.scene_size() == 3);
    REQUIRE(op.sensor_size() == 4);

    std::vector<double> y;
    op.apply({1.0, 2.0, 3.0}, y);
    CHECK(y == std::vector<double>{2.0, 2.0, 14.25, 12.0});
    std::vector<double> x;
    op.apply_adjoint({1.0, 1.0, 1.0, 1.0}, x);
    CHECK(x == std::vector<double>{2.75, 7.0, 4.5});

    SUBCASE("adjoint identity <Ax,y> = <x,A'y>") {
        Rng rng(8);
        for (int t = 0; t < 10; ++t) {
            std::vector<double> xv(3), yv(4), ax, aty;
            for (double& v : xv) v = rng.gaussian();
            for (double& v : yv) v = rng.gaussian();
            op.apply(xv, ax);
            op.apply_adjoint(yv, aty);
            const double lhs = std::inner_product(ax.begin(), ax.end(),
                                                  yv.begin(), 0.0);
            const double rhs = std::inner_product(xv.begin(), xv.end(),
                                                  aty.begin(), 0.0);
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
        }
    }
    SUBCASE("power iteration brackets the exact spectral bound") {
        // A'A eigenvalues: 37 (scene 1) and ~20.94528 / ~3.86722 (scenes 0,2).
        std::vector<uint8_t> valid(4, 1);
        const double L = op.lipschitz(valid);
        CHECK(L >= 37.0 * 0.999);
        CHECK(L <= 37.0 * 1.051);
        valid[3] = 0;  // masking sensor 3 removes the dominant column
        const double Lm = op.lipschitz(valid);
        CHECK(Lm >= 20.94528 * 0.999);
        CHECK(Lm <= 20.94528 * 1.051);
    }
    SUBCASE("declared invalid pixels are masked out") {
        SparseSystemMatrix hot = m;
        hot.entries.pop_back();  // calibration stores nothing at a hot pixel
        hot.invalid_pixels = {3};
        const SparseOperator op2(hot, sh, 2);
        std::vector<uint8_t> valid(4, 1);
        op2.mask_invalid(valid);
        CHECK(valid == std::vector<uint8_t>{1, 1, 1, 0});
        // Keeping an entry at an invalid pixel is a contradiction.
        hot.entries = m.entries;
        CHECK_THROWS_AS(SparseOperator(hot, sh, 2), param_error);
    }
}

TEST_CASE("data gradient matches finite differences of the data term") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.3, 4);
    const SyntheticOperator op(sh, identity_permutation(12), 1.0, 3);
    std::vector<uint16_t> dn(12);
    Rng rng(9);
    for (auto& v : dn) v = static_cast<uint16_t>(rng.below(200));
    std::vector<uint8_t> erasure(12, 1);
    erasure[5] = 0;
    const Measurement meas = make_measurement(3, 4, 8, dn, erasure);

    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 3;
    p.scene_height = 4;
    p.tau = 0.0;

    RadianceImage x(3, 4, 1);
    for (double& v : x.data) v = rng.uniform() * 60.0;
    const RadianceImage g = data_grad(x, p);
    CHECK(g.data[5] == 0.0);  // erased pixels contribute nothing
    for (int i = 0; i < 12; ++i) {
        const double h = 1e-6 * std::max(1.0, std::fabs(x.data[i]));
        RadianceImage xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        const double fd = (objective(xp, p) - objective(xm, p)) / (2.0 * h);
        CHECK(g.data[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("objective adds tau times the TV semi-norm") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.0, 2);
    const SyntheticOperator op(sh, identity_permutation(4), 1.0, 2);
    const Measurement meas = make_measurement(2, 2, 8, {10, 20, 30, 40});
    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 2;
    p.scene_height = 2;
    RadianceImage x(2, 2, 1);
    x.data = {1.0, 5.0, 2.0, 2.0};
    p.tau = 0.0;
    const double data_only = objective(x, p);
    p.tau = 0.25;
    CHECK(objective(x, p) == data_only + 0.25 * tv_norm(x));
}

TEST_CASE("one gradient step from zero has a closed form") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.5, 2);  // exposures 1, 1.5
    const SyntheticOperator op(sh, identity_permutation(4), 2.0, 2);
    const Measurement meas = make_measurement(2, 2, 8, {10, 20, 30, 40});
    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 2;
    p.scene_height = 2;
    p.tau = 0.0;
    p.max_iters = 1;
    const SolveResult r = fista_solve(p);
    const double L = r.report.lipschitz;
    CHECK(L == 9.0);  // (2 * 1.5)^2
    const std::vector<double> d = op.diagonal();
    for (int i = 0; i < 4; ++i)
        CHECK(r.image.data[i] ==
              doctest::Approx(d[i] * meas.dn[i] / L).epsilon(1e-12));
    CHECK(r.report.iterations == 1);
    CHECK(r.report.objective.size() == 2);
    CHECK(r.report.rel_change.size() == 1);
}

TEST_CASE("erased samples cannot influence the solution") {
    const ShutterProfile sh = make_grr_profile(1e-3, 2e-4, 6);
    const PermutationMap map = make_permutation(36, 4);
    const SyntheticOperator op(sh, map, 2000.0, 6);
    Rng rng(10);
    std::vector<uint16_t> dn(36);
    std::vector<uint8_t> erasure(36, 1);
    for (size_t i = 0; i < dn.size(); ++i) {
        dn[i] = static_cast<uint16_t>(rng.below(250));
        if (i % 5 == 0) erasure[i] = 0;
    }
    const Measurement a = make_measurement(6, 6, 8, dn, erasure);
    std::vector<uint16_t> corrupted = dn;
    for (size_t i = 0; i < dn.size(); ++i)
        if (!erasure[i]) corrupted[i] = static_cast<uint16_t>(rng.below(256));
    const Measurement b = make_measurement(6, 6, 8, corrupted, erasure);

    InverseProblem p;
    p.op = &op;
    p.scene_width = 6;
    p.scene_height = 6;
    p.tau = 0.05;
    p.max_iters = 40;
    p.measurement = &a;
    const SolveResult ra = fista_solve(p);
    p.measurement = &b;
    const SolveResult rb = fista_solve(p);
    CHECK(ra.image.data == rb.image.data);  // bit-for-bit
    CHECK(ra.report.objective == rb.report.objective);
}

TEST_CASE("noiseless diagonal systems are solved to the quantization floor") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.125, 4);
    const SyntheticOperator op(sh, identity_permutation(16), 1.0, 4);
    Rng rng(11);
    RadianceImage truth(4, 4, 1);
    for (double& v : truth.data) v = 0.2 + rng.uniform() * 200.0;
    std::vector<uint16_t> dn(16);
    const std::vector<double>& d = op.diagonal();
    for (int i = 0; i < 16; ++i)
        dn[i] = static_cast<uint16_t>(std::llround(d[i] * truth.data[i]));
    const Measurement meas = make_measurement(4, 4, 12, dn);

    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 4;
    p.scene_height = 4;
    p.tau = 0.0;
    p.max_iters = 2000;
    p.rel_tol = 1e-14;
    const SolveResult r = fista_solve(p);
    CHECK(r.report.converged);
    for (int i = 0; i < 16; ++i)
        CHECK(r.image.data[i] == doctest::Approx(dn[i] / d[i]).epsilon(1e-9));
    // The returned image attains the smallest recorded objective.
    const double best = *std::min_element(r.report.objective.begin(),
                                          r.report.objective.end());
    CHECK(objective(r.image, p) <= best + 1e-12);
    CHECK(r.report.objective.size() ==
          static_cast<size_t>(r.report.iterations) + 1);
    CHECK(r.report.rel_change.size() ==
          static_cast<size_t>(r.report.iterations));
}

TEST_CASE("a fully erased frame without a prior cannot be solved") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.0, 2);
    const SyntheticOperator op(sh, identity_permutation(4), 1.0, 2);
    const Measurement meas =
        make_measurement(2, 2, 8, {255, 255, 255, 255}, {0, 0, 0, 0});
    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 2;
    p.scene_height = 2;
    p.tau = 0.0;
    CHECK_THROWS_AS(fista_solve(p), convergence_error);
}

TEST_CASE("a fully erased frame with a prior keeps a constant start point") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.0, 2);
    const SyntheticOperator op(sh, identity_permutation(4), 1.0, 2);
    const Measurement meas =
        make_measurement(2, 2, 8, {255, 255, 255, 255}, {0, 0, 0, 0});
    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 2;
    p.scene_height = 2;
    p.tau = 0.5;
    const RadianceImage x0(2, 2, 1, 0.75);
    const SolveResult r = fista_solve(p, &x0);
    CHECK(r.image.data == x0.data);
    CHECK(r.report.converged);
}

TEST_CASE("iterates stay nonnegative") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.2, 4);
    const SyntheticOperator op(sh, make_permutation(16, 17), 10.0, 4);
    std::vector<uint16_t> dn(16, 0);
    dn[3] = 200;  // sparse spikes force sign changes in plain gradient steps
    dn[9] = 150;
    const Measurement meas = make_measurement(4, 4, 8, dn);
    InverseProblem p;
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 4;
    p.scene_height = 4;
    p.tau = 1.5;
    p.max_iters = 60;
    const SolveResult r = fista_solve(p);
    for (double v : r.image.data) CHECK(v >= 0.0);
}

TEST_CASE("solver input validation") {
    const ShutterProfile sh = make_grr_profile(1.0, 0.0, 2);
    const SyntheticOperator op(sh, identity_permutation(4), 1.0, 2);
    const Measurement meas = make_measurement(2, 2, 8, {1, 2, 3, 4});
    InverseProblem p;
    CHECK_THROWS_AS(fista_solve(p), param_error);  // missing pieces
    p.op = &op;
    p.measurement = &meas;
    p.scene_width = 2;
    p.scene_height = 2;
    p.tau = -1.0;
    CHECK_THROWS_AS(fista_solve(p), param_error);
    p.tau = 0.0;
    p.scene_width = 4;  // operator disagrees
    CHECK_THROWS_AS(fista_solve(p), param_error);
    p.scene_width = 2;
    p.max_iters = 0;
    CHECK_THROWS_AS(fista_solve(p), param_error);
    p.max_iters = 10;
    p.rel_tol = 0.0;
    CHECK_THROWS_AS(fista_solve(p), param_error);
}

TEST_CASE("color blocks recover their channels and share the green pair") {
    const int w = 6, h = 6;
    const ShutterProfile s1 = make_grr_profile(1.0, 0.0, h);
    const ShutterProfile s2 = make_grr_profile(2.0, 0.0, h);
    const SyntheticOperator op1(s1, identity_permutation(w * h), 1.0, w);
    const SyntheticOperator op2(s2, identity_permutation(w * h), 1.0, w);

    Rng rng(12);
    RadianceImage truth(w, h, 3);
    for (double& v : truth.data) v = 5.0 + rng.uniform() * 900.0;

    auto observe = [&](const SyntheticOperator& op, int ch) {
        std::vector<uint16_t> dn(w * h);
        for (int i = 0; i < w * h; ++i)
            dn[i] = static_cast<uint16_t>(
                std::llround(op.diagonal()[i] * truth.data[i * 3 + ch]));
        return make_measurement(w, h, 12, dn);
    };
    const Measurement mr = observe(op1, 0);
    const Measurement mg1 = observe(op1, 1);
    const Measurement mg2 = observe(op2, 1);
    const Measurement mb = observe(op1, 2);

    ColorInverseProblem p;
    p.blocks = {{&op1, &mr, 0}, {&op1, &mg1, 1}, {&op2, &mg2, 1}, {&op1, &mb, 2}};
    p.scene_width = w;
    p.scene_height = h;
    p.tau = 0.0;
    p.max_iters = 4000;
    p.rel_tol = 1e-15;
    const SolveResult r = fista_solve_color(p);
    REQUIRE(r.image.channels == 3);
    // Noiseless up to rounding: |dn - d*x| <= 0.5, so per-channel error is
    // bounded by 0.5 (red/blue, d = 1) and by 0.3 for the shared greens.
    for (int i = 0; i < w * h; ++i) {
        CHECK(std::fabs(r.image.data[i * 3 + 0] - truth.data[i * 3 + 0]) <= 0.51);
        CHECK(std::fabs(r.image.data[i * 3 + 1] - truth.data[i * 3 + 1]) <= 0.51);
        CHECK(std::fabs(r.image.data[i * 3 + 2] - truth.data[i * 3 + 2]) <= 0.51);
    }
    // The green estimate fuses both blocks: (b1 + 2 b2) / 5 in scene units.
    for (int i = 0; i < w * h; ++i) {
        const double fused =
            (mg1.dn[i] + 2.0 * mg2.dn[i]) / 5.0;
        CHECK(r.image.data[i * 3 + 1] == doctest::Approx(fused).epsilon(1e-6));
    }
}

TEST_CASE("unobserved color channels keep the start point") {
    const int w = 4, h = 4;
    const ShutterProfile sh = make_grr_profile(1.0, 0.0, h);
    const SyntheticOperator op(sh, identity_permutation(w * h), 1.0, w);
    std::vector<uint16_t> dn(w * h, 100);
    const Measurement m = make_measurement(w, h, 12, dn);
    ColorInverseProblem p;
    p.blocks = {{&op, &m, 0}, {&op, &m, 2}};
    p.scene_width = w;
    p.scene_height = h;
    p.tau = 0.0;
    p.max_iters = 200;
    const SolveResult r = fista_solve_color(p);
    for (int i = 0; i < w * h; ++i) {
        CHECK(r.image.data[i * 3 + 0] == doctest::Approx(100.0).epsilon(1e-9));
        CHECK(r.image.data[i * 3 + 1] == 0.0);  // never touched by a gradient
        CHECK(r.image.data[i * 3 + 2] == doctest::Approx(100.0).epsilon(1e-9));
    }
}

TEST_CASE("color problem validation") {
    ColorInverseProblem p;
    CHECK_THROWS_AS(fista_solve_color(p), param_error);
    const ShutterProfile sh = make_grr_profile(1.0, 0.0, 2);
    const SyntheticOperator op(sh, identity_permutation(4), 1.0, 2);
    const Measurement m = make_measurement(2, 2, 8, {1, 2, 3, 4});
    p.blocks = {{&op, &m, 3}};  // channel out of range
    p.scene_width = 2;
    p.scene_height = 2;
    CHECK_THROWS_AS(fista_solve_color(p), param_error);
}
