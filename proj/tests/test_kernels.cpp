#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "endo/kernels.hpp"

using namespace endo;
namespace k = endo::kernels;

namespace {

std::mt19937_64 rng(7);

Tensor4<double> rand_tensor(int n, int c, int h, int w) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor4<double> t(n, c, h, w);
    for (auto& v : t.data) v = u(rng);
    return t;
}
std::vector<double> rand_vec(std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Central difference of <f(x), g> w.r.t. each entry of x.
std::vector<double> numeric_grad(std::vector<double>& x, const std::function<double()>& loss) {
    const double h = 1e-6;
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double dn = loss();
        x[i] = keep;
        g[i] = (up - dn) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("conv3x3 matches the serial reference") {
    for (int cin : {1, 3}) {
        const int cout = 4;
        auto in = rand_tensor(2, cin, 7, 5);
        auto w = rand_vec(std::size_t(cout) * cin * 9);
        auto b = rand_vec(cout);
        const auto y = k::conv3x3_forward(in, w, b, cout);
        const auto yr = k::ref::conv3x3_forward(in, w, b, cout);
        CHECK(max_abs_diff(y.data, yr.data) < 1e-12);

        auto go = rand_tensor(2, cout, 7, 5);
        Tensor4<double> gi(2, cin, 7, 5), gir(2, cin, 7, 5);
        std::vector<double> gw(w.size()), gwr(w.size()), gb(cout), gbr(cout);
        k::conv3x3_backward(in, w, go, &gi, gw, &gb);
        k::ref::conv3x3_backward(in, w, go, &gir, gwr, &gbr);
        CHECK(max_abs_diff(gi.data, gir.data) < 1e-12);
        CHECK(max_abs_diff(gw, gwr) < 1e-12);
        CHECK(max_abs_diff(gb, gbr) < 1e-12);
    }
}

TEST_CASE("conv3x3 reference agrees with finite differences") {
    const int cin = 2, cout = 3;
    auto in = rand_tensor(1, cin, 4, 5);
    auto w = rand_vec(std::size_t(cout) * cin * 9);
    std::vector<double> b;
    auto go = rand_tensor(1, cout, 4, 5);
    auto loss = [&] { return dot(k::ref::conv3x3_forward(in, w, b, cout).data, go.data); };
    Tensor4<double> gi(1, cin, 4, 5);
    std::vector<double> gw(w.size());
    k::ref::conv3x3_backward(in, w, go, &gi, gw, static_cast<std::vector<double>*>(nullptr));
    CHECK(max_abs_diff(gw, numeric_grad(w, loss)) < 1e-6);
    CHECK(max_abs_diff(gi.data, numeric_grad(in.data, loss)) < 1e-6);
}

TEST_CASE("upconv2x2 matches reference and finite differences") {
    const int cin = 3, cout = 2;
    auto in = rand_tensor(2, cin, 3, 4);
    auto w = rand_vec(std::size_t(cin) * cout * 4);
    auto b = rand_vec(cout);
    const auto y = k::upconv2x2_forward(in, w, b, cout);
    CHECK(y.h == 6);
    CHECK(y.w == 8);
    CHECK(max_abs_diff(y.data, k::ref::upconv2x2_forward(in, w, b, cout).data) < 1e-12);

    auto go = rand_tensor(2, cout, 6, 8);
    Tensor4<double> gi(2, cin, 3, 4), gir(2, cin, 3, 4);
    std::vector<double> gw(w.size()), gwr(w.size()), gb(cout), gbr(cout);
    k::upconv2x2_backward(in, w, go, &gi, gw, &gb);
    k::ref::upconv2x2_backward(in, w, go, &gir, gwr, &gbr);
    CHECK(max_abs_diff(gi.data, gir.data) < 1e-12);
    CHECK(max_abs_diff(gw, gwr) < 1e-12);
    auto loss = [&] { return dot(k::upconv2x2_forward(in, w, b, cout).data, go.data); };
    CHECK(max_abs_diff(gw, numeric_grad(w, loss)) < 1e-6);
    CHECK(max_abs_diff(gi.data, numeric_grad(in.data, loss)) < 1e-6);
    CHECK(max_abs_diff(gb, numeric_grad(b, loss)) < 1e-6);
}

TEST_CASE("conv1x1 agrees with finite differences") {
    const int cin = 3, cout = 2;
    auto in = rand_tensor(2, cin, 3, 3);
    auto w = rand_vec(std::size_t(cin) * cout);
    auto b = rand_vec(cout);
    auto go = rand_tensor(2, cout, 3, 3);
    auto loss = [&] { return dot(k::conv1x1_forward(in, w, b, cout).data, go.data); };
    Tensor4<double> gi(2, cin, 3, 3);
    std::vector<double> gw(w.size()), gb(cout);
    k::conv1x1_backward(in, w, go, &gi, gw, &gb);
    CHECK(max_abs_diff(gw, numeric_grad(w, loss)) < 1e-6);
    CHECK(max_abs_diff(gb, numeric_grad(b, loss)) < 1e-6);
    CHECK(max_abs_diff(gi.data, numeric_grad(in.data, loss)) < 1e-6);
}

TEST_CASE("instance norm matches reference and finite differences") {
    auto x = rand_tensor(2, 3, 4, 5);
    auto xr = x;
    std::vector<double> inv, invr;
    k::instance_norm_forward(x, inv, 1e-5);
    k::ref::instance_norm_forward(xr, invr, 1e-5);
    CHECK(max_abs_diff(x.data, xr.data) < 1e-12);
    CHECK(max_abs_diff(inv, invr) < 1e-12);
    // zero mean, unit variance per plane
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) {
            double m = 0, v = 0;
            for (std::size_t i = 0; i < x.plane_size(); ++i) m += x.plane(n, c)[i];
            m /= double(x.plane_size());
            for (std::size_t i = 0; i < x.plane_size(); ++i) v += std::pow(x.plane(n, c)[i] - m, 2);
            CHECK(std::abs(m) < 1e-12);
            CHECK(v / double(x.plane_size()) == doctest::Approx(1.0).epsilon(1e-3));
        }

    auto in = rand_tensor(1, 2, 3, 4);
    auto go = rand_tensor(1, 2, 3, 4);
    auto loss = [&] {
        auto t = in;
        std::vector<double> s;
        k::instance_norm_forward(t, s, 1e-5);
        return dot(t.data, go.data);
    };
    auto y = in;
    std::vector<double> s;
    k::instance_norm_forward(y, s, 1e-5);
    auto g = go, gr = go;
    k::instance_norm_backward(y, s, g);
    k::ref::instance_norm_backward(y, s, gr);
    CHECK(max_abs_diff(g.data, gr.data) < 1e-12);
    CHECK(max_abs_diff(g.data, numeric_grad(in.data, loss)) < 1e-5);
}

TEST_CASE("maxpool and leaky relu gradients") {
    auto in = rand_tensor(1, 2, 4, 6);
    std::vector<std::uint8_t> arg;
    const auto y = k::maxpool2x2_forward(in, arg);
    CHECK(y.h == 2);
    CHECK(y.w == 3);
    CHECK(y.at(0, 1, 1, 2) == std::max({in.at(0, 1, 2, 4), in.at(0, 1, 2, 5), in.at(0, 1, 3, 4), in.at(0, 1, 3, 5)}));
    auto go = rand_tensor(1, 2, 2, 3);
    const auto gi = k::maxpool2x2_backward(go, arg, 4, 6);
    auto loss = [&] {
        std::vector<std::uint8_t> a;
        return dot(k::maxpool2x2_forward(in, a).data, go.data);
    };
    CHECK(max_abs_diff(gi.data, numeric_grad(in.data, loss)) < 1e-6);

    auto pre = rand_tensor(1, 1, 3, 3);
    auto act = pre;
    k::leaky_relu_forward(act, 0.1);
    for (std::size_t i = 0; i < pre.size(); ++i) CHECK(act.data[i] == (pre.data[i] > 0 ? pre.data[i] : 0.1 * pre.data[i]));
    auto g = rand_tensor(1, 1, 3, 3);
    auto g0 = g;
    k::leaky_relu_backward(pre, g, 0.1);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data[i] == (pre.data[i] > 0 ? g0.data[i] : 0.1 * g0.data[i]));
}
