#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sortnet/optim.hpp"
#include "sortnet/rng.hpp"

using namespace sortnet;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// scalar SBCE loss for the finite-difference Hessian oracle
double sbce_scalar(double y, double p) {
    const double s = logistic(y);
    return -(p * std::log(s) + (1.0 - p) * std::log(1.0 - s));
}

} // namespace

TEST_SUITE("optim") {

TEST_CASE("newton target solves the damped system") {
    SUBCASE("MSE projects straight onto the target") {
        const std::vector<double> y{0.3, -1.2, 4.0};
        const std::vector<double> t{1.0, 0.5, -2.0};
        const auto grad = loss_gradient(LossKind::mse, y, t);
        const auto z = newton_target(y, grad, loss_curvature(LossKind::mse, y, t), 0.0);
        for (int i = 0; i < 3; ++i) CHECK(z[i] == t[i]); // exact, not approximate
    }
    SUBCASE("large damping degenerates to a scaled gradient step") {
        const std::vector<double> y{1.0, 2.0};
        const std::vector<double> grad{0.5, -0.25};
        Matrix h(2, 2);
        h(0, 0) = 3.0;
        h(1, 1) = 7.0;
        const double damping = 1e9;
        const auto z = newton_target(y, grad, Curvature::from_dense(h), damping);
        for (int i = 0; i < 2; ++i) CHECK(z[i] == doctest::Approx(y[i] - grad[i] / damping).epsilon(1e-6));
    }
    SUBCASE("singular curvature without damping is rejected") {
        const std::vector<double> y{1.0, 2.0};
        const std::vector<double> grad{0.1, 0.2};
        CHECK_THROWS_WITH_AS(
            [&] { (void)newton_target(y, grad, Curvature::from_dense(Matrix(2, 2)), 0.0); }(),
            doctest::Contains("damping"), std::runtime_error);
    }
    SUBCASE("SMCE Fisher target matches a dense brute-force solve") {
        Rng rng(83);
        const int n = 6;
        std::vector<double> y(n);
        for (double& v : y) v = rng.uniform(-2.0, 2.0);
        std::vector<double> p(n, 0.0);
        p[2] = 1.0;

        const auto grad = loss_gradient(LossKind::smce, y, p);
        // independent assembly: q from scratch, Fisher = g g^T, dense solve by
        // Cramer-free Gauss-Jordan on an augmented matrix
        std::vector<double> q(n);
        double mx = y[0], denom = 0.0;
        for (double v : y) mx = std::max(mx, v);
        for (int i = 0; i < n; ++i) denom += (q[i] = std::exp(y[i] - mx));
        for (double& v : q) v /= denom;
        std::vector<std::vector<double>> aug(n, std::vector<double>(n + 1, 0.0));
        const double damping = 1e-3;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) aug[i][j] = (q[i] - p[i]) * (q[j] - p[j]);
            aug[i][i] += damping;
            aug[i][n] = grad[i];
        }
        for (int col = 0; col < n; ++col) {
            int piv = col;
            for (int r = col; r < n; ++r)
                if (std::fabs(aug[r][col]) > std::fabs(aug[piv][col])) piv = r;
            std::swap(aug[col], aug[piv]);
            for (int r = 0; r < n; ++r) {
                if (r == col) continue;
                const double f = aug[r][col] / aug[col][col];
                for (int j = col; j <= n; ++j) aug[r][j] -= f * aug[col][j];
            }
        }
        NewtonLossSpec spec;
        spec.curvature = CurvatureKind::empirical_fisher;
        spec.loss = LossKind::smce;
        spec.damping = damping;
        const auto sg = newton_loss_grad(spec, {y}, {p});
        for (int i = 0; i < n; ++i) {
            const double expected = aug[i][n] / aug[i][i]; // (F + damping I)^{-1} grad
            CHECK(sg[0][i] == doctest::Approx(expected).epsilon(1e-9));
        }
    }
}

TEST_CASE("newton loss gradients") {
    SUBCASE("MSE surrogate is bit-identical to the plain gradient") {
        Rng rng(89);
        NewtonLossSpec spec;
        spec.curvature = CurvatureKind::elementwise_hessian;
        spec.loss = LossKind::mse;
        spec.damping = 0.0;
        std::vector<std::vector<double>> ys(4, std::vector<double>(5));
        std::vector<std::vector<double>> ts(4, std::vector<double>(5));
        for (auto& v : ys)
            for (double& q : v) q = rng.uniform(-3.0, 3.0);
        for (auto& v : ts)
            for (double& q : v) q = rng.uniform(-3.0, 3.0);
        const auto sg = newton_loss_grad(spec, ys, ts);
        for (int s = 0; s < 4; ++s)
            for (int i = 0; i < 5; ++i) CHECK(sg[s][i] == ys[s][i] - ts[s][i]);
    }
    SUBCASE("zero gradient input gives zero surrogate gradient") {
        NewtonLossSpec spec;
        spec.curvature = CurvatureKind::elementwise_hessian;
        spec.loss = LossKind::sbce;
        spec.damping = 0.0;
        // y = 0 with p = 1/2 sits exactly at the SBCE optimum
        const auto sg = newton_loss_grad(spec, {{0.0, 0.0}}, {{0.5, 0.5}});
        CHECK(sg[0][0] == doctest::Approx(0.0));
        CHECK(sg[0][1] == doctest::Approx(0.0));
    }
    SUBCASE("SBCE element-wise curvature matches a finite-difference Hessian") {
        Rng rng(97);
        for (int rep = 0; rep < 20; ++rep) {
            const double y = rng.uniform(-2.0, 2.0);
            const double p = rng.uniform(0.05, 0.95);
            const double h = 1e-4;
            const double fd_hess =
                (sbce_scalar(y + h, p) - 2.0 * sbce_scalar(y, p) + sbce_scalar(y - h, p)) / (h * h);
            const auto curv = loss_curvature(LossKind::sbce, std::vector<double>{y}, std::vector<double>{p});
            REQUIRE(std::fabs(curv.diagonal[0] - fd_hess) <= 1e-6 * std::max(1.0, std::fabs(fd_hess)));
        }
    }
    SUBCASE("BCE curvature matches a finite-difference Hessian") {
        Rng rng(101);
        for (int rep = 0; rep < 20; ++rep) {
            const double y = rng.uniform(0.2, 0.8);
            const double p = rng.uniform(0.1, 0.9);
            const double h = 1e-5;
            auto bce = [&](double v) { return -(p * std::log(v) + (1.0 - p) * std::log(1.0 - v)); };
            const double fd_grad = (bce(y + h) - bce(y - h)) / (2.0 * h);
            const double fd_hess = (bce(y + h) - 2.0 * bce(y) + bce(y - h)) / (h * h);
            const auto grad = loss_gradient(LossKind::bce, std::vector<double>{y}, std::vector<double>{p});
            const auto curv = loss_curvature(LossKind::bce, std::vector<double>{y}, std::vector<double>{p});
            REQUIRE(std::fabs(grad[0] - fd_grad) <= 1e-5 * std::max(1.0, std::fabs(fd_grad)));
            REQUIRE(std::fabs(curv.diagonal[0] - fd_hess) <= 1e-4 * std::max(1.0, std::fabs(fd_hess)));
        }
    }
    SUBCASE("SMCE element-wise Hessian matches finite differences of the gradient") {
        Rng rng(103);
        const int n = 4;
        std::vector<double> y(n), p(n, 0.0);
        for (double& v : y) v = rng.uniform(-1.0, 1.0);
        p[1] = 1.0;
        const auto curv = loss_curvature(LossKind::smce, y, p);
        const double h = 1e-6;
        for (int j = 0; j < n; ++j) {
            auto up = y, down = y;
            up[j] += h;
            down[j] -= h;
            const auto gu = loss_gradient(LossKind::smce, up, p);
            const auto gd = loss_gradient(LossKind::smce, down, p);
            for (int i = 0; i < n; ++i)
                REQUIRE(std::fabs(curv.dense(i, j) - (gu[i] - gd[i]) / (2.0 * h)) <= 1e-6);
        }
    }
}

TEST_CASE("custom losses require callbacks") {
    NewtonLossSpec spec;
    spec.loss = LossKind::custom;
    spec.curvature = CurvatureKind::empirical_fisher;
    CHECK_THROWS(newton_loss_grad(spec, {{1.0}}, {{0.0}}));
    spec.custom_grad = [](std::span<const double> y, std::span<const double> t) {
        return std::vector<double>{y[0] - t[0]};
    };
    CHECK(newton_loss_grad(spec, {{1.0}}, {{0.0}})[0].size() == 1);
    // the element-wise variant additionally needs the curvature callback
    spec.curvature = CurvatureKind::elementwise_hessian;
    CHECK_THROWS(newton_loss_grad(spec, {{1.0}}, {{0.0}}));
}

TEST_CASE("resgro") {
    SUBCASE("single zero sample returns y") {
        const std::vector<double> y{1.0, -2.0};
        const auto z = resgro_target_with_noise(
            y, [](std::span<const double>) { return 0.0; }, 1, {{0.0, 0.0}});
        CHECK(z == y);
    }
    SUBCASE("argmin selection when K equals M") {
        // l(z) = z^2, y = 1, candidate points 0.5 and 1.5
        const std::vector<double> y{1.0};
        const auto z = resgro_target_with_noise(
            y, [](std::span<const double> v) { return v[0] * v[0]; }, 2, {{-0.5}, {0.5}});
        CHECK(z[0] == doctest::Approx(0.5));
    }
    SUBCASE("rank weights match subset enumeration") {
        for (int pool = 1; pool <= 8; ++pool) {
            for (int k = 1; k <= pool; ++k) {
                const auto w = resgro_rank_weights(pool, k);
                // enumerate all k-subsets of the pool; count how often each
                // rank is the subset minimum
                std::vector<long> wins(pool, 0);
                long total = 0;
                oracles::for_each_subset(pool, k, [&](const std::vector<int>& pick) {
                    ++wins[pick.front()]; // entries ascend, front is the best rank
                    ++total;
                });
                double sum = 0.0;
                for (int r = 0; r < pool; ++r) {
                    REQUIRE(w[r] == doctest::Approx(static_cast<double>(wins[r]) / total).epsilon(1e-12));
                    if (r > 0) REQUIRE(w[r] <= w[r - 1] + 1e-15);
                    sum += w[r];
                }
                REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
        CHECK(resgro_rank_weights(3, 2)[0] == doctest::Approx(2.0 / 3.0));
        CHECK(resgro_rank_weights(3, 2)[1] == doctest::Approx(1.0 / 3.0));
        CHECK(resgro_rank_weights(3, 2)[2] == doctest::Approx(0.0));
    }
    SUBCASE("bootstrapped target is the weighted mixture") {
        const std::vector<double> y{0.0};
        // losses order the pool as 0.1 < 0.2 < 0.3
        const auto z = resgro_target_with_noise(
            y, [](std::span<const double> v) { return std::fabs(v[0]); }, 2, {{0.3}, {0.1}, {0.2}});
        CHECK(z[0] == doctest::Approx((2.0 / 3.0) * 0.1 + (1.0 / 3.0) * 0.2).epsilon(1e-12));
    }
    SUBCASE("K > M rejected") {
        ResgroSpec spec;
        spec.num_samples = 4;
        spec.pool_size = 2;
        Rng rng(1);
        const std::vector<double> y{0.0};
        CHECK_THROWS(resgro_target(y, [](std::span<const double>) { return 0.0; }, spec, rng));
    }
    SUBCASE("gaussian sampling improves the target") {
        ResgroSpec spec;
        spec.num_samples = 32;
        spec.pool_size = 32;
        spec.noise_scale = 0.3;
        Rng rng(7);
        const std::vector<double> y{2.0, -1.0};
        auto quad = [](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; };
        const auto z = resgro_target(y, quad, spec, rng);
        CHECK(quad(z) < quad(y));
    }
}

TEST_CASE("two-stage split equals a direct gradient step") {
    SUBCASE("closed form on a 1-D linear model") {
        // f(x; theta) = theta x with l(y) = 1/2 (y - t)^2
        const double theta = 0.8, xval = 1.7, t = -0.4, lr = 0.05;
        auto mlp = mlp_init({1, 1}, 0);
        mlp.weights[0](0, 0) = theta;
        mlp.biases[0][0] = 0.0;
        Matrix x(1, 1);
        x(0, 0) = xval;
        two_stage_gd_step(mlp, x, [&](const Matrix& y) {
            Matrix g(1, 1);
            g(0, 0) = y(0, 0) - t;
            return g;
        }, lr);
        const double expected = theta - lr * xval * (theta * xval - t);
        CHECK(mlp.weights[0](0, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("lr = 0 leaves parameters unchanged") {
        auto mlp = mlp_init({3, 4, 2}, 17);
        const auto before = mlp.params_flat();
        Matrix x(5, 3);
        Rng rng(107);
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        two_stage_gd_step(mlp, x, [&](const Matrix& y) { return y; }, 0.0);
        CHECK(mlp.params_flat() == before);
    }
    SUBCASE("random MLPs match the direct path to 1e-10") {
        Rng rng(109);
        for (int rep = 0; rep < 5; ++rep) {
            auto mlp = mlp_init({4, 6, 3}, 200 + rep);
            Matrix x(7, 4), t(7, 3);
            for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
            for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
            auto grad_fn = [&](const Matrix& y) {
                Matrix g(y.rows, y.cols);
                for (std::size_t i = 0; i < y.data.size(); ++i) g.data[i] = y.data[i] - t.data[i];
                return g;
            };
            const double lr = 0.1;

            auto split = mlp;
            two_stage_gd_step(split, x, grad_fn, lr);

            // direct path: one gradient descent step on loss(f(x))
            auto direct = mlp;
            MlpCache cache;
            const auto y = mlp_forward(direct, x, &cache);
            const auto grads = mlp_backward(direct, cache, grad_fn(y));
            auto params = direct.params_flat();
            const auto gflat = grads.flat();
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * gflat[i];
            direct.set_params_flat(params);

            const auto a = split.params_flat();
            const auto b = direct.params_flat();
            double worst = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
            REQUIRE(worst < 1e-10);
        }
    }
    SUBCASE("newton z-step + exact theta-step reach the quadratic optimum") {
        // linear model, quadratic loss, damping 0: the surrogate theta-step
        // with lr = 1/x^2 lands f at the optimum of the loss
        const double theta = -0.3, xval = 2.0, t = 5.0;
        const std::vector<double> y{theta * xval};
        const auto grad = loss_gradient(LossKind::mse, y, std::vector<double>{t});
        const auto z = newton_target(y, grad, loss_curvature(LossKind::mse, y, std::vector<double>{t}), 0.0);
        const double theta2 = theta - (1.0 / (xval * xval)) * xval * (y[0] - z[0]);
        CHECK(theta2 * xval == doctest::Approx(t).epsilon(1e-12));
    }
    SUBCASE("scalar-output two Newton steps equal one direct Newton step") {
        // f(theta) = theta^2 + theta, l(y) = (y - 3)^4 at theta = 0.5
        auto f = [](double th) { return th * th + th; };
        auto fp = [](double th) { return 2.0 * th + 1.0; };
        auto fpp = [](double) { return 2.0; };
        auto lp = [](double y) { return 4.0 * std::pow(y - 3.0, 3.0); };
        auto lpp = [](double y) { return 12.0 * std::pow(y - 3.0, 2.0); };
        const double th = 0.5;
        const double y = f(th);

        // direct Newton on l(f(theta))
        const double g_th = lp(y) * fp(th);
        const double h_th = lpp(y) * fp(th) * fp(th) + lp(y) * fpp(th);
        const double direct = th - g_th / h_th;

        // two-stage: Newton z-step, then Newton theta-step on 1/2 (z* - f)^2
        const double zstar = y - lp(y) / lpp(y);
        const double sg = fp(th) * (f(th) - zstar);
        const double sh = fpp(th) * (f(th) - zstar) + fp(th) * fp(th);
        const double split = th - sg / sh;
        CHECK(split == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("optimizer steps") {
    SUBCASE("sgd") {
        OptimizerState opt;
        opt.kind = OptKind::sgd;
        opt.lr = 1.0;
        std::vector<double> p{0.0};
        opt.step(p, std::vector<double>{1.0});
        CHECK(p[0] == doctest::Approx(-1.0));
    }
    SUBCASE("zero gradients leave parameters unchanged") {
        for (auto kind : {OptKind::sgd, OptKind::adaptive_moments}) {
            OptimizerState opt;
            opt.kind = kind;
            opt.lr = 0.1;
            std::vector<double> p{1.0, -2.0};
            opt.step(p, std::vector<double>{0.0, 0.0});
            CHECK(p == std::vector<double>{1.0, -2.0});
        }
    }
    SUBCASE("adaptive moments first step is close to lr * sign(g)") {
        OptimizerState opt;
        opt.kind = OptKind::adaptive_moments;
        opt.lr = 0.01;
        std::vector<double> p{0.0, 0.0};
        opt.step(p, std::vector<double>{0.5, -3.0});
        // hand evaluation: mhat = g, vhat = g^2 -> step = lr * g / (|g| + eps)
        CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-4));
        CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-4));
    }
    SUBCASE("shape mismatch") {
        OptimizerState opt;
        std::vector<double> p{1.0};
        CHECK_THROWS(opt.step(p, std::vector<double>{1.0, 2.0}));
    }
}

TEST_CASE("kendall tau") {
    CHECK(kendall_tau(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{0, 1, 2}) == doctest::Approx(1.0));
    CHECK(kendall_tau(std::vector<double>{0.3, 0.2, 0.1}, std::vector<int>{0, 1, 2}) == doctest::Approx(-1.0));
    // truth ranks (0,1,2), predictions order the last two the wrong way
    CHECK(kendall_tau(std::vector<double>{0.0, 0.9, 0.5}, std::vector<int>{0, 1, 2}) ==
          doctest::Approx(1.0 / 3.0));
    CHECK_THROWS(kendall_tau(std::vector<double>{1.0}, std::vector<int>{0}));
}

} // TEST_SUITE
