#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "noisr/noise.hpp"
#include "oracles.hpp"

using namespace noisr;

TEST_CASE("apply_noise degenerate sigma leaves the image unchanged") {
    const ImageGrid g = oracle::random_image(16, 16, 1, 0.1, 0.9);
    NoiseSpec spec;
    spec.sigma = 1e-12;
    const ImageGrid n = apply_noise(g, spec, 4);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(n.data[i] == Catch::Approx(g.data[i]).margin(1e-9));
}

TEST_CASE("speckle noise vanishes on an all-zero image") {
    const ImageGrid g(32, 32, 0.0);
    NoiseSpec spec;
    spec.kind = NoiseKind::speckle;
    spec.sigma = 0.02;
    const ImageGrid n = apply_noise(g, spec, 9);
    for (double v : n.data) CHECK(v == 0.0);
}

TEST_CASE("fixed seed reproduces bit-identical noise") {
    const ImageGrid g = oracle::random_image(64, 64, 2);
    NoiseSpec spec;
    const ImageGrid a = apply_noise(g, spec, 1234);
    const ImageGrid b = apply_noise(g, spec, 1234);
    CHECK(a.data == b.data);
    const ImageGrid c = apply_noise(g, spec, 1235);
    CHECK(a.data != c.data);
}

TEST_CASE("gaussian residual statistics over a million clip-free pixels") {
    const ImageGrid g(1000, 1000, 0.5);
    NoiseSpec spec;
    spec.mu = 0.0;
    spec.sigma = 0.02;
    const ImageGrid n = apply_noise(g, spec, 77);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const double r = n.data[i] - g.data[i];
        sum += r;
        sumsq += r * r;
    }
    const double m = static_cast<double>(n.size());
    const double mean = sum / m;
    const double std = std::sqrt(sumsq / m - mean * mean);
    CHECK(std::fabs(mean) <= 1e-4);
    CHECK(std >= 0.0199);
    CHECK(std <= 0.0201);
}

TEST_CASE("log likelihood of constant residuals, gaussian") {
    NoiseSpec spec;
    spec.mu = 0.0;
    spec.sigma = 0.02;
    const ImageGrid ref(8, 8, 0.5);

    // log(1/(0.02 sqrt(2 pi)))
    const double at_mode = log_likelihood(ImageGrid(8, 8, 0.0), ref, spec);
    CHECK(at_mode == Catch::Approx(2.9932).margin(1e-3));

    // one sigma away: subtract z^2/2 with z = 1
    const double off = log_likelihood(ImageGrid(8, 8, 0.02), ref, spec);
    CHECK(off == Catch::Approx(at_mode - 0.5).margin(1e-12));
}

TEST_CASE("log likelihood is maximized at the distribution mean (grid search)") {
    for (double mu : {0.0, 0.013}) {
        NoiseSpec spec;
        spec.mu = mu;
        spec.sigma = 0.02;
        const ImageGrid ref(4, 4, 0.5);
        double best_c = -1.0, best_ll = -1e300;
        for (int i = -50; i <= 50; ++i) {
            const double c = i * 0.001;
            const double ll = log_likelihood(ImageGrid(4, 4, c), ref, spec);
            if (ll > best_ll) {
                best_ll = ll;
                best_c = c;
            }
        }
        CHECK(best_c == Catch::Approx(mu).margin(1e-3));
    }
}

TEST_CASE("log likelihood gradient matches central finite differences") {
    const ImageGrid ref = oracle::random_image(6, 6, 3, 0.05, 0.95);
    for (NoiseKind kind : {NoiseKind::gaussian, NoiseKind::speckle}) {
        NoiseSpec spec;
        spec.kind = kind;
        spec.mu = kind == NoiseKind::gaussian ? 0.004 : 0.0;
        spec.sigma = 0.02;
        ImageGrid res = oracle::random_image(6, 6, 4, -0.05, 0.05);
        const ImageGrid grad = log_likelihood_grad(res, ref, spec);
        const double h = 1e-5;
        for (std::size_t i = 0; i < res.size(); ++i) {
            const double orig = res.data[i];
            res.data[i] = orig + h;
            const double lp = log_likelihood(res, ref, spec);
            res.data[i] = orig - h;
            const double lm = log_likelihood(res, ref, spec);
            res.data[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double rel = std::fabs(grad.data[i] - fd) /
                               std::max({std::fabs(grad.data[i]), std::fabs(fd), 1e-300});
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("speckle likelihood stays finite where the reference is zero") {
    NoiseSpec spec;
    spec.kind = NoiseKind::speckle;
    spec.sigma = 0.02;
    const ImageGrid ref(4, 4, 0.0);
    const double ll = log_likelihood(ImageGrid(4, 4, 0.01), ref, spec);
    CHECK(std::isfinite(ll));
}

TEST_CASE("residual histogram basics") {
    const ImageGrid g = oracle::random_image(16, 16, 8, 0.2, 0.8);

    const Histogram identical = residual_histogram(g, g, 101, 0.02);
    CHECK(identical.sample_std == 0.0);
    std::uint64_t total = 0;
    int populated = 0;
    for (std::size_t b = 0; b < identical.counts.size(); ++b) {
        total += identical.counts[b];
        if (identical.counts[b] > 0) {
            ++populated;
            CHECK(identical.bin_edges[b] <= 0.0);
            CHECK(identical.bin_edges[b + 1] >= 0.0);
        }
    }
    CHECK(total == g.size());
    CHECK(populated == 1);

    ImageGrid shifted = g;
    for (double& v : shifted.data) v += 0.02;
    const Histogram shift_h = residual_histogram(shifted, g, 101, 0.02);
    CHECK(shift_h.sample_mean == Catch::Approx(0.02).margin(1e-12));
    CHECK(shift_h.sample_std == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("residual histogram of synthetic gaussian noise") {
    const ImageGrid g(1000, 1000, 0.5);
    NoiseSpec spec;
    spec.sigma = 0.02;
    const ImageGrid n = apply_noise(g, spec, 31);
    const Histogram h = residual_histogram(n, g, 101, spec.sigma);
    CHECK(h.sample_std >= 0.0199);
    CHECK(h.sample_std <= 0.0201);
    CHECK(h.n == g.size());
    REQUIRE(h.counts.size() == 101);
    REQUIRE(h.bin_edges.size() == 102);
    for (std::size_t b = 1; b < h.bin_edges.size(); ++b)
        REQUIRE(h.bin_edges[b] > h.bin_edges[b - 1]);
}

TEST_CASE("histogram csv format") {
    const Histogram h = make_histogram({0.0, 0.01, -0.01, 0.0}, 4, 0.02);
    std::ostringstream out;
    write_histogram_csv(out, h);
    const std::string text = out.str();
    CHECK(text.find("# mean=") != std::string::npos);
    CHECK(text.find(" std=") != std::string::npos);
    CHECK(text.find(" n=4") != std::string::npos);
    // one line per bin plus the trailing comment
    std::size_t lines = 0;
    for (char ch : text)
        if (ch == '\n') ++lines;
    CHECK(lines == 5);
}

TEST_CASE("histogram rejects bad inputs") {
    const ImageGrid a(4, 4, 0.5);
    CHECK_THROWS_AS(residual_histogram(a, ImageGrid(4, 5, 0.5), 10), InputError);
    CHECK_THROWS_AS(make_histogram({0.1}, 1, 1.0), InputError);
    NoiseSpec bad;
    bad.sigma = 0.0;
    CHECK_THROWS_AS(apply_noise(a, bad, 1), InputError);
}
