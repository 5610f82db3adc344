#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "noisr/resample.hpp"
#include "noisr/trainer.hpp"
#include "oracles.hpp"

using namespace noisr;

namespace {

NetworkConfig desk_config(std::uint64_t seed) {
    NetworkConfig cfg;
    cfg.factor = 2;
    cfg.kernel_size = 3;
    cfg.num_blocks = 2;
    cfg.width = 6;
    cfg.skip_width = 3;
    cfg.seed = seed;
    return cfg;
}

// Small synthetic triplet set with learnable structure.
std::vector<Triplet> make_triplets(int count, int hr, std::uint64_t seed, const NoiseSpec& spec) {
    std::vector<Triplet> out;
    for (int i = 0; i < count; ++i) {
        ImageGrid g(hr, hr);
        const double fx = 0.5 + 0.3 * keyed_uniform(seed, static_cast<std::uint64_t>(3 * i));
        const double fy = 0.5 + 0.3 * keyed_uniform(seed, static_cast<std::uint64_t>(3 * i + 1));
        const double ph = 6.28 * keyed_uniform(seed, static_cast<std::uint64_t>(3 * i + 2));
        for (int r = 0; r < hr; ++r)
            for (int c = 0; c < hr; ++c)
                g(r, c) = 0.5 + 0.25 * std::sin(fx * c * 0.4 + ph) * std::cos(fy * r * 0.4);
        Triplet t;
        t.id = "img" + std::to_string(i);
        t.g = g;
        t.n = apply_noise(g, spec, seed + 100 + static_cast<std::uint64_t>(i));
        t.l = decimate(t.n, SamplingFactor(2));
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace

TEST_CASE("loss breakdown on constant fields") {
    NoiseSpec spec;
    spec.sigma = 0.02;
    const ImageGrid g(8, 8, 0.5);

    SECTION("p = n = g") {
        const LossBreakdown b = loss(g, g, g, spec, -10.0);
        CHECK(b.fit_term == 0.0);
        CHECK(b.noise_term == Catch::Approx(2.9932).margin(1e-3));
        CHECK(b.total == Catch::Approx(-29.932).margin(1e-2));
    }
    SECTION("lambda zero reduces the total to the fit term") {
        const ImageGrid p = oracle::random_image(8, 8, 61);
        const ImageGrid n = oracle::random_image(8, 8, 62);
        const LossBreakdown b = loss(p, n, g, spec, 0.0);
        CHECK(b.total == b.fit_term);
    }
    SECTION("p = g against a shifted target") {
        ImageGrid n = g;
        for (double& v : n.data) v += 0.02;
        const LossBreakdown b = loss(g, n, g, spec, -10.0);
        CHECK(b.fit_term == Catch::Approx(0.02).margin(1e-12)); // rms of a constant 0.02 field
        CHECK(b.noise_term == Catch::Approx(2.9932).margin(1e-3));
        CHECK(b.total == Catch::Approx(0.02 - 29.932).margin(1e-2));
    }
    SECTION("composition identity") {
        const ImageGrid p = oracle::random_image(8, 8, 63);
        const ImageGrid n = oracle::random_image(8, 8, 64);
        const LossBreakdown b = loss(p, n, g, spec, -10.0);
        CHECK(b.total == Catch::Approx(b.fit_term - 10.0 * b.noise_term).margin(1e-9));
    }
}

TEST_CASE("loss gradient matches finite differences in P") {
    const ImageGrid g = oracle::random_image(6, 6, 71, 0.1, 0.9);
    const ImageGrid n = oracle::random_image(6, 6, 72, 0.1, 0.9);
    for (NoiseKind kind : {NoiseKind::gaussian, NoiseKind::speckle}) {
        NoiseSpec spec;
        spec.kind = kind;
        spec.sigma = 0.02;
        for (double lambda : {0.0, -10.0}) {
            for (FitMode mode : {FitMode::rms, FitMode::frobenius, FitMode::mse}) {
                ImageGrid p = oracle::random_image(6, 6, 73, 0.1, 0.9);
                const ImageGrid grad = loss_grad(p, n, g, spec, lambda, mode);
                const double h = 1e-6;
                for (std::size_t i = 0; i < p.size(); i += 5) {
                    const double orig = p.data[i];
                    p.data[i] = orig + h;
                    const double lp = loss(p, n, g, spec, lambda, mode).total;
                    p.data[i] = orig - h;
                    const double lm = loss(p, n, g, spec, lambda, mode).total;
                    p.data[i] = orig;
                    const double fd = (lp - lm) / (2.0 * h);
                    REQUIRE(grad.data[i] ==
                            Catch::Approx(fd).margin(1e-6 * std::max(1.0, std::fabs(fd))));
                }
            }
        }
    }
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    const NetworkConfig cfg = desk_config(1);
    ParameterSet params = init(cfg);
    const ParameterSet before = params;
    AdamState state = AdamState::make(cfg);
    adam_step(params, zero_parameters(cfg), state, 0.001, cfg);
    auto a = parameter_arrays(params, cfg);
    auto b = parameter_arrays(const_cast<ParameterSet&>(before), cfg);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(*a[i].data == *b[i].data);
}

TEST_CASE("adam first-step magnitude is the learning rate") {
    // bias-corrected mhat/(sqrt(vhat)+eps) = 1/(1+1e-8) for unit gradient
    const NetworkConfig cfg = desk_config(2);
    ParameterSet params = zero_parameters(cfg);
    ParameterSet grads = zero_parameters(cfg);
    for (auto& a : parameter_arrays(grads, cfg))
        for (double& v : *a.data) v = 1.0;
    AdamState state = AdamState::make(cfg);
    adam_step(params, grads, state, 0.001, cfg);
    for (auto& a : parameter_arrays(params, cfg))
        for (double v : *a.data) REQUIRE(v == Catch::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam identical coordinates stay identical under a constant gradient") {
    const NetworkConfig cfg = desk_config(3);
    ParameterSet params = zero_parameters(cfg);
    ParameterSet grads = zero_parameters(cfg);
    for (auto& a : parameter_arrays(grads, cfg))
        for (double& v : *a.data) v = 0.37;
    AdamState state = AdamState::make(cfg);
    adam_step(params, grads, state, 0.01, cfg);
    adam_step(params, grads, state, 0.01, cfg);
    const double first = params.head.v.d[0];
    for (auto& a : parameter_arrays(params, cfg))
        for (double v : *a.data) REQUIRE(v == first);
}

TEST_CASE("adam rejects non-finite gradients") {
    const NetworkConfig cfg = desk_config(4);
    ParameterSet params = init(cfg);
    ParameterSet grads = zero_parameters(cfg);
    grads.head.v.d[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState state = AdamState::make(cfg);
    CHECK_THROWS_AS(adam_step(params, grads, state, 0.001, cfg), NumericError);
}

TEST_CASE("early stopper stops exactly patience epochs past the best") {
    for (int patience : {3, 10}) {
        for (int best_epoch : {1, 4}) {
            EarlyStopper stopper(patience);
            int stopped_at = -1;
            for (int epoch = 1; epoch <= 100; ++epoch) {
                // strictly improving until best_epoch, then strictly worsening
                const double val = epoch <= best_epoch ? 10.0 - epoch : 10.0 - best_epoch + epoch * 0.1;
                if (stopper.update(epoch, val)) {
                    stopped_at = epoch;
                    break;
                }
            }
            REQUIRE(stopped_at == best_epoch + patience);
            REQUIRE(stopper.best_epoch == best_epoch);
        }
    }
}

TEST_CASE("early stopper ignores sub-threshold improvements") {
    EarlyStopper stopper(2, 1e-6);
    CHECK_FALSE(stopper.update(1, 1.0));
    CHECK_FALSE(stopper.update(2, 1.0 - 1e-9)); // too small to count
    CHECK(stopper.update(3, 1.0 - 2e-9));
    CHECK(stopper.best_epoch == 1);
}

TEST_CASE("training trace length and best retention") {
    NoiseSpec spec;
    spec.sigma = 0.02;
    const auto triplets = make_triplets(4, 24, 5, spec);
    const std::vector<Triplet> train_split(triplets.begin(), triplets.begin() + 3);
    const std::vector<Triplet> val_split(triplets.begin() + 3, triplets.end());
    const NormalizationStats stats{0.5, 0.25};

    TrainConfig tc;
    tc.max_epochs = 1;
    tc.batch_size = 2;
    tc.patch_size = 16;
    tc.seed = 11;
    const TrainResult res = train(train_split, val_split, spec, desk_config(11), tc, stats);
    REQUIRE(res.trace.size() == 1);
    CHECK(res.best.meta.epoch == 1);

    // best-checkpoint validation loss equals the min over trace records
    TrainConfig tc2 = tc;
    tc2.max_epochs = 6;
    tc2.patience = 6;
    const TrainResult res2 = train(train_split, val_split, spec, desk_config(11), tc2, stats);
    double min_val = res2.trace.front().total_val;
    for (const EpochRecord& r : res2.trace) min_val = std::min(min_val, r.total_val);
    CHECK(res2.best.meta.best_val_total == min_val);
}

TEST_CASE("two runs with the same seed produce bit-identical traces") {
    NoiseSpec spec;
    spec.sigma = 0.02;
    const auto triplets = make_triplets(5, 24, 6, spec);
    const std::vector<Triplet> train_split(triplets.begin(), triplets.begin() + 4);
    const std::vector<Triplet> val_split(triplets.begin() + 4, triplets.end());
    const NormalizationStats stats{0.5, 0.25};

    TrainConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 2;
    tc.patch_size = 16;
    tc.seed = 21;

    std::ostringstream log_a, log_b;
    const TrainResult a = train(train_split, val_split, spec, desk_config(21), tc, stats, &log_a);
    const TrainResult b = train(train_split, val_split, spec, desk_config(21), tc, stats, &log_b);
    REQUIRE(log_a.str() == log_b.str());
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        REQUIRE(a.trace[i].fit_train == b.trace[i].fit_train);
        REQUIRE(a.trace[i].total_val == b.trace[i].total_val);
    }
}

TEST_CASE("multi-threaded gradients equal the single-threaded reference") {
    NoiseSpec spec;
    spec.sigma = 0.02;
    const auto triplets = make_triplets(5, 24, 8, spec);
    const std::vector<Triplet> train_split(triplets.begin(), triplets.begin() + 4);
    const std::vector<Triplet> val_split(triplets.begin() + 4, triplets.end());
    const NormalizationStats stats{0.5, 0.25};

    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 4;
    tc.patch_size = 16;
    tc.seed = 31;

    TrainConfig tc_mt = tc;
    tc_mt.threads = 3;
    const TrainResult a = train(train_split, val_split, spec, desk_config(31), tc, stats);
    const TrainResult b = train(train_split, val_split, spec, desk_config(31), tc_mt, stats);
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        REQUIRE(a.trace[i].total_val == b.trace[i].total_val);
}

TEST_CASE("smoke training run reduces the fit term") {
    NoiseSpec spec;
    spec.sigma = 0.02;
    const auto triplets = make_triplets(8, 32, 9, spec);
    const std::vector<Triplet> train_split(triplets.begin(), triplets.begin() + 6);
    const std::vector<Triplet> val_split(triplets.begin() + 6, triplets.end());

    std::vector<ImageGrid> noisy;
    for (const Triplet& t : train_split) noisy.push_back(t.n);
    const NormalizationStats stats = compute_dataset_stats(noisy);

    TrainConfig tc;
    tc.lambda = 0.0;
    tc.max_epochs = 12;
    tc.patience = 12;
    tc.batch_size = 3;
    tc.patch_size = 32;
    tc.seed = 41;
    const TrainResult res = train(train_split, val_split, spec, desk_config(41), tc, stats);
    REQUIRE(res.trace.size() >= 2);
    CHECK(res.trace.back().fit_train < res.trace.front().fit_train * 0.5);
}

TEST_CASE("train validates inputs") {
    NoiseSpec spec;
    const NormalizationStats stats{0.5, 0.25};
    TrainConfig tc;
    CHECK_THROWS_AS(train({}, {}, spec, desk_config(1), tc, stats), InputError);

    TrainConfig bad = tc;
    bad.lambda = 1.0;
    CHECK_THROWS_AS(bad.validate(), InputError);

    // shape-inconsistent triplet
    Triplet t;
    t.id = "bad";
    t.g = ImageGrid(16, 16, 0.5);
    t.n = ImageGrid(16, 16, 0.5);
    t.l = ImageGrid(7, 8, 0.5);
    CHECK_THROWS_AS(train({t}, {t}, spec, desk_config(1), tc, stats), InputError);
}

TEST_CASE("predict upscales by the checkpoint factor") {
    const NetworkConfig cfg = desk_config(51);
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = init(cfg);
    ckpt.stats = {0.5, 0.25};
    const ImageGrid l = oracle::random_image(9, 13, 3); // non-multiple size is fine at inference
    const ImageGrid p = predict(ckpt, l);
    CHECK(p.height == 18);
    CHECK(p.width == 26);
    for (double v : p.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}
