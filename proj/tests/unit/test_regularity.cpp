#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "trae/regularity.hpp"

using namespace trae;
namespace fs = std::filesystem;

namespace {

// Every weight zero and the output bias at logit(c): reconstructs c everywhere.
Autoencoder constant_model(ArchConfig cfg, double c) {
    Autoencoder m = build_autoencoder(cfg);
    auto& params = m.mutable_params();
    for (LayerParams& p : params) {
        p.weights.fill(0.0);
        p.bias.fill(0.0);
    }
    for (auto it = params.rbegin(); it != params.rend(); ++it)
        if (it->bias.size() > 0) {
            it->bias.fill(std::log(c / (1.0 - c)));
            break;
        }
    return m;
}

FrameSequence random_sequence(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    FrameSequence seq;
    for (std::size_t i = 0; i < n; ++i) {
        seq.frames.push_back(oracle::random_tensor({h, w}, rng, 0.0, 1.0));
        seq.source_ids.push_back(100 + i);
    }
    return seq;
}

// Averages |x - f(x)| of every stride-1 cuboid over the frames it covers.
Tensor oracle_error_field(const FrameSequence& seq, const Autoencoder& m) {
    const std::size_t T = m.config().input_shape[0], n = seq.size();
    const std::size_t h = seq.frames[0].dim(0), w = seq.frames[0].dim(1);
    Tensor sum({n, h, w});
    std::vector<double> cover(n, 0.0);
    for (std::size_t s = 0; s + T <= n; ++s) {
        Tensor x({T, h, w});
        for (std::size_t j = 0; j < T; ++j)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t c = 0; c < w; ++c) x.at(j, y, c) = seq.frames[s + j].at(y, c);
        const Tensor r = reconstruct(m, x);
        for (std::size_t j = 0; j < T; ++j) {
            cover[s + j] += 1.0;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t c = 0; c < w; ++c) sum.at(s + j, y, c) += std::abs(x.at(j, y, c) - r.at(j, y, c));
        }
    }
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t c = 0; c < w; ++c) sum.at(t, y, c) /= cover[t];
    return sum;
}

std::vector<PatchDescriptor> random_descriptors(std::size_t n, std::size_t length, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<PatchDescriptor> ds(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : ds[i].values) v = u(rng);
        ds[i].t_start = (i % 4) * (length / 2);
        ds[i].t_end = ds[i].t_start + length - 1;
    }
    return ds;
}

double descriptor_error(const Autoencoder& m, const PatchDescriptor& d) {
    Tensor p({kDescriptorDims});
    for (std::size_t i = 0; i < kDescriptorDims; ++i) p[i] = d.values[i];
    const Tensor r = reconstruct(m, p);
    double s = 0.0;
    for (std::size_t i = 0; i < kDescriptorDims; ++i) s += (p[i] - r[i]) * (p[i] - r[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_SUITE("regularity") {

TEST_CASE("regularity scores: worked example and constant input") {
    const std::vector<double> e{2.0, 4.0, 10.0};
    const auto s = regularity_scores(e);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(0.8));
    CHECK(s[2] == doctest::Approx(0.2));
    for (double v : regularity_scores(std::vector<double>{3.0, 3.0, 3.0})) CHECK(v == 1.0);
    for (double v : regularity_scores(std::vector<double>{0.0, 0.0})) CHECK(v == 1.0);
    CHECK(regularity_scores(std::vector<double>{}).empty());
}

TEST_CASE("regularity scores: range, extremes and ordering on random series") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> e(2 + trial % 30);
        for (double& v : e) v = u(rng);
        const auto s = regularity_scores(e);
        const auto lo = std::min_element(e.begin(), e.end()) - e.begin();
        const auto hi = std::max_element(e.begin(), e.end()) - e.begin();
        CHECK(s[static_cast<std::size_t>(lo)] == 1.0);
        CHECK(s[static_cast<std::size_t>(hi)] == doctest::Approx(e[lo] / e[hi]));
        for (std::size_t i = 0; i < e.size(); ++i) {
            CHECK(s[i] >= 0.0);
            CHECK(s[i] <= 1.0);
            for (std::size_t j = 0; j < e.size(); ++j)
                if (e[i] < e[j]) CHECK(s[i] > s[j]);
        }
    }
}

TEST_CASE("make_series keeps ids and rejects length mismatches") {
    const RegularitySeries r = make_series({7, 8, 9}, {2.0, 4.0, 10.0});
    CHECK(r.frame_ids == std::vector<std::size_t>{7, 8, 9});
    CHECK(r.s.size() == 3);
    CHECK_THROWS_KIND(make_series({1, 2}, {1.0}), ErrorKind::InvalidInput);
}

TEST_CASE("pixel_error against a constant reconstruction") {
    const Autoencoder m = constant_model(conv_ae_config(Preset::tiny, 3), 0.3);
    Cuboid c{Tensor({3, 32, 32}, 0.5), 10, 2};
    const ErrorField f = pixel_error(m, c);
    for (double v : f.e.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(f.frame_ids == std::vector<std::size_t>{10, 12, 14});
}

TEST_CASE("frame error field matches a direct cuboid-by-cuboid average") {
    std::mt19937_64 rng(8);
    ArchConfig cfg = conv_ae_config(Preset::tiny, 3);
    cfg.seed = 5;
    const Autoencoder m = build_autoencoder(cfg);
    const FrameSequence seq = random_sequence(9, 32, 32, rng);
    const Tensor got = frame_error_field(seq, m, 2);
    const Tensor want = oracle_error_field(seq, m);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    const RegularitySeries r = regularity_series(seq, m);
    CHECK(r.frame_ids == seq.source_ids);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        double e = 0.0;
        for (std::size_t p = 0; p < 32 * 32; ++p) e += want[t * 32 * 32 + p];
        CHECK(r.e[t] == doctest::Approx(e).epsilon(1e-10));
    }
}

TEST_CASE("the series identifies the frame furthest from a constant reconstruction") {
    const Autoencoder m = constant_model(conv_ae_config(Preset::tiny, 3), 0.5);
    FrameSequence seq;
    for (std::size_t t = 0; t < 8; ++t) {
        seq.frames.emplace_back(Shape{32, 32}, t == 5 ? 0.95 : 0.45);
        seq.source_ids.push_back(t);
    }
    const RegularitySeries r = regularity_series(seq, m);
    CHECK(std::min_element(r.s.begin(), r.s.end()) - r.s.begin() == 5);
    CHECK(r.s[0] == doctest::Approx(1.0));
}

TEST_CASE("scoring rejects wrong models and short or mismatched sequences") {
    std::mt19937_64 rng(1);
    const Autoencoder conv = build_autoencoder(conv_ae_config(Preset::tiny, 5));
    CHECK_THROWS_KIND(frame_error_field(random_sequence(4, 32, 32, rng), conv), ErrorKind::NoData);
    CHECK_THROWS_KIND(frame_error_field(random_sequence(6, 24, 32, rng), conv), ErrorKind::ShapeMismatch);
    const Autoencoder fc = build_autoencoder(fc_ae_config(Preset::tiny));
    CHECK_THROWS_KIND(regularity_series(random_sequence(6, 32, 32, rng), fc), ErrorKind::WrongModel);
    CHECK_THROWS_KIND(predict_past_future(Tensor({32, 32}), fc), ErrorKind::WrongModel);
    CHECK_THROWS_KIND(feature_regularity_series(random_descriptors(2, 6, rng), conv), ErrorKind::WrongModel);
}

TEST_CASE("regular frame synthesis picks the least-error frame per pixel") {
    std::mt19937_64 rng(4);
    const FrameSequence seq = random_sequence(5, 6, 7, rng);
    const Tensor field = oracle::random_tensor({5, 6, 7}, rng, 0.0, 1.0);
    const Tensor mosaic = regular_frame_synthesis(seq, field);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 7; ++x) {
            std::size_t best = 0;
            for (std::size_t t = 0; t < 5; ++t)
                if (field.at(t, y, x) < field.at(best, y, x)) best = t;
            CHECK(mosaic.at(y, x) == seq.frames[best].at(y, x));
        }

    // One frame wins everywhere: the mosaic is that frame.
    Tensor dominated({5, 6, 7}, 1.0);
    for (std::size_t p = 0; p < 42; ++p) dominated[3 * 42 + p] = 0.0;
    CHECK(regular_frame_synthesis(seq, dominated) == seq.frames[3]);

    // Ties go to the earliest frame; a single frame is its own mosaic.
    CHECK(regular_frame_synthesis(seq, Tensor({5, 6, 7}, 0.2)) == seq.frames[0]);
    FrameSequence one;
    one.frames.push_back(seq.frames[2]);
    one.source_ids.push_back(0);
    CHECK(regular_frame_synthesis(one, Tensor({1, 6, 7}, 0.4)) == seq.frames[2]);
    CHECK_THROWS_KIND(regular_frame_synthesis(seq, Tensor({4, 6, 7})), ErrorKind::ShapeMismatch);
}

TEST_CASE("pixel regularity map is min-max normalised accumulated error") {
    std::mt19937_64 rng(6);
    const Tensor field = oracle::random_tensor({4, 5, 5}, rng, 0.0, 1.0);
    const Tensor map = pixel_regularity_map(field);
    std::vector<double> acc(25, 0.0);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t p = 0; p < 25; ++p) acc[p] += field[t * 25 + p];
    const double lo = *std::min_element(acc.begin(), acc.end()), hi = *std::max_element(acc.begin(), acc.end());
    for (std::size_t p = 0; p < 25; ++p) {
        CHECK(map[p] == doctest::Approx((acc[p] - lo) / (hi - lo)));
        CHECK(map[p] >= 0.0);
        CHECK(map[p] <= 1.0);
    }
    const Tensor flat = pixel_regularity_map(Tensor({3, 4, 4}, 0.7));
    for (double v : flat.data()) CHECK(v == 0.0);
}

TEST_CASE("past/future prediction returns a [T,H,W] stack in [0,1]") {
    std::mt19937_64 rng(2);
    const Autoencoder m = build_autoencoder(conv_ae_config(Preset::tiny, 5));
    const Tensor p = predict_past_future(oracle::random_tensor({32, 32}, rng, 0.0, 1.0), m);
    CHECK(p.shape() == Shape{5, 32, 32});
    for (double v : p.data()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK_THROWS_KIND(predict_past_future(Tensor({16, 32}), m), ErrorKind::ShapeMismatch);
}

TEST_CASE("feature series sums descriptor errors over covered frames") {
    std::mt19937_64 rng(9);
    ArchConfig cfg = fc_ae_config(Preset::tiny);
    cfg.seed = 3;
    const Autoencoder m = build_autoencoder(cfg);
    const std::size_t L = 6;
    auto ds = random_descriptors(8, L, rng);
    const RegularitySeries r = feature_regularity_series(ds, m);

    std::map<std::size_t, double> want;
    for (const auto& d : ds)
        for (std::size_t t = d.t_start; t <= d.t_end; ++t) want[t] += descriptor_error(m, d);
    REQUIRE(r.frame_ids.size() == want.size());
    CHECK(r.frame_ids.front() == 0);
    CHECK(r.frame_ids.back() == 3 * (L / 2) + L - 1);
    std::size_t i = 0;
    for (const auto& [t, e] : want) {
        CHECK(r.frame_ids[i] == t);
        CHECK(r.e[i] == doctest::Approx(e).epsilon(1e-12));
        ++i;
    }

    // Perturbing one descriptor only moves the frames its span covers.
    auto changed = ds;
    for (double& v : changed[1].values) v = 1.0 - v;
    const RegularitySeries r2 = feature_regularity_series(changed, m);
    for (std::size_t k = 0; k < r.frame_ids.size(); ++k) {
        const std::size_t t = r.frame_ids[k];
        const bool covered = t >= changed[1].t_start && t <= changed[1].t_end;
        if (!covered) CHECK(r2.e[k] == r.e[k]);
    }
    CHECK_THROWS_KIND(feature_regularity_series(std::vector<PatchDescriptor>{}, m), ErrorKind::NoData);
}

TEST_CASE("feature series is flat when every descriptor errs equally") {
    const Autoencoder m = build_autoencoder(fc_ae_config(Preset::tiny));
    std::vector<PatchDescriptor> ds(3);
    for (std::size_t i = 0; i < 3; ++i) {
        ds[i].values.fill(0.25);
        ds[i].t_start = i * 4;
        ds[i].t_end = ds[i].t_start + 3;
    }
    const RegularitySeries r = feature_regularity_series(ds, m);
    CHECK(r.frame_ids.size() == 12);
    for (double v : r.s) CHECK(v == 1.0);
}

TEST_CASE("scores CSV round-trips exactly and rejects bad headers") {
    const RegularitySeries r = make_series({3, 4, 9}, {0.1, 1.0 / 3.0, 2.5e-7});
    const fs::path p = fs::temp_directory_path() / "trae_unit_scores.csv";
    write_scores_csv(p, r);
    const RegularitySeries back = read_scores_csv(p);
    CHECK(back.frame_ids == r.frame_ids);
    CHECK(back.e == r.e);
    CHECK(back.s == r.s);
    {
        std::ofstream out(p);
        out << "t,err\n1,2\n";
    }
    CHECK_THROWS_KIND(read_scores_csv(p), ErrorKind::FormatError);
}

}
