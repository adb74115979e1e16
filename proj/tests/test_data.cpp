#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "sortnet/data.hpp"

using namespace sortnet;

namespace {

void write_be_u32(std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

// tiny fake MNIST pair: each digit image is constant at 25 * label
void write_fake_mnist(const std::string& img_path, const std::string& lbl_path,
                      const std::vector<std::uint8_t>& labels, int h = 28, int w = 28) {
    std::ofstream img(img_path, std::ios::binary);
    write_be_u32(img, 2051);
    write_be_u32(img, static_cast<std::uint32_t>(labels.size()));
    write_be_u32(img, h);
    write_be_u32(img, w);
    for (auto lbl : labels) {
        std::vector<std::uint8_t> pix(h * w, static_cast<std::uint8_t>(25 * lbl));
        img.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    }
    std::ofstream lbl(lbl_path, std::ios::binary);
    write_be_u32(lbl, 2049);
    write_be_u32(lbl, static_cast<std::uint32_t>(labels.size()));
    lbl.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("idx parsing") {
    write_fake_mnist("t_img.idx3", "t_lbl.idx1", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 4, 4);

    const auto img = load_idx("t_img.idx3");
    CHECK(img.magic == 2051);
    CHECK(img.dims == std::vector<std::uint32_t>{10, 4, 4});
    CHECK(img.payload.size() == 160);
    CHECK(img.payload[16] == 25); // first pixel of digit 1

    const auto lbl = load_idx("t_lbl.idx1");
    CHECK(lbl.magic == 2049);
    CHECK(lbl.dims == std::vector<std::uint32_t>{10});

    SUBCASE("bad magic is rejected") {
        std::ofstream os("t_bad.idx", std::ios::binary);
        write_be_u32(os, 2050); // label dtype with a two-dimensional rank byte
        write_be_u32(os, 3);
        os.close();
        CHECK_THROWS_WITH_AS([] { (void)load_idx("t_bad.idx"); }(), doctest::Contains("magic"),
                             std::runtime_error);
        std::remove("t_bad.idx");
    }
    SUBCASE("truncated payload is rejected") {
        std::ofstream os("t_trunc.idx", std::ios::binary);
        write_be_u32(os, 2049);
        write_be_u32(os, 100); // declares 100 labels, provides none
        os.close();
        CHECK_THROWS_WITH_AS([] { (void)load_idx("t_trunc.idx"); }(), doctest::Contains("truncated"),
                             std::runtime_error);
        std::remove("t_trunc.idx");
    }
    SUBCASE("missing file") { CHECK_THROWS(load_idx("no_such_file.idx")); }

    std::remove("t_img.idx3");
    std::remove("t_lbl.idx1");
}

TEST_CASE("four-digit concatenation") {
    write_fake_mnist("t_img.idx3", "t_lbl.idx1", {0, 7, 3, 9}, 28, 28);
    const auto img = load_idx("t_img.idx3");
    const auto lbl = load_idx("t_lbl.idx1");

    Rng rng(12345);
    const auto batch = make_four_digit(rng, img, lbl, 64);
    CHECK(batch.images.rows == 64);
    CHECK(batch.images.cols == 28 * 112);

    bool saw_leading_zero = false;
    for (int s = 0; s < 64; ++s) {
        // decode the digits back from the constant pixel blocks
        int value = 0;
        for (int d = 0; d < 4; ++d) {
            const double pix = batch.images(s, d * 28); // row 0 of digit d
            const int digit = static_cast<int>(pix * 255.0 / 25.0 + 0.5);
            value = value * 10 + digit;
            if (d == 0 && digit == 0) saw_leading_zero = true;
            CHECK(pix >= 0.0);
            CHECK(pix <= 1.0);
        }
        REQUIRE(batch.values[s] == value);
        REQUIRE(batch.values[s] <= 9999);
    }
    CHECK(saw_leading_zero); // values like 0737 must come out as 737

    // deterministic under a fixed seed
    Rng rng2(12345);
    const auto again = make_four_digit(rng2, img, lbl, 64);
    CHECK(again.values == batch.values);
    CHECK(again.images.data == batch.images.data);

    CHECK_THROWS(make_four_digit(rng, img, lbl, 0));
    CHECK_THROWS(make_four_digit(rng, lbl, img, 4)); // swapped kinds

    std::remove("t_img.idx3");
    std::remove("t_lbl.idx1");
}

TEST_CASE("synthetic ranking generator") {
    SUBCASE("n = 1 is always the identity") {
        Rng rng(5);
        const auto batch = synth_ranking(rng, 4, 1, 16);
        for (const auto& t : batch.truth) CHECK(t.ranks == std::vector<int>{0});
    }
    SUBCASE("deterministic per seed") {
        Rng a(42), b(42), c(43);
        const auto ba = synth_ranking(a, 6, 4, 8);
        const auto bb = synth_ranking(b, 6, 4, 8);
        const auto bc = synth_ranking(c, 6, 4, 8);
        for (int t = 0; t < 8; ++t) {
            CHECK(ba.inputs[t].data == bb.inputs[t].data);
            CHECK(ba.truth[t].ranks == bb.truth[t].ranks);
        }
        CHECK(ba.inputs[0].data != bc.inputs[0].data);
    }
    SUBCASE("truth equals the reference argsort of hidden scores") {
        Rng rng(77);
        const auto batch = synth_ranking(rng, 8, 5, 32);
        for (int t = 0; t < 32; ++t) {
            std::vector<double> scores(5);
            for (int i = 0; i < 5; ++i) {
                std::vector<double> feat(8);
                for (int j = 0; j < 8; ++j) feat[j] = batch.inputs[t](i, j);
                scores[i] = synth_hidden_score(feat);
            }
            REQUIRE(batch.truth[t].ranks == oracles::reference_ranks(scores));
        }
    }
    SUBCASE("truth permutations are uniform (chi-squared, n = 3)") {
        Rng rng(4242);
        const int tuples = 10000;
        const auto batch = synth_ranking(rng, 16, 3, tuples);
        std::map<std::vector<int>, int> counts;
        for (const auto& t : batch.truth) ++counts[t.ranks];
        CHECK(counts.size() == 6);
        const double expected = tuples / 6.0;
        double chi2 = 0.0;
        for (const auto& [perm, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
        // critical value for df = 5 at p = 0.001
        CHECK(chi2 < 20.515);
    }
    SUBCASE("bad arguments") {
        Rng rng(1);
        CHECK_THROWS(synth_ranking(rng, 0, 3, 1));
        CHECK_THROWS(synth_ranking(rng, 3, 0, 1));
    }
}

TEST_CASE("synthetic classification generator") {
    Rng rng(9);
    const auto batch = synth_classification(rng, 16, 10, 256);
    CHECK(batch.inputs.rows == 256);
    std::vector<int> hist(10, 0);
    for (int lbl : batch.labels) {
        REQUIRE(lbl >= 0);
        REQUIRE(lbl < 10);
        ++hist[lbl];
    }
    // the fixed scorer should not collapse to a single class
    int nonzero = 0;
    for (int h : hist) nonzero += h > 0 ? 1 : 0;
    CHECK(nonzero >= 3);
}

} // TEST_SUITE
