#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "ovfuse/tensor_io.hpp"
#include "ovfuse/text_bridge.hpp"
#include "test_util.hpp"

using namespace ovfuse;

TEST_CASE("caption_substitute swaps the noun span for the predicted label") {
    const std::string caption = "a wooden bench";
    CHECK(caption_substitute(caption, 9, 14, "table") == "a wooden table");
}

TEST_CASE("caption_substitute edge spans") {
    CHECK(caption_substitute("bench", 0, 5, "table") == "table");  // span = whole caption
    CHECK(caption_substitute("a wooden bench", 9, 14, "bench") == "a wooden bench");  // identity
}

TEST_CASE("caption_substitute rejects invalid spans") {
    CHECK_THROWS_AS(caption_substitute("abc", 2, 2, "x"), InvalidSpan);   // empty
    CHECK_THROWS_AS(caption_substitute("abc", 2, 1, "x"), InvalidSpan);   // reversed
    CHECK_THROWS_AS(caption_substitute("abc", 1, 9, "x"), InvalidSpan);   // past the end
}

TEST_CASE("final_token_span finds the last whitespace-delimited token") {
    const std::string c = "a wooden bench";
    const auto [b, e] = final_token_span(c);
    CHECK(c.substr(b, e - b) == "bench");
    const auto [b2, e2] = final_token_span("bench  \n");
    CHECK(b2 == 0);
    CHECK(e2 == 5);
    CHECK_THROWS_AS(final_token_span("   "), InvalidSpan);
}

namespace {

MaskLabelSet make_set(std::vector<TensorU8> masks, Tensor embeddings) {
    MaskLabelSet set;
    set.masks = std::move(masks);
    for (std::size_t i = 0; i < set.masks.size(); ++i) {
        set.labels.push_back("label" + std::to_string(i));
        set.captions.push_back("a thing " + std::to_string(i));
        set.noun_spans.emplace_back(2, 7);
    }
    set.embeddings = std::move(embeddings);
    return set;
}

}  // namespace

TEST_CASE("rasterize: one full-frame mask paints every pixel") {
    TensorU8 full({2, 3});
    std::fill(full.data.begin(), full.data.end(), 1);
    const Tensor emb({1, 4}, {1, 2, 3, 4});
    const auto out = rasterize_mask_features(make_set({full}, emb), 3, 2, 4);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(out.coverage(r, c) == 1);
            for (std::size_t ch = 0; ch < 4; ++ch) CHECK(out.features(r, c, ch) == emb(0, ch));
        }
    }
}

TEST_CASE("rasterize: overlap goes to the mask with the larger index") {
    TensorU8 a({1, 2}, {1, 1});
    TensorU8 b({1, 2}, {0, 1});
    const Tensor emb({2, 2}, {1, 0, 0, 1});
    const auto out = rasterize_mask_features(make_set({a, b}, emb), 2, 1, 2);
    CHECK(out.features(0, 0, 0) == 1.0f);  // only mask 0
    CHECK(out.features(0, 1, 0) == 0.0f);  // overlap: mask 1 wins
    CHECK(out.features(0, 1, 1) == 1.0f);
}

TEST_CASE("rasterize: uncovered pixels are zero and flagged out") {
    TensorU8 m({1, 2}, {1, 0});
    const Tensor emb({1, 1}, {5});
    const auto out = rasterize_mask_features(make_set({m}, emb), 2, 1, 1);
    CHECK(out.coverage(0, 1) == 0);
    CHECK(out.features(0, 1, 0) == 0.0f);
}

TEST_CASE("rasterize: random rectangles against a per-pixel highest-index oracle") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<std::size_t> lo(0, 2), len(1, 3);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<TensorU8> masks;
        for (int m = 0; m < 3; ++m) {
            TensorU8 mask({4, 4});
            const std::size_t r0 = lo(rng), c0 = lo(rng), rh = len(rng), cw = len(rng);
            for (std::size_t r = r0; r < std::min<std::size_t>(4, r0 + rh); ++r)
                for (std::size_t c = c0; c < std::min<std::size_t>(4, c0 + cw); ++c) mask(r, c) = 1;
            masks.push_back(std::move(mask));
        }
        const Tensor emb = ovtest::random_tensor({3, 5}, rng);
        const auto out = rasterize_mask_features(make_set(masks, emb), 4, 4, 5);

        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                int winner = -1;
                for (int m = 0; m < 3; ++m)
                    if (masks[static_cast<std::size_t>(m)](r, c)) winner = m;
                CHECK(out.coverage(r, c) == (winner >= 0 ? 1 : 0));
                for (std::size_t ch = 0; ch < 5; ++ch) {
                    const float want =
                        winner >= 0 ? emb(static_cast<std::size_t>(winner), ch) : 0.0f;
                    CHECK(out.features(r, c, ch) == want);
                }
            }
        }
    }
}

TEST_CASE("rasterize twice gives identical output; disjoint masks commute") {
    std::mt19937_64 rng(29);
    TensorU8 a({3, 3}), b({3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
        a.data[i] = (i % 3 == 0);
        b.data[i] = (i % 3 == 1);  // disjoint from a
    }
    const Tensor emb = ovtest::random_tensor({2, 4}, rng);
    const auto once = rasterize_mask_features(make_set({a, b}, emb), 3, 3, 4);
    const auto again = rasterize_mask_features(make_set({a, b}, emb), 3, 3, 4);
    CHECK(once.features == again.features);

    Tensor emb_swapped({2, 4});
    for (std::size_t ch = 0; ch < 4; ++ch) {
        emb_swapped(0, ch) = emb(1, ch);
        emb_swapped(1, ch) = emb(0, ch);
    }
    const auto swapped = rasterize_mask_features(make_set({b, a}, emb_swapped), 3, 3, 4);
    CHECK(swapped.features == once.features);
}

TEST_CASE("rasterize rejects an embedding row-count mismatch") {
    TensorU8 m({1, 1}, {1});
    CHECK_THROWS_AS(rasterize_mask_features(make_set({m}, Tensor({2, 3})), 1, 1, 3),
                    EmbeddingCountMismatch);
}

TEST_CASE("mask-set manifest loads masks, spans and embeddings") {
    const auto dir = ovtest::temp_dir("maskset");
    TensorU8 m({2, 2}, {1, 0, 0, 1});
    io::write_pgm(m, dir / "m0.pgm");
    const Tensor emb({1, 3}, {0.6f, 0.8f, 0.0f});
    io::write_tensor(emb, dir / "emb.ovt");
    {
        std::ofstream f(dir / "set.json");
        f << R"({"masks":[{"mask":"m0.pgm","label":"table","caption":"a wooden bench",)"
          << R"("noun_span":[9,14]}],"embeddings":"emb.ovt"})";
    }
    const MaskLabelSet set = load_mask_label_set(dir / "set.json");
    REQUIRE(set.masks.size() == 1);
    CHECK(set.labels[0] == "table");
    CHECK(set.noun_spans[0] == std::pair<std::size_t, std::size_t>{9, 14});
    CHECK(caption_substitute(set.captions[0], set.noun_spans[0].first, set.noun_spans[0].second,
                             set.labels[0]) == "a wooden table");
    CHECK(set.embeddings == emb);

    // Missing span falls back to the final token.
    {
        std::ofstream f(dir / "set2.json");
        f << R"({"masks":[{"mask":"m0.pgm","label":"table","caption":"a wooden bench"}],)"
          << R"("embeddings":"emb.ovt"})";
    }
    const MaskLabelSet set2 = load_mask_label_set(dir / "set2.json");
    CHECK(set2.noun_spans[0] == std::pair<std::size_t, std::size_t>{9, 14});
}
