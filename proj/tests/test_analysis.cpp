#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctxrescore/analysis.hpp"
#include "ctxrescore/matching.hpp"
#include "ctxrescore/synth.hpp"
#include "test_support.hpp"

using namespace ctxrescore;
using testsupport::det;
using testsupport::gt;
using testsupport::image;

namespace {

// 0 cat, 1 dog (animal); 2 horse, 3 zebra (animal too, but separate group here);
// 4 car (vehicle).
CategoryTable table() {
  CategoryTable t;
  t.add(1, "cat", "pet");
  t.add(2, "dog", "pet");
  t.add(3, "horse", "ungulate");
  t.add(4, "zebra", "ungulate");
  t.add(5, "car", "vehicle");
  return t;
}

constexpr std::size_t kCat = 0, kHorse = 2, kZebra = 3, kCar = 4;
const BBox kBox{0, 0, 100, 100};

}  // namespace

TEST_CASE("error categories follow the taxonomy") {
  const auto cats = table();
  const auto img = image(
      1, {gt(kBox, kCat, 0), gt({300, 0, 100, 100}, kHorse, 1)},
      {
          det({0, 0, 100, 60}, kCat, 0.9, 0),      // IoU 0.6, first claim -> correct
          det({0, 0, 100, 70}, kCat, 0.8, 1),      // IoU 0.7, claimed gt -> localization
          det({0, 0, 100, 30}, kCat, 0.7, 2),      // IoU 0.3 -> localization
          det({300, 0, 100, 40}, kZebra, 0.6, 3),  // IoU 0.4 with horse -> similar
          det({300, 0, 100, 40}, kCar, 0.5, 4),    // IoU 0.4 with horse -> dissimilar
          det({600, 300, 20, 20}, kCat, 0.4, 5),   // no overlap -> background
          det({0, 0, 100, 5}, kCat, 0.3, 6),       // IoU 0.05 -> background
      });
  const auto c = classify_detections(img, cats);
  CHECK(c[0] == ErrorCategory::kCorrect);
  CHECK(c[1] == ErrorCategory::kLocalization);
  CHECK(c[2] == ErrorCategory::kLocalization);
  CHECK(c[3] == ErrorCategory::kSimilarClass);
  CHECK(c[4] == ErrorCategory::kDissimilarClass);
  CHECK(c[5] == ErrorCategory::kBackground);
  CHECK(c[6] == ErrorCategory::kBackground);
}

TEST_CASE("confidence order decides which duplicate is correct") {
  const auto cats = table();
  // The lower-IoU box has the higher score and claims the gt.
  const auto img = image(1, {gt(kBox, kCat, 0)},
                         {det({0, 0, 100, 95}, kCat, 0.2, 0), det({0, 0, 100, 60}, kCat, 0.9, 1)});
  const auto c = classify_detections(img, cats);
  CHECK(c[1] == ErrorCategory::kCorrect);
  CHECK(c[0] == ErrorCategory::kLocalization);
}

TEST_CASE("confidence shares") {
  const auto cats = table();
  SUBCASE("correct plus background") {
    const std::vector<ImageRecord> imgs{image(
        1, {gt(kBox, kCat, 0)}, {det(kBox, kCat, 0.8, 0), det({500, 300, 10, 10}, kCat, 0.2, 1)})};
    const auto b = confidence_shares(imgs, cats);
    REQUIRE(b.shares);
    const auto& s = *b.shares;
    CHECK(s[0] == doctest::Approx(0.8));
    CHECK(s[1] == 0.0);
    CHECK(s[2] == 0.0);
    CHECK(s[3] == 0.0);
    CHECK(s[4] == doctest::Approx(0.2));
    CHECK(b.total_count() == 2);
  }
  SUBCASE("no detections") {
    const auto b = confidence_shares({image(1, {gt(kBox, kCat, 0)}, {})}, cats);
    CHECK_FALSE(b.shares.has_value());
    CHECK(b.total_count() == 0);
  }
  SUBCASE("all correct") {
    const auto b = confidence_shares({image(1, {gt(kBox, kCat, 0)}, {det(kBox, kCat, 0.4, 0)})},
                                     cats);
    CHECK((*b.shares)[0] == 1.0);
  }
}

TEST_CASE("every detection gets one category and each gt at most one correct") {
  SynthParams sp;
  sp.n_images = 80;
  sp.num_classes = 5;
  sp.duplicates_max = 3;
  sp.confusion_prob = 0.3;
  sp.background_rate = 2.0;
  sp.seed = 3;
  const Dataset ds = generate_dataset(sp);
  std::size_t total = 0;
  for (const auto& img : ds.images) {
    const auto c = classify_detections(img, ds.categories);
    REQUIRE(c.size() == img.dets.size());
    total += c.size();
    std::size_t correct = 0;
    for (const auto k : c) correct += k == ErrorCategory::kCorrect;
    CHECK(correct <= img.gts.size());
  }
  CHECK(confidence_shares(ds.images, ds.categories).total_count() == total);
}

TEST_CASE("target rescoring shrinks the non-correct share") {
  SynthParams sp;
  sp.n_images = 30;
  sp.num_classes = 4;
  sp.duplicates_max = 2;
  sp.background_rate = 1.5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sp.seed = seed;
    const Dataset ds = generate_dataset(sp);
    const auto before = confidence_shares(ds.images, ds.categories);
    const auto after = confidence_shares(apply_targets(ds.images, {}), ds.categories);
    REQUIRE(before.shares);
    REQUIRE(after.shares);
    const double bad_before = 1.0 - (*before.shares)[0];
    const double bad_after = 1.0 - (*after.shares)[0];
    CHECK(bad_after < bad_before);
  }
}

TEST_CASE("co-occurrence matrix") {
  SUBCASE("hand-counted example") {
    // {cat, cat, dog}, {cat}
    const std::vector<ImageRecord> imgs{
        image(1, {gt(kBox, 0, 0), gt(kBox, 0, 1), gt(kBox, 1, 2)}, {}),
        image(2, {gt(kBox, 0, 0)}, {})};
    const auto m = cooccurrence_matrix(imgs, 3);
    CHECK(*m.at(0, 0) == 0.5);
    CHECK(*m.at(0, 1) == 0.5);
    CHECK(*m.at(1, 0) == 2.0);
    CHECK(*m.at(1, 1) == 0.0);
    CHECK_FALSE(m.at(2, 0).has_value());
    CHECK(m.images_with_class == std::vector<std::size_t>{2, 1, 0});
  }
  SUBCASE("one instance of each class") {
    const auto m = cooccurrence_matrix({image(1, {gt(kBox, 0, 0), gt(kBox, 1, 1)}, {})}, 2);
    CHECK(*m.at(0, 0) == 0.0);
    CHECK(*m.at(0, 1) == 1.0);
    CHECK(*m.at(1, 0) == 1.0);
  }
  SUBCASE("diagonal non-negative and duplication invariant") {
    SynthParams sp;
    sp.n_images = 50;
    sp.num_classes = 6;
    sp.gts_max = 6;
    const Dataset ds = generate_dataset(sp);
    const auto m = cooccurrence_matrix(ds.images, 6);
    auto doubled = ds.images;
    doubled.insert(doubled.end(), ds.images.begin(), ds.images.end());
    const auto m2 = cooccurrence_matrix(doubled, 6);
    for (std::size_t i = 0; i < 6; ++i) {
      if (!m.rows[i]) continue;
      CHECK(*m.at(i, i) >= 0.0);
      for (std::size_t j = 0; j < 6; ++j) CHECK(*m2.at(i, j) == *m.at(i, j));
    }
  }
}

TEST_CASE("co-occurrence CSV") {
  CategoryTable t;
  t.add(1, "a", "s");
  t.add(2, "b", "s");
  const auto m = cooccurrence_matrix({image(1, {gt(kBox, 0, 0)}, {})}, 2);
  CHECK(format_cooccurrence_csv(m, t) == "observed\\cooccurrent,a,b\na,0,0\nb,,\n");
}
