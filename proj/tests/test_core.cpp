#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "ctxrescore/core.hpp"
#include "ctxrescore/random.hpp"
#include "test_support.hpp"

using namespace ctxrescore;

TEST_CASE("iou of hand-checked pairs") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 1, 1}, {5, 5, 1, 1}) == 0.0);
  // intersection 1, union 4 + 4 - 1 = 7
  CHECK(iou({0, 0, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  // intersection 80, union 100
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 8}) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("iou with degenerate boxes is zero") {
  CHECK(iou({0, 0, 0, 0}, {0, 0, 0, 0}) == 0.0);
  CHECK(iou({1, 1, 0, 5}, {0, 0, 10, 10}) == 0.0);
  CHECK(iou({3, 3, 0, 0}, {3, 3, 0, 0}) == 0.0);
}

TEST_CASE("iou properties over random boxes") {
  Rng rng(17);
  const auto box = [&] {
    return BBox{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 40),
                rng.uniform(0, 40)};
  };
  for (int i = 0; i < 2000; ++i) {
    const BBox a = box(), b = box();
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == iou(b, a));
    if (a.area() > 0.0) CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    // Power-of-two shifts keep the arithmetic exact.
    const double tx = std::ldexp(static_cast<double>(rng.below(64)), 2);
    const double ty = -std::ldexp(static_cast<double>(rng.below(64)), 2);
    const BBox at{a.x + tx, a.y + ty, a.w, a.h}, bt{b.x + tx, b.y + ty, b.w, b.h};
    CHECK(iou(at, bt) == doctest::Approx(v).epsilon(1e-9));
  }
}

namespace {

const char* kAnnotations = R"({
  "images": [{"id": 7, "width": 640, "height": 480}, {"id": 9, "width": 100, "height": 50}],
  "annotations": [
    {"id": 1, "image_id": 7, "category_id": 90, "bbox": [1, 2, 3, 4], "iscrowd": 0},
    {"id": 2, "image_id": 7, "category_id": 1, "bbox": [5, 6, 7, 8], "iscrowd": 1},
    {"id": 3, "image_id": 9, "category_id": 3, "bbox": [0, 0, 10, 10]}
  ],
  "categories": [
    {"id": 90, "name": "toothbrush", "supercategory": "indoor"},
    {"id": 1, "name": "person", "supercategory": "person"},
    {"id": 3, "name": "car", "supercategory": "vehicle"}
  ]
})";

}  // namespace

TEST_CASE("annotation loading remaps categories by ascending id and drops crowd") {
  const Dataset ds = parse_annotations(kAnnotations);
  REQUIRE(ds.categories.size() == 3);
  CHECK(ds.categories.index_of(1) == 0);
  CHECK(ds.categories.index_of(3) == 1);
  CHECK(ds.categories.index_of(90) == 2);
  CHECK(ds.categories.name(2) == "toothbrush");
  CHECK(ds.categories.supercategory(1) == "vehicle");
  REQUIRE(ds.images.size() == 2);
  CHECK(ds.images[0].image_id == 7);
  REQUIRE(ds.images[0].gts.size() == 1);
  CHECK(ds.images[0].gts[0].class_idx == 2);
  CHECK(ds.images[0].gts[0].box == BBox{1, 2, 3, 4});
  CHECK(ds.images[1].gts.size() == 1);
  CHECK(ds.report.annotations == 3);
  CHECK(ds.report.crowd_dropped == 1);
}

TEST_CASE("minimal annotation file") {
  const Dataset ds = parse_annotations(
      R"({"images":[{"id":1,"width":10,"height":10}],
          "annotations":[{"id":1,"image_id":1,"category_id":5,"bbox":[0,0,2,2]}],
          "categories":[{"id":5,"name":"a","supercategory":"s"}]})");
  REQUIRE(ds.images.size() == 1);
  CHECK(ds.images[0].gts.size() == 1);
}

TEST_CASE("annotation errors carry context") {
  CHECK_THROWS_WITH_AS(parse_annotations("{\n  \"images\": [\n  oops ]}"),
                       doctest::Contains("line 3"), FormatError);
  CHECK_THROWS_WITH_AS(
      parse_annotations(R"({"images":[{"id":1,"width":10,"height":10}],
          "annotations":[{"id":1,"image_id":2,"category_id":5,"bbox":[0,0,2,2]}],
          "categories":[{"id":5,"name":"a"}]})"),
      doctest::Contains("unknown image id 2"), FormatError);
  CHECK_THROWS_WITH_AS(
      parse_annotations(R"({"images":[{"id":1,"width":10,"height":10}],
          "annotations":[{"id":1,"image_id":1,"category_id":6,"bbox":[0,0,2,2]}],
          "categories":[{"id":5,"name":"a"}]})"),
      doctest::Contains("unknown category id 6"), FormatError);
  CHECK_THROWS_WITH_AS(
      parse_annotations(R"({"images":[{"id":1,"width":10}],"annotations":[],"categories":[]})"),
      doctest::Contains("images[0]: missing field 'height'"), FormatError);
}

TEST_CASE("detections are grouped, validated and capped") {
  Dataset ds = parse_annotations(kAnnotations);
  parse_detections(R"([
    {"image_id": 7, "category_id": 3, "bbox": [0, 0, 5, 5], "score": 0.5},
    {"image_id": 7, "category_id": 1, "bbox": [1, 1, 5, 5], "score": 0.9},
    {"image_id": 7, "category_id": 90, "bbox": [2, 2, 5, 5], "score": 0.1}
  ])",
                   ds);
  REQUIRE(ds.images[0].dets.size() == 3);
  CHECK(ds.images[1].dets.empty());
  CHECK(ds.images[0].dets[1].class_idx == 0);
  CHECK(ds.images[0].dets[2].det_id == 2);

  parse_detections("[]", ds);
  CHECK(ds.images[0].dets.empty());

  CHECK_THROWS_WITH_AS(
      parse_detections(R"([{"image_id": 8, "category_id": 3, "bbox": [0,0,1,1], "score": 0.5}])",
                       ds),
      doctest::Contains("unknown image id 8"), FormatError);
  CHECK_THROWS_WITH_AS(
      parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [0,0,1,1], "score": 1.5}])",
                       ds),
      doctest::Contains("score outside"), FormatError);
}

TEST_CASE("more than 100 detections keep the 100 highest scores") {
  Dataset ds = parse_annotations(kAnnotations);
  std::string text = "[";
  for (int i = 0; i < 150; ++i) {
    // Scores are a permutation of i/150 so the top 100 are known.
    const int s = (i * 7) % 150;
    text += (i ? "," : "") + std::string(R"({"image_id":9,"category_id":3,"bbox":[)") +
            std::to_string(i) + R"(,0,1,1],"score":)" + std::to_string(s / 150.0) + "}";
  }
  text += "]";
  parse_detections(text, ds);
  const auto& dets = ds.images[1].dets;
  REQUIRE(dets.size() == 100);
  for (std::size_t k = 0; k < dets.size(); ++k) {
    CHECK(dets[k].score >= std::stod(std::to_string(50 / 150.0)));
    CHECK(dets[k].det_id == k);
    if (k > 0) CHECK(dets[k].box.x > dets[k - 1].box.x);  // input order kept
  }
  CHECK(ds.report.detections_capped == 50);
}

TEST_CASE("writing and reloading reproduces the dataset") {
  Rng rng(5);
  Dataset ds = parse_annotations(kAnnotations);
  std::string text = "[";
  for (int i = 0; i < 30; ++i) {
    const int img = i % 2 ? 7 : 9;
    const int cat = i % 3 == 0 ? 1 : (i % 3 == 1 ? 3 : 90);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  R"(%s{"image_id":%d,"category_id":%d,"bbox":[%.17g,%.17g,%.17g,%.17g],"score":%.17g})",
                  i ? "," : "", img, cat, rng.uniform(0, 100), rng.uniform(0, 100),
                  rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform());
    text += buf;
  }
  text += "]";
  parse_detections(text, ds);

  Dataset again = parse_annotations(format_annotations(ds));
  parse_detections(format_detections(ds), again);
  CHECK(again.categories == ds.categories);
  CHECK(again.images == ds.images);
}

TEST_CASE("score order breaks ties by det_id") {
  using testsupport::det;
  std::vector<Detection> d{det({}, 0, 0.5, 2), det({}, 0, 0.9, 1), det({}, 0, 0.5, 0)};
  CHECK(score_order(d) == std::vector<std::size_t>{1, 2, 0});
}
