#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "ctxrescore/matching.hpp"
#include "ctxrescore/synth.hpp"
#include "test_support.hpp"

using namespace ctxrescore;
using testsupport::det;
using testsupport::gt;
using testsupport::image;

namespace {

const BBox kGt{0, 0, 100, 100};
// IoU 0.92 and 0.60 against kGt.
const BBox kTight{0, 0, 100, 92};
const BBox kLoose{0, 0, 100, 60};

void check_valid(const Matching& m, const ImageRecord& img) {
  std::set<std::size_t> dets, gts;
  for (const auto& p : m.pairs) {
    CHECK(dets.insert(p.det).second);
    CHECK(gts.insert(p.gt).second);
    CHECK(img.dets[p.det].class_idx == img.gts[p.gt].class_idx);
    CHECK(p.iou >= kMatchFloor);
  }
}

}  // namespace

TEST_CASE("localization matching prefers the better box") {
  const std::vector<Detection> dets{det(kTight, 0, 0.3, 0), det(kLoose, 0, 0.95, 1)};
  const std::vector<GroundTruth> gts{gt(kGt, 0, 0)};
  const auto m = greedy_match_by_overlap(dets, gts);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].det == 0);
  CHECK(m.pairs[0].iou == doctest::Approx(0.92));

  const auto c = greedy_match_by_confidence(dets, gts);
  REQUIRE(c.pairs.size() == 1);
  CHECK(c.pairs[0].det == 1);
}

TEST_CASE("empty inputs") {
  CHECK(greedy_match_by_overlap({}, {gt(kGt, 0, 0)}).pairs.empty());
  CHECK(greedy_match_by_confidence({}, {gt(kGt, 0, 0)}).pairs.empty());
  CHECK(greedy_match_by_overlap({det(kGt, 0, 0.5, 0)}, {}).pairs.empty());
}

TEST_CASE("earlier gt claims a shared detection at the first threshold it clears") {
  const std::vector<Detection> dets{det({0, 0, 100, 80}, 0, 0.5, 0)};
  // IoU 0.80 with g1, 0.75 with g2.
  const std::vector<GroundTruth> gts{gt({0, 0, 100, 100}, 0, 0), gt({0, 0, 100, 60}, 0, 1)};
  REQUIRE(iou(dets[0].box, gts[0].box) == doctest::Approx(0.80));
  REQUIRE(iou(dets[0].box, gts[1].box) == doctest::Approx(0.75));
  const auto m = greedy_match_by_overlap(dets, gts);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].gt == 0);
}

TEST_CASE("gts are visited in input order within a threshold") {
  // Both gts clear t = 0.8 with the same det; the first listed wins despite lower IoU.
  const std::vector<Detection> dets{det({0, 0, 100, 80}, 0, 0.5, 0)};
  const std::vector<GroundTruth> gts{gt({0, 0, 100, 100}, 0, 0), gt({0, 0, 100, 97}, 0, 1)};
  REQUIRE(iou(dets[0].box, gts[1].box) > 0.8);
  REQUIRE(iou(dets[0].box, gts[1].box) < 0.85);
  const auto m = greedy_match_by_overlap(dets, gts);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].gt == 0);
}

TEST_CASE("confidence matching has a 0.5 floor") {
  // IoU 0.4.
  const auto m = greedy_match_by_confidence({det({0, 0, 100, 40}, 0, 0.9, 0)}, {gt(kGt, 0, 0)});
  CHECK(m.pairs.empty());
  const auto both = ImageRecord{1, 640, 480, {gt(kGt, 0, 0)}, {det({0, 0, 100, 90}, 0, 0.9, 0)}};
  CHECK(match(both, MatchingMode::kLocalization).pairs.size() == 1);
  CHECK(match(both, MatchingMode::kConfidence).pairs.size() == 1);
}

TEST_CASE("classes must agree") {
  const auto m = greedy_match_by_overlap({det(kGt, 1, 0.9, 0)}, {gt(kGt, 0, 0)});
  CHECK(m.pairs.empty());
}

TEST_CASE("equal IoU breaks ties by det_id") {
  const std::vector<Detection> dets{det(kTight, 0, 0.1, 5), det(kTight, 0, 0.9, 2)};
  const auto m = greedy_match_by_overlap(dets, {gt(kGt, 0, 0)});
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].det == 1);
}

TEST_CASE("targets") {
  const std::vector<Detection> dets{det(kTight, 0, 0.3, 0), det(kLoose, 0, 0.95, 1)};
  const std::vector<GroundTruth> gts{gt(kGt, 0, 0)};
  const auto m = greedy_match_by_overlap(dets, gts);
  const auto y = assign_targets(dets, gts, m, TargetMode::kIou);
  CHECK(y[0] == doctest::Approx(0.92));
  CHECK(y[1] == 0.0);
  const auto b = assign_targets(dets, gts, m, TargetMode::kBinary);
  CHECK(b[0] == 1.0);
  CHECK(b[1] == 0.0);
}

TEST_CASE("mode parsing") {
  CHECK(parse_matching_mode("confidence") == MatchingMode::kConfidence);
  CHECK(parse_target_mode("binary") == TargetMode::kBinary);
  CHECK_THROWS_AS(parse_matching_mode("hungarian"), std::invalid_argument);
}

TEST_CASE("matching validity and IoU ordering of targets on synthetic scenes") {
  SynthParams sp;
  sp.n_images = 60;
  sp.num_classes = 3;
  sp.duplicates_max = 3;
  sp.jitter = 0.15;
  sp.seed = 11;
  const Dataset ds = generate_dataset(sp);
  for (const auto& img : ds.images) {
    const auto loc = match(img, MatchingMode::kLocalization);
    const auto conf = match(img, MatchingMode::kConfidence);
    check_valid(loc, img);
    check_valid(conf, img);
    // Targets order matched detections by IoU within each class.
    const auto y = assign_targets(img.dets, img.gts, loc, TargetMode::kIou);
    for (const auto& p : loc.pairs) {
      for (const auto& q : loc.pairs) {
        if (img.dets[p.det].class_idx != img.dets[q.det].class_idx) continue;
        if (p.iou > q.iou) CHECK(y[p.det] > y[q.det]);
      }
    }
  }
}

TEST_CASE("target rescoring beats a duplicate-first ranking") {
  // The duplicate (IoU 0.6) outranks the tight box (IoU 0.92) in the raw scores.
  const std::vector<ImageRecord> imgs{
      image(1, {gt(kGt, 0, 0)}, {det(kTight, 0, 0.3, 0), det(kLoose, 0, 0.95, 1)})};
  const auto base = evaluate(imgs, 1);
  const auto tgt = target_ap_report(imgs, 1, {});
  CHECK(*tgt.ap > *base.ap);
}

TEST_CASE("exact detections reach AP 1 under targets") {
  const std::vector<ImageRecord> imgs{
      image(1, {gt(kGt, 0, 0), gt({200, 200, 50, 50}, 1, 1)},
            {det(kGt, 0, 1.0, 0), det({200, 200, 50, 50}, 1, 1.0, 1)})};
  CHECK(*target_ap_report(imgs, 2, {}).ap == 1.0);
  CHECK(*evaluate(imgs, 2).ap == 1.0);
}
