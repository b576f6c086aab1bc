#include <gtest/gtest.h>

#include <map>
#include <set>

#include "support.hpp"
#include "wellcast/augment.hpp"
#include "wellcast/error.hpp"

using namespace wellcast;

namespace {

std::vector<WellRecord> wells(int n, std::uint64_t seed, int size = 6) {
  std::mt19937_64 rng(seed);
  std::vector<WellRecord> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"w" + std::to_string(i), testkit::random_video(rng, 2, size, size, ColorSpace::HSV), Split::Raw, {}});
  }
  return out;
}

double total(const Video& v) {
  double s = 0;
  for (const Frame& f : v.frames())
    for (double x : f.data()) s += x;
  return s;
}

// Direct 2-D Gaussian convolution with mirrored borders, no separability.
double blur_oracle(const Frame& f, int r, int c, int ch, double sigma) {
  const int rad = static_cast<int>(std::ceil(3 * sigma));
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  double acc = 0, norm = 0;
  for (int dr = -rad; dr <= rad; ++dr)
    for (int dc = -rad; dc <= rad; ++dc) {
      const double w = std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
      norm += w;
      acc += w * f.at(mirror(r + dr, f.height()), mirror(c + dc, f.width()), ch);
    }
  return acc / norm;
}

}  // namespace

TEST(Flip, ExplicitPixels) {
  std::mt19937_64 rng(1);
  const Video v = testkit::random_video(rng, 2, 3, 4);
  const Video h = apply_flip(v, FlipAxis::Horizontal);
  const Video vv = apply_flip(v, FlipAxis::Vertical);
  EXPECT_EQ(h[1].at(0, 0, 1), v[1].at(0, 3, 1));
  EXPECT_EQ(vv[0].at(0, 2, 2), v[0].at(2, 2, 2));
  EXPECT_EQ(apply_flip(h, FlipAxis::Horizontal), v);
  EXPECT_EQ(apply_flip(vv, FlipAxis::Vertical), v);
}

TEST(Rotation, ClockwiseAndGroupLaws) {
  std::mt19937_64 rng(2);
  const Video v = testkit::random_video(rng, 3, 5, 5);
  const Video r90 = apply_rotation(v, 90);
  // Top-left goes to top-right under a clockwise quarter turn.
  EXPECT_EQ(r90[0].at(0, 4, 0), v[0].at(0, 0, 0));
  EXPECT_EQ(r90[2].at(4, 4, 1), v[2].at(0, 4, 1));
  EXPECT_EQ(apply_rotation(apply_rotation(r90, 90), 90), apply_rotation(v, 270));
  EXPECT_EQ(apply_rotation(apply_rotation(v, 270), 90), v);
  EXPECT_EQ(apply_rotation(v, 180), apply_flip(apply_flip(v, FlipAxis::Horizontal), FlipAxis::Vertical));
  EXPECT_THROW(apply_rotation(v, 45), Error);
  EXPECT_THROW(apply_rotation(testkit::random_video(rng, 1, 3, 4), 90), Error);
}

TEST(Blur, MatchesDirectConvolution) {
  std::mt19937_64 rng(3);
  const Video v = testkit::random_video(rng, 2, 7, 9);
  for (double sigma : {0.5, 1.0, 1.7}) {
    const Video b = apply_blur(v, sigma);
    for (int t = 0; t < 2; ++t)
      for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 9; ++c)
          for (int ch = 0; ch < 3; ++ch) ASSERT_NEAR(b[t].at(r, c, ch), blur_oracle(v[t], r, c, ch, sigma), 1e-12);
  }
}

TEST(Blur, PreservesSumAndConstants) {
  std::mt19937_64 rng(4);
  const Video v = testkit::random_video(rng, 2, 8, 8);
  EXPECT_NEAR(total(apply_blur(v, 0.8)), total(v), 1e-9);
  const Video c({Frame::filled(5, 5, ColorSpace::RGB, 0.3)});
  const Video blurred = apply_blur(c, 1.0);
  for (double x : blurred[0].data()) EXPECT_NEAR(x, 0.3, 1e-15);
  EXPECT_EQ(apply_blur(v, 0.0), v);
  EXPECT_THROW(apply_blur(v, -1.0), Error);
}

TEST(Noise, SeededAndBounded) {
  std::mt19937_64 rng(5);
  const Video v = testkit::random_video(rng, 2, 6, 6);
  std::mt19937_64 a(9), b(9);
  const Video x = apply_noise(v, 0.1, a);
  EXPECT_EQ(x, apply_noise(v, 0.1, b));
  EXPECT_NE(x, v);
  for (const Frame& f : x.frames())
    for (double d : f.data()) {
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
    }
  std::mt19937_64 c(1);
  EXPECT_EQ(apply_noise(v, 0.0, c), v);
}

TEST(Noise, EmpiricalSpread) {
  // Mid-gray input keeps clamping negligible at sigma 0.02.
  const Video v({Frame::filled(100, 100, ColorSpace::RGB, 0.5)});
  std::mt19937_64 rng(6);
  const Video x = apply_noise(v, 0.02, rng);
  double sum = 0, sq = 0;
  for (double d : x[0].data()) {
    sum += d - 0.5;
    sq += (d - 0.5) * (d - 0.5);
  }
  const double n = static_cast<double>(x[0].data().size());
  EXPECT_NEAR(sum / n, 0.0, 0.001);
  EXPECT_NEAR(std::sqrt(sq / n), 0.02, 0.001);
}

TEST(AugmentConfig, Multiplicity) {
  EXPECT_EQ(AugmentConfig{}.multiplicity(), 8);
  EXPECT_EQ(AugmentConfig::identity_only().multiplicity(), 1);
  AugmentConfig bad;
  bad.rotations = {45};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ExpandDataset, CountsSplitsAndLineage) {
  const auto records = wells(48, 7);
  SplitSpec split;
  split.test_well_ids = {"w3", "w10", "w11", "w40"};
  AugmentConfig aug;
  aug.seed = 99;
  const auto out = expand_dataset(records, aug, split);
  std::map<Split, int> counts;
  for (const auto& r : out) ++counts[r.split];
  EXPECT_EQ(out.size(), 356u);
  EXPECT_EQ(counts[Split::Train], 282);
  EXPECT_EQ(counts[Split::Valid], 70);
  EXPECT_EQ(counts[Split::Test], 4);

  std::set<std::string> ids, sources;
  const std::set<std::string> tests(split.test_well_ids.begin(), split.test_well_ids.end());
  for (const auto& r : out) {
    EXPECT_TRUE(ids.insert(r.well_id).second);
    if (r.split == Split::Test) {
      EXPECT_TRUE(r.lineage.empty());
      EXPECT_TRUE(tests.count(r.well_id));
      continue;
    }
    ASSERT_EQ(r.lineage.size(), 1u);
    const std::string src = r.well_id.substr(0, r.well_id.find('~'));
    EXPECT_FALSE(tests.count(src));
    sources.insert(src);
  }
  EXPECT_EQ(sources.size(), 44u);
  // Output order: train, valid, test.
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LE(static_cast<int>(out[i - 1].split), static_cast<int>(out[i].split));
}

TEST(ExpandDataset, DerivedContentMatchesTransform) {
  const auto records = wells(3, 8);
  AugmentConfig aug;
  const auto out = expand_dataset(records, aug, {});
  std::map<std::string, const WellRecord*> by_id;
  for (const auto& r : out) by_id[r.well_id] = &r;
  EXPECT_EQ(by_id.at("w1~id")->video, records[1].video);
  EXPECT_EQ(by_id.at("w1~id")->lineage, std::vector<std::string>{"identity"});
  EXPECT_EQ(by_id.at("w2~rot90")->video, apply_rotation(records[2].video, 90));
  EXPECT_EQ(by_id.at("w0~fliph")->lineage, std::vector<std::string>{"flip:horizontal"});
  EXPECT_EQ(by_id.at("w0~blur")->lineage, std::vector<std::string>{"blur:sigma=0.5"});
  EXPECT_EQ(by_id.at("w0~noise")->lineage, std::vector<std::string>{"noise:sigma=0.02"});
}

TEST(ExpandDataset, DeterministicAcrossWorkers) {
  const auto records = wells(10, 9);
  SplitSpec split;
  split.test_well_ids = {"w0"};
  AugmentConfig aug;
  aug.seed = 5;
  const auto a = expand_dataset(records, aug, split, 1);
  const auto b = expand_dataset(records, aug, split, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].well_id, b[i].well_id);
    EXPECT_EQ(a[i].split, b[i].split);
    EXPECT_EQ(a[i].video, b[i].video);
  }
  aug.seed = 6;
  const auto c = expand_dataset(records, aug, split, 1);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].well_id != c[i].well_id;
  EXPECT_TRUE(differs);
}

TEST(ExpandDataset, SplitFractionProperty) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const double f = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const auto records = wells(n, trial, 4);
    SplitSpec split;
    split.train_fraction = f;
    const auto out = expand_dataset(records, AugmentConfig{}, split);
    int train = 0;
    for (const auto& r : out) train += r.split == Split::Train;
    const double total_records = static_cast<double>(out.size());
    EXPECT_LE(std::abs(train - f * total_records), 1.0);
  }
}

TEST(ExpandDataset, Errors) {
  auto records = wells(3, 11);
  SplitSpec split;
  split.test_well_ids = {"nope"};
  try {
    expand_dataset(records, AugmentConfig{}, split);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownWell);
  }
  records[2].well_id = "w0";
  try {
    expand_dataset(records, AugmentConfig{}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateWell);
  }
}
