#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "test_support.hpp"
#include "wsp/augment.hpp"
#include "wsp/error.hpp"
#include "wsp/sampling.hpp"

namespace {

using wsp::BatchSpec;
using wsp::PreparedDataset;
using wsp::SamplingMode;

/// One patient per label entry, each with `slices` retained slices.
PreparedDataset make_cohort(const std::vector<int>& labels, std::size_t slices = 3, std::size_t size = 4) {
  PreparedDataset ds;
  ds.height = size;
  ds.width = size;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    wsp::PatientEntry entry{static_cast<std::int64_t>(100 + p), labels[p], labels[p] >= 2 ? 1 : 0, {}};
    for (std::size_t k = 0; k < slices; ++k) {
      wsp::PreparedSlice s;
      s.pixels.assign(size * size, 0.1 * static_cast<double>(k));
      s.patient_id = entry.patient_id;
      s.slice_id = static_cast<std::int64_t>(ds.slices.size());
      s.p = static_cast<std::uint32_t>(k);
      s.d = static_cast<double>(k) / static_cast<double>(slices);
      s.y_weak = labels[p];
      s.y_strong = entry.y_strong;
      entry.slices.push_back(ds.slices.size());
      ds.slices.push_back(std::move(s));
    }
    ds.patients.push_back(std::move(entry));
  }
  return ds;
}

std::vector<int> labels_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c));
  return labels;
}

std::map<int, std::size_t> class_counts(const PreparedDataset& ds, const wsp::Batch& batch) {
  std::map<int, std::size_t> counts;
  for (std::size_t idx : batch) ++counts[ds.slices[idx].y_weak];
  return counts;
}

std::size_t spread(const std::map<int, std::size_t>& counts, std::size_t classes) {
  std::size_t lo = counts.size() < classes ? 0 : SIZE_MAX, hi = 0;
  for (const auto& [label, n] : counts) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  return hi - lo;
}

TEST(SampleBatchTest, ExactBalanceWithTwoPerClass) {
  PreparedDataset ds = make_cohort(labels_with_counts({3, 2, 4, 2}));
  BatchSpec spec;
  spec.batch_size = 8;
  spec.seed = 4;
  wsp::Batch batch = wsp::sample_batch(ds, spec);
  ASSERT_EQ(batch.size(), 8u);
  for (const auto& [label, n] : class_counts(ds, batch)) EXPECT_EQ(n, 2u) << "class " << label;
}

TEST(SampleBatchTest, SixAcrossFourClasses) {
  PreparedDataset ds = make_cohort(labels_with_counts({5, 5, 5, 5}));
  BatchSpec spec;
  spec.batch_size = 6;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spec.seed = seed;
    auto counts = class_counts(ds, wsp::sample_batch(ds, spec));
    ASSERT_EQ(counts.size(), 4u);
    for (const auto& [label, n] : counts) {
      EXPECT_GE(n, 1u);
      EXPECT_LE(n, 2u);
    }
  }
}

TEST(SampleBatchTest, TooFewPatientsSignalsFallback) {
  PreparedDataset ds = make_cohort({0, 1, 2, 3, 0});
  BatchSpec spec;
  spec.batch_size = 8;
  EXPECT_THROW(wsp::sample_batch(ds, spec), wsp::FallbackRequired);
}

TEST(SampleBatchTest, OddBatchRejected) {
  PreparedDataset ds = make_cohort(labels_with_counts({4, 4}));
  BatchSpec spec;
  spec.batch_size = 5;
  EXPECT_THROW(wsp::sample_batch(ds, spec), wsp::ConfigError);
}

TEST(SampleBatchTest, SliceComesFromThePatient) {
  PreparedDataset ds = make_cohort(labels_with_counts({6, 6}), 5);
  BatchSpec spec;
  spec.batch_size = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    for (std::size_t idx : wsp::sample_batch(ds, spec)) {
      const auto& s = ds.slices[idx];
      const auto& owner = *std::find_if(ds.patients.begin(), ds.patients.end(),
                                        [&](const wsp::PatientEntry& p) { return p.patient_id == s.patient_id; });
      EXPECT_NE(std::find(owner.slices.begin(), owner.slices.end(), idx), owner.slices.end());
    }
  }
}

TEST(PlanEpochTest, StrictPropertiesOverHundredEpochs) {
  // Uneven class sizes force queue refills at different times.
  PreparedDataset ds = make_cohort(labels_with_counts({7, 9, 8, 6}));
  BatchSpec spec;
  spec.batch_size = 8;
  spec.seed = 77;
  for (std::uint64_t epoch = 0; epoch < 100; ++epoch) {
    spec.epoch = epoch;
    const auto batches = wsp::plan_epoch(ds, spec);
    ASSERT_EQ(batches.size(), 4u);  // ceil(30 / 8)
    std::map<int, std::vector<std::int64_t>> per_class;
    for (const auto& batch : batches) {
      ASSERT_EQ(batch.size(), 8u);
      std::set<std::int64_t> patients;
      for (std::size_t idx : batch) patients.insert(ds.slices[idx].patient_id);
      EXPECT_EQ(patients.size(), 8u) << "epoch " << epoch;
      EXPECT_LE(spread(class_counts(ds, batch), 4), 1u) << "epoch " << epoch;
      for (std::size_t idx : batch) per_class[ds.slices[idx].y_weak].push_back(ds.slices[idx].patient_id);
    }
    // Within a class nobody repeats before the whole class has been drawn.
    for (const auto& [label, sequence] : per_class) {
      const std::size_t class_size = label == 0 ? 7 : label == 1 ? 9 : label == 2 ? 8 : 6;
      std::set<std::int64_t> seen;
      for (std::int64_t pid : sequence) {
        if (seen.size() < class_size) {
          EXPECT_FALSE(seen.count(pid)) << "epoch " << epoch << " class " << label;
        } else {
          seen.clear();
        }
        seen.insert(pid);
      }
    }
  }
}

TEST(PlanEpochTest, DivisibleCohortCoveredExactlyOnce) {
  PreparedDataset ds = make_cohort(labels_with_counts({8, 8, 8, 8}));
  BatchSpec spec;
  spec.batch_size = 8;
  for (std::uint64_t epoch = 0; epoch < 100; ++epoch) {
    spec.seed = 5;
    spec.epoch = epoch;
    std::multiset<std::int64_t> seen;
    for (const auto& batch : wsp::plan_epoch(ds, spec)) {
      for (std::size_t idx : batch) seen.insert(ds.slices[idx].patient_id);
    }
    ASSERT_EQ(seen.size(), 32u);
    for (const auto& p : ds.patients) EXPECT_EQ(seen.count(p.patient_id), 1u);
  }
}

TEST(PlanEpochTest, DeterministicAndEpochDependent) {
  PreparedDataset ds = make_cohort(labels_with_counts({6, 6, 6, 6}));
  BatchSpec spec;
  spec.batch_size = 8;
  spec.seed = 3;
  EXPECT_EQ(wsp::plan_epoch(ds, spec), wsp::plan_epoch(ds, spec));
  BatchSpec next = spec;
  next.epoch = 1;
  EXPECT_NE(wsp::plan_epoch(ds, spec), wsp::plan_epoch(ds, next));
}

TEST(PlanEpochTest, StrongLabelBalance) {
  PreparedDataset ds = make_cohort(labels_with_counts({5, 5, 5, 5}));
  BatchSpec spec;
  spec.batch_size = 6;
  spec.balance = wsp::BalanceLabel::strong;
  for (const auto& batch : wsp::plan_epoch(ds, spec)) {
    std::size_t positives = 0;
    for (std::size_t idx : batch) positives += *ds.slices[idx].y_strong;
    EXPECT_EQ(positives, 3u);
  }
  ds.patients[0].y_strong.reset();
  EXPECT_THROW(wsp::plan_epoch(ds, spec), wsp::ContractError);
}

TEST(FallbackTest, ThreePatientsBatchOfEight) {
  PreparedDataset ds = make_cohort({0, 1, 2});
  BatchSpec spec;
  spec.batch_size = 8;
  spec.mode = SamplingMode::fallback_balanced;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    spec.seed = seed;
    wsp::Batch batch = wsp::sample_batch_fallback(ds, spec);
    ASSERT_EQ(batch.size(), 8u);
    EXPECT_LE(spread(class_counts(ds, batch), 3), 1u);
  }
}

TEST(FallbackTest, SinglePatientDrawsOnlyFromIt) {
  PreparedDataset ds = make_cohort({2}, 6);
  BatchSpec spec;
  spec.batch_size = 4;
  spec.mode = SamplingMode::fallback_balanced;
  for (std::size_t idx : wsp::sample_batch_fallback(ds, spec)) EXPECT_EQ(ds.slices[idx].patient_id, 100);
}

TEST(FallbackTest, DeterministicGivenSeed) {
  PreparedDataset ds = make_cohort({0, 1, 1, 2, 3});
  BatchSpec spec;
  spec.batch_size = 8;
  spec.mode = SamplingMode::fallback_balanced;
  spec.seed = 9;
  EXPECT_EQ(wsp::sample_batch_fallback(ds, spec, 2), wsp::sample_batch_fallback(ds, spec, 2));
  spec.fallback_steps = 5;
  EXPECT_EQ(wsp::steps_per_epoch(ds, spec), 5u);
  EXPECT_EQ(wsp::plan_epoch(ds, spec).size(), 5u);
}

std::vector<double> random_image(std::uint64_t seed, std::size_t n) {
  wsp::Rng rng = wsp::make_rng(seed);
  wsp::Tensor t = wsp::testing::random_tensor(rng, {n * n}, 0.0, 1.0);
  return {t.values().begin(), t.values().end()};
}

TEST(AugmentTest, NullAugmentationIsIdentity) {
  std::vector<double> img = random_image(61, 16);
  wsp::AugmentConfig cfg;
  cfg.rotation_deg = 0.0;
  cfg.crop_scale_min = 1.0;
  cfg.crop_scale_max = 1.0;
  cfg.flip_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<double> out = wsp::augment(img, 16, 16, cfg, seed);
    ASSERT_EQ(out.size(), img.size());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-6);
  }
}

TEST(AugmentTest, FlipIsAnInvolution) {
  std::vector<double> img = random_image(62, 9);
  std::vector<double> once = wsp::flip_horizontal(img, 9, 9);
  EXPECT_NE(once, img);
  EXPECT_EQ(wsp::flip_horizontal(once, 9, 9), img);
  EXPECT_EQ(once[0], img[8]);
}

TEST(AugmentTest, AlwaysFlipTwiceReturnsOriginal) {
  std::vector<double> img = random_image(63, 12);
  wsp::AugmentConfig cfg;
  cfg.rotation_deg = 0.0;
  cfg.crop_scale_min = 1.0;
  cfg.crop_scale_max = 1.0;
  cfg.flip_prob = 1.0;
  std::vector<double> twice = wsp::augment(wsp::augment(img, 12, 12, cfg, 5), 12, 12, cfg, 5);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(twice[i], img[i], 1e-12);
}

TEST(AugmentTest, DeterministicAndSeedSensitive) {
  std::vector<double> img = random_image(64, 16);
  wsp::AugmentConfig cfg;
  EXPECT_EQ(wsp::augment(img, 16, 16, cfg, 11), wsp::augment(img, 16, 16, cfg, 11));
  std::size_t differing = 0;
  for (std::uint64_t s = 0; s < 50; ++s) differing += wsp::augment(img, 16, 16, cfg, s) != wsp::augment(img, 16, 16, cfg, s + 1000);
  EXPECT_GE(differing, 49u);
}

TEST(AugmentTest, OutputStaysInInputRange) {
  std::vector<double> img = random_image(65, 16);
  for (std::uint64_t s = 0; s < 20; ++s) {
    for (double v : wsp::augment(img, 16, 16, wsp::AugmentConfig{}, s)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(AugmentTest, InvalidConfigAndShape) {
  wsp::AugmentConfig cfg;
  cfg.crop_scale_min = 0.0;
  EXPECT_THROW(cfg.validate(), wsp::ConfigError);
  cfg = wsp::AugmentConfig{};
  cfg.rotation_deg = -1.0;
  EXPECT_THROW(cfg.validate(), wsp::ConfigError);
  EXPECT_THROW(wsp::augment(random_image(1, 4), 4, 5, wsp::AugmentConfig{}, 0), wsp::DimensionError);
}

TEST(MakeViewsTest, SharedMetaAndDistinctViews) {
  PreparedDataset ds = make_cohort({1}, 1, 16);
  std::vector<double> img = random_image(66, 16);
  ds.slices[0].pixels = img;
  ds.slices[0].d = 0.4;
  std::size_t differing = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    wsp::ViewPair pair = wsp::make_views(ds.slices[0], 16, 16, wsp::AugmentConfig{}, s);
    EXPECT_EQ(pair.meta.y, 1);
    EXPECT_EQ(pair.meta.d, 0.4);
    EXPECT_EQ(pair.meta.slice_id, 0);
    EXPECT_EQ(pair.meta.patient_id, 100);
    differing += pair.view_a != pair.view_b;
  }
  EXPECT_GE(differing, 19u);
}

TEST(MakeViewsTest, DisabledAugmentationReturnsOriginal) {
  PreparedDataset ds = make_cohort({0}, 1, 8);
  ds.slices[0].pixels = random_image(67, 8);
  wsp::AugmentConfig cfg;
  cfg.enabled = false;
  wsp::ViewPair pair = wsp::make_views(ds.slices[0], 8, 8, cfg, 3);
  EXPECT_EQ(pair.view_a, ds.slices[0].pixels);
  EXPECT_EQ(pair.view_b, ds.slices[0].pixels);
}

TEST(MakeViewBatchTest, StacksViewsAndMeta) {
  PreparedDataset ds = make_cohort(labels_with_counts({2, 2}), 2, 8);
  std::vector<std::size_t> batch = {0, 3, 6};
  wsp::ViewBatch vb = wsp::make_view_batch(ds, batch, wsp::AugmentConfig{}, 12);
  EXPECT_EQ(vb.images.shape(), (wsp::Shape{6, 1, 8, 8}));
  ASSERT_EQ(vb.meta.size(), 6u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(vb.meta.views[k].slice_id, ds.slices[batch[k]].slice_id);
    EXPECT_EQ(vb.meta.views[3 + k].slice_id, ds.slices[batch[k]].slice_id);
  }
  EXPECT_NO_THROW(vb.meta.validate());
}

}  // namespace
