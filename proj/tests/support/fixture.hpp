#pragma once

#include <vector>

#include "gcpl/harness.hpp"

namespace gcpl::testing {

// A pretrained, frozen backbone together with the data and conditions it was
// trained on. Loaded from GCPL_FIXTURE_DIR when the ctest setup step produced
// it, otherwise pretrained in-process with the same settings.
struct Fixture {
  SyntheticSpec spec;
  SyntheticDataset data;
  std::vector<ConditionEmbedding> conditions;
  NoiseSchedule schedule;
  DenoiserModel model;
};

const Fixture& reference_fixture();
const Fixture& hard_fixture();

NoiseSchedule reference_schedule();

}  // namespace gcpl::testing
