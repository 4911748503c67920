#include "fixture.hpp"

#include <filesystem>
#include <iostream>

namespace gcpl::testing {

namespace {

Fixture make_fixture(const SyntheticSpec& spec, const std::string& name) {
  const DenoiserArch arch;
  NoiseSchedule schedule = reference_schedule();
  SyntheticDataset data = generate_synthetic(spec);
  auto conditions = make_true_conditions(spec.n_classes, arch.cond_dim, spec.seed, 1.0);

  const std::filesystem::path path = std::filesystem::path(GCPL_FIXTURE_DIR) / name / "backbone.gcpl";
  if (std::filesystem::exists(path)) {
    DenoiserModel model = load_model(path);
    return Fixture{spec, std::move(data), std::move(conditions), std::move(schedule), std::move(model)};
  }
  std::cerr << "[fixture] " << path.string() << " missing, pretraining in-process\n";
  PretrainConfig pc;
  pc.seed = spec.seed;
  PretrainResult r = pretrain_backbone(data.train, conditions, schedule, arch, pc);
  return Fixture{spec, std::move(data), std::move(conditions), std::move(schedule), std::move(r.model)};
}

}  // namespace

NoiseSchedule reference_schedule() { return NoiseSchedule::linear(1000, 1e-4, 0.02); }

const Fixture& reference_fixture() {
  static const Fixture f = make_fixture(reference_spec(), "reference");
  return f;
}

const Fixture& hard_fixture() {
  static const Fixture f = make_fixture(hard_spec(), "hard");
  return f;
}

}  // namespace gcpl::testing
