#include "depthforge/engine.hpp"
#include "depthforge/parallel.hpp"

#include "doctest.h"
#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

using namespace depthforge;

namespace {

SceneSpec small_scene() {
  SceneSpec s;
  s.height = s.width = 16;
  return s;
}

DatasetConfig small_data() {
  DatasetConfig d;
  d.labeled = 8;
  d.unlabeled = 12;
  d.test = 4;
  return d;
}

RunConfig small_run() {
  RunConfig r;
  r.model = {8, 8};
  r.teacher_epochs = 6;
  r.unlabeled_sweeps = 2;
  r.seed = 5;
  return r;
}

const Datasets& small_datasets() {
  static const Datasets d = generate_datasets(small_scene(), small_data(), 21);
  return d;
}

}  // namespace

TEST_CASE("teacher training lowers the labeled loss") {
  RunConfig run = small_run();
  run.teacher_epochs = 15;
  const TrainResult t = train_teacher(small_datasets().labeled, run);
  REQUIRE(t.curve.epoch_labeled.size() == 15);
  CHECK(t.curve.epoch_labeled.back() < t.curve.epoch_labeled.front());
  CHECK(t.steps == 15 * 2);
  CHECK(std::all_of(t.labeled_per_step.begin(), t.labeled_per_step.end(), [](int n) { return n == 4; }));
}

TEST_CASE("zero epochs returns the initialization") {
  RunConfig run = small_run();
  run.teacher_epochs = 0;
  const TrainResult t = train_teacher(small_datasets().labeled, run);
  CHECK(t.steps == 0);
  CHECK(t.model.params == init_model(run.model, teacher_init_seed(run)).params);
  CHECK(t.model.params.hash() == t.init_hash);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const RunConfig run = small_run();
  const auto& d = small_datasets();
  const TrainResult a = train_teacher(d.labeled, run);
  const TrainResult b = train_teacher(d.labeled, run);
  CHECK(a.model.params.hash() == b.model.params.hash());

  const auto pseudo = pseudo_label(a.model, d.unlabeled);
  const TrainResult sa = train_student(d.labeled, pseudo, run);
  const TrainResult sb = train_student(d.labeled, pseudo, run);
  CHECK(sa.model.params.hash() == sb.model.params.hash());
  CHECK(sa.curve.total == sb.curve.total);

  RunConfig other = run;
  other.seed = 6;
  CHECK(train_teacher(d.labeled, other).model.params.hash() != a.model.params.hash());
}

TEST_CASE("pseudo-labels cover every unlabeled image") {
  const auto& d = small_datasets();
  const TrainResult t = train_teacher(d.labeled, small_run());
  const auto pseudo = pseudo_label(t.model, d.unlabeled);
  REQUIRE(pseudo.size() == d.unlabeled.size());
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    const GridXd& v = pseudo[i].pseudo_disparity.values;
    CHECK(v.rows() == 16);
    CHECK(v.minCoeff() > 0.0);
    CHECK(v.maxCoeff() < 1.0);
    CHECK(pseudo[i].provenance.clean_input);
    CHECK(pseudo[i].provenance.teacher_hash == t.model.params.hash());
    CHECK(pseudo[i].image == d.unlabeled[i]);
    CHECK(v == predict(t.model, d.unlabeled[i]).disparity);
  }
}

TEST_CASE("student rejects pseudo-labels from perturbed inputs") {
  const auto& d = small_datasets();
  auto pseudo = pseudo_label(train_teacher(d.labeled, small_run()).model, d.unlabeled);
  pseudo[3].provenance.clean_input = false;
  CHECK_THROWS_AS(train_student(d.labeled, pseudo, small_run()), std::logic_error);
}

TEST_CASE("student batches follow the labeled to unlabeled ratio") {
  const auto& d = small_datasets();
  const RunConfig run = small_run();
  const TrainResult t = train_teacher(d.labeled, run);
  const TrainResult s = train_student(d.labeled, pseudo_label(t.model, d.unlabeled), run);
  CHECK(s.init_hash != t.init_hash);
  CHECK(s.steps == 2 * 3);  // 12 unlabeled images, 4 per step, 2 sweeps
  for (long k = 0; k < s.steps; ++k) {
    CHECK(s.labeled_per_step[static_cast<std::size_t>(k)] == 2);
    CHECK(s.unlabeled_per_step[static_cast<std::size_t>(k)] == 4);
  }
  CHECK(s.cutmix_applied + s.plain_unlabeled == 4 * s.steps);
  CHECK(s.cutmix_applied > 0);
  CHECK(s.plain_unlabeled > 0);
}

TEST_CASE("cutmix probability zero sends every unlabeled item through the plain path") {
  const auto& d = small_datasets();
  RunConfig run = small_run();
  run.perturb.cutmix_probability = 0.0;
  const auto pseudo = pseudo_label(train_teacher(d.labeled, run).model, d.unlabeled);
  const TrainResult s = train_student(d.labeled, pseudo, run);
  CHECK(s.cutmix_applied == 0);
  CHECK(s.plain_unlabeled == 4 * s.steps);

  run.perturb.cutmix_probability = 1.0;
  const TrainResult all = train_student(d.labeled, pseudo, run);
  CHECK(all.plain_unlabeled == 0);
}

TEST_CASE("with every flag off the student ignores pseudo-labels") {
  const auto& d = small_datasets();
  RunConfig run = small_run();
  run.enable_unlabeled = false;
  run.enable_strong_perturb = false;
  run.enable_feat_align = false;
  const auto pseudo = pseudo_label(train_teacher(d.labeled, run).model, d.unlabeled);
  auto scrambled = pseudo;
  for (auto& p : scrambled) p.pseudo_disparity.values = GridXd::Constant(16, 16, 0.5) - p.pseudo_disparity.values * 0.1;
  const TrainResult a = train_student(d.labeled, pseudo, run);
  const TrainResult b = train_student(d.labeled, scrambled, run);
  CHECK(a.model.params == b.model.params);
  CHECK(a.plain_unlabeled == 0);
  CHECK(std::all_of(a.unlabeled_per_step.begin(), a.unlabeled_per_step.end(), [](int n) { return n == 0; }));
  CHECK(std::all_of(a.curve.unlabeled.begin(), a.curve.unlabeled.end(), [](double x) { return std::isnan(x); }));
}

TEST_CASE("feature alignment changes the student only when enabled") {
  const auto& d = small_datasets();
  RunConfig run = small_run();
  const auto pseudo = pseudo_label(train_teacher(d.labeled, run).model, d.unlabeled);
  run.enable_feat_align = false;
  const TrainResult off = train_student(d.labeled, pseudo, run);
  run.enable_feat_align = true;
  const TrainResult on = train_student(d.labeled, pseudo, run);
  CHECK(on.model.params.hash() != off.model.params.hash());
  CHECK(std::all_of(on.curve.feat.begin(), on.curve.feat.end(), [](double x) { return std::isfinite(x) && x >= 0.0; }));

  // The frozen encoder is drawn from its own seed and never touched.
  const FrozenEncoder fresh = init_frozen_encoder(run.model, run.frozen_seed);
  CHECK(fresh.params == init_frozen_encoder(run.model, run.frozen_seed).params);
}

TEST_CASE("ablation grid rows and reruns") {
  RunConfig run = small_run();
  run.teacher_epochs = 2;
  run.unlabeled_sweeps = 1;
  AblationConfig ab;
  ab.seeds = {0, 1};
  const AblationTable t = run_ablation_grid(small_scene(), small_data(), run, ab);
  CHECK(t.rows.size() == 2 * (4 + 3 + 3));

  int alpha_one = 0;
  for (const auto& r : t.rows) {
    CHECK(std::isfinite(r.mean_absrel));
    CHECK(r.datasets.size() == 1);
    if (r.group == "margin" && r.label == "alpha=1.00") {
      ++alpha_one;
      CHECK(r.alpha == 1.0);
      CHECK(r.enable_feat_align);
    }
  }
  CHECK(alpha_one == 2);

  // Same settings are trained once and shared across groups.
  for (std::uint64_t seed : ab.seeds) {
    double core_full = 0.0, target_u = 0.0, alpha_default = 0.0;
    for (const auto& r : t.rows) {
      if (r.seed != seed) continue;
      if (r.label == "L_l+L_u+S+L_feat") core_full = r.mean_absrel;
      if (r.group == "feat_target" && r.label == "U") target_u = r.mean_absrel;
      if (r.label == "alpha=0.85") alpha_default = r.mean_absrel;
    }
    CHECK(core_full == target_u);
    CHECK(core_full == alpha_default);
  }

  const AblationTable again = run_ablation_grid(small_scene(), small_data(), run, ab);
  CHECK(to_csv(again) == to_csv(t));
  CHECK_THROWS(median_absrel(t, "core", "nope"));
}

TEST_CASE("pseudo-labels and evaluation do not depend on the thread count") {
  const auto& d = small_datasets();
  const TrainResult t = train_teacher(d.labeled, small_run());
  ::setenv("DEPTHFORGE_THREADS", "1", 1);
  const auto serial = pseudo_label(t.model, d.unlabeled);
  const MetricReport serial_eval = evaluate_checkpoint(t.model, "test", d.tests[0].samples);
  ::setenv("DEPTHFORGE_THREADS", "4", 1);
  REQUIRE(worker_count() == 4);
  const auto parallel = pseudo_label(t.model, d.unlabeled);
  const MetricReport parallel_eval = evaluate_checkpoint(t.model, "test", d.tests[0].samples);
  ::unsetenv("DEPTHFORGE_THREADS");
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].pseudo_disparity.values == parallel[i].pseudo_disparity.values);
  }
  CHECK(serial_eval.absrel == parallel_eval.absrel);
  CHECK(serial_eval.rmse == parallel_eval.rmse);
}
