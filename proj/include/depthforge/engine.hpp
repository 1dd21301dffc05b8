#pragma once

#include "depthforge/depth.hpp"
#include "depthforge/eval.hpp"
#include "depthforge/losses.hpp"
#include "depthforge/model.hpp"
#include "depthforge/perturb.hpp"
#include "depthforge/synth.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace depthforge {

enum class FeatTarget { Unlabeled, Labeled, Both };
enum class FrozenInput { Perturbed, Clean };

std::string to_string(FeatTarget t);
std::string to_string(FrozenInput f);
FeatTarget feat_target_from_string(const std::string& s);
FrozenInput frozen_input_from_string(const std::string& s);

struct RunConfig {
  int teacher_epochs = 20;
  int unlabeled_sweeps = 10;  // gives the student as many steps as the teacher at default sizes
  int ratio_labeled = 1;
  int ratio_unlabeled = 2;
  int teacher_batch = 4;  // labeled items per teacher step
  int batch_groups = 2;   // joint batch = batch_groups * (ratio_labeled + ratio_unlabeled)
  double encoder_lr = 1e-3;
  double decoder_lr_multiplier = 10.0;
  AdamWConfig adamw{};
  ModelShape model{};
  std::uint64_t frozen_seed = 0xF202E11ULL;
  PerturbConfig perturb{};
  double alpha = 0.85;
  bool enable_unlabeled = true;
  bool enable_strong_perturb = true;
  bool enable_feat_align = true;
  FeatTarget feat_target = FeatTarget::Unlabeled;
  FrozenInput frozen_input = FrozenInput::Perturbed;
  AlignMode align_mode = AlignMode::LeastSquares;
  std::uint64_t seed = 0;

  int labeled_per_batch() const { return batch_groups * ratio_labeled; }
  int unlabeled_per_batch() const { return batch_groups * ratio_unlabeled; }
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Per-step loss traces of one training stage. Absent terms are NaN.
struct LossCurve {
  std::vector<double> total;
  std::vector<double> labeled;
  std::vector<double> unlabeled;
  std::vector<double> feat;
  std::vector<double> epoch_labeled;  // teacher stage: mean L_l per epoch
};

struct TrainResult {
  ToyDepthModel model;
  LossCurve curve;
  long steps = 0;
  Index skipped_degenerate = 0;
  Index cutmix_applied = 0;
  Index plain_unlabeled = 0;
  Index cutmix_fallbacks = 0;
  std::vector<int> labeled_per_step;
  std::vector<int> unlabeled_per_step;
  std::uint64_t init_hash = 0;  // parameters before the first step
};

/// Seeds for each stage, derived from the run seed.
std::uint64_t teacher_init_seed(const RunConfig& c);
std::uint64_t student_init_seed(const RunConfig& c);

/// Labeled-only training with horizontal-flip augmentation.
TrainResult train_teacher(const std::vector<DepthSample>& labeled, const RunConfig& config);

/// One clean forward pass per image.
std::vector<PseudoSample> pseudo_label(const ToyDepthModel& teacher, const std::vector<Tensor>& unlabeled);

/// Joint training of a freshly initialized student on labeled data and
/// pseudo-labeled data. Unlabeled items get color distortion and, with the
/// configured probability, CutMix against another pseudo-labeled image.
TrainResult train_student(const std::vector<DepthSample>& labeled, const std::vector<PseudoSample>& pseudo,
                          const RunConfig& config);

struct RunReport {
  std::string stage;
  LossCurve curve;
  long steps = 0;
  Index skipped_degenerate = 0;
  Index cutmix_applied = 0;
  Index plain_unlabeled = 0;
  std::uint64_t checkpoint_hash = 0;
  std::vector<MetricReport> metrics;
  double wall_clock_seconds = 0.0;  // kept out of the serialized report
};

RunReport make_report(std::string stage, const TrainResult& result);

// ---------------------------------------------------------------- ablations

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool core = true;        // L_l / L_u / S / L_feat rows
  bool margins = true;     // alpha in {1.00, 0.85, 0.70}
  bool feat_targets = true;  // L_feat on none / unlabeled / labeled
  std::vector<double> alphas{1.00, 0.85, 0.70};

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct AblationRow {
  std::string group;
  std::string label;
  std::uint64_t seed = 0;
  bool enable_unlabeled = false;
  bool enable_strong_perturb = false;
  bool enable_feat_align = false;
  std::string feat_target;  // "none", "unlabeled", "labeled", "both"
  double alpha = 0.0;
  std::vector<std::string> datasets;
  std::vector<double> absrel;  // per dataset
  double mean_absrel = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

/// Runs every requested configuration for every seed. Each seed draws its
/// own datasets and teacher; student variants with identical settings are
/// trained once and reused.
AblationTable run_ablation_grid(const SceneSpec& scene, const DatasetConfig& data, const RunConfig& run,
                                const AblationConfig& ablation);

std::string to_csv(const AblationTable& table);

/// Median over seeds of mean_absrel for rows with this group and label.
double median_absrel(const AblationTable& table, const std::string& group, const std::string& label);

}  // namespace depthforge
