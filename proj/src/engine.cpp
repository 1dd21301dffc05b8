#include "depthforge/engine.hpp"

#include "depthforge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace depthforge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LabeledView {
  Tensor image;
  GridXd target;
  Mask valid;
};

// Each labeled sample and its mirror, with disparity targets precomputed.
struct LabeledCache {
  std::vector<LabeledView> plain;
  std::vector<LabeledView> flipped;

  explicit LabeledCache(const std::vector<DepthSample>& samples) {
    for (const auto& s : samples) {
      const DisparityMap d = depth_to_disparity(s.depth, s.sky);
      plain.push_back({s.image, d.values, d.valid});
      flipped.push_back({flip_columns(s.image), flip_columns(d.values), flip_columns(d.valid)});
    }
  }

  const LabeledView& get(std::size_t i, bool flip) const { return flip ? flipped[i] : plain[i]; }
};

std::optional<ad::Var> mean_of(const std::vector<ad::Var>& terms) {
  if (terms.empty()) return std::nullopt;
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.0 / static_cast<double>(terms.size()));
}

double value_or_nan(const std::optional<ad::Var>& v) { return v ? v->item() : kNaN; }

bool feat_on_labeled(const RunConfig& c) {
  return c.enable_feat_align && (c.feat_target == FeatTarget::Labeled || c.feat_target == FeatTarget::Both);
}

bool feat_on_unlabeled(const RunConfig& c) {
  return c.enable_feat_align && (c.feat_target == FeatTarget::Unlabeled || c.feat_target == FeatTarget::Both);
}

// Forward + backward + optimizer update for one batch of loss terms.
struct StepLosses {
  std::optional<ad::Var> labeled;
  std::optional<ad::Var> unlabeled;
  std::optional<ad::Var> feat;
};

void record(LossCurve& curve, const StepLosses& l, const ad::Var& total) {
  curve.total.push_back(total.item());
  curve.labeled.push_back(value_or_nan(l.labeled));
  curve.unlabeled.push_back(value_or_nan(l.unlabeled));
  curve.feat.push_back(value_or_nan(l.feat));
}

}  // namespace

std::string to_string(FeatTarget t) {
  switch (t) {
    case FeatTarget::Unlabeled: return "unlabeled";
    case FeatTarget::Labeled: return "labeled";
    case FeatTarget::Both: return "both";
  }
  return "unlabeled";
}

std::string to_string(FrozenInput f) { return f == FrozenInput::Clean ? "clean" : "perturbed"; }

FeatTarget feat_target_from_string(const std::string& s) {
  if (s == "unlabeled") return FeatTarget::Unlabeled;
  if (s == "labeled") return FeatTarget::Labeled;
  if (s == "both") return FeatTarget::Both;
  throw std::invalid_argument("unknown feat_target '" + s + "'");
}

FrozenInput frozen_input_from_string(const std::string& s) {
  if (s == "perturbed") return FrozenInput::Perturbed;
  if (s == "clean") return FrozenInput::Clean;
  throw std::invalid_argument("unknown frozen_input '" + s + "'");
}

void RunConfig::validate() const {
  if (teacher_epochs < 0 || unlabeled_sweeps < 0) throw std::invalid_argument("RunConfig: negative epoch count");
  if (ratio_labeled <= 0 || ratio_unlabeled <= 0) throw std::invalid_argument("RunConfig: ratio parts must be positive");
  if (teacher_batch <= 0 || batch_groups <= 0) throw std::invalid_argument("RunConfig: batch sizes must be positive");
  if (!(encoder_lr >= 0.0) || !(decoder_lr_multiplier > 0.0)) throw std::invalid_argument("RunConfig: bad learning rate");
  if (model.patch <= 0 || model.channels <= 0) throw std::invalid_argument("RunConfig: bad model shape");
  static_cast<void>(ToleranceMargin{alpha});
  perturb.validate();
}

std::uint64_t teacher_init_seed(const RunConfig& c) { return derive_seed(c.seed, 11); }
std::uint64_t student_init_seed(const RunConfig& c) { return derive_seed(c.seed, 21); }

TrainResult train_teacher(const std::vector<DepthSample>& labeled, const RunConfig& config) {
  config.validate();
  if (labeled.empty()) throw DomainError("train_teacher: empty labeled set");

  TrainResult result;
  result.model = init_model(config.model, teacher_init_seed(config));
  result.init_hash = result.model.params.hash();
  if (config.teacher_epochs == 0) return result;

  const LabeledCache cache(labeled);
  const auto n = labeled.size();
  const auto batch = static_cast<std::size_t>(config.teacher_batch);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = steps_per_epoch * config.teacher_epochs;

  Rng rng(derive_seed(config.seed, 12));
  AdamW opt(config.adamw);
  std::vector<std::size_t> order(n);
  bool trained = false;

  for (int epoch = 0; epoch < config.teacher_epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    double epoch_sum = 0.0;
    long epoch_steps = 0;

    for (std::size_t start = 0; start < n; start += batch) {
      const BoundModel bound(result.model, true);
      std::vector<ad::Var> terms;
      for (std::size_t k = start; k < std::min(n, start + batch); ++k) {
        const auto& view = cache.get(order[k], rng.bernoulli(0.5));
        const ForwardResult out = forward(bound, view.image);
        try {
          terms.push_back(affine_invariant_loss(out.disparity, ad::Var::constant(view.target), view.valid));
        } catch (const DegenerateSample&) {
          ++result.skipped_degenerate;
        }
      }
      const GroupRates rates =
          scheduled_rates(config.encoder_lr, config.decoder_lr_multiplier, result.steps, total_steps);
      ++result.steps;
      result.labeled_per_step.push_back(static_cast<int>(terms.size()));
      result.unlabeled_per_step.push_back(0);
      StepLosses losses{mean_of(terms), std::nullopt, std::nullopt};
      if (!losses.labeled) continue;

      const ad::Var total = overall_loss(losses.labeled, std::nullopt, std::nullopt);
      ad::backward(total);
      opt.step(result.model.params, bound.gradients(), rates);
      record(result.curve, losses, total);
      epoch_sum += losses.labeled->item();
      ++epoch_steps;
      trained = true;
    }
    result.curve.epoch_labeled.push_back(epoch_steps > 0 ? epoch_sum / static_cast<double>(epoch_steps) : kNaN);
  }
  if (!trained) throw DomainError("train_teacher: every labeled sample is degenerate");
  return result;
}

std::vector<PseudoSample> pseudo_label(const ToyDepthModel& teacher, const std::vector<Tensor>& unlabeled) {
  const std::uint64_t hash = teacher.params.hash();
  std::vector<PseudoSample> out(unlabeled.size());
  parallel_for(unlabeled.size(), [&](std::size_t i) {
    const Prediction p = predict(teacher, unlabeled[i]);
    out[i].image = unlabeled[i];
    out[i].pseudo_disparity = {p.disparity, Mask::Constant(p.disparity.rows(), p.disparity.cols(), true)};
    out[i].provenance = {hash, true};
  });
  return out;
}

TrainResult train_student(const std::vector<DepthSample>& labeled, const std::vector<PseudoSample>& pseudo,
                          const RunConfig& config) {
  config.validate();
  if (labeled.empty()) throw DomainError("train_student: empty labeled set");
  if (config.enable_unlabeled && pseudo.empty()) throw DomainError("train_student: empty pseudo-labeled set");
  for (const auto& p : pseudo) {
    if (!p.provenance.clean_input) throw std::logic_error("train_student: pseudo-label computed from a perturbed image");
  }

  TrainResult result;
  result.model = init_model(config.model, student_init_seed(config));
  result.init_hash = result.model.params.hash();

  const LabeledCache cache(labeled);
  const std::size_t n_l = labeled.size();
  const std::size_t n_u = pseudo.size();
  const auto r_l = static_cast<std::size_t>(config.labeled_per_batch());
  const auto r_u = static_cast<std::size_t>(config.unlabeled_per_batch());
  const long steps_per_sweep = static_cast<long>((n_u + r_u - 1) / r_u);
  const long total_steps = steps_per_sweep * config.unlabeled_sweeps;

  std::optional<FrozenEncoder> frozen;
  if (config.enable_feat_align) frozen = init_frozen_encoder(config.model, config.frozen_seed);
  const Mask full = n_u > 0 ? Mask::Constant(pseudo[0].image.height(), pseudo[0].image.width(), true) : Mask();

  Rng rng(derive_seed(config.seed, 22));
  Rng prng(derive_seed(config.seed ^ config.perturb.seed, 23));
  AdamW opt(config.adamw);
  std::vector<std::size_t> order(n_u);

  for (int sweep = 0; sweep < config.unlabeled_sweeps; ++sweep) {
    for (std::size_t i = 0; i < n_u; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());

    for (long s = 0; s < steps_per_sweep; ++s) {
      const BoundModel bound(result.model, true);
      std::vector<ad::Var> l_terms;
      std::vector<ad::Var> u_terms;
      std::vector<ad::Var> f_terms;

      for (std::size_t j = 0; j < r_l; ++j) {
        const auto li = static_cast<std::size_t>(rng.uniform_int(n_l));
        const auto& view = cache.get(li, rng.bernoulli(0.5));
        const ForwardResult out = forward(bound, view.image);
        try {
          l_terms.push_back(affine_invariant_loss(out.disparity, ad::Var::constant(view.target), view.valid));
        } catch (const DegenerateSample&) {
          ++result.skipped_degenerate;
        }
        if (feat_on_labeled(config)) {
          const GridXd target = frozen_forward(*frozen, view.image);
          f_terms.push_back(feature_alignment_loss(out.features, ad::Var::constant(target), ToleranceMargin(config.alpha)));
        }
      }

      int unlabeled_used = 0;
      if (config.enable_unlabeled) {
        for (std::size_t j = 0; j < r_u; ++j) {
          // The final batch of a sweep wraps to the front so every batch is full.
          const std::size_t a = order[(static_cast<std::size_t>(s) * r_u + j) % n_u];
          const PseudoSample& ua = pseudo[a];
          Tensor input;
          Tensor clean;
          std::optional<ad::Var> l_u;
          ++unlabeled_used;

          if (config.enable_strong_perturb) {
            Tensor distorted_a = color_distort(ua.image, config.perturb, prng);
            if (n_u > 1 && prng.bernoulli(config.perturb.cutmix_probability)) {
              auto b = static_cast<std::size_t>(prng.uniform_int(n_u - 1));
              if (b >= a) ++b;
              const PseudoSample& ub = pseudo[b];
              const Tensor distorted_b = color_distort(ub.image, config.perturb, prng);
              const CutMixMask mask = sample_cutmix_mask(ua.image.height(), ua.image.width(), config.perturb, prng);
              input = cutmix_images(distorted_a, distorted_b, mask);
              if (config.frozen_input == FrozenInput::Clean) clean = cutmix_images(ua.image, ub.image, mask);
              const ForwardResult out = forward(bound, input);
              try {
                CutMixLoss cm = cutmix_unlabeled_loss(out.disparity, ua.pseudo_disparity.values,
                                                      ub.pseudo_disparity.values, mask);
                result.cutmix_fallbacks += cm.fell_back;
                u_terms.push_back(cm.loss);
              } catch (const DegenerateSample&) {
                ++result.skipped_degenerate;
              }
              ++result.cutmix_applied;
              if (feat_on_unlabeled(config)) {
                const GridXd target = frozen_forward(*frozen, config.frozen_input == FrozenInput::Clean ? clean : input);
                f_terms.push_back(
                    feature_alignment_loss(out.features, ad::Var::constant(target), ToleranceMargin(config.alpha)));
              }
              continue;
            }
            input = std::move(distorted_a);
          } else {
            input = ua.image;
          }

          const ForwardResult out = forward(bound, input);
          try {
            u_terms.push_back(
                affine_invariant_loss(out.disparity, ad::Var::constant(ua.pseudo_disparity.values), full));
          } catch (const DegenerateSample&) {
            ++result.skipped_degenerate;
          }
          ++result.plain_unlabeled;
          if (feat_on_unlabeled(config)) {
            const GridXd target =
                frozen_forward(*frozen, config.frozen_input == FrozenInput::Clean ? ua.image : input);
            f_terms.push_back(
                feature_alignment_loss(out.features, ad::Var::constant(target), ToleranceMargin(config.alpha)));
          }
        }
      }

      const GroupRates rates =
          scheduled_rates(config.encoder_lr, config.decoder_lr_multiplier, result.steps, total_steps);
      ++result.steps;
      result.labeled_per_step.push_back(static_cast<int>(r_l));
      result.unlabeled_per_step.push_back(unlabeled_used);

      StepLosses losses{mean_of(l_terms), mean_of(u_terms), mean_of(f_terms)};
      if (!losses.labeled && !losses.unlabeled && !losses.feat) continue;
      const ad::Var total = overall_loss(losses.labeled, losses.unlabeled, losses.feat);
      ad::backward(total);
      opt.step(result.model.params, bound.gradients(), rates);
      record(result.curve, losses, total);
    }
  }
  return result;
}

RunReport make_report(std::string stage, const TrainResult& result) {
  RunReport r;
  r.stage = std::move(stage);
  r.curve = result.curve;
  r.steps = result.steps;
  r.skipped_degenerate = result.skipped_degenerate;
  r.cutmix_applied = result.cutmix_applied;
  r.plain_unlabeled = result.plain_unlabeled;
  r.checkpoint_hash = result.model.params.hash();
  return r;
}

// ---------------------------------------------------------------- ablations

namespace {

struct Variant {
  std::string group;
  std::string label;
  bool unlabeled;
  bool strong;
  bool feat;
  FeatTarget target;
  double alpha;
};

std::vector<Variant> variants(const RunConfig& run, const AblationConfig& ab) {
  std::vector<Variant> v;
  if (ab.core) {
    v.push_back({"core", "L_l", false, false, false, FeatTarget::Unlabeled, run.alpha});
    v.push_back({"core", "L_l+L_u", true, false, false, FeatTarget::Unlabeled, run.alpha});
    v.push_back({"core", "L_l+L_u+S", true, true, false, FeatTarget::Unlabeled, run.alpha});
    v.push_back({"core", "L_l+L_u+S+L_feat", true, true, true, FeatTarget::Unlabeled, run.alpha});
  }
  if (ab.margins) {
    for (double a : ab.alphas) {
      std::ostringstream label;
      label << "alpha=" << std::fixed << std::setprecision(2) << a;
      v.push_back({"margin", label.str(), true, true, true, FeatTarget::Unlabeled, a});
    }
  }
  if (ab.feat_targets) {
    v.push_back({"feat_target", "none", true, true, false, FeatTarget::Unlabeled, run.alpha});
    v.push_back({"feat_target", "U", true, true, true, FeatTarget::Unlabeled, run.alpha});
    v.push_back({"feat_target", "L", true, true, true, FeatTarget::Labeled, run.alpha});
  }
  return v;
}

using VariantKey = std::tuple<bool, bool, bool, int, double>;

VariantKey key_of(const Variant& v) {
  if (!v.feat) return {v.unlabeled, v.strong, false, 0, 0.0};
  return {v.unlabeled, v.strong, true, static_cast<int>(v.target), v.alpha};
}

}  // namespace

AblationTable run_ablation_grid(const SceneSpec& scene, const DatasetConfig& data, const RunConfig& run,
                                const AblationConfig& ablation) {
  const auto vs = variants(run, ablation);
  AblationTable table;
  for (std::uint64_t seed : ablation.seeds) {
    const Datasets ds = generate_datasets(scene, data, seed);
    RunConfig base = run;
    base.seed = seed;
    const TrainResult teacher = train_teacher(ds.labeled, base);
    const auto pseudo = pseudo_label(teacher.model, ds.unlabeled);

    std::map<VariantKey, std::vector<double>> cache;
    for (const auto& v : vs) {
      auto it = cache.find(key_of(v));
      if (it == cache.end()) {
        RunConfig rc = base;
        rc.enable_unlabeled = v.unlabeled;
        rc.enable_strong_perturb = v.strong;
        rc.enable_feat_align = v.feat;
        rc.feat_target = v.target;
        rc.alpha = v.alpha;
        const TrainResult student = train_student(ds.labeled, pseudo, rc);
        std::vector<double> absrel;
        for (const auto& split : ds.tests) {
          absrel.push_back(evaluate_checkpoint(student.model, split.name, split.samples, rc.align_mode).absrel);
        }
        it = cache.emplace(key_of(v), std::move(absrel)).first;
      }
      AblationRow row;
      row.group = v.group;
      row.label = v.label;
      row.seed = seed;
      row.enable_unlabeled = v.unlabeled;
      row.enable_strong_perturb = v.strong;
      row.enable_feat_align = v.feat;
      row.feat_target = v.feat ? to_string(v.target) : "none";
      row.alpha = v.alpha;
      for (const auto& split : ds.tests) row.datasets.push_back(split.name);
      row.absrel = it->second;
      double sum = 0.0;
      for (double a : row.absrel) sum += a;
      row.mean_absrel = row.absrel.empty() ? kNaN : sum / static_cast<double>(row.absrel.size());
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string to_csv(const AblationTable& table) {
  std::ostringstream os;
  os << "group,label,seed,enable_unlabeled,enable_strong_perturb,enable_feat_align,feat_target,alpha";
  if (!table.rows.empty()) {
    for (const auto& d : table.rows.front().datasets) os << ',' << d << "_absrel";
  }
  os << ",mean_absrel\n";
  os << std::setprecision(10);
  for (const auto& r : table.rows) {
    os << r.group << ',' << r.label << ',' << r.seed << ',' << r.enable_unlabeled << ',' << r.enable_strong_perturb
       << ',' << r.enable_feat_align << ',' << r.feat_target << ',' << r.alpha;
    for (double a : r.absrel) os << ',' << a;
    os << ',' << r.mean_absrel << '\n';
  }
  return os.str();
}

double median_absrel(const AblationTable& table, const std::string& group, const std::string& label) {
  std::vector<double> v;
  for (const auto& r : table.rows) {
    if (r.group == group && r.label == label) v.push_back(r.mean_absrel);
  }
  if (v.empty()) throw std::invalid_argument("no ablation rows for " + group + "/" + label);
  return ad::median_even_avg(v);
}

}  // namespace depthforge
