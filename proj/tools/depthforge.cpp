// depthforge: command-line front end for the data, training, evaluation and
// ablation stages. Exit codes: 0 success, 1 domain or I/O error, 2 usage.

#include "depthforge/config.hpp"
#include "depthforge/engine.hpp"
#include "depthforge/gradsuite.hpp"
#include "depthforge/pfm.hpp"
#include "depthforge/storage.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace depthforge;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

Config load(const Common& c) {
  Config config = c.config_path.empty() ? Config{} : load_config(c.config_path);
  if (c.seed) config.run.seed = *c.seed;
  config.validate();
  return config;
}

// Every artifact directory records what produced it.
void stamp(const fs::path& dir, const Config& config) {
  write_file(dir / "config.json", serialize_config(config));
  write_file(dir / "seed", std::to_string(config.run.seed) + "\n");
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "overrides run.seed from the config");
}

std::vector<MetricReport> evaluate_tests(const ToyDepthModel& model, const Datasets& data, const Config& config) {
  std::vector<MetricReport> out;
  for (const auto& split : data.tests) {
    out.push_back(evaluate_checkpoint(model, split.name, split.samples, config.run.align_mode));
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_metrics(const std::vector<MetricReport>& reports) {
  for (const auto& m : reports) {
    std::printf("%-10s absrel %.4f  d1 %.4f  rmse %.4f  (%ld images)\n", m.dataset.c_str(), m.absrel, m.delta1, m.rmse,
                static_cast<long>(m.n_images));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthforge: toy relative-depth training and evaluation"};
  bool print_config = false;
  app.add_flag("--print-default-config", print_config, "print the default configuration and exit");
  app.require_subcommand(0, 1);

  Common common;
  std::string out_dir, data_dir, pseudo_dir, checkpoint;
  int points = 10;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic labeled, unlabeled and test splits");
  add_common(gen, common);
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* teacher = app.add_subcommand("train-teacher", "train the teacher on labeled data");
  add_common(teacher, common);
  teacher->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  teacher->add_option("--out", out_dir, "output directory")->required();

  auto* pseudo = app.add_subcommand("pseudo-label", "annotate unlabeled images with a teacher");
  add_common(pseudo, common);
  pseudo->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  pseudo->add_option("--teacher", checkpoint, "teacher checkpoint")->required();
  pseudo->add_option("--out", out_dir, "output directory")->required();

  auto* student = app.add_subcommand("train-student", "train a student on labeled and pseudo-labeled data");
  add_common(student, common);
  student->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  student->add_option("--pseudo", pseudo_dir, "pseudo-label directory")->required();
  student->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test splits");
  add_common(eval, common);
  eval->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--out", out_dir, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "run the ablation grid; --seed restricts it to one seed");
  add_common(ablate, common);
  ablate->add_option("--out", out_dir, "output directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  add_common(grad, common);
  grad->add_option("--points", points, "random points per case")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (print_config) {
    std::cout << serialize_config(Config{});
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Config config = load(common);
    const fs::path out(out_dir);

    if (gen->parsed()) {
      const Datasets data = generate_datasets(config.scene, config.data, config.run.seed);
      write_datasets(out, data, config);
      stamp(out, config);
      std::printf("wrote %zu labeled, %zu unlabeled, %zu test splits to %s\n", data.labeled.size(),
                  data.unlabeled.size(), data.tests.size(), out.string().c_str());
    } else if (teacher->parsed()) {
      const Datasets data = read_datasets(data_dir);
      const TrainResult r = train_teacher(data.labeled, config.run);
      RunReport report = make_report("teacher", r);
      report.metrics = evaluate_tests(r.model, data, config);
      save_checkpoint(out / "checkpoint.dfck", r.model);
      write_file(out / "report.json", report_json(report, config));
      stamp(out, config);
      print_metrics(report.metrics);
    } else if (pseudo->parsed()) {
      const Datasets data = read_datasets(data_dir);
      const ToyDepthModel model = load_checkpoint(checkpoint);
      const auto labels = pseudo_label(model, data.unlabeled);
      write_pseudo_labels(out, labels, config, fs::path(checkpoint).filename().string());
      stamp(out, config);
      std::printf("wrote %zu pseudo-labels to %s\n", labels.size(), out.string().c_str());
    } else if (student->parsed()) {
      const Datasets data = read_datasets(data_dir);
      const auto labels = read_pseudo_labels(pseudo_dir, data.unlabeled);
      const TrainResult r = train_student(data.labeled, labels, config.run);
      RunReport report = make_report("student", r);
      report.metrics = evaluate_tests(r.model, data, config);
      save_checkpoint(out / "checkpoint.dfck", r.model);
      write_file(out / "report.json", report_json(report, config));
      stamp(out, config);
      print_metrics(report.metrics);
    } else if (eval->parsed()) {
      const Datasets data = read_datasets(data_dir);
      const ToyDepthModel model = load_checkpoint(checkpoint);
      const auto reports = evaluate_tests(model, data, config);
      write_file(out / "metrics.csv", metrics_csv(reports));
      write_file(out / "metrics.json", metrics_json(reports, config));
      stamp(out, config);
      print_metrics(reports);
    } else if (ablate->parsed()) {
      AblationConfig ablation = config.ablation;
      if (common.seed) ablation.seeds = {*common.seed};
      const AblationTable table = run_ablation_grid(config.scene, config.data, config.run, ablation);
      write_file(out / "ablation.csv", to_csv(table));
      stamp(out, config);
      std::printf("wrote %zu rows to %s\n", table.rows.size(), (out / "ablation.csv").string().c_str());
    } else if (grad->parsed()) {
      const GradSuiteResult result = run_gradient_suite(config.run.seed, points);
      for (const auto& c : result.cases) {
        std::printf("%-20s %2d points  max rel error %.3e  %s\n", c.name.c_str(), c.points, c.max_rel_error,
                    c.max_rel_error < result.tolerance ? "ok" : "FAIL");
      }
      if (!result.passed()) return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "depthforge: " << e.what() << "\n";
    return 1;
  }
  std::fprintf(stderr, "elapsed %.2f s\n", seconds_since(t0));
  return 0;
}
