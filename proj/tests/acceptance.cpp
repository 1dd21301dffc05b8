// Acceptance checks: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include "depthforge/engine.hpp"
#include "depthforge/eval.hpp"
#include "depthforge/losses.hpp"
#include "depthforge/pfm.hpp"
#include "depthforge/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef DEPTHFORGE_CLI
#error "DEPTHFORGE_CLI must name the command-line binary"
#endif

using namespace depthforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

GridXd random_grid(Index r, Index c, Rng& rng, double lo, double hi) {
  GridXd g(r, c);
  for (Index k = 0; k < g.size(); ++k) g.data()[k] = rng.uniform(lo, hi);
  return g;
}

Mask all_true(Index r, Index c) { return Mask::Constant(r, c, true); }

double l_l(const GridXd& p, const GridXd& g) { return affine_invariant_loss(p, g, all_true(p.rows(), p.cols())).value; }

Outcome loss_invariance() {
  Timer t;
  Rng rng(101);
  double worst_affine = 0.0, worst_self = 0.0, worst_sym = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GridXd p = random_grid(8, 8, rng, -1.0, 1.0);
    const GridXd g = random_grid(8, 8, rng, -1.0, 1.0);
    const double a = rng.uniform(0.1, 10.0);
    const double b = rng.uniform(-5.0, 5.0);
    const GridXd mapped = (a * p.array() + b).matrix();
    worst_affine = std::max(worst_affine, std::abs(l_l(mapped, g) - l_l(p, g)));
    worst_self = std::max(worst_self, std::abs(l_l(p, p)));
    worst_sym = std::max(worst_sym, std::abs(l_l(p, g) - l_l(g, p)));
  }
  const double secs = t.seconds();
  Outcome o;
  o.pass = worst_affine < 1e-9 && worst_self == 0.0 && worst_sym < 1e-12 && secs < 5.0;
  o.detail = "affine " + fmt(worst_affine) + ", self " + fmt(worst_self) + ", symmetry " + fmt(worst_sym) + ", " +
             fmt(secs) + " s";
  return o;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + DEPTHFORGE_CLI + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
#ifdef WEXITSTATUS
  return WEXITSTATUS(status);
#else
  return status;
#endif
}

Outcome gradient_suite() {
  Timer t;
  const fs::path log = fs::temp_directory_path() / "depthforge_acceptance_gradcheck.log";
  fs::remove(log);
  const int code = run_cli("gradcheck --points 10", log);
  const double secs = t.seconds();
  Outcome o;
  o.pass = code == 0 && secs < 60.0;
  o.detail = "gradcheck exit " + std::to_string(code) + ", " + fmt(secs) + " s";
  if (code != 0) o.detail += ", log " + log.string();
  return o;
}

// Scalar region loss written out from the definition.
double region_oracle(const GridXd& p, const GridXd& g, const std::vector<Index>& idx) {
  auto normalize = [&](const GridXd& d) {
    std::vector<double> v;
    for (Index k : idx) v.push_back(d.data()[k]);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    const double med = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    double mad = 0.0;
    for (double x : v) mad += std::abs(x - med);
    mad /= static_cast<double>(n);
    for (double& x : v) x = (x - med) / mad;
    return v;
  };
  const auto a = normalize(p);
  const auto b = normalize(g);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

Outcome cutmix_algebra() {
  Rng rng(103);
  double worst_full = 0.0;
  bool partition = true;
  for (int i = 0; i < 50; ++i) {
    const Index h = 4 + static_cast<Index>(rng.uniform_int(8));
    const Index w = 4 + static_cast<Index>(rng.uniform_int(8));
    const GridXd s = random_grid(h, w, rng, -1.0, 1.0);
    const GridXd a = random_grid(h, w, rng, -1.0, 1.0);
    const GridXd b = random_grid(h, w, rng, -1.0, 1.0);
    const auto full = CutMixMask::from_rect(h, w, {0, 0, h, w});
    worst_full = std::max(worst_full, std::abs(cutmix_unlabeled_loss(s, a, b, full).value - l_l(s, a)));

    const Index rh = 1 + static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(h)));
    const Index rw = 1 + static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(w)));
    const auto m = CutMixMask::from_rect(h, w, {0, 0, rh, rw});
    const double in = static_cast<double>(m.mask.count());
    const double out = static_cast<double>((!m.mask.array()).count());
    partition = partition && (in + out) / static_cast<double>(h * w) == 1.0;
  }

  GridXd s(2, 2), a(2, 2), b(2, 2);
  s << 1.0, 5.0, 3.0, 4.0;
  a << 2.0, 0.0, 1.0, 0.0;
  b << 0.0, 0.5, 0.0, 0.1;
  const auto m = CutMixMask::from_rect(2, 2, {0, 0, 2, 1});
  const double hand = 1.0;  // left column loss 2 with weight 1/2, right column loss 0
  const double oracle = 0.5 * region_oracle(s, a, {0, 2}) + 0.5 * region_oracle(s, b, {1, 3});
  const double lib = cutmix_unlabeled_loss(s, a, b, m).value;
  const double hand_err = std::max(std::abs(lib - hand), std::abs(oracle - hand));

  Outcome o;
  o.pass = worst_full < 1e-12 && partition && hand_err < 1e-12;
  o.detail = "full-mask " + fmt(worst_full) + ", partition " + (partition ? "exact" : "broken") + ", 2x2 oracle " +
             fmt(hand_err);
  return o;
}

Outcome feature_semantics() {
  Rng rng(104);
  const GridXd f = random_grid(12, 6, rng, -1.0, 1.0);
  const double same = feature_alignment_loss(f, f, ToleranceMargin(0.85)).value;

  GridXd u = GridXd::Zero(4, 4), v = GridXd::Zero(4, 4);
  for (Index r = 0; r < 4; ++r) {
    u(r, r) = 1.0;
    v(r, (r + 1) % 4) = 1.0;
  }
  const double orth = feature_alignment_loss(u, v, ToleranceMargin(0.85)).value;

  const GridXd g = (f + 0.7 * random_grid(12, 6, rng, -1.0, 1.0)).eval();
  bool monotone = true;
  double prev = -1.0;
  for (double alpha : {0.5, 0.7, 0.85, 1.0}) {
    const double l = feature_alignment_loss(f, g, ToleranceMargin(alpha)).value;
    if (prev >= 0.0 && l < prev) monotone = false;  // a larger alpha keeps more locations
    prev = l;
  }

  ad::Var fv = ad::Var::parameter(f);
  ad::Var gv = ad::Var::parameter(g);
  ad::backward(feature_alignment_loss(fv, gv, ToleranceMargin(0.85)));
  const bool frozen_zero = (gv.grad().array() == 0.0).all();

  Outcome o;
  o.pass = same == 0.0 && std::abs(orth - 1.0) < 1e-12 && monotone && frozen_zero;
  o.detail = "identical " + fmt(same) + ", orthogonal " + fmt(orth) + ", monotone " + (monotone ? "yes" : "no") +
             ", frozen grad " + (frozen_zero ? "zero" : "nonzero");
  return o;
}

Outcome metric_oracle() {
  Rng rng(105);
  double worst = 0.0;
  bool ordered = true;
  for (int i = 0; i < 50; ++i) {
    const GridXd pred = random_grid(4, 4, rng, 0.1, 10.0);
    const GridXd gt = random_grid(4, 4, rng, 0.1, 10.0);
    const DepthMetrics m = depth_metrics(pred, gt, all_true(4, 4));
    double absrel = 0.0, sq = 0.0, sq_log = 0.0, l10 = 0.0, d[3] = {0.0, 0.0, 0.0};
    for (Index k = 0; k < 16; ++k) {
      const double p = pred.data()[k], g = gt.data()[k];
      absrel += std::abs(p - g) / g;
      sq += (p - g) * (p - g);
      sq_log += std::pow(std::log(p) - std::log(g), 2);
      l10 += std::abs(std::log10(p) - std::log10(g));
      const double ratio = std::max(p / g, g / p);
      for (int j = 0; j < 3; ++j) d[j] += ratio < std::pow(1.25, j + 1) ? 1.0 : 0.0;
    }
    const double expect[] = {absrel / 16, d[0] / 16, d[1] / 16, d[2] / 16,
                             std::sqrt(sq / 16), std::sqrt(sq_log / 16), l10 / 16};
    const double got[] = {m.absrel, m.delta1, m.delta2, m.delta3, m.rmse, m.rmse_log, m.log10};
    for (int j = 0; j < 7; ++j) worst = std::max(worst, std::abs(expect[j] - got[j]));
    ordered = ordered && m.delta1 <= m.delta2 && m.delta2 <= m.delta3;
  }
  GridXd p(1, 3), g(1, 3);
  p << 1.0, 2.0, 4.0;
  g << 1.0, 2.0, 3.0;
  const DepthMetrics w = depth_metrics(p, g, all_true(1, 3));
  const bool worked = w.absrel == 1.0 / 9.0 && w.delta1 == 2.0 / 3.0;

  Outcome o;
  o.pass = worst < 1e-12 && ordered && worked;
  o.detail = "oracle " + fmt(worst) + ", delta order " + (ordered ? "holds" : "broken") + ", worked example " +
             (worked ? "exact" : "off");
  return o;
}

Outcome alignment_recovery() {
  Rng rng(106);
  double worst_param = 0.0, worst_absrel = 0.0;
  for (int i = 0; i < 50; ++i) {
    const GridXd gt = random_grid(8, 8, rng, 0.1, 1.0);
    const double a = rng.uniform(0.1, 10.0);
    const double b = rng.uniform(-5.0, 5.0);
    const GridXd pred = ((gt.array() - b) / a).matrix();
    const Mask valid = all_true(8, 8);
    const Alignment al = align_least_squares(pred, gt, valid);
    worst_param = std::max({worst_param, std::abs(al.scale - a), std::abs(al.shift - b)});
    const DepthMap depth{gt.cwiseInverse(), valid};
    worst_absrel = std::max(worst_absrel, compute_metrics(apply_alignment(pred, al), depth, valid).absrel);
  }
  Outcome o;
  o.pass = worst_param < 1e-9 && worst_absrel < 1e-9;
  o.detail = "parameter error " + fmt(worst_param) + ", AbsRel " + fmt(worst_absrel);
  return o;
}

Outcome pipeline_direction() {
  Timer t;
  AblationConfig ab;
  ab.margins = false;
  ab.feat_targets = false;
  const AblationTable table = run_ablation_grid(SceneSpec{}, DatasetConfig{}, RunConfig{}, ab);
  const double base = median_absrel(table, "core", "L_l");
  const double s_off = median_absrel(table, "core", "L_l+L_u");
  const double s_on = median_absrel(table, "core", "L_l+L_u+S");
  const double full = median_absrel(table, "core", "L_l+L_u+S+L_feat");
  const double secs = t.seconds();
  Outcome o;
  o.pass = full < base && s_on <= s_off && secs < 600.0;
  o.detail = "median AbsRel L_l " + fmt(base) + ", +L_u " + fmt(s_off) + ", +S " + fmt(s_on) + ", +L_feat " +
             fmt(full) + ", " + fmt(secs) + " s";
  return o;
}

Outcome margin_grid() {
  AblationConfig ab;
  ab.core = false;
  ab.feat_targets = false;
  ab.seeds = {0};
  const AblationTable table = run_ablation_grid(SceneSpec{}, DatasetConfig{}, RunConfig{}, ab);
  const std::string csv = to_csv(table);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  std::multiset<double> alphas;
  bool finite = true;
  for (const auto& r : table.rows) {
    alphas.insert(r.alpha);
    finite = finite && std::isfinite(r.mean_absrel);
  }
  int data_lines = 0;
  while (std::getline(in, line)) data_lines += line.empty() ? 0 : 1;
  const bool one_each = alphas.size() == 3 && alphas.count(1.0) == 1 && alphas.count(0.85) == 1 &&
                        alphas.count(0.70) == 1 && data_lines == 3;
  Outcome o;
  o.pass = one_each && finite;
  std::ostringstream d;
  d << data_lines << " CSV rows";
  for (const auto& r : table.rows) d << ", " << r.label << " AbsRel " << fmt(r.mean_absrel);
  o.detail = d.str();
  return o;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return out;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "depthforge_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path log = root / "cli.log";
  int failures = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    const std::string p = "\"" + d.string() + "\"";
    const std::vector<std::string> stages = {
        "gen-data --seed 7 --out " + p + "/data",
        "train-teacher --seed 7 --data " + p + "/data --out " + p + "/teacher",
        "pseudo-label --seed 7 --data " + p + "/data --teacher " + p + "/teacher/checkpoint.dfck --out " + p +
            "/pseudo",
        "train-student --seed 7 --data " + p + "/data --pseudo " + p + "/pseudo --out " + p + "/student",
        "eval --seed 7 --data " + p + "/data --checkpoint " + p + "/student/checkpoint.dfck --out " + p + "/eval",
    };
    for (const auto& s : stages) failures += run_cli(s, log) != 0;
  }
  Outcome o;
  if (failures > 0) {
    o.pass = false;
    o.detail = std::to_string(failures) + " stage(s) failed, log " + log.string();
    return o;
  }
  const auto a = tree_contents(root / "a");
  const auto b = tree_contents(root / "b");
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differing.push_back(name);
  }
  if (a.size() != b.size()) differing.push_back("(file sets differ)");
  const bool has_outputs = a.count("teacher/checkpoint.dfck") && a.count("student/checkpoint.dfck") &&
                           a.count("pseudo/manifest.json") && a.count("student/report.json") &&
                           a.count("eval/metrics.csv");
  o.pass = differing.empty() && has_outputs;
  o.detail = std::to_string(a.size()) + " files compared";
  if (!differing.empty()) o.detail += ", first difference " + differing.front();
  if (!has_outputs) o.detail += ", expected outputs missing";
  if (o.pass) fs::remove_all(root);
  return o;
}

Outcome pfm_round_trip() {
  const fs::path dir = fs::temp_directory_path() / "depthforge_acceptance_pfm";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(110);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const Index h = 1 + static_cast<Index>(rng.uniform_int(24));
    const Index w = 1 + static_cast<Index>(rng.uniform_int(24));
    GridXd g(h, w);
    for (Index k = 0; k < g.size(); ++k) {
      // Spread values over many binades, both signs.
      const double mag = std::ldexp(rng.uniform(), static_cast<int>(rng.uniform_int(60)) - 30);
      g.data()[k] = static_cast<double>(static_cast<float>(rng.bernoulli(0.5) ? mag : -mag));
    }
    const fs::path file = dir / "map.pfm";
    pfm_write(file, g);
    const GridXd back = pfm_read_grid(file);
    if (back.rows() != h || back.cols() != w ||
        std::memcmp(back.data(), g.data(), sizeof(double) * static_cast<std::size_t>(g.size())) != 0) {
      ++mismatches;
    }
  }
  fs::remove_all(dir);

  const std::string bytes = pfm_encode(GridXd::Constant(1, 1, 0.25));
  const std::string fixture = std::string("Pf\n1 1\n-1.0\n") + std::string("\x00\x00\x80\x3e", 4);
  const bool fixture_ok = bytes == fixture;

  Outcome o;
  o.pass = mismatches == 0 && fixture_ok;
  o.detail = std::to_string(1000 - mismatches) + "/1000 maps exact, 1x1 fixture " + (fixture_ok ? "matches" : "differs");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss invariance", loss_invariance},
      {"gradient suite", gradient_suite},
      {"cutmix algebra", cutmix_algebra},
      {"feature alignment semantics", feature_semantics},
      {"metric oracle", metric_oracle},
      {"alignment recovery", alignment_recovery},
      {"pipeline direction", pipeline_direction},
      {"tolerance margin grid", margin_grid},
      {"cli determinism", cli_determinism},
      {"pfm round trip", pfm_round_trip},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << n << ' ' << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
