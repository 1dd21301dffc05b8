#include "depthforge/storage.hpp"

#include "depthforge/pfm.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace depthforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[9] = "DFCKPT01";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& s, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

std::string sample_name(const char* split, std::size_t i, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%05zu_%s.pfm", split, i, kind);
  return buf;
}

json write_sample(const fs::path& dir, const char* split, std::size_t i, const DepthSample& s, std::uint64_t seed) {
  json e{{"index", i}, {"seed", seed}};
  e["image"] = sample_name(split, i, "image");
  e["depth"] = sample_name(split, i, "depth");
  e["valid"] = sample_name(split, i, "valid");
  pfm_write(dir / e["image"].get<std::string>(), s.image);
  pfm_write(dir / e["depth"].get<std::string>(), s.depth.values);
  pfm_write(dir / e["valid"].get<std::string>(), from_mask(s.depth.valid));
  if (s.sky) {
    e["sky"] = sample_name(split, i, "sky");
    pfm_write(dir / e["sky"].get<std::string>(), from_mask(*s.sky));
  }
  return e;
}

DepthSample read_sample(const fs::path& dir, const json& e) {
  DepthSample s;
  s.image = pfm_read(dir / e.at("image").get<std::string>());
  s.depth.values = pfm_read_grid(dir / e.at("depth").get<std::string>());
  s.depth.valid = to_mask(pfm_read_grid(dir / e.at("valid").get<std::string>()));
  if (e.contains("sky")) s.sky = to_mask(pfm_read_grid(dir / e.at("sky").get<std::string>()));
  return s;
}

json curve_json(const LossCurve& c) {
  return {{"total", c.total},
          {"labeled", c.labeled},
          {"unlabeled", c.unlabeled},
          {"feat", c.feat},
          {"epoch_labeled", c.epoch_labeled}};
}

json metric_json(const MetricReport& m) {
  json aligns = json::array();
  for (const auto& a : m.alignments) aligns.push_back({{"scale", a.scale}, {"shift", a.shift}, {"degenerate", a.degenerate}});
  return {{"dataset", m.dataset}, {"absrel", m.absrel},     {"d1", m.delta1},       {"d2", m.delta2},
          {"d3", m.delta3},       {"rmse", m.rmse},         {"rmse_log", m.rmse_log}, {"log10", m.log10},
          {"n_images", m.n_images}, {"n_pixels", m.n_pixels}, {"alignments", aligns}};
}

std::string group_name(ParamGroup g) { return g == ParamGroup::Decoder ? "decoder" : "encoder"; }

}  // namespace

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string encode_checkpoint(const ToyDepthModel& model) {
  json manifest;
  manifest["format"] = "depthforge-checkpoint";
  manifest["model"] = {{"patch", model.shape.patch}, {"channels", model.shape.channels}};
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.params.params()) {
    tensors.push_back({{"name", p.name},
                       {"group", group_name(p.group)},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.value.size()) * 8;
  }
  manifest["tensors"] = tensors;
  const std::string text = manifest.dump();

  std::string out(kMagic, 8);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& p : model.params.params()) {
    for (Index k = 0; k < p.value.size(); ++k) put_u64(out, std::bit_cast<std::uint64_t>(p.value.data()[k]));
  }
  return out;
}

ToyDepthModel decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kMagic) != 0) throw std::runtime_error("not a depthforge checkpoint");
  const std::uint64_t len = get_u64(bytes, 8);
  if (len > bytes.size() - 16) throw std::runtime_error("checkpoint manifest truncated");
  const json manifest = parse_json(bytes.substr(16, len), "checkpoint manifest");
  const std::size_t data = 16 + len;

  ToyDepthModel model;
  model.shape.patch = manifest.at("model").at("patch").get<Index>();
  model.shape.channels = manifest.at("model").at("channels").get<Index>();
  std::vector<NamedParam> params;
  for (const auto& t : manifest.at("tensors")) {
    NamedParam p;
    p.name = t.at("name").get<std::string>();
    p.group = t.at("group").get<std::string>() == "decoder" ? ParamGroup::Decoder : ParamGroup::Encoder;
    const Index rows = t.at("shape").at(0).get<Index>();
    const Index cols = t.at("shape").at(1).get<Index>();
    const auto off = t.at("offset").get<std::uint64_t>();
    const std::uint64_t need = static_cast<std::uint64_t>(rows * cols) * 8;
    if (off > bytes.size() - data || need > bytes.size() - data - off) {
      throw std::runtime_error("checkpoint tensor '" + p.name + "' runs past end of file");
    }
    p.value.resize(rows, cols);
    for (Index k = 0; k < rows * cols; ++k) {
      p.value.data()[k] = std::bit_cast<double>(get_u64(bytes, data + off + static_cast<std::size_t>(k) * 8));
    }
    params.push_back(std::move(p));
  }
  model.params = ParamSet(std::move(params));
  return model;
}

void save_checkpoint(const fs::path& path, const ToyDepthModel& model) { write_file(path, encode_checkpoint(model)); }

ToyDepthModel load_checkpoint(const fs::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed checkpoint manifest: " + e.what());
  }
}

void write_datasets(const fs::path& dir, const Datasets& data, const Config& config) {
  fs::create_directories(dir);
  json m;
  m["seed"] = config.run.seed;
  json labeled = json::array();
  for (std::size_t i = 0; i < data.labeled.size(); ++i) {
    labeled.push_back(write_sample(dir, "labeled", i, data.labeled[i], data.labeled_seeds.at(i)));
  }
  json unlabeled = json::array();
  for (std::size_t i = 0; i < data.unlabeled.size(); ++i) {
    json e{{"index", i}, {"seed", data.unlabeled_seeds.at(i)}, {"image", sample_name("unlabeled", i, "image")}};
    pfm_write(dir / e["image"].get<std::string>(), data.unlabeled[i]);
    unlabeled.push_back(e);
  }
  json tests = json::array();
  for (const auto& split : data.tests) {
    json samples = json::array();
    const std::string sub = "test_" + split.name;
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
      samples.push_back(write_sample(dir, sub.c_str(), i, split.samples[i], split.seeds.at(i)));
    }
    tests.push_back({{"name", split.name}, {"domain", split.domain}, {"samples", samples}});
  }
  m["splits"] = {{"labeled", labeled}, {"unlabeled", unlabeled}, {"tests", tests}};
  write_file(dir / "manifest.json", m.dump(1) + "\n");
  write_file(dir / "config.json", serialize_config(config));
}

Datasets read_datasets(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json m = parse_json(read_file(manifest_path), manifest_path.string());
  Datasets d;
  try {
    const auto& splits = m.at("splits");
    for (const auto& e : splits.at("labeled")) {
      d.labeled.push_back(read_sample(dir, e));
      d.labeled_seeds.push_back(e.at("seed").get<std::uint64_t>());
    }
    for (const auto& e : splits.at("unlabeled")) {
      d.unlabeled.push_back(pfm_read(dir / e.at("image").get<std::string>()));
      d.unlabeled_seeds.push_back(e.at("seed").get<std::uint64_t>());
    }
    for (const auto& t : splits.at("tests")) {
      TestSplit split;
      split.name = t.at("name").get<std::string>();
      split.domain = t.at("domain").get<int>();
      for (const auto& e : t.at("samples")) {
        split.samples.push_back(read_sample(dir, e));
        split.seeds.push_back(e.at("seed").get<std::uint64_t>());
      }
      d.tests.push_back(std::move(split));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  return d;
}

void write_pseudo_labels(const fs::path& dir, const std::vector<PseudoSample>& labels, const Config& config,
                         const std::string& checkpoint) {
  fs::create_directories(dir);
  json entries = json::array();
  std::uint64_t teacher = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pseudo/%05zu.pfm", i);
    pfm_write(dir / buf, labels[i].pseudo_disparity.values);
    entries.push_back({{"index", i}, {"file", buf}, {"clean_input", labels[i].provenance.clean_input}});
    teacher = labels[i].provenance.teacher_hash;
  }
  json m{{"seed", config.run.seed},
         {"checkpoint", checkpoint},
         {"teacher_hash", hex64(teacher)},
         {"count", labels.size()},
         {"labels", entries}};
  write_file(dir / "manifest.json", m.dump(1) + "\n");
  write_file(dir / "config.json", serialize_config(config));
}

std::vector<PseudoSample> read_pseudo_labels(const fs::path& dir, const std::vector<Tensor>& images) {
  const fs::path manifest_path = dir / "manifest.json";
  const json m = parse_json(read_file(manifest_path), manifest_path.string());
  std::vector<PseudoSample> out;
  try {
    const auto teacher = std::stoull(m.at("teacher_hash").get<std::string>(), nullptr, 16);
    for (const auto& e : m.at("labels")) {
      const auto i = e.at("index").get<std::size_t>();
      if (i >= images.size()) throw std::runtime_error(manifest_path.string() + ": label index beyond dataset");
      PseudoSample p;
      p.image = images[i];
      p.pseudo_disparity.values = pfm_read_grid(dir / e.at("file").get<std::string>());
      p.pseudo_disparity.valid = Mask::Constant(p.pseudo_disparity.values.rows(), p.pseudo_disparity.values.cols(), true);
      p.provenance = {teacher, e.at("clean_input").get<bool>()};
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  return out;
}

std::string report_json(const RunReport& r, const Config& config) {
  json j;
  j["stage"] = r.stage;
  j["seed"] = config.run.seed;
  j["steps"] = r.steps;
  j["skipped_degenerate"] = r.skipped_degenerate;
  j["cutmix_applied"] = r.cutmix_applied;
  j["plain_unlabeled"] = r.plain_unlabeled;
  j["checkpoint_hash"] = hex64(r.checkpoint_hash);
  j["loss_curve"] = curve_json(r.curve);
  json metrics = json::array();
  for (const auto& m : r.metrics) metrics.push_back(metric_json(m));
  j["metrics"] = metrics;
  j["config"] = json::parse(serialize_config(config));
  return j.dump(1) + "\n";
}

std::string metrics_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "dataset,absrel,d1,d2,d3,rmse,rmse_log,log10,n_images,n_pixels\n";
  os << std::setprecision(12);
  for (const auto& m : reports) {
    os << m.dataset << ',' << m.absrel << ',' << m.delta1 << ',' << m.delta2 << ',' << m.delta3 << ',' << m.rmse << ','
       << m.rmse_log << ',' << m.log10 << ',' << m.n_images << ',' << m.n_pixels << '\n';
  }
  return os.str();
}

std::string metrics_json(const std::vector<MetricReport>& reports, const Config& config) {
  json j;
  j["seed"] = config.run.seed;
  json arr = json::array();
  for (const auto& m : reports) arr.push_back(metric_json(m));
  j["metrics"] = arr;
  j["config"] = json::parse(serialize_config(config));
  return j.dump(1) + "\n";
}

}  // namespace depthforge
