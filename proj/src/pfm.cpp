#include "depthforge/pfm.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace depthforge {

namespace {

void put_float(std::string& out, float v, Endian endian) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) {
    const int shift = endian == Endian::Little ? 8 * i : 8 * (3 - i);
    b[i] = static_cast<unsigned char>((bits >> shift) & 0xffu);
  }
  out.append(reinterpret_cast<const char*>(b), 4);
}

float get_float(const unsigned char* b, Endian endian) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    const int shift = endian == Endian::Little ? 8 * i : 8 * (3 - i);
    bits |= static_cast<std::uint32_t>(b[i]) << shift;
  }
  return std::bit_cast<float>(bits);
}

std::string header(const char* magic, Index w, Index h, Endian endian) {
  std::ostringstream os;
  os << magic << '\n' << w << ' ' << h << '\n' << (endian == Endian::Little ? "-1.0" : "1.0") << '\n';
  return os.str();
}

class Cursor {
 public:
  explicit Cursor(const std::string& s) : s_(s) {}

  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string token() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) throw PfmError("unexpected end of PFM header", pos_);
    return s_.substr(start, pos_ - start);
  }

  Index positive_int(const char* what) {
    const std::size_t at = (skip_space(), pos_);
    const std::string t = token();
    Index v = 0;
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c))) throw PfmError(std::string("malformed ") + what, at);
      v = v * 10 + (c - '0');
      if (v > (Index{1} << 30)) throw PfmError(std::string(what) + " too large", at);
    }
    if (v == 0) throw PfmError(std::string(what) + " must be positive", at);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string pfm_encode(const GridXd& map, Endian endian) {
  std::string out = header("Pf", map.cols(), map.rows(), endian);
  out.reserve(out.size() + static_cast<std::size_t>(map.size()) * 4);
  for (Index r = map.rows() - 1; r >= 0; --r) {
    for (Index c = 0; c < map.cols(); ++c) put_float(out, static_cast<float>(map(r, c)), endian);
  }
  return out;
}

std::string pfm_encode(const Tensor& tensor, Endian endian) {
  if (tensor.rank() == 2) return pfm_encode(GridXd(tensor.plane()), endian);
  if (tensor.rank() != 3 || tensor.dim(0) != 3) throw std::invalid_argument("pfm_encode: need H x W or 3 x H x W");
  const Index h = tensor.height();
  const Index w = tensor.width();
  std::string out = header("PF", w, h, endian);
  out.reserve(out.size() + static_cast<std::size_t>(tensor.size()) * 4);
  for (Index r = h - 1; r >= 0; --r) {
    for (Index c = 0; c < w; ++c) {
      for (Index ch = 0; ch < 3; ++ch) put_float(out, static_cast<float>(tensor.plane(ch)(r, c)), endian);
    }
  }
  return out;
}

Tensor pfm_decode(const std::string& bytes) {
  Cursor cur(bytes);
  const std::string magic = cur.token();
  Index channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw PfmError("bad PFM magic '" + magic.substr(0, 8) + "'", 0);
  }
  const Index w = cur.positive_int("width");
  const Index h = cur.positive_int("height");
  cur.skip_space();
  const std::size_t scale_at = cur.pos();
  const std::string scale_tok = cur.token();
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(scale_tok, &used);
    if (used != scale_tok.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw PfmError("malformed scale '" + scale_tok + "'", scale_at);
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw PfmError("scale must be nonzero", scale_at);
  const Endian endian = scale < 0.0 ? Endian::Little : Endian::Big;
  if (cur.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos()]))) {
    throw PfmError("missing separator after scale", cur.pos());
  }
  cur.advance(1);

  const std::size_t need = static_cast<std::size_t>(w * h * channels) * 4;
  const std::size_t start = cur.pos();
  if (bytes.size() - start < need) {
    throw PfmError("truncated raster: need " + std::to_string(need) + " bytes, have " +
                       std::to_string(bytes.size() - start),
                   bytes.size());
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + start);

  Tensor out(channels == 1 ? std::vector<Index>{h, w} : std::vector<Index>{3, h, w});
  std::size_t k = 0;
  for (Index r = h - 1; r >= 0; --r) {
    for (Index c = 0; c < w; ++c) {
      for (Index ch = 0; ch < channels; ++ch, k += 4) out.plane(ch)(r, c) = get_float(raw + k, endian);
    }
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void pfm_write(const std::filesystem::path& path, const GridXd& map) { write_file(path, pfm_encode(map)); }
void pfm_write(const std::filesystem::path& path, const Tensor& tensor) { write_file(path, pfm_encode(tensor)); }

Tensor pfm_read(const std::filesystem::path& path) {
  try {
    return pfm_decode(read_file(path));
  } catch (const PfmError& e) {
    throw PfmError(path.string() + ": " + e.detail(), e.offset());
  }
}

GridXd pfm_read_grid(const std::filesystem::path& path) {
  const Tensor t = pfm_read(path);
  if (t.rank() != 2) throw std::runtime_error(path.string() + ": expected a grayscale PFM");
  return t.plane();
}

Mask to_mask(const GridXd& g) { return (g.array() != 0.0).matrix(); }
GridXd from_mask(const Mask& m) { return m.cast<double>(); }

}  // namespace depthforge
