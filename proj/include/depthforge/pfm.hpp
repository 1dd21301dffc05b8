#pragma once

#include "depthforge/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace depthforge {

/// Malformed or truncated PFM data. `offset` is the byte position where
/// parsing stopped.
class PfmError : public std::runtime_error {
 public:
  PfmError(const std::string& detail, std::size_t offset)
      : std::runtime_error(detail + " at byte " + std::to_string(offset)), detail_(detail), offset_(offset) {}
  std::size_t offset() const { return offset_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

enum class Endian { Little, Big };

/// Portable float map encoding. A rank-2 grid becomes "Pf" (grayscale); a
/// 3 x H x W tensor becomes "PF" with interleaved RGB. Scanlines are stored
/// bottom to top; the scale line is -1 for little endian and 1 for big.
std::string pfm_encode(const GridXd& map, Endian endian = Endian::Little);
std::string pfm_encode(const Tensor& tensor, Endian endian = Endian::Little);

/// Decodes either variant. Returns shape {H, W} for "Pf" and {3, H, W} for
/// "PF", top row first.
Tensor pfm_decode(const std::string& bytes);

void pfm_write(const std::filesystem::path& path, const GridXd& map);
void pfm_write(const std::filesystem::path& path, const Tensor& tensor);
Tensor pfm_read(const std::filesystem::path& path);
GridXd pfm_read_grid(const std::filesystem::path& path);

Mask to_mask(const GridXd& g);
GridXd from_mask(const Mask& m);

/// Whole file as bytes; throws std::runtime_error naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace depthforge
