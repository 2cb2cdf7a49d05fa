#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "sefoss/matrix.hpp"

namespace sefoss {

// Named-matrix container behind the binary checkpoint format:
//   magic "SFOS", format version u32, then per entry:
//   name length u32, name bytes, rank u32 (always 2), dims u64 x rank,
//   raw little-endian float64 payload.
// Model parameters are stored under "param.", the EMA shadow under "ema.",
// optimizer velocities under "opt." and scalar bookkeeping under "meta.".
class Checkpoint {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  void put(const std::string& name, Matrix value);
  void put_scalar(const std::string& name, double value);
  const Matrix& get(const std::string& name) const;  // ArtifactError if absent
  double get_scalar(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::map<std::string, Matrix>& entries() const { return entries_; }

 private:
  std::map<std::string, Matrix> entries_;
};

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace sefoss
