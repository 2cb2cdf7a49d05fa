#include "sefoss/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sefoss/errors.hpp"

namespace sefoss {

void Checkpoint::put(const std::string& name, Matrix value) {
  entries_[name] = std::move(value);
}

void Checkpoint::put_scalar(const std::string& name, double value) {
  entries_[name] = Matrix::scalar(value);
}

const Matrix& Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ArtifactError("checkpoint: missing entry '" + name + "'");
  }
  return it->second;
}

double Checkpoint::get_scalar(const std::string& name) const {
  const Matrix& m = get(name);
  if (!m.is_scalar()) {
    throw ArtifactError("checkpoint: entry '" + name + "' is not a scalar");
  }
  return m(0, 0);
}

bool Checkpoint::has(const std::string& name) const {
  return entries_.contains(name);
}

namespace {

constexpr char kMagic[4] = {'S', 'F', 'O', 'S'};

template <typename T>
void write_le(std::ofstream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::ifstream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ArtifactError("cannot write checkpoint: " + file.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, Checkpoint::kFormatVersion);
  for (const auto& [name, matrix] : checkpoint.entries()) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(out, 2u);
    write_le<std::uint64_t>(out, matrix.rows());
    write_le<std::uint64_t>(out, matrix.cols());
    for (double v : matrix.values()) write_le<double>(out, v);
  }
  if (!out) throw ArtifactError("short write on checkpoint: " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ArtifactError("cannot read checkpoint: " + file.string());
  char magic[4];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ArtifactError("not a checkpoint file: " + file.string());
  }
  std::uint32_t version = 0;
  if (!read_le(in, version) || version != Checkpoint::kFormatVersion) {
    throw ArtifactError("checkpoint format version mismatch in " +
                        file.string() + " (got " + std::to_string(version) +
                        ", want " +
                        std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  Checkpoint checkpoint;
  std::uint32_t name_len = 0;
  while (read_le(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw ArtifactError("truncated checkpoint: " + file.string());
    }
    std::uint32_t rank = 0;
    if (!read_le(in, rank) || rank != 2) {
      throw ArtifactError("checkpoint entry '" + name + "': unsupported rank");
    }
    std::uint64_t rows = 0, cols = 0;
    if (!read_le(in, rows) || !read_le(in, cols)) {
      throw ArtifactError("truncated checkpoint: " + file.string());
    }
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (double& v : m.values()) {
      if (!read_le(in, v)) {
        throw ArtifactError("truncated checkpoint: " + file.string());
      }
    }
    checkpoint.put(name, std::move(m));
  }
  return checkpoint;
}

}  // namespace sefoss
