#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "scalemix/types.hpp"

namespace scalemix {

// Named matrices and byte strings. On disk: magic, format version, an index
// of (name, kind, rows, cols, offset, size) entries, then the payload.
struct Archive {
  static constexpr char magic[9] = "SCMXCKPT";
  static constexpr std::uint32_t version = 1;

  std::map<std::string, Matrix> matrices;
  std::map<std::string, std::string> texts;

  void put(const std::string& name, const Matrix& m) { matrices[name] = m; }
  void put(const std::string& name, const Vector& v) { matrices[name] = v; }
  void put_scalar(const std::string& name, double v) { matrices[name] = Matrix::Constant(1, 1, v); }
  void put_text(const std::string& name, const std::string& s) { texts[name] = s; }

  const Matrix& matrix(const std::string& name) const;
  Vector vector(const std::string& name) const;
  double scalar(const std::string& name) const;
  const std::string& text(const std::string& name) const;
  bool has(const std::string& name) const { return matrices.count(name) || texts.count(name); }

  void save(const std::string& path) const;  // writes a sibling temp file, then renames
  static Archive load(const std::string& path);
};

}  // namespace scalemix
