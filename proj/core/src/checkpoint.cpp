#include "scalemix/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "scalemix/error.hpp"

namespace scalemix {

namespace {

struct Entry {
  std::string name;
  std::uint32_t kind = 0;  // 0 matrix, 1 text
  std::uint64_t rows = 0, cols = 0, offset = 0, size = 0;
};

template <class T>
void put_pod(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get_pod(const std::string& buf, std::size_t& pos) {
  require(pos + sizeof(T) <= buf.size(), ErrorKind::io, "truncated checkpoint");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

}  // namespace

const Matrix& Archive::matrix(const std::string& name) const {
  auto it = matrices.find(name);
  require(it != matrices.end(), ErrorKind::io, "checkpoint lacks block '" + name + "'");
  return it->second;
}

Vector Archive::vector(const std::string& name) const {
  const Matrix& m = matrix(name);
  return Eigen::Map<const Vector>(m.data(), m.size());
}

double Archive::scalar(const std::string& name) const {
  const Matrix& m = matrix(name);
  require(m.size() == 1, ErrorKind::io, "block '" + name + "' is not a scalar");
  return m(0, 0);
}

const std::string& Archive::text(const std::string& name) const {
  auto it = texts.find(name);
  require(it != texts.end(), ErrorKind::io, "checkpoint lacks text block '" + name + "'");
  return it->second;
}

void Archive::save(const std::string& path) const {
  std::vector<Entry> index;
  std::string payload;
  for (const auto& [name, m] : matrices) {
    Entry e{name, 0, static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()), payload.size(),
            static_cast<std::uint64_t>(m.size()) * sizeof(double)};
    payload.append(reinterpret_cast<const char*>(m.data()), e.size);
    index.push_back(e);
  }
  for (const auto& [name, s] : texts) {
    Entry e{name, 1, 0, 0, payload.size(), s.size()};
    payload.append(s);
    index.push_back(e);
  }
  std::string head(magic, 8);
  put_pod(head, version);
  put_pod(head, static_cast<std::uint64_t>(index.size()));
  for (const auto& e : index) {
    put_pod(head, static_cast<std::uint32_t>(e.name.size()));
    head.append(e.name);
    put_pod(head, e.kind);
    put_pod(head, e.rows);
    put_pod(head, e.cols);
    put_pod(head, e.offset);
    put_pod(head, e.size);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::io, "cannot write " + tmp);
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    require(static_cast<bool>(f), ErrorKind::io, "short write to " + tmp);
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::io, "cannot move checkpoint into " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::io, "cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(buf.size() >= 8 && buf.compare(0, 8, magic, 8) == 0, ErrorKind::io, path + " is not a checkpoint");
  std::size_t pos = 8;
  const auto ver = get_pod<std::uint32_t>(buf, pos);
  require(ver == version, ErrorKind::io, "unsupported checkpoint version " + std::to_string(ver));
  const auto n = get_pod<std::uint64_t>(buf, pos);
  std::vector<Entry> index;
  for (std::uint64_t i = 0; i < n; ++i) {
    Entry e;
    const auto len = get_pod<std::uint32_t>(buf, pos);
    require(pos + len <= buf.size(), ErrorKind::io, "truncated checkpoint index");
    e.name = buf.substr(pos, len);
    pos += len;
    e.kind = get_pod<std::uint32_t>(buf, pos);
    e.rows = get_pod<std::uint64_t>(buf, pos);
    e.cols = get_pod<std::uint64_t>(buf, pos);
    e.offset = get_pod<std::uint64_t>(buf, pos);
    e.size = get_pod<std::uint64_t>(buf, pos);
    index.push_back(e);
  }
  const std::size_t base = pos;
  Archive a;
  for (const auto& e : index) {
    require(base + e.offset + e.size <= buf.size(), ErrorKind::io, "truncated checkpoint payload");
    if (e.kind == 0) {
      require(e.size == e.rows * e.cols * sizeof(double), ErrorKind::io, "bad block size for " + e.name);
      Matrix m(static_cast<Eigen::Index>(e.rows), static_cast<Eigen::Index>(e.cols));
      if (e.size) std::memcpy(m.data(), buf.data() + base + e.offset, e.size);
      a.matrices[e.name] = std::move(m);
    } else {
      a.texts[e.name] = buf.substr(base + e.offset, e.size);
    }
  }
  return a;
}

}  // namespace scalemix
