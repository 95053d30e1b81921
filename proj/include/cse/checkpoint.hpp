#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cse/params.hpp"
#include "cse/tensor.hpp"

namespace cse {

/// Flat, versioned container of ordered (name, tensor) records plus string
/// metadata. Values are printed with %.17g so doubles round-trip exactly.
struct NamedTensorFile {
  static constexpr int kVersion = 1;

  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::string>> meta;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  std::string meta_value(const std::string& key, const std::string& fallback = "") const {
    for (const auto& [k, v] : meta) {
      if (k == key) return v;
    }
    return fallback;
  }

  void save(std::ostream& os) const {
    os << "csetensors " << kVersion << "\n";
    for (const auto& [k, v] : meta) os << "meta " << k << " " << v << "\n";
    char buf[32];
    for (const auto& [name, t] : tensors) {
      os << "tensor " << name << " " << t.rank();
      for (int d : t.shape()) os << " " << d;
      os << "\n";
      const auto& vals = t.values();
      for (size_t i = 0; i < vals.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", vals[i]);
        os << (i ? " " : "") << buf;
      }
      os << "\n";
    }
    os << "end\n";
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(os);
  }

  static NamedTensorFile load(std::istream& is) {
    NamedTensorFile out;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: empty stream");
    {
      std::istringstream hdr(line);
      std::string magic;
      int version = 0;
      hdr >> magic >> version;
      if (magic != "csetensors") throw std::runtime_error("checkpoint: bad magic '" + magic + "'");
      if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
      }
    }
    while (std::getline(is, line)) {
      if (line == "end") return out;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "meta") {
        std::string key;
        ls >> key;
        std::string value;
        std::getline(ls, value);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);
        out.meta.emplace_back(key, value);
      } else if (tag == "tensor") {
        std::string name;
        int rank = 0;
        ls >> name >> rank;
        if (!ls || rank < 0) throw std::runtime_error("checkpoint: malformed tensor header: " + line);
        std::vector<int> shape(static_cast<size_t>(rank));
        size_t n = 1;
        for (int i = 0; i < rank; ++i) {
          ls >> shape[static_cast<size_t>(i)];
          n *= static_cast<size_t>(shape[static_cast<size_t>(i)]);
        }
        if (!ls) throw std::runtime_error("checkpoint: malformed shape for tensor " + name);
        std::string data_line;
        if (!std::getline(is, data_line)) throw std::runtime_error("checkpoint: missing data for tensor " + name);
        std::istringstream ds(data_line);
        std::vector<double> vals(n);
        for (size_t i = 0; i < n; ++i) {
          if (!(ds >> vals[i])) throw std::runtime_error("checkpoint: short data for tensor " + name);
        }
        out.tensors.emplace_back(name, Tensor::from(std::move(shape), std::move(vals)));
      } else {
        throw std::runtime_error("checkpoint: unexpected record '" + tag + "'");
      }
    }
    throw std::runtime_error("checkpoint: missing end marker");
  }

  static NamedTensorFile load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load(is);
  }
};

inline NamedTensorFile params_to_file(const ParamSet& ps) {
  NamedTensorFile f;
  f.tensors.reserve(ps.count());
  for (size_t i = 0; i < ps.count(); ++i) f.tensors.emplace_back(ps.name(i), ps.value(i));
  return f;
}

/// Loads parameter values by name; every target entry must be present with an
/// identical shape.
inline void params_from_file(const NamedTensorFile& f, ParamSet& ps) {
  for (size_t i = 0; i < ps.count(); ++i) {
    const Tensor* src = f.find(ps.name(i));
    if (src == nullptr) throw std::runtime_error("checkpoint: missing parameter " + ps.name(i));
    if (!src->same_shape(ps.value(i))) {
      throw std::runtime_error("checkpoint: shape mismatch for " + ps.name(i) + ": file has " +
                               src->shape_str() + ", model expects " + ps.value(i).shape_str());
    }
    ps.value(i) = *src;
  }
}

/// FNV-1a over bytes; used for config echoes and stage stamps.
inline uint64_t fnv1a(const std::string& bytes, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace cse
