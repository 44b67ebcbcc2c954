// dnf/data.hpp

// Copyright 2026  dnfkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnf/errors.hpp"
#include "dnf/rng.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Labeled embedding vectors.  Values are float32: that is the payload type
// of the binary container, so keeping the store in float32 makes binary
// save -> load round trips bit-equal.  Text mode writes 9 significant
// digits, which round-trips float32 exactly.
struct VectorStore {
  long dim = 0;
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::vector<std::vector<float>> vectors;
  std::map<std::string, long> id_to_row;

  long Size() const { return static_cast<long>(ids.size()); }

  void Add(const std::string &id, const std::string &label,
           const std::vector<float> &values) {
    if (id_to_row.count(id))
      throw DataError("duplicate vector id '" + id + "'");
    if (dim == 0) {
      if (values.empty()) throw DataError("empty vector for id '" + id + "'");
      dim = static_cast<long>(values.size());
    } else if (static_cast<long>(values.size()) != dim) {
      throw DataError("vector for id '" + id + "' has dimension " +
                      std::to_string(values.size()) + ", store has " +
                      std::to_string(dim));
    }
    id_to_row[id] = Size();
    ids.push_back(id);
    labels.push_back(label);
    vectors.push_back(values);
  }

  void AddDouble(const std::string &id, const std::string &label,
                 const std::vector<double> &values) {
    std::vector<float> f(values.begin(), values.end());
    Add(id, label, f);
  }

  long Row(const std::string &id) const {
    auto it = id_to_row.find(id);
    if (it == id_to_row.end())
      throw DataError("unknown vector id '" + id + "'");
    return it->second;
  }

  // Rows (promoted to double) as a tensor; all rows when indices is empty.
  Tensor ToTensor(const std::vector<long> &indices = {}) const {
    const std::vector<long> *idx = &indices;
    std::vector<long> all;
    if (indices.empty()) {
      all.resize(Size());
      for (long i = 0; i < Size(); i++) all[i] = i;
      idx = &all;
    }
    if (idx->empty()) throw UsageError("cannot make a tensor of zero rows");
    Tensor t(static_cast<long>(idx->size()), dim);
    for (size_t i = 0; i < idx->size(); i++) {
      const std::vector<float> &src = vectors[(*idx)[i]];
      for (long j = 0; j < dim; j++)
        t.at(static_cast<long>(i), j) = src[j];
    }
    return t;
  }

  std::vector<std::string> DistinctLabels() const {
    std::vector<std::string> out = labels;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

// ---- text container: one line per vector, "id label v1 ... vD" ----

inline void SaveStoreText(const VectorStore &store, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  char buf[48];
  for (long i = 0; i < store.Size(); i++) {
    out << store.ids[i] << ' ' << store.labels[i];
    for (float x : store.vectors[i]) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(x));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline VectorStore LoadStoreText(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  VectorStore store;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, label;
    if (!(ls >> id >> label))
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected 'id label v1 ... vD'");
    std::vector<float> values;
    double x;
    while (ls >> x) values.push_back(static_cast<float>(x));
    if (!ls.eof())
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": unparseable vector component");
    try {
      store.Add(id, label, values);
    } catch (const DataError &e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

// ---- binary container ----
// magic "DNFVEC01", u32 dim, u64 count, then per record
// u32 id_len, id, u32 label_len, label, dim * f32.  All little-endian.

namespace detail {

inline void PutU32(std::string *out, uint32_t x) {
  for (int i = 0; i < 4; i++) out->push_back(static_cast<char>(x >> (8 * i)));
}
inline void PutU64(std::string *out, uint64_t x) {
  for (int i = 0; i < 8; i++) out->push_back(static_cast<char>(x >> (8 * i)));
}
inline void PutF32(std::string *out, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  PutU32(out, bits);
}

struct ByteReader {
  const std::string &buf;
  size_t pos = 0;
  const std::string &path;

  void Need(size_t n) {
    if (pos + n > buf.size())
      throw DataError(path + ": truncated binary store");
  }
  uint32_t U32() {
    Need(4);
    uint32_t x = 0;
    for (int i = 0; i < 4; i++)
      x |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return x;
  }
  uint64_t U64() {
    Need(8);
    uint64_t x = 0;
    for (int i = 0; i < 8; i++)
      x |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return x;
  }
  float F32() {
    uint32_t bits = U32();
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  }
  std::string Str(uint32_t n) {
    Need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline void SaveStoreBinary(const VectorStore &store,
                            const std::string &path) {
  std::string out = "DNFVEC01";
  detail::PutU32(&out, static_cast<uint32_t>(store.dim));
  detail::PutU64(&out, static_cast<uint64_t>(store.Size()));
  for (long i = 0; i < store.Size(); i++) {
    detail::PutU32(&out, static_cast<uint32_t>(store.ids[i].size()));
    out += store.ids[i];
    detail::PutU32(&out, static_cast<uint32_t>(store.labels[i].size()));
    out += store.labels[i];
    for (float x : store.vectors[i]) detail::PutF32(&out, x);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write to '" + path + "' failed");
}

inline VectorStore LoadStoreBinary(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < 8 || buf.compare(0, 8, "DNFVEC01") != 0)
    throw DataError(path + ": not a DNFVEC01 binary store");
  detail::ByteReader r{buf, 8, path};
  uint32_t dim = r.U32();
  uint64_t count = r.U64();
  VectorStore store;
  for (uint64_t i = 0; i < count; i++) {
    std::string id = r.Str(r.U32());
    std::string label = r.Str(r.U32());
    std::vector<float> values(dim);
    for (uint32_t j = 0; j < dim; j++) values[j] = r.F32();
    store.Add(id, label, values);
  }
  if (r.pos != buf.size())
    throw DataError(path + ": trailing bytes after last record");
  return store;
}

// Loads by extension: ".bin" binary, anything else text.
inline VectorStore LoadStore(const std::string &path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0)
    return LoadStoreBinary(path);
  return LoadStoreText(path);
}

inline void SaveStore(const VectorStore &store, const std::string &path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0)
    SaveStoreBinary(store, path);
  else
    SaveStoreText(store, path);
}

// ---- synthetic generators ----

struct SynthSpec {
  std::string kind = "gmm";  // "gmm" | "warped-speakers"
  long dim = 2;
  long classes = 3;
  long samples_per_class = 1000;
  uint64_t seed = 0;
  // gmm
  double mean_radius = 8.0;
  double sigma = 1.0;
  std::vector<std::vector<double>> means;  // optional explicit means
  // warped-speakers
  long warp_depth = 4;
  double class_mean_scale = 3.0;
  double within_scale_min = 0.3;
  double within_scale_max = 3.0;
};

// Spherical-component GMM; one class per component.  The sidecar reports the
// exact component means and sigma actually used.
inline VectorStore SynthGmm(const SynthSpec &spec,
                            nlohmann::json *sidecar = nullptr) {
  if (spec.dim < 1 || spec.classes < 1 || spec.samples_per_class < 1)
    throw UsageError("synth gmm: dim, classes, samples must be >= 1");
  Rng rng(spec.seed);
  std::vector<std::vector<double>> means = spec.means;
  if (!means.empty()) {
    if (static_cast<long>(means.size()) != spec.classes)
      throw UsageError("synth gmm: means count != classes");
    for (const auto &m : means)
      if (static_cast<long>(m.size()) != spec.dim)
        throw UsageError("synth gmm: mean dimension mismatch");
  } else {
    // Random directions scaled to mean_radius; in 2-D, evenly spaced angles
    // with a seeded offset keep the components well separated.
    means.resize(spec.classes, std::vector<double>(spec.dim, 0.0));
    if (spec.dim == 2) {
      double offset = rng.Uniform() * 2.0 * 3.14159265358979323846;
      for (long k = 0; k < spec.classes; k++) {
        double a = offset + 2.0 * 3.14159265358979323846 * k / spec.classes;
        means[k][0] = spec.mean_radius * std::cos(a);
        means[k][1] = spec.mean_radius * std::sin(a);
      }
    } else {
      for (long k = 0; k < spec.classes; k++) {
        double norm = 0.0;
        for (long j = 0; j < spec.dim; j++) {
          means[k][j] = rng.Normal();
          norm += means[k][j] * means[k][j];
        }
        norm = std::sqrt(norm);
        for (long j = 0; j < spec.dim; j++)
          means[k][j] *= spec.mean_radius / norm;
      }
    }
  }
  VectorStore store;
  char id[64];
  for (long k = 0; k < spec.classes; k++) {
    char label[32];
    std::snprintf(label, sizeof(label), "c%03ld", k);
    for (long i = 0; i < spec.samples_per_class; i++) {
      std::snprintf(id, sizeof(id), "c%03ld_%06ld", k, i);
      std::vector<double> x(spec.dim);
      for (long j = 0; j < spec.dim; j++)
        x[j] = means[k][j] + spec.sigma * rng.Normal();
      store.AddDouble(id, label, x);
    }
  }
  if (sidecar) {
    (*sidecar)["kind"] = "gmm";
    (*sidecar)["dim"] = spec.dim;
    (*sidecar)["classes"] = spec.classes;
    (*sidecar)["samples_per_class"] = spec.samples_per_class;
    (*sidecar)["seed"] = spec.seed;
    (*sidecar)["sigma"] = spec.sigma;
    (*sidecar)["means"] = means;
  }
  return store;
}

namespace detail {

// Random rotation: Gram-Schmidt on a seeded Gaussian matrix.
inline std::vector<std::vector<double>> RandomRotation(long d, Rng *rng) {
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (long i = 0; i < d; i++)
    for (long j = 0; j < d; j++) q[i][j] = rng->Normal();
  for (long i = 0; i < d; i++) {
    for (long k = 0; k < i; k++) {
      double dot = 0.0;
      for (long j = 0; j < d; j++) dot += q[i][j] * q[k][j];
      for (long j = 0; j < d; j++) q[i][j] -= dot * q[k][j];
    }
    double norm = 0.0;
    for (long j = 0; j < d; j++) norm += q[i][j] * q[i][j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw UsageError("degenerate rotation draw");
    for (long j = 0; j < d; j++) q[i][j] /= norm;
  }
  return q;
}

}  // namespace detail

// Heterogeneous speaker-like classes pushed through a fixed invertible
// nonlinear warp.  Per-class scales are log-spaced over
// [within_scale_min, within_scale_max], so within-class variation spans
// their ratio by construction.  Each warp layer is a rotation followed by
// the strictly monotone map u -> a*u + g*tanh(u), a > 0, g > 0.
inline VectorStore SynthWarpedSpeakers(const SynthSpec &spec,
                                       nlohmann::json *sidecar = nullptr) {
  if (spec.dim < 1 || spec.classes < 1 || spec.samples_per_class < 1)
    throw UsageError("synth warped-speakers: dim, classes, samples >= 1");
  if (spec.warp_depth < 0)
    throw UsageError("synth warped-speakers: warp depth must be >= 0");
  Rng rng(spec.seed);

  std::vector<std::vector<double>> class_means(
      spec.classes, std::vector<double>(spec.dim));
  for (auto &m : class_means)
    for (double &x : m) x = spec.class_mean_scale * rng.Normal();

  std::vector<double> class_scale(spec.classes);
  double lmin = std::log(spec.within_scale_min);
  double lmax = std::log(spec.within_scale_max);
  for (long k = 0; k < spec.classes; k++) {
    double u = spec.classes > 1
                   ? static_cast<double>(k) / (spec.classes - 1)
                   : 0.5;
    class_scale[k] = std::exp(lmin + u * (lmax - lmin));
  }
  // Shuffle so scale is not correlated with label order.
  {
    std::vector<long> order(spec.classes);
    for (long k = 0; k < spec.classes; k++) order[k] = k;
    rng.Shuffle(order);
    std::vector<double> shuffled(spec.classes);
    for (long k = 0; k < spec.classes; k++)
      shuffled[k] = class_scale[order[k]];
    class_scale = shuffled;
  }

  struct WarpLayer {
    std::vector<std::vector<double>> rot;  // (d, d), rows orthonormal
    std::vector<double> a;                 // elementwise linear gain
    std::vector<double> g;                 // tanh gain
  };
  std::vector<WarpLayer> warp(spec.warp_depth);
  for (auto &layer : warp) {
    layer.rot = detail::RandomRotation(spec.dim, &rng);
    layer.a.resize(spec.dim);
    layer.g.resize(spec.dim);
    for (long j = 0; j < spec.dim; j++) {
      layer.a[j] = 0.7 + 0.6 * rng.Uniform();
      layer.g[j] = 0.5 + 1.5 * rng.Uniform();
    }
  }

  auto apply_warp = [&](std::vector<double> x) {
    std::vector<double> u(spec.dim);
    for (const WarpLayer &layer : warp) {
      for (long i = 0; i < spec.dim; i++) {
        double acc = 0.0;
        for (long j = 0; j < spec.dim; j++) acc += layer.rot[i][j] * x[j];
        u[i] = acc;
      }
      for (long i = 0; i < spec.dim; i++)
        x[i] = layer.a[i] * u[i] + layer.g[i] * std::tanh(u[i]);
    }
    return x;
  };

  VectorStore store;
  char id[64];
  for (long k = 0; k < spec.classes; k++) {
    char label[32];
    std::snprintf(label, sizeof(label), "spk%04ld", k);
    for (long i = 0; i < spec.samples_per_class; i++) {
      std::snprintf(id, sizeof(id), "spk%04ld_%06ld", k, i);
      std::vector<double> x(spec.dim);
      for (long j = 0; j < spec.dim; j++)
        x[j] = class_means[k][j] + class_scale[k] * rng.Normal();
      store.AddDouble(id, label, apply_warp(x));
    }
  }

  if (sidecar) {
    (*sidecar)["kind"] = "warped-speakers";
    (*sidecar)["dim"] = spec.dim;
    (*sidecar)["classes"] = spec.classes;
    (*sidecar)["samples_per_class"] = spec.samples_per_class;
    (*sidecar)["seed"] = spec.seed;
    (*sidecar)["class_means"] = class_means;
    (*sidecar)["class_scales"] = class_scale;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto &layer : warp) {
      nlohmann::json l;
      l["rotation"] = layer.rot;
      l["a"] = layer.a;
      l["g"] = layer.g;
      layers.push_back(l);
    }
    (*sidecar)["warp_layers"] = layers;
  }
  return store;
}

inline VectorStore Synthesize(const SynthSpec &spec,
                              nlohmann::json *sidecar = nullptr) {
  if (spec.kind == "gmm") return SynthGmm(spec, sidecar);
  if (spec.kind == "warped-speakers")
    return SynthWarpedSpeakers(spec, sidecar);
  throw UsageError("unknown synth kind '" + spec.kind +
                   "' (expected gmm or warped-speakers)");
}

}  // namespace dnf
