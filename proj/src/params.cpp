#include "bonekin/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace bonekin {

ParamEntry& ParameterStore::add(const std::string& name, std::vector<int> shape,
                                bool trainable) {
  if (entries_.count(name)) throw ConfigError("parameter already exists: " + name);
  ParamEntry e;
  e.shape = std::move(shape);
  const size_t n = static_cast<size_t>(Tensor::count(e.shape));
  e.value.assign(n, 0.0);
  e.grad.assign(n, 0.0);
  e.adam_m.assign(n, 0.0);
  e.adam_v.assign(n, 0.0);
  e.trainable = trainable;
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamEntry& ParameterStore::add_uniform(const std::string& name,
                                        std::vector<int> shape, int fan_in,
                                        Rng& rng) {
  ParamEntry& e = add(name, std::move(shape));
  // uniform on [-a, a] has variance a^2/3; a = sqrt(6/fan_in) gives 2/fan_in
  const double a = std::sqrt(6.0 / fan_in);
  for (double& v : e.value) v = uniform(rng, -a, a);
  return e;
}

ParamEntry& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const ParamEntry& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& [name, e] : entries_)
    std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

void ParameterStore::adam_step(double lr, double beta1, double beta2,
                               double eps) {
  for (const auto& [name, e] : entries_) {
    if (!e.trainable) continue;
    for (double g : e.grad)
      if (!std::isfinite(g))
        throw NonFiniteGradientError("adam_step: non-finite gradient in " + name);
  }
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
  for (auto& [name, e] : entries_) {
    if (!e.trainable) continue;
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.adam_m[i] = beta1 * e.adam_m[i] + (1 - beta1) * g;
      e.adam_v[i] = beta2 * e.adam_v[i] + (1 - beta2) * g * g;
      e.value[i] -= lr * (e.adam_m[i] / c1) / (std::sqrt(e.adam_v[i] / c2) + eps);
      e.grad[i] = 0.0;
    }
  }
}

// Checkpoint layout: one JSON manifest line, then for each entry in manifest
// order the value/adam_m/adam_v blobs as little-endian float64.
static void write_blob(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

static void read_blob(std::ifstream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw FormatError("checkpoint: truncated blob section");
}

void ParameterStore::save(const std::string& path,
                          const std::string& config_hash) const {
  nlohmann::json manifest;
  manifest["version"] = "bonekin-ckpt-1";
  manifest["step_count"] = step_count_;
  manifest["config_hash"] = config_hash;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [name, e] : entries_) {
    names.push_back({{"name", name},
                     {"shape", e.shape},
                     {"trainable", e.trainable}});
  }
  manifest["entries"] = names;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
  out << manifest.dump() << "\n";
  for (const auto& [name, e] : entries_) {
    write_blob(out, e.value);
    write_blob(out, e.adam_m);
    write_blob(out, e.adam_v);
  }
}

std::string ParameterStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: missing manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  if (manifest.value("version", "") != "bonekin-ckpt-1")
    throw FormatError("checkpoint: unsupported version");

  entries_.clear();
  step_count_ = manifest.at("step_count").get<int64_t>();
  for (const auto& item : manifest.at("entries")) {
    ParamEntry& e = add(item.at("name").get<std::string>(),
                        item.at("shape").get<std::vector<int>>(),
                        item.at("trainable").get<bool>());
    (void)e;
  }
  for (auto& [name, e] : entries_) {
    read_blob(in, e.value);
    read_blob(in, e.adam_m);
    read_blob(in, e.adam_v);
  }
  return manifest.value("config_hash", "");
}

}  // namespace bonekin
