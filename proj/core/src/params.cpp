#include "pestalk/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pestalk/errors.hpp"

namespace pestalk::nn {

Parameter* ParamStore::add(const std::string& name, Mat init, bool frozen) {
  if (params_.count(name)) throw BadDims("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->grad = Mat::Zero(p->value.rows(), p->value.cols());
  p->frozen = frozen;
  p->snap_f32();
  Parameter* raw = p.get();
  params_[name] = std::move(p);
  order_.push_back(raw);
  return raw;
}

Parameter* ParamStore::find(const std::string& name) {
  const auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second.get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  const auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second.get();
}

std::vector<Parameter*> ParamStore::all() { return order_; }

std::vector<Parameter*> ParamStore::trainable() {
  std::vector<Parameter*> out;
  for (auto* p : order_) {
    if (!p->frozen) out.push_back(p);
  }
  return out;
}

void ParamStore::zero_grads() {
  for (auto* p : order_) p->zero_grad();
}

namespace {
constexpr char kMagic[4] = {'P', 'S', 'T', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  std::uint32_t v = kVersion;
  out.write(reinterpret_cast<const char*>(&v), 4);
  std::uint32_t n = static_cast<std::uint32_t>(params_.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  // map iteration: sorted by name, deterministic
  for (const auto& [name, p] : params_) {
    std::uint32_t len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    std::uint32_t rows = static_cast<std::uint32_t>(p->value.rows());
    std::uint32_t cols = static_cast<std::uint32_t>(p->value.cols());
    std::uint8_t frozen = p->frozen ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(&frozen), 1);
    for (int r = 0; r < p->value.rows(); ++r) {
      for (int c = 0; c < p->value.cols(); ++c) {
        const float f = static_cast<float>(p->value(r, c));
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
    }
  }
  if (!out) throw IoError("short write to " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IncompatibleCheckpoint(path + ": bad magic");
  }
  std::uint32_t v = 0, n = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (v != kVersion) {
    throw IncompatibleCheckpoint(path + ": version " + std::to_string(v) +
                                 ", expected " + std::to_string(kVersion));
  }
  in.read(reinterpret_cast<char*>(&n), 4);
  if (n != params_.size()) {
    throw IncompatibleCheckpoint(path + ": holds " + std::to_string(n) +
                                 " parameters, model has " +
                                 std::to_string(params_.size()));
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t rows = 0, cols = 0;
    std::uint8_t frozen = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    in.read(reinterpret_cast<char*>(&frozen), 1);
    Parameter* p = find(name);
    if (!p) throw IncompatibleCheckpoint(path + ": unknown parameter " + name);
    if (p->value.rows() != static_cast<int>(rows) ||
        p->value.cols() != static_cast<int>(cols)) {
      throw IncompatibleCheckpoint(path + ": shape mismatch for " + name);
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), 4);
        p->value(r, c) = static_cast<double>(f);
      }
    }
    p->frozen = frozen != 0;
    if (!in) throw IncompatibleCheckpoint(path + ": truncated at " + name);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {}

Adam::Adam(ParamStore& store, AdamConfig cfg) : Adam(store.trainable(), cfg) {}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (Parameter* p : params_) {
    if (p->frozen) continue;
    Mat& m = m_.try_emplace(p->name, Mat::Zero(p->value.rows(), p->value.cols()))
                 .first->second;
    Mat& v = v_.try_emplace(p->name, Mat::Zero(p->value.rows(), p->value.cols()))
                 .first->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p->grad;
    v = cfg_.beta2 * v.array().matrix() +
        (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    const Mat mhat = m / bc1;
    const Mat vhat = v / bc2;
    p->value -=
        cfg_.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
    p->snap_f32();
  }
}

}  // namespace pestalk::nn
