#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pestalk/mat.hpp"

namespace pestalk::nn {

// A named trainable matrix. Values are kept exactly float32-representable
// (snapped after init and after every optimizer step) so the float32
// checkpoint format round-trips bit-exactly.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool frozen = false;

  void zero_grad() { grad.setZero(); }
  void snap_f32() {
    for (int i = 0; i < value.size(); ++i) {
      value.data()[i] = static_cast<double>(static_cast<float>(value.data()[i]));
    }
  }
};

// Registry of parameters keyed by dotted names ("emotion.proj.w", ...).
// Pointers stay stable for the lifetime of the store.
class ParamStore {
public:
  Parameter* add(const std::string& name, Mat init, bool frozen = false);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<Parameter*> trainable();
  void zero_grads();

  // Binary archive of float32 arrays plus a JSON sidecar (written by the
  // caller) describing hyperparameters. Load requires the exact same set of
  // names and shapes.
  void save(const std::string& path) const;
  void load(const std::string& path);

  std::size_t count() const { return order_.size(); }

private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
  std::vector<Parameter*> order_;  // registration order
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over an explicit parameter set (frozen ones are skipped at each
// step). Moment buffers are keyed by parameter name.
class Adam {
public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  Adam(ParamStore& store, AdamConfig cfg);  // snapshots store.trainable()
  void step();
  int steps_taken() const { return t_; }

private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  int t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

}  // namespace pestalk::nn
