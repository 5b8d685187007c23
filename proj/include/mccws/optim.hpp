#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mccws/tape.hpp"
#include "mccws/tensor.hpp"

namespace mccws {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Linear warmup from 0 to base_lr over ceil(warmup_ratio * total_steps)
// steps, then linear decay to 0 at total_steps.
class Schedule {
 public:
  Schedule(double base_lr, std::size_t total_steps, double warmup_ratio = 0.1);

  // Throws std::out_of_range outside [0, total_steps].
  double lr_at(std::size_t step) const;

  std::size_t total_steps() const { return total_steps_; }
  std::size_t warmup_steps() const { return warmup_steps_; }
  double base_lr() const { return base_lr_; }

 private:
  double base_lr_;
  std::size_t total_steps_;
  std::size_t warmup_steps_;
};

// Per-parameter moments; slots follow the order of the parameter list the
// optimizer was created with.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig config = {});

  // One update with learning rate `lr`. Parameters without a gradient are
  // treated as having a zero gradient. Decay is decoupled and skipped for
  // parameters with decay == false.
  void step(const Gradients& grads, double lr);

  const AdamWState& state() const { return state_; }
  // Throws ShapeError when the moments do not match the parameters.
  void set_state(AdamWState state);
  const AdamWConfig& config() const { return config_; }
  std::span<Parameter* const> parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig config_;
  AdamWState state_;
};

}  // namespace mccws
