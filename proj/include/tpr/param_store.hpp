#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tpr/tensor.hpp"

namespace tpr {

/// Deterministic parameter initializers. Each parameter draws from an RNG
/// seeded by (store seed, name), so values do not depend on creation order.
struct Init {
  enum Kind { Zero, Const, FanInUniform, DeltaCenter9 } kind = Zero;
  double value = 0.0;  // Const
  int fan_in = 1;      // FanInUniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in))

  static Init zero() { return {Zero, 0.0, 1}; }
  static Init constant(double v) { return {Const, v, 1}; }
  static Init fan_in_uniform(int fi) { return {FanInUniform, 0.0, fi}; }
  /// 9-tap kernel with center tap 1, rest 0 (identity deformable kernel).
  static Init delta_center9() { return {DeltaCenter9, 0.0, 1}; }
};

/// Named trainable tensors. Iteration order is name-sorted, which keeps the
/// optimizer and checkpoints deterministic.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Fetch a parameter, creating it on first use. Shape must match on reuse.
  Tensor& get(const std::string& name, const Shape& shape, const Init& init);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const std::map<std::string, Tensor>& all() const { return params_; }
  size_t size() const { return params_.size(); }
  long total_elements() const;

  void zero_grad();
  double grad_norm() const;
  /// Plain SGD. If max_norm > 0, gradients are globally rescaled to that
  /// norm first.
  void sgd_step(double lr, double max_norm = 0.0);

 private:
  std::uint64_t seed_;
  std::map<std::string, Tensor> params_;
};

/// Central-difference gradient check of a scalar-valued program against the
/// recorded-graph gradients. Checks up to `max_coords` coordinates, randomly
/// subsampled (seeded); returns the max relative error with denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<Tensor()>& f, ParamStore& params,
                         double eps = 1e-5, int max_coords = 64,
                         std::uint64_t seed = 0);

}  // namespace tpr
