#include "tpr/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tpr {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Array draw(const Init& init, long n, std::uint64_t seed) {
  switch (init.kind) {
    case Init::Zero:
      return Array::Zero(n);
    case Init::Const:
      return Array::Constant(n, init.value);
    case Init::FanInUniform: {
      std::mt19937_64 rng(seed);
      const double a = 1.0 / std::sqrt(static_cast<double>(init.fan_in));
      std::uniform_real_distribution<double> dist(-a, a);
      Array v(n);
      for (long i = 0; i < n; ++i) v[i] = dist(rng);
      return v;
    }
    case Init::DeltaCenter9: {
      TPR_CHECK(n == 9, "DeltaCenter9 init requires 9 elements");
      Array v = Array::Zero(9);
      v[4] = 1.0;
      return v;
    }
  }
  return Array::Zero(n);
}

}  // namespace

Tensor& ParamStore::get(const std::string& name, const Shape& shape,
                        const Init& init) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    TPR_CHECK(it->second.shape() == shape,
              "parameter '" + name + "' requested with shape " +
                  detail::format_shape(shape) + " but stored as " +
                  detail::format_shape(it->second.shape()));
    return it->second;
  }
  Tensor t = make_leaf(shape, draw(init, numel_of(shape), mix_seed(seed_, name)),
                       /*requires_grad=*/true);
  auto res = params_.emplace(name, std::move(t));
  return res.first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  TPR_CHECK(it != params_.end(), "unknown parameter '" + name + "'");
  return it->second;
}

long ParamStore::total_elements() const {
  long n = 0;
  for (const auto& [k, v] : params_) n += v.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [k, v] : params_) v.zero_grad();
}

double ParamStore::grad_norm() const {
  double s = 0;
  for (const auto& [k, v] : params_)
    if (v.has_grad()) s += v.grad().square().sum();
  return std::sqrt(s);
}

void ParamStore::sgd_step(double lr, double max_norm) {
  double factor = 1.0;
  if (max_norm > 0) {
    const double norm = grad_norm();
    if (norm > max_norm) factor = max_norm / norm;
  }
  for (auto& [k, v] : params_) {
    if (!v.has_grad()) continue;
    v.mutable_data() -= (lr * factor) * v.grad();
  }
}

double finite_diff_check(const std::function<Tensor()>& f, ParamStore& params,
                         double eps, int max_coords, std::uint64_t seed) {
  params.zero_grad();
  Tensor loss = f();
  TPR_CHECK(loss.numel() == 1, "finite_diff_check: program must return a scalar");
  loss.backward();

  struct Coord {
    Tensor* t;
    long idx;
    double analytic;
  };
  std::vector<Coord> coords;
  for (auto& [name, t] : const_cast<std::map<std::string, Tensor>&>(params.all())) {
    const bool has = t.has_grad();
    for (long i = 0; i < t.numel(); ++i)
      coords.push_back({const_cast<Tensor*>(&t), i, has ? t.grad()[i] : 0.0});
  }
  if (static_cast<int>(coords.size()) > max_coords) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<size_t>(max_coords));
  }

  double max_rel = 0;
  NoGradGuard ng;
  for (const Coord& c : coords) {
    Array& data = c.t->mutable_data();
    const double saved = data[c.idx];
    data[c.idx] = saved + eps;
    const double fp = f().item();
    data[c.idx] = saved - eps;
    const double fm = f().item();
    data[c.idx] = saved;
    const double numeric = (fp - fm) / (2 * eps);
    const double denom = std::max({std::abs(c.analytic), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(c.analytic - numeric) / denom);
  }
  return max_rel;
}

}  // namespace tpr
