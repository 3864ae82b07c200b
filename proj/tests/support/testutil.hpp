#pragma once

// Shared helpers for the test suites. The numeric differentiation here is
// written against the forward path only, so it stays an independent oracle
// for the tape's backward rules.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fieldex/rng.hpp"
#include "fieldex/tensor.hpp"

namespace testutil {

// Central finite difference d(loss)/d(param[i]) with loss re-evaluated from
// scratch at each probe point.
template <typename T, typename LossFn>
T numeric_gradient(LossFn&& loss, const fieldex::Tensor<T>& param, size_t i, T step) {
  T& slot = param.values()[i];
  const T saved = slot;
  slot = saved + step;
  const T up = loss();
  slot = saved - step;
  const T down = loss();
  slot = saved;
  return (up - down) / (2 * step);
}

template <typename T>
double rel_err(T analytic, T numeric) {
  const double a = static_cast<double>(analytic);
  const double n = static_cast<double>(numeric);
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

// Worst relative error between accumulated analytic gradients and numeric
// gradients over every element of every listed tensor.
template <typename T, typename LossFn>
double max_grad_rel_err(LossFn&& loss, const std::vector<fieldex::Tensor<T>>& params, T step) {
  double worst = 0.0;
  for (const auto& p : params) {
    for (size_t i = 0; i < p.size(); ++i) {
      const T num = numeric_gradient(loss, p, i, step);
      worst = std::max(worst, rel_err(p.grad()[i], num));
    }
  }
  return worst;
}

template <typename T>
fieldex::Tensor<T> random_tensor(fieldex::Rng& rng, fieldex::Shape shape, double lo, double hi,
                                 bool requires_grad = true) {
  auto t = fieldex::Tensor<T>::zeros(std::move(shape), requires_grad);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Scratch directory unique to one test binary run.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("fieldex_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  std::string path(const std::string& name) const { return (base_ / name).string(); }

 private:
  std::filesystem::path base_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
