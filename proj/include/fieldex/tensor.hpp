#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a value buffer plus an optional gradient
// buffer of the same length. Operations go through a Tape, which records one
// backward rule per op; Tape::backward replays them in reverse order.
// Gradients accumulate additively, so a tensor used on two paths receives
// the sum of both path gradients. A tape is consumed by backward() exactly
// once; calling it again is an error.
//
// Training instantiates everything with float; gradient-check code uses the
// same templates with double. Reductions run in a fixed sequential order, so
// runs with identical seed and data reproduce exactly.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fieldex/error.hpp"

namespace fieldex {

using Shape = std::vector<int>;

inline size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative extent in tensor shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  if (s.empty()) return "[scalar]";
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->shape = std::move(shape);
    t.n_->value.assign(shape_size(t.n_->shape), T(0));
    if (requires_grad) {
      t.n_->requires_grad = true;
      t.n_->grad.assign(t.n_->value.size(), T(0));
    }
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != shape_size(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    Tensor t = zeros(std::move(shape), requires_grad);
    t.n_->value = std::move(values);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return node().shape; }
  int rank() const { return static_cast<int>(node().shape.size()); }
  int dim(int i) const { return node().shape.at(static_cast<size_t>(i)); }
  size_t size() const { return node().value.size(); }
  bool requires_grad() const { return node().requires_grad; }

  // Shared-handle semantics: a const Tensor& names the same storage, it does
  // not make the storage immutable.
  std::vector<T>& values() const { return node().value; }

  std::vector<T>& grad() const {
    TensorNode<T>& n = node();
    if (!n.requires_grad) throw InvariantError("tensor does not track gradients");
    return n.grad;
  }

  void zero_grad() const {
    auto& g = grad();
    std::fill(g.begin(), g.end(), T(0));
  }

  T item() const {
    if (size() != 1) throw ShapeError("item(): tensor is not scalar: " + shape_str(shape()));
    return node().value[0];
  }

  T at(int i) const {
    if (rank() != 1) throw ShapeError("at(i): tensor is not rank-1: " + shape_str(shape()));
    return node().value.at(static_cast<size_t>(i));
  }

  T at(int i, int j) const {
    if (rank() != 2) throw ShapeError("at(i,j): tensor is not rank-2: " + shape_str(shape()));
    return node().value.at(static_cast<size_t>(i) * static_cast<size_t>(dim(1)) + static_cast<size_t>(j));
  }

  bool same_node(const Tensor& other) const { return n_ == other.n_; }

 private:
  std::shared_ptr<TensorNode<T>> n_;

  TensorNode<T>& node() const {
    if (!n_) throw InvariantError("use of undefined tensor");
    return *n_;
  }
};

// First position holding the maximum value; ties resolve to the lowest index.
template <typename T>
int argmax(const std::vector<T>& v) {
  if (v.empty()) throw InvariantError("argmax of empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  size_t ops() const { return back_.size(); }

  // Matrix product. Accepts [m x k]·[k x n] -> [m x n]; a rank-1 left operand
  // acts as a row, a rank-1 right operand as a column.
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_rank_le2(a, "matmul");
    check_rank_le2(b, "matmul");
    const int m = a.rank() == 2 ? a.dim(0) : 1;
    const int ka = a.rank() == 2 ? a.dim(1) : a.dim(0);
    const int kb = b.rank() == 2 ? b.dim(0) : b.dim(0);
    const int n = b.rank() == 2 ? b.dim(1) : 1;
    if (ka != kb) {
      throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
    Shape out_shape;
    if (a.rank() == 2 && b.rank() == 2) {
      out_shape = {m, n};
    } else if (a.rank() == 2) {
      out_shape = {m};
    } else if (b.rank() == 2) {
      out_shape = {n};
    }
    const bool track = track2(a, b);
    Tensor<T> out = Tensor<T>::zeros(std::move(out_shape), track);
    {
      ConstMap A(a.values().data(), m, ka);
      ConstMap B(b.values().data(), ka, n);
      Map C(out.values().data(), m, n);
      C.noalias() = A * B;
    }
    if (track) {
      const int k = ka;
      back_.push_back([a, b, out, m, k, n] {
        ConstMap dC(out.grad().data(), m, n);
        if (a.requires_grad()) {
          Map dA(a.grad().data(), m, k);
          ConstMap B(b.values().data(), k, n);
          dA.noalias() += dC * B.transpose();
        }
        if (b.requires_grad()) {
          Map dB(b.grad().data(), k, n);
          ConstMap A(a.values().data(), m, k);
          dB.noalias() += A.transpose() * dC;
        }
      });
    }
    return out;
  }

  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    const bool track = track2(a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape(), track);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (track) {
      back_.push_back([a, b, out] {
        const auto& g = out.grad();
        if (a.requires_grad()) {
          auto& ga = a.grad();
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
      });
    }
    return out;
  }

  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    const bool track = track2(a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape(), track);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (track) {
      back_.push_back([a, b, out] {
        const auto& g = out.grad();
        if (a.requires_grad()) {
          auto& ga = a.grad();
          const auto& bv2 = b.values();
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          const auto& av2 = a.values();
          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
      });
    }
    return out;
  }

  Tensor<T> tanh(const Tensor<T>& x) {
    const bool track = track1(x);
    Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
    if (track) {
      back_.push_back([x, out] {
        if (!x.requires_grad()) return;
        const auto& g = out.grad();
        const auto& y = out.values();
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
      });
    }
    return out;
  }

  Tensor<T> sigmoid(const Tensor<T>& x) {
    const bool track = track1(x);
    Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = T(1) / (T(1) + std::exp(-xv[i]));
    if (track) {
      back_.push_back([x, out] {
        if (!x.requires_grad()) return;
        const auto& g = out.grad();
        const auto& y = out.values();
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
      });
    }
    return out;
  }

  // Stabilized softmax over a rank-1 tensor. `attendable`, when given, marks
  // the positions allowed to receive mass (the boolean mask); excluded
  // positions come out exactly 0.
  Tensor<T> softmax(const Tensor<T>& x, const std::vector<uint8_t>* attendable = nullptr) {
    if (x.rank() != 1) throw ShapeError("softmax: expected rank-1 input, got " + shape_str(x.shape()));
    const size_t n = x.size();
    if (n == 0) throw ShapeError("softmax: empty input");
    if (attendable && attendable->size() != n) {
      throw ShapeError("softmax: mask length " + std::to_string(attendable->size()) +
                       " does not match input length " + std::to_string(n));
    }
    const auto& xv = x.values();
    T mx = -std::numeric_limits<T>::infinity();
    size_t live = 0;
    for (size_t i = 0; i < n; ++i) {
      if (attendable && !(*attendable)[i]) continue;
      ++live;
      mx = std::max(mx, xv[i]);
    }
    if (live == 0) throw InvariantError("softmax: all positions masked");
    const bool track = track1(x);
    Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
    auto& ov = out.values();
    T sum = T(0);
    for (size_t i = 0; i < n; ++i) {
      if (attendable && !(*attendable)[i]) {
        ov[i] = T(0);
      } else {
        ov[i] = std::exp(xv[i] - mx);
        sum += ov[i];
      }
    }
    for (size_t i = 0; i < n; ++i) ov[i] /= sum;
    if (track) {
      back_.push_back([x, out] {
        if (!x.requires_grad()) return;
        const auto& g = out.grad();
        const auto& y = out.values();
        T dot = T(0);
        for (size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - dot);
      });
    }
    return out;
  }

  // Negative log likelihood of one index of a probability vector, floored so
  // a zero-mass target stays finite: -log(pred[target] + kCrossEntropyFloor).
  // The floor makes a perfectly confident prediction come out at -log(1+eps),
  // marginally below zero.
  static constexpr T kCrossEntropyFloor = T(1e-9);

  Tensor<T> cross_entropy(const Tensor<T>& pred, int target_index) {
    if (pred.rank() != 1) {
      throw ShapeError("cross_entropy: expected rank-1 distribution, got " + shape_str(pred.shape()));
    }
    if (target_index < 0 || static_cast<size_t>(target_index) >= pred.size()) {
      throw InvariantError("cross_entropy: target index " + std::to_string(target_index) +
                           " out of range [0, " + std::to_string(pred.size()) + ")");
    }
    const bool track = track1(pred);
    const T p = pred.values()[static_cast<size_t>(target_index)];
    Tensor<T> out = Tensor<T>::from({}, {-std::log(p + kCrossEntropyFloor)}, track);
    if (track) {
      back_.push_back([pred, out, target_index] {
        if (!pred.requires_grad()) return;
        const T pv = pred.values()[static_cast<size_t>(target_index)];
        pred.grad()[static_cast<size_t>(target_index)] -=
            out.grad()[0] / (pv + kCrossEntropyFloor);
      });
    }
    return out;
  }

  Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    size_t total = 0;
    bool track = false;
    for (const auto& p : parts) {
      if (p.rank() != 1) throw ShapeError("concat: expected rank-1 parts, got " + shape_str(p.shape()));
      total += p.size();
      track = track || p.requires_grad();
    }
    track = track && recording_;
    Tensor<T> out = Tensor<T>::zeros({static_cast<int>(total)}, track);
    auto& ov = out.values();
    size_t off = 0;
    for (const auto& p : parts) {
      const auto& pv = p.values();
      std::copy(pv.begin(), pv.end(), ov.begin() + static_cast<std::ptrdiff_t>(off));
      off += pv.size();
    }
    if (track) {
      back_.push_back([parts, out] {
        const auto& g = out.grad();
        size_t off2 = 0;
        for (const auto& p : parts) {
          if (p.requires_grad()) {
            auto& gp = p.grad();
            for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[off2 + i];
          }
          off2 += p.size();
        }
      });
    }
    return out;
  }

  // Stack rank-1 tensors of equal length into an [n x d] matrix.
  Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    if (rows.front().rank() != 1) throw ShapeError("stack_rows: expected rank-1 rows");
    const int d = rows.front().dim(0);
    bool track = false;
    for (const auto& r : rows) {
      if (r.rank() != 1 || r.dim(0) != d) {
        throw ShapeError("stack_rows: row shape " + shape_str(r.shape()) + " does not match [" +
                         std::to_string(d) + "]");
      }
      track = track || r.requires_grad();
    }
    track = track && recording_;
    Tensor<T> out = Tensor<T>::zeros({static_cast<int>(rows.size()), d}, track);
    auto& ov = out.values();
    for (size_t i = 0; i < rows.size(); ++i) {
      const auto& rv = rows[i].values();
      std::copy(rv.begin(), rv.end(), ov.begin() + static_cast<std::ptrdiff_t>(i * static_cast<size_t>(d)));
    }
    if (track) {
      back_.push_back([rows, out, d] {
        const auto& g = out.grad();
        for (size_t i = 0; i < rows.size(); ++i) {
          if (!rows[i].requires_grad()) continue;
          auto& gr = rows[i].grad();
          const size_t off = i * static_cast<size_t>(d);
          for (size_t j = 0; j < gr.size(); ++j) gr[j] += g[off + j];
        }
      });
    }
    return out;
  }

  // Broadcast-add a rank-1 tensor to every row of a matrix.
  Tensor<T> add_rows(const Tensor<T>& m, const Tensor<T>& r) {
    if (m.rank() != 2 || r.rank() != 1 || m.dim(1) != r.dim(0)) {
      throw ShapeError("add_rows: incompatible shapes " + shape_str(m.shape()) + " and " +
                       shape_str(r.shape()));
    }
    const int rows = m.dim(0), cols = m.dim(1);
    const bool track = track2(m, r);
    Tensor<T> out = Tensor<T>::zeros(m.shape(), track);
    const auto& mv = m.values();
    const auto& rv = r.values();
    auto& ov = out.values();
    for (int i = 0; i < rows; ++i) {
      const size_t off = static_cast<size_t>(i) * static_cast<size_t>(cols);
      for (int j = 0; j < cols; ++j) ov[off + static_cast<size_t>(j)] = mv[off + static_cast<size_t>(j)] + rv[static_cast<size_t>(j)];
    }
    if (track) {
      back_.push_back([m, r, out, rows, cols] {
        const auto& g = out.grad();
        if (m.requires_grad()) {
          auto& gm = m.grad();
          for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (r.requires_grad()) {
          auto& gr = r.grad();
          for (int i = 0; i < rows; ++i) {
            const size_t off = static_cast<size_t>(i) * static_cast<size_t>(cols);
            for (int j = 0; j < cols; ++j) gr[static_cast<size_t>(j)] += g[off + static_cast<size_t>(j)];
          }
        }
      });
    }
    return out;
  }

  // Gather one row of an embedding table; backward scatter-adds into it.
  Tensor<T> embedding_lookup(const Tensor<T>& table, int index) {
    if (table.rank() != 2) {
      throw ShapeError("embedding_lookup: table must be rank-2, got " + shape_str(table.shape()));
    }
    if (index < 0 || index >= table.dim(0)) {
      throw InvariantError("embedding_lookup: row " + std::to_string(index) + " out of range [0, " +
                           std::to_string(table.dim(0)) + ")");
    }
    const int d = table.dim(1);
    const bool track = track1(table);
    Tensor<T> out = Tensor<T>::zeros({d}, track);
    const size_t off = static_cast<size_t>(index) * static_cast<size_t>(d);
    const auto& tv = table.values();
    std::copy(tv.begin() + static_cast<std::ptrdiff_t>(off),
              tv.begin() + static_cast<std::ptrdiff_t>(off + static_cast<size_t>(d)),
              out.values().begin());
    if (track) {
      back_.push_back([table, out, off] {
        if (!table.requires_grad()) return;
        const auto& g = out.grad();
        auto& gt = table.grad();
        for (size_t j = 0; j < g.size(); ++j) gt[off + j] += g[j];
      });
    }
    return out;
  }

  // Accumulate position weights into a distribution over word types:
  // out[token_ids[i]] += weights[i]. This is the weighted sum of one-hot
  // input vectors, so with softmax weights the output is itself a
  // probability distribution supported on the input's word types.
  Tensor<T> weighted_sum(const Tensor<T>& weights, const std::vector<int>& token_ids, int vocab_size) {
    if (weights.rank() != 1) {
      throw ShapeError("weighted_sum: weights must be rank-1, got " + shape_str(weights.shape()));
    }
    if (weights.size() != token_ids.size()) {
      throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights vs " +
                       std::to_string(token_ids.size()) + " token ids");
    }
    for (int id : token_ids) {
      if (id < 0 || id >= vocab_size) {
        throw InvariantError("weighted_sum: token id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(vocab_size) + ")");
      }
    }
    const bool track = track1(weights);
    Tensor<T> out = Tensor<T>::zeros({vocab_size}, track);
    const auto& wv = weights.values();
    auto& ov = out.values();
    for (size_t i = 0; i < wv.size(); ++i) ov[static_cast<size_t>(token_ids[i])] += wv[i];
    if (track) {
      back_.push_back([weights, out, token_ids] {
        if (!weights.requires_grad()) return;
        const auto& g = out.grad();
        auto& gw = weights.grad();
        for (size_t i = 0; i < gw.size(); ++i) gw[i] += g[static_cast<size_t>(token_ids[i])];
      });
    }
    return out;
  }

  Tensor<T> scale(const Tensor<T>& x, T c) {
    const bool track = track1(x);
    Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = c * xv[i];
    if (track) {
      back_.push_back([x, out, c] {
        if (!x.requires_grad()) return;
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
      });
    }
    return out;
  }

  Tensor<T> sum(const Tensor<T>& x) {
    const bool track = track1(x);
    T s = T(0);
    for (T v : x.values()) s += v;
    Tensor<T> out = Tensor<T>::from({}, {s}, track);
    if (track) {
      back_.push_back([x, out] {
        if (!x.requires_grad()) return;
        const T g = out.grad()[0];
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
      });
    }
    return out;
  }

  // Seed d(loss)/d(loss) = 1 and replay all recorded rules in reverse.
  void backward(const Tensor<T>& loss) {
    if (!recording_) throw InvariantError("backward: tape is not recording");
    if (used_) throw InvariantError("backward: tape already consumed; build a new tape per step");
    if (loss.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw InvariantError("backward: loss does not depend on any gradient-tracking tensor");
    }
    used_ = true;
    loss.grad()[0] += T(1);
    for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)();
  }

 private:
  using EMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<EMatrix>;
  using ConstMap = Eigen::Map<const EMatrix>;

  static void check_rank_le2(const Tensor<T>& t, const char* op) {
    if (t.rank() < 1 || t.rank() > 2) {
      throw ShapeError(std::string(op) + ": expected rank-1 or rank-2 operand, got " +
                       shape_str(t.shape()));
    }
  }

  static void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
      throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
  }

  bool track1(const Tensor<T>& x) const { return recording_ && x.requires_grad(); }
  bool track2(const Tensor<T>& a, const Tensor<T>& b) const {
    return recording_ && (a.requires_grad() || b.requires_grad());
  }

  std::vector<std::function<void()>> back_;
  bool recording_;
  bool used_ = false;
};

// Ordered, named collection of trainable tensors. The registration order is
// the checkpoint manifest order and the optimizer slot order, so it must be
// deterministic.
template <typename T>
class ParameterStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw InvariantError("duplicate parameter name: " + name);
    if (!t.requires_grad()) throw InvariantError("parameter '" + name + "' must track gradients");
    index_.emplace(name, items_.size());
    items_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvariantError("unknown parameter: " + name);
    return items_[it->second].second;
  }

  size_t size() const { return items_.size(); }

  size_t total_values() const {
    size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

  void zero_grads() const {
    for (const auto& [name, t] : items_) t.zero_grad();
  }

  void scale_grads(T s) const {
    for (const auto& [name, t] : items_) {
      for (T& g : t.grad()) g *= s;
    }
  }

  double grad_norm() const {
    double sq = 0;
    for (const auto& [name, t] : items_) {
      for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
  }

  // Name of the first parameter holding a non-finite gradient, if any.
  const std::string* first_nonfinite_grad() const {
    for (const auto& [name, t] : items_) {
      for (T g : t.grad()) {
        if (!std::isfinite(static_cast<double>(g))) return &items_[index_.at(name)].first;
      }
    }
    return nullptr;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace fieldex
