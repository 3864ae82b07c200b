#pragma once

// Optimizer and training loop shared by both models: Adam with bias
// correction, gradient-norm clipping, shuffled mini-batches via gradient
// accumulation (batch loss is the mean of per-record losses), periodic
// validation, best-checkpoint tracking, and patience-based early stopping.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fieldex/corpus.hpp"
#include "fieldex/error.hpp"
#include "fieldex/eval.hpp"
#include "fieldex/pointer_model.hpp"
#include "fieldex/rng.hpp"
#include "fieldex/tagger.hpp"
#include "fieldex/tensor.hpp"

namespace fieldex {

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam. Moments are kept in double regardless of the
// parameter precision; gradients are zeroed after each applied step.
template <typename T>
class Adam {
 public:
  explicit Adam(const ParameterStore<T>& store, AdamConfig cfg = {}) : store_(store), cfg_(cfg) {
    for (const auto& [name, t] : store_.items()) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  long steps() const { return t_; }

  void step() {
    if (const std::string* bad = store_.first_nonfinite_grad()) {
      throw InvariantError("adam: non-finite gradient in parameter \"" + *bad + "\"");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t p = 0; p < store_.size(); ++p) {
      const Tensor<T>& t = store_.items()[p].second;
      std::vector<T>& value = t.values();
      std::vector<T>& grad = t.grad();
      std::vector<double>& m = m_[p];
      std::vector<double>& v = v_[p];
      for (size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        value[i] -= static_cast<T>(cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
      }
    }
    store_.zero_grads();
  }

 private:
  ParameterStore<T> store_;  // shares the model's tensor nodes
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scale gradients down to a global L2 norm of max_norm when they exceed it;
// returns the pre-clip norm.
template <typename T>
double clip_gradients(const ParameterStore<T>& store, double max_norm) {
  const double norm = store.grad_norm();
  if (norm > max_norm && norm > 0.0) store.scale_grads(static_cast<T>(max_norm / norm));
  return norm;
}

inline constexpr double kGradClipNorm = 5.0;

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  long max_updates = 20000;
  int patience = 8;         // evaluations without improvement before stopping
  long eval_every = 250;    // updates between validation passes
  double val_fraction = 0.1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw FormatError("train config: learning_rate must be > 0");
    if (batch_size < 1) throw FormatError("train config: batch_size must be >= 1");
    if (max_updates < 1) throw FormatError("train config: max_updates must be >= 1");
    if (patience < 1) throw FormatError("train config: patience must be >= 1");
    if (eval_every < 1) throw FormatError("train config: eval_every must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
      throw FormatError("train config: val_fraction must lie in (0, 1)");
    }
  }
};

inline ordered_json train_config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["max_updates"] = c.max_updates;
  j["patience"] = c.patience;
  j["eval_every"] = c.eval_every;
  j["val_fraction"] = c.val_fraction;
  return j;
}

inline TrainConfig train_config_from_json(const ordered_json& j, const std::string& source_name) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "max_updates") c.max_updates = value.get<long>();
    else if (key == "patience") c.patience = value.get<int>();
    else if (key == "eval_every") c.eval_every = value.get<long>();
    else if (key == "val_fraction") c.val_fraction = value.get<double>();
    else throw FormatError(source_name + ": unknown train config key \"" + key + "\"");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Validation split

struct SplitIndices {
  std::vector<size_t> train;
  std::vector<size_t> val;
};

// Deterministic shuffled split; both sides are returned in ascending index
// order and are disjoint by construction. At least one record lands on each
// side.
inline SplitIndices split_train_val(size_t n, double fraction, Rng& rng) {
  if (n < 2) throw InvariantError("split_train_val: need at least 2 records");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvariantError("split_train_val: fraction must lie in (0, 1)");
  }
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t{0});
  rng.shuffle(perm.begin(), perm.end());
  size_t n_val = static_cast<size_t>(std::llround(static_cast<double>(n) * fraction));
  n_val = std::max<size_t>(1, std::min(n_val, n - 1));
  SplitIndices out;
  out.val.assign(perm.begin(), perm.begin() + static_cast<long>(n_val));
  out.train.assign(perm.begin() + static_cast<long>(n_val), perm.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

// ---------------------------------------------------------------------------
// Parameter snapshots

template <typename T>
std::vector<std::vector<T>> snapshot_params(const ParameterStore<T>& store) {
  std::vector<std::vector<T>> snap;
  snap.reserve(store.size());
  for (const auto& [name, t] : store.items()) snap.push_back(t.values());
  return snap;
}

template <typename T>
void restore_params(const ParameterStore<T>& store, const std::vector<std::vector<T>>& snap) {
  if (snap.size() != store.size()) {
    throw InvariantError("restore_params: snapshot does not match the parameter store");
  }
  for (size_t i = 0; i < snap.size(); ++i) {
    const Tensor<T>& t = store.items()[i].second;
    if (snap[i].size() != t.size()) {
      throw InvariantError("restore_params: size mismatch for parameter \"" +
                           store.items()[i].first + "\"");
    }
    t.values() = snap[i];
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct LogRow {
  long update = 0;
  double loss = 0.0;        // mean batch loss since the previous evaluation
  double val_metric = 0.0;
  double wall_time = 0.0;   // seconds since training started
};

struct TrainResult {
  std::vector<LogRow> log;
  double best_metric = 0.0;
  long best_update = 0;
  double final_metric = 0.0;  // metric of the last evaluation before restoring best
  long total_updates = 0;
  bool aborted = false;
  std::string abort_reason;
};

inline constexpr const char* kLogHeader = "update\tloss\tval_metric\twall_time";

inline void write_log_row(std::ostream& out, const LogRow& row) {
  out << row.update << '\t' << std::setprecision(6) << std::fixed << row.loss << '\t'
      << row.val_metric << '\t' << std::setprecision(3) << row.wall_time << '\n'
      << std::defaultfloat << std::setprecision(6);
  out.flush();
}

// Generic loop: record_loss(index) runs forward + backward for one training
// record and returns its loss (gradients accumulate across the batch);
// evaluate() scores the current parameters on the validation set (higher is
// better). The store finishes holding the best-validation parameters. When
// max_updates ends before the first scheduled evaluation, one evaluation
// still runs so a checkpoint is always metric-bearing.
template <typename T, typename RecordLoss, typename EvalFn>
TrainResult run_training(const ParameterStore<T>& store, const TrainConfig& cfg, size_t n_train,
                         RecordLoss&& record_loss, EvalFn&& evaluate, Rng& shuffle_rng,
                         std::ostream* log_stream = nullptr) {
  cfg.validate();
  if (n_train == 0) throw InvariantError("run_training: empty training set");
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  if (log_stream) *log_stream << kLogHeader << '\n';

  TrainResult result;
  result.best_metric = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<T>> best = snapshot_params(store);  // last-good fallback

  Adam<T> opt(store, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<size_t> order(n_train);
  std::iota(order.begin(), order.end(), size_t{0});
  size_t pos = n_train;  // forces a shuffle before the first batch

  double loss_accum = 0.0;
  long batches_accum = 0;
  int stalls = 0;

  const auto do_eval = [&](long update) {
    const double metric = evaluate();
    LogRow row;
    row.update = update;
    row.loss = batches_accum > 0 ? loss_accum / static_cast<double>(batches_accum) : 0.0;
    row.val_metric = metric;
    row.wall_time = elapsed();
    result.log.push_back(row);
    if (log_stream) write_log_row(*log_stream, row);
    loss_accum = 0.0;
    batches_accum = 0;
    result.final_metric = metric;
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_update = update;
      best = snapshot_params(store);
      stalls = 0;
      return true;
    }
    ++stalls;
    return stalls < cfg.patience;
  };

  for (long update = 1; update <= cfg.max_updates; ++update) {
    if (pos >= n_train) {
      shuffle_rng.shuffle(order.begin(), order.end());
      pos = 0;
    }
    const size_t take = std::min(static_cast<size_t>(cfg.batch_size), n_train - pos);
    double batch_loss = 0.0;
    for (size_t b = 0; b < take; ++b) batch_loss += record_loss(order[pos + b]);
    pos += take;
    batch_loss /= static_cast<double>(take);
    result.total_updates = update;
    if (!std::isfinite(batch_loss)) {
      result.aborted = true;
      result.abort_reason = "non-finite training loss at update " + std::to_string(update);
      break;
    }
    store.scale_grads(T(1) / static_cast<T>(take));
    clip_gradients(store, kGradClipNorm);
    opt.step();
    loss_accum += batch_loss;
    ++batches_accum;
    if (update % cfg.eval_every == 0 && !do_eval(update)) break;
  }

  if (result.log.empty() && !result.aborted) do_eval(result.total_updates);
  restore_params(store, best);
  return result;
}

// ---------------------------------------------------------------------------
// Model-specific drivers

// Decode every record and score exact-match micro F1 against the gold field
// values.
template <typename T>
double pointer_val_metric(const PointerModel<T>& m, const std::vector<PreparedRecord>& prepared,
                          const std::vector<E2ERecord>& gold, const Vocabulary& vocab,
                          const FieldSchema& schema) {
  std::vector<FieldValues> predictions;
  std::vector<FieldValues> gold_values;
  predictions.reserve(prepared.size());
  gold_values.reserve(prepared.size());
  for (size_t i = 0; i < prepared.size(); ++i) {
    predictions.push_back(pointer_decode(m, prepared[i].input_ids, gold[i].input_tokens, vocab));
    gold_values.push_back(gold[i].targets);
  }
  return muc5_score(predictions, gold_values, schema).micro.f1();
}

template <typename T>
TrainResult train_pointer_model(PointerModel<T>& m, const Vocabulary& vocab,
                                const FieldSchema& schema,
                                const std::vector<E2ERecord>& train_records,
                                const std::vector<E2ERecord>& val_records, const TrainConfig& cfg,
                                Rng& shuffle_rng, Rng& dropout_rng,
                                std::ostream* log_stream = nullptr) {
  std::vector<PreparedRecord> train_prep;
  train_prep.reserve(train_records.size());
  for (const auto& r : train_records) train_prep.push_back(prepare_record(r, vocab));
  std::vector<PreparedRecord> val_prep;
  val_prep.reserve(val_records.size());
  for (const auto& r : val_records) val_prep.push_back(prepare_record(r, vocab));

  const auto record_loss = [&](size_t i) {
    Tape<T> tape;
    const Tensor<T> loss =
        pointer_forward_loss(tape, m, train_prep[i], vocab.size(), /*training=*/true, dropout_rng);
    tape.backward(loss);
    return static_cast<double>(loss.item());
  };
  const auto evaluate = [&] { return pointer_val_metric(m, val_prep, val_records, vocab, schema); };
  return run_training(m.store, cfg, train_prep.size(), record_loss, evaluate, shuffle_rng,
                      log_stream);
}

// Tag every sentence and score chunk F1 against the gold labels.
template <typename T>
double tagger_val_metric(const TaggerModel<T>& m, const std::vector<std::vector<int>>& token_ids,
                         const std::vector<BioSentence>& gold) {
  std::vector<BioSentence> predicted;
  predicted.reserve(gold.size());
  for (size_t i = 0; i < gold.size(); ++i) {
    predicted.push_back(BioSentence{gold[i].tokens, tag(m, token_ids[i])});
  }
  return chunk_f1(predicted, gold).f1();
}

template <typename T>
TrainResult train_tagger_model(TaggerModel<T>& m, const Vocabulary& vocab,
                               const std::vector<BioSentence>& train_sentences,
                               const std::vector<BioSentence>& val_sentences,
                               const TrainConfig& cfg, Rng& shuffle_rng,
                               std::ostream* log_stream = nullptr) {
  std::vector<std::vector<int>> train_ids, val_ids;
  std::vector<std::vector<int>> train_labels;
  train_ids.reserve(train_sentences.size());
  train_labels.reserve(train_sentences.size());
  for (const auto& s : train_sentences) {
    train_ids.push_back(encode_tokens(vocab, s.tokens));
    train_labels.push_back(encode_labels(m.config, s.labels));
  }
  val_ids.reserve(val_sentences.size());
  for (const auto& s : val_sentences) val_ids.push_back(encode_tokens(vocab, s.tokens));

  const auto record_loss = [&](size_t i) {
    Tape<T> tape;
    const Tensor<T> loss = tagger_loss(tape, m, train_ids[i], train_labels[i]);
    tape.backward(loss);
    return static_cast<double>(loss.item());
  };
  const auto evaluate = [&] { return tagger_val_metric(m, val_ids, val_sentences); };
  return run_training(m.store, cfg, train_sentences.size(), record_loss, evaluate, shuffle_rng,
                      log_stream);
}

}  // namespace fieldex
