#pragma once

// The sequence-labeling baseline: embedding, a Bi-LSTM, a forward LSTM over
// the concatenated bidirectional outputs, and a per-token linear projection
// to the label set with softmax. Trained with mean per-token cross entropy;
// predictions are per-token argmax with no structured decoding. Predicted
// labels become structured outputs through the same chunking + joining code
// that builds the training records.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldex/corpus.hpp"
#include "fieldex/error.hpp"
#include "fieldex/layers.hpp"
#include "fieldex/rng.hpp"
#include "fieldex/tensor.hpp"

namespace fieldex {

struct TaggerConfig {
  int embed_dim = 128;
  int layer1_hidden = 128;  // Bi-LSTM, per direction
  int layer2_hidden = 128;  // forward LSTM over the concatenated outputs
  std::vector<std::string> labels;

  int label_index(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return static_cast<int>(i);
    }
    throw FormatError("label outside label set: \"" + label + "\"");
  }

  void validate() const {
    if (embed_dim <= 0 || layer1_hidden <= 0 || layer2_hidden <= 0) {
      throw FormatError("tagger config: dimensions must be positive");
    }
    if (labels.empty()) throw FormatError("tagger config: label set is empty");
    if (std::find(labels.begin(), labels.end(), "O") == labels.end()) {
      throw FormatError("tagger config: label set must contain \"O\"");
    }
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size()) {
      throw FormatError("tagger config: duplicate label in label set");
    }
  }
};

// All labels appearing in the training data, plus "O", in sorted order.
inline std::vector<std::string> collect_label_set(const std::vector<BioSentence>& train) {
  std::set<std::string> labels{"O"};
  for (const auto& s : train) labels.insert(s.labels.begin(), s.labels.end());
  return {labels.begin(), labels.end()};
}

inline ordered_json tagger_config_to_json(const TaggerConfig& c) {
  ordered_json j;
  j["embed_dim"] = c.embed_dim;
  j["layer1_hidden"] = c.layer1_hidden;
  j["layer2_hidden"] = c.layer2_hidden;
  j["labels"] = c.labels;
  return j;
}

inline TaggerConfig tagger_config_from_json(const ordered_json& j, const std::string& source_name) {
  TaggerConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "embed_dim") c.embed_dim = value.get<int>();
    else if (key == "layer1_hidden") c.layer1_hidden = value.get<int>();
    else if (key == "layer2_hidden") c.layer2_hidden = value.get<int>();
    else if (key == "labels") c.labels = value.get<std::vector<std::string>>();
    else throw FormatError(source_name + ": unknown tagger config key \"" + key + "\"");
  }
  c.validate();
  return c;
}

template <typename T>
struct TaggerModel {
  TaggerConfig config;
  ParameterStore<T> store;
  EmbeddingParams<T> embedding;
  LstmCellParams<T> l1_fwd, l1_bwd;
  LstmCellParams<T> l2;
  Tensor<T> proj_w;  // [layer2_hidden x |labels|]
  Tensor<T> proj_b;  // [|labels|]
};

template <typename T>
TaggerModel<T> init_tagger(const TaggerConfig& config, int vocab_size, Rng& rng) {
  config.validate();
  if (vocab_size < 4) throw InvariantError("init_tagger: vocabulary is missing its reserved entries");
  TaggerModel<T> m;
  m.config = config;
  const int n_labels = static_cast<int>(config.labels.size());
  m.embedding = init_embedding(m.store, "embedding", vocab_size, config.embed_dim, rng);
  m.l1_fwd = init_lstm(m.store, "layer1.fwd", config.embed_dim, config.layer1_hidden, rng);
  m.l1_bwd = init_lstm(m.store, "layer1.bwd", config.embed_dim, config.layer1_hidden, rng);
  m.l2 = init_lstm(m.store, "layer2", 2 * config.layer1_hidden, config.layer2_hidden, rng);
  const double r = 1.0 / std::sqrt(static_cast<double>(config.layer2_hidden));
  m.proj_w = param_uniform(m.store, "projection.w", {config.layer2_hidden, n_labels}, r, rng);
  m.proj_b = param_const(m.store, "projection.b", {n_labels}, 0.0);
  return m;
}

namespace detail {

// One label distribution per input position.
template <typename T>
std::vector<Tensor<T>> tagger_distributions(Tape<T>& tape, const TaggerModel<T>& m,
                                            const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw InvariantError("tagger: empty token sequence");
  std::vector<Tensor<T>> xs;
  xs.reserve(token_ids.size());
  for (int id : token_ids) xs.push_back(embed(tape, m.embedding, id));
  const std::vector<Tensor<T>> l1 = bilstm_encode(tape, m.l1_fwd, m.l1_bwd, xs);
  const std::vector<Tensor<T>> l2 = lstm_run(tape, m.l2, l1);
  std::vector<Tensor<T>> dists;
  dists.reserve(l2.size());
  for (const auto& h : l2) {
    dists.push_back(tape.softmax(tape.add(tape.matmul(h, m.proj_w), m.proj_b)));
  }
  return dists;
}

}  // namespace detail

// Mean over tokens of -log p(gold label).
template <typename T>
Tensor<T> tagger_loss(Tape<T>& tape, const TaggerModel<T>& m, const std::vector<int>& token_ids,
                      const std::vector<int>& label_ids) {
  if (token_ids.size() != label_ids.size()) {
    throw InvariantError("tagger_loss: " + std::to_string(token_ids.size()) + " tokens vs " +
                         std::to_string(label_ids.size()) + " labels");
  }
  const std::vector<Tensor<T>> dists = detail::tagger_distributions(tape, m, token_ids);
  Tensor<T> total;
  for (size_t i = 0; i < dists.size(); ++i) {
    const Tensor<T> step = tape.cross_entropy(dists[i], label_ids[i]);
    total = total.defined() ? tape.add(total, step) : step;
  }
  return tape.scale(total, T(1) / static_cast<T>(dists.size()));
}

inline std::vector<int> encode_labels(const TaggerConfig& config,
                                      const std::vector<std::string>& labels) {
  std::vector<int> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) ids.push_back(config.label_index(l));
  return ids;
}

// Per-token argmax labels (ties resolve to the lowest label index).
template <typename T>
std::vector<std::string> tag(const TaggerModel<T>& m, const std::vector<int>& token_ids) {
  Tape<T> tape(false);
  const std::vector<Tensor<T>> dists = detail::tagger_distributions(tape, m, token_ids);
  std::vector<std::string> labels;
  labels.reserve(dists.size());
  for (const auto& d : dists) {
    labels.push_back(m.config.labels[static_cast<size_t>(argmax(d.values()))]);
  }
  return labels;
}

// Predicted labels -> structured record, through the exact dataset
// construction path (lenient chunking, per-field comma joining).
inline E2ERecord baseline_to_e2e(const std::vector<std::string>& tokens,
                                 const std::vector<std::string>& predicted_labels,
                                 const FieldSchema& schema) {
  if (tokens.size() != predicted_labels.size()) {
    throw InvariantError("baseline_to_e2e: " + std::to_string(tokens.size()) + " tokens vs " +
                         std::to_string(predicted_labels.size()) + " labels");
  }
  return to_e2e(BioSentence{tokens, predicted_labels}, schema);
}

}  // namespace fieldex
