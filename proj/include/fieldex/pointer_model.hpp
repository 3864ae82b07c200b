#pragma once

// The end-to-end extraction model: a shared Bi-LSTM encoder over the input
// tokens and one decoder per schema field. Each decoder owns a word
// embedding, an LSTM with a learned initial state, a learned start-symbol
// embedding, and its own additive attention over the encoder outputs. A
// decoder never generates from an open vocabulary: at every step its
// attention weights are accumulated over the input's word types,
//   out[w] = sum of attention weight at every position holding w,
// so the output distribution is supported exactly on the words of the input.
// Training teacher-forces each decoder on the gold target (value tokens plus
// a terminal end marker) and averages per-step cross entropy within a field
// before summing over fields. Decoding is greedy argmax until the end marker.
//
// The variant configuration widens every dimension by size_multiplier, adds
// embedding + recurrent dropout (one mask per sequence), and gives each
// decoder a summarizer LSTM that reads the encoded input once; its last
// hidden state is concatenated to the decoder input at every step.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldex/corpus.hpp"
#include "fieldex/error.hpp"
#include "fieldex/layers.hpp"
#include "fieldex/rng.hpp"
#include "fieldex/tensor.hpp"

namespace fieldex {

struct PointerModelConfig {
  int embed_dim = 96;
  int encoder_hidden = 128;
  int decoder_hidden = 128;
  int attn_dim = 128;
  std::vector<std::string> fields;
  int size_multiplier = 1;
  bool use_summarizer = false;
  double embedding_dropout = 0.0;
  double recurrent_dropout = 0.0;
  int max_decode_len = 0;  // 0: cap at input length + 5

  int eff_embed() const { return embed_dim * size_multiplier; }
  int eff_encoder_hidden() const { return encoder_hidden * size_multiplier; }
  int eff_decoder_hidden() const { return decoder_hidden * size_multiplier; }
  int eff_attn() const { return attn_dim * size_multiplier; }
  // decoder input: token embedding, plus the summary vector when enabled
  int decoder_input_dim() const {
    return eff_embed() + (use_summarizer ? eff_decoder_hidden() : 0);
  }

  void validate() const {
    if (embed_dim <= 0 || encoder_hidden <= 0 || decoder_hidden <= 0 || attn_dim <= 0) {
      throw FormatError("model config: dimensions must be positive");
    }
    if (size_multiplier < 1) throw FormatError("model config: size_multiplier must be >= 1");
    if (fields.empty()) throw FormatError("model config: field list is empty");
    for (double rate : {embedding_dropout, recurrent_dropout}) {
      if (!(rate >= 0.0 && rate < 1.0)) {
        throw FormatError("model config: dropout rates must lie in [0, 1)");
      }
    }
    if (max_decode_len < 0) throw FormatError("model config: max_decode_len must be >= 0");
  }
};

inline ordered_json pointer_config_to_json(const PointerModelConfig& c) {
  ordered_json j;
  j["embed_dim"] = c.embed_dim;
  j["encoder_hidden"] = c.encoder_hidden;
  j["decoder_hidden"] = c.decoder_hidden;
  j["attn_dim"] = c.attn_dim;
  j["fields"] = c.fields;
  j["size_multiplier"] = c.size_multiplier;
  j["use_summarizer"] = c.use_summarizer;
  j["embedding_dropout"] = c.embedding_dropout;
  j["recurrent_dropout"] = c.recurrent_dropout;
  j["max_decode_len"] = c.max_decode_len;
  return j;
}

inline PointerModelConfig pointer_config_from_json(const ordered_json& j,
                                                   const std::string& source_name) {
  PointerModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "embed_dim") c.embed_dim = value.get<int>();
    else if (key == "encoder_hidden") c.encoder_hidden = value.get<int>();
    else if (key == "decoder_hidden") c.decoder_hidden = value.get<int>();
    else if (key == "attn_dim") c.attn_dim = value.get<int>();
    else if (key == "fields") c.fields = value.get<std::vector<std::string>>();
    else if (key == "size_multiplier") c.size_multiplier = value.get<int>();
    else if (key == "use_summarizer") c.use_summarizer = value.get<bool>();
    else if (key == "embedding_dropout") c.embedding_dropout = value.get<double>();
    else if (key == "recurrent_dropout") c.recurrent_dropout = value.get<double>();
    else if (key == "max_decode_len") c.max_decode_len = value.get<int>();
    else throw FormatError(source_name + ": unknown model config key \"" + key + "\"");
  }
  c.validate();
  return c;
}

template <typename T>
struct PointerDecoderParams {
  EmbeddingParams<T> embedding;
  Tensor<T> start;  // learned start-symbol embedding for step 1
  LstmCellParams<T> lstm;
  Tensor<T> h0, c0;  // learned initial state
  AttentionParams<T> attention;
  LstmCellParams<T> summarizer;  // present only with use_summarizer
};

template <typename T>
struct PointerModel {
  PointerModelConfig config;
  ParameterStore<T> store;  // every trainable tensor, in registration order
  EmbeddingParams<T> enc_embedding;
  LstmCellParams<T> enc_fwd, enc_bwd;
  std::vector<PointerDecoderParams<T>> decoders;
};

// Parameter registration order is fixed (encoder first, then decoders in
// schema order), so checkpoints and optimizer state line up across runs.
template <typename T>
PointerModel<T> init_pointer_model(const PointerModelConfig& config, int vocab_size, Rng& rng) {
  config.validate();
  if (vocab_size < 4) throw InvariantError("init_pointer_model: vocabulary is missing its reserved entries");
  PointerModel<T> m;
  m.config = config;
  const int embed = config.eff_embed();
  const int enc_hidden = config.eff_encoder_hidden();
  const int dec_hidden = config.eff_decoder_hidden();
  const int attn = config.eff_attn();

  m.enc_embedding = init_embedding(m.store, "encoder.embedding", vocab_size, embed, rng);
  m.enc_fwd = init_lstm(m.store, "encoder.fwd", embed, enc_hidden, rng);
  m.enc_bwd = init_lstm(m.store, "encoder.bwd", embed, enc_hidden, rng);

  for (const auto& field : config.fields) {
    const std::string prefix = "decoder." + field;
    PointerDecoderParams<T> d;
    d.embedding = init_embedding(m.store, prefix + ".embedding", vocab_size, embed, rng);
    d.start = param_uniform(m.store, prefix + ".start", {embed}, 0.1, rng);
    d.lstm = init_lstm(m.store, prefix + ".lstm", config.decoder_input_dim(), dec_hidden, rng);
    d.h0 = param_const(m.store, prefix + ".h0", {dec_hidden}, 0.0);
    d.c0 = param_const(m.store, prefix + ".c0", {dec_hidden}, 0.0);
    d.attention = init_attention(m.store, prefix + ".attention", 2 * enc_hidden, dec_hidden, attn, rng);
    if (config.use_summarizer) {
      d.summarizer = init_lstm(m.store, prefix + ".summarizer", 2 * enc_hidden, dec_hidden, rng);
    }
    m.decoders.push_back(std::move(d));
  }
  return m;
}

// A record resolved against a vocabulary: input ids in order, and per-field
// target ids terminated by the end marker (an empty field is just [eos]).
struct PreparedRecord {
  std::vector<int> input_ids;
  std::vector<std::vector<int>> targets;
};

inline PreparedRecord prepare_record(const E2ERecord& rec, const Vocabulary& vocab) {
  PreparedRecord out;
  out.input_ids = encode_tokens(vocab, rec.input_tokens);
  out.targets.reserve(rec.targets.size());
  for (const auto& t : rec.targets) out.targets.push_back(encode_target(vocab, t));
  return out;
}

// Distribution over word types from position weights: the weighted sum of
// one-hot input vectors, out[input_ids[i]] += weights[i].
template <typename T>
Tensor<T> output_distribution(Tape<T>& tape, const Tensor<T>& att_weights,
                              const std::vector<int>& input_ids, int vocab_size) {
  return tape.weighted_sum(att_weights, input_ids, vocab_size);
}

// Per-sequence dropout state. Embedding dropout zeroes whole word types for
// the duration of a sequence (a scale applied at lookup); recurrent dropout
// masks h_prev entering the gates, one mask per LSTM instance.
template <typename T>
struct PointerDropout {
  bool active = false;
  Tensor<T> enc_embed_mask;                // [vocab]
  Tensor<T> enc_fwd_mask, enc_bwd_mask;    // [enc_hidden]
  std::vector<Tensor<T>> dec_embed_mask;   // per field, [vocab]
  std::vector<Tensor<T>> dec_rec_mask;     // per field, [dec_hidden]
  std::vector<Tensor<T>> sum_rec_mask;     // per field, [dec_hidden]
};

template <typename T>
PointerDropout<T> draw_pointer_dropout(const PointerModel<T>& m, int vocab_size, Rng& rng) {
  const auto& c = m.config;
  PointerDropout<T> d;
  d.active = c.embedding_dropout > 0.0 || c.recurrent_dropout > 0.0;
  if (!d.active) return d;
  const Shape vshape = {vocab_size};
  const Shape enc_shape = {c.eff_encoder_hidden()};
  const Shape dec_shape = {c.eff_decoder_hidden()};
  d.enc_embed_mask = variational_dropout<T>(vshape, c.embedding_dropout, rng);
  d.enc_fwd_mask = variational_dropout<T>(enc_shape, c.recurrent_dropout, rng);
  d.enc_bwd_mask = variational_dropout<T>(enc_shape, c.recurrent_dropout, rng);
  for (size_t k = 0; k < m.decoders.size(); ++k) {
    d.dec_embed_mask.push_back(variational_dropout<T>(vshape, c.embedding_dropout, rng));
    d.dec_rec_mask.push_back(variational_dropout<T>(dec_shape, c.recurrent_dropout, rng));
    if (c.use_summarizer) {
      d.sum_rec_mask.push_back(variational_dropout<T>(dec_shape, c.recurrent_dropout, rng));
    }
  }
  return d;
}

template <typename T>
Tensor<T> lookup_with_dropout(Tape<T>& tape, const EmbeddingParams<T>& emb, int token_id,
                              const Tensor<T>* word_mask) {
  Tensor<T> e = embed(tape, emb, token_id);
  if (word_mask) e = tape.scale(e, word_mask->values()[static_cast<size_t>(token_id)]);
  return e;
}

// Value-level record of one forward pass, for inspection and tests: the
// attention vector and output distribution at every decoding step.
template <typename T>
struct PointerDiagnostics {
  std::vector<double> field_losses;                       // per field, averaged over steps
  std::vector<std::vector<std::vector<T>>> attentions;    // [field][step][position]
  std::vector<std::vector<std::vector<T>>> distributions; // [field][step][word type]
};

namespace detail {

// Shared encoder pass; returns the encoder outputs (one [2H] vector per
// input position).
template <typename T>
std::vector<Tensor<T>> encode_input(Tape<T>& tape, const PointerModel<T>& m,
                                    const std::vector<int>& input_ids,
                                    const PointerDropout<T>& dropout) {
  if (input_ids.empty()) throw InvariantError("pointer model: empty input sequence");
  const Tensor<T>* emb_mask = dropout.active ? &dropout.enc_embed_mask : nullptr;
  std::vector<Tensor<T>> xs;
  xs.reserve(input_ids.size());
  for (int id : input_ids) xs.push_back(lookup_with_dropout(tape, m.enc_embedding, id, emb_mask));
  const Tensor<T>* fwd_mask = dropout.active ? &dropout.enc_fwd_mask : nullptr;
  const Tensor<T>* bwd_mask = dropout.active ? &dropout.enc_bwd_mask : nullptr;
  return bilstm_encode(tape, m.enc_fwd, m.enc_bwd, xs, fwd_mask, bwd_mask);
}

// Summary vector for one decoder: the last hidden state of its summarizer
// run over the encoder outputs.
template <typename T>
Tensor<T> summarize(Tape<T>& tape, const PointerDecoderParams<T>& dec,
                    const std::vector<Tensor<T>>& enc_outs, const Tensor<T>* rec_mask) {
  return lstm_run(tape, dec.summarizer, enc_outs, rec_mask).back();
}

}  // namespace detail

// Teacher-forced loss over every field of one record:
//   sum over fields of (mean over target steps of -log out[target]).
// Each field's step count includes its terminal end marker. Dropout is drawn
// only when training.
template <typename T>
Tensor<T> pointer_forward_loss(Tape<T>& tape, const PointerModel<T>& m, const PreparedRecord& rec,
                               int vocab_size, bool training, Rng& rng,
                               PointerDiagnostics<T>* diag = nullptr) {
  if (rec.targets.size() != m.decoders.size()) {
    throw InvariantError("pointer model: record has " + std::to_string(rec.targets.size()) +
                         " targets for " + std::to_string(m.decoders.size()) + " decoders");
  }
  const PointerDropout<T> dropout =
      training ? draw_pointer_dropout(m, vocab_size, rng) : PointerDropout<T>{};
  const std::vector<Tensor<T>> enc_outs = detail::encode_input(tape, m, rec.input_ids, dropout);
  const std::vector<uint8_t> attendable(rec.input_ids.size(), 1);

  if (diag) {
    diag->field_losses.assign(m.decoders.size(), 0.0);
    diag->attentions.assign(m.decoders.size(), {});
    diag->distributions.assign(m.decoders.size(), {});
  }

  Tensor<T> total;
  for (size_t k = 0; k < m.decoders.size(); ++k) {
    const auto& dec = m.decoders[k];
    const std::vector<int>& target = rec.targets[k];
    if (target.empty()) throw InvariantError("pointer model: field target missing its end marker");
    const Tensor<T>* rec_mask = dropout.active ? &dropout.dec_rec_mask[k] : nullptr;
    const Tensor<T>* emb_mask = dropout.active ? &dropout.dec_embed_mask[k] : nullptr;
    const Tensor<T>* sum_mask =
        dropout.active && m.config.use_summarizer ? &dropout.sum_rec_mask[k] : nullptr;

    const Tensor<T> enc_proj = attention_project(tape, dec.attention, enc_outs);
    Tensor<T> summary;
    if (m.config.use_summarizer) summary = detail::summarize(tape, dec, enc_outs, sum_mask);

    LstmState<T> state{dec.h0, dec.c0};
    Tensor<T> prev_embed = dec.start;
    Tensor<T> field_sum;
    for (size_t j = 0; j < target.size(); ++j) {
      const Tensor<T> x =
          m.config.use_summarizer ? tape.concat({prev_embed, summary}) : prev_embed;
      state = lstm_step(tape, dec.lstm, x, state.h, state.c, rec_mask);
      const Tensor<T> att =
          attention_weights_projected(tape, dec.attention, enc_proj, state.h, attendable);
      const Tensor<T> out = output_distribution(tape, att, rec.input_ids, vocab_size);
      const Tensor<T> step_loss = tape.cross_entropy(out, target[j]);
      field_sum = field_sum.defined() ? tape.add(field_sum, step_loss) : step_loss;
      if (diag) {
        diag->attentions[k].push_back(att.values());
        diag->distributions[k].push_back(out.values());
      }
      if (j + 1 < target.size()) {
        prev_embed = lookup_with_dropout(tape, dec.embedding, target[j], emb_mask);
      }
    }
    const Tensor<T> field_loss = tape.scale(field_sum, T(1) / static_cast<T>(target.size()));
    if (diag) diag->field_losses[k] = static_cast<double>(field_loss.item());
    total = total.defined() ? tape.add(total, field_loss) : field_loss;
  }
  return total;
}

// Greedy decoding: per field, argmax word at each step (ties resolve to the
// lowest vocabulary index), fed back as the next decoder input; stops at the
// end marker or after max_decode_len steps (input length + 5 when the config
// leaves it at 0). Emitted sequences exclude the end marker. When the argmax
// lands on the unknown type (several out-of-vocabulary surface forms can
// share it), the emitted text is the surface token at the unknown position
// with the most attention; the decoder itself is still fed the unknown
// embedding, matching what training saw.
template <typename T>
std::vector<std::vector<std::string>> pointer_decode(const PointerModel<T>& m,
                                                     const std::vector<int>& input_ids,
                                                     const std::vector<std::string>& input_tokens,
                                                     const Vocabulary& vocab) {
  if (input_tokens.size() != input_ids.size()) {
    throw InvariantError("pointer_decode: " + std::to_string(input_ids.size()) + " ids vs " +
                         std::to_string(input_tokens.size()) + " surface tokens");
  }
  Tape<T> tape(false);
  const PointerDropout<T> no_dropout;
  const std::vector<Tensor<T>> enc_outs = detail::encode_input(tape, m, input_ids, no_dropout);
  const std::vector<uint8_t> attendable(input_ids.size(), 1);
  const int cap = m.config.max_decode_len > 0 ? m.config.max_decode_len
                                              : static_cast<int>(input_ids.size()) + 5;

  std::vector<std::vector<std::string>> out(m.decoders.size());
  for (size_t k = 0; k < m.decoders.size(); ++k) {
    const auto& dec = m.decoders[k];
    const Tensor<T> enc_proj = attention_project(tape, dec.attention, enc_outs);
    Tensor<T> summary;
    if (m.config.use_summarizer) summary = detail::summarize<T>(tape, dec, enc_outs, nullptr);

    LstmState<T> state{dec.h0, dec.c0};
    Tensor<T> prev_embed = dec.start;
    for (int j = 0; j < cap; ++j) {
      const Tensor<T> x =
          m.config.use_summarizer ? tape.concat({prev_embed, summary}) : prev_embed;
      state = lstm_step(tape, dec.lstm, x, state.h, state.c);
      const Tensor<T> att =
          attention_weights_projected(tape, dec.attention, enc_proj, state.h, attendable);
      const Tensor<T> dist = output_distribution(tape, att, input_ids, static_cast<int>(vocab.size()));
      const int word = argmax(dist.values());
      if (word == kEosId) break;
      if (word == kUnkId) {
        size_t best_pos = input_ids.size();
        for (size_t i = 0; i < input_ids.size(); ++i) {
          if (input_ids[i] == kUnkId &&
              (best_pos == input_ids.size() || att.values()[i] > att.values()[best_pos])) {
            best_pos = i;
          }
        }
        out[k].push_back(best_pos < input_ids.size() ? input_tokens[best_pos]
                                                     : vocab.token(word));
      } else {
        out[k].push_back(vocab.token(word));
      }
      prev_embed = embed(tape, dec.embedding, word);
    }
  }
  return out;
}

}  // namespace fieldex
