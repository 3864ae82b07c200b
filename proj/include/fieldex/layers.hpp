#pragma once

// Recurrent and attention building blocks on top of the tensor core: LSTM
// cell and runs, Bi-LSTM encoding, additive (Bahdanau-style) attention,
// embedding tables, and variational dropout masks.
//
// Everything here is a pure function of parameters and inputs once the
// dropout masks are drawn; evaluation with independent tapes is safe to run
// concurrently over different sequences.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldex/error.hpp"
#include "fieldex/rng.hpp"
#include "fieldex/tensor.hpp"

namespace fieldex {

// Register a weight tensor filled uniform(-r, r). Values are drawn in
// registration order, so the layout is a deterministic function of the rng.
template <typename T>
Tensor<T> param_uniform(ParameterStore<T>& store, const std::string& name, Shape shape, double r,
                        Rng& rng) {
  auto t = Tensor<T>::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-r, r));
  return store.add(name, t);
}

template <typename T>
Tensor<T> param_const(ParameterStore<T>& store, const std::string& name, Shape shape, double value) {
  auto t = Tensor<T>::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = static_cast<T>(value);
  return store.add(name, t);
}

// ---------------------------------------------------------------------------
// LSTM

// One gate weight per gate over the concatenated [x ; h_prev] vector, i.e.
// each gate maps (input_size + hidden_size) -> hidden_size.
template <typename T>
struct LstmCellParams {
  int input_size = 0;
  int hidden_size = 0;
  Tensor<T> w_i, b_i;  // input gate
  Tensor<T> w_f, b_f;  // forget gate
  Tensor<T> w_g, b_g;  // cell candidate
  Tensor<T> w_o, b_o;  // output gate
};

// Weights uniform(-r, r) with r = 1/sqrt(hidden_size); biases zero except the
// forget gate, which starts at +1 so cells initially hold their state.
template <typename T>
LstmCellParams<T> init_lstm(ParameterStore<T>& store, const std::string& prefix, int input_size,
                            int hidden_size, Rng& rng) {
  if (input_size <= 0 || hidden_size <= 0) {
    throw InvariantError("init_lstm: sizes must be positive");
  }
  LstmCellParams<T> p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  const double r = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  const Shape w_shape = {input_size + hidden_size, hidden_size};
  const Shape b_shape = {hidden_size};
  p.w_i = param_uniform(store, prefix + ".w_i", w_shape, r, rng);
  p.b_i = param_const(store, prefix + ".b_i", b_shape, 0.0);
  p.w_f = param_uniform(store, prefix + ".w_f", w_shape, r, rng);
  p.b_f = param_const(store, prefix + ".b_f", b_shape, 1.0);
  p.w_g = param_uniform(store, prefix + ".w_g", w_shape, r, rng);
  p.b_g = param_const(store, prefix + ".b_g", b_shape, 0.0);
  p.w_o = param_uniform(store, prefix + ".w_o", w_shape, r, rng);
  p.b_o = param_const(store, prefix + ".b_o", b_shape, 0.0);
  return p;
}

template <typename T>
struct LstmState {
  Tensor<T> h, c;
};

template <typename T>
LstmState<T> lstm_zero_state(const LstmCellParams<T>& p) {
  return {Tensor<T>::zeros({p.hidden_size}), Tensor<T>::zeros({p.hidden_size})};
}

// Standard gate equations: sigmoid input/forget/output gates, tanh candidate,
// c = f*c_prev + i*g, h = o*tanh(c). When `recurrent_mask` is given it is
// multiplied onto h_prev before the gates see it (the variational scheme:
// one mask per sequence, reused at every step).
template <typename T>
LstmState<T> lstm_step(Tape<T>& tape, const LstmCellParams<T>& p, const Tensor<T>& x,
                       const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                       const Tensor<T>* recurrent_mask = nullptr) {
  if (x.rank() != 1 || x.dim(0) != p.input_size) {
    throw ShapeError("lstm_step: input shape " + shape_str(x.shape()) + " does not match [" +
                     std::to_string(p.input_size) + "]");
  }
  if (h_prev.rank() != 1 || h_prev.dim(0) != p.hidden_size || c_prev.rank() != 1 ||
      c_prev.dim(0) != p.hidden_size) {
    throw ShapeError("lstm_step: state shapes " + shape_str(h_prev.shape()) + ", " +
                     shape_str(c_prev.shape()) + " do not match [" + std::to_string(p.hidden_size) +
                     "]");
  }
  const Tensor<T> h_eff = recurrent_mask ? tape.mul(h_prev, *recurrent_mask) : h_prev;
  const Tensor<T> z = tape.concat({x, h_eff});
  auto gate = [&](const Tensor<T>& w, const Tensor<T>& b) { return tape.add(tape.matmul(z, w), b); };
  const Tensor<T> i = tape.sigmoid(gate(p.w_i, p.b_i));
  const Tensor<T> f = tape.sigmoid(gate(p.w_f, p.b_f));
  const Tensor<T> g = tape.tanh(gate(p.w_g, p.b_g));
  const Tensor<T> o = tape.sigmoid(gate(p.w_o, p.b_o));
  const Tensor<T> c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
  const Tensor<T> h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

// Run a cell across a sequence from the zero state; returns the hidden state
// at every position. The same recurrent mask is applied at every step.
template <typename T>
std::vector<Tensor<T>> lstm_run(Tape<T>& tape, const LstmCellParams<T>& p,
                                const std::vector<Tensor<T>>& xs,
                                const Tensor<T>* recurrent_mask = nullptr) {
  std::vector<Tensor<T>> hs;
  hs.reserve(xs.size());
  LstmState<T> state = lstm_zero_state(p);
  for (const auto& x : xs) {
    state = lstm_step(tape, p, x, state.h, state.c, recurrent_mask);
    hs.push_back(state.h);
  }
  return hs;
}

// Output i is [forward state at i ; backward state at i]; both halves start
// from the zero state at their respective ends of the sequence.
template <typename T>
std::vector<Tensor<T>> bilstm_encode(Tape<T>& tape, const LstmCellParams<T>& fwd,
                                     const LstmCellParams<T>& bwd, const std::vector<Tensor<T>>& xs,
                                     const Tensor<T>* fwd_mask = nullptr,
                                     const Tensor<T>* bwd_mask = nullptr) {
  if (xs.empty()) throw ShapeError("bilstm_encode: empty input sequence");
  const std::vector<Tensor<T>> hs_fwd = lstm_run(tape, fwd, xs, fwd_mask);
  std::vector<Tensor<T>> rev(xs.rbegin(), xs.rend());
  const std::vector<Tensor<T>> hs_bwd = lstm_run(tape, bwd, rev, bwd_mask);
  std::vector<Tensor<T>> out;
  out.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    out.push_back(tape.concat({hs_fwd[i], hs_bwd[xs.size() - 1 - i]}));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Additive attention: score_i = v . tanh(enc_i We + d Wd), then a masked
// softmax over positions.

template <typename T>
struct AttentionParams {
  int enc_dim = 0;
  int dec_dim = 0;
  int attn_dim = 0;
  Tensor<T> we;  // [enc_dim x attn_dim]
  Tensor<T> wd;  // [dec_dim x attn_dim]
  Tensor<T> v;   // [attn_dim]
};

template <typename T>
AttentionParams<T> init_attention(ParameterStore<T>& store, const std::string& prefix, int enc_dim,
                                  int dec_dim, int attn_dim, Rng& rng) {
  if (enc_dim <= 0 || dec_dim <= 0 || attn_dim <= 0) {
    throw InvariantError("init_attention: sizes must be positive");
  }
  AttentionParams<T> p;
  p.enc_dim = enc_dim;
  p.dec_dim = dec_dim;
  p.attn_dim = attn_dim;
  const double r = 1.0 / std::sqrt(static_cast<double>(attn_dim));
  p.we = param_uniform(store, prefix + ".we", {enc_dim, attn_dim}, r, rng);
  p.wd = param_uniform(store, prefix + ".wd", {dec_dim, attn_dim}, r, rng);
  p.v = param_uniform(store, prefix + ".v", {attn_dim}, r, rng);
  return p;
}

// The encoder-side projection enc_proj = stack(enc_outs) . We depends only on
// the sequence, so decoders compute it once and reuse it at every step.
template <typename T>
Tensor<T> attention_project(Tape<T>& tape, const AttentionParams<T>& p,
                            const std::vector<Tensor<T>>& enc_outs) {
  if (enc_outs.empty()) throw ShapeError("attention_project: empty encoder sequence");
  return tape.matmul(tape.stack_rows(enc_outs), p.we);  // [N x attn_dim]
}

// Normalized attention weights from a precomputed encoder projection.
// `attendable[i]` marks positions allowed to receive mass; excluded positions
// come out exactly 0.
template <typename T>
Tensor<T> attention_weights_projected(Tape<T>& tape, const AttentionParams<T>& p,
                                      const Tensor<T>& enc_proj, const Tensor<T>& d_state,
                                      const std::vector<uint8_t>& attendable) {
  if (enc_proj.rank() != 2 || enc_proj.dim(1) != p.attn_dim) {
    throw ShapeError("attention: projected encoder shape " + shape_str(enc_proj.shape()) +
                     " does not match [N x " + std::to_string(p.attn_dim) + "]");
  }
  if (d_state.rank() != 1 || d_state.dim(0) != p.dec_dim) {
    throw ShapeError("attention: decoder state shape " + shape_str(d_state.shape()) +
                     " does not match [" + std::to_string(p.dec_dim) + "]");
  }
  if (attendable.size() != static_cast<size_t>(enc_proj.dim(0))) {
    throw ShapeError("attention: mask length " + std::to_string(attendable.size()) +
                     " does not match sequence length " + std::to_string(enc_proj.dim(0)));
  }
  const Tensor<T> dproj = tape.matmul(d_state, p.wd);                          // [attn_dim]
  const Tensor<T> scores = tape.matmul(tape.tanh(tape.add_rows(enc_proj, dproj)), p.v);  // [N]
  return tape.softmax(scores, &attendable);
}

// Normalized attention weights over encoder outputs for one decoder state.
template <typename T>
Tensor<T> attention_weights(Tape<T>& tape, const AttentionParams<T>& p, const Tensor<T>& d_state,
                            const std::vector<Tensor<T>>& enc_outs,
                            const std::vector<uint8_t>& attendable) {
  return attention_weights_projected(tape, p, attention_project(tape, p, enc_outs), d_state,
                                     attendable);
}

// ---------------------------------------------------------------------------
// Embeddings

template <typename T>
struct EmbeddingParams {
  int vocab_size = 0;
  int dim = 0;
  Tensor<T> table;  // [vocab_size x dim]
};

template <typename T>
EmbeddingParams<T> init_embedding(ParameterStore<T>& store, const std::string& prefix,
                                  int vocab_size, int dim, Rng& rng) {
  if (vocab_size <= 0 || dim <= 0) throw InvariantError("init_embedding: sizes must be positive");
  EmbeddingParams<T> p;
  p.vocab_size = vocab_size;
  p.dim = dim;
  p.table = param_uniform(store, prefix + ".table", {vocab_size, dim}, 0.1, rng);
  return p;
}

template <typename T>
Tensor<T> embed(Tape<T>& tape, const EmbeddingParams<T>& p, int token_id) {
  return tape.embedding_lookup(p.table, token_id);
}

// ---------------------------------------------------------------------------
// Variational dropout: one Bernoulli(keep) mask scaled by 1/keep, drawn once
// per sequence and reused at every timestep. Rate 0 gives all ones, so a
// disabled mask leaves the forward pass untouched.

template <typename T>
Tensor<T> variational_dropout(Shape shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvariantError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  auto mask = Tensor<T>::zeros(std::move(shape));
  if (rate == 0.0) {
    std::fill(mask.values().begin(), mask.values().end(), T(1));
    return mask;
  }
  const double keep = 1.0 - rate;
  const T scale = static_cast<T>(1.0 / keep);
  for (auto& v : mask.values()) v = rng.bernoulli(keep) ? scale : T(0);
  return mask;
}

}  // namespace fieldex
