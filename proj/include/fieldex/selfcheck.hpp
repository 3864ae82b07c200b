#pragma once

// Fast invariant suite behind the `selfcheck` command: toy-scale gradient
// checks against finite differences plus value-level oracles for the
// distribution, scoring, and serialization layers. Every check prints one
// line; the suite returns the number of failures. Runs in well under a
// second.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fieldex/checkpoint.hpp"
#include "fieldex/corpus.hpp"
#include "fieldex/eval.hpp"
#include "fieldex/layers.hpp"
#include "fieldex/pointer_model.hpp"
#include "fieldex/rng.hpp"
#include "fieldex/tagger.hpp"
#include "fieldex/tensor.hpp"
#include "fieldex/train.hpp"

namespace fieldex {
namespace selfcheck_detail {

// Central finite difference against a recomputed forward value.
template <typename LossFn>
double numeric_grad(LossFn&& loss, const Tensor<double>& param, size_t i, double step = 1e-5) {
  double& slot = param.values()[i];
  const double saved = slot;
  slot = saved + step;
  const double up = loss();
  slot = saved - step;
  const double down = loss();
  slot = saved;
  return (up - down) / (2 * step);
}

template <typename LossFn>
double worst_rel_err(LossFn&& loss, const ParameterStore<double>& store) {
  double worst = 0.0;
  for (const auto& [name, t] : store.items()) {
    for (size_t i = 0; i < t.size(); ++i) {
      const double num = numeric_grad(loss, t, i);
      const double ana = t.grad()[i];
      const double err = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace selfcheck_detail

// Runs every check, printing "[ok] name" / "[FAIL] name" lines; returns the
// number of failed checks.
inline int run_selfcheck(std::ostream& out, uint64_t seed = 42) {
  namespace sd = selfcheck_detail;
  int failures = 0;
  const auto check = [&](const std::string& name, const std::function<bool()>& fn) {
    bool ok = false;
    std::string note;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      note = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "[ok]   " : "[FAIL] ") << name << note << "\n";
    if (!ok) ++failures;
  };

  check("rng: identical seeds give identical streams", [&] {
    Rng a(seed), b(seed);
    for (int i = 0; i < 100; ++i) {
      if (a.next() != b.next()) return false;
    }
    return Rng(seed).derive("x").next() != Rng(seed).derive("y").next();
  });

  check("tensor: softmax/cross-entropy gradients match finite differences", [&] {
    Rng rng(seed);
    ParameterStore<double> store;
    auto w = store.add("w", Tensor<double>::zeros({4, 5}, true));
    auto b = store.add("b", Tensor<double>::zeros({5}, true));
    for (auto& v : w.values()) v = rng.uniform(-0.8, 0.8);
    for (auto& v : b.values()) v = rng.uniform(-0.5, 0.5);
    const auto x = Tensor<double>::from({4}, {0.3, -0.7, 0.2, 0.9});
    const auto forward = [&](Tape<double>& tape) {
      return tape.cross_entropy(tape.softmax(tape.tanh(tape.add(tape.matmul(x, w), b))), 2);
    };
    Tape<double> tape;
    tape.backward(forward(tape));
    const auto value = [&] {
      Tape<double> t(false);
      return forward(t).item();
    };
    return sd::worst_rel_err(value, store) < 1e-4;
  });

  check("layers: lstm gradients match finite differences", [&] {
    Rng rng(seed + 1);
    ParameterStore<double> store;
    const auto cell = init_lstm(store, "cell", 3, 4, rng);
    const std::vector<Tensor<double>> xs = {Tensor<double>::from({3}, {0.1, -0.4, 0.8}),
                                            Tensor<double>::from({3}, {-0.2, 0.5, 0.3})};
    const auto forward = [&](Tape<double>& tape) {
      const auto hs = lstm_run(tape, cell, xs);
      return tape.sum(tape.concat(hs));
    };
    Tape<double> tape;
    tape.backward(forward(tape));
    const auto value = [&] {
      Tape<double> t(false);
      return forward(t).item();
    };
    return sd::worst_rel_err(value, store) < 1e-4;
  });

  check("pointer: toy model gradients match finite differences", [&] {
    Rng rng(seed + 2);
    E2ERecord rec;
    rec.input_tokens = {",", "red", "cat", "<eos>"};
    rec.targets = {{"red"}, {}};
    const Vocabulary vocab = Vocabulary::build({rec});
    const PreparedRecord prep = prepare_record(rec, vocab);
    PointerModelConfig c;
    c.embed_dim = 3;
    c.encoder_hidden = 3;
    c.decoder_hidden = 3;
    c.attn_dim = 2;
    c.fields = {"color", "place"};
    auto m = init_pointer_model<double>(c, vocab.size(), rng);
    Rng unused(0);
    Tape<double> tape;
    tape.backward(pointer_forward_loss(tape, m, prep, vocab.size(), false, unused));
    const auto value = [&] {
      Tape<double> t(false);
      return pointer_forward_loss(t, m, prep, vocab.size(), false, unused).item();
    };
    return sd::worst_rel_err(value, m.store) < 1e-3;
  });

  check("pointer: output distributions live on the input's word types", [&] {
    Rng rng(seed + 3);
    E2ERecord rec;
    rec.input_tokens = {",", "two", "star", "star", "<eos>"};
    rec.targets = {{"two", "star"}};
    const Vocabulary vocab = Vocabulary::build({rec});
    const PreparedRecord prep = prepare_record(rec, vocab);
    PointerModelConfig c;
    c.embed_dim = 4;
    c.encoder_hidden = 4;
    c.decoder_hidden = 4;
    c.attn_dim = 3;
    c.fields = {"rating"};
    auto m = init_pointer_model<double>(c, vocab.size(), rng);
    Rng unused(0);
    Tape<double> tape(false);
    PointerDiagnostics<double> diag;
    pointer_forward_loss(tape, m, prep, vocab.size(), false, unused, &diag);
    std::vector<bool> on_input(static_cast<size_t>(vocab.size()), false);
    for (int id : prep.input_ids) on_input[static_cast<size_t>(id)] = true;
    for (const auto& step : diag.distributions[0]) {
      double sum = 0.0;
      for (size_t w = 0; w < step.size(); ++w) {
        sum += step[w];
        if (!on_input[w] && step[w] != 0.0) return false;
      }
      if (std::abs(sum - 1.0) > 1e-6) return false;
    }
    return true;
  });

  check("eval: exact-match counting and degenerate F1", [&] {
    FieldCounts c;
    count_field({"a", "b"}, {"a", "b"}, c);       // match
    count_field({"a"}, {"b"}, c);                 // wrong value
    count_field({"x"}, {}, c);                    // spurious
    count_field({}, {"y"}, c);                    // missing
    count_field({}, {}, c);                       // ignored
    if (c.tp != 1 || c.spurious != 2 || c.missing != 2) return false;
    FieldCounts zero;
    return zero.precision() == 0.0 && zero.recall() == 0.0 && zero.f1() == 0.0;
  });

  check("corpus: lenient chunking round-trips labels", [&] {
    const BioSentence s{{"a", "b", "c", "d"}, {"O", "I-x", "I-x", "B-y"}};
    const auto chunks = chunk_bio(s);
    if (chunks.size() != 2) return false;
    if (chunks[0].field != "x" || chunks[0].start != 1 || chunks[0].tokens.size() != 2) return false;
    // re-emitted labels are the repaired form: the dangling I-x opens at b
    const auto labels = chunks_to_bio(chunks, s.tokens.size());
    return labels == std::vector<std::string>{"O", "B-x", "I-x", "B-y"};
  });

  check("eval: chunk F1 of a corpus against itself is 1", [&] {
    Rng rng(seed + 4);
    std::vector<BioSentence> corpus;
    for (int i = 0; i < 20; ++i) {
      BioSentence s;
      for (int t = 0; t < 5; ++t) {
        s.tokens.push_back("w" + std::to_string(t));
        s.labels.push_back(t % 2 == 0 ? "B-f" : "O");
      }
      corpus.push_back(std::move(s));
    }
    const auto score = chunk_f1(corpus, corpus);
    return score.f1() == 1.0 && score.correct == score.gold;
  });

  check("train: first Adam step matches the closed form", [&] {
    ParameterStore<double> store;
    const auto p = store.add("p", Tensor<double>::from({2}, {0.0, 0.0}, true));
    for (auto& g : p.grad()) g = 1.0;
    Adam<double> opt(store, AdamConfig{1e-3, 0.9, 0.999, 1e-8});
    opt.step();
    const double expect = -1e-3 / (1.0 + 1e-8);
    return std::abs(p.at(0) - expect) < 1e-15 && std::abs(p.at(1) - expect) < 1e-15;
  });

  check("checkpoint: save/load round trip is bit-exact", [&] {
    Rng rng(seed + 5);
    E2ERecord rec;
    rec.input_tokens = {",", "a", "<eos>"};
    rec.targets = {{"a"}};
    const Vocabulary vocab = Vocabulary::build({rec});
    PointerModelConfig c;
    c.embed_dim = 3;
    c.encoder_hidden = 3;
    c.decoder_hidden = 3;
    c.attn_dim = 2;
    c.fields = {"f"};
    auto m = init_pointer_model<float>(c, vocab.size(), rng);
    const auto dir = std::filesystem::temp_directory_path() /
                     ("fieldex_selfcheck_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "sc.ckpt").string();
    bool ok = false;
    try {
      save_checkpoint(path, "pointer", pointer_config_to_json(c), vocab.to_json(), m.store);
      Rng rng2(seed + 6);
      auto m2 = init_pointer_model<float>(c, vocab.size(), rng2);
      load_checkpoint_params(path, m2.store);
      ok = true;
      for (size_t i = 0; i < m.store.size() && ok; ++i) {
        ok = m.store.items()[i].second.values() == m2.store.items()[i].second.values();
      }
    } catch (...) {
      ok = false;
    }
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    return ok;
  });

  out << (failures == 0 ? "selfcheck: PASS" : "selfcheck: FAIL") << " ("
      << 10 - failures << "/10 checks)\n";
  return failures;
}

}  // namespace fieldex
