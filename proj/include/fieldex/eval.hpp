#pragma once

// Scoring and significance testing.
//
// Field extraction is scored with exact-match counting: a predicted field
// value counts only when it equals the gold value token for token; there is
// no partial credit. Precision = TP / (TP + spurious), recall =
// TP / (TP + missing), zero denominators score 0. Token-level BIO tagging is
// scored with the conventional chunk-level P/R/F1. Model comparison uses a
// paired bootstrap over test records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldex/corpus.hpp"
#include "fieldex/error.hpp"
#include "fieldex/rng.hpp"

namespace fieldex {

// Per-record output of a model: one value sequence per schema field, aligned
// with FieldSchema::fields (same layout as E2ERecord::targets).
using FieldValues = std::vector<std::vector<std::string>>;

struct FieldCounts {
  long tp = 0;
  long spurious = 0;
  long missing = 0;

  double precision() const {
    const long denom = tp + spurious;
    return denom == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(denom);
  }
  double recall() const {
    const long denom = tp + missing;
    return denom == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(denom);
  }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

struct EvalReport {
  std::vector<std::string> fields;       // schema order
  std::vector<FieldCounts> per_field;    // aligned with fields
  FieldCounts micro;                     // summed counts over all fields
  long records = 0;
};

// Exact-match counting for one (prediction, gold) field pair; empty-vs-empty
// contributes nothing, so sparse schemas do not inflate precision.
inline void count_field(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
                        FieldCounts& c) {
  if (gold.empty() && pred.empty()) return;
  if (pred == gold) {
    ++c.tp;
    return;
  }
  if (!gold.empty()) ++c.missing;
  if (!pred.empty()) ++c.spurious;
}

inline EvalReport muc5_score(const std::vector<FieldValues>& predictions,
                             const std::vector<FieldValues>& gold, const FieldSchema& schema) {
  if (predictions.size() != gold.size()) {
    throw InvariantError("muc5_score: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(gold.size()) + " gold records");
  }
  EvalReport report;
  report.fields = schema.fields;
  report.per_field.assign(schema.fields.size(), {});
  report.records = static_cast<long>(gold.size());
  for (size_t i = 0; i < gold.size(); ++i) {
    if (predictions[i].size() != schema.fields.size() || gold[i].size() != schema.fields.size()) {
      throw InvariantError("muc5_score: record " + std::to_string(i) +
                           " does not match the schema field count");
    }
    for (size_t k = 0; k < schema.fields.size(); ++k) {
      count_field(predictions[i][k], gold[i][k], report.per_field[k]);
    }
  }
  for (const auto& c : report.per_field) {
    report.micro.tp += c.tp;
    report.micro.spurious += c.spurious;
    report.micro.missing += c.missing;
  }
  return report;
}

// Micro F1 over a subset of records given by index (repeats allowed); used by
// the bootstrap. Counts are accumulated per drawn index.
inline double micro_f1_subset(const std::vector<FieldValues>& predictions,
                              const std::vector<FieldValues>& gold,
                              const std::vector<size_t>& indices) {
  FieldCounts c;
  for (size_t i : indices) {
    for (size_t k = 0; k < gold[i].size(); ++k) count_field(predictions[i][k], gold[i][k], c);
  }
  return c.f1();
}

// ---------------------------------------------------------------------------
// Chunk-level BIO scoring

// Exact-boundary, exact-type chunk matching over aligned corpora, with the
// same lenient chunk reading used for conversion.
struct ChunkScore {
  long correct = 0;
  long predicted = 0;
  long gold = 0;

  double precision() const {
    return predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
  }
  double recall() const {
    return gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
  }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

inline ChunkScore chunk_f1(const std::vector<BioSentence>& predicted,
                           const std::vector<BioSentence>& gold) {
  if (predicted.size() != gold.size()) {
    throw InvariantError("chunk_f1: " + std::to_string(predicted.size()) + " predicted vs " +
                         std::to_string(gold.size()) + " gold sentences");
  }
  ChunkScore score;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].labels.size() != gold[i].labels.size()) {
      throw InvariantError("chunk_f1: sentence " + std::to_string(i) + " lengths differ: " +
                           std::to_string(predicted[i].labels.size()) + " vs " +
                           std::to_string(gold[i].labels.size()));
    }
    const auto pred_chunks = chunk_bio(predicted[i]);
    const auto gold_chunks = chunk_bio(gold[i]);
    score.predicted += static_cast<long>(pred_chunks.size());
    score.gold += static_cast<long>(gold_chunks.size());
    // chunks are in position order, so one sweep finds exact matches
    size_t g = 0;
    for (const auto& pc : pred_chunks) {
      while (g < gold_chunks.size() && gold_chunks[g].start < pc.start) ++g;
      if (g < gold_chunks.size() && gold_chunks[g].start == pc.start &&
          gold_chunks[g].field == pc.field && gold_chunks[g].tokens.size() == pc.tokens.size()) {
        ++score.correct;
        ++g;
      }
    }
  }
  return score;
}

// ---------------------------------------------------------------------------
// Paired bootstrap

struct SignificanceResult {
  long resamples = 0;
  double p = 0.0;
  std::string better;      // "A", "B", or "tie" on the full test set
  double full_f1_a = 0.0;
  double full_f1_b = 0.0;
};

// Identify the better model on the full test set, then estimate the
// probability that it scores strictly lower on a random paired resample
// (uniform with replacement, the same indices for both models). With a tied
// full-test score, model A is designated for the comparison.
inline SignificanceResult bootstrap_significance(const std::vector<FieldValues>& pred_a,
                                                 const std::vector<FieldValues>& pred_b,
                                                 const std::vector<FieldValues>& gold,
                                                 const FieldSchema& schema, long resamples,
                                                 Rng& rng) {
  if (gold.empty()) throw InvariantError("bootstrap_significance: empty test set");
  if (resamples < 1) throw InvariantError("bootstrap_significance: resamples must be >= 1");
  SignificanceResult result;
  result.resamples = resamples;
  result.full_f1_a = muc5_score(pred_a, gold, schema).micro.f1();
  result.full_f1_b = muc5_score(pred_b, gold, schema).micro.f1();
  const bool a_better = result.full_f1_a >= result.full_f1_b;
  result.better = result.full_f1_a == result.full_f1_b ? "tie" : (a_better ? "A" : "B");

  const std::vector<FieldValues>& winner = a_better ? pred_a : pred_b;
  const std::vector<FieldValues>& loser = a_better ? pred_b : pred_a;
  long worse = 0;
  std::vector<size_t> indices(gold.size());
  for (long t = 0; t < resamples; ++t) {
    for (auto& ix : indices) ix = static_cast<size_t>(rng.below(gold.size()));
    const double fw = micro_f1_subset(winner, gold, indices);
    const double fl = micro_f1_subset(loser, gold, indices);
    if (fw < fl) ++worse;
  }
  result.p = static_cast<double>(worse) / static_cast<double>(resamples);
  return result;
}

// ---------------------------------------------------------------------------
// Report rendering

inline std::string format_eval_report(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  size_t width = 5;
  for (const auto& f : r.fields) width = std::max(width, f.size());
  out << std::left << std::setw(static_cast<int>(width)) << "field"
      << "  tp spur miss      P      R     F1\n";
  auto row = [&](const std::string& name, const FieldCounts& c) {
    out << std::left << std::setw(static_cast<int>(width)) << name << std::right << " "
        << std::setw(4) << c.tp << " " << std::setw(4) << c.spurious << " " << std::setw(4)
        << c.missing << " " << std::setw(6) << c.precision() << " " << std::setw(6) << c.recall()
        << " " << std::setw(6) << c.f1() << "\n";
  };
  for (size_t k = 0; k < r.fields.size(); ++k) row(r.fields[k], r.per_field[k]);
  row("micro", r.micro);
  out << "records: " << r.records << "\n";
  return out.str();
}

inline ordered_json eval_report_to_json(const EvalReport& r) {
  ordered_json j;
  j["records"] = r.records;
  ordered_json fields = ordered_json::object();
  auto counts = [](const FieldCounts& c) {
    ordered_json e;
    e["tp"] = c.tp;
    e["spurious"] = c.spurious;
    e["missing"] = c.missing;
    e["precision"] = c.precision();
    e["recall"] = c.recall();
    e["f1"] = c.f1();
    return e;
  };
  for (size_t k = 0; k < r.fields.size(); ++k) fields[r.fields[k]] = counts(r.per_field[k]);
  j["fields"] = std::move(fields);
  j["micro"] = counts(r.micro);
  return j;
}

inline ordered_json significance_to_json(const SignificanceResult& s) {
  ordered_json j;
  j["better"] = s.better;
  j["full_f1_a"] = s.full_f1_a;
  j["full_f1_b"] = s.full_f1_b;
  j["resamples"] = s.resamples;
  j["p"] = s.p;
  return j;
}

}  // namespace fieldex
