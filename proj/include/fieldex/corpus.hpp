#pragma once

// Corpus handling: CoNLL-style BIO ingestion, chunking, conversion to the
// end-to-end record format (per-field value sequences extracted from the
// input), schema selection, vocabulary construction, and the serialized
// record/schema file formats.
//
// Record files are JSON lines, one record per line:
//   {"input": ["<tok>", ...], "fields": {"<field>": ["<tok>", ...], ...}}
// where "input" already carries the prepended comma and appended
// end-of-sequence marker. A sidecar schema file describes the dataset:
//   {"format": "fieldex-e2e/1", "dataset": "...", "fields": [...]}

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fieldex/error.hpp"

namespace fieldex {

using ordered_json = nlohmann::ordered_json;

// Reserved vocabulary entries. The comma is reserved because it is both the
// prepended input token and the separator used to join multi-chunk fields;
// the end-of-sequence marker terminates every input and every target.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kCommaId = 3;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kCommaToken = ",";

// ---------------------------------------------------------------------------
// BIO sentences

struct BioSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

inline bool is_bio_label(const std::string& label) {
  if (label == "O") return true;
  if (label.size() < 3) return false;
  if (label[0] != 'B' && label[0] != 'I') return false;
  return label[1] == '-';
}

// One "token<space-or-tab>label" pair per line, blank line between
// sentences. Tokens and labels are preserved verbatim; no case folding.
inline std::vector<BioSentence> read_bio(std::istream& in, const std::string& source_name) {
  std::vector<BioSentence> sentences;
  BioSentence current;
  std::string line;
  long line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      sentences.push_back(std::move(current));
      current = BioSentence{};
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const size_t sep = line.find_first_of(" \t");
    if (sep == std::string::npos || sep == 0 || sep + 1 >= line.size()) {
      throw FormatError(source_name + ":" + std::to_string(line_no) +
                        ": expected \"token label\", got \"" + line + "\"");
    }
    const std::string token = line.substr(0, sep);
    const std::string label = line.substr(sep + 1);
    if (label.find_first_of(" \t") != std::string::npos) {
      throw FormatError(source_name + ":" + std::to_string(line_no) +
                        ": expected exactly two columns, got \"" + line + "\"");
    }
    if (!is_bio_label(label)) {
      throw FormatError(source_name + ":" + std::to_string(line_no) + ": label \"" + label +
                        "\" is not O, B-<field>, or I-<field>");
    }
    current.tokens.push_back(token);
    current.labels.push_back(label);
  }
  flush();
  return sentences;
}

inline std::vector<BioSentence> read_bio(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open BIO file: " + path);
  return read_bio(in, path);
}

// Inverse of read_bio: one "token label" line per token, a blank line
// between sentences.
inline void write_bio(std::ostream& out, const std::vector<BioSentence>& sentences) {
  for (size_t i = 0; i < sentences.size(); ++i) {
    const BioSentence& s = sentences[i];
    if (s.tokens.size() != s.labels.size()) {
      throw InvariantError("write_bio: sentence " + std::to_string(i) + " has " +
                           std::to_string(s.tokens.size()) + " tokens but " +
                           std::to_string(s.labels.size()) + " labels");
    }
    if (i > 0) out << '\n';
    for (size_t t = 0; t < s.tokens.size(); ++t) {
      out << s.tokens[t] << ' ' << s.labels[t] << '\n';
    }
  }
}

inline void write_bio(const std::string& path, const std::vector<BioSentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write BIO file: " + path);
  write_bio(out, sentences);
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Chunking

struct Chunk {
  std::string field;
  int start = 0;  // token index of the first chunk token
  std::vector<std::string> tokens;
};

// Maximal B-X (I-X)* runs become chunks labeled X. Lenient on malformed
// input: an I-X with no preceding chunk of type X starts a new chunk, the
// convention used by the standard chunking evaluation script.
inline std::vector<Chunk> chunk_bio(const BioSentence& s) {
  if (s.tokens.size() != s.labels.size()) {
    throw InvariantError("chunk_bio: " + std::to_string(s.tokens.size()) + " tokens vs " +
                         std::to_string(s.labels.size()) + " labels");
  }
  std::vector<Chunk> chunks;
  std::string open_type;  // empty = no chunk in progress
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    const std::string& label = s.labels[i];
    if (label == "O") {
      open_type.clear();
      continue;
    }
    const std::string type = label.substr(2);
    const bool continues = label[0] == 'I' && type == open_type;
    if (!continues) {
      chunks.push_back(Chunk{type, static_cast<int>(i), {}});
      open_type = type;
    }
    chunks.back().tokens.push_back(s.tokens[i]);
  }
  return chunks;
}

// Rebuild BIO labels from chunks over the original sentence length.
inline std::vector<std::string> chunks_to_bio(const std::vector<Chunk>& chunks, size_t n_tokens) {
  std::vector<std::string> labels(n_tokens, "O");
  for (const auto& c : chunks) {
    for (size_t j = 0; j < c.tokens.size(); ++j) {
      const size_t pos = static_cast<size_t>(c.start) + j;
      if (pos >= n_tokens) throw InvariantError("chunks_to_bio: chunk exceeds sentence length");
      labels[pos] = (j == 0 ? "B-" : "I-") + c.field;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Schema selection

enum class DatasetKind { kAtis, kRestaurant, kMovie };

inline DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "atis") return DatasetKind::kAtis;
  if (name == "restaurant") return DatasetKind::kRestaurant;
  if (name == "movie") return DatasetKind::kMovie;
  throw FormatError("unknown dataset kind \"" + name + "\" (expected atis, restaurant, or movie)");
}

inline std::string dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kAtis: return "atis";
    case DatasetKind::kRestaurant: return "restaurant";
    case DatasetKind::kMovie: return "movie";
  }
  throw InvariantError("dataset_kind_name: bad enum value");
}

struct FieldSchema {
  std::string dataset;
  std::vector<std::string> fields;

  int index_of(const std::string& field) const {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (fields[i] == field) return static_cast<int>(i);
    }
    return -1;
  }
};

// Field inventory from training data: every dataset orders fields by
// descending chunk frequency (ties broken lexicographically); the ATIS
// configuration keeps only the top 10.
inline FieldSchema select_schema(const std::vector<BioSentence>& train, DatasetKind kind) {
  if (train.empty()) throw InvariantError("select_schema: empty training set");
  std::map<std::string, long> freq;
  for (const auto& s : train) {
    for (const auto& c : chunk_bio(s)) ++freq[c.field];
  }
  std::vector<std::pair<std::string, long>> by_count(freq.begin(), freq.end());
  std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  FieldSchema schema;
  schema.dataset = dataset_kind_name(kind);
  const size_t limit = kind == DatasetKind::kAtis ? 10 : by_count.size();
  for (size_t i = 0; i < by_count.size() && i < limit; ++i) {
    schema.fields.push_back(by_count[i].first);
  }
  return schema;
}

// ---------------------------------------------------------------------------
// End-to-end records

struct E2ERecord {
  std::vector<std::string> input_tokens;          // "," + tokens + eos marker
  std::vector<std::vector<std::string>> targets;  // aligned with schema.fields
};

// input = [","] + tokens + [eos]; each schema field's chunks are joined in
// order of appearance with a standalone comma token; chunks whose field is
// outside the schema are dropped; zero-chunk sentences keep all-empty
// targets, so record count always equals sentence count.
inline E2ERecord to_e2e(const BioSentence& s, const FieldSchema& schema) {
  E2ERecord rec;
  rec.input_tokens.reserve(s.tokens.size() + 2);
  rec.input_tokens.push_back(kCommaToken);
  rec.input_tokens.insert(rec.input_tokens.end(), s.tokens.begin(), s.tokens.end());
  rec.input_tokens.push_back(kEosToken);
  rec.targets.assign(schema.fields.size(), {});
  for (const auto& c : chunk_bio(s)) {
    const int k = schema.index_of(c.field);
    if (k < 0) continue;
    auto& target = rec.targets[static_cast<size_t>(k)];
    if (!target.empty()) target.push_back(kCommaToken);
    target.insert(target.end(), c.tokens.begin(), c.tokens.end());
  }
  return rec;
}

inline std::vector<E2ERecord> to_e2e(const std::vector<BioSentence>& sentences,
                                     const FieldSchema& schema) {
  std::vector<E2ERecord> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(to_e2e(s, schema));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  Vocabulary() {
    for (const char* t : {kPadToken, kUnkToken, kEosToken, kCommaToken}) add_token(t);
  }

  // Tokens of the training inputs, most frequent first (ties lexicographic);
  // tokens under min_count are left out and resolve to the unknown id.
  static Vocabulary build(const std::vector<E2ERecord>& records, long min_count = 1) {
    std::map<std::string, long> freq;
    for (const auto& r : records) {
      for (const auto& t : r.input_tokens) ++freq[t];
    }
    std::vector<std::pair<std::string, long>> by_count(freq.begin(), freq.end());
    std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [token, count] : by_count) {
      if (count < min_count || v.index_.count(token)) continue;
      v.add_token(token);
    }
    return v;
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
      throw InvariantError("vocabulary id " + std::to_string(id) + " out of range [0, " +
                           std::to_string(tokens_.size()) + ")");
    }
    return tokens_[static_cast<size_t>(id)];
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  ordered_json to_json() const { return ordered_json(tokens_); }

  static Vocabulary from_json(const ordered_json& j) {
    if (!j.is_array() || j.size() < 4) {
      throw FormatError("vocabulary: expected an array of at least the 4 reserved tokens");
    }
    Vocabulary v;
    for (size_t i = 0; i < 4; ++i) {
      if (j[i].get<std::string>() != v.tokens_[i]) {
        throw FormatError("vocabulary: reserved slot " + std::to_string(i) + " holds \"" +
                          j[i].get<std::string>() + "\", expected \"" + v.tokens_[i] + "\"");
      }
    }
    for (size_t i = 4; i < j.size(); ++i) v.add_token(j[i].get<std::string>());
    return v;
  }

 private:
  void add_token(const std::string& token) {
    if (index_.count(token)) throw InvariantError("duplicate vocabulary token: " + token);
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline std::vector<int> encode_tokens(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

// Target for one field: its value tokens followed by the terminating
// end-of-sequence symbol (an empty field is just [eos]).
inline std::vector<int> encode_target(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids = encode_tokens(vocab, tokens);
  ids.push_back(kEosId);
  return ids;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kSchemaFormat = "fieldex-e2e/1";

inline ordered_json schema_to_json(const FieldSchema& schema) {
  ordered_json j;
  j["format"] = kSchemaFormat;
  j["dataset"] = schema.dataset;
  j["fields"] = schema.fields;
  return j;
}

inline FieldSchema schema_from_json(const ordered_json& j, const std::string& source_name) {
  if (!j.is_object() || !j.contains("format") || !j.contains("fields")) {
    throw FormatError(source_name + ": expected an object with \"format\" and \"fields\"");
  }
  if (j["format"].get<std::string>() != kSchemaFormat) {
    throw FormatError(source_name + ": unsupported schema format \"" +
                      j["format"].get<std::string>() + "\" (expected \"" + kSchemaFormat + "\")");
  }
  FieldSchema schema;
  schema.dataset = j.value("dataset", std::string{});
  for (const auto& f : j["fields"]) schema.fields.push_back(f.get<std::string>());
  if (schema.fields.empty()) throw FormatError(source_name + ": schema has no fields");
  return schema;
}

inline void write_schema(const std::string& path, const FieldSchema& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schema file: " + path);
  out << schema_to_json(schema).dump(2) << "\n";
}

inline FieldSchema read_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw FormatError(path + ": invalid JSON: " + e.what());
  }
  return schema_from_json(j, path);
}

inline ordered_json record_to_json(const E2ERecord& rec, const FieldSchema& schema) {
  if (rec.targets.size() != schema.fields.size()) {
    throw InvariantError("record has " + std::to_string(rec.targets.size()) + " targets for a " +
                         std::to_string(schema.fields.size()) + "-field schema");
  }
  ordered_json j;
  j["input"] = rec.input_tokens;
  ordered_json fields = ordered_json::object();
  for (size_t k = 0; k < schema.fields.size(); ++k) fields[schema.fields[k]] = rec.targets[k];
  j["fields"] = std::move(fields);
  return j;
}

inline E2ERecord record_from_json(const ordered_json& j, const FieldSchema& schema,
                                  const std::string& where) {
  if (!j.is_object() || !j.contains("input") || !j.contains("fields")) {
    throw FormatError(where + ": expected an object with \"input\" and \"fields\"");
  }
  E2ERecord rec;
  for (const auto& t : j["input"]) rec.input_tokens.push_back(t.get<std::string>());
  rec.targets.assign(schema.fields.size(), {});
  for (const auto& [field, value] : j["fields"].items()) {
    const int k = schema.index_of(field);
    if (k < 0) throw FormatError(where + ": field \"" + field + "\" is not in the schema");
    for (const auto& t : value) rec.targets[static_cast<size_t>(k)].push_back(t.get<std::string>());
  }
  return rec;
}

inline void write_e2e_jsonl(const std::string& path, const std::vector<E2ERecord>& records,
                            const FieldSchema& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write record file: " + path);
  for (const auto& r : records) out << record_to_json(r, schema).dump() << "\n";
}

inline std::vector<E2ERecord> read_e2e_jsonl(const std::string& path, const FieldSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open record file: " + path);
  std::vector<E2ERecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    records.push_back(record_from_json(j, schema, path + ":" + std::to_string(line_no)));
  }
  return records;
}

}  // namespace fieldex
