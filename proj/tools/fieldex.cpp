// Command-line front end: dataset conversion, training, prediction, scoring,
// significance testing, and a fast self-diagnostic.
//
// Exit codes: 0 success, 2 bad usage or malformed input, 3 internal failure.
#include <CLI11.hpp>

#include <fieldex/checkpoint.hpp>
#include <fieldex/corpus.hpp>
#include <fieldex/error.hpp>
#include <fieldex/eval.hpp>
#include <fieldex/pointer_model.hpp>
#include <fieldex/rng.hpp>
#include <fieldex/selfcheck.hpp>
#include <fieldex/tagger.hpp>
#include <fieldex/train.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using fieldex::ordered_json;

std::string f4(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

// <x>.jsonl -> <x>.schema.json; anything else gets .schema.json appended.
std::string default_schema_path(const std::string& data_path) {
  const std::string suffix = ".jsonl";
  if (data_path.size() > suffix.size() &&
      data_path.compare(data_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return data_path.substr(0, data_path.size() - suffix.size()) + ".schema.json";
  }
  return data_path + ".schema.json";
}

ordered_json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fieldex::IoError("cannot open config file: " + path);
  ordered_json j = ordered_json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw fieldex::FormatError(path + ": invalid JSON");
  return j;
}

void write_json_file(const std::string& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw fieldex::IoError("cannot write: " + path);
  out << j.dump(2) << "\n";
}

// A config file holds two optional sections: "train" (optimizer schedule)
// and "model" (architecture sizes). Field names and tag labels always come
// from the data, never from the config.
struct CliConfig {
  fieldex::TrainConfig train;
  ordered_json model = ordered_json::object();
};

CliConfig load_cli_config(const std::string& path) {
  CliConfig c;
  if (path.empty()) return c;
  const ordered_json j = load_json_file(path);
  if (!j.is_object()) throw fieldex::FormatError(path + ": config root must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "train") {
      c.train = fieldex::train_config_from_json(value, path);
    } else if (key == "model") {
      if (!value.is_object()) throw fieldex::FormatError(path + ": \"model\" must be an object");
      c.model = value;
    } else {
      throw fieldex::FormatError(path + ": unknown config key \"" + key + "\"");
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// convert

struct ConvertArgs {
  std::string bio_path;
  std::string dataset;
  std::string out;
  std::string schema_in;
  std::string schema_out;
};

int cmd_convert(const ConvertArgs& a) {
  const fieldex::DatasetKind kind = fieldex::parse_dataset_kind(a.dataset);
  const std::vector<fieldex::BioSentence> sentences = fieldex::read_bio(a.bio_path);

  if (sentences.empty() && a.schema_in.empty()) {
    // Nothing to derive a schema from; still emit the expected record file.
    std::ofstream out(a.out);
    if (!out) throw fieldex::IoError("cannot write record file: " + a.out);
    std::cerr << "warning: " << a.bio_path
              << " holds no sentences; wrote an empty record file and no schema\n";
    std::cout << "records: 0\n";
    return 0;
  }

  const fieldex::FieldSchema schema = a.schema_in.empty()
                                          ? fieldex::select_schema(sentences, kind)
                                          : fieldex::read_schema(a.schema_in);
  const std::vector<fieldex::E2ERecord> records = fieldex::to_e2e(sentences, schema);
  fieldex::write_e2e_jsonl(a.out, records, schema);

  if (a.schema_in.empty()) {
    const std::string schema_path =
        a.schema_out.empty() ? default_schema_path(a.out) : a.schema_out;
    fieldex::write_schema(schema_path, schema);
    std::cout << "schema: " << schema_path << " (" << schema.fields.size() << " fields)\n";
  }

  std::map<std::string, long> kept;
  long dropped = 0;
  for (const auto& s : sentences) {
    for (const auto& chunk : fieldex::chunk_bio(s)) {
      if (schema.index_of(chunk.field) >= 0) {
        ++kept[chunk.field];
      } else {
        ++dropped;
      }
    }
  }
  std::cout << "records: " << records.size() << "\n";
  for (const auto& f : schema.fields) std::cout << "  " << f << ": " << kept[f] << " chunks\n";
  if (dropped > 0) std::cout << "  (outside schema: " << dropped << " chunks dropped)\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string schema;
  std::string config;
  std::uint64_t seed = 42;
  long max_updates = -1;  // -1 keeps the configured budget
};

void report_training(const fieldex::TrainResult& r, const std::string& ckpt,
                     const std::string& metric_name) {
  if (r.aborted) {
    std::cout << "training aborted: " << r.abort_reason << " (best parameters kept)\n";
  }
  std::cout << "updates: " << r.total_updates << "\n";
  std::cout << "best validation " << metric_name << ": " << f4(r.best_metric) << " at update "
            << r.best_update << "\n";
  std::cout << "final validation " << metric_name << ": " << f4(r.final_metric) << "\n";
  std::cout << "checkpoint: " << ckpt << " (log: " << ckpt << ".log)\n";
}

int cmd_train(const TrainArgs& a) {
  CliConfig cfg = load_cli_config(a.config);
  if (a.max_updates >= 0) cfg.train.max_updates = a.max_updates;
  cfg.train.validate();
  const std::string model_cfg_name = a.config.empty() ? "model config" : a.config;

  fieldex::Rng root(a.seed);
  fieldex::Rng init_rng = root.derive("init");
  fieldex::Rng split_rng = root.derive("split");
  fieldex::Rng shuffle_rng = root.derive("shuffle");
  fieldex::Rng dropout_rng = root.derive("dropout");

  std::ofstream log_stream(a.out + ".log");
  if (!log_stream) throw fieldex::IoError("cannot write training log: " + a.out + ".log");

  if (a.model == "pointer") {
    const std::string schema_path = a.schema.empty() ? default_schema_path(a.data) : a.schema;
    const fieldex::FieldSchema schema = fieldex::read_schema(schema_path);
    const std::vector<fieldex::E2ERecord> records = fieldex::read_e2e_jsonl(a.data, schema);
    if (records.size() < 2) {
      throw fieldex::FormatError(a.data + ": need at least 2 records to hold out a validation split");
    }
    // Vocabulary comes from the whole training file, before the split, so it
    // does not depend on the split seed.
    const fieldex::Vocabulary vocab = fieldex::Vocabulary::build(records);
    const fieldex::SplitIndices split =
        fieldex::split_train_val(records.size(), cfg.train.val_fraction, split_rng);
    std::vector<fieldex::E2ERecord> train_recs;
    std::vector<fieldex::E2ERecord> val_recs;
    for (size_t i : split.train) train_recs.push_back(records[i]);
    for (size_t i : split.val) val_recs.push_back(records[i]);

    ordered_json model_json = cfg.model;
    if (model_json.contains("fields")) {
      throw fieldex::FormatError(model_cfg_name +
                                 ": \"fields\" is not configurable; it comes from the schema");
    }
    model_json["fields"] = schema.fields;
    const fieldex::PointerModelConfig mc =
        fieldex::pointer_config_from_json(model_json, model_cfg_name);

    auto model = fieldex::init_pointer_model<float>(mc, vocab.size(), init_rng);
    std::cout << "pointer model: " << records.size() << " records (" << train_recs.size()
              << " train / " << val_recs.size() << " validation), vocabulary " << vocab.size()
              << ", " << schema.fields.size() << " fields, " << model.store.total_values()
              << " parameters\n";

    const fieldex::TrainResult result =
        fieldex::train_pointer_model(model, vocab, schema, train_recs, val_recs, cfg.train,
                                     shuffle_rng, dropout_rng, &log_stream);

    ordered_json payload;
    payload["model"] = fieldex::pointer_config_to_json(mc);
    payload["schema"] = fieldex::schema_to_json(schema);
    fieldex::save_checkpoint(a.out, "pointer", payload, vocab.to_json(), model.store);
    fieldex::write_e2e_jsonl(a.out + ".val.jsonl", val_recs, schema);
    report_training(result, a.out, "exact-match micro F1");
    std::cout << "validation records: " << a.out << ".val.jsonl\n";
    return 0;
  }

  // baseline tagger
  const std::vector<fieldex::BioSentence> sentences = fieldex::read_bio(a.data);
  if (sentences.size() < 2) {
    throw fieldex::FormatError(a.data + ": need at least 2 sentences to hold out a validation split");
  }
  // Label set and vocabulary come from the whole training file, before the
  // split, so they do not depend on the split seed.
  const std::vector<std::string> labels = fieldex::collect_label_set(sentences);
  std::vector<fieldex::E2ERecord> vocab_records;
  vocab_records.reserve(sentences.size());
  for (const auto& s : sentences) {
    fieldex::E2ERecord r;
    r.input_tokens = s.tokens;
    vocab_records.push_back(std::move(r));
  }
  const fieldex::Vocabulary vocab = fieldex::Vocabulary::build(vocab_records);
  const fieldex::SplitIndices split =
      fieldex::split_train_val(sentences.size(), cfg.train.val_fraction, split_rng);
  std::vector<fieldex::BioSentence> train_sents;
  std::vector<fieldex::BioSentence> val_sents;
  for (size_t i : split.train) train_sents.push_back(sentences[i]);
  for (size_t i : split.val) val_sents.push_back(sentences[i]);

  ordered_json model_json = cfg.model;
  if (model_json.contains("labels")) {
    throw fieldex::FormatError(model_cfg_name +
                               ": \"labels\" is not configurable; they come from the training data");
  }
  model_json["labels"] = labels;
  const fieldex::TaggerConfig tc = fieldex::tagger_config_from_json(model_json, model_cfg_name);

  auto model = fieldex::init_tagger<float>(tc, vocab.size(), init_rng);
  std::cout << "baseline tagger: " << sentences.size() << " sentences (" << train_sents.size()
            << " train / " << val_sents.size() << " validation), vocabulary " << vocab.size()
            << ", " << labels.size() << " labels, " << model.store.total_values()
            << " parameters\n";

  const fieldex::TrainResult result = fieldex::train_tagger_model(
      model, vocab, train_sents, val_sents, cfg.train, shuffle_rng, &log_stream);

  ordered_json payload;
  payload["model"] = fieldex::tagger_config_to_json(tc);
  if (!a.schema.empty()) {
    payload["schema"] = fieldex::schema_to_json(fieldex::read_schema(a.schema));
  }
  fieldex::save_checkpoint(a.out, "tagger", payload, vocab.to_json(), model.store);
  fieldex::write_bio(a.out + ".val.bio", val_sents);
  report_training(result, a.out, "chunk F1");
  std::cout << "validation sentences: " << a.out << ".val.bio\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string ckpt;
  std::string input;
  std::string out;
  std::string schema;
  std::uint64_t seed = 42;
};

enum class InputKind { kEmpty, kRecords, kBio, kTokens };

// Record files start with '{'; BIO files are two columns where the second is
// a valid tag; anything else is one whitespace-separated sentence per line.
InputKind classify_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fieldex::IoError("cannot open input file: " + path);
  std::string line;
  bool saw_any = false;
  bool all_bio = true;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> cols;
    std::string w;
    while (ls >> w) cols.push_back(w);
    if (cols.empty()) continue;
    if (!saw_any && cols[0][0] == '{') return InputKind::kRecords;
    saw_any = true;
    if (cols.size() != 2 || !fieldex::is_bio_label(cols[1])) all_bio = false;
  }
  if (!saw_any) return InputKind::kEmpty;
  return all_bio ? InputKind::kBio : InputKind::kTokens;
}

// Strip the leading separator / trailing end marker a record file carries.
std::vector<std::string> strip_wrapping(const std::vector<std::string>& in) {
  if (in.size() >= 2 && in.front() == fieldex::kCommaToken && in.back() == fieldex::kEosToken) {
    return {in.begin() + 1, in.end() - 1};
  }
  return in;
}

std::vector<std::vector<std::string>> gather_inputs(const std::string& path, InputKind kind,
                                                    const fieldex::FieldSchema& schema) {
  std::vector<std::vector<std::string>> seqs;
  if (kind == InputKind::kRecords) {
    for (const auto& rec : fieldex::read_e2e_jsonl(path, schema)) {
      seqs.push_back(strip_wrapping(rec.input_tokens));
    }
  } else if (kind == InputKind::kBio) {
    for (auto& s : fieldex::read_bio(path)) seqs.push_back(std::move(s.tokens));
  } else if (kind == InputKind::kTokens) {
    std::ifstream in(path);
    if (!in) throw fieldex::IoError("cannot open input file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::vector<std::string> toks;
      std::string w;
      while (ls >> w) toks.push_back(w);
      if (!toks.empty()) seqs.push_back(std::move(toks));
    }
  }
  return seqs;
}

int cmd_predict(const PredictArgs& a) {
  const fieldex::CheckpointMeta meta = fieldex::read_checkpoint_meta(a.ckpt);
  if (!meta.config.is_object() || !meta.config.contains("model")) {
    throw fieldex::FormatError(a.ckpt + ": checkpoint config lacks a \"model\" section");
  }
  const fieldex::Vocabulary vocab = fieldex::Vocabulary::from_json(meta.vocab);

  fieldex::FieldSchema schema;
  if (!a.schema.empty()) {
    schema = fieldex::read_schema(a.schema);
  } else if (meta.config.contains("schema")) {
    schema = fieldex::schema_from_json(meta.config["schema"], a.ckpt);
  } else {
    throw fieldex::FormatError(a.ckpt + ": checkpoint embeds no schema; pass --schema");
  }

  const InputKind kind = classify_input(a.input);
  const std::vector<std::vector<std::string>> inputs = gather_inputs(a.input, kind, schema);

  fieldex::Rng init_rng = fieldex::Rng(a.seed).derive("init");
  std::vector<fieldex::E2ERecord> out_records;
  out_records.reserve(inputs.size());

  if (meta.kind == "pointer") {
    const fieldex::PointerModelConfig mc =
        fieldex::pointer_config_from_json(meta.config["model"], a.ckpt);
    if (mc.fields != schema.fields) {
      throw fieldex::FormatError(a.ckpt + ": schema fields do not match the checkpoint decoders");
    }
    auto model = fieldex::init_pointer_model<float>(mc, vocab.size(), init_rng);
    fieldex::load_checkpoint_params(a.ckpt, model.store);
    for (const auto& toks : inputs) {
      std::vector<std::string> wrapped;
      wrapped.reserve(toks.size() + 2);
      wrapped.push_back(fieldex::kCommaToken);
      wrapped.insert(wrapped.end(), toks.begin(), toks.end());
      wrapped.push_back(fieldex::kEosToken);
      const std::vector<int> ids = fieldex::encode_tokens(vocab, wrapped);
      fieldex::E2ERecord rec;
      rec.targets = fieldex::pointer_decode(model, ids, wrapped, vocab);
      rec.input_tokens = std::move(wrapped);
      out_records.push_back(std::move(rec));
    }
  } else if (meta.kind == "tagger") {
    const fieldex::TaggerConfig tc = fieldex::tagger_config_from_json(meta.config["model"], a.ckpt);
    auto model = fieldex::init_tagger<float>(tc, vocab.size(), init_rng);
    fieldex::load_checkpoint_params(a.ckpt, model.store);
    std::vector<fieldex::BioSentence> tagged;
    tagged.reserve(inputs.size());
    for (const auto& toks : inputs) {
      const std::vector<std::string> labels =
          fieldex::tag(model, fieldex::encode_tokens(vocab, toks));
      out_records.push_back(fieldex::baseline_to_e2e(toks, labels, schema));
      tagged.push_back({toks, labels});
    }
    fieldex::write_bio(a.out + ".bio", tagged);
  } else {
    throw fieldex::FormatError(a.ckpt + ": unknown checkpoint kind \"" + meta.kind + "\"");
  }

  fieldex::write_e2e_jsonl(a.out, out_records, schema);
  std::cout << "predicted " << out_records.size() << " records -> " << a.out;
  if (meta.kind == "tagger") std::cout << " (labels: " << a.out << ".bio)";
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalArgs {
  std::string pred;
  std::string gold;
  std::string schema;
  std::string out;
  bool bio = false;
};

std::vector<fieldex::FieldValues> load_field_values(const std::string& path,
                                                    const fieldex::FieldSchema& schema) {
  std::vector<fieldex::FieldValues> values;
  for (auto& rec : fieldex::read_e2e_jsonl(path, schema)) values.push_back(std::move(rec.targets));
  return values;
}

int cmd_evaluate(const EvalArgs& a) {
  if (a.bio) {
    const std::vector<fieldex::BioSentence> pred = fieldex::read_bio(a.pred);
    const std::vector<fieldex::BioSentence> gold = fieldex::read_bio(a.gold);
    if (pred.size() != gold.size()) {
      throw fieldex::FormatError("sentence count mismatch: " + std::to_string(pred.size()) +
                                 " predicted vs " + std::to_string(gold.size()) + " gold");
    }
    const fieldex::ChunkScore s = fieldex::chunk_f1(pred, gold);
    std::cout << "sentences: " << pred.size() << "\n";
    std::cout << "chunks: " << s.predicted << " predicted, " << s.gold << " gold, " << s.correct
              << " correct\n";
    std::cout << "precision: " << f4(s.precision()) << "\nrecall: " << f4(s.recall())
              << "\nf1: " << f4(s.f1()) << "\n";
    if (!a.out.empty()) {
      ordered_json j;
      j["sentences"] = pred.size();
      j["predicted"] = s.predicted;
      j["gold"] = s.gold;
      j["correct"] = s.correct;
      j["precision"] = s.precision();
      j["recall"] = s.recall();
      j["f1"] = s.f1();
      write_json_file(a.out, j);
    }
    return 0;
  }

  const std::string schema_path = a.schema.empty() ? default_schema_path(a.gold) : a.schema;
  const fieldex::FieldSchema schema = fieldex::read_schema(schema_path);
  const std::vector<fieldex::FieldValues> pred = load_field_values(a.pred, schema);
  const std::vector<fieldex::FieldValues> gold = load_field_values(a.gold, schema);
  if (pred.size() != gold.size()) {
    throw fieldex::FormatError("record count mismatch: " + std::to_string(pred.size()) +
                               " predictions vs " + std::to_string(gold.size()) + " gold records");
  }
  const fieldex::EvalReport report = fieldex::muc5_score(pred, gold, schema);
  std::cout << fieldex::format_eval_report(report);
  if (!a.out.empty()) write_json_file(a.out, fieldex::eval_report_to_json(report));
  return 0;
}

// ---------------------------------------------------------------------------
// significance

struct SigArgs {
  std::string pred_a;
  std::string pred_b;
  std::string gold;
  std::string schema;
  std::string out;
  long resamples = 10000;
  std::uint64_t seed = 42;
};

int cmd_significance(const SigArgs& a) {
  const std::string schema_path = a.schema.empty() ? default_schema_path(a.gold) : a.schema;
  const fieldex::FieldSchema schema = fieldex::read_schema(schema_path);
  const std::vector<fieldex::FieldValues> pa = load_field_values(a.pred_a, schema);
  const std::vector<fieldex::FieldValues> pb = load_field_values(a.pred_b, schema);
  const std::vector<fieldex::FieldValues> gold = load_field_values(a.gold, schema);
  if (pa.size() != gold.size() || pb.size() != gold.size()) {
    throw fieldex::FormatError("record count mismatch: " + std::to_string(pa.size()) + " (A) vs " +
                               std::to_string(pb.size()) + " (B) vs " +
                               std::to_string(gold.size()) + " gold records");
  }

  fieldex::Rng rng = fieldex::Rng(a.seed).derive("bootstrap");
  const fieldex::SignificanceResult res =
      fieldex::bootstrap_significance(pa, pb, gold, schema, a.resamples, rng);

  std::cout << "A: " << a.pred_a << " (micro F1 " << f4(res.full_f1_a) << ")\n";
  std::cout << "B: " << a.pred_b << " (micro F1 " << f4(res.full_f1_b) << ")\n";
  std::cout << "better: " << res.better << "\n";
  std::cout << "p-value: " << f4(res.p) << " (" << res.resamples << " resamples)\n";
  if (!a.out.empty()) write_json_file(a.out, fieldex::significance_to_json(res));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"field extraction toolkit: pointer-network and tagging models over BIO corpora"};
  app.require_subcommand(1);

  ConvertArgs ca;
  auto* convert = app.add_subcommand("convert", "convert BIO annotation to extraction records");
  convert->add_option("bio", ca.bio_path, "BIO-annotated input file")->required();
  convert->add_option("--dataset", ca.dataset, "dataset kind: atis, movie, or restaurant")
      ->required();
  convert->add_option("--out", ca.out, "output record file (JSON lines)")->required();
  convert->add_option("--schema", ca.schema_in, "reuse an existing schema instead of deriving one");
  convert->add_option("--schema-out", ca.schema_out,
                      "where to write the derived schema (default: alongside --out)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--model", ta.model, "pointer or baseline")
      ->required()
      ->check(CLI::IsMember({"pointer", "baseline"}));
  train->add_option("--data", ta.data, "record JSONL (pointer) or BIO file (baseline)")->required();
  train->add_option("--out", ta.out, "checkpoint path; also writes <out>.log and a validation dump")
      ->required();
  train->add_option("--schema", ta.schema,
                    "schema path (pointer default: derived from --data; baseline: optional, "
                    "embedded so predict can emit records)");
  train->add_option("--config", ta.config, "JSON file with \"train\" and \"model\" sections");
  train->add_option("--seed", ta.seed, "root random seed")->capture_default_str();
  train->add_option("--max-updates", ta.max_updates, "override the configured update budget");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "decode field values with a trained checkpoint");
  predict->add_option("checkpoint", pa.ckpt, "trained checkpoint")->required();
  predict->add_option("input", pa.input, "record JSONL, BIO file, or one sentence per line")
      ->required();
  predict->add_option("--out", pa.out, "output record file (JSON lines)")->required();
  predict->add_option("--schema", pa.schema, "override the schema embedded in the checkpoint");
  predict->add_option("--seed", pa.seed, "root random seed")->capture_default_str();

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold annotation");
  evaluate->add_option("predictions", ea.pred, "predicted records (or BIO with --bio)")->required();
  evaluate->add_option("gold", ea.gold, "gold records (or BIO with --bio)")->required();
  evaluate->add_option("--schema", ea.schema, "schema path (default: derived from the gold path)");
  evaluate->add_flag("--bio", ea.bio, "score BIO files by chunk F1 instead of record exact match");
  evaluate->add_option("--out", ea.out, "also write the report as JSON");

  SigArgs ga;
  auto* sig = app.add_subcommand("significance",
                                 "paired bootstrap test between two prediction files");
  sig->add_option("predictions_a", ga.pred_a, "first system's records")->required();
  sig->add_option("predictions_b", ga.pred_b, "second system's records")->required();
  sig->add_option("gold", ga.gold, "gold records")->required();
  sig->add_option("--schema", ga.schema, "schema path (default: derived from the gold path)");
  sig->add_option("--resamples", ga.resamples, "bootstrap resamples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sig->add_option("--seed", ga.seed, "root random seed")->capture_default_str();
  sig->add_option("--out", ga.out, "also write the result as JSON");

  std::uint64_t selfcheck_seed = 42;
  auto* selfcheck = app.add_subcommand("selfcheck", "run fast internal diagnostics");
  selfcheck->add_option("--seed", selfcheck_seed, "root random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (convert->parsed()) return cmd_convert(ca);
    if (train->parsed()) return cmd_train(ta);
    if (predict->parsed()) return cmd_predict(pa);
    if (evaluate->parsed()) return cmd_evaluate(ea);
    if (sig->parsed()) return cmd_significance(ga);
    if (selfcheck->parsed()) {
      return fieldex::run_selfcheck(std::cout, selfcheck_seed) == 0 ? 0 : 3;
    }
  } catch (const fieldex::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fieldex::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
