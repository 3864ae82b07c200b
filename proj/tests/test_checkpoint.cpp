#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "fieldex/checkpoint.hpp"
#include "fieldex/pointer_model.hpp"
#include "fieldex/tagger.hpp"
#include "support/testutil.hpp"

using Catch::Matchers::ContainsSubstring;
using fieldex::E2ERecord;
using fieldex::FormatError;
using fieldex::PointerModelConfig;
using fieldex::Rng;
using fieldex::Vocabulary;
using fieldex::pointer_config_from_json;
using fieldex::pointer_config_to_json;
using fieldex::save_checkpoint;
using fieldex::tagger_config_from_json;
using fieldex::tagger_config_to_json;
using testutil::TempDir;

namespace {

struct PointerSetup {
  PointerModelConfig config;
  Vocabulary vocab;
  E2ERecord record;
  fieldex::PreparedRecord prepared;
  fieldex::PointerModel<float> model;
};

PointerSetup make_pointer_setup(uint64_t seed) {
  PointerSetup s;
  s.config.embed_dim = 5;
  s.config.encoder_hidden = 6;
  s.config.decoder_hidden = 4;
  s.config.attn_dim = 3;
  s.config.fields = {"from", "to"};
  s.record.input_tokens = {",", "fly", "tacoma", "to", "detroit", "<eos>"};
  s.record.targets = {{"tacoma"}, {"detroit"}};
  s.vocab = Vocabulary::build({s.record});
  s.prepared = prepare_record(s.record, s.vocab);
  Rng rng(seed);
  s.model = fieldex::init_pointer_model<float>(s.config, s.vocab.size(), rng);
  return s;
}

std::string file_bytes(const std::string& path) { return testutil::read_file(path); }

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint save, load, save reproduces identical bytes") {
  TempDir dir("ckpt_roundtrip");
  PointerSetup a = make_pointer_setup(21);
  const std::string path1 = dir.path("a.ckpt");
  save_checkpoint(path1, "pointer", pointer_config_to_json(a.config), a.vocab.to_json(),
                  a.model.store);

  // rebuild the model from the stored metadata, load tensors, save again
  const auto meta = fieldex::read_checkpoint_meta(path1);
  CHECK(meta.kind == "pointer");
  const PointerModelConfig config2 = pointer_config_from_json(meta.config, path1);
  const Vocabulary vocab2 = Vocabulary::from_json(meta.vocab);
  Rng rng2(99);  // different seed: every value differs until the load
  auto model2 = fieldex::init_pointer_model<float>(config2, vocab2.size(), rng2);
  fieldex::load_checkpoint_params(path1, model2.store);

  for (size_t i = 0; i < a.model.store.size(); ++i) {
    CHECK(model2.store.items()[i].second.values() == a.model.store.items()[i].second.values());
  }

  const std::string path2 = dir.path("b.ckpt");
  save_checkpoint(path2, "pointer", pointer_config_to_json(config2), vocab2.to_json(),
                  model2.store);
  CHECK(file_bytes(path1) == file_bytes(path2));

  // decode before save equals decode after reload
  CHECK(fieldex::pointer_decode(a.model, a.prepared.input_ids, a.record.input_tokens, a.vocab) ==
        fieldex::pointer_decode(model2, a.prepared.input_ids, a.record.input_tokens, vocab2));
}

TEST_CASE("checkpoint manifest mirrors the parameter store") {
  TempDir dir("ckpt_manifest");
  PointerSetup a = make_pointer_setup(22);
  const std::string path = dir.path("m.ckpt");
  save_checkpoint(path, "pointer", pointer_config_to_json(a.config), a.vocab.to_json(),
                  a.model.store);
  const auto meta = fieldex::read_checkpoint_meta(path);

  REQUIRE(meta.manifest.size() == a.model.store.size());
  size_t total = 0;
  for (size_t i = 0; i < meta.manifest.size(); ++i) {
    CHECK(meta.manifest[i].first == a.model.store.items()[i].first);
    CHECK(meta.manifest[i].second == a.model.store.items()[i].second.shape());
    total += fieldex::shape_size(meta.manifest[i].second);
  }
  CHECK(total == a.model.store.total_values());  // stored set is the full architecture
  CHECK(meta.vocab == a.vocab.to_json());
}

TEST_CASE("checkpoint rejects bad magic, versions, truncation, and trailing bytes") {
  TempDir dir("ckpt_errors");
  PointerSetup a = make_pointer_setup(23);
  const std::string path = dir.path("c.ckpt");
  save_checkpoint(path, "pointer", pointer_config_to_json(a.config), a.vocab.to_json(),
                  a.model.store);
  const std::string good = file_bytes(path);
  const std::string bad_path = dir.path("bad.ckpt");

  SECTION("bad magic") {
    std::string bytes = good;
    bytes[0] = 'X';
    write_bytes(bad_path, bytes);
    CHECK_THROWS_WITH(fieldex::read_checkpoint_meta(bad_path), ContainsSubstring("magic"));
  }
  SECTION("unsupported version") {
    std::string bytes = good;
    bytes[8] = 2;  // little-endian u32 version right after the magic
    write_bytes(bad_path, bytes);
    CHECK_THROWS_WITH(fieldex::read_checkpoint_meta(bad_path), ContainsSubstring("version 2"));
  }
  SECTION("truncated header") {
    write_bytes(bad_path, good.substr(0, 10));
    CHECK_THROWS_AS(fieldex::read_checkpoint_meta(bad_path), FormatError);
  }
  SECTION("truncated metadata") {
    write_bytes(bad_path, good.substr(0, 25));
    CHECK_THROWS_AS(fieldex::read_checkpoint_meta(bad_path), FormatError);
  }
  SECTION("truncated tensor data") {
    write_bytes(bad_path, good.substr(0, good.size() - 5));
    auto fresh = make_pointer_setup(24);
    CHECK_THROWS_WITH(fieldex::load_checkpoint_params(bad_path, fresh.model.store),
                      ContainsSubstring("truncated"));
  }
  SECTION("trailing bytes") {
    write_bytes(bad_path, good + "x");
    auto fresh = make_pointer_setup(24);
    CHECK_THROWS_WITH(fieldex::load_checkpoint_params(bad_path, fresh.model.store),
                      ContainsSubstring("trailing"));
  }
}

TEST_CASE("checkpoint refuses a model whose manifest does not line up") {
  TempDir dir("ckpt_mismatch");
  PointerSetup a = make_pointer_setup(25);
  const std::string path = dir.path("d.ckpt");
  save_checkpoint(path, "pointer", pointer_config_to_json(a.config), a.vocab.to_json(),
                  a.model.store);

  SECTION("different field names") {
    PointerSetup b = make_pointer_setup(25);
    b.config.fields = {"from", "airline"};
    Rng rng(1);
    auto other = fieldex::init_pointer_model<float>(b.config, b.vocab.size(), rng);
    CHECK_THROWS_WITH(fieldex::load_checkpoint_params(path, other.store),
                      ContainsSubstring("decoder.to"));
  }
  SECTION("different hidden size") {
    PointerSetup b = make_pointer_setup(25);
    b.config.encoder_hidden = 7;
    Rng rng(1);
    auto other = fieldex::init_pointer_model<float>(b.config, b.vocab.size(), rng);
    CHECK_THROWS_WITH(fieldex::load_checkpoint_params(path, other.store),
                      ContainsSubstring("shape"));
  }
  SECTION("different parameter count") {
    PointerSetup b = make_pointer_setup(25);
    b.config.fields = {"from"};
    Rng rng(1);
    auto other = fieldex::init_pointer_model<float>(b.config, b.vocab.size(), rng);
    CHECK_THROWS_WITH(fieldex::load_checkpoint_params(path, other.store),
                      ContainsSubstring("parameters"));
  }
}

TEST_CASE("tagger checkpoints share the container with their own manifest") {
  TempDir dir("ckpt_tagger");
  fieldex::TaggerConfig tc;
  tc.embed_dim = 5;
  tc.layer1_hidden = 4;
  tc.layer2_hidden = 4;
  tc.labels = {"B-x", "I-x", "O"};
  E2ERecord rec;
  rec.input_tokens = {",", "a", "b", "<eos>"};
  rec.targets = {{"a"}};
  const Vocabulary vocab = Vocabulary::build({rec});

  Rng rng(31);
  auto m = fieldex::init_tagger<float>(tc, vocab.size(), rng);
  const std::string path = dir.path("t.ckpt");
  save_checkpoint(path, "tagger", tagger_config_to_json(tc), vocab.to_json(), m.store);

  const auto meta = fieldex::read_checkpoint_meta(path);
  CHECK(meta.kind == "tagger");
  const fieldex::TaggerConfig tc2 = tagger_config_from_json(meta.config, path);
  CHECK(tc2.labels == tc.labels);

  Rng rng2(77);
  auto m2 = fieldex::init_tagger<float>(tc2, Vocabulary::from_json(meta.vocab).size(), rng2);
  fieldex::load_checkpoint_params(path, m2.store);
  for (size_t i = 0; i < m.store.size(); ++i) {
    CHECK(m2.store.items()[i].second.values() == m.store.items()[i].second.values());
  }

  // tag results survive the round trip
  const std::vector<int> ids = encode_tokens(vocab, {"a", "b", "a"});
  CHECK(tag(m, ids) == tag(m2, ids));

  // a pointer model cannot absorb a tagger checkpoint
  PointerSetup p = make_pointer_setup(32);
  CHECK_THROWS_AS(fieldex::load_checkpoint_params(path, p.model.store), FormatError);
}
