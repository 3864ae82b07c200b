#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "fieldex/corpus.hpp"
#include "support/synthetic.hpp"
#include "support/testutil.hpp"

using fieldex::BioSentence;
using fieldex::DatasetKind;
using fieldex::E2ERecord;
using fieldex::FieldSchema;
using fieldex::FormatError;
using fieldex::InvariantError;
using fieldex::Rng;
using fieldex::Vocabulary;

namespace {

const char* kRestaurantBlock =
    "2 B-Rating\n"
    "start I-Rating\n"
    "restaurants O\n"
    "with O\n"
    "inside B-Amenity\n"
    "dining I-Amenity\n";

const char* kMovieBlock =
    "show O\n"
    "me O\n"
    "films O\n"
    "elvis B-ACTOR\n"
    "films O\n"
    "set B-PLOT\n"
    "in I-PLOT\n"
    "hawaii I-PLOT\n";

std::vector<BioSentence> parse(const std::string& text) {
  std::istringstream in(text);
  return fieldex::read_bio(in, "<test>");
}

// Gold air-travel sentence: "cheapest airfare from tacoma to st. louis and
// detroit" with destination mentioned twice.
BioSentence airfare_sentence() {
  BioSentence s;
  s.tokens = {"cheapest", "airfare", "from", "tacoma", "to", "st.", "louis", "and", "detroit"};
  s.labels = {"B-cost_relative", "O", "O", "B-fromloc", "O", "B-toloc", "I-toloc", "O", "B-toloc"};
  return s;
}

FieldSchema airfare_schema() {
  FieldSchema schema;
  schema.dataset = "atis";
  schema.fields = {"fromloc",       "toloc", "airline_name", "cost_relative", "period_of_day",
                   "time",          "time_relative", "day_name", "day_number", "month_name"};
  return schema;
}

}  // namespace

TEST_CASE("read_bio parses the restaurant sample block") {
  auto sentences = parse(kRestaurantBlock);
  REQUIRE(sentences.size() == 1);
  CHECK(sentences[0].tokens ==
        std::vector<std::string>{"2", "start", "restaurants", "with", "inside", "dining"});
  CHECK(sentences[0].labels == std::vector<std::string>{"B-Rating", "I-Rating", "O", "O",
                                                        "B-Amenity", "I-Amenity"});
}

TEST_CASE("read_bio basics") {
  CHECK(parse("").empty());
  auto one = parse("hi O\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0].tokens == std::vector<std::string>{"hi"});

  auto two = parse("a O\nb O\n\nc O\n");
  REQUIRE(two.size() == 2);
  CHECK(two[1].tokens == std::vector<std::string>{"c"});

  // tab separator and missing trailing blank line are fine
  auto tabbed = parse("x\tB-typ");
  REQUIRE(tabbed.size() == 1);
  CHECK(tabbed[0].labels == std::vector<std::string>{"B-typ"});
}

TEST_CASE("read_bio reports malformed lines with their line number") {
  try {
    parse("a O\nb O c\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("<test>:2") != std::string::npos);
  }
  try {
    parse("a O\nnolabels\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  try {
    parse("a X-bad\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":1") != std::string::npos);
    CHECK(msg.find("X-bad") != std::string::npos);
  }
}

TEST_CASE("chunk_bio extracts the restaurant sample chunks") {
  auto chunks = fieldex::chunk_bio(parse(kRestaurantBlock)[0]);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].field == "Rating");
  CHECK(chunks[0].tokens == std::vector<std::string>{"2", "start"});
  CHECK(chunks[1].field == "Amenity");
  CHECK(chunks[1].tokens == std::vector<std::string>{"inside", "dining"});
}

TEST_CASE("chunk_bio extracts the movie sample chunks") {
  auto chunks = fieldex::chunk_bio(parse(kMovieBlock)[0]);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].field == "ACTOR");
  CHECK(chunks[0].tokens == std::vector<std::string>{"elvis"});
  CHECK(chunks[1].field == "PLOT");
  CHECK(chunks[1].tokens == std::vector<std::string>{"set", "in", "hawaii"});
}

TEST_CASE("chunk_bio corner cases") {
  BioSentence all_o;
  all_o.tokens = {"a", "b"};
  all_o.labels = {"O", "O"};
  CHECK(fieldex::chunk_bio(all_o).empty());

  // lenient repair: I-X without an opener starts a chunk
  BioSentence orphan;
  orphan.tokens = {"a", "b", "c"};
  orphan.labels = {"I-X", "I-X", "O"};
  auto chunks = fieldex::chunk_bio(orphan);
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].field == "X");
  CHECK(chunks[0].tokens == std::vector<std::string>{"a", "b"});

  // I of a different type starts a fresh chunk
  BioSentence switched;
  switched.tokens = {"a", "b"};
  switched.labels = {"B-X", "I-Y"};
  chunks = fieldex::chunk_bio(switched);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].field == "X");
  CHECK(chunks[1].field == "Y");

  // adjacent B labels of the same type are separate chunks
  BioSentence twice;
  twice.tokens = {"a", "b"};
  twice.labels = {"B-X", "B-X"};
  CHECK(fieldex::chunk_bio(twice).size() == 2);
}

TEST_CASE("chunking round-trips well-formed BIO labels") {
  Rng rng(101);
  for (int i = 0; i < 1000; ++i) {
    auto s = testutil::random_wellformed_bio(rng);
    auto rebuilt = fieldex::chunks_to_bio(fieldex::chunk_bio(s), s.tokens.size());
    CHECK(rebuilt == s.labels);
  }
}

TEST_CASE("to_e2e converts the air travel sample") {
  auto rec = fieldex::to_e2e(airfare_sentence(), airfare_schema());

  std::vector<std::string> want_input = {",",  "cheapest", "airfare", "from",  "tacoma", "to",
                                         "st.", "louis",    "and",     "detroit", "<eos>"};
  CHECK(rec.input_tokens == want_input);
  CHECK(rec.targets[0] == std::vector<std::string>{"tacoma"});
  CHECK(rec.targets[1] == std::vector<std::string>{"st.", "louis", ",", "detroit"});
  CHECK(rec.targets[3] == std::vector<std::string>{"cheapest"});
  for (size_t k : {2u, 4u, 5u, 6u, 7u, 8u, 9u}) CHECK(rec.targets[k].empty());
}

TEST_CASE("to_e2e keeps zero-chunk sentences and drops non-schema fields") {
  FieldSchema schema;
  schema.dataset = "movie";
  schema.fields = {"color"};

  BioSentence plain;
  plain.tokens = {"hello", "there"};
  plain.labels = {"O", "O"};
  BioSentence other;
  other.tokens = {"red", "cat"};
  other.labels = {"B-color", "B-animal"};

  auto records = fieldex::to_e2e(std::vector<BioSentence>{plain, other}, schema);
  REQUIRE(records.size() == 2);
  CHECK(records[0].targets[0].empty());
  CHECK(records[1].targets[0] == std::vector<std::string>{"red"});  // animal chunk dropped
}

TEST_CASE("conversion soundness on random sentences") {
  Rng rng(103);
  auto sentences = std::vector<BioSentence>{};
  for (int i = 0; i < 1000; ++i) sentences.push_back(testutil::random_wellformed_bio(rng));
  auto schema = fieldex::select_schema(sentences, DatasetKind::kMovie);
  auto records = fieldex::to_e2e(sentences, schema);
  REQUIRE(records.size() == sentences.size());
  for (const auto& r : records) {
    for (const auto& target : r.targets) {
      for (const auto& tok : target) {
        const bool present = std::find(r.input_tokens.begin(), r.input_tokens.end(), tok) !=
                             r.input_tokens.end();
        CHECK(present);
      }
    }
  }
}

TEST_CASE("select_schema keeps every label for the full-inventory datasets") {
  Rng rng(104);
  auto sentences = testutil::synthetic_corpus(rng, 200);
  auto schema = fieldex::select_schema(sentences, DatasetKind::kMovie);
  REQUIRE(schema.fields.size() == 3);
  // place appears in every sentence (sometimes twice), animal in every
  // sentence once, color in ~70%: frequency order is place, animal, color
  CHECK(schema.fields[0] == "place");
  CHECK(schema.fields[1] == "animal");
  CHECK(schema.fields[2] == "color");
}

TEST_CASE("select_schema caps the air travel configuration at ten fields") {
  // 12 label types; type t appears (13 - t) times, so type_01..type_10 win
  // and the tie between none is relevant; lexicographic order breaks equals.
  std::vector<BioSentence> sentences;
  for (int t = 1; t <= 12; ++t) {
    const std::string type = "type_" + std::string(t < 10 ? "0" : "") + std::to_string(t);
    for (int n = 0; n < 13 - t; ++n) {
      BioSentence s;
      s.tokens = {"w"};
      s.labels = {"B-" + type};
      sentences.push_back(s);
    }
  }
  auto schema = fieldex::select_schema(sentences, DatasetKind::kAtis);
  REQUIRE(schema.fields.size() == 10);
  CHECK(schema.fields.front() == "type_01");
  CHECK(schema.fields.back() == "type_10");

  // frequency ties break lexicographically
  std::vector<BioSentence> tied;
  for (const char* type : {"zz", "aa", "mm"}) {
    BioSentence s;
    s.tokens = {"w"};
    s.labels = {std::string("B-") + type};
    tied.push_back(s);
  }
  auto tie_schema = fieldex::select_schema(tied, DatasetKind::kMovie);
  CHECK(tie_schema.fields == std::vector<std::string>{"aa", "mm", "zz"});

  CHECK_THROWS_AS(fieldex::select_schema({}, DatasetKind::kAtis), InvariantError);
}

TEST_CASE("vocabulary reserves the special symbols") {
  Vocabulary v;
  CHECK(v.size() == 4);
  CHECK(v.token(fieldex::kPadId) == fieldex::kPadToken);
  CHECK(v.token(fieldex::kUnkId) == fieldex::kUnkToken);
  CHECK(v.token(fieldex::kEosId) == fieldex::kEosToken);
  CHECK(v.token(fieldex::kCommaId) == fieldex::kCommaToken);
}

TEST_CASE("vocabulary build and lookup") {
  E2ERecord rec;
  rec.input_tokens = {",", "a", "b", "a", "<eos>"};
  auto v = Vocabulary::build({rec});
  CHECK(v.size() == 6);  // 4 reserved + a + b
  CHECK(v.id("a") == 4);  // most frequent non-reserved token first
  CHECK(v.id("b") == 5);
  CHECK(v.id("never-seen") == fieldex::kUnkId);
  CHECK(v.token(v.id("a")) == "a");

  auto v2 = Vocabulary::build({rec});
  CHECK(v.tokens() == v2.tokens());

  auto strict = Vocabulary::build({rec}, 2);
  CHECK(strict.contains("a"));       // count 2
  CHECK_FALSE(strict.contains("b"));  // count 1
}

TEST_CASE("vocabulary json round trip") {
  E2ERecord rec;
  rec.input_tokens = {",", "x", "y", "<eos>"};
  auto v = Vocabulary::build({rec});
  auto back = Vocabulary::from_json(v.to_json());
  CHECK(back.tokens() == v.tokens());

  auto j = v.to_json();
  j[0] = "wrong";
  CHECK_THROWS_AS(Vocabulary::from_json(j), FormatError);
}

TEST_CASE("encode_target appends the end marker") {
  Vocabulary v;
  auto ids = fieldex::encode_target(v, {","});
  CHECK(ids == std::vector<int>{fieldex::kCommaId, fieldex::kEosId});
  CHECK(fieldex::encode_target(v, {}) == std::vector<int>{fieldex::kEosId});
}

TEST_CASE("record files round trip") {
  Rng rng(105);
  auto sentences = std::vector<BioSentence>{};
  for (int i = 0; i < 50; ++i) sentences.push_back(testutil::random_wellformed_bio(rng));
  auto schema = fieldex::select_schema(sentences, DatasetKind::kRestaurant);
  auto records = fieldex::to_e2e(sentences, schema);

  testutil::TempDir dir("corpus_roundtrip");
  const std::string data_path = dir.path("records.jsonl");
  const std::string schema_path = dir.path("records.schema.json");
  fieldex::write_e2e_jsonl(data_path, records, schema);
  fieldex::write_schema(schema_path, schema);

  auto schema2 = fieldex::read_schema(schema_path);
  CHECK(schema2.fields == schema.fields);
  CHECK(schema2.dataset == schema.dataset);

  auto records2 = fieldex::read_e2e_jsonl(data_path, schema2);
  REQUIRE(records2.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records2[i].input_tokens == records[i].input_tokens);
    CHECK(records2[i].targets == records[i].targets);
  }
}

TEST_CASE("serialization errors are reported with their source") {
  testutil::TempDir dir("corpus_errors");
  const std::string schema_path = dir.path("bad.schema.json");
  testutil::write_file(schema_path, "{\"format\": \"other/9\", \"fields\": [\"a\"]}");
  CHECK_THROWS_AS(fieldex::read_schema(schema_path), FormatError);

  FieldSchema schema;
  schema.dataset = "movie";
  schema.fields = {"a"};
  const std::string data_path = dir.path("bad.jsonl");
  testutil::write_file(data_path, "{\"input\": [\"x\"], \"fields\": {\"zzz\": []}}\n");
  try {
    fieldex::read_e2e_jsonl(data_path, schema);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":1") != std::string::npos);
    CHECK(msg.find("zzz") != std::string::npos);
  }

  testutil::write_file(data_path, "not json\n");
  CHECK_THROWS_AS(fieldex::read_e2e_jsonl(data_path, schema), FormatError);

  CHECK_THROWS_AS(fieldex::read_bio(dir.path("missing.bio")), fieldex::IoError);
  CHECK_THROWS_AS(fieldex::parse_dataset_kind("banana"), FormatError);
}
