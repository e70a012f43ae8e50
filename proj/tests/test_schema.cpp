#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mbct/core.hpp"
#include "mbct/schema.hpp"

using namespace mbct;

TEST_CASE("prediction buckets") {
  CHECK(prediction_bucket(0.004, 100) == 0);
  CHECK(prediction_bucket(1.0, 100) == 99);
  CHECK(prediction_bucket(0.5, 100) == 50);
  CHECK(prediction_bucket(0.0, 100) == 0);
}

TEST_CASE("csv parsing") {
  const auto t = parse_csv("a,b,prediction,label\nx,\"q,1\",0.2,1\n\ny,z,0.3,0\n");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "q,1");
  CHECK(t.line_numbers[1] == 4);
  CHECK_THROWS_WITH(parse_csv("a,b\n1\n"), doctest::Contains("line 2"));
}

TEST_CASE("default schema from header") {
  auto schema = Schema::from_header({"site", "prediction", "label", "true_prob"});
  const auto t = parse_csv("site,prediction,label,true_prob\nA,0.2,1,0.25\nB,0.4,0,0.3\nA,0.1,0,0.1\n");
  const auto ds = table_to_dataset(t, schema);
  CHECK(schema.frozen());
  REQUIRE(ds.size() == 3);
  CHECK(ds.feature_names == std::vector<std::string>{"site"});
  CHECK(ds.feature_cardinalities[0] == 3);  // A, B, unseen
  CHECK(ds.samples[1].features[0] == 1);
  CHECK(*ds.samples[1].true_prob == 0.3);

  const auto t2 = parse_csv("site,prediction,label,true_prob\nC,0.2,1,0.2\nB,0.2,1,0.2\n");
  const auto d2 = table_to_dataset(t2, schema);
  CHECK(d2.samples[0].features[0] == 2);
  CHECK(d2.samples[1].features[0] == 1);
}

TEST_CASE("ingest errors carry line numbers") {
  auto schema = Schema::from_header({"site", "prediction", "label"});
  CHECK_THROWS_WITH(table_to_dataset(parse_csv("site,prediction,label\nA,0.2,1\nB,0.3,0.5\n"), schema),
                    doctest::Contains("line 3"));
  auto s2 = Schema::from_header({"site", "prediction", "label"});
  CHECK_THROWS_WITH(table_to_dataset(parse_csv("site,prediction,label\nA,abc,1\n"), s2),
                    doctest::Contains("line 2"));
  auto s3 = Schema::from_header({"site", "prediction", "label"});
  CHECK_THROWS_WITH(table_to_dataset(parse_csv("site,prediction,label\nA,1.5,1\n"), s3),
                    doctest::Contains("line 2"));
  CHECK_THROWS(Schema::from_header({"site", "label"}));
}

TEST_CASE("quantile and equal-width discretization") {
  CHECK(quantile_boundaries({5, 5, 5, 5}, 4).empty());
  const auto q = quantile_boundaries({1, 2, 3, 4, 5, 6, 7, 8}, 4);
  CHECK(q.size() == 3);

  nlohmann::json j = {{"columns",
                       {{{"name", "age"}, {"role", "feature"}, {"discretization", "quantile:4"}},
                        {{"name", "score"}, {"role", "feature"}, {"discretization", "equal_width:2"}},
                        {{"name", "prediction"}, {"role", "prediction"}},
                        {{"name", "label"}, {"role", "label"}},
                        {{"name", "junk"}, {"role", "ignore"}}}}};
  auto schema = Schema::from_json(j);
  std::string csv = "age,score,prediction,label,junk\n";
  for (int i = 1; i <= 8; ++i)
    csv += std::to_string(i) + "," + std::to_string(i * 10) + ",0.5," + std::to_string(i % 2) + ",zz\n";
  const auto ds = table_to_dataset(parse_csv(csv), schema);
  CHECK(ds.num_features() == 2);
  CHECK(ds.samples[0].features[0] == 0);
  CHECK(ds.samples[7].features[0] == 3);
  CHECK(ds.samples[0].features[1] == 0);
  CHECK(ds.samples[7].features[1] == 1);

  // Frozen boundaries are reused on new data.
  const auto frozen = Schema::from_json(schema.to_json());
  CHECK(frozen.frozen());
  auto copy = frozen;
  const auto d2 = table_to_dataset(parse_csv("age,score,prediction,label,junk\n100,-5,0.1,0,x\n"), copy);
  CHECK(d2.samples[0].features[0] == 3);
  CHECK(d2.samples[0].features[1] == 0);
  CHECK(copy.to_json() == frozen.to_json());

  nlohmann::json constant = {{"columns",
                              {{{"name", "c"}, {"role", "feature"}, {"discretization", "quantile:5"}},
                               {{"name", "prediction"}, {"role", "prediction"}},
                               {{"name", "label"}, {"role", "label"}}}}};
  auto cs = Schema::from_json(constant);
  const auto d3 = table_to_dataset(parse_csv("c,prediction,label\n3,0.1,0\n3,0.2,1\n3,0.3,0\n"), cs);
  CHECK(d3.feature_cardinalities[0] == 1);

  CHECK_THROWS(Schema::from_json(nlohmann::json{{"columns", {{{"name", "x"}, {"role", "wat"}}}}}));
  CHECK_THROWS(Schema::from_json(nlohmann::json{
      {"columns", {{{"name", "x"}, {"role", "feature"}, {"discretization", "quantile:0"}}}}}));
}

TEST_CASE("schema file load") {
  const auto path = std::filesystem::temp_directory_path() / "mbct_schema_test.json";
  {
    std::ofstream out(path);
    out << R"({"columns":[{"name":"s","role":"feature"},{"name":"prediction","role":"prediction"},)"
        << R"({"name":"label","role":"label"}]})";
  }
  const auto s = Schema::load(path.string());
  CHECK(s.columns.size() == 3);
  CHECK(s.feature_names() == std::vector<std::string>{"s"});
  std::filesystem::remove(path);
  CHECK_THROWS(Schema::load("/nonexistent.json"));
}
