#include "support/markets.hpp"
#include "tumatch/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

namespace tumatch {
namespace {

const std::string kSamples = TUMATCH_SAMPLES_DIR;

std::string format_error(const std::string& text) {
  try {
    parse_market(text, "m.json");
  } catch (const FormatError& e) {
    return e.what();
  }
  return "<no error>";
}

const char* kMinimal = R"({
  "meta": {"name": "t", "format_version": "1"},
  "workers": {"mass": [1], "scale": [1], "utility": [[0]], "model": {"type": "logit"}},
  "firms": {"mass": [1], "scale": [1], "productivity": [[1]], "model": {"type": "logit"}}
})";

TEST(MarketFile, ParsesMinimalDocument) {
  const auto doc = parse_market(kMinimal);
  EXPECT_EQ(doc.name, "t");
  EXPECT_EQ(doc.spec.firm_productivity(0, 0), 1.0);
  EXPECT_NO_THROW(validate_spec(doc.spec));
}

TEST(MarketFile, LoadsEverySample) {
  for (const char* name : {"symmetric_1x1.json", "productive_1x1.json", "logit_2x3.json", "nested_3x3.json", "gnl_2x2.json"}) {
    const auto doc = load_market(kSamples + "/" + name);
    EXPECT_NO_THROW(validate_spec(doc.spec)) << name;
  }
  const auto nested = load_market(kSamples + "/nested_3x3.json");
  const auto& nl = std::get<NestedLogit>(nested.spec.worker_model);
  EXPECT_EQ(nl.nest_of, (std::vector<int>{0, 0, 1}));
}

TEST(MarketFile, RoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MarketSpec s = seed % 2 ? testing::random_gnl_market(seed, 3, 2) : testing::random_nested_market(seed, 2, 4);
    const auto back = parse_market(dump_document(market_json(s, "rt")));
    EXPECT_EQ(back.name, "rt");
    EXPECT_EQ(back.spec.worker_utility, s.worker_utility);
    EXPECT_EQ(back.spec.firm_productivity, s.firm_productivity);
    EXPECT_EQ(back.spec.worker_scale, s.worker_scale);
    EXPECT_EQ(back.spec.firm_mass, s.firm_mass);
    EXPECT_EQ(model_name(back.spec.worker_model), model_name(s.worker_model));
    EXPECT_EQ(dump_document(market_json(back.spec, "rt")), dump_document(market_json(s, "rt")));
  }
}

TEST(MarketFile, MissingKeyNamesPointerAndLine) {
  const std::string text = R"({
  "meta": {"name": "t", "format_version": "1"},
  "workers": {"mass": [1], "scale": [1], "utility": [[0]], "model": {"type": "logit"}},
  "firms": {
    "mass": [1],
    "productivity": [[1]],
    "model": {"type": "logit"}
  }
})";
  const auto msg = format_error(text);
  EXPECT_NE(msg.find("m.json:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/firms: missing key 'scale'"), std::string::npos) << msg;
}

TEST(MarketFile, WrongTypeReportsItsLine) {
  const std::string text = R"({
  "meta": {"name": "t", "format_version": "1"},
  "workers": {
    "mass": [1],
    "scale": ["one"],
    "utility": [[0]],
    "model": {"type": "logit"}
  },
  "firms": {"mass": [1], "scale": [1], "productivity": [[1]], "model": {"type": "logit"}}
})";
  const auto msg = format_error(text);
  EXPECT_NE(msg.find("m.json:5: /workers/scale/0: expected a number"), std::string::npos) << msg;
}

TEST(MarketFile, RejectsUnknownKeysAndModels) {
  std::string text = kMinimal;
  text.replace(text.find("\"mass\": [1], \"scale\""), 6, "\"colour\": 1, \"mass\"");
  EXPECT_NE(format_error(text).find("unknown key 'colour'"), std::string::npos);
  text = kMinimal;
  text.replace(text.find("\"logit\""), 7, "\"probit\"");
  EXPECT_NE(format_error(text).find("unknown choice model 'probit'"), std::string::npos);
}

TEST(MarketFile, RejectsRaggedMatricesAndBadNestLabels) {
  std::string text = kMinimal;
  text.replace(text.find("[[0]]"), 5, "[[0, 1], [2]]");
  EXPECT_NE(format_error(text).find("dimension mismatch"), std::string::npos);
  text = kMinimal;
  text.replace(text.find("{\"type\": \"logit\"}"), 17, R"({"type": "nested_logit", "nest_of": [2], "lambda": [0.5]})");
  EXPECT_NE(format_error(text).find("nest label 2 outside 1..1"), std::string::npos);
}

TEST(MarketFile, MalformedJsonAndVersion) {
  EXPECT_NE(format_error("{\n  \"meta\": ,\n}").find("m.json:2: malformed"), std::string::npos);
  std::string text = kMinimal;
  text.replace(text.find("\"1\""), 3, "\"7\"");
  EXPECT_NE(format_error(text).find("unsupported format version"), std::string::npos);
}

TEST(MarketFile, MissingFileIsAnIoError) { EXPECT_THROW(load_market(kSamples + "/does_not_exist.json"), IoError); }

TEST(ResultFile, RoundTrip) {
  const auto market = validate_spec(load_market(kSamples + "/logit_2x3.json").spec);
  SolveOptions o;
  o.trace_every = 10;
  const auto r = solve(market, o);
  const auto path = (std::filesystem::temp_directory_path() / "tumatch_result_roundtrip.json").string();
  save_result(path, r, echo_options(o));
  const auto back = load_result(path);
  EXPECT_EQ(back.wages, r.wages);
  EXPECT_EQ(back.matching.matches, r.matching.matches);
  EXPECT_EQ(back.matching.vacant_firms, r.matching.vacant_firms);
  EXPECT_EQ(back.iterations, r.iterations);
  EXPECT_EQ(back.converged, r.converged);
  EXPECT_EQ(back.final_clearing_residual, r.final_clearing_residual);
  EXPECT_EQ(back.options.trace_every, 10);
  ASSERT_EQ(back.trace.size(), r.trace.size());
  EXPECT_EQ(back.trace.back().update_norm, r.trace.back().update_norm);
  EXPECT_EQ(load_wages(path), r.wages);
  std::filesystem::remove(path);
}

TEST(ResultFile, WriterIsDeterministic) {
  const auto market = validate_spec(load_market(kSamples + "/nested_3x3.json").spec);
  const auto a = dump_document(result_json(solve(market), {}));
  const auto b = dump_document(result_json(solve(market), {}));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.find("\"trace\""), std::string::npos);
}

TEST(FormatDouble, ShortestExactDigits) {
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(io_detail::format_double(x)), x);
}

}  // namespace
}  // namespace tumatch
