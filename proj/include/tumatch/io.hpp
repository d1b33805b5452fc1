// Market and result documents (JSON, format version "1").
//
// Market document:
//   {
//     "meta":    { "name": "...", "format_version": "1" },
//     "workers": { "mass": [...], "scale": [...], "wage_sensitivity": [...],
//                  "utility": [[...]], "model": {...} },
//     "firms":   { "mass": [...], "scale": [...], "wage_sensitivity": [...],
//                  "productivity": [[...]], "model": {...} }
//   }
// Matrices are |X| x |Y| nested arrays, worker type outer. `wage_sensitivity`
// is optional (all ones). Models:
//   { "type": "logit" }
//   { "type": "nested_logit", "nest_of": [1, 1, 2], "lambda": [0.5, 0.8] }
//   { "type": "generalized_nested_logit", "membership": [[...]], "lambda": [...] }
// `nest_of` labels nests 1..K.
//
// Writers are deterministic: keys sorted, every float printed with 17
// significant digits.
#pragma once

#include "tumatch/market.hpp"
#include "tumatch/solver.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tumatch {

using Json = nlohmann::json;

inline constexpr const char* kFormatVersion = "1";

/// Malformed or ill-typed document; the message carries source, line and
/// JSON pointer of the offending value.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

/// Counts lines as the parser consumes characters. `last_line` is the line of
/// the most recent non-whitespace character, which is where the token the
/// parser just reported ended (number tokens read one character ahead).
class CountingIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  struct Lines {
    std::size_t current = 1;
    std::size_t last = 1;
  };

  CountingIterator() = default;
  CountingIterator(const char* p, Lines* lines) : p_(p), lines_(lines) {}

  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    const char c = *p_;
    if (c == '\n') {
      ++lines_->current;
    } else if (c != ' ' && c != '\t' && c != '\r') {
      lines_->last = lines_->current;
    }
    ++p_;
    return *this;
  }
  CountingIterator operator++(int) {
    auto copy = *this;
    ++*this;
    return copy;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const CountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_ = nullptr;
  Lines* lines_ = nullptr;
};

inline std::string escape_pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

/// SAX pass recording the source line of every value by JSON pointer.
class LineLocator final : public nlohmann::json_sax<Json> {
 public:
  explicit LineLocator(CountingIterator::Lines* lines) : lines_(lines) {}

  std::map<std::string, std::size_t> take() { return std::move(table_); }

  bool null() override { return scalar(); }
  bool boolean(bool) override { return scalar(); }
  bool number_integer(number_integer_t) override { return scalar(); }
  bool number_unsigned(number_unsigned_t) override { return scalar(); }
  bool number_float(number_float_t, const string_t&) override { return scalar(); }
  bool string(string_t&) override { return scalar(); }
  bool binary(binary_t&) override { return scalar(); }
  bool start_object(std::size_t) override { return open(false); }
  bool start_array(std::size_t) override { return open(true); }
  bool key(string_t& k) override {
    stack_.back().key = k;
    table_[stack_.back().path + "/" + escape_pointer_token(k)] = lines_->last;
    return true;
  }
  bool end_object() override { return close(); }
  bool end_array() override { return close(); }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }

 private:
  struct Frame {
    bool is_array = false;
    std::string path;
    std::string key;
    std::size_t index = 0;
  };

  std::string value_path() const {
    if (stack_.empty()) return "";
    const auto& top = stack_.back();
    return top.path + "/" + (top.is_array ? std::to_string(top.index) : escape_pointer_token(top.key));
  }
  void advance() {
    if (!stack_.empty() && stack_.back().is_array) ++stack_.back().index;
  }
  bool scalar() {
    table_.emplace(value_path(), lines_->last);
    advance();
    return true;
  }
  bool open(bool is_array) {
    const auto path = value_path();
    table_.emplace(path, lines_->last);
    stack_.push_back({is_array, path, "", 0});
    return true;
  }
  bool close() {
    stack_.pop_back();
    advance();
    return true;
  }

  CountingIterator::Lines* lines_;
  std::vector<Frame> stack_;
  std::map<std::string, std::size_t> table_;
};

/// Parsed document plus the line table used in error messages.
class Document {
 public:
  Document(std::string_view text, std::string source) : source_(std::move(source)) {
    try {
      root_ = Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
      std::size_t line = 1;
      for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
      throw FormatError(source_ + ":" + std::to_string(line) + ": malformed document: " + e.what());
    }
    CountingIterator::Lines lines;
    LineLocator locator(&lines);
    Json::sax_parse(CountingIterator(text.data(), &lines), CountingIterator(text.data() + text.size(), &lines),
                    &locator);
    lines_ = locator.take();
  }

  const Json& root() const { return root_; }

  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
    // Fall back to the closest enclosing value that has a recorded line.
    std::string p = pointer;
    std::size_t line = 1;
    while (true) {
      if (auto it = lines_.find(p); it != lines_.end()) {
        line = it->second;
        break;
      }
      if (p.empty()) break;
      p.erase(p.rfind('/'));
    }
    throw FormatError(source_ + ":" + std::to_string(line) + ": " + (pointer.empty() ? "/" : pointer) + ": " +
                      message);
  }

  const Json& at(const std::string& pointer) const { return root_.at(Json::json_pointer(pointer)); }

  const Json& object(const std::string& pointer, const std::set<std::string>& allowed) const {
    const Json& node = require(pointer);
    if (!node.is_object()) fail(pointer, "expected an object");
    for (const auto& [key, value] : node.items()) {
      if (!allowed.count(key)) fail(pointer + "/" + escape_pointer_token(key), "unknown key '" + key + "'");
    }
    return node;
  }

  bool has(const std::string& pointer) const { return root_.contains(Json::json_pointer(pointer)); }

  const Json& require(const std::string& pointer) const {
    if (!has(pointer)) {
      const auto slash = pointer.rfind('/');
      fail(pointer.substr(0, slash), "missing key '" + pointer.substr(slash + 1) + "'");
    }
    return at(pointer);
  }

  double number(const std::string& pointer) const {
    const Json& node = require(pointer);
    if (!node.is_number()) fail(pointer, "expected a number");
    return node.get<double>();
  }

  long integer(const std::string& pointer) const {
    const Json& node = require(pointer);
    if (node.is_number_integer()) return node.get<long>();
    if (node.is_number_float()) {
      const double v = node.get<double>();
      if (std::floor(v) == v) return static_cast<long>(v);
    }
    fail(pointer, "expected an integer");
  }

  std::string string(const std::string& pointer) const {
    const Json& node = require(pointer);
    if (!node.is_string()) fail(pointer, "expected a string");
    return node.get<std::string>();
  }

  bool boolean(const std::string& pointer) const {
    const Json& node = require(pointer);
    if (!node.is_boolean()) fail(pointer, "expected true or false");
    return node.get<bool>();
  }

  Vector<double> vector(const std::string& pointer) const {
    const Json& node = require(pointer);
    if (!node.is_array()) fail(pointer, "expected an array of numbers");
    Vector<double> out(static_cast<Index>(node.size()));
    for (std::size_t i = 0; i < node.size(); ++i) out[static_cast<Index>(i)] = number(pointer + "/" + std::to_string(i));
    return out;
  }

  Matrix<double> matrix(const std::string& pointer) const {
    const Json& node = require(pointer);
    if (!node.is_array()) fail(pointer, "expected an array of rows");
    const std::size_t rows = node.size();
    std::size_t cols = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row_ptr = pointer + "/" + std::to_string(r);
      if (!node[r].is_array()) fail(row_ptr, "expected an array of numbers");
      if (r == 0) cols = node[r].size();
      if (node[r].size() != cols) {
        fail(row_ptr, "dimension mismatch: row has " + std::to_string(node[r].size()) + " entries, expected " +
                          std::to_string(cols));
      }
    }
    Matrix<double> out(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        out(static_cast<Index>(r), static_cast<Index>(c)) =
            number(pointer + "/" + std::to_string(r) + "/" + std::to_string(c));
      }
    }
    return out;
  }

 private:
  std::string source_;
  Json root_;
  std::map<std::string, std::size_t> lines_;
};

inline ChoiceModel read_model(const Document& doc, const std::string& pointer) {
  const Json& node = doc.require(pointer);
  if (!node.is_object()) doc.fail(pointer, "expected an object");
  const std::string type = doc.string(pointer + "/type");
  if (type == "logit") {
    doc.object(pointer, {"type"});
    return Logit{};
  }
  if (type == "nested_logit") {
    doc.object(pointer, {"type", "nest_of", "lambda"});
    NestedLogit model;
    model.lambda = doc.vector(pointer + "/lambda");
    const Json& nests = doc.require(pointer + "/nest_of");
    if (!nests.is_array()) doc.fail(pointer + "/nest_of", "expected an array of nest labels");
    for (std::size_t j = 0; j < nests.size(); ++j) {
      const auto p = pointer + "/nest_of/" + std::to_string(j);
      const long label = doc.integer(p);
      if (label < 1 || label > model.lambda.size()) {
        doc.fail(p, "nest label " + std::to_string(label) + " outside 1.." + std::to_string(model.lambda.size()));
      }
      model.nest_of.push_back(static_cast<int>(label - 1));
    }
    return model;
  }
  if (type == "generalized_nested_logit") {
    doc.object(pointer, {"type", "membership", "lambda"});
    GeneralizedNestedLogit model;
    model.lambda = doc.vector(pointer + "/lambda");
    model.membership = doc.matrix(pointer + "/membership");
    return model;
  }
  doc.fail(pointer + "/type", "unknown choice model '" + type + "'");
}

inline Json vector_json(const Vector<double>& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Json matrix_json(const Matrix<double>& m) {
  Json out = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Json model_json(const ChoiceModel& model) {
  Json out = {{"type", model_name(model)}};
  if (const auto* nl = std::get_if<NestedLogit>(&model)) {
    Json nests = Json::array();
    for (int k : nl->nest_of) nests.push_back(k + 1);
    out["nest_of"] = std::move(nests);
    out["lambda"] = vector_json(nl->lambda);
  } else if (const auto* gnl = std::get_if<GeneralizedNestedLogit>(&model)) {
    out["membership"] = matrix_json(gnl->membership);
    out["lambda"] = vector_json(gnl->lambda);
  }
  return out;
}

inline std::string format_double(double v) {
  if (!std::isfinite(v)) throw IoError("cannot serialize a non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool is_numeric_array(const Json& j) {
  if (!j.is_array()) return false;
  for (const auto& e : j) {
    if (!e.is_number()) return false;
  }
  return true;
}

inline void write_json(std::ostream& os, const Json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {  // std::map order: sorted
        if (!first) os << ",\n";
        first = false;
        os << pad << Json(key).dump() << ": ";
        write_json(os, value, indent + 2);
      }
      os << "\n" << close_pad << "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      if (is_numeric_array(j)) {
        os << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          write_json(os, j[i], indent);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(os, j[i], indent + 2);
      }
      os << "\n" << close_pad << "]";
      return;
    }
    case Json::value_t::number_float:
      os << format_double(j.get<double>());
      return;
    default:
      os << j.dump();
  }
}

}  // namespace io_detail

/// Deterministic text form of a document, newline-terminated.
inline std::string dump_document(const Json& doc) {
  std::ostringstream os;
  io_detail::write_json(os, doc, 0);
  os << "\n";
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct MarketDocument {
  std::string name;
  MarketSpec spec;
};

/// Parses a market document. Structural problems raise FormatError; the
/// market invariants themselves are left to validate_spec.
inline MarketDocument parse_market(std::string_view text, const std::string& source = "<market>") {
  const io_detail::Document doc(text, source);
  if (!doc.root().is_object()) doc.fail("", "expected an object");
  doc.object("", {"meta", "workers", "firms"});
  doc.object("/meta", {"name", "format_version"});
  doc.object("/workers", {"mass", "scale", "wage_sensitivity", "utility", "model"});
  doc.object("/firms", {"mass", "scale", "wage_sensitivity", "productivity", "model"});

  const std::string version = doc.string("/meta/format_version");
  if (version != kFormatVersion) doc.fail("/meta/format_version", "unsupported format version '" + version + "'");

  MarketDocument out;
  if (doc.has("/meta/name")) out.name = doc.string("/meta/name");
  auto& s = out.spec;
  s.worker_mass = doc.vector("/workers/mass");
  s.worker_scale = doc.vector("/workers/scale");
  if (doc.has("/workers/wage_sensitivity")) s.worker_wage_sensitivity = doc.vector("/workers/wage_sensitivity");
  s.worker_utility = doc.matrix("/workers/utility");
  s.worker_model = io_detail::read_model(doc, "/workers/model");

  s.firm_mass = doc.vector("/firms/mass");
  s.firm_scale = doc.vector("/firms/scale");
  if (doc.has("/firms/wage_sensitivity")) s.firm_wage_sensitivity = doc.vector("/firms/wage_sensitivity");
  s.firm_productivity = doc.matrix("/firms/productivity");
  s.firm_model = io_detail::read_model(doc, "/firms/model");
  return out;
}

inline MarketDocument load_market(const std::string& path) { return parse_market(read_text_file(path), path); }

inline Json market_json(const MarketSpec& s, const std::string& name = "") {
  Json workers = {{"mass", io_detail::vector_json(s.worker_mass)},
                  {"scale", io_detail::vector_json(s.worker_scale)},
                  {"utility", io_detail::matrix_json(s.worker_utility)},
                  {"model", io_detail::model_json(s.worker_model)}};
  if (s.worker_wage_sensitivity.size() > 0) workers["wage_sensitivity"] = io_detail::vector_json(s.worker_wage_sensitivity);
  Json firms = {{"mass", io_detail::vector_json(s.firm_mass)},
                {"scale", io_detail::vector_json(s.firm_scale)},
                {"productivity", io_detail::matrix_json(s.firm_productivity)},
                {"model", io_detail::model_json(s.firm_model)}};
  if (s.firm_wage_sensitivity.size() > 0) firms["wage_sensitivity"] = io_detail::vector_json(s.firm_wage_sensitivity);
  return {{"meta", {{"name", name}, {"format_version", kFormatVersion}}}, {"workers", workers}, {"firms", firms}};
}

inline void save_market(const std::string& path, const MarketSpec& spec, const std::string& name = "") {
  write_text_file(path, dump_document(market_json(spec, name)));
}

/// Solver settings echoed into a result document.
struct OptionsEcho {
  double tolerance = 1e-10;
  long max_iterations = 100000;
  std::string initial = "zeros";
  long trace_every = 0;
};

inline OptionsEcho echo_options(const SolveOptions& options, std::string initial = "zeros") {
  return {options.tolerance, options.max_iterations, std::move(initial), options.trace_every};
}

struct ResultFile {
  WageMatrix wages;
  Matching matching;
  long iterations = 0;
  double final_update_norm = 0.0;
  double final_clearing_residual = 0.0;
  bool converged = false;
  OptionsEcho options;
  std::vector<TraceEntry> trace;
};

inline Json result_json(const SolveResult& r, const OptionsEcho& options) {
  Json doc = {{"meta", {{"format_version", kFormatVersion}}},
              {"wages", io_detail::matrix_json(r.wages)},
              {"matching", io_detail::matrix_json(r.matching.matches)},
              {"unmatched_workers", io_detail::vector_json(r.matching.unmatched_workers)},
              {"vacant_firms", io_detail::vector_json(r.matching.vacant_firms)},
              {"iterations", r.iterations},
              {"final_update_norm", r.final_update_norm},
              {"final_clearing_residual", r.final_clearing_residual},
              {"converged", r.converged},
              {"options",
               {{"tolerance", options.tolerance},
                {"max_iterations", options.max_iterations},
                {"initial", options.initial},
                {"trace_every", options.trace_every}}}};
  if (!r.trace.empty()) {
    Json trace = Json::array();
    for (const auto& t : r.trace) {
      trace.push_back({{"iteration", t.iteration},
                       {"update_norm", t.update_norm},
                       {"clearing_residual", t.clearing_residual}});
    }
    doc["trace"] = std::move(trace);
  }
  return doc;
}

inline void save_result(const std::string& path, const SolveResult& result, const OptionsEcho& options = {}) {
  write_text_file(path, dump_document(result_json(result, options)));
}

inline ResultFile parse_result(std::string_view text, const std::string& source = "<result>") {
  const io_detail::Document doc(text, source);
  if (!doc.root().is_object()) doc.fail("", "expected an object");
  doc.object("", {"meta", "wages", "matching", "unmatched_workers", "vacant_firms", "iterations",
                  "final_update_norm", "final_clearing_residual", "converged", "options", "trace"});
  doc.object("/options", {"tolerance", "max_iterations", "initial", "trace_every"});
  doc.object("/meta", {"format_version"});
  if (doc.string("/meta/format_version") != kFormatVersion) doc.fail("/meta/format_version", "unsupported format version");

  ResultFile r;
  r.wages = doc.matrix("/wages");
  r.matching.matches = doc.matrix("/matching");
  r.matching.unmatched_workers = doc.vector("/unmatched_workers");
  r.matching.vacant_firms = doc.vector("/vacant_firms");
  r.iterations = doc.integer("/iterations");
  r.final_update_norm = doc.number("/final_update_norm");
  r.final_clearing_residual = doc.number("/final_clearing_residual");
  r.converged = doc.boolean("/converged");
  r.options.tolerance = doc.number("/options/tolerance");
  r.options.max_iterations = doc.integer("/options/max_iterations");
  r.options.initial = doc.string("/options/initial");
  r.options.trace_every = doc.integer("/options/trace_every");
  if (doc.has("/trace")) {
    const Json& trace = doc.at("/trace");
    if (!trace.is_array()) doc.fail("/trace", "expected an array");
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const auto p = "/trace/" + std::to_string(i);
      doc.object(p, {"iteration", "update_norm", "clearing_residual"});
      r.trace.push_back({doc.integer(p + "/iteration"), doc.number(p + "/update_norm"),
                         doc.number(p + "/clearing_residual")});
    }
  }
  return r;
}

inline ResultFile load_result(const std::string& path) { return parse_result(read_text_file(path), path); }

/// The `wages` matrix of any document that has one (a result file or a bare
/// { "wages": [[...]] }).
inline WageMatrix load_wages(const std::string& path) {
  const std::string text = read_text_file(path);
  const io_detail::Document doc(text, path);
  if (!doc.root().is_object()) doc.fail("", "expected an object");
  return doc.matrix("/wages");
}

}  // namespace tumatch
