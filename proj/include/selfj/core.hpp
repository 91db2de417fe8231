#pragma once

// Domain records shared by every pipeline stage and their line-delimited
// persistence. One JSON object per line; optional fields are omitted.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "selfj/error.hpp"

namespace selfj {

using json = nlohmann::json;

enum class Category { common, coding, academic, unknown };

inline std::string to_string(Category c) {
  switch (c) {
    case Category::common: return "common";
    case Category::coding: return "coding";
    case Category::academic: return "academic";
    case Category::unknown: return "unknown";
  }
  return "unknown";
}

inline Category parse_category(const std::string& s) {
  if (s == "common") return Category::common;
  if (s == "coding") return Category::coding;
  if (s == "academic") return Category::academic;
  if (s == "unknown") return Category::unknown;
  throw Error("unknown category '" + s + "'");
}

// Join key for anything produced per (instruction, model, sample).
inline std::string response_key(const std::string& instruction_id, const std::string& model_id,
                                 int sample_index) {
  return instruction_id + "|" + model_id + "|" + std::to_string(sample_index);
}

struct InstructionRecord {
  std::string id;
  std::string instruction;
  std::optional<std::string> reference;
  Category category = Category::unknown;

  bool operator==(const InstructionRecord&) const = default;
};

struct ResponseRecord {
  std::string instruction_id;
  std::string model_id;
  int sample_index = 0;
  std::string response;
  std::optional<std::vector<double>> token_logprobs;

  std::string key() const { return response_key(instruction_id, model_id, sample_index); }
  bool operator==(const ResponseRecord&) const = default;
};

struct RatingRecord {
  std::string instruction_id;
  std::string model_id;
  int sample_index = 0;
  std::optional<int> self_eval;       // 1..10
  std::optional<double> cosine_raw;   // [-1, 1]
  std::optional<int> cosine_class;    // 1..10
  std::optional<double> combined;
  std::optional<int> final_class;     // 0..9

  std::string key() const { return response_key(instruction_id, model_id, sample_index); }
  bool operator==(const RatingRecord&) const = default;
};

// Judge output for one response. distribution is over classes 0..9.
struct ScoreRecord {
  std::string instruction_id;
  std::string model_id;
  int sample_index = 0;
  double score = 0.0;
  std::optional<std::vector<double>> distribution;

  std::string key() const { return response_key(instruction_id, model_id, sample_index); }
  bool operator==(const ScoreRecord&) const = default;
};

// External grader score for one response (dev labels z*, test labels).
struct GoldRecord {
  std::string instruction_id;
  std::string model_id;
  int sample_index = 0;
  double gold_score = 0.0;

  std::string key() const { return response_key(instruction_id, model_id, sample_index); }
  bool operator==(const GoldRecord&) const = default;
};

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), "embedding must have dim > 0");
    for (double v : values_) require(std::isfinite(v), "embedding has non-finite entry");
  }

  std::size_t dim() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

template <class Record>
struct Dataset {
  std::vector<Record> records;
  std::optional<std::string> source_path;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  auto begin() const { return records.begin(); }
  auto end() const { return records.end(); }

  // Source path is provenance, not content.
  bool operator==(const Dataset& other) const { return records == other.records; }
};

namespace detail {

template <class T>
T get_field(const json& j, const char* name) {
  if (!j.contains(name)) throw Error(std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("field '") + name + "' has wrong type");
  }
}

template <class T>
std::optional<T> get_optional(const json& j, const char* name) {
  if (!j.contains(name) || j.at(name).is_null()) return std::nullopt;
  return get_field<T>(j, name);
}

inline int get_index(const json& j, const char* name) {
  const json& v = j.contains(name) ? j.at(name) : json();
  if (!v.is_number_integer()) throw Error(std::string("field '") + name + "' must be an integer");
  return v.get<int>();
}

inline std::optional<int> get_optional_int(const json& j, const char* name) {
  if (!j.contains(name) || j.at(name).is_null()) return std::nullopt;
  return get_index(j, name);
}

template <class T>
void put_optional(json& j, const char* name, const std::optional<T>& v) {
  if (v) j[name] = *v;
}

inline void check_response_identity(const std::string& instruction_id, const std::string& model_id,
                                    int sample_index) {
  require(!instruction_id.empty(), "instruction_id must be non-empty");
  require(!model_id.empty(), "model_id must be non-empty");
  require(sample_index >= 0, "sample_index must be >= 0");
}

}  // namespace detail

// Per-record-kind JSON mapping and validation.
template <class Record>
struct RecordTraits;

template <>
struct RecordTraits<InstructionRecord> {
  static constexpr const char* kind = "instruction";
  static std::string key(const InstructionRecord& r) { return r.id; }

  static void validate(const InstructionRecord& r) {
    require(!r.id.empty(), "id must be non-empty");
    require(!r.instruction.empty(), "instruction must be non-empty");
  }
  static InstructionRecord from_json(const json& j) {
    InstructionRecord r;
    r.id = detail::get_field<std::string>(j, "id");
    r.instruction = detail::get_field<std::string>(j, "instruction");
    r.reference = detail::get_optional<std::string>(j, "reference");
    if (auto c = detail::get_optional<std::string>(j, "category")) r.category = parse_category(*c);
    validate(r);
    return r;
  }
  static json to_json(const InstructionRecord& r) {
    json j;
    j["id"] = r.id;
    j["instruction"] = r.instruction;
    detail::put_optional(j, "reference", r.reference);
    j["category"] = to_string(r.category);
    return j;
  }
};

template <>
struct RecordTraits<ResponseRecord> {
  static constexpr const char* kind = "response";
  static std::string key(const ResponseRecord& r) { return r.key(); }

  static void validate(const ResponseRecord& r) {
    detail::check_response_identity(r.instruction_id, r.model_id, r.sample_index);
    if (r.token_logprobs) {
      for (double lp : *r.token_logprobs)
        require(std::isfinite(lp) && lp <= 0.0, "token_logprobs entries must be finite and <= 0");
    }
  }
  static ResponseRecord from_json(const json& j) {
    ResponseRecord r;
    r.instruction_id = detail::get_field<std::string>(j, "instruction_id");
    r.model_id = detail::get_field<std::string>(j, "model_id");
    r.sample_index = detail::get_index(j, "sample_index");
    r.response = detail::get_field<std::string>(j, "response");
    r.token_logprobs = detail::get_optional<std::vector<double>>(j, "token_logprobs");
    validate(r);
    return r;
  }
  static json to_json(const ResponseRecord& r) {
    json j;
    j["instruction_id"] = r.instruction_id;
    j["model_id"] = r.model_id;
    j["sample_index"] = r.sample_index;
    j["response"] = r.response;
    detail::put_optional(j, "token_logprobs", r.token_logprobs);
    return j;
  }
};

template <>
struct RecordTraits<RatingRecord> {
  static constexpr const char* kind = "rating";
  static std::string key(const RatingRecord& r) { return r.key(); }

  static void validate(const RatingRecord& r) {
    detail::check_response_identity(r.instruction_id, r.model_id, r.sample_index);
    if (r.self_eval) require(*r.self_eval >= 1 && *r.self_eval <= 10, "self_eval must lie in [1,10]");
    if (r.cosine_raw)
      require(std::isfinite(*r.cosine_raw) && *r.cosine_raw >= -1.0 && *r.cosine_raw <= 1.0,
              "cosine_raw must lie in [-1,1]");
    if (r.cosine_class) {
      require(r.cosine_raw.has_value(), "cosine_class present without cosine_raw");
      require(*r.cosine_class >= 1 && *r.cosine_class <= 10, "cosine_class must lie in [1,10]");
    }
    if (r.combined) require(std::isfinite(*r.combined), "combined must be finite");
    if (r.final_class)
      require(*r.final_class >= 0 && *r.final_class <= 9, "final_class must lie in [0,9]");
  }
  static RatingRecord from_json(const json& j) {
    RatingRecord r;
    r.instruction_id = detail::get_field<std::string>(j, "instruction_id");
    r.model_id = detail::get_field<std::string>(j, "model_id");
    r.sample_index = detail::get_index(j, "sample_index");
    r.self_eval = detail::get_optional_int(j, "self_eval");
    r.cosine_raw = detail::get_optional<double>(j, "cosine_raw");
    r.cosine_class = detail::get_optional_int(j, "cosine_class");
    r.combined = detail::get_optional<double>(j, "combined");
    r.final_class = detail::get_optional_int(j, "final_class");
    validate(r);
    return r;
  }
  static json to_json(const RatingRecord& r) {
    json j;
    j["instruction_id"] = r.instruction_id;
    j["model_id"] = r.model_id;
    j["sample_index"] = r.sample_index;
    detail::put_optional(j, "self_eval", r.self_eval);
    detail::put_optional(j, "cosine_raw", r.cosine_raw);
    detail::put_optional(j, "cosine_class", r.cosine_class);
    detail::put_optional(j, "combined", r.combined);
    detail::put_optional(j, "final_class", r.final_class);
    return j;
  }
};

template <>
struct RecordTraits<ScoreRecord> {
  static constexpr const char* kind = "score";
  static std::string key(const ScoreRecord& r) { return r.key(); }

  static void validate(const ScoreRecord& r) {
    detail::check_response_identity(r.instruction_id, r.model_id, r.sample_index);
    require(std::isfinite(r.score), "score must be finite");
  }
  static ScoreRecord from_json(const json& j) {
    ScoreRecord r;
    r.instruction_id = detail::get_field<std::string>(j, "instruction_id");
    r.model_id = detail::get_field<std::string>(j, "model_id");
    r.sample_index = detail::get_index(j, "sample_index");
    r.score = detail::get_field<double>(j, "score");
    r.distribution = detail::get_optional<std::vector<double>>(j, "distribution");
    validate(r);
    return r;
  }
  static json to_json(const ScoreRecord& r) {
    json j;
    j["instruction_id"] = r.instruction_id;
    j["model_id"] = r.model_id;
    j["sample_index"] = r.sample_index;
    j["score"] = r.score;
    detail::put_optional(j, "distribution", r.distribution);
    return j;
  }
};

template <>
struct RecordTraits<GoldRecord> {
  static constexpr const char* kind = "gold";
  static std::string key(const GoldRecord& r) { return r.key(); }

  static void validate(const GoldRecord& r) {
    detail::check_response_identity(r.instruction_id, r.model_id, r.sample_index);
    require(std::isfinite(r.gold_score), "gold_score must be finite");
  }
  static GoldRecord from_json(const json& j) {
    GoldRecord r;
    r.instruction_id = detail::get_field<std::string>(j, "instruction_id");
    r.model_id = detail::get_field<std::string>(j, "model_id");
    r.sample_index = detail::get_index(j, "sample_index");
    r.gold_score = detail::get_field<double>(j, "gold_score");
    validate(r);
    return r;
  }
  static json to_json(const GoldRecord& r) {
    return json{{"instruction_id", r.instruction_id},
                {"model_id", r.model_id},
                {"sample_index", r.sample_index},
                {"gold_score", r.gold_score}};
  }
};

template <class Record>
std::string encode_record(const Record& r) {
  return RecordTraits<Record>::to_json(r).dump(-1, ' ', false, json::error_handler_t::strict);
}

// Throws Error naming the 1-based line on malformed input or duplicate keys.
template <class Record>
Dataset<Record> parse_dataset(std::istream& in, const std::string& origin = "<stream>") {
  Dataset<Record> ds;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
    Record rec;
    try {
      rec = RecordTraits<Record>::from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(where() + "malformed " + RecordTraits<Record>::kind + " record: " + e.what());
    } catch (const Error& e) {
      throw Error(where() + "invalid " + RecordTraits<Record>::kind + " record: " + e.what());
    }
    if (!seen.insert(RecordTraits<Record>::key(rec)).second)
      throw Error(where() + "duplicate id '" + RecordTraits<Record>::key(rec) + "'");
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

template <class Record>
Dataset<Record> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  auto ds = parse_dataset<Record>(in, path.string());
  ds.source_path = path.string();
  return ds;
}

template <class Record>
void save_dataset(const Dataset<Record>& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : ds.records) out << encode_record(r) << '\n';
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

template <class Record>
Dataset<Record> make_dataset(std::vector<Record> records) {
  Dataset<Record> ds;
  ds.records = std::move(records);
  return ds;
}

}  // namespace selfj
