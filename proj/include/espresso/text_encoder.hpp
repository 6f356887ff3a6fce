#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "espresso/error.hpp"

namespace espresso {

namespace detail {

// Bytes >= 0x80 are treated as letters so UTF-8 words stay whole.
inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

}  // namespace detail

// Lowercases and splits on anything that is not a letter. An apostrophe
// survives only between two letters ("don't" stays one token).
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (detail::is_word_byte(c)) {
      current.push_back(detail::ascii_lower(static_cast<char>(c)));
    } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
               detail::is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      current.push_back('\'');
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  explicit WordEmbeddingTable(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw Error(ErrorCode::dimension, "embedding dimension must be positive");
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t duplicate_count() const { return duplicates_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // First insertion wins; later duplicates are counted and dropped.
  // Returns false for a duplicate.
  bool add(std::string_view token, std::span<const double> vec) {
    if (token.empty()) throw Error(ErrorCode::parse, "empty token");
    if (vec.size() != dimension_) {
      throw Error(ErrorCode::dimension, "vector for '" + std::string(token) + "' has length " +
                                            std::to_string(vec.size()) + ", expected " +
                                            std::to_string(dimension_));
    }
    for (double v : vec) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::non_finite, "vector for '" + std::string(token) + "' is not finite");
      }
    }
    auto key = detail::lowercase(token);
    if (index_.contains(key)) {
      ++duplicates_;
      return false;
    }
    index_.emplace(key, tokens_.size());
    tokens_.push_back(std::move(key));
    data_.insert(data_.end(), vec.begin(), vec.end());
    return true;
  }

  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

  std::optional<std::span<const double>> lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return std::span<const double>(data_.data() + it->second * dimension_, dimension_);
  }

 private:
  std::size_t dimension_ = 0;
  std::size_t duplicates_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Reads `token v1 .. vd` lines. An optional `N d` header on the first line is
// skipped (and its d enforced). The dimension comes from the first data line
// unless `expected_dimension` is given.
inline WordEmbeddingTable parse_embedding_table(std::istream& in,
                                                std::optional<std::size_t> expected_dimension = {}) {
  std::optional<WordEmbeddingTable> table;
  std::optional<std::size_t> dimension = expected_dimension;
  std::string line;
  std::size_t line_no = 0;
  bool saw_data = false;
  std::vector<double> values;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = detail::split_fields(line);
    if (fields.empty()) continue;

    if (!saw_data && line_no == 1 && fields.size() == 2) {
      const auto n = detail::parse_integer(fields[0]);
      const auto d = detail::parse_integer(fields[1]);
      if (n && d && *n >= 0 && *d > 0) {
        if (dimension && *dimension != static_cast<std::size_t>(*d)) {
          throw Error(ErrorCode::dimension, "line 1: header declares dimension " +
                                                std::to_string(*d) + ", expected " +
                                                std::to_string(*dimension),
                      {"1"});
        }
        dimension = static_cast<std::size_t>(*d);
        continue;
      }
    }

    const std::size_t found = fields.size() - 1;
    if (found == 0) {
      throw Error(ErrorCode::dimension, "line " + std::to_string(line_no) + ": token has no vector",
                  {std::to_string(line_no)});
    }
    if (!dimension) dimension = found;
    if (found != *dimension) {
      throw Error(ErrorCode::dimension,
                  "line " + std::to_string(line_no) + ": expected " + std::to_string(*dimension) +
                      " values, found " + std::to_string(found),
                  {std::to_string(line_no)});
    }
    if (!table) table.emplace(*dimension);

    values.clear();
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const auto v = detail::parse_double(fields[k]);
      if (!v) {
        throw Error(ErrorCode::parse,
                    "line " + std::to_string(line_no) + ": cannot parse number '" +
                        std::string(fields[k]) + "'",
                    {std::to_string(line_no)});
      }
      if (!std::isfinite(*v)) {
        throw Error(ErrorCode::non_finite,
                    "line " + std::to_string(line_no) + ": non-finite value",
                    {std::to_string(line_no)});
      }
      values.push_back(*v);
    }
    table->add(fields[0], values);
    saw_data = true;
  }

  if (!table) throw Error(ErrorCode::parse, "embedding file has no entries");
  return std::move(*table);
}

inline WordEmbeddingTable load_embedding_table(const std::string& path,
                                               std::optional<std::size_t> expected_dimension = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'", {path});
  return parse_embedding_table(in, expected_dimension);
}

// Writes the shortest decimal form that reads back to the same double.
inline void write_embedding_table(std::ostream& out, const WordEmbeddingTable& table) {
  char buf[64];
  for (const auto& token : table.tokens()) {
    out << token;
    const auto vec = *table.lookup(token);
    for (double v : vec) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

inline void save_embedding_table(const std::string& path, const WordEmbeddingTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'", {path});
  write_embedding_table(out, table);
}

enum class Aggregate { sum, mean };

struct TextEmbedding {
  Eigen::VectorXd vector;
  std::size_t token_count = 0;
  std::vector<std::string> oov_tokens;
};

// Element-wise sum over every in-vocabulary token occurrence. Repeated words
// count every time. OOV tokens are skipped and reported in first-seen order.
inline TextEmbedding encode_text(const WordEmbeddingTable& table, std::string_view text,
                                 Aggregate aggregate = Aggregate::sum) {
  TextEmbedding out;
  out.vector = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table.dimension()));
  std::unordered_set<std::string> oov_seen;
  for (const auto& token : tokenize(text)) {
    const auto vec = table.lookup(token);
    if (!vec) {
      if (oov_seen.insert(token).second) out.oov_tokens.push_back(token);
      continue;
    }
    out.vector += Eigen::Map<const Eigen::VectorXd>(vec->data(), static_cast<Eigen::Index>(vec->size()));
    ++out.token_count;
  }
  if (out.token_count == 0) {
    throw Error(ErrorCode::unencodable_query,
                "query has no in-vocabulary tokens", out.oov_tokens);
  }
  if (aggregate == Aggregate::mean) out.vector /= static_cast<double>(out.token_count);
  return out;
}

}  // namespace espresso
