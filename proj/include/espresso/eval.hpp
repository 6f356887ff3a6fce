#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "espresso/corpus.hpp"
#include "espresso/error.hpp"
#include "espresso/model_io.hpp"
#include "espresso/retrieval.hpp"
#include "espresso/training.hpp"

namespace espresso {

struct QueryOutcome {
  std::string piece_id;
  std::string performance_id;
  std::size_t rank_of_truth = 1;
  std::size_t candidate_count = 1;
};

namespace detail {

inline void check_outcomes(std::span<const QueryOutcome> outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::invalid_argument, "no query outcomes");
  for (const auto& o : outcomes) {
    if (o.rank_of_truth < 1 || o.rank_of_truth > o.candidate_count) {
      throw Error(ErrorCode::invalid_argument, "rank " + std::to_string(o.rank_of_truth) +
                                                   " outside 1.." + std::to_string(o.candidate_count));
    }
  }
}

}  // namespace detail

// Fraction of queries whose correct performance ranks k or better.
inline double top_k_ratio(std::span<const QueryOutcome> outcomes, std::size_t k) {
  detail::check_outcomes(outcomes);
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
  const auto hits = std::count_if(outcomes.begin(), outcomes.end(),
                                  [k](const QueryOutcome& o) { return o.rank_of_truth <= k; });
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

inline double mrr(std::span<const QueryOutcome> outcomes) {
  detail::check_outcomes(outcomes);
  double sum = 0.0;
  for (const auto& o : outcomes) sum += 1.0 / static_cast<double>(o.rank_of_truth);
  return sum / static_cast<double>(outcomes.size());
}

struct Metrics {
  double top1 = 0.0;
  double top2 = 0.0;
  double mrr = 0.0;
  std::size_t query_count = 0;
};

inline Metrics summarize(std::span<const QueryOutcome> outcomes) {
  return {top_k_ratio(outcomes, 1), top_k_ratio(outcomes, 2), mrr(outcomes), outcomes.size()};
}

struct EvalConfig {
  bool augment_pitchfork = false;
  bool augment_musiccaps = false;
  bool pca = true;
  PcaTarget pca_target = PcaVarianceFraction{kDefaultPcaFraction};
  bool standardize = true;
  std::optional<double> ridge_lambda;  // unset: default_ridge() per fold
  Aggregate aggregate = Aggregate::sum;
  std::uint64_t seed = 0;
  bool allow_singleton = false;
  bool per_annotator = false;  // one query per core pair instead of one per performance
};

struct FoldReport {
  std::string piece_id;
  bool singleton = false;
  std::vector<QueryOutcome> outcomes;
  std::map<std::string, std::size_t> trained_on;
  std::size_t unencodable_queries = 0;
};

struct EvalReport {
  EvalConfig config;
  std::vector<FoldReport> per_fold;
  Metrics aggregate;
  std::string query_set_hash;
};

// One retrieval query: the held-out text for a performance and its target.
struct CoreQuery {
  std::string piece_id;
  std::string performance_id;
  std::string text;
  MidLevelVector target;
};

// Groups core pairs into queries in catalog order. By default all of a
// performance's core texts are joined into one description and the targets
// averaged.
inline std::vector<CoreQuery> collect_core_queries(const Catalog& catalog,
                                                   const std::vector<DescriptionPair>& pairs,
                                                   bool per_annotator) {
  std::map<std::string, std::vector<const DescriptionPair*>> by_performance;
  for (const auto& p : pairs) {
    if (p.source != Source::core) continue;
    const auto* perf = p.performance_id ? catalog.find_performance(*p.performance_id) : nullptr;
    if (perf == nullptr || !p.piece_id || perf->piece_id != *p.piece_id) {
      throw Error(ErrorCode::integrity, "core pair does not resolve into the catalog",
                  {p.performance_id.value_or("")});
    }
    by_performance[*p.performance_id].push_back(&p);
  }

  std::vector<CoreQuery> queries;
  for (const auto& piece : catalog.pieces()) {
    for (const auto& pid : piece.performance_ids) {
      auto it = by_performance.find(pid);
      if (it == by_performance.end()) continue;
      if (per_annotator) {
        for (const auto* p : it->second) queries.push_back({piece.piece_id, pid, p->text, p->target_features});
        continue;
      }
      CoreQuery q{piece.piece_id, pid, {}, {}};
      Vector8 sum = Vector8::Zero();
      for (const auto* p : it->second) {
        if (!q.text.empty()) q.text += " ";
        q.text += p->text;
        sum += to_eigen(p->target_features);
      }
      q.target = from_eigen(sum / static_cast<double>(it->second.size()));
      queries.push_back(std::move(q));
    }
  }
  return queries;
}

inline std::string query_set_hash(const std::vector<CoreQuery>& queries) {
  std::string buf;
  for (const auto& q : queries) buf += q.piece_id + '\x1f' + q.performance_id + '\x1f' + q.text + '\x1e';
  return fnv1a_hex(buf);
}

// Leave-one-piece-out cross-validation. For each piece the projection is
// trained on the core queries of every other piece plus the enabled
// augmentation pairs, then every core query of the held-out piece is ranked
// within that piece. Metrics are micro-averaged over all non-singleton
// queries. An unencodable held-out query counts as rank K.
inline EvalReport run_piecewise_cv(const Catalog& catalog, const std::vector<DescriptionPair>& pairs,
                                   const WordEmbeddingTable& table, const EvalConfig& config) {
  const auto queries = collect_core_queries(catalog, pairs, config.per_annotator);

  std::map<std::string, std::vector<const CoreQuery*>> by_piece;
  for (const auto& q : queries) by_piece[q.piece_id].push_back(&q);
  for (const auto& piece : catalog.pieces()) {
    if (!by_piece.contains(piece.piece_id)) {
      throw Error(ErrorCode::invalid_argument, "piece '" + piece.piece_id + "' has no core pairs",
                  {piece.piece_id});
    }
    if (piece.performance_ids.size() == 1 && !config.allow_singleton) {
      throw Error(ErrorCode::invalid_argument,
                  "piece '" + piece.piece_id + "' has a single performance (use allow_singleton)",
                  {piece.piece_id});
    }
  }

  std::vector<DescriptionPair> augmentation;
  for (const auto& p : pairs) {
    if ((p.source == Source::pitchfork && config.augment_pitchfork) ||
        (p.source == Source::musiccaps && config.augment_musiccaps)) {
      augmentation.push_back(p);
    }
  }

  TrainConfig train;
  train.pca = config.pca ? std::optional<PcaTarget>(config.pca_target) : std::nullopt;
  train.ridge_lambda = config.ridge_lambda;
  train.standardize = config.standardize;
  train.aggregate = config.aggregate;

  EvalReport report;
  report.config = config;
  report.query_set_hash = query_set_hash(queries);
  std::vector<QueryOutcome> pooled;

  for (const auto& piece : catalog.pieces()) {
    FoldReport fold;
    fold.piece_id = piece.piece_id;
    fold.singleton = piece.performance_ids.size() == 1;

    std::vector<DescriptionPair> training;
    for (const auto& q : queries) {
      if (q.piece_id == piece.piece_id) continue;
      training.push_back({q.text, q.target, Source::core, q.piece_id, q.performance_id});
    }
    training.insert(training.end(), augmentation.begin(), augmentation.end());

    const ProjectionModel model = train_projection(training, table, train);
    fold.trained_on = model.trained_on;
    const RetrievalIndex index = build_index(catalog, model);
    const std::size_t k = piece.performance_ids.size();

    for (const auto* q : by_piece[piece.piece_id]) {
      QueryOutcome outcome{piece.piece_id, q->performance_id, k, k};
      try {
        const auto result = rank_performances(index, model, table, piece.piece_id, q->text);
        for (const auto& r : result.results) {
          if (r.performance_id == q->performance_id) outcome.rank_of_truth = r.rank;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::unencodable_query) throw;
        ++fold.unencodable_queries;
      }
      fold.outcomes.push_back(outcome);
    }
    if (!fold.singleton) pooled.insert(pooled.end(), fold.outcomes.begin(), fold.outcomes.end());
    report.per_fold.push_back(std::move(fold));
  }

  if (pooled.empty()) throw Error(ErrorCode::invalid_argument, "no non-singleton queries to evaluate");
  report.aggregate = summarize(pooled);
  return report;
}

// Chance-level metrics: each performance's query gets a rank drawn uniformly
// from 1..K of its piece, repeated `trials` times.
inline Metrics random_baseline(const Catalog& catalog, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::size_t top1 = 0;
  std::size_t top2 = 0;
  double reciprocal = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    for (const auto& piece : catalog.pieces()) {
      std::uniform_int_distribution<std::size_t> draw(1, piece.performance_ids.size());
      for (std::size_t i = 0; i < piece.performance_ids.size(); ++i) {
        const std::size_t rank = draw(rng);
        top1 += rank <= 1;
        top2 += rank <= 2;
        reciprocal += 1.0 / static_cast<double>(rank);
        ++count;
      }
    }
  }
  const double n = static_cast<double>(count);
  return {static_cast<double>(top1) / n, static_cast<double>(top2) / n, reciprocal / n,
          count / trials};
}

// Exact expectation of random_baseline().
inline Metrics expected_random_metrics(const Catalog& catalog) {
  double top1 = 0.0, top2 = 0.0, rr = 0.0;
  std::size_t count = 0;
  for (const auto& piece : catalog.pieces()) {
    const double k = static_cast<double>(piece.performance_ids.size());
    double harmonic = 0.0;
    for (std::size_t r = 1; r <= piece.performance_ids.size(); ++r) harmonic += 1.0 / static_cast<double>(r);
    top1 += k * (1.0 / k);
    top2 += k * (std::min(2.0, k) / k);
    rr += k * (harmonic / k);
    count += piece.performance_ids.size();
  }
  const double n = static_cast<double>(count);
  return {top1 / n, top2 / n, rr / n, count};
}

// Augmentation x PCA layout: (pitchfork, musiccaps) in {off,on}^2, PCA off
// then on within each pair.
inline std::vector<EvalConfig> table2_grid(const EvalConfig& base) {
  std::vector<EvalConfig> grid;
  for (auto [pitchfork, musiccaps] : {std::pair{false, false}, std::pair{true, false},
                                      std::pair{false, true}, std::pair{true, true}}) {
    for (bool pca : {false, true}) {
      EvalConfig c = base;
      c.augment_pitchfork = pitchfork;
      c.augment_musiccaps = musiccaps;
      c.pca = pca;
      grid.push_back(c);
    }
  }
  return grid;
}

inline std::vector<EvalReport> run_ablation_grid(const Catalog& catalog, const std::vector<DescriptionPair>& pairs,
                                                 const WordEmbeddingTable& table,
                                                 const std::vector<EvalConfig>& grid) {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "ablation grid is empty");
  std::vector<EvalReport> reports;
  reports.reserve(grid.size());
  for (const auto& config : grid) reports.push_back(run_piecewise_cv(catalog, pairs, table, config));
  return reports;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string ridge_label(const std::optional<double>& ridge) {
  if (!ridge) return "auto";
  return nlohmann::json(*ridge).dump();
}

}  // namespace detail

inline nlohmann::json eval_config_to_json(const EvalConfig& c) {
  return {{"augment_pitchfork", c.augment_pitchfork},
          {"augment_musiccaps", c.augment_musiccaps},
          {"pca", c.pca},
          {"pca_target", pca_setting_to_json(std::optional<PcaTarget>(c.pca_target))},
          {"standardize", c.standardize},
          {"ridge_lambda", detail::ridge_label(c.ridge_lambda)},
          {"aggregate", c.aggregate == Aggregate::sum ? "sum" : "mean"},
          {"seed", c.seed},
          {"allow_singleton", c.allow_singleton},
          {"per_annotator", c.per_annotator}};
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"top1", m.top1}, {"top2", m.top2}, {"mrr", m.mrr}, {"query_count", m.query_count}};
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.per_fold) {
    nlohmann::json outcomes = nlohmann::json::array();
    for (const auto& o : f.outcomes) {
      outcomes.push_back({{"performance_id", o.performance_id},
                          {"rank_of_truth", o.rank_of_truth},
                          {"candidate_count", o.candidate_count}});
    }
    nlohmann::json fold = {{"piece_id", f.piece_id},
                           {"singleton", f.singleton},
                           {"trained_on", f.trained_on},
                           {"unencodable_queries", f.unencodable_queries},
                           {"outcomes", outcomes}};
    if (!f.outcomes.empty()) fold["metrics"] = metrics_to_json(summarize(f.outcomes));
    folds.push_back(std::move(fold));
  }
  return {{"config", eval_config_to_json(r.config)},
          {"aggregate", metrics_to_json(r.aggregate)},
          {"query_set_hash", r.query_set_hash},
          {"per_fold", folds}};
}

inline std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "augment_pitchfork,augment_musiccaps,pca,standardize,ridge_lambda,top1,top2,mrr,n_queries\n";
  for (const auto& r : reports) {
    const auto& c = r.config;
    out << c.augment_pitchfork << ',' << c.augment_musiccaps << ',' << c.pca << ',' << c.standardize << ','
        << detail::ridge_label(c.ridge_lambda) << ',' << detail::fixed(r.aggregate.top1, 6) << ','
        << detail::fixed(r.aggregate.top2, 6) << ',' << detail::fixed(r.aggregate.mrr, 6) << ','
        << r.aggregate.query_count << '\n';
  }
  return out.str();
}

// Text table with the augmentation and PCA columns followed by the metrics,
// one row per report, optionally preceded by a random-baseline row.
inline std::string render_table2(const std::vector<EvalReport>& reports,
                                 const std::optional<Metrics>& baseline = std::nullopt) {
  const auto mark = [](bool on) { return on ? "✓" : "✗"; };
  const auto scores = [](const Metrics& m) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "|%7.2f%7.2f%7.2f  | %zu\n", m.top1, m.top2, m.mrr, m.query_count);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "Pitchfork  MusicCaps  PCA  |  Top-1  Top-2    MRR  | Queries\n";
  out << "---------------------------+-----------------------+--------\n";
  if (baseline) out << "   (random baseline)       " << scores(*baseline);
  for (const auto& r : reports) {
    out << "    " << mark(r.config.augment_pitchfork) << "          " << mark(r.config.augment_musiccaps)
        << "       " << mark(r.config.pca) << "   " << scores(r.aggregate);
  }
  return out.str();
}

}  // namespace espresso
