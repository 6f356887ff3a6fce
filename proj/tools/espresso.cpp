// espresso: command-line front end for training, querying, evaluating,
// onset extraction and serving.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "espresso/espresso.hpp"
#include "espresso/service.hpp"

namespace {

using namespace espresso;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

SourceSet parse_augment(const std::vector<std::string>& names) {
  SourceSet sources{Source::core};
  for (const auto& name : names) {
    const auto s = parse_source(name);
    if (!s || *s == Source::core) throw UsageError("unknown augmentation source '" + name + "'");
    sources.insert(*s);
  }
  return sources;
}

std::optional<PcaTarget> parse_pca_flag(const std::string& text) {
  try {
    return parse_pca_setting(text);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

Aggregate parse_aggregate(const std::string& text) {
  if (text == "sum") return Aggregate::sum;
  if (text == "mean") return Aggregate::mean;
  throw UsageError("aggregate must be 'sum' or 'mean'");
}

std::string signed_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.3f", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string catalog, pairs, embeddings, out;
  std::vector<std::string> augment;
  std::string pca = "0.95";
  std::optional<double> ridge;
  bool raw_feature_space = false;
  std::string aggregate = "sum";
};

int run_train(const TrainArgs& args) {
  TrainConfig config;
  config.pca = parse_pca_flag(args.pca);
  config.ridge_lambda = args.ridge;
  config.standardize = !args.raw_feature_space;
  config.aggregate = parse_aggregate(args.aggregate);
  const SourceSet sources = parse_augment(args.augment);
  if (args.ridge && (*args.ridge < 0.0 || !std::isfinite(*args.ridge))) throw UsageError("--ridge must be >= 0");

  const Catalog catalog = load_catalog(args.catalog);
  const auto pairs = load_pairs(args.pairs, sources, &catalog);
  const auto table = load_embedding_table(args.embeddings);
  const auto model = train_projection(pairs, table, config);
  save_model(args.out, model);

  std::cout << "trained on";
  for (const auto& [source, count] : model.trained_on) std::cout << ' ' << source << '=' << count;
  std::cout << "\ninput dimension " << model.input_dimension;
  if (model.pca) std::cout << ", PCA components " << model.pca->output_dimension();
  std::cout << ", ridge " << model.map.ridge_lambda << ", "
            << (model.standardized() ? "standardized" : "raw") << " feature space\n";
  std::cout << "fingerprint " << model.config_fingerprint << "\nwrote " << args.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct QueryArgs {
  std::string model, catalog, embeddings, piece, text;
  std::string format = "table";
};

void print_query_table(const QueryResult& result) {
  std::cout << "piece: " << result.piece_id << "\nquery: " << result.query << "\n\n";
  std::printf("%-5s %-8s  %-24s %s\n", "rank", "score", "performance", "artist");
  for (const auto& r : result.results) {
    std::printf("%-5zu %+.4f   %-24s %s\n", r.rank, r.score, r.performance_id.c_str(), r.artist_label.c_str());
  }
  std::cout << "\npredicted profile (" << (result.standardized ? "standardized" : "raw")
            << ", deviation from piece mean):\n";
  const auto explanation = result.results.empty()
                               ? std::vector<DimensionExplanation>{}
                               : explain(result.results.front(), result.piece_mean);
  for (const auto& d : explanation) {
    std::printf("  %-18s %s  (%s)\n", std::string(d.name).c_str(), signed_fixed(d.predicted).c_str(),
                signed_fixed(d.predicted_deviation).c_str());
  }
  for (const auto& w : result.warnings) std::cout << "warning: " << w << "\n";
  std::cout.flush();
}

int run_query(const QueryArgs& args) {
  if (args.format != "table" && args.format != "document") throw UsageError("--format must be table or document");
  const Catalog catalog = load_catalog(args.catalog);
  const auto model = load_model(args.model);
  const auto table = load_embedding_table(args.embeddings);
  const auto index = build_index(catalog, model);
  const auto result = rank_performances(index, model, table, args.piece, args.text);
  if (args.format == "document") {
    std::cout << query_result_to_json(result).dump(2) << "\n";
  } else {
    print_query_table(result);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string catalog, pairs, embeddings;
  bool grid = false;
  bool table2 = false;
  std::uint64_t seed = 0;
  std::size_t trials = 10000;
  std::vector<std::string> augment;
  std::string pca = "0.95";
  std::optional<double> ridge;
  bool raw_feature_space = false;
  bool allow_singleton = false;
  bool per_annotator = false;
  std::string aggregate = "sum";
  std::string report, csv;
};

int run_evaluate(const EvaluateArgs& args) {
  EvalConfig base;
  const auto pca = parse_pca_flag(args.pca);
  base.pca = pca.has_value();
  if (pca) base.pca_target = *pca;
  base.ridge_lambda = args.ridge;
  base.standardize = !args.raw_feature_space;
  base.seed = args.seed;
  base.allow_singleton = args.allow_singleton;
  base.per_annotator = args.per_annotator;
  base.aggregate = parse_aggregate(args.aggregate);
  const SourceSet sources = parse_augment(args.augment);
  base.augment_pitchfork = sources.contains(Source::pitchfork);
  base.augment_musiccaps = sources.contains(Source::musiccaps);
  if (args.trials < 1) throw UsageError("--trials must be >= 1");
  if ((args.grid || args.table2) && !pca) {
    // The grid toggles PCA itself; fall back to the default target.
    base.pca_target = PcaVarianceFraction{kDefaultPcaFraction};
  }

  const Catalog catalog = load_catalog(args.catalog);
  const auto pairs = load_pairs(args.pairs, all_sources(), &catalog);
  const auto table = load_embedding_table(args.embeddings);

  const std::vector<EvalConfig> grid = (args.grid || args.table2) ? table2_grid(base) : std::vector{base};
  const auto reports = run_ablation_grid(catalog, pairs, table, grid);
  const Metrics baseline = random_baseline(catalog, args.trials, args.seed);

  if (args.table2) {
    std::cout << render_table2(reports, baseline);
  } else {
    std::cout << reports_to_csv(reports);
    std::cout << "random baseline: top1 " << detail::fixed(baseline.top1, 4) << ", top2 "
              << detail::fixed(baseline.top2, 4) << ", mrr " << detail::fixed(baseline.mrr, 4) << "\n";
  }

  if (!args.report.empty()) {
    nlohmann::json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["random_baseline"] = metrics_to_json(baseline);
    doc["random_baseline_trials"] = args.trials;
    doc["reports"] = nlohmann::json::array();
    for (const auto& r : reports) doc["reports"].push_back(eval_report_to_json(r));
    detail::write_text_file(args.report, doc.dump(2) + "\n");
  }
  if (!args.csv.empty()) detail::write_text_file(args.csv, reports_to_csv(reports));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct OnsetArgs {
  std::string audio;
  std::string catalog;
  std::string patch_out;
  std::string audio_root;
  OnsetConfig config;
};

int run_onsets(const OnsetArgs& args) {
  try {
    args.config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (args.audio.empty() == args.catalog.empty()) {
    throw UsageError("give exactly one of --audio or --catalog");
  }
  if (!args.audio.empty()) {
    const auto clip = decode_wav(args.audio);
    std::printf("%.4f\n", onset_density(clip, args.config));
    return kExitOk;
  }
  const Catalog catalog = load_catalog(args.catalog);
  FeatureProvider provider;
  provider.onset = args.config;
  provider.audio_root = args.audio_root.empty() ? std::filesystem::path(args.catalog).parent_path()
                                                : std::filesystem::path(args.audio_root);
  const auto patch = extract_onset_patch(catalog, provider);
  for (const auto& [id, value] : patch) std::printf("%-24s %.4f\n", id.c_str(), value);
  if (!args.patch_out.empty()) detail::write_text_file(args.patch_out, onset_patch_to_json(patch).dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string catalog, model, embeddings;
  std::string host = "0.0.0.0";
  int port = 8080;
};

int run_serve(const ServeArgs& args) {
  if (args.catalog.empty() || args.model.empty() || args.embeddings.empty()) {
    throw UsageError("--catalog, --model and --embeddings (or their ESPRESSO_* variables) are required");
  }
  if (args.port <= 0 || args.port > 65535) throw UsageError("--port must be in 1..65535");
  const auto state = service::make_state(load_catalog(args.catalog), load_model(args.model),
                                         load_embedding_table(args.embeddings));
  httplib::Server server;
  service::install_routes(server, state);
  std::cerr << "espresso " << kVersion << " serving on " << args.host << ":" << args.port << " (model "
            << state.model.config_fingerprint << ")\n";
  if (!server.listen(args.host, args.port)) {
    std::cerr << "error: cannot listen on port " << args.port << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  synthetic::WorldConfig world;
};

int run_synth(const SynthArgs& args) {
  if (args.world.noise_fraction < 0.0) throw UsageError("--noise must be >= 0");
  const auto world = synthetic::make_world(args.world);
  const std::filesystem::path dir(args.out_dir);
  std::filesystem::create_directories(dir);
  save_catalog((dir / "catalog.json").string(), world.catalog);
  save_pairs((dir / "pairs.json").string(), world.pairs);
  save_embedding_table((dir / "embeddings.txt").string(), world.table);
  std::cout << "wrote " << (dir / "catalog.json").string() << ", " << (dir / "pairs.json").string() << ", "
            << (dir / "embeddings.txt").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-performance retrieval over mid-level perceptual features"};
  app.set_version_flag("--version", std::string(espresso::kVersion));
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fit the text-to-feature projection");
  train_cmd->add_option("--catalog", train.catalog, "Catalog document")->required();
  train_cmd->add_option("--pairs", train.pairs, "Description pairs document")->required();
  train_cmd->add_option("--embeddings", train.embeddings, "Word-vector file")->required();
  train_cmd->add_option("--augment", train.augment, "Augmentation sources (pitchfork,musiccaps)")->delimiter(',');
  train_cmd->add_option("--pca", train.pca, "Variance fraction, component count, or 'off'")->capture_default_str();
  train_cmd->add_option("--ridge", train.ridge, "Ridge lambda (default: 1e-2 if underdetermined, else 0)");
  train_cmd->add_flag("--raw-feature-space", train.raw_feature_space, "Compare in raw feature units");
  train_cmd->add_option("--aggregate", train.aggregate, "Word-vector aggregation: sum or mean")->capture_default_str();
  train_cmd->add_option("--out", train.out, "Model file to write")->required();

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Rank a piece's performances for a description");
  query_cmd->add_option("--model", query.model, "Model file")->required();
  query_cmd->add_option("--catalog", query.catalog, "Catalog document")->required();
  query_cmd->add_option("--embeddings", query.embeddings, "Word-vector file")->required();
  query_cmd->add_option("--piece", query.piece, "Piece id")->required();
  query_cmd->add_option("--text", query.text, "Free-text description")->required();
  query_cmd->add_option("--format", query.format, "table or document")->capture_default_str();

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Piece-wise cross-validation and ablations");
  eval_cmd->add_option("--catalog", evaluate.catalog, "Catalog document")->required();
  eval_cmd->add_option("--pairs", evaluate.pairs, "Description pairs document")->required();
  eval_cmd->add_option("--embeddings", evaluate.embeddings, "Word-vector file")->required();
  eval_cmd->add_flag("--grid", evaluate.grid, "Run the augmentation x PCA grid");
  eval_cmd->add_flag("--table2", evaluate.table2, "Render the grid as an 8-row table (implies --grid)");
  eval_cmd->add_option("--seed", evaluate.seed, "Seed for the random baseline")->capture_default_str();
  eval_cmd->add_option("--trials", evaluate.trials, "Random-baseline trials")->capture_default_str();
  eval_cmd->add_option("--augment", evaluate.augment, "Augmentation sources for a single run")->delimiter(',');
  eval_cmd->add_option("--pca", evaluate.pca, "Variance fraction, component count, or 'off'")->capture_default_str();
  eval_cmd->add_option("--ridge", evaluate.ridge, "Ridge lambda");
  eval_cmd->add_flag("--raw-feature-space", evaluate.raw_feature_space, "Compare in raw feature units");
  eval_cmd->add_flag("--allow-singleton", evaluate.allow_singleton, "Accept pieces with one performance");
  eval_cmd->add_flag("--per-annotator", evaluate.per_annotator, "One query per core pair");
  eval_cmd->add_option("--aggregate", evaluate.aggregate, "Word-vector aggregation: sum or mean")->capture_default_str();
  eval_cmd->add_option("--report", evaluate.report, "Write the full report document here");
  eval_cmd->add_option("--csv", evaluate.csv, "Write the summary CSV here");

  OnsetArgs onsets;
  auto* onset_cmd = app.add_subcommand("onsets", "Measure onset density (onsets per second)");
  onset_cmd->add_option("--audio", onsets.audio, "WAV file");
  onset_cmd->add_option("--catalog", onsets.catalog, "Batch mode: every performance with an audio_path");
  onset_cmd->add_option("--patch-out", onsets.patch_out, "Batch mode: write a catalog patch document");
  onset_cmd->add_option("--audio-root", onsets.audio_root, "Base directory for relative audio paths");
  onset_cmd->add_option("--frame", onsets.config.frame_size, "Frame size in samples")->capture_default_str();
  onset_cmd->add_option("--hop", onsets.config.hop_size, "Hop size in samples")->capture_default_str();
  onset_cmd->add_option("--smoothing", onsets.config.flux_smoothing, "Flux smoothing in frames")->capture_default_str();
  onset_cmd->add_option("--delta", onsets.config.peak_threshold_delta, "Peak threshold above local median")
      ->capture_default_str();
  onset_cmd->add_option("--min-gap", onsets.config.min_inter_onset_gap, "Minimum seconds between onsets")
      ->capture_default_str();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP query service");
  serve_cmd->add_option("--port", serve.port, "Port")->envname("ESPRESSO_PORT")->capture_default_str();
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--catalog", serve.catalog, "Catalog document")->envname("ESPRESSO_CATALOG");
  serve_cmd->add_option("--model", serve.model, "Model file")->envname("ESPRESSO_MODEL");
  serve_cmd->add_option("--embeddings", serve.embeddings, "Word-vector file")->envname("ESPRESSO_EMBEDDINGS");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic linear-world fixture");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.world.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--noise", synth.world.noise_fraction, "Embedding noise as a fraction of signal RMS")
      ->capture_default_str();
  synth_cmd->add_option("--pieces", synth.world.pieces, "Pieces")->capture_default_str();
  synth_cmd->add_option("--performances", synth.world.performances_per_piece, "Performances per piece")
      ->capture_default_str();
  synth_cmd->add_option("--pitchfork", synth.world.pitchfork_pairs, "Pitchfork-tagged augmentation pairs")
      ->capture_default_str();
  synth_cmd->add_option("--musiccaps", synth.world.musiccaps_pairs, "MusicCaps-tagged augmentation pairs")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*query_cmd) return run_query(query);
    if (*eval_cmd) return run_evaluate(evaluate);
    if (*onset_cmd) return run_onsets(onsets);
    if (*serve_cmd) return run_serve(serve);
    if (*synth_cmd) return run_synth(synth);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const espresso::Error& e) {
    std::cerr << "error [" << espresso::to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
