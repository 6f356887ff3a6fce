// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "espresso/espresso.hpp"

using namespace espresso;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Catalog uniform_catalog(std::size_t pieces, std::size_t k) {
  std::vector<Piece> ps;
  std::vector<Performance> perfs;
  for (std::size_t p = 0; p < pieces; ++p) {
    Piece piece{"piece" + std::to_string(p), "P", {}};
    for (std::size_t i = 0; i < k; ++i) {
      const auto id = piece.piece_id + "_" + std::to_string(i);
      piece.performance_ids.push_back(id);
      perfs.push_back({id, piece.piece_id, "A", {}, {}});
    }
    ps.push_back(piece);
  }
  return make_catalog(ps, perfs);
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int set = 0; set < 1000; ++set) {
    std::vector<QueryOutcome> outcomes;
    const std::size_t n = 1 + rng() % 50;
    long hits1 = 0, hits2 = 0;
    long double rr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = 1 + rng() % 10;
      const std::size_t r = 1 + rng() % k;
      outcomes.push_back({"p", "x", r, k});
      hits1 += r == 1;
      hits2 += r <= 2;
      rr += 1.0L / static_cast<long double>(r);
    }
    const auto nn = static_cast<long double>(n);
    mismatches += top_k_ratio(outcomes, 1) != static_cast<double>(hits1 / nn);
    mismatches += top_k_ratio(outcomes, 2) != static_cast<double>(hits2 / nn);
    mismatches += std::abs(mrr(outcomes) - static_cast<double>(rr / nn)) > 1e-15;
  }
  const std::vector<QueryOutcome> example{{"p", "a", 2, 5}, {"p", "b", 4, 5}};
  const double m = mrr(example);
  const double t = seconds_since(start);
  return {mismatches == 0 && m == 0.375 && t < 1.0,
          fmt("1000 random sets, %zu mismatches; MRR[2,4] = %.6f; %.3f s (limit 1 s)", mismatches, m, t)};
}

Outcome random_baseline_check() {
  const auto start = Clock::now();
  const auto m = random_baseline(uniform_catalog(6, 5), 100000, 1);
  const double t = seconds_since(start);
  const bool ok = std::abs(m.top1 - 0.2) <= 0.005 && std::abs(m.top2 - 0.4) <= 0.005 &&
                  std::abs(m.mrr - 137.0 / 300.0) <= 0.005 && t < 10.0;
  return {ok, fmt("top1 %.4f (0.200), top2 %.4f (0.400), mrr %.4f (%.4f), tol 0.005; %.2f s (limit 10 s)", m.top1,
                  m.top2, m.mrr, 137.0 / 300.0, t)};
}

Outcome linear_fit_oracle() {
  std::mt19937_64 rng(77);
  double worst_coef = 0.0, worst_orth = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 20);
    const Eigen::Index n = 2 * d + static_cast<Eigen::Index>(rng() % 30);
    const Eigen::MatrixXd X = random_matrix(rng, n, d);
    const Eigen::MatrixXd Y = random_matrix(rng, n, 8);
    const auto map = fit_linear(X, Y, 0.0);

    Eigen::MatrixXd A(n, d + 1);
    A << X, Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd beta = (A.transpose() * A).ldlt().solve(A.transpose() * Y);
    const double coef = std::max((map.weights - beta.topRows(d).transpose()).cwiseAbs().maxCoeff(),
                                 (map.bias - beta.row(d).transpose()).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd residual = Y - ((X * map.weights.transpose()).rowwise() + map.bias.transpose());
    const double scale = X.cwiseAbs().maxCoeff() * Y.cwiseAbs().maxCoeff() * static_cast<double>(n);
    const double orth = (A.transpose() * residual).cwiseAbs().maxCoeff() / scale;
    worst_coef = std::max(worst_coef, coef);
    worst_orth = std::max(worst_orth, orth);
  }
  return {worst_coef <= 1e-6 && worst_orth <= 1e-6,
          fmt("100 problems (n >= 2d, d <= 20): max coef error %.2e (limit 1e-6), residual orthogonality %.2e x scale "
              "(limit 1e-6)",
              worst_coef, worst_orth)};
}

Outcome pca_properties() {
  std::mt19937_64 rng(88);
  double worst_ortho = 0.0, worst_iso = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 10);
    const Eigen::MatrixXd X = random_matrix(rng, d + 10, d) * random_matrix(rng, d, d);
    const auto pca = fit_pca(X, PcaComponentCount{static_cast<std::size_t>(d)});
    worst_ortho = std::max(
        worst_ortho, (pca.components * pca.components.transpose() - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
    for (Eigen::Index i = 1; i < pca.explained_variance_ratio.size(); ++i) {
      monotone = monotone && pca.explained_variance_ratio[i] <= pca.explained_variance_ratio[i - 1];
    }
    const Eigen::MatrixXd Z = apply_pca_rows(pca, X);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
        worst_iso = std::max(worst_iso, std::abs((Z.row(i) - Z.row(j)).norm() - (X.row(i) - X.row(j)).norm()));
      }
    }
  }
  Eigen::MatrixXd line(4, 2);
  line << 0, 0, 1, 2, 2, 4, 3, 6;
  const auto pca = fit_pca(line, PcaComponentCount{1});
  const double dir_err = std::max(std::abs(pca.components(0, 0) - 1.0 / std::sqrt(5.0)),
                                  std::abs(pca.components(0, 1) - 2.0 / std::sqrt(5.0)));
  const double var_err = std::abs(pca.explained_variance_ratio[0] - 1.0);
  const bool ok = worst_ortho <= 1e-8 && monotone && dir_err <= 1e-8 && var_err <= 1e-8 && worst_iso <= 1e-8;
  return {ok, fmt("orthonormality %.1e, variance %s, line direction error %.1e, variance ratio %.12f, isometry %.1e "
                  "(tolerance 1e-8)",
                  worst_ortho, monotone ? "non-increasing" : "NOT monotone", dir_err, pca.explained_variance_ratio[0],
                  worst_iso)};
}

Outcome synthetic_recovery() {
  const auto start = Clock::now();
  synthetic::WorldConfig config;  // 40 words, 50 x 8 mixing, 6 pieces x 5 performances, 5 words each
  const auto clean_world = synthetic::make_world(config);
  const auto clean = run_piecewise_cv(clean_world.catalog, clean_world.pairs, clean_world.table, {}).aggregate;
  config.noise_fraction = 0.5;
  const auto noisy_world = synthetic::make_world(config);
  const auto noisy = run_piecewise_cv(noisy_world.catalog, noisy_world.pairs, noisy_world.table, {}).aggregate;
  const auto chance = expected_random_metrics(clean_world.catalog);
  const double t = seconds_since(start);

  const bool clean_ok = clean.top1 >= 0.95 && clean.mrr >= 0.97;
  const bool not_better = noisy.top1 <= clean.top1 && noisy.mrr <= clean.mrr;
  const bool strictly_worse = not_better && (noisy.top1 < clean.top1 || noisy.mrr < clean.mrr);
  const bool above_chance = noisy.top1 > chance.top1 && noisy.mrr > chance.mrr;
  return {clean_ok && not_better && above_chance && t < 30.0,
          fmt("clean top1 %.4f (>= 0.95) mrr %.4f (>= 0.97); noise 0.5: top1 %.4f mrr %.4f (%s clean; chance %.3f/%.4f); "
              "%.2f s (limit 30 s)",
              clean.top1, clean.mrr, noisy.top1, noisy.mrr,
              strictly_worse ? "below" : (not_better ? "equal to" : "ABOVE"), chance.top1, chance.mrr, t)};
}

Outcome ranking_invariances() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  std::size_t changed = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t k = 2 + rng() % 8;
    Piece piece{"p", "P", {}};
    std::vector<Performance> perfs;
    for (std::size_t i = 0; i < k; ++i) {
      MidLevelVector m;
      for (std::size_t j = 0; j < 8; ++j) m[j] = normal(rng);
      m[kOnsetDensityIndex] = std::abs(m[kOnsetDensityIndex]);
      piece.performance_ids.push_back("q" + std::to_string(i));
      perfs.push_back({piece.performance_ids.back(), "p", "A", m, {}});
    }
    ProjectionModel model;
    model.input_dimension = 8;
    model.map.weights = Eigen::MatrixXd::Identity(8, 8);
    model.feature_standardization = Standardization{Vector8::Zero(), Vector8::Constant(1.0 + scale(rng) * 1e-3)};
    model.config_fingerprint = "x";
    const auto index = build_index(make_catalog({piece}, perfs), model);
    const Vector8 q = Vector8::NullaryExpr([&](Eigen::Index) { return normal(rng); });
    const auto a = rank_projected(index, "p", q);
    const auto b = rank_projected(index, "p", scale(rng) * q);
    for (std::size_t i = 0; i < a.size(); ++i) changed += a[i].performance_id != b[i].performance_id || a[i].rank != b[i].rank;
  }

  Vector8 p1 = Vector8::Zero(), p2 = Vector8::Zero(), p3 = Vector8::Zero(), q = Vector8::Zero();
  p1 << 1, 1, 0, 0, 0, 0, 0, 0;
  p2 << 1, 0, 0, 0, 0, 0, 0, 0;
  p3 << 0, 1, 0, 0, 0, 0, 0, 0;
  q << 2, 1, 0, 0, 0, 0, 0, 0;
  const double expected[3] = {3.0 / (std::sqrt(2.0) * std::sqrt(5.0)), 2.0 / std::sqrt(5.0), 1.0 / std::sqrt(5.0)};
  const double got[3] = {cosine_similarity(q, p1).value, cosine_similarity(q, p2).value, cosine_similarity(q, p3).value};
  double err = 0.0;
  for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(got[i] - expected[i]));
  return {changed == 0 && err <= 1e-9,
          fmt("1000 scaled-query draws, %zu rank changes; cosine fixture %.4f/%.4f/%.4f, max error %.1e (limit 1e-9)",
              changed, got[0], got[1], got[2], err)};
}

AudioClip click_track(double rate, double seconds, double gain) {
  AudioClip clip{std::vector<double>(static_cast<std::size_t>(seconds * 44100), 0.0), 44100};
  for (double t = 0.0; t < seconds; t += 1.0 / rate) {
    const auto s = static_cast<std::size_t>(std::llround(t * 44100));
    for (std::size_t i = 0; i < 44 && s + i < clip.samples.size(); ++i) clip.samples[s + i] = gain;
  }
  return clip;
}

Outcome onset_density_check() {
  double slowest = 0.0;
  const auto timed = [&](const AudioClip& clip) {
    const auto start = Clock::now();
    const double d = onset_density(clip);
    slowest = std::max(slowest, seconds_since(start));
    return d;
  };
  const double clicks = timed(click_track(4.0, 10.0, 1.0));
  const double quiet = timed(AudioClip{std::vector<double>(441000, 0.0), 44100});
  double worst_gain = 0.0;
  for (double g : {0.1, 0.5, 1.0}) worst_gain = std::max(worst_gain, std::abs(timed(click_track(4.0, 10.0, g)) / clicks - 1.0));
  const bool ok = std::abs(clicks - 4.0) <= 0.2 && quiet == 0.0 && worst_gain <= 0.02 && slowest < 5.0;
  return {ok, fmt("4 Hz clicks %.3f (4.0 +/- 5%%), silence %.3f, gain deviation %.2f%% (limit 2%%), slowest clip %.2f s "
                  "(limit 5 s)",
                  clicks, quiet, 100.0 * worst_gain, slowest)};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const std::string& out_path) {
  const std::string cmd = std::string("'") + ESPRESSO_CLI_PATH + "' " + args + " > '" + out_path + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome protocol_shape() {
  const auto dir = std::filesystem::temp_directory_path() / ("espresso_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto p = [&](const char* name) { return (dir / name).string(); };
  int rc = run_cli("synth --out-dir '" + dir.string() + "' --pitchfork 20 --musiccaps 20", p("synth.txt"));
  const std::string data =
      "--catalog '" + p("catalog.json") + "' --pairs '" + p("pairs.json") + "' --embeddings '" + p("embeddings.txt") + "'";
  const std::string common = "evaluate --grid --table2 --seed 7 --trials 10000 " + data;
  rc |= run_cli(common + " --report '" + p("r1.json") + "' --csv '" + p("r1.csv") + "'", p("t1.txt"));
  rc |= run_cli(common + " --report '" + p("r2.json") + "' --csv '" + p("r2.csv") + "'", p("t2.txt"));

  const std::string table = read_file(p("t1.txt"));
  std::istringstream lines(table);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) rows += line.find("✓") != std::string::npos || line.find("✗") != std::string::npos;
  const bool identical = table == read_file(p("t2.txt")) && read_file(p("r1.json")) == read_file(p("r2.json")) &&
                         read_file(p("r1.csv")) == read_file(p("r2.csv"));
  std::filesystem::remove_all(dir);
  std::printf("%s", table.c_str());
  return {rc == 0 && rows == 8 && identical,
          fmt("exit %d, %d configuration rows (expect 8), repeated seed 7 %s", rc, rows,
              identical ? "byte-identical (table, report, CSV)" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric oracles", metric_oracles},
      {"random baseline", random_baseline_check},
      {"linear-fit oracle", linear_fit_oracle},
      {"PCA properties", pca_properties},
      {"end-to-end synthetic recovery", synthetic_recovery},
      {"ranking invariances", ranking_invariances},
      {"onset density", onset_density_check},
      {"protocol shape", protocol_shape},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu acceptance criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
