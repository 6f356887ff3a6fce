#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "espresso/corpus.hpp"
#include "espresso/numerics.hpp"
#include "espresso/text_encoder.hpp"

namespace espresso::synthetic {

// A linear world where every word has a latent mid-level profile and its
// embedding is A * profile (+ optional Gaussian noise). Performances get
// random profiles; each description is the set of words whose profiles are
// closest in angle to the performance's profile.
struct WorldConfig {
  std::size_t pieces = 6;
  std::size_t performances_per_piece = 5;
  std::size_t vocabulary = 40;
  std::size_t embedding_dimension = 50;
  std::size_t words_per_description = 5;
  std::size_t pitchfork_pairs = 0;
  std::size_t musiccaps_pairs = 0;
  double noise_fraction = 0.0;  // noise std as a fraction of the embedding RMS
  double profile_jitter = 0.3;  // random deviation of performances from the frame directions
  double onset_offset = 3.0;    // keeps onset density positive
  std::uint64_t seed = 1;
};

struct World {
  Catalog catalog;
  std::vector<DescriptionPair> pairs;
  WordEmbeddingTable table;
};

// "a", "b", ..., "z", "ba", ... prefixed so every word tokenizes whole.
inline std::string word_name(std::size_t i) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return "lex" + s;
}

namespace detail {

inline Vector8 random_profile(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector8 v;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

// Unit directions of a random orthonormal frame, scaled to the typical norm
// of a standard normal draw in 8 dimensions.
inline std::vector<Vector8> random_frame(std::mt19937_64& rng) {
  Eigen::MatrixXd gauss(static_cast<Eigen::Index>(kMidLevelDims), static_cast<Eigen::Index>(kMidLevelDims));
  for (Eigen::Index c = 0; c < gauss.cols(); ++c) gauss.col(c) = random_profile(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd q = qr.householderQ();
  std::vector<Vector8> out;
  for (Eigen::Index c = 0; c < q.cols(); ++c) out.push_back(q.col(c) * std::sqrt(static_cast<double>(kMidLevelDims)));
  return out;
}

inline std::string describe(const Vector8& profile, const std::vector<Vector8>& words, std::size_t count) {
  std::vector<std::size_t> order(words.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> cos(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    cos[i] = profile.dot(words[i]) / (profile.norm() * words[i].norm());
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cos[a] > cos[b]; });
  std::string text;
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) {
    if (!text.empty()) text += ", ";
    text += word_name(order[i]);
  }
  return text;
}

}  // namespace detail

inline World make_world(const WorldConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto d = static_cast<Eigen::Index>(config.embedding_dimension);
  Eigen::MatrixXd gauss(d, static_cast<Eigen::Index>(kMidLevelDims));
  for (Eigen::Index r = 0; r < gauss.rows(); ++r) {
    for (Eigen::Index c = 0; c < gauss.cols(); ++c) gauss(r, c) = normal(rng);
  }
  // Random orthonormal columns, scaled like a unit-variance Gaussian matrix.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd mixing = qr.householderQ() * Eigen::MatrixXd::Identity(d, gauss.cols()) *
                                 std::sqrt(static_cast<double>(d));

  // The first words are the poles of a random orthonormal frame, so every
  // latent direction has a word pointing along it; the rest are random.
  const auto frame = detail::random_frame(rng);
  std::vector<Vector8> word_profiles;
  Eigen::MatrixXd embeddings(static_cast<Eigen::Index>(config.vocabulary), d);
  for (std::size_t w = 0; w < config.vocabulary; ++w) {
    if (w < 2 * frame.size()) {
      word_profiles.push_back((w % 2 == 0 ? 1.0 : -1.0) * frame[w / 2]);
    } else {
      word_profiles.push_back(detail::random_profile(rng));
    }
    embeddings.row(static_cast<Eigen::Index>(w)) = (mixing * word_profiles.back()).transpose();
  }
  if (config.noise_fraction > 0.0) {
    const double rms = std::sqrt(embeddings.squaredNorm() / static_cast<double>(embeddings.size()));
    // Separate stream: the noisy world keeps the clean world's catalog and
    // descriptions and differs only in the embeddings.
    std::mt19937_64 noise_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, config.noise_fraction * rms);
    for (Eigen::Index i = 0; i < embeddings.size(); ++i) embeddings.data()[i] += noise(noise_rng);
  }

  World world{Catalog{}, {}, WordEmbeddingTable(config.embedding_dimension)};
  for (std::size_t w = 0; w < config.vocabulary; ++w) {
    const Eigen::VectorXd row = embeddings.row(static_cast<Eigen::Index>(w)).transpose();
    world.table.add(word_name(w), std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }

  const auto observed = [&](const Vector8& latent) {
    MidLevelVector m = from_eigen(latent);
    m[kOnsetDensityIndex] = std::max(0.0, m[kOnsetDensityIndex] + config.onset_offset);
    return m;
  };

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Piece> pieces;
  std::vector<Performance> performances;
  for (std::size_t p = 0; p < config.pieces; ++p) {
    Piece piece{"piece" + std::to_string(p + 1), "Synthetic piece " + std::to_string(p + 1), {}};
    for (std::size_t k = 0; k < config.performances_per_piece; ++k) {
      const auto id = piece.piece_id + "_perf" + std::to_string(k + 1);
      // Performances walk the frame cyclically so every direction is used
      // about equally often and the pieces' performances stay well apart.
      const std::size_t slot = p * config.performances_per_piece + k;
      const double sign = uniform(rng) < 0.5 ? -1.0 : 1.0;
      Vector8 latent = sign * frame[slot % frame.size()] + config.profile_jitter * detail::random_profile(rng);
      latent *= std::sqrt(static_cast<double>(kMidLevelDims)) / latent.norm();
      const MidLevelVector features = observed(latent);
      piece.performance_ids.push_back(id);
      performances.push_back({id, piece.piece_id, "Artist " + std::to_string(k + 1), features, {}});
      world.pairs.push_back({detail::describe(latent, word_profiles, config.words_per_description), features,
                             Source::core, piece.piece_id, id});
    }
    pieces.push_back(std::move(piece));
  }

  for (auto [source, count] : {std::pair{Source::pitchfork, config.pitchfork_pairs},
                               std::pair{Source::musiccaps, config.musiccaps_pairs}}) {
    for (std::size_t i = 0; i < count; ++i) {
      const Vector8 latent = detail::random_profile(rng);
      world.pairs.push_back({detail::describe(latent, word_profiles, config.words_per_description),
                             observed(latent), source, {}, {}});
    }
  }

  world.catalog = make_catalog(std::move(pieces), std::move(performances));
  return world;
}

}  // namespace espresso::synthetic
