#include <chrono>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace espresso;
using espresso::testing::TempDir;
using espresso::testing::click_track;
using espresso::testing::silence;
using espresso::testing::tone;

namespace {

std::vector<unsigned char> mulaw_file() {
  auto bytes = encode_wav(std::vector<double>(100, 0.0), 1, 8000, WavEncoding::pcm16);
  bytes[20] = 7;  // format tag: mu-law
  bytes[34] = 8;  // bits per sample
  return bytes;
}

}  // namespace

TEST(Wav, SilentMonoPcm16) {
  const auto clip = decode_wav_bytes(encode_wav(std::vector<double>(44100, 0.0), 1, 44100, WavEncoding::pcm16));
  EXPECT_EQ(clip.sample_rate, 44100u);
  ASSERT_EQ(clip.samples.size(), 44100u);
  EXPECT_EQ(*std::max_element(clip.samples.begin(), clip.samples.end()), 0.0);
  EXPECT_DOUBLE_EQ(clip.duration(), 1.0);
}

TEST(Wav, StereoChannelsAveraged) {
  std::vector<double> interleaved;
  for (int i = 0; i < 1000; ++i) {
    interleaved.push_back(0.5);
    interleaved.push_back(-0.5);
  }
  for (auto enc : {WavEncoding::pcm16, WavEncoding::float32}) {
    const auto clip = decode_wav_bytes(encode_wav(interleaved, 2, 22050, enc));
    ASSERT_EQ(clip.samples.size(), 1000u);
    for (double s : clip.samples) EXPECT_EQ(s, 0.0);
  }
}

TEST(Wav, MulawRejected) {
  try {
    decode_wav_bytes(mulaw_file());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_encoding);
  }
}

TEST(Wav, TruncatedAndEmptyDataRejected) {
  auto bytes = encode_wav(std::vector<double>(100, 0.25), 1, 8000, WavEncoding::pcm16);
  bytes.resize(bytes.size() - 10);
  try {
    decode_wav_bytes(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::truncated);
  }
  try {
    decode_wav_bytes(encode_wav(std::vector<double>{}, 1, 8000, WavEncoding::pcm16));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::truncated);
  }
  const std::vector<unsigned char> junk{'R', 'I', 'F', 'F', 0, 0, 0, 0, 'A', 'V', 'I', ' '};
  EXPECT_THROW(decode_wav_bytes(junk), Error);
}

TEST(Wav, Pcm16RoundTripIsSampleExact) {
  TempDir dir("wav");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> draw(-32768, 32767);
  std::vector<double> samples(5000);
  for (auto& s : samples) s = draw(rng) / 32768.0;
  write_wav(dir.file("x.wav"), samples, 1, 16000);
  const auto clip = decode_wav(dir.file("x.wav"));
  ASSERT_EQ(clip.samples.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) ASSERT_EQ(clip.samples[i], samples[i]) << i;
}

TEST(Wav, ExtraChunksSkipped) {
  auto bytes = encode_wav(std::vector<double>(10, 0.5), 1, 8000, WavEncoding::float32);
  std::vector<unsigned char> list{'L', 'I', 'S', 'T', 3, 0, 0, 0, 'a', 'b', 'c', 0};
  bytes.insert(bytes.begin() + 36, list.begin(), list.end());
  const auto clip = decode_wav_bytes(bytes);
  ASSERT_EQ(clip.samples.size(), 10u);
  EXPECT_EQ(clip.samples[3], 0.5);
}

TEST(Onsets, FourHertzClickTrack) {
  const auto start = std::chrono::steady_clock::now();
  const double d = onset_density(click_track(4.0, 10.0));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_NEAR(d, 4.0, 0.2);
  EXPECT_LT(seconds, 5.0);
}

TEST(Onsets, SilenceHasNoOnsets) { EXPECT_EQ(onset_density(silence(10.0)), 0.0); }

TEST(Onsets, SingleToneAttack) { EXPECT_NEAR(onset_density(tone(440.0, 10.0)), 0.1, 0.05); }

TEST(Onsets, GainInvariance) {
  const double reference = onset_density(click_track(4.0, 10.0, 44100, 1.0));
  for (double gain : {0.1, 0.5, 1.0}) {
    EXPECT_NEAR(onset_density(click_track(4.0, 10.0, 44100, gain)), reference, 0.02 * reference) << gain;
  }
}

TEST(Onsets, DoublingRateDoublesDensity) {
  for (double rate : {1.0, 2.0, 3.0, 5.0}) {
    const double base = onset_density(click_track(rate, 10.0));
    const double doubled = onset_density(click_track(2.0 * rate, 10.0));
    EXPECT_NEAR(doubled / base, 2.0, 0.2) << rate;
  }
}

TEST(Onsets, ShortClipRejected) {
  try {
    onset_density(click_track(4.0, 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::clip_too_short);
    EXPECT_NE(std::string(e.what()).find("too short"), std::string::npos);
  }
}

TEST(Onsets, ConfigValidation) {
  EXPECT_THROW(OnsetConfig{.frame_size = 1000}.validate(), Error);
  EXPECT_THROW((OnsetConfig{.frame_size = 512, .hop_size = 1024}.validate()), Error);
  EXPECT_THROW(OnsetConfig{.flux_smoothing = 0}.validate(), Error);
  EXPECT_THROW(OnsetConfig{.peak_threshold_delta = -0.1}.validate(), Error);
  EXPECT_THROW(OnsetConfig{.min_inter_onset_gap = 0.0}.validate(), Error);
  EXPECT_NO_THROW(OnsetConfig{}.validate());
  EXPECT_NO_THROW((OnsetConfig{.frame_size = 1024, .hop_size = 256}.validate()));
  EXPECT_NEAR(onset_density(click_track(4.0, 10.0), {.frame_size = 1024, .hop_size = 256}), 4.0, 0.2);
}

TEST(FeatureProvider, PassthroughAndComputeModes) {
  TempDir dir("provider");
  const auto clicks = click_track(4.0, 10.0);
  write_wav(dir.file("clicks.wav"), clicks.samples, 1, clicks.sample_rate);

  const auto stored = espresso::testing::features({1, 2, 3, 4, 5, 6, 7, 9});
  Performance perf{"p1", "piece", "A", stored, "clicks.wav"};
  FeatureProvider passthrough;
  EXPECT_EQ(provide_features(passthrough, perf).features, stored);
  EXPECT_FALSE(provide_features(passthrough, perf).onset_overridden);

  FeatureProvider compute{ProviderMode::compute_onset_density, {}, dir.path()};
  const auto provided = provide_features(compute, perf);
  EXPECT_TRUE(provided.onset_overridden);
  EXPECT_EQ(provided.stored_onset_density, 9.0);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(provided.features[i], stored[i]);
  EXPECT_NEAR(provided.features.onset_density(), 4.0, 0.2);

  Performance no_audio{"p2", "piece", "B", stored, {}};
  try {
    provide_features(compute, no_audio);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_audio);
    EXPECT_NE(std::string(e.what()).find("p2"), std::string::npos);
  }
}

TEST(FeatureProvider, BatchPatchAppliesToCatalog) {
  TempDir dir("patch");
  const auto clicks = click_track(2.0, 5.0, 44100, 1.0, 0.25);
  write_wav(dir.file("a.wav"), clicks.samples, 1, clicks.sample_rate);
  const Catalog catalog = make_catalog(
      {{"piece", "P", {"a", "b"}}},
      {{"a", "piece", "A", espresso::testing::features({0, 0, 0, 0, 0, 0, 0, 7}), "a.wav"},
       {"b", "piece", "B", espresso::testing::features({0, 0, 0, 0, 0, 0, 0, 5}), {}}});
  const auto patch = extract_onset_patch(catalog, {ProviderMode::passthrough, {}, dir.path()});
  ASSERT_EQ(patch.size(), 1u);
  EXPECT_NEAR(patch.at("a"), 2.0, 0.1);
  const auto patched = apply_onset_patch(catalog, patch);
  EXPECT_NEAR(patched.find_performance("a")->features.onset_density(), 2.0, 0.1);
  EXPECT_EQ(patched.find_performance("b")->features.onset_density(), 5.0);
  EXPECT_EQ(onset_patch_to_json(patch).at("schema_version"), 1);
  EXPECT_THROW(apply_onset_patch(catalog, {{"ghost", 1.0}}), Error);
}
