#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>
#include <json.hpp>

#include "espresso/corpus.hpp"
#include "espresso/error.hpp"
#include "espresso/mid_level.hpp"

namespace espresso {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  unsigned sample_rate = 0;

  double duration() const {
    return sample_rate == 0 ? 0.0 : static_cast<double>(samples.size()) / sample_rate;
  }
};

// ---------------------------------------------------------------------------
// WAV

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

// RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples. Channels are
// averaged to mono; 16-bit samples are scaled by 1/32768.
inline AudioClip decode_wav_bytes(std::span<const unsigned char> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    if (bytes.size() < 12) throw Error(ErrorCode::truncated, "file too short for a RIFF header");
    throw Error(ErrorCode::unsupported_encoding, "not a RIFF/WAVE file");
  }

  std::optional<std::uint16_t> format;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::optional<std::span<const unsigned char>> data;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* header = bytes.data() + pos;
    const std::uint32_t size = read_u32(header + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(header, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw Error(ErrorCode::truncated, "truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      sample_rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (*format == 0xFFFE) {
        if (size < 26) throw Error(ErrorCode::truncated, "truncated extensible fmt chunk");
        format = read_u16(f + 24);  // first two bytes of the subformat GUID
      }
    } else if (std::memcmp(header, "data", 4) == 0) {
      if (body + size > bytes.size()) {
        throw Error(ErrorCode::truncated, "data chunk declares " + std::to_string(size) +
                                              " bytes but the file ends early");
      }
      data = bytes.subspan(body, size);
    }
    pos = body + size + (size & 1u);
  }

  if (!format) throw Error(ErrorCode::truncated, "missing fmt chunk");
  if (!data) throw Error(ErrorCode::truncated, "missing data chunk");
  const bool pcm16 = *format == 1 && bits == 16;
  const bool float32 = *format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorCode::unsupported_encoding,
                "unsupported WAV encoding (format tag " + std::to_string(*format) + ", " +
                    std::to_string(bits) + " bits); expected PCM16 or float32");
  }
  if (channels == 0 || sample_rate == 0) throw Error(ErrorCode::unsupported_encoding, "invalid fmt chunk");
  if (data->empty()) throw Error(ErrorCode::truncated, "zero-length data chunk");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data->size() / frame_bytes;
  if (frames == 0) throw Error(ErrorCode::truncated, "data chunk holds no complete frame");

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(frames);
  const unsigned char* p = data->data();
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
        p += 2;
      } else {
        const std::uint32_t raw = read_u32(p);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        acc += f;
        p += 4;
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

inline AudioClip decode_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'", {path});
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  return decode_wav_bytes(bytes);
}

// Interleaved samples; `channels` consecutive values form one frame.
inline std::vector<unsigned char> encode_wav(std::span<const double> interleaved, unsigned channels,
                                             unsigned sample_rate, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_size);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, encoding == WavEncoding::pcm16 ? 1 : 3);
  detail::put_u16(out, static_cast<std::uint16_t>(channels));
  detail::put_u32(out, sample_rate);
  detail::put_u32(out, sample_rate * channels * (bits / 8));
  detail::put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_size);
  for (double s : interleaved) {
    if (encoding == WavEncoding::pcm16) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      detail::put_u16(out, static_cast<std::uint16_t>(v));
    } else {
      const float f = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      detail::put_u32(out, raw);
    }
  }
  return out;
}

inline void write_wav(const std::string& path, std::span<const double> interleaved, unsigned channels,
                      unsigned sample_rate, WavEncoding encoding = WavEncoding::pcm16) {
  const auto bytes = encode_wav(interleaved, channels, sample_rate, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'", {path});
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Onset density

struct OnsetConfig {
  std::size_t frame_size = 2048;     // samples, power of two
  std::size_t hop_size = 512;        // samples
  std::size_t flux_smoothing = 3;    // moving-average width in frames
  double peak_threshold_delta = 0.07;  // above the local median, flux normalized to max 1
  double min_inter_onset_gap = 0.05;   // seconds
  double median_window = 0.1;          // seconds on each side of a frame

  void validate() const {
    const bool pow2 = frame_size > 0 && (frame_size & (frame_size - 1)) == 0;
    if (!pow2) throw Error(ErrorCode::invalid_argument, "frame size must be a power of two");
    if (hop_size == 0 || hop_size > frame_size) {
      throw Error(ErrorCode::invalid_argument, "hop size must be in [1, frame size]");
    }
    if (flux_smoothing == 0) throw Error(ErrorCode::invalid_argument, "flux smoothing must be >= 1 frame");
    if (!(peak_threshold_delta >= 0.0) || !std::isfinite(peak_threshold_delta)) {
      throw Error(ErrorCode::invalid_argument, "peak threshold delta must be >= 0");
    }
    if (!(min_inter_onset_gap > 0.0) || !(median_window > 0.0)) {
      throw Error(ErrorCode::invalid_argument, "onset gap and median window must be positive");
    }
  }
};

// Half-wave-rectified spectral flux of Hann-windowed frames centred on
// t = i * hop, smoothed by a centred moving average.
inline std::vector<double> spectral_flux(const AudioClip& clip, const OnsetConfig& config) {
  const std::size_t frame = config.frame_size;
  const std::size_t hop = config.hop_size;
  const std::size_t half = frame / 2;

  std::vector<double> padded(clip.samples.size() + 2 * half, 0.0);
  std::copy(clip.samples.begin(), clip.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));
  const std::size_t frames = 1 + (padded.size() - frame) / hop;

  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / frame);
  }

  Eigen::FFT<double> fft;
  std::vector<double> buffer(frame);
  std::vector<std::complex<double>> spectrum;
  const std::size_t bins = frame / 2 + 1;
  std::vector<double> previous(bins, 0.0);
  std::vector<double> current(bins, 0.0);
  std::vector<double> flux(frames, 0.0);

  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = padded.data() + t * hop;
    for (std::size_t i = 0; i < frame; ++i) buffer[i] = src[i] * window[i];
    fft.fwd(spectrum, buffer);
    for (std::size_t k = 0; k < bins; ++k) current[k] = std::abs(spectrum[k]);
    if (t > 0) {
      double sum = 0.0;
      for (std::size_t k = 0; k < bins; ++k) sum += std::max(0.0, current[k] - previous[k]);
      flux[t] = sum;
    }
    std::swap(previous, current);
  }

  const std::size_t width = config.flux_smoothing;
  if (width <= 1) return flux;
  std::vector<double> smoothed(frames, 0.0);
  const std::ptrdiff_t lo = -static_cast<std::ptrdiff_t>((width - 1) / 2);
  for (std::size_t t = 0; t < frames; ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t) + lo + static_cast<std::ptrdiff_t>(j);
      if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(frames)) sum += flux[static_cast<std::size_t>(idx)];
    }
    smoothed[t] = sum / static_cast<double>(width);
  }
  return smoothed;
}

// Frame indices of detected onsets. The flux is normalized to a maximum of 1
// so the median-relative threshold does not depend on signal gain.
inline std::vector<std::size_t> detect_onsets(const AudioClip& clip, const OnsetConfig& config) {
  config.validate();
  std::vector<double> odf = spectral_flux(clip, config);
  const double peak = odf.empty() ? 0.0 : *std::max_element(odf.begin(), odf.end());
  if (!(peak > 1e-10)) return {};
  for (auto& v : odf) v /= peak;

  const double frame_seconds = static_cast<double>(config.hop_size) / clip.sample_rate;
  const auto median_half = static_cast<std::ptrdiff_t>(std::ceil(config.median_window / frame_seconds));
  const auto n = static_cast<std::ptrdiff_t>(odf.size());
  // Frames whose window runs past the last sample see the truncation as a
  // broadband burst; they are never reported.
  const auto half = static_cast<std::ptrdiff_t>(config.frame_size / 2);
  const auto last = (static_cast<std::ptrdiff_t>(clip.samples.size()) - half) / static_cast<std::ptrdiff_t>(config.hop_size);

  std::vector<std::size_t> onsets;
  std::vector<double> neighbourhood;
  for (std::ptrdiff_t t = 1; t + 1 < n && t <= last; ++t) {
    if (!(odf[t] > odf[t - 1] && odf[t] >= odf[t + 1])) continue;
    const auto a = std::max<std::ptrdiff_t>(0, t - median_half);
    const auto b = std::min<std::ptrdiff_t>(n - 1, t + median_half);
    neighbourhood.assign(odf.begin() + a, odf.begin() + b + 1);
    auto mid = neighbourhood.begin() + static_cast<std::ptrdiff_t>(neighbourhood.size() / 2);
    std::nth_element(neighbourhood.begin(), mid, neighbourhood.end());
    if (odf[t] < *mid + config.peak_threshold_delta) continue;

    const auto idx = static_cast<std::size_t>(t);
    if (!onsets.empty() &&
        static_cast<double>(idx - onsets.back()) * frame_seconds < config.min_inter_onset_gap) {
      if (odf[t] > odf[onsets.back()]) onsets.back() = idx;
      continue;
    }
    onsets.push_back(idx);
  }
  return onsets;
}

// Onsets per second over the whole clip.
inline double onset_density(const AudioClip& clip, const OnsetConfig& config = {}) {
  config.validate();
  if (clip.sample_rate == 0 || clip.samples.empty()) {
    throw Error(ErrorCode::clip_too_short, "clip is empty");
  }
  if (clip.duration() < 1.0) {
    throw Error(ErrorCode::clip_too_short,
                "clip too short: " + std::to_string(clip.duration()) + " s, need at least 1 s");
  }
  return static_cast<double>(detect_onsets(clip, config).size()) / clip.duration();
}

// ---------------------------------------------------------------------------
// Feature providers

enum class ProviderMode {
  passthrough,         // catalog features as stored
  compute_onset_density,  // stored seven + onset density measured from audio_path
};

struct FeatureProvider {
  ProviderMode mode = ProviderMode::passthrough;
  OnsetConfig onset;
  std::filesystem::path audio_root;  // relative audio paths resolve against this
};

struct ProvidedFeatures {
  MidLevelVector features;
  bool onset_overridden = false;
  double stored_onset_density = 0.0;
};

inline ProvidedFeatures provide_features(const FeatureProvider& provider, const Performance& performance) {
  ProvidedFeatures out;
  out.features = performance.features;
  out.stored_onset_density = performance.features.onset_density();
  if (provider.mode == ProviderMode::passthrough) return out;

  if (!performance.audio_path || performance.audio_path->empty()) {
    throw Error(ErrorCode::missing_audio,
                "performance '" + performance.performance_id + "' has no audio_path",
                {performance.performance_id});
  }
  std::filesystem::path path(*performance.audio_path);
  if (path.is_relative() && !provider.audio_root.empty()) path = provider.audio_root / path;
  out.features[kOnsetDensityIndex] = onset_density(decode_wav(path.string()), provider.onset);
  out.onset_overridden = true;
  return out;
}

// performance_id -> onset density for every performance that has audio.
inline std::map<std::string, double> extract_onset_patch(const Catalog& catalog,
                                                         const FeatureProvider& provider) {
  FeatureProvider compute = provider;
  compute.mode = ProviderMode::compute_onset_density;
  std::map<std::string, double> patch;
  for (const auto& perf : catalog.performances()) {
    if (!perf.audio_path) continue;
    patch[perf.performance_id] = provide_features(compute, perf).features.onset_density();
  }
  return patch;
}

inline nlohmann::json onset_patch_to_json(const std::map<std::string, double>& patch) {
  return {{"schema_version", kSchemaVersion}, {"onset_density", patch}};
}

inline Catalog apply_onset_patch(const Catalog& catalog, const std::map<std::string, double>& patch) {
  std::vector<Performance> perfs = catalog.performances();
  for (auto& p : perfs) {
    if (auto it = patch.find(p.performance_id); it != patch.end()) {
      p.features[kOnsetDensityIndex] = it->second;
    }
  }
  for (const auto& [id, value] : patch) {
    if (catalog.find_performance(id) == nullptr) {
      throw Error(ErrorCode::integrity, "patch names unknown performance '" + id + "'", {id});
    }
  }
  return make_catalog(catalog.pieces(), std::move(perfs));
}

}  // namespace espresso
