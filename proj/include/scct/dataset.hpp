#pragma once

// Synthetic corpus: codebook+noise "audio", the three hint sample types, and
// the JSONL manifest that materializes them.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scct/augment.hpp"
#include "scct/tensor.hpp"
#include "scct/vocab.hpp"

namespace scct {

struct SynthConfig {
  std::size_t feature_dim = 16;
  double noise_sigma = 0.5;
  std::uint64_t dataset_seed = 1;
  std::size_t min_duration = 2;
  std::size_t max_duration = 4;
  // Letters that sound alike share the first member's row plus a small
  // private offset, so their frames are close but distinct.
  std::vector<std::string> confusable_groups{"cks", "gj", "aei"};
  double confusable_spread = 0.15;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, feature_dim, noise_sigma,
                                                dataset_seed, min_duration, max_duration,
                                                confusable_groups, confusable_spread)

// Row id of the codebook is the token id; rows are drawn once per dataset.
inline std::vector<double> synth_codebook(const SynthConfig& cfg, std::size_t vocab_size) {
  Rng rng(cfg.dataset_seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t F = cfg.feature_dim;
  std::vector<double> book(vocab_size * F);
  for (double& x : book) x = n(rng);
  const Vocab vocab;
  if (vocab_size != vocab.size()) return book;
  for (const auto& group : cfg.confusable_groups) {
    if (group.size() < 2) continue;
    const std::size_t head = vocab.tokenize(group.substr(0, 1))[0];
    for (char c : group.substr(1)) {
      const std::size_t id = vocab.tokenize(std::string(1, c))[0];
      for (std::size_t f = 0; f < F; ++f)
        book[id * F + f] = book[head * F + f] + cfg.confusable_spread * book[id * F + f];
    }
  }
  return book;
}

// Each token becomes its codebook row repeated for a random 2..4 frames plus
// i.i.d. Gaussian noise. `forced_duration` pins every token's duration.
inline Tensor synth_features(const std::vector<std::size_t>& tokens, const SynthConfig& cfg,
                             std::uint64_t utterance_seed,
                             std::optional<std::size_t> forced_duration = std::nullopt,
                             std::size_t vocab_size = Vocab().size()) {
  if (cfg.feature_dim < 8) throw ContractError("synth_features: feature_dim must be >= 8");
  if (tokens.empty()) throw ContractError("synth_features: empty token sequence");
  if (cfg.min_duration == 0 || cfg.min_duration > cfg.max_duration) {
    throw ContractError("synth_features: bad duration range");
  }
  if (!(cfg.confusable_spread > 0.0)) throw ContractError("synth_features: spread must be > 0");
  const auto book = synth_codebook(cfg, vocab_size);
  Rng rng(utterance_seed);
  std::uniform_int_distribution<std::size_t> dur(cfg.min_duration, cfg.max_duration);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t F = cfg.feature_dim;
  std::vector<double> frames;
  for (std::size_t tok : tokens) {
    if (tok >= vocab_size) throw IndexError("synth_features: token out of range");
    const std::size_t d = forced_duration ? *forced_duration : dur(rng);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t f = 0; f < F; ++f) {
        double v = book[tok * F + f];
        if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise(rng);
        frames.push_back(v);
      }
  }
  const std::size_t T = frames.size() / F;
  return Tensor({T, F}, std::move(frames));
}

enum class SampleType { kOriginal, kNegativeOnly, kMixed };

inline std::string to_string(SampleType t) {
  switch (t) {
    case SampleType::kOriginal: return "original";
    case SampleType::kNegativeOnly: return "negative_only";
    case SampleType::kMixed: return "mixed";
  }
  return "original";
}

inline SampleType sample_type_from_string(const std::string& s) {
  if (s == "original") return SampleType::kOriginal;
  if (s == "negative_only") return SampleType::kNegativeOnly;
  if (s == "mixed") return SampleType::kMixed;
  throw FormatError("unknown sample type '" + s + "'");
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

// How hints are drawn for one sample.
struct HintPolicy {
  std::array<double, 3> type_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::size_t min_positives = 1;
  std::size_t max_positives = 3;
  std::size_t min_negatives = 1;
  std::size_t max_negatives = 6;
  std::vector<std::string> negative_pool;
  std::set<std::string> lexicon;  // augmented positives must avoid these
  std::vector<SoundalikeRule> soundalikes = default_soundalike_table();
};

// Positive hints are re-spelled words of the text; the reference transcript
// carries the new spelling while the audio is rendered from the original
// ("spoken") words, so the hint is the only source of the spelling.
struct TrainingSample {
  Tensor features;
  std::vector<std::size_t> target_tokens;
  std::string text;    // reference transcript
  std::string spoken;  // words the features were rendered from
  std::vector<std::string> hints;
  SampleType sample_type = SampleType::kOriginal;
  std::uint64_t seed = 0;
};

// Duplication, sound-alike rewrite, or both; never returns the input or a
// lexicon word.
inline std::optional<std::string> augment_hint_word(const std::string& word,
                                                    const HintPolicy& policy, Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 2);
  for (int attempt = 0; attempt < 8; ++attempt) {
    const int k = kind(rng);
    std::string w = word;
    if (k != 1) w = duplicate_char_augment(w, rng);
    if (k != 0) {
      SoundalikeResult s = soundalike_augment(w, policy.soundalikes, rng);
      if (!s.changed && k == 1) w = duplicate_char_augment(w, rng);
      else w = s.word;
    }
    if (w != word && !policy.lexicon.count(w)) return w;
  }
  return std::nullopt;
}

namespace detail {

inline bool contains_any(const std::string& text, const std::vector<std::string>& hints) {
  for (const auto& h : hints)
    if (text.find(h) != std::string::npos) return true;
  return false;
}

inline std::vector<std::string> draw_negatives(const std::string& text, std::size_t count,
                                               const HintPolicy& policy, Rng& rng) {
  std::vector<std::string> out;
  if (policy.negative_pool.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, policy.negative_pool.size() - 1);
  for (std::size_t tries = 0; out.size() < count && tries < 50 * (count + 1); ++tries) {
    const std::string& cand = policy.negative_pool[pick(rng)];
    if (text.find(cand) != std::string::npos) continue;
    if (std::find(out.begin(), out.end(), cand) != out.end()) continue;
    out.push_back(cand);
  }
  return out;
}

}  // namespace detail

inline SampleType draw_sample_type(const std::array<double, 3>& w, Rng& rng) {
  const double s = w[0] + w[1] + w[2];
  if (std::abs(s - 1.0) > 1e-9) throw ContractError("sample type weights must sum to 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  if (r < w[0]) return SampleType::kOriginal;
  if (r < w[0] + w[1]) return SampleType::kNegativeOnly;
  return SampleType::kMixed;
}

// Draws the hint text side of a sample (type, spelling changes, hints)
// without rendering audio.
inline TrainingSample draw_hints(const std::string& text, const HintPolicy& policy, Rng& rng) {
  TrainingSample s;
  s.text = text;
  s.spoken = text;
  s.sample_type = draw_sample_type(policy.type_weights, rng);
  const auto words = split_words(text);
  std::uniform_int_distribution<std::size_t> neg_count(policy.min_negatives,
                                                       std::max(policy.min_negatives,
                                                                policy.max_negatives));
  if (s.sample_type == SampleType::kNegativeOnly) {
    s.hints = detail::draw_negatives(text, std::max<std::size_t>(1, neg_count(rng)), policy, rng);
    if (s.hints.empty()) s.sample_type = SampleType::kOriginal;
  } else if (s.sample_type == SampleType::kMixed) {
    std::uniform_int_distribution<std::size_t> pos_count(policy.min_positives,
                                                         policy.max_positives);
    const std::size_t wanted = pos_count(rng);
    if (words.size() < wanted || wanted == 0) {
      s.sample_type = SampleType::kOriginal;
    } else {
      std::vector<std::size_t> idx(words.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<std::string> target = words;
      std::vector<std::string> positives;
      for (std::size_t i = 0; i < wanted; ++i) {
        auto aug = augment_hint_word(words[idx[i]], policy, rng);
        if (!aug) continue;
        target[idx[i]] = *aug;
        if (std::find(positives.begin(), positives.end(), *aug) == positives.end())
          positives.push_back(*aug);
      }
      const std::string target_text = join_words(target);
      auto negatives = detail::draw_negatives(
          target_text, std::max<std::size_t>(1, neg_count(rng)), policy, rng);
      // A negative may not occur in the reference, even inside another word.
      if (positives.empty() || negatives.empty()) {
        s.sample_type = SampleType::kOriginal;
      } else {
        s.text = target_text;
        s.hints = positives;
        s.hints.insert(s.hints.end(), negatives.begin(), negatives.end());
        std::shuffle(s.hints.begin(), s.hints.end(), rng);
      }
    }
  }
  if (s.sample_type == SampleType::kOriginal) {
    s.text = text;
    s.hints.clear();
  }
  return s;
}

// Full sample: hints plus rendered features for the spoken words.
inline TrainingSample make_training_sample(const std::string& text, const HintPolicy& policy,
                                           Rng& rng, const Vocab& vocab,
                                           const SynthConfig& synth) {
  TrainingSample s = draw_hints(text, policy, rng);
  s.seed = rng();
  s.target_tokens = vocab.tokenize(s.text);
  s.features = synth_features(vocab.tokenize(s.spoken), synth, s.seed, std::nullopt, vocab.size());
  return s;
}

// One manifest line. Features are regenerated from (spoken, seed).
struct ManifestEntry {
  std::string utterance_id;
  std::string text;
  std::string spoken;
  std::uint64_t seed = 0;
  std::vector<std::string> hints;
  std::string sample_type = "original";
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ManifestEntry, utterance_id, text, spoken,
                                                seed, hints, sample_type)

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest '" + path + "'");
  for (const auto& e : entries) os << nlohmann::json(e).dump() << '\n';
  if (!os) throw std::runtime_error("failed writing manifest '" + path + "'");
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest '" + path + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestEntry e = j.get<ManifestEntry>();
      if (e.spoken.empty()) e.spoken = e.text;
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

// Plain text, one entry per line; blank lines are ignored.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& l : lines) os << l << '\n';
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

struct Utterance {
  Tensor features;
  std::vector<std::size_t> target;
  std::vector<std::vector<std::size_t>> hints;
};

inline std::vector<std::vector<std::size_t>> tokenize_hints(const std::vector<std::string>& hints,
                                                            const Vocab& vocab) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& h : hints) {
    auto t = vocab.tokenize(h);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

inline Utterance materialize(const ManifestEntry& e, const SynthConfig& synth,
                             const Vocab& vocab) {
  return {synth_features(vocab.tokenize(e.spoken), synth, e.seed, std::nullopt, vocab.size()),
          vocab.tokenize(e.text), tokenize_hints(e.hints, vocab)};
}

}  // namespace scct
