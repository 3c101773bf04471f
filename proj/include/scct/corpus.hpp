#pragma once

#include <set>
#include <string>
#include <vector>

#include "scct/dataset.hpp"

namespace scct {

inline const std::vector<std::string>& common_lexicon() {
  static const std::vector<std::string> words = {
      "the",    "cat",    "sat",    "on",     "mat",    "dog",    "ran",    "to",
      "park",   "a",      "big",    "red",    "car",    "is",     "good",   "day",
      "we",     "can",    "go",     "see",    "you",    "say",    "hay",    "way",
      "they",   "keep",   "call",   "cake",   "look",   "like",   "take",   "make",
      "come",   "kind",   "king",   "ring",   "sing",   "song",   "long",   "game",
      "gold",   "green",  "grass",  "get",    "give",   "girl",   "jump",   "just",
      "jar",    "joke",   "job",    "join",   "age",    "page",   "large",  "stage",
      "ice",    "nice",   "rice",   "face",   "place",  "space",  "city",   "cent",
      "sun",    "sea",    "ship",   "shop",   "stop",   "step",   "star",   "sky",
      "play",   "stay",   "may",    "pay",    "gray",   "grey",   "key",    "money",
      "book",   "back",   "black",  "clock",  "cold",   "cup",    "cut",    "coat",
      "milk",   "walk",   "talk",   "desk",   "kid",    "kite",   "school", "class",
      "little", "letter", "better", "happy",  "apple",  "summer", "winter", "dinner",
      "pass",   "miss",   "less",   "boss",   "tall",   "well",   "bell",   "hill",
      "in",     "at",     "it",     "of",     "and",    "he",     "she",    "my",
      "old",    "new",    "hot",    "fun",    "run",    "sit",    "box",    "fox",
      "time",   "home",   "house",  "water",  "fish",   "bird",   "tree",   "road",
  };
  return words;
}

// Pronounceable letter strings built from consonant-vowel syllables, none
// of which is a lexicon word.
inline std::vector<std::string> pseudo_words(std::size_t count, const std::set<std::string>& avoid,
                                             Rng& rng) {
  static const std::vector<std::string> onsets = {"b", "c", "d", "g", "j", "k", "l", "m",
                                                  "n", "p", "r", "s", "t", "v", "z", "ch"};
  static const std::vector<std::string> vowels = {"a", "e", "i", "o", "u", "ay", "ey"};
  static const std::vector<std::string> codas = {"", "", "n", "k", "s", "l", "r", "g"};
  std::uniform_int_distribution<std::size_t> on(0, onsets.size() - 1), vw(0, vowels.size() - 1),
      cd(0, codas.size() - 1), syl(2, 3);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w;
    const std::size_t n = syl(rng);
    for (std::size_t i = 0; i < n; ++i) w += onsets[on(rng)] + vowels[vw(rng)];
    w += codas[cd(rng)];
    if (avoid.count(w) || seen.count(w)) continue;
    seen.insert(w);
    out.push_back(w);
  }
  return out;
}

struct DatasetConfig {
  std::uint64_t seed = 1;
  std::size_t num_train = 2000;
  std::size_t num_test = 300;
  std::size_t num_rare = 20;
  std::size_t min_words = 2;
  std::size_t max_words = 4;
  std::size_t negative_pool_size = 400;
  std::array<double, 3> type_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::size_t max_positives = 3;
  std::size_t min_negatives = 1;
  std::size_t max_negatives = 6;
  // Share of sentence words drawn from a pool of made-up words instead of the
  // lexicon, so spelling unseen words is part of training.
  double pseudo_word_rate = 0.25;
  std::size_t pseudo_vocab_size = 300;
  SynthConfig synth;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetConfig, seed, num_train, num_test,
                                                num_rare, min_words, max_words,
                                                negative_pool_size, type_weights,
                                                max_positives, min_negatives, max_negatives,
                                                pseudo_word_rate, pseudo_vocab_size, synth)

// Rare evaluation words: the written form is a re-spelling of an unseen
// spoken pseudo-word, and each occurs in exactly one test utterance.
struct RareWord {
  std::string written;
  std::string spoken;
};

struct Dataset {
  DatasetConfig config;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::vector<RareWord> rare;
  std::vector<std::string> negative_pool;

  std::vector<std::string> rare_hints() const {
    std::vector<std::string> out;
    for (const auto& r : rare) out.push_back(r.written);
    return out;
  }
};

inline std::string random_sentence(const std::vector<std::string>& lex, std::size_t min_words,
                                   std::size_t max_words, Rng& rng,
                                   const std::vector<std::string>& pseudo = {},
                                   double pseudo_rate = 0.0) {
  std::uniform_int_distribution<std::size_t> n(min_words, max_words), w(0, lex.size() - 1);
  std::uniform_int_distribution<std::size_t> pw(0, pseudo.empty() ? 0 : pseudo.size() - 1);
  std::bernoulli_distribution coin(pseudo.empty() ? 0.0 : pseudo_rate);
  std::vector<std::string> words;
  const std::size_t count = n(rng);
  for (std::size_t i = 0; i < count; ++i) words.push_back(coin(rng) ? pseudo[pw(rng)] : lex[w(rng)]);
  return join_words(words);
}

inline HintPolicy make_hint_policy(const DatasetConfig& cfg,
                                   const std::vector<std::string>& negative_pool) {
  HintPolicy policy;
  policy.type_weights = cfg.type_weights;
  policy.max_positives = cfg.max_positives;
  policy.min_negatives = cfg.min_negatives;
  policy.max_negatives = cfg.max_negatives;
  policy.negative_pool = negative_pool;
  const auto& lex = common_lexicon();
  policy.lexicon = std::set<std::string>(lex.begin(), lex.end());
  return policy;
}

inline Dataset generate_dataset(const DatasetConfig& cfg) {
  if (cfg.min_words == 0 || cfg.min_words > cfg.max_words) {
    throw ContractError("dataset: bad words-per-utterance range");
  }
  Dataset ds;
  ds.config = cfg;
  Rng rng(cfg.seed);
  const auto& lex = common_lexicon();
  std::set<std::string> avoid(lex.begin(), lex.end());

  // Rare evaluation words first, so the negative pool can exclude them.
  HintPolicy policy = make_hint_policy(cfg, {});
  const auto spoken_rare = pseudo_words(cfg.num_rare * 3, avoid, rng);
  std::set<std::string> used = avoid;
  for (const auto& sp : spoken_rare) {
    if (ds.rare.size() == cfg.num_rare) break;
    auto written = augment_hint_word(sp, policy, rng);
    if (!written || used.count(*written) || used.count(sp)) continue;
    used.insert(*written);
    used.insert(sp);
    ds.rare.push_back({*written, sp});
  }
  if (ds.rare.size() < cfg.num_rare) throw ContractError("dataset: could not draw rare words");

  std::vector<std::string> pseudo;
  if (cfg.pseudo_word_rate > 0.0) {
    if (cfg.pseudo_word_rate > 1.0) throw ContractError("dataset: pseudo_word_rate above 1");
    pseudo = pseudo_words(cfg.pseudo_vocab_size, used, rng);
    used.insert(pseudo.begin(), pseudo.end());
  }

  // Negative pool: re-spelled lexicon words and fresh pseudo-words.
  std::set<std::string> pool_seen;
  std::uniform_int_distribution<std::size_t> lw(0, lex.size() - 1);
  while (ds.negative_pool.size() < cfg.negative_pool_size / 2) {
    auto w = augment_hint_word(lex[lw(rng)], policy, rng);
    if (!w || used.count(*w) || pool_seen.count(*w)) continue;
    pool_seen.insert(*w);
    ds.negative_pool.push_back(*w);
  }
  for (const auto& w : pseudo_words(cfg.negative_pool_size, used, rng)) {
    if (ds.negative_pool.size() == cfg.negative_pool_size) break;
    if (pool_seen.insert(w).second) ds.negative_pool.push_back(w);
  }
  policy.negative_pool = ds.negative_pool;

  const Vocab vocab;
  for (std::size_t i = 0; i < cfg.num_train; ++i) {
    const std::string text =
        random_sentence(lex, cfg.min_words, cfg.max_words, rng, pseudo, cfg.pseudo_word_rate);
    TrainingSample s = draw_hints(text, policy, rng);
    ManifestEntry e;
    e.utterance_id = "train-" + std::to_string(i);
    e.text = s.text;
    e.spoken = s.spoken;
    e.seed = rng();
    e.hints = s.hints;
    e.sample_type = to_string(s.sample_type);
    ds.train.push_back(std::move(e));
  }

  // Test: the first num_rare utterances each carry one rare word.
  std::uniform_int_distribution<std::size_t> slot(0, 1 << 20);
  for (std::size_t i = 0; i < cfg.num_test; ++i) {
    std::vector<std::string> words =
        split_words(random_sentence(lex, cfg.min_words, cfg.max_words, rng, pseudo,
                                    cfg.pseudo_word_rate));
    std::vector<std::string> spoken = words;
    if (i < ds.rare.size()) {
      const std::size_t at = slot(rng) % (words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), ds.rare[i].written);
      spoken.insert(spoken.begin() + static_cast<std::ptrdiff_t>(at), ds.rare[i].spoken);
    }
    ManifestEntry e;
    e.utterance_id = "test-" + std::to_string(i);
    e.text = join_words(words);
    e.spoken = join_words(spoken);
    e.seed = rng();
    e.sample_type = "original";
    ds.test.push_back(std::move(e));
  }
  return ds;
}

}  // namespace scct
