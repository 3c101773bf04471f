#pragma once

// Speech-hint spelling augmentation: character duplication and sound-alike
// rewrites (k<->c, j<->g, ...).

#include <algorithm>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scct/errors.hpp"

namespace scct {

using Rng = std::mt19937_64;

// Duplicates one or more characters ("cat" -> "catt", "triple" -> "tripple").
// The input is always a subsequence of the output.
inline std::string duplicate_char_augment(std::string_view word, Rng& rng) {
  if (word.empty()) throw ContractError("duplicate_char_augment: empty word");
  const std::size_t max_dups = std::min<std::size_t>(2, word.size());
  std::bernoulli_distribution second(0.25);
  const std::size_t count = (max_dups > 1 && second(rng)) ? 2 : 1;
  std::vector<std::size_t> pos(word.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  std::shuffle(pos.begin(), pos.end(), rng);
  pos.resize(count);
  std::sort(pos.begin(), pos.end());
  std::string out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    out.push_back(word[i]);
    if (next < pos.size() && pos[next] == i) {
      out.push_back(word[i]);
      ++next;
    }
  }
  return out;
}

struct SoundalikeRule {
  std::string from;
  std::string to;
};

inline std::vector<SoundalikeRule> default_soundalike_table() {
  return {{"k", "c"}, {"c", "k"}, {"j", "g"}, {"g", "j"},
          {"s", "c"}, {"c", "s"}, {"ay", "ey"}, {"ey", "ay"},
          {"ea", "ia"}, {"ia", "ea"}};
}

struct SoundalikeResult {
  std::string word;
  bool changed = false;  // false when no rule applied anywhere
};

// Applies between one and (number of matching positions) non-overlapping
// rewrites chosen at random.
inline SoundalikeResult soundalike_augment(std::string_view word,
                                           const std::vector<SoundalikeRule>& table,
                                           Rng& rng) {
  struct Match {
    std::size_t pos;
    const SoundalikeRule* rule;
  };
  std::vector<Match> matches;
  std::vector<std::size_t> positions;
  for (const auto& r : table) {
    if (r.from.empty()) continue;
    for (std::size_t p = word.find(r.from); p != std::string_view::npos;
         p = word.find(r.from, p + 1)) {
      matches.push_back({p, &r});
      positions.push_back(p);
    }
  }
  if (matches.empty()) return {std::string(word), false};
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  std::uniform_int_distribution<std::size_t> count_dist(1, positions.size());
  const std::size_t wanted = count_dist(rng);

  std::shuffle(matches.begin(), matches.end(), rng);
  std::vector<Match> chosen;
  std::vector<bool> used(word.size(), false);
  for (const auto& m : matches) {
    if (chosen.size() == wanted) break;
    bool free = true;
    for (std::size_t i = 0; i < m.rule->from.size(); ++i) free = free && !used[m.pos + i];
    if (!free) continue;
    for (std::size_t i = 0; i < m.rule->from.size(); ++i) used[m.pos + i] = true;
    chosen.push_back(m);
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const Match& a, const Match& b) { return a.pos > b.pos; });
  std::string out(word);
  for (const auto& m : chosen) out.replace(m.pos, m.rule->from.size(), m.rule->to);
  return {out, out != word};
}

}  // namespace scct
