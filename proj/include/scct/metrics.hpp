#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scct/dataset.hpp"
#include "scct/errors.hpp"

namespace scct {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_words += o.reference_words;
    return *this;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ErrorCounts, substitutions, deletions,
                                                insertions, reference_words)

// Percent WER of aggregated counts. With no reference words the result is 0
// for an empty hypothesis and 100 per inserted word otherwise.
inline double wer_percent(const ErrorCounts& c) {
  if (c.reference_words == 0) return 100.0 * static_cast<double>(c.insertions);
  return 100.0 * static_cast<double>(c.errors()) / static_cast<double>(c.reference_words);
}

inline ErrorCounts align_words(const std::vector<std::string>& hyp,
                               const std::vector<std::string>& ref) {
  struct Cell {
    std::size_t cost = 0, s = 0, d = 0, i = 0;
  };
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, 0, j};
  for (std::size_t r = 1; r <= n; ++r) {
    cur[0] = {r, 0, r, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      Cell best = prev[j - 1];
      if (ref[r - 1] != hyp[j - 1]) {
        ++best.cost;
        ++best.s;
      }
      Cell del = prev[j];
      ++del.cost;
      ++del.d;
      Cell ins = cur[j - 1];
      ++ins.cost;
      ++ins.i;
      if (del.cost < best.cost) best = del;
      if (ins.cost < best.cost) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return {prev[m].s, prev[m].d, prev[m].i, n};
}

struct WerResult {
  double wer = 0.0;
  ErrorCounts counts;
};

inline WerResult word_error_rate(std::string_view hyp, std::string_view ref) {
  const ErrorCounts c = align_words(split_words(hyp), split_words(ref));
  return {wer_percent(c), c};
}

// Relative WER reduction against a baseline; positive is an improvement.
inline std::optional<double> werr(double wer_with, double wer_baseline) {
  if (!(wer_baseline > 0.0)) return std::nullopt;
  return (wer_baseline - wer_with) / wer_baseline * 100.0;
}

inline std::size_t count_word(const std::vector<std::string>& words, const std::string& w) {
  return static_cast<std::size_t>(std::count(words.begin(), words.end(), w));
}

struct OovCounts {
  std::size_t present = 0;
  std::size_t correct = 0;
};

// Each occurrence of a hint word in the reference counts as present; it is
// correct while the hypothesis still has an unclaimed occurrence of it.
inline OovCounts oov_counts(const std::string& hyp, const std::string& ref,
                            const std::vector<std::string>& hints) {
  const auto hw = split_words(hyp), rw = split_words(ref);
  std::vector<std::string> uniq(hints.begin(), hints.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  OovCounts c;
  for (const auto& h : uniq) {
    const std::size_t in_ref = count_word(rw, h);
    c.present += in_ref;
    c.correct += std::min(in_ref, count_word(hw, h));
  }
  return c;
}

inline std::optional<double> oov_accuracy(const std::vector<std::string>& hyps,
                                          const std::vector<std::string>& refs,
                                          const std::vector<std::vector<std::string>>& hints) {
  if (hyps.size() != refs.size() || hints.size() != refs.size()) {
    throw ContractError("oov_accuracy: hyps, refs and hints must align");
  }
  OovCounts total;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const OovCounts c = oov_counts(hyps[i], refs[i], hints[i]);
    total.present += c.present;
    total.correct += c.correct;
  }
  if (total.present == 0) return std::nullopt;
  return 100.0 * static_cast<double>(total.correct) / static_cast<double>(total.present);
}

struct EvalReport {
  double wer = 0.0;
  std::optional<double> werr;
  std::optional<double> oov_accuracy;
  ErrorCounts counts;
  std::size_t hints_present = 0;
  std::size_t hints_correct = 0;
  std::size_t utterances = 0;
  std::string baseline;
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"wer", r.wer},
                     {"werr", r.werr ? nlohmann::json(*r.werr) : nlohmann::json(nullptr)},
                     {"oov_accuracy",
                      r.oov_accuracy ? nlohmann::json(*r.oov_accuracy) : nlohmann::json(nullptr)},
                     {"counts", r.counts},
                     {"hints_present", r.hints_present},
                     {"hints_correct", r.hints_correct},
                     {"utterances", r.utterances},
                     {"baseline", r.baseline}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.wer = j.at("wer").get<double>();
  r.werr = j.contains("werr") && !j["werr"].is_null()
               ? std::optional<double>(j["werr"].get<double>())
               : std::nullopt;
  r.oov_accuracy = j.contains("oov_accuracy") && !j["oov_accuracy"].is_null()
                       ? std::optional<double>(j["oov_accuracy"].get<double>())
                       : std::nullopt;
  r.counts = j.value("counts", ErrorCounts{});
  r.hints_present = j.value("hints_present", std::size_t{0});
  r.hints_correct = j.value("hints_correct", std::size_t{0});
  r.utterances = j.value("utterances", std::size_t{0});
  r.baseline = j.value("baseline", std::string());
}

// `hints[i]` lists the hint words supplied for utterance i.
inline EvalReport evaluate(const std::vector<std::string>& hyps,
                           const std::vector<std::string>& refs,
                           const std::vector<std::vector<std::string>>& hints,
                           const EvalReport* baseline = nullptr,
                           const std::string& baseline_name = "") {
  if (hyps.size() != refs.size()) {
    throw ContractError("evaluate: " + std::to_string(hyps.size()) + " hypotheses for " +
                        std::to_string(refs.size()) + " references");
  }
  EvalReport r;
  r.utterances = refs.size();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    r.counts += align_words(split_words(hyps[i]), split_words(refs[i]));
    if (i < hints.size()) {
      const OovCounts c = oov_counts(hyps[i], refs[i], hints[i]);
      r.hints_present += c.present;
      r.hints_correct += c.correct;
    }
  }
  r.wer = wer_percent(r.counts);
  if (r.hints_present > 0) {
    r.oov_accuracy =
        100.0 * static_cast<double>(r.hints_correct) / static_cast<double>(r.hints_present);
  }
  if (baseline) {
    r.werr = werr(r.wer, baseline->wer);
    r.baseline = baseline_name;
  }
  return r;
}

inline std::string format_report_table(const EvalReport& r) {
  auto pct = [](std::optional<double> v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  std::string out;
  auto row = [&](const std::string& k, const std::string& v) {
    out += k;
    out += std::string(k.size() < 16 ? 16 - k.size() : 1, ' ');
    out += v + "\n";
  };
  row("utterances", std::to_string(r.utterances));
  row("ref words", std::to_string(r.counts.reference_words));
  row("subs", std::to_string(r.counts.substitutions));
  row("dels", std::to_string(r.counts.deletions));
  row("ins", std::to_string(r.counts.insertions));
  row("WER %", pct(r.wer));
  row("WERR %", pct(r.werr) + (r.baseline.empty() ? "" : " vs " + r.baseline));
  row("hints present", std::to_string(r.hints_present));
  row("hints correct", std::to_string(r.hints_correct));
  row("OOV acc %", pct(r.oov_accuracy));
  return out;
}

}  // namespace scct
