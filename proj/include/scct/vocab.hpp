#pragma once

#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "scct/errors.hpp"

namespace scct {

// Character vocabulary: id 0 is blank, then space, apostrophe and a-z.
class Vocab {
 public:
  static constexpr std::size_t kBlank = 0;

  Vocab() : symbols_(" 'abcdefghijklmnopqrstuvwxyz") {
    ids_.fill(0);
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      ids_[static_cast<unsigned char>(symbols_[i])] = i + 1;
    }
  }

  std::size_t size() const { return symbols_.size() + 1; }

  std::vector<std::size_t> tokenize(std::string_view text) const {
    std::vector<std::size_t> out;
    out.reserve(text.size());
    std::string bad;
    for (char ch : text) {
      const auto c = static_cast<unsigned char>(
          std::tolower(static_cast<unsigned char>(ch)));
      const std::size_t id = ids_[c];
      if (id == 0) {
        if (bad.find(static_cast<char>(c)) == std::string::npos) bad.push_back(static_cast<char>(c));
        continue;
      }
      out.push_back(id);
    }
    if (!bad.empty()) {
      throw FormatError("out-of-vocabulary characters: '" + bad + "'");
    }
    return out;
  }

  std::string detokenize(const std::vector<std::size_t>& ids) const {
    std::string out;
    out.reserve(ids.size());
    for (std::size_t id : ids) out.push_back(symbol(id));
    return out;
  }

  char symbol(std::size_t id) const {
    if (id == kBlank || id > symbols_.size()) {
      throw IndexError("token id " + std::to_string(id) + " has no symbol");
    }
    return symbols_[id - 1];
  }

  const std::string& symbols() const { return symbols_; }

 private:
  std::string symbols_;
  std::array<std::size_t, 256> ids_{};
};

}  // namespace scct
