#pragma once

// Token-level contextual shallow fusion over a prefix tree of hints.

#include <iostream>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "scct/errors.hpp"

namespace scct {

class HintTrie {
 public:
  struct Node {
    std::map<std::size_t, std::size_t> children;  // token -> node index
    bool is_hint_end = false;
    std::size_t depth = 0;
  };

  static constexpr std::size_t kRoot = 0;

  HintTrie() : nodes_(1) {}

  HintTrie(const std::vector<std::vector<std::size_t>>& hints, double boost)
      : nodes_(1), boost_(boost) {
    if (!(boost >= 0.0)) throw ContractError("fusion boost must be >= 0");
    for (const auto& h : hints) {
      if (h.empty()) {
        std::cerr << "warning: skipping empty hint in fusion trie\n";
        continue;
      }
      insert(h);
    }
  }

  void insert(const std::vector<std::size_t>& tokens) {
    std::size_t cur = kRoot;
    for (std::size_t tok : tokens) {
      auto it = nodes_[cur].children.find(tok);
      if (it == nodes_[cur].children.end()) {
        const std::size_t depth = nodes_[cur].depth + 1;
        nodes_.push_back({});
        nodes_.back().depth = depth;
        nodes_[cur].children.emplace(tok, nodes_.size() - 1);
        cur = nodes_.size() - 1;
      } else {
        cur = it->second;
      }
    }
    nodes_[cur].is_hint_end = true;
  }

  std::optional<std::size_t> child(std::size_t node, std::size_t token) const {
    const auto& ch = nodes_.at(node).children;
    auto it = ch.find(token);
    if (it == ch.end()) return std::nullopt;
    return it->second;
  }

  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t size() const { return nodes_.size(); }
  double boost() const { return boost_; }

 private:
  std::vector<Node> nodes_;
  double boost_ = 0.0;
};

inline HintTrie build_hint_trie(const std::vector<std::vector<std::size_t>>& hints,
                                double boost) {
  return HintTrie(hints, boost);
}

// Position inside the trie and the boost granted along the current partial
// match (depth * boost while away from the root).
struct FusionState {
  std::size_t node = HintTrie::kRoot;
  double accumulated_boost = 0.0;

  bool operator==(const FusionState&) const = default;
};

struct FusionStep {
  double delta = 0.0;
  FusionState state;
};

// Score adjustment for emitting `token`. Extending the partial match earns
// +boost; a dead end refunds everything granted so far and retries `token`
// from the root; completing a hint keeps its boost and returns to the root.
inline FusionStep fusion_step(const FusionState& state, std::size_t token,
                              const HintTrie& trie) {
  if (token == 0) throw ContractError("fusion_step called with blank");
  FusionStep out;
  std::size_t node = state.node;
  double acc = state.accumulated_boost;
  auto next = trie.child(node, token);
  if (!next && node != HintTrie::kRoot) {
    out.delta -= acc;
    node = HintTrie::kRoot;
    acc = 0.0;
    next = trie.child(node, token);
  }
  if (next) {
    out.delta += trie.boost();
    acc += trie.boost();
    node = *next;
    if (trie.node(node).is_hint_end) {
      node = HintTrie::kRoot;
      acc = 0.0;
    }
  }
  out.state = {node, acc};
  return out;
}

}  // namespace scct
