#pragma once

// Seeded random constituency trees with a planted class signal: class 1
// sentences contain an adverb phrase directly under a verb phrase, class 0
// sentences never do (their adverb phrases, if any, hang from the clause).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "treexplain/rng.hpp"

namespace treexplain {

struct SyntheticSentence {
  std::string id;
  std::string tree;
  int teacher_label = 0;
  int gold_label = 0;
};

struct SyntheticOptions {
  std::size_t count = 500;
  std::uint64_t seed = 7;
  double gold_noise = 0.1;  // fraction of gold labels that disagree with the teacher
};

namespace detail {

class SentenceGrammar {
 public:
  explicit SentenceGrammar(Rng& rng) : rng_(rng) {}

  std::string sentence(bool planted) {
    std::string s = "(S " + noun_phrase(0);
    if (rng_.uniform() < 0.4 || (!planted && rng_.uniform() < 0.3)) s += " " + adverb_phrase();
    s += " " + verb_phrase(planted);
    if (rng_.uniform() < 0.2) s += " (. .)";
    return s + ")";
  }

 private:
  const std::string& pick(const std::vector<std::string>& words) { return words[rng_.below(words.size())]; }

  std::string noun_phrase(int depth) {
    static const std::vector<std::string> det{"the", "a", "this", "every", "some"};
    static const std::vector<std::string> adj{"quick", "old", "bright", "quiet", "strange", "huge", "small"};
    static const std::vector<std::string> noun{"cat",  "market", "engine", "team",   "court", "planet",
                                               "song", "player", "server", "vaccine", "river", "computer"};
    std::string np = "(NP (DT " + pick(det) + ")";
    if (rng_.uniform() < 0.4) np += " (ADJP (JJ " + pick(adj) + "))";
    np += " (NN " + pick(noun) + ")";
    if (depth < 1 && rng_.uniform() < 0.3) np += " " + prepositional_phrase(depth + 1);
    return np + ")";
  }

  std::string prepositional_phrase(int depth) {
    static const std::vector<std::string> prep{"in", "on", "near", "under", "with"};
    return "(PP (IN " + pick(prep) + ") " + noun_phrase(depth) + ")";
  }

  std::string adverb_phrase() {
    static const std::vector<std::string> adv{"quickly", "rarely", "suddenly", "often", "barely", "gladly"};
    return "(ADVP (RB " + pick(adv) + "))";
  }

  std::string verb_phrase(bool planted) {
    static const std::vector<std::string> verb{"sees", "builds", "wins", "loses", "plays", "finds", "moves"};
    std::string vp = "(VP (VBZ " + pick(verb) + ")";
    if (rng_.uniform() < 0.7) vp += " " + noun_phrase(0);
    if (planted) vp += " " + adverb_phrase();
    if (rng_.uniform() < 0.3) vp += " " + prepositional_phrase(1);
    return vp + ")";
  }

  Rng& rng_;
};

}  // namespace detail

inline std::vector<SyntheticSentence> generate_corpus(const SyntheticOptions& opt) {
  Rng rng(mix_seed(opt.seed, 0x73796e7468ULL));
  detail::SentenceGrammar grammar(rng);
  std::vector<SyntheticSentence> out;
  for (std::size_t i = 0; i < opt.count; ++i) {
    SyntheticSentence s;
    s.id = "syn-" + std::to_string(i);
    s.teacher_label = static_cast<int>(rng.below(2));
    s.tree = grammar.sentence(s.teacher_label == 1);
    s.gold_label = rng.uniform() < opt.gold_noise ? 1 - s.teacher_label : s.teacher_label;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string corpus_trees_ndjson(const std::vector<SyntheticSentence>& corpus) {
  std::string out;
  for (const auto& s : corpus) out += nlohmann::json{{"id", s.id}, {"tree", s.tree}, {"gold_label", s.gold_label}}.dump() + '\n';
  return out;
}

inline std::string corpus_labels_ndjson(const std::vector<SyntheticSentence>& corpus) {
  std::string out;
  for (const auto& s : corpus) out += nlohmann::json{{"graph_id", s.id}, {"teacher_label", s.teacher_label}}.dump() + '\n';
  return out;
}

}  // namespace treexplain
