#pragma once

// Bracketed constituency trees and the constituent vocabulary used for
// special graph nodes.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "treexplain/error.hpp"

namespace treexplain {

using TreeNodeId = std::size_t;
using ClassId = int;

struct TreeNode {
  TreeNodeId id = 0;
  std::string label;  // phrase tag for internal nodes, word token for leaves
  std::vector<TreeNodeId> children;
  bool is_leaf = false;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Nodes are stored in pre-order; the root is always node 0.
struct ConstituencyTree {
  TreeNodeId root = 0;
  std::vector<TreeNode> nodes;
  std::string sentence_id;
  std::optional<ClassId> gold_label;
  std::optional<ClassId> teacher_label;

  const TreeNode& node(TreeNodeId id) const { return nodes.at(id); }

  std::vector<std::string> leaves() const {
    std::vector<std::string> out;
    for (const auto& n : nodes)
      if (n.is_leaf) out.push_back(n.label);
    return out;
  }

  friend bool operator==(const ConstituencyTree&, const ConstituencyTree&) = default;
};

// ---------------------------------------------------------------------------
// Constituent vocabulary

struct SpecialNodeKind {
  int id = 0;
  std::string_view name;

  friend bool operator==(const SpecialNodeKind&, const SpecialNodeKind&) = default;
};

// Id 22 does not exist in the vocabulary.
inline constexpr std::array<SpecialNodeKind, 23> kSpecialNodeKinds{{
    {1, "SENTENCE"},
    {2, "NOUN PHRASE"},
    {3, "VERB PHRASE"},
    {4, "PREPOSITIONAL PHRASE"},
    {5, "ADJECTIVE PHRASE"},
    {6, "ADVERB PHRASE"},
    {7, "SUBORDINATE CLAUSE"},
    {8, "PARTICLE"},
    {9, "INTERJECTION"},
    {10, "CONJUNCTION PHRASE"},
    {11, "LIST MARKER"},
    {12, "UNLIKE COORDINATED PHRASE"},
    {13, "PARENTHETICAL"},
    {14, "FRAGMENT"},
    {15, "INVERTED SENTENCE"},
    {16, "SUBORDINATE CLAUSE QUESTION"},
    {17, "QUESTION"},
    {18, "WH-ADJECTIVE PHRASE"},
    {19, "WH-ADVERB PHRASE"},
    {20, "REDUCED RELATIVE CLAUSE"},
    {21, "NOUN PHRASE (NO HEAD)"},
    {23, "QUANTIFIER PHRASE"},
    {24, "NOT A CONSTITUENT"},
}};

inline constexpr int kNotAConstituentId = 24;

inline std::optional<SpecialNodeKind> special_kind_by_id(int id) {
  for (const auto& k : kSpecialNodeKinds)
    if (k.id == id) return k;
  return std::nullopt;
}

inline SpecialNodeKind not_a_constituent() { return *special_kind_by_id(kNotAConstituentId); }

enum class UnknownLabelPolicy { MapToNotAConstituent, Reject };

// Phrase tag -> constituent id. Function tags and co-indices ("NP-SBJ-1",
// "NP=2") are stripped before lookup.
class LabelMap {
 public:
  LabelMap() = default;

  static LabelMap builtin() {
    LabelMap m;
    const std::pair<const char*, int> table[] = {
        {"S", 1},      {"NP", 2},     {"VP", 3},     {"PP", 4},      {"ADJP", 5},   {"ADVP", 6},
        {"SBAR", 7},   {"PRT", 8},    {"INTJ", 9},   {"CONJP", 10},  {"LST", 11},   {"UCP", 12},
        {"PRN", 13},   {"FRAG", 14},  {"SINV", 15},  {"SBARQ", 16},  {"SQ", 17},    {"WHADJP", 18},
        {"WHADVP", 19}, {"RRC", 20},  {"NX", 21},    {"QP", 23},     {"X", 24},
    };
    for (const auto& [tag, id] : table) m.aliases_.emplace(tag, id);
    return m;
  }

  // Tab- or space-separated "TAG ID" lines; '#' starts a comment.
  static LabelMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open label map " + path);
    LabelMap m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream fields(line);
      std::string tag;
      int id = 0;
      if (!(fields >> tag)) continue;
      if (!(fields >> id) || !special_kind_by_id(id))
        throw Error(ErrorCode::MalformedRecord,
                    path + ":" + std::to_string(lineno) + ": expected TAG and a valid constituent id");
      m.aliases_[tag] = id;
    }
    return m;
  }

  void add(std::string tag, int id) {
    if (!special_kind_by_id(id))
      throw Error(ErrorCode::UnknownLabel, "no constituent with id " + std::to_string(id));
    aliases_[std::move(tag)] = id;
  }

  static std::string normalize(std::string_view raw) {
    std::string tag(raw);
    if (tag.size() > 1 && tag.front() == '-' && tag.back() == '-') return tag;  // -NONE-
    const auto cut = tag.find_first_of("-=", 1);
    if (cut != std::string::npos) tag.erase(cut);
    return tag;
  }

  bool contains(std::string_view raw) const { return aliases_.count(normalize(raw)) > 0; }

  std::optional<SpecialNodeKind> find(std::string_view raw) const {
    auto it = aliases_.find(normalize(raw));
    if (it == aliases_.end()) return std::nullopt;
    return special_kind_by_id(it->second);
  }

  const std::map<std::string, int>& aliases() const { return aliases_; }

 private:
  std::map<std::string, int> aliases_;
};

inline const LabelMap& default_label_map() {
  static const LabelMap m = LabelMap::builtin();
  return m;
}

inline SpecialNodeKind map_label(std::string_view raw, UnknownLabelPolicy policy,
                                 const LabelMap& labels = default_label_map()) {
  if (auto kind = labels.find(raw)) return *kind;
  if (policy == UnknownLabelPolicy::Reject)
    throw Error(ErrorCode::UnknownLabel, "phrase tag '" + std::string(raw) + "'");
  return not_a_constituent();
}

// ---------------------------------------------------------------------------
// Bracketed parsing

namespace detail {

struct BracketToken {
  enum Kind { Open, Close, Atom } kind;
  std::string text;
};

inline std::vector<BracketToken> tokenize_brackets(std::string_view text) {
  std::vector<BracketToken> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(') {
      tokens.push_back({BracketToken::Open, {}});
      ++i;
    } else if (c == ')') {
      tokens.push_back({BracketToken::Close, {}});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '(' && text[j] != ')' &&
             !std::isspace(static_cast<unsigned char>(text[j])))
        ++j;
      tokens.push_back({BracketToken::Atom, std::string(text.substr(i, j - i))});
      i = j;
    }
  }
  return tokens;
}

class BracketParser {
 public:
  explicit BracketParser(std::vector<BracketToken> tokens) : tokens_(std::move(tokens)) {}

  ConstituencyTree run() {
    if (tokens_.empty()) throw Error(ErrorCode::EmptyTree, "no tokens");
    if (tokens_.front().kind != BracketToken::Open)
      throw Error(ErrorCode::LeafWithChildren, "tree must start with '('");
    ConstituencyTree tree;
    parse_node(tree);
    if (pos_ != tokens_.size())
      throw Error(ErrorCode::UnbalancedBrackets, "trailing input after the closing bracket");
    tree.root = 0;
    return tree;
  }

 private:
  TreeNodeId parse_node(ConstituencyTree& tree) {
    // at '('
    ++pos_;
    const TreeNodeId id = tree.nodes.size();
    tree.nodes.push_back(TreeNode{id, {}, {}, false});
    if (at_end()) throw Error(ErrorCode::UnbalancedBrackets, "missing ')'");

    if (tokens_[pos_].kind == BracketToken::Atom) {
      tree.nodes[id].label = tokens_[pos_].text;
      ++pos_;
    } else if (tokens_[pos_].kind == BracketToken::Close) {
      throw Error(ErrorCode::EmptyTree, "empty constituent '()'");
    }
    // an unlabeled wrapper "( (S ...))" keeps an empty label

    bool saw_word = false;
    bool saw_subtree = false;
    while (true) {
      if (at_end()) throw Error(ErrorCode::UnbalancedBrackets, "missing ')'");
      const auto& tok = tokens_[pos_];
      if (tok.kind == BracketToken::Close) {
        ++pos_;
        break;
      }
      if (tok.kind == BracketToken::Open) {
        if (saw_word)
          throw Error(ErrorCode::LeafWithChildren,
                      "word under '" + tree.nodes[id].label + "' is followed by a subtree");
        saw_subtree = true;
        const TreeNodeId child = parse_node(tree);
        tree.nodes[id].children.push_back(child);
      } else {
        if (saw_subtree || saw_word)
          throw Error(ErrorCode::LeafWithChildren,
                      "word '" + tok.text + "' mixed with other children of '" + tree.nodes[id].label + "'");
        saw_word = true;
        const TreeNodeId leaf = tree.nodes.size();
        tree.nodes.push_back(TreeNode{leaf, tok.text, {}, true});
        tree.nodes[id].children.push_back(leaf);
        ++pos_;
      }
    }
    if (tree.nodes[id].children.empty())
      throw Error(ErrorCode::EmptyTree, "constituent '" + tree.nodes[id].label + "' has no children");
    return id;
  }

  bool at_end() const { return pos_ >= tokens_.size(); }

  std::vector<BracketToken> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ConstituencyTree parse_bracketed(std::string_view text) {
  auto tokens = detail::tokenize_brackets(text);
  long depth = 0;
  for (const auto& t : tokens) {
    if (t.kind == detail::BracketToken::Open) ++depth;
    if (t.kind == detail::BracketToken::Close && --depth < 0)
      throw Error(ErrorCode::UnbalancedBrackets, "unexpected ')'");
  }
  if (depth != 0) throw Error(ErrorCode::UnbalancedBrackets, "missing ')'");
  return detail::BracketParser(std::move(tokens)).run();
}

inline void print_bracketed(const ConstituencyTree& tree, TreeNodeId id, std::string& out) {
  const auto& n = tree.node(id);
  if (n.is_leaf) {
    out += n.label;
    return;
  }
  out += '(';
  out += n.label;
  for (auto c : n.children) {
    out += ' ';
    print_bracketed(tree, c, out);
  }
  out += ')';
}

inline std::string print_bracketed(const ConstituencyTree& tree) {
  std::string out;
  if (!tree.nodes.empty()) print_bracketed(tree, tree.root, out);
  return out;
}

// ---------------------------------------------------------------------------
// Tree files: one bracketed tree per line, or NDJSON {"id","tree","gold_label"?}.

inline ConstituencyTree tree_from_json(const nlohmann::json& rec) {
  if (!rec.is_object() || !rec.contains("tree") || !rec["tree"].is_string())
    throw Error(ErrorCode::MalformedRecord, "tree record needs a string field 'tree'");
  auto tree = parse_bracketed(rec["tree"].get<std::string>());
  if (rec.contains("id")) {
    const auto& id = rec["id"];
    tree.sentence_id = id.is_string() ? id.get<std::string>() : id.dump();
  }
  if (rec.contains("gold_label") && !rec["gold_label"].is_null()) tree.gold_label = rec["gold_label"].get<int>();
  if (rec.contains("teacher_label") && !rec["teacher_label"].is_null())
    tree.teacher_label = rec["teacher_label"].get<int>();
  return tree;
}

inline std::vector<ConstituencyTree> read_trees(std::istream& in) {
  std::vector<ConstituencyTree> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    try {
      if (line[first] == '{') {
        auto tree = tree_from_json(nlohmann::json::parse(line));
        if (tree.sentence_id.empty()) tree.sentence_id = std::to_string(trees.size());
        trees.push_back(std::move(tree));
      } else {
        auto tree = parse_bracketed(line);
        tree.sentence_id = std::to_string(trees.size());
        trees.push_back(std::move(tree));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trees;
}

inline std::vector<ConstituencyTree> read_trees_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_trees(in);
}

}  // namespace treexplain
