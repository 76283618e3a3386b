#pragma once

// Constituency trees, Penn-style bracketed I/O and treebanks with provenance.

#include <cctype>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "selftrain/error.hpp"

namespace selftrain {

inline constexpr std::string_view kRootLabel = "ROOT";

// A node of a constituency tree. Pre-terminals have no children and carry the
// token in `word`; every other node has at least one child and an empty `word`.
struct TreeNode {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<TreeNode> children;
  std::string word;

  bool is_preterminal() const { return children.empty(); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Builders. Spans are filled in by ConstTree.
inline TreeNode make_leaf(std::string label, std::string word) {
  TreeNode n;
  n.label = std::move(label);
  n.word = std::move(word);
  return n;
}

inline TreeNode make_node(std::string label, std::vector<TreeNode> children) {
  TreeNode n;
  n.label = std::move(label);
  n.children = std::move(children);
  return n;
}

// Immutable constituency tree. Construction recomputes spans from the shape,
// collects the yield and validates the node invariants.
class ConstTree {
 public:
  ConstTree() = default;

  explicit ConstTree(TreeNode root) : root_(std::move(root)) {
    std::size_t cursor = 0;
    assign_spans(root_, cursor);
  }

  const TreeNode& root() const { return root_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  friend bool operator==(const ConstTree& a, const ConstTree& b) { return a.root_ == b.root_; }

 private:
  void assign_spans(TreeNode& node, std::size_t& cursor) {
    if (node.label.empty()) throw ValidationError("node with empty label");
    node.start = cursor;
    if (node.is_preterminal()) {
      if (node.word.empty()) throw ValidationError("pre-terminal '" + node.label + "' has no token");
      tokens_.push_back(node.word);
      ++cursor;
    } else {
      if (!node.word.empty())
        throw ValidationError("node '" + node.label + "' mixes a terminal with non-terminal children");
      for (auto& child : node.children) assign_spans(child, cursor);
    }
    node.end = cursor;
  }

  TreeNode root_;
  std::vector<std::string> tokens_;
};

// Depth-first pre-order visit of every node.
template <typename Fn>
void visit_preorder(const TreeNode& node, Fn&& fn) {
  fn(node);
  for (const auto& child : node.children) visit_preorder(child, fn);
}

inline std::size_t count_internal_nodes(const ConstTree& tree) {
  std::size_t n = 0;
  visit_preorder(tree.root(), [&](const TreeNode&) { ++n; });
  return n;
}

// Re-checks every ConstTree invariant on an already built tree, including
// span partitioning. Returns an empty string when the tree is valid.
inline std::string check_tree(const ConstTree& tree) {
  std::vector<std::string> leaves;
  std::string problem;
  auto walk = [&](auto&& self, const TreeNode& n) -> void {
    if (!problem.empty()) return;
    if (n.label.empty()) problem = "empty label";
    if (n.end <= n.start) problem = "empty span on '" + n.label + "'";
    if (n.is_preterminal()) {
      if (n.end != n.start + 1) problem = "pre-terminal span length != 1 on '" + n.label + "'";
      if (n.word.empty()) problem = "pre-terminal without token";
      leaves.push_back(n.word);
      return;
    }
    std::size_t cursor = n.start;
    for (const auto& c : n.children) {
      if (c.start != cursor) problem = "children of '" + n.label + "' do not partition its span";
      cursor = c.end;
      self(self, c);
    }
    if (cursor != n.end) problem = "children of '" + n.label + "' do not cover its span";
  };
  walk(walk, tree.root());
  if (problem.empty() && leaves != tree.tokens()) problem = "yield does not match tokens";
  return problem;
}

// Strips evalb-style function tags and indices: NP-SBJ-1 -> NP, NP=2 -> NP.
// Labels that start with '-' (-NONE-, -LRB-) are kept whole.
inline std::string strip_function_tags(std::string_view label) {
  if (label.empty() || label.front() == '-') return std::string(label);
  auto cut = label.find_first_of("-=");
  if (cut == std::string_view::npos || cut == 0) return std::string(label);
  return std::string(label.substr(0, cut));
}

// Binarization decorates labels with '+' (collapsed unaries) and "|<" (intermediate nodes).
inline bool has_reserved_marker(std::string_view label) {
  return label.find('+') != std::string_view::npos || label.find("|<") != std::string_view::npos;
}

inline std::string escape_token(std::string_view token) {
  if (token == "(") return "-LRB-";
  if (token == ")") return "-RRB-";
  return std::string(token);
}

inline std::string unescape_token(std::string_view token) {
  if (token == "-LRB-") return "(";
  if (token == "-RRB-") return ")";
  return std::string(token);
}

struct BracketedOptions {
  bool strip_function_tags = true;
  // Source data must not use the binarization markers so that debinarize is lossless.
  bool allow_reserved_labels = false;
};

namespace detail {

class BracketReader {
 public:
  BracketReader(std::string_view text, const BracketedOptions& opts) : text_(text), opts_(opts) {}

  std::vector<ConstTree> read_all() {
    std::vector<ConstTree> trees;
    for (;;) {
      skip_space_and_comments();
      if (pos_ >= text_.size()) break;
      if (text_[pos_] != '(') fail("expected '(' at start of tree");
      const std::size_t open_line = line_, open_col = col_;
      TreeNode top = read_node(true, open_line, open_col);
      trees.push_back(build(std::move(top), open_line, open_col));
    }
    return trees;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(what, line_, col_); }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }

  // '#' starts a comment line only between trees.
  void skip_space_and_comments() {
    for (;;) {
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '#' && col_ == 1) {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        continue;
      }
      break;
    }
  }

  std::string read_atom() {
    std::size_t begin = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c))) break;
      advance();
    }
    return std::string(text_.substr(begin, pos_ - begin));
  }

  TreeNode read_node(bool top_level, std::size_t open_line, std::size_t open_col) {
    advance();  // '('
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError("unbalanced parentheses at end of input", line_, col_);
    TreeNode node;
    if (text_[pos_] != '(' && text_[pos_] != ')') node.label = read_atom();
    std::vector<std::string> words;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw SyntaxError("unbalanced parentheses at end of input", line_, col_);
      char c = text_[pos_];
      if (c == ')') {
        advance();
        break;
      }
      if (c == '(') {
        node.children.push_back(read_node(false, line_, col_));
      } else {
        words.push_back(read_atom());
      }
    }
    const std::string where =
        " (constituent opened at line " + std::to_string(open_line) + ", column " + std::to_string(open_col) + ")";
    if (node.children.empty() && words.empty()) throw ValidationError("empty constituent" + where);
    if (!node.children.empty() && !words.empty())
      throw ValidationError("node '" + node.label + "' has both terminal and non-terminal children" + where);
    if (words.size() > 1)
      throw ValidationError("pre-terminal '" + node.label + "' has " + std::to_string(words.size()) +
                            " terminal children" + where);
    if (!words.empty()) node.word = unescape_token(words.front());

    if (top_level && (node.label.empty() || node.label == "TOP" || node.label == kRootLabel)) {
      node.label = std::string(kRootLabel);
    } else if (node.label.empty()) {
      throw ValidationError("unlabeled constituent" + where);
    } else {
      if (opts_.strip_function_tags) node.label = strip_function_tags(node.label);
      if (!opts_.allow_reserved_labels && has_reserved_marker(node.label))
        throw ValidationError("label '" + node.label + "' uses a reserved binarization marker" + where);
    }
    return node;
  }

  ConstTree build(TreeNode top, std::size_t line, std::size_t col) {
    try {
      return ConstTree(std::move(top));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " (tree at line " + std::to_string(line) + ", column " +
                            std::to_string(col) + ")");
    }
  }

  std::string_view text_;
  BracketedOptions opts_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

inline void write_node(const TreeNode& node, std::string& out) {
  out += '(';
  out += node.label;
  if (node.is_preterminal()) {
    out += ' ';
    out += escape_token(node.word);
  } else {
    for (const auto& child : node.children) {
      out += ' ';
      write_node(child, out);
    }
  }
  out += ')';
}

}  // namespace detail

inline std::vector<ConstTree> parse_bracketed(std::string_view text, const BracketedOptions& opts = {}) {
  return detail::BracketReader(text, opts).read_all();
}

inline std::string write_bracketed(const ConstTree& tree) {
  std::string out;
  detail::write_node(tree.root(), out);
  return out;
}

// One tree per line, each line newline-terminated.
inline std::string write_bracketed(const std::vector<ConstTree>& trees) {
  std::string out;
  for (const auto& t : trees) {
    detail::write_node(t.root(), out);
    out += '\n';
  }
  return out;
}

// Yield joined by single spaces.
inline std::string sentence_text(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > begin) out.emplace_back(text.substr(begin, i - begin));
  }
  return out;
}

inline const std::string kSourceProvenance = "source";

inline std::string pseudo_provenance(int iteration) { return "pseudo-iteration-" + std::to_string(iteration); }

// Ordered trees plus one provenance tag per tree ("source" or "pseudo-iteration-k").
struct Treebank {
  std::vector<ConstTree> trees;
  std::vector<std::string> provenance;

  void add(ConstTree tree, std::string tag = kSourceProvenance) {
    trees.push_back(std::move(tree));
    provenance.push_back(std::move(tag));
  }

  void append(const Treebank& other) {
    trees.insert(trees.end(), other.trees.begin(), other.trees.end());
    provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
  }

  std::size_t size() const { return trees.size(); }
  bool empty() const { return trees.empty(); }

  static Treebank from_trees(std::vector<ConstTree> trees, const std::string& tag = kSourceProvenance) {
    Treebank tb;
    tb.provenance.assign(trees.size(), tag);
    tb.trees = std::move(trees);
    return tb;
  }

  friend bool operator==(const Treebank&, const Treebank&) = default;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

// JSON-lines {index, provenance}, one record per tree.
inline std::string write_provenance_jsonl(const Treebank& tb) {
  std::string out;
  for (std::size_t i = 0; i < tb.size(); ++i) {
    nlohmann::json rec = {{"index", i}, {"provenance", tb.provenance[i]}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline void apply_provenance_jsonl(Treebank& tb, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("provenance line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.contains("index") || !rec.contains("provenance"))
      throw ValidationError("provenance line " + std::to_string(lineno) + ": missing index/provenance");
    auto idx = rec["index"].get<std::size_t>();
    if (idx >= tb.size())
      throw ValidationError("provenance line " + std::to_string(lineno) + ": index " + std::to_string(idx) +
                            " out of range");
    tb.provenance[idx] = rec["provenance"].get<std::string>();
  }
}

inline std::string provenance_sidecar_path(const std::string& treebank_path) {
  return treebank_path + ".provenance.jsonl";
}

// Loads a treebank file; "<path>.provenance.jsonl" is applied when present.
inline Treebank load_treebank(const std::string& path, const BracketedOptions& opts = {}) {
  Treebank tb = Treebank::from_trees(parse_bracketed(read_text_file(path), opts));
  std::ifstream sidecar(provenance_sidecar_path(path));
  if (sidecar) {
    std::ostringstream ss;
    ss << sidecar.rdbuf();
    apply_provenance_jsonl(tb, ss.str());
  }
  return tb;
}

inline void save_treebank(const std::string& path, const Treebank& tb) {
  write_text_file(path, write_bracketed(tb.trees));
  write_text_file(provenance_sidecar_path(path), write_provenance_jsonl(tb));
}

// One whitespace-tokenized sentence per non-blank, non-comment line.
inline std::vector<std::vector<std::string>> load_sentences(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_whitespace(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace selftrain
