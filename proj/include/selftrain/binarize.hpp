#pragma once

// Lossless right binarization with full horizontal context, and its inverse.
//
//   (X (A a) (B b) (C c))   ->  (X (A a) (X|<B,C> (B b) (C c)))
//   (S (VP (VB go)))        ->  (S+VP (VB go))
//
// Unary chains of non-terminals are collapsed into '+'-joined labels. A unary
// over a pre-terminal survives as a single node, so the only unary rules in a
// binarized grammar rewrite to a pre-terminal.

#include <string>
#include <string_view>
#include <vector>

#include "selftrain/error.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

inline constexpr char kUnaryJoiner = '+';
inline constexpr std::string_view kIntermediateOpen = "|<";

inline bool is_intermediate_label(std::string_view label) {
  return label.size() > 3 && label.back() == '>' && label.find(kIntermediateOpen) != std::string_view::npos;
}

inline bool is_composite_label(std::string_view label) {
  return !is_intermediate_label(label) && label.find(kUnaryJoiner) != std::string_view::npos;
}

// First component of a composite label ("ROOT+S" -> "ROOT").
inline std::string_view base_label(std::string_view label) {
  auto cut = label.find(kUnaryJoiner);
  return cut == std::string_view::npos ? label : label.substr(0, cut);
}

namespace detail {

inline TreeNode make_intermediate(const std::string& parent, std::vector<TreeNode> kids) {
  std::string label = parent;
  label += kIntermediateOpen;
  for (std::size_t i = 0; i < kids.size(); ++i) {
    if (i) label += ',';
    label += kids[i].label;
  }
  label += '>';
  if (kids.size() == 2) return make_node(std::move(label), std::move(kids));
  std::vector<TreeNode> rest(std::make_move_iterator(kids.begin() + 1), std::make_move_iterator(kids.end()));
  std::vector<TreeNode> pair;
  pair.push_back(std::move(kids.front()));
  pair.push_back(make_intermediate(parent, std::move(rest)));
  return make_node(std::move(label), std::move(pair));
}

inline TreeNode binarize_node(const TreeNode& node) {
  if (node.is_preterminal()) return make_leaf(node.label, node.word);
  std::string label = node.label;
  const TreeNode* cur = &node;
  while (cur->children.size() == 1 && !cur->children.front().is_preterminal()) {
    cur = &cur->children.front();
    label += kUnaryJoiner;
    label += cur->label;
  }
  std::vector<TreeNode> kids;
  kids.reserve(cur->children.size());
  for (const auto& c : cur->children) kids.push_back(binarize_node(c));
  if (kids.size() <= 2) return make_node(std::move(label), std::move(kids));
  std::vector<TreeNode> rest(std::make_move_iterator(kids.begin() + 1), std::make_move_iterator(kids.end()));
  std::vector<TreeNode> pair;
  pair.push_back(std::move(kids.front()));
  pair.push_back(make_intermediate(label, std::move(rest)));
  return make_node(std::move(label), std::move(pair));
}

TreeNode debinarize_node(const TreeNode& node);

inline void splice_children(const TreeNode& node, std::vector<TreeNode>& out) {
  for (const auto& c : node.children) {
    if (!c.is_preterminal() && is_intermediate_label(c.label)) {
      splice_children(c, out);
    } else {
      out.push_back(debinarize_node(c));
    }
  }
}

inline TreeNode debinarize_node(const TreeNode& node) {
  if (node.is_preterminal()) return make_leaf(node.label, node.word);
  std::vector<TreeNode> kids;
  splice_children(node, kids);
  if (!is_composite_label(node.label)) return make_node(node.label, std::move(kids));

  std::vector<std::string> parts;
  std::string_view rest = node.label;
  for (;;) {
    auto cut = rest.find(kUnaryJoiner);
    parts.emplace_back(rest.substr(0, cut));
    if (cut == std::string_view::npos) break;
    rest.remove_prefix(cut + 1);
  }
  for (const auto& p : parts)
    if (p.empty()) throw StructureError("malformed composite label '" + node.label + "'");
  TreeNode inner = make_node(parts.back(), std::move(kids));
  for (auto it = parts.rbegin() + 1; it != parts.rend(); ++it) {
    std::vector<TreeNode> one;
    one.push_back(std::move(inner));
    inner = make_node(*it, std::move(one));
  }
  return inner;
}

}  // namespace detail

inline ConstTree binarize(const ConstTree& tree) { return ConstTree(detail::binarize_node(tree.root())); }

inline ConstTree debinarize(const ConstTree& tree) {
  if (!tree.root().is_preterminal() && is_intermediate_label(tree.root().label))
    throw StructureError("intermediate node '" + tree.root().label + "' at the root");
  return ConstTree(detail::debinarize_node(tree.root()));
}

}  // namespace selftrain
