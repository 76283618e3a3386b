#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "oracles.hpp"
#include "selftrain/selftrain.hpp"

namespace st = selftrain;

namespace {

st::ConstTree one(const std::string& text) { return st::parse_bracketed(text).front(); }

const std::string kDog = "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))";

st::GrammarRule nt(std::string lhs, std::vector<std::string> rhs) { return {std::move(lhs), std::move(rhs), false}; }
st::GrammarRule lex(std::string lhs, std::string word) { return {std::move(lhs), {std::move(word)}, true}; }

std::vector<st::ConstTree> synthetic() {
  return st::parse_bracketed(st::read_text_file(std::string(SELFTRAIN_TEST_DATA) + "/synthetic_200.mrg"));
}

std::size_t count_nodes(const st::TreeNode& n) {
  std::size_t c = 1;
  for (const auto& k : n.children) c += count_nodes(k);
  return c;
}

}  // namespace

TEST(ExtractRules, DogTreeInPreOrder) {
  const auto rules = st::extract_rules(one(kDog));
  const std::vector<st::GrammarRule> want = {nt("S", {"NP", "VP"}), nt("NP", {"DT", "NN"}), lex("DT", "the"),
                                             lex("NN", "dog"),        nt("VP", {"VBZ"}),       lex("VBZ", "barks")};
  EXPECT_EQ(rules, want);
  std::vector<std::string> shown;
  for (const auto& r : rules) shown.push_back(st::to_prompt_string(r));
  EXPECT_EQ(shown.front(), "S→NP VP");
  EXPECT_EQ(shown[2], "DT→the");
}

TEST(ExtractRules, SinglePreterminal) {
  EXPECT_EQ(st::extract_rules(one("(NN dog)")), std::vector<st::GrammarRule>{lex("NN", "dog")});
}

TEST(ExtractRules, CountMatchesNodeCountAndIsStable) {
  for (const auto& t : synthetic()) {
    const auto a = st::extract_rules(t);
    EXPECT_EQ(a.size(), count_nodes(t.root()));
    EXPECT_EQ(a, st::extract_rules(t));
  }
}

TEST(GrammarRule, TextRoundTrip) {
  for (const auto& r : {nt("S", {"NP", "VP", "."}), lex("DT", "the"), lex("``", "\"quoted\\"), nt("X|<B,C>", {"B", "C"})}) {
    EXPECT_EQ(st::parse_rule(st::to_string(r)), r) << st::to_string(r);
  }
  EXPECT_EQ(st::to_string(lex("DT", "the")), "DT -> \"the\"");
}

TEST(RuleDistribution, TwoCopiesDoubleEveryCount) {
  const auto t = one(kDog);
  const auto d = st::build_rule_distribution(std::vector<st::ConstTree>{t, t});
  EXPECT_EQ(d.total(), 12u);
  EXPECT_EQ(d.support_size(), 6u);
  for (const auto& [r, n] : d.counts()) EXPECT_EQ(n, 2u) << st::to_string(r);
}

TEST(RuleDistribution, EmptyTreebankThrows) {
  EXPECT_THROW(st::build_rule_distribution(std::vector<st::ConstTree>{}), st::EmptyDistributionError);
}

TEST(RuleDistribution, OrderInvariantAndMatchesRecount) {
  auto trees = synthetic();
  const auto d = st::build_rule_distribution(trees);

  // recount by walking nodes directly, keyed on the printed rule
  std::map<std::string, std::uint64_t> recount;
  std::uint64_t nodes = 0;
  auto walk = [&](auto&& self, const st::TreeNode& n) -> void {
    ++nodes;
    std::string key = n.label + " ->";
    if (n.is_preterminal()) {
      key += " " + st::quote_terminal(n.word);
    } else {
      for (const auto& c : n.children) key += " " + c.label;
    }
    ++recount[key];
    for (const auto& c : n.children) self(self, c);
  };
  for (const auto& t : trees) walk(walk, t.root());
  EXPECT_EQ(d.total(), nodes);
  std::map<std::string, std::uint64_t> got;
  for (const auto& [r, n] : d.counts()) got[st::to_string(r)] = n;
  EXPECT_EQ(got, recount);

  std::mt19937_64 gen(3);
  std::shuffle(trees.begin(), trees.end(), gen);
  EXPECT_EQ(st::build_rule_distribution(trees), d);
  st::RuleDistribution merged;
  for (auto it = trees.rbegin(); it != trees.rend(); ++it) merged.merge(st::rule_distribution_of(*it));
  EXPECT_EQ(merged, d);
}

TEST(TokenDistribution, SentencesAreWhitespaceTokenized) {
  const auto d = st::build_token_distribution(std::vector<std::string>{"the dog", "the cat"});
  EXPECT_EQ(d.total(), 4u);
  EXPECT_EQ(d.count("the"), 2u);
  EXPECT_EQ(d.count("dog"), 1u);
  EXPECT_EQ(d.count("cat"), 1u);
  EXPECT_EQ(d.count("The"), 0u);
  EXPECT_THROW(st::build_token_distribution(std::vector<std::string>{}), st::EmptyDistributionError);
  EXPECT_THROW(st::build_token_distribution(std::vector<std::string>{"  "}), st::EmptyDistributionError);
}

TEST(TokenDistribution, TreebankEqualsYieldsAndIsAdditive) {
  const auto tb = st::Treebank::from_trees(synthetic());
  std::vector<std::vector<std::string>> yields;
  for (const auto& t : tb.trees) yields.push_back(t.tokens());
  const auto whole = st::build_token_distribution(tb);
  EXPECT_EQ(whole, st::build_token_distribution(yields));

  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cut = 1 + gen() % (yields.size() - 1);
    std::vector<std::vector<std::string>> a(yields.begin(), yields.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::vector<std::string>> b(yields.begin() + static_cast<std::ptrdiff_t>(cut), yields.end());
    auto sum = st::build_token_distribution(a);
    sum.merge(st::build_token_distribution(b));
    EXPECT_EQ(sum, whole);
  }
}

TEST(AvgSentenceLength, Examples) {
  auto tb = st::Treebank::from_trees({one("(S (A a) (B b) (C c))"), one("(S (A a) (B b) (C c) (D d) (E e))")});
  EXPECT_DOUBLE_EQ(st::avg_sentence_length(tb), 4.0);
  EXPECT_DOUBLE_EQ(st::avg_sentence_length(st::Treebank::from_trees({one("(S (A a) (A a) (A a) (A a) (A a) (A a) (A a))")})),
                   7.0);
  EXPECT_THROW(st::avg_sentence_length(st::Treebank{}), st::EmptyDistributionError);

  const auto syn = st::Treebank::from_trees(synthetic());
  double sum = 0;
  for (const auto& t : syn.trees) sum += static_cast<double>(st::split_whitespace(st::sentence_text(t.tokens())).size());
  EXPECT_NEAR(st::avg_sentence_length(syn), sum / 200.0, 1e-12);
}

TEST(DistributionJson, RoundTrip) {
  const auto d = st::build_rule_distribution(synthetic());
  EXPECT_EQ(st::rule_distribution_from_json(st::to_json(d)), d);
}

TEST(EstimatePcfg, SingleRuleMle) {
  const auto t = one("(S (A a) (B b))");
  const auto g = st::estimate_pcfg(std::vector<st::ConstTree>{t, t, t});
  EXPECT_DOUBLE_EQ(*g.rule_log_prob("S", {"A", "B"}), 0.0);
  EXPECT_DOUBLE_EQ(*g.lexical_log_prob("A", "a"), 0.0);
  EXPECT_DOUBLE_EQ(*g.lexical_log_prob("B", "b"), 0.0);
  EXPECT_EQ(g.rules().size(), 3u);
}

TEST(EstimatePcfg, RelativeFrequency) {
  const auto g = st::estimate_pcfg({one("(S (A a) (B b))"), one("(S (A a) (B b))"), one("(S (B b) (A a))")});
  EXPECT_NEAR(std::exp(*g.rule_log_prob("S", {"A", "B"})), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(std::exp(*g.rule_log_prob("S", {"B", "A"})), 1.0 / 3.0, 1e-12);
  EXPECT_FALSE(g.rule_log_prob("S", {"A", "A"}).has_value());
}

TEST(EstimatePcfg, NormalizedOnSyntheticTreebank) {
  const auto g = st::estimate_pcfg(synthetic());
  EXPECT_LE(g.max_normalization_error(), 1e-9);

  // per-lhs sums by hand from the rule table
  std::map<std::string, double> sums;
  for (const auto& r : g.rules()) sums[r.rule.lhs] += r.prob;
  for (const auto& [lhs, s] : sums) EXPECT_NEAR(s, 1.0, 1e-9) << lhs;

  // unknown model: P(signature | pos) sums to at most 1 per level and pos
  std::map<std::pair<int, std::string>, double> unk;
  for (const auto& u : g.unknown_model()) unk[{u.level, u.pos}] += u.prob;
  for (const auto& [k, s] : unk) EXPECT_LE(s, 1.0 + 1e-12);
}

TEST(EstimatePcfg, NoMassOnUnobservedRules) {
  const auto trees = synthetic();
  const auto g = st::estimate_pcfg(trees);
  std::map<st::GrammarRule, std::uint64_t> counts;
  std::map<std::string, std::uint64_t> lhs;
  for (const auto& t : trees)
    for (const auto& r : st::binarized_rules(t)) ++counts[r], ++lhs[r.lhs];
  const auto specs = g.rules();
  ASSERT_EQ(specs.size(), counts.size());
  for (const auto& s : specs) {
    ASSERT_TRUE(counts.count(s.rule)) << st::to_string(s.rule);
    EXPECT_NEAR(s.prob, static_cast<double>(counts[s.rule]) / static_cast<double>(lhs[s.rule.lhs]), 1e-15);
  }
}

TEST(EstimatePcfg, RetrainMatchesRecountAndIsOrderFree) {
  const auto trees = synthetic();
  std::vector<st::ConstTree> a(trees.begin(), trees.begin() + 150), b(trees.begin() + 150, trees.end());
  std::vector<st::ConstTree> ab = a, ba = b;
  ab.insert(ab.end(), b.begin(), b.end());
  ba.insert(ba.end(), a.begin(), a.end());
  const auto g1 = st::estimate_pcfg(ab), g2 = st::estimate_pcfg(ba);
  EXPECT_EQ(g1.to_json(), g2.to_json());

  // adding trees changes P(S -> ...) exactly as recounting predicts
  const auto ga = st::estimate_pcfg(a);
  std::map<st::GrammarRule, double> c;
  double tot = 0;
  for (const auto& t : ab)
    for (const auto& r : st::binarized_rules(t))
      if (r.lhs == "ROOT") c[r] += 1, tot += 1;
  for (const auto& [r, n] : c) EXPECT_NEAR(std::exp(*g1.rule_log_prob(r.lhs, r.rhs)), n / tot, 1e-12);
  EXPECT_NE(ga.to_json(), g1.to_json());
}

TEST(EstimatePcfg, MismatchedRootsAreConfigError) {
  EXPECT_THROW(st::estimate_pcfg({one("(S (A a))"), one("(T (A a))")}), st::ConfigError);
  EXPECT_THROW(st::estimate_pcfg(std::vector<st::ConstTree>{}), st::EmptyDistributionError);
  st::PcfgOptions opts;
  opts.start_symbol = "S";
  EXPECT_THROW(st::estimate_pcfg({one("(T (A a))")}, opts), st::ConfigError);
}

TEST(EstimatePcfg, JsonRoundTripThroughFile) {
  const auto g = st::estimate_pcfg(synthetic(), {.rare_threshold = 2, .start_symbol = ""});
  const auto path = (std::filesystem::temp_directory_path() / "selftrain_model_test.json").string();
  st::save_pcfg(path, g);
  const auto back = st::load_pcfg(path);
  EXPECT_EQ(back.to_json(), g.to_json());
  std::filesystem::remove(path);
  EXPECT_THROW(st::Pcfg::from_json(nlohmann::json{{"format_version", 99}}), st::ValidationError);
}

TEST(WordSignature, Levels) {
  EXPECT_EQ(st::word_signature("phone", 0), "UNK-LC-sne");
  EXPECT_EQ(st::word_signature("phone", 1), "UNK-LC");
  EXPECT_EQ(st::word_signature("phone", 2), "UNK");
  EXPECT_EQ(st::word_signature("IBM", 0), "UNK-CAPS");
  EXPECT_EQ(st::word_signature("Paris", 1), "UNK-INITC");
  EXPECT_EQ(st::word_signature("1990s", 1), "UNK-LC-NUM");
  EXPECT_EQ(st::word_signature("well-known", 1), "UNK-LC-DASH");
}

TEST(WeightedGrammar, ParsesBlendsAndSamplesValidTrees) {
  const auto src = st::WeightedGrammar::load(std::string(SELFTRAIN_TEST_DATA) + "/source.grammar");
  const auto tgt = st::WeightedGrammar::load(std::string(SELFTRAIN_TEST_DATA) + "/target_specific.grammar");
  const auto mix = src.blend(tgt, 0.6);
  st::SeededRng a(9), b(9);
  for (int i = 0; i < 50; ++i) {
    const auto t = mix.sample_tree(a);
    EXPECT_EQ(st::check_tree(t), "");
    EXPECT_EQ(t, mix.sample_tree(b));
  }
  EXPECT_THROW(st::WeightedGrammar::parse("start\n"), st::ValidationError);
}
