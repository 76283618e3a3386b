// Samples synthetic treebanks or raw sentence files from weighted grammars.
//
//   make_synthetic --grammar source.grammar --count 200 --seed 1 --out synthetic.mrg
//   make_synthetic --grammar source.grammar --blend target_specific.grammar --weight 0.6
//       --count 500 --sentences --out target_raw.txt

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "selftrain/selftrain.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sample trees or sentences from a weighted grammar"};
  std::string grammar, blend, out;
  double weight = 0.6;
  std::size_t count = 100;
  std::uint64_t seed = 1;
  bool sentences = false;
  app.add_option("--grammar", grammar, "weighted grammar")->required();
  app.add_option("--blend", blend, "second grammar mixed in per left-hand side");
  app.add_option("--weight", weight, "share of --grammar in the blend");
  app.add_option("--count", count, "number of samples");
  app.add_option("--seed", seed, "RNG seed");
  app.add_flag("--sentences", sentences, "write raw sentences instead of trees");
  app.add_option("--out", out, "output file")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    auto g = selftrain::WeightedGrammar::load(grammar);
    if (!blend.empty()) g = g.blend(selftrain::WeightedGrammar::load(blend), weight);
    selftrain::SeededRng rng(seed);
    std::string text;
    for (std::size_t i = 0; i < count; ++i) {
      auto t = g.sample_tree(rng);
      text += sentences ? selftrain::sentence_text(t.tokens()) : selftrain::write_bracketed(t);
      text += '\n';
    }
    selftrain::write_text_file(out, text);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
