// Writes a small synthetic corpus (annotations, logits, config) for trying the
// pipeline end to end.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic annotated corpus", "make_fixture"};
  std::string dir;
  surgrep::fixture::CorpusOptions opts;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--videos", opts.videos, "Number of videos")->check(CLI::PositiveNumber);
  app.add_option("--min-frames", opts.min_frames, "Shortest video")->check(CLI::PositiveNumber);
  app.add_option("--max-frames", opts.max_frames, "Longest video")->check(CLI::PositiveNumber);
  app.add_option("--seed", opts.seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  if (opts.max_frames < opts.min_frames) {
    std::cerr << "error: --max-frames must be at least --min-frames\n";
    return 1;
  }
  try {
    surgrep::fixture::write_corpus_dir(dir, opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote corpus to " << dir << '\n';
  return 0;
}
