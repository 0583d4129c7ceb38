#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "eyemark/fixture.hpp"

// Regenerates the bundled synthetic fixture: drawn faces with exact
// landmark ground truth, one .pts and .box sidecar per image.
int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic annotated-face directory"};
  std::string out_dir;
  int count = 10;
  int image_size = 128;
  uint64_t seed = 2024;
  app.add_option("out_dir", out_dir, "destination directory")->required();
  app.add_option("--count", count, "number of faces (default 10)");
  app.add_option("--size", image_size, "frame edge in pixels (default 128)");
  app.add_option("--seed", seed, "generator seed (default 2024)");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto stems = eyemark::generate_fixture(out_dir, count, image_size, seed);
    std::cout << stems.size() << " samples under " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "make_fixture: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
