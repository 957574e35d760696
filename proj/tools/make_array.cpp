// Writes a multi-arm logarithmic spiral array geometry file.
#include <iostream>

#include "CLI11.hpp"

#include "aaim/errors.hpp"
#include "aaim/geometry.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a spiral microphone array file", "aaim-make-array"};
  std::size_t arms = 8, per_arm = 8;
  double inner = 0.1, outer = 0.75, twist = 1.5;
  std::string out;
  app.add_option("--arms", arms, "Number of spiral arms");
  app.add_option("--per-arm", per_arm, "Microphones per arm");
  app.add_option("--inner", inner, "Innermost radius [m]");
  app.add_option("--outer", outer, "Outermost radius [m]");
  app.add_option("--twist", twist, "Angular twist factor");
  app.add_option("--out", out, "Output file")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    aaim::spiral_array(arms, per_arm, inner, outer, twist).save(out);
  } catch (const aaim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
