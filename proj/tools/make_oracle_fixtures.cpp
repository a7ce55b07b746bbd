// Writes the tabular proposition instances for the documented seeds.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nalab/diagnostics.hpp"
#include "nalab/oracle.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "fixtures/oracle";
  std::filesystem::create_directories(dir);
  for (auto seed : nalab::oracle_instance_seeds()) {
    const auto path = dir / ("instance_" + std::to_string(seed) + ".txt");
    std::ofstream out(path);
    nalab::write_tabular(out, nalab::random_tabular_mdp(seed));
    std::cout << path.string() << '\n';
  }
  return 0;
}
