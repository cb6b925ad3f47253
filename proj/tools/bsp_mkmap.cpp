// Writes a generated fixture map in the text grid format.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bsp/gridmap.hpp"
#include "bsp/maps.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a fixture map"};
  std::string kind = "boundary", out;
  app.add_option("kind", kind, "boundary | corridor")->check(CLI::IsMember({"boundary", "corridor"}));
  app.add_option("out", out, "output file")->required();
  CLI11_PARSE(app, argc, argv);

  const bsp::OccupancyGrid g = kind == "boundary" ? bsp::boundary_map() : bsp::corridor_map();
  std::ofstream f(out, std::ios::binary);
  if (!f) {
    std::cerr << "cannot write " << out << '\n';
    return 1;
  }
  bsp::write_grid(f, g);
  return 0;
}
