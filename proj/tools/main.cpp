#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kconflict/cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("kconflict"));
  std::vector<std::string> args(argv + 1, argv + argc);
  return kc::run_cli(args, std::cout, std::cerr);
}
