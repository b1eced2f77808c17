// SPDX-License-Identifier: Apache-2.0

#include "r2ai/cli.hpp"

#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("r2ai"));
    spdlog::set_level(spdlog::level::warn);
    r2ai::CliIO io{std::cin, std::cout, std::cerr};
    const int rc = r2ai::run_cli(std::vector<std::string>(argv + 1, argv + argc), io);
    spdlog::shutdown();
    return rc;
}
