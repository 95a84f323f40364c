#include <string>
#include <vector>

#include "milr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return milr::cli::run_cli(args);
}
