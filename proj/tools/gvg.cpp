#include <string>
#include <vector>

#include "gvg/cli.hpp"

int main(int argc, char** argv) {
    return gvg::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
