#include <string>
#include <vector>

#include "armor/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return armor::run_cli(args);
}
