#include <iostream>
#include <string>
#include <vector>

#include "protip/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return protip::run_cli(args, std::cout, std::cerr);
}
