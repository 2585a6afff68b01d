#include <iostream>

#include "vfl/cli.hpp"

int main(int argc, char** argv) {
    return vfl::cli::cli_main({argv + 1, argv + argc}, std::cout, std::cerr);
}
