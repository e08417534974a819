#include "adaptkan/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return adaptkan::run_cli(argc, argv, std::cout, std::cerr);
}
