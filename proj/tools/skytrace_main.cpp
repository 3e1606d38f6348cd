// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "skytrace/cli.hpp"

int main(int argc, char** argv) {
    return skytrace::run_cli(argc, argv, std::cout, std::cerr);
}
