// SPDX-License-Identifier: Apache-2.0
#include "sir/cli.hpp"

int main(int argc, char** argv) { return sir::cli::run(argc, argv); }
