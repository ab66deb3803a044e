#include "kolmo/cli.hpp"

int main(int argc, char** argv) { return kolmo::cli_main(argc, argv); }
