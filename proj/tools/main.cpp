#include "aaim/cli.hpp"

int main(int argc, char** argv) { return aaim::run_cli(argc, argv); }
