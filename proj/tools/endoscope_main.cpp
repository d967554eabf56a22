#include "endo/cli.hpp"

int main(int argc, char** argv) { return endo::run_cli(argc, argv); }
