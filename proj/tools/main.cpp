#include "safenav/cli.hpp"

int main(int argc, char** argv) { return safenav::run_cli(argc, argv); }
