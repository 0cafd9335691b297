#include "cli/commands.hpp"

int main(int argc, char** argv) { return grrhdr::run_cli(argc, argv); }
