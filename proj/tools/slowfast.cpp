#include "slowfast/cli.hpp"

int main(int argc, char** argv) { return slowfast::run_subcommand(argc, argv); }
