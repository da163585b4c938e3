#include "freezelab/cli.hpp"

int main(int argc, char** argv) { return freezelab::cli::run(argc, argv); }
