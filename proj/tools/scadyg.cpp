#include "scadyg/cli.hpp"

int main(int argc, char** argv) { return scadyg::cli::run(argc, argv); }
