#include "scct/cli.hpp"

int main(int argc, char** argv) { return scct::cli::run(argc, argv); }
