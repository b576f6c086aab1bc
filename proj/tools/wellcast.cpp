#include "wellcast/cli.hpp"

int main(int argc, char** argv) { return wellcast::cli::run(argc, argv); }
