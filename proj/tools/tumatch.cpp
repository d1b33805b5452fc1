#include "tumatch/cli.hpp"

int main(int argc, char** argv) { return tumatch::cli::run(argc, argv); }
