#include "hsp/cli.hpp"

int main(int argc, char** argv) { return hsp::cli::run(argc, argv); }
