#include "sppnet/cli.hpp"

int main(int argc, char** argv) { return sppnet::cli::run(argc, argv); }
