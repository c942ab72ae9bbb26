#include "metaassist/cli.hpp"

int main(int argc, char** argv) { return metaassist::cli::run(argc, argv); }
