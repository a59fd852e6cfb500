#include "stylebc/cli.hpp"

int main(int argc, char** argv) { return stylebc::cli::run(argc, argv); }
