#include "ctxmhe/cli.hpp"

int main(int argc, char** argv) { return ctxmhe::cli::run(argc, argv); }
