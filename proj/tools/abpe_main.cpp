#include <abpe/cli.hpp>

int main(int argc, char** argv) { return abpe::cli::run(argc, argv); }
