#include "ipc/cli.hpp"

int main(int argc, char** argv) { return ipc::cli::run_cli(argc, argv); }
