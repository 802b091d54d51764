#include "cascadecnn/cli.hpp"

int main(int argc, char** argv) { return cascadecnn::run_cli(argc, argv); }
