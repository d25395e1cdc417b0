#include "fgmae/cli.hpp"

int main(int argc, char** argv) { return fgmae::run_command(std::vector<std::string>(argv, argv + argc)); }
