#include "hydroctrl/harness.hpp"

int main(int argc, char** argv) { return hydroctrl::run_cli(argc, argv); }
