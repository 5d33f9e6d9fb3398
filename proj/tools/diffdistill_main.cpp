#include <string>
#include <vector>

#include "dd/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dd::run_command(args);
}
