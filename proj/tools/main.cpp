#include <string>
#include <vector>

#include "actlearn/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return actlearn::cli::run(args);
}
