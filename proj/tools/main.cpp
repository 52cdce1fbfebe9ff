#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
    dual::cli::tune_allocator();
    return dual::cli::main_entry(std::vector<std::string>(argv + 1, argv + argc));
}
