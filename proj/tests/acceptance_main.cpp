#include <iostream>

#include "fracfb/acceptance.hpp"

int main() { return fracfb::acceptance::run_and_report(std::cout); }
