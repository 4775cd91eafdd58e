#include <cstdio>
#include <iostream>

#include "calib/acceptance.hpp"

int main() {
    auto results = calib::run_acceptance(std::cout);
    std::size_t failed = 0;
    for (const auto& r : results)
        if (!r.pass) ++failed;
    std::printf("%zu/%zu acceptance criteria passed\n", results.size() - failed,
                results.size());
    return failed == 0 ? 0 : 1;
}
