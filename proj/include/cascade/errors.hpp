#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

/// Thrown when a training loss stops being finite.
struct DivergedError : std::runtime_error {
    int step;
    explicit DivergedError(int s)
        : std::runtime_error("training diverged at step " + std::to_string(s)), step(s) {}
};

}  // namespace cascade
