#pragma once

namespace noisykit {

inline constexpr const char* kVersion = "0.1.0";

// All randomness in the library flows through the generator in rng.hpp.
inline constexpr const char* kRngAlgorithm = "xoshiro256++ seeded via splitmix64";

}  // namespace noisykit
