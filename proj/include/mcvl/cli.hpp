#pragma once

// Command-line entry point: build-vocab, tokenize, synth, train, eval,
// fewshot and overlap. Every command writes a manifest recording its inputs,
// resolved config hash, seed and artifact checksums.

#include <ostream>
#include <string>
#include <vector>

namespace mcvl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Default output root when a command's output flag is omitted.
inline constexpr const char* kOutputRootEnv = "MCVL_OUTPUT_ROOT";

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcvl::cli
