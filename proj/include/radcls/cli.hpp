#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace radcls::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

// Runs one command: synth, prepare, split, train, eval, explain, det-eval.
// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace radcls::cli
