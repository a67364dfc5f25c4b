#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace safenav::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;         // bad usage, bad input, I/O, insufficient data
inline constexpr int kContacts = 2;        // track finished with true-obstacle contacts
inline constexpr int kReplayMismatch = 3;  // replayed metrics differ

// argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace safenav::cli
