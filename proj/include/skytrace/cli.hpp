// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace skytrace {

// Full command-line surface; testable in-process. Failures print a single
// machine-parsable line to err: "error: <category>: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace skytrace
