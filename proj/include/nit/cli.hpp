#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nit::cli {

// argv[0] excluded. Returns 0 on success, 1 on usage errors and 2 on
// runtime failures. Data goes to `out` or to files, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nit::cli
