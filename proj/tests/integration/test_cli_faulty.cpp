#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"

// Linked against the library whose matmul adjoint is deliberately scaled.
TEST_CASE("grad-check rejects a corrupted operation") {
  std::vector<std::string> args{"kegnn", "grad-check"};
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  std::ostringstream out, err;
  CHECK(kegnn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err) == 3);
  CHECK(out.str().find("FAIL") != std::string::npos);
}
