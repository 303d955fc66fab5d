// Runs every acceptance criterion and prints one line per criterion.
// Exit status 0 only if all criteria pass within their runtime budgets.

#include <cstdio>

#include "nhdiff/app/checks.hpp"
#include "nhdiff/parallel.hpp"

int main() {
  using namespace nhdiff;
  const int threads = default_threads();
  int failed = 0;
  for (const auto& c : app::check_catalog()) {
    const app::CheckResult r = app::run_check(c.name, threads);
    const char* status = r.passed() ? "PASS" : "FAIL";
    std::printf("%s %2d %-24s %7.2fs (budget %.0fs%s)  %s\n", status, c.criterion, c.name.c_str(), r.seconds,
                c.budget_seconds, r.within_budget() ? "" : ", EXCEEDED", r.summary.c_str());
    std::fflush(stdout);
    if (!r.passed()) ++failed;
  }
  std::printf("%d/%zu criteria passed (threads %d)\n", int(app::check_catalog().size()) - failed,
              app::check_catalog().size(), threads);
  return failed == 0 ? 0 : 1;
}
