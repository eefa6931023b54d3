// One line per acceptance criterion. Exit status is nonzero if any fails.
// SINKBISIM_ACCEPTANCE_QUICK=1 swaps in the small smoke-test scale.
// SINKBISIM_ACCEPTANCE_LOG=path also appends every line to that file.

#include "sinkbisim/verify.hpp"

#include <cstdio>
#include <cstdarg>
#include <cstdlib>
#include <string>

namespace {

std::FILE* g_log = nullptr;

void emit(const char* fmt, ...) {
    std::va_list args;
    va_start(args, fmt);
    std::va_list copy;
    va_copy(copy, args);
    std::vprintf(fmt, args);
    std::fflush(stdout);
    if (g_log != nullptr) {
        std::vfprintf(g_log, fmt, copy);
        std::fflush(g_log);
    }
    va_end(copy);
    va_end(args);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace sinkbisim::verify;
    Scale scale;
    if (const char* q = std::getenv("SINKBISIM_ACCEPTANCE_QUICK"); q != nullptr && std::string(q) == "1") {
        scale = Scale::quick();
    }
    if (const char* path = std::getenv("SINKBISIM_ACCEPTANCE_LOG"); path != nullptr && *path != '\0') {
        g_log = std::fopen(path, "w");
    }
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    emit("scale: |S|=%zu m=%zu seeds=%zu steps=%zu (check 7: %zu; medoid runs: |S|=%zu steps=%zu)\n",
         scale.num_states, scale.num_classes, scale.num_seeds, scale.steps, scale.warm_steps, scale.pam_states,
         scale.pam_steps);
    int failed = 0;
    run_all(scale, only, [&](const CheckResult& r) {
        emit("[%s] %2d %s: %s (%.1fs)\n", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str(),
             r.seconds);
        failed += r.passed ? 0 : 1;
    });
    if (g_log != nullptr) std::fclose(g_log);
    return failed == 0 ? 0 : 1;
}
