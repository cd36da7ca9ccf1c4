#include "dyntomo/common.hpp"

#include <algorithm>
#include <atomic>

namespace dyntomo {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

}  // namespace dyntomo
