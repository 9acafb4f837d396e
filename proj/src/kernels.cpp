#include "zsnmt/kernels.hpp"

namespace zsnmt::kernels {

namespace {
Backend g_backend = Backend::Parallel;
}

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

}  // namespace zsnmt::kernels
