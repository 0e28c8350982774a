#include "treedoa/common.hpp"

namespace treedoa {

const char* library_version() { return TREEDOA_VERSION; }

}  // namespace treedoa
