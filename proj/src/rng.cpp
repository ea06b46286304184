#include "saferl/rng.hpp"

#include <sstream>

namespace saferl {

std::string RngStream::save_state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void RngStream::load_state(const std::string& text) {
  std::istringstream is(text);
  is >> gen_;
}

}  // namespace saferl
