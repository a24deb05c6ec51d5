#include "fol/error.hpp"

#include <sstream>

namespace fol {

namespace {
std::string degenerate_message(int element, double det_j) {
  std::ostringstream os;
  os << "degenerate element " << element << ": Jacobian determinant " << det_j << " <= 0";
  return os.str();
}
std::string non_finite_message(const std::string& term, double value) {
  std::ostringstream os;
  os << "non-finite loss term '" << term << "' (value " << value << ")";
  return os.str();
}
}  // namespace

DegenerateElementError::DegenerateElementError(int element, double det_j)
    : NumericalError(degenerate_message(element, det_j)), element_(element), det_j_(det_j) {}

NonFiniteLossError::NonFiniteLossError(std::string term, double value)
    : NumericalError(non_finite_message(term, value)), term_(std::move(term)) {}

}  // namespace fol
