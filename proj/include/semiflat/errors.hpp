#pragma once
// Structured errors shared by all modules. Each failure mode has a stable
// code so the CLI and tests can match on it without parsing messages.

#include <stdexcept>
#include <string>

namespace semiflat {

enum class errc {
  unglued_slot,
  triangle_ineq,
  gluing_mismatch,
  disconnected,
  bad_cone_angle,
  gauss_bonnet_violation,
  trivial_holonomy_input,
  inessential_curve,
  nonconvergent,
  budget_exceeded,
  rank_defect,
  combinatorics_mismatch,
  degenerate_triangle,
  zero_first_coordinate,
  complexity_too_low,
  singular_system,
  degenerate_input,
  not_found_within_budget,
  construction_failed,
  angle_violation,
  unstable_point,
  nullity_zero,
  stability_wall,
  parse_error,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::unglued_slot: return "UNGLUED_SLOT";
    case errc::triangle_ineq: return "TRIANGLE_INEQ";
    case errc::gluing_mismatch: return "GLUING_MISMATCH";
    case errc::disconnected: return "DISCONNECTED";
    case errc::bad_cone_angle: return "BAD_CONE_ANGLE";
    case errc::gauss_bonnet_violation: return "GAUSS_BONNET_VIOLATION";
    case errc::trivial_holonomy_input: return "TRIVIAL_HOLONOMY_INPUT";
    case errc::inessential_curve: return "INESSENTIAL_CURVE";
    case errc::nonconvergent: return "NONCONVERGENT";
    case errc::budget_exceeded: return "BUDGET_EXCEEDED";
    case errc::rank_defect: return "RANK_DEFECT";
    case errc::combinatorics_mismatch: return "COMBINATORICS_MISMATCH";
    case errc::degenerate_triangle: return "DEGENERATE_TRIANGLE";
    case errc::zero_first_coordinate: return "ZERO_FIRST_COORDINATE";
    case errc::complexity_too_low: return "COMPLEXITY_TOO_LOW";
    case errc::singular_system: return "SINGULAR_SYSTEM";
    case errc::degenerate_input: return "DEGENERATE_INPUT";
    case errc::not_found_within_budget: return "NOT_FOUND_WITHIN_BUDGET";
    case errc::construction_failed: return "CONSTRUCTION_FAILED";
    case errc::angle_violation: return "ANGLE_VIOLATION";
    case errc::unstable_point: return "UNSTABLE_POINT";
    case errc::nullity_zero: return "NULLITY_ZERO";
    case errc::stability_wall: return "STABILITY_WALL";
    case errc::parse_error: return "PARSE_ERROR";
    case errc::io_error: return "IO_ERROR";
  }
  return "UNKNOWN";
}

class sf_error : public std::runtime_error {
 public:
  sf_error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw sf_error(code, what);
}

}  // namespace semiflat
