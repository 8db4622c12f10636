#pragma once

// Surface syntax for polynomials in the letters U<k>, Z<k> and their
// adjoints.  Terms are separated by + or -, factors by * or adjacency,
// powers are written ^n, and complex coefficients appear as (a+bi).
//
// The adjoint star must be attached to its atom: a '*' that directly touches
// the following atom is multiplication, so "U1*Z1" is U1 times Z1 while
// "U1* Z1" is adj(U1) times Z1.

#include <cstddef>
#include <stdexcept>
#include <string>

#include "haarx/ncalg.hpp"

namespace haarx::parse {

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t position);
  std::size_t position;  // 1-based character offset into the input
};

ncalg::NCPoly parse_poly(const std::string& text);

// canonical surface form; parse_poly(print_poly(p)) == p.  Throws
// std::invalid_argument on exponential atoms (no surface syntax for them).
std::string print_poly(const ncalg::NCPoly& p);

}  // namespace haarx::parse
