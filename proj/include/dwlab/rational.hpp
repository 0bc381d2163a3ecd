#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <string_view>

namespace dwlab {

// Exact rational arithmetic for problem values and grading. Arbitrary
// precision: deep MUL/SQUARE towers overflow any fixed-width integer.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Canonical "p" or "p/q" rendering of the reduced fraction.
std::string to_fraction_string(const Rational& v);

// Parses "p" or "p/q" (q > 0 after normalization). Throws
// std::invalid_argument on malformed input or zero denominator.
Rational rational_from_fraction(std::string_view text);

// Parses a signed decimal with optional exponent ("-12.5e-3") exactly.
Rational rational_from_decimal(std::string_view text);

}  // namespace dwlab
