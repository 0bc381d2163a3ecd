#include "dwlab/rational.hpp"

#include <cctype>
#include <stdexcept>

namespace dwlab {

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// cpp_int's string constructor honors 0x/leading-0 prefixes; strip leading
// zeros so "007" reads as decimal seven, not octal.
BigInt digits_to_int(std::string_view digits) {
  std::size_t nz = digits.find_first_not_of('0');
  if (nz == std::string_view::npos) return BigInt(0);
  return BigInt{std::string(digits.substr(nz))};
}

}  // namespace

std::string to_fraction_string(const Rational& v) {
  std::string num = numerator(v).str();
  if (denominator(v) == 1) return num;
  return num + "/" + denominator(v).str();
}

Rational rational_from_fraction(std::string_view text) {
  std::string_view s = trim(text);
  if (s.empty()) throw std::invalid_argument("empty fraction literal");
  bool neg = false;
  if (s.front() == '+' || s.front() == '-') {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  auto slash = s.find('/');
  std::string_view num_part = slash == std::string_view::npos ? s : s.substr(0, slash);
  num_part = trim(num_part);
  if (!all_digits(num_part)) throw std::invalid_argument("malformed fraction numerator");
  BigInt num = digits_to_int(num_part);
  BigInt den = 1;
  if (slash != std::string_view::npos) {
    std::string_view den_part = trim(s.substr(slash + 1));
    if (!all_digits(den_part)) throw std::invalid_argument("malformed fraction denominator");
    den = digits_to_int(den_part);
    if (den == 0) throw std::invalid_argument("zero denominator");
  }
  Rational r(num, den);
  return neg ? Rational(-r) : r;
}

Rational rational_from_decimal(std::string_view text) {
  std::string_view s = trim(text);
  if (s.empty()) throw std::invalid_argument("empty decimal literal");
  bool neg = false;
  if (s.front() == '+' || s.front() == '-') {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  // Split off an optional exponent.
  long long exponent = 0;
  auto epos = s.find_first_of("eE");
  if (epos != std::string_view::npos) {
    std::string_view exp_part = s.substr(epos + 1);
    s = s.substr(0, epos);
    bool exp_neg = false;
    if (!exp_part.empty() && (exp_part.front() == '+' || exp_part.front() == '-')) {
      exp_neg = exp_part.front() == '-';
      exp_part.remove_prefix(1);
    }
    if (!all_digits(exp_part)) throw std::invalid_argument("malformed exponent");
    if (exp_part.size() > 6) throw std::invalid_argument("exponent out of range");
    exponent = std::stoll(std::string(exp_part));
    if (exp_neg) exponent = -exponent;
  }
  auto dot = s.find('.');
  std::string digits;
  long long frac_digits = 0;
  if (dot == std::string_view::npos) {
    if (!all_digits(s)) throw std::invalid_argument("malformed decimal");
    digits = std::string(s);
  } else {
    std::string_view int_part = s.substr(0, dot);
    std::string_view frac_part = s.substr(dot + 1);
    if (int_part.empty() && frac_part.empty()) throw std::invalid_argument("malformed decimal");
    if (!int_part.empty() && !all_digits(int_part)) throw std::invalid_argument("malformed decimal");
    if (!frac_part.empty() && !all_digits(frac_part)) throw std::invalid_argument("malformed decimal");
    digits = std::string(int_part) + std::string(frac_part);
    frac_digits = static_cast<long long>(frac_part.size());
  }
  if (digits.empty()) throw std::invalid_argument("malformed decimal");
  BigInt mantissa = digits_to_int(digits);
  long long net_exp = exponent - frac_digits;
  Rational r(mantissa, 1);
  if (net_exp > 0) {
    BigInt scale = pow(BigInt(10), static_cast<unsigned>(net_exp));
    r *= Rational(scale, 1);
  } else if (net_exp < 0) {
    BigInt scale = pow(BigInt(10), static_cast<unsigned>(-net_exp));
    r /= Rational(scale, 1);
  }
  return neg ? Rational(-r) : r;
}

}  // namespace dwlab
