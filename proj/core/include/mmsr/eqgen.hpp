#pragma once

// Random arithmetic identities and their spoken-word renderings. These are
// the shared ground truth that every modality channel is derived from.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmsr {

inline constexpr int kMinLiteral = 0;
inline constexpr int kMaxLiteral = 20;

// Expression tree node. Literals carry `value`; log has one child, the
// binary operators two.
struct ExprNode {
  enum class Kind : std::uint8_t { kLiteral, kAdd, kSubtract, kFraction, kPower, kLog };

  Kind kind = Kind::kLiteral;
  int value = 0;
  std::vector<ExprNode> children;

  static ExprNode literal(int v);
  static ExprNode unary(Kind k, ExprNode operand);
  static ExprNode binary(Kind k, ExprNode lhs, ExprNode rhs);

  bool is_literal() const { return kind == Kind::kLiteral; }
  int operator_count() const;
  int depth() const;  // operator levels; a literal has depth 0

  friend bool operator==(const ExprNode&, const ExprNode&) = default;
};

// `lhs = rhs` where rhs is the exact value of lhs.
struct Equation {
  ExprNode lhs;
  int rhs = 0;
  std::string text;    // "3 + 5 = 8"
  std::string spoken;  // "three plus five equals eight"

  friend bool operator==(const Equation&, const Equation&) = default;
};

struct EquationTriple {
  std::array<Equation, 3> equations;
  // Spoken order, e.g. {2, 1}: the third equation is read first.
  std::array<int, 2> spoken_indices{0, 1};

  friend bool operator==(const EquationTriple&, const EquationTriple&) = default;
};

// The closed word list used by verbalize(); 21 number words then operator words.
std::span<const std::string_view> lexicon();
std::string_view number_word(int n);

// Exact integer value of an expression, or nullopt-like failure signalled by
// returning false (division with remainder, log of a non power of two, ...).
bool try_evaluate(const ExprNode& node, int& out);

std::string render_text(const ExprNode& lhs, int rhs);
std::vector<std::string> verbalize(const ExprNode& lhs, int rhs);
std::string join_words(std::span<const std::string> words);

// Builds an Equation from a given left-hand side. Throws std::invalid_argument
// if the expression does not evaluate to an integer in [0, 20] or uses
// out-of-range literals.
Equation make_equation(ExprNode lhs);

Equation generate_equation(std::uint64_t seed, int depth_limit = 2);
EquationTriple generate_triple(std::uint64_t seed, int depth_limit = 2);

// The six ordered 2-permutations of {0,1,2}, in the order used by
// generate_triple's draw.
std::span<const std::array<int, 2>> spoken_orders();

}  // namespace mmsr
