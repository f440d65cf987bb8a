#include "mmsr/eqgen.hpp"

#include <algorithm>
#include <stdexcept>

#include "mmsr/rng.hpp"

namespace mmsr {

namespace {

constexpr std::array<std::string_view, 29> kLexicon = {
    "zero",     "one",      "two",       "three",    "four",    "five",
    "six",      "seven",    "eight",     "nine",     "ten",     "eleven",
    "twelve",   "thirteen", "fourteen",  "fifteen",  "sixteen", "seventeen",
    "eighteen", "nineteen", "twenty",    "plus",     "minus",   "over",
    "to",       "the",      "log",       "of",       "equals"};

constexpr std::array<std::array<int, 2>, 6> kSpokenOrders = {
    {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}}};

constexpr double kNestProbability = 0.3;
constexpr int kMaxExponent = 4;
constexpr int kMaxAttempts = 100000;

constexpr std::array<ExprNode::Kind, 5> kOperators = {
    ExprNode::Kind::kAdd, ExprNode::Kind::kSubtract, ExprNode::Kind::kFraction,
    ExprNode::Kind::kPower, ExprNode::Kind::kLog};

bool in_range(int v) { return v >= kMinLiteral && v <= kMaxLiteral; }

int log2_exact(int v) {
  if (v <= 0 || (v & (v - 1)) != 0) return -1;
  int r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

bool needs_parens(const ExprNode& child) { return !child.is_literal(); }

void render_into(const ExprNode& node, std::string& out) {
  auto operand = [&out](const ExprNode& child) {
    if (needs_parens(child)) {
      out += '(';
      render_into(child, out);
      out += ')';
    } else {
      render_into(child, out);
    }
  };
  switch (node.kind) {
    case ExprNode::Kind::kLiteral:
      out += std::to_string(node.value);
      return;
    case ExprNode::Kind::kLog:
      out += "log ";
      operand(node.children.at(0));
      return;
    default:
      break;
  }
  const char* sym = node.kind == ExprNode::Kind::kAdd        ? " + "
                    : node.kind == ExprNode::Kind::kSubtract ? " - "
                    : node.kind == ExprNode::Kind::kFraction ? " / "
                                                             : " ^ ";
  operand(node.children.at(0));
  out += sym;
  operand(node.children.at(1));
}

void verbalize_into(const ExprNode& node, std::vector<std::string>& out) {
  switch (node.kind) {
    case ExprNode::Kind::kLiteral:
      out.emplace_back(number_word(node.value));
      return;
    case ExprNode::Kind::kLog:
      out.emplace_back("log");
      out.emplace_back("of");
      verbalize_into(node.children.at(0), out);
      return;
    case ExprNode::Kind::kAdd:
      verbalize_into(node.children.at(0), out);
      out.emplace_back("plus");
      break;
    case ExprNode::Kind::kSubtract:
      verbalize_into(node.children.at(0), out);
      out.emplace_back("minus");
      break;
    case ExprNode::Kind::kFraction:
      verbalize_into(node.children.at(0), out);
      out.emplace_back("over");
      break;
    case ExprNode::Kind::kPower:
      verbalize_into(node.children.at(0), out);
      out.emplace_back("to");
      out.emplace_back("the");
      break;
  }
  verbalize_into(node.children.at(1), out);
}

ExprNode random_literal(Rng& rng) {
  return ExprNode::literal(static_cast<int>(rng.below(kMaxLiteral - kMinLiteral + 1)) + kMinLiteral);
}

ExprNode random_operator(Rng& rng, int depth) {
  const auto kind = kOperators[rng.below(kOperators.size())];
  auto child = [&rng, depth, kind]() {
    // Exponents and bases stay literal so powers remain small and readable.
    if (depth > 1 && kind != ExprNode::Kind::kPower && rng.bernoulli(kNestProbability)) {
      return random_operator(rng, depth - 1);
    }
    return random_literal(rng);
  };
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    ExprNode node = kind == ExprNode::Kind::kLog ? ExprNode::unary(kind, child())
                                                 : ExprNode::binary(kind, child(), child());
    int value = 0;
    if (try_evaluate(node, value)) return node;
  }
  throw std::logic_error("generate_equation: no valid expression found");
}

}  // namespace

ExprNode ExprNode::literal(int v) {
  ExprNode n;
  n.kind = Kind::kLiteral;
  n.value = v;
  return n;
}

ExprNode ExprNode::unary(Kind k, ExprNode operand) {
  ExprNode n;
  n.kind = k;
  n.children.push_back(std::move(operand));
  return n;
}

ExprNode ExprNode::binary(Kind k, ExprNode lhs, ExprNode rhs) {
  ExprNode n;
  n.kind = k;
  n.children.push_back(std::move(lhs));
  n.children.push_back(std::move(rhs));
  return n;
}

int ExprNode::operator_count() const {
  int n = is_literal() ? 0 : 1;
  for (const auto& c : children) n += c.operator_count();
  return n;
}

int ExprNode::depth() const {
  int d = 0;
  for (const auto& c : children) d = std::max(d, c.depth());
  return is_literal() ? 0 : d + 1;
}

std::span<const std::string_view> lexicon() { return kLexicon; }

std::string_view number_word(int n) {
  if (!in_range(n)) {
    throw std::out_of_range("number_word: literal " + std::to_string(n) + " outside 0-20");
  }
  return kLexicon[static_cast<std::size_t>(n)];
}

bool try_evaluate(const ExprNode& node, int& out) {
  int a = 0;
  int b = 0;
  switch (node.kind) {
    case ExprNode::Kind::kLiteral:
      if (!in_range(node.value)) return false;
      out = node.value;
      return true;
    case ExprNode::Kind::kLog: {
      if (node.children.size() != 1 || !try_evaluate(node.children[0], a)) return false;
      const int r = log2_exact(a);
      if (r < 0) return false;
      out = r;
      return true;
    }
    default:
      break;
  }
  if (node.children.size() != 2 || !try_evaluate(node.children[0], a) ||
      !try_evaluate(node.children[1], b)) {
    return false;
  }
  long long r = 0;
  switch (node.kind) {
    case ExprNode::Kind::kAdd:
      r = a + b;
      break;
    case ExprNode::Kind::kSubtract:
      r = a - b;
      break;
    case ExprNode::Kind::kFraction:
      if (b == 0 || a % b != 0) return false;
      r = a / b;
      break;
    case ExprNode::Kind::kPower:
      if (b > kMaxExponent || (a == 0 && b == 0)) return false;
      r = 1;
      for (int i = 0; i < b; ++i) r *= a;
      break;
    default:
      return false;
  }
  if (r < kMinLiteral || r > kMaxLiteral) return false;
  out = static_cast<int>(r);
  return true;
}

std::string render_text(const ExprNode& lhs, int rhs) {
  std::string out;
  render_into(lhs, out);
  out += " = ";
  out += std::to_string(rhs);
  return out;
}

std::vector<std::string> verbalize(const ExprNode& lhs, int rhs) {
  std::vector<std::string> words;
  verbalize_into(lhs, words);
  words.emplace_back("equals");
  words.emplace_back(number_word(rhs));
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

Equation make_equation(ExprNode lhs) {
  int value = 0;
  if (!try_evaluate(lhs, value)) {
    throw std::invalid_argument("make_equation: expression is not a valid 0-20 integer identity");
  }
  Equation eq;
  eq.rhs = value;
  eq.text = render_text(lhs, value);
  eq.spoken = join_words(verbalize(lhs, value));
  eq.lhs = std::move(lhs);
  return eq;
}

Equation generate_equation(std::uint64_t seed, int depth_limit) {
  if (depth_limit < 1) throw std::invalid_argument("generate_equation: depth_limit must be >= 1");
  Rng rng(mix_seed(seed, "equation"));
  return make_equation(random_operator(rng, depth_limit));
}

EquationTriple generate_triple(std::uint64_t seed, int depth_limit) {
  EquationTriple triple;
  std::uint64_t salt = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    // Redraw duplicates so the spoken pair is always identifiable.
    for (;;) {
      triple.equations[i] = generate_equation(mix_seed(seed, salt++), depth_limit);
      const auto begin = triple.equations.begin();
      const auto end = begin + static_cast<std::ptrdiff_t>(i);
      if (std::none_of(begin, end, [&](const Equation& e) { return e.text == triple.equations[i].text; })) {
        break;
      }
    }
  }
  Rng order(mix_seed(seed, "spoken-order"));
  triple.spoken_indices = kSpokenOrders[order.below(kSpokenOrders.size())];
  return triple;
}

std::span<const std::array<int, 2>> spoken_orders() { return kSpokenOrders; }

}  // namespace mmsr
