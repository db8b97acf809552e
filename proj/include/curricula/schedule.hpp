#pragma once

// Iteration-dependent sample weights: a linear ramp from the difficulty value
// at iteration 0 to 1 at iteration m, or the raw difficulty forever when m is
// unbounded.

#include <cmath>
#include <optional>
#include <string>

#include "curricula/difficulty.hpp"
#include "curricula/error.hpp"

namespace curricula {

class CurriculumSchedule {
 public:
  // m = nullopt means the curriculum never ends (weights stay at D).
  explicit CurriculumSchedule(std::optional<int> m = 1, DifficultyConfig difficulty = {})
      : m_(m), difficulty_(difficulty) {
    if (m_ && *m_ < 1) throw InvalidArgument("curriculum end iteration m must be >= 1");
  }

  static CurriculumSchedule unbounded(DifficultyConfig difficulty = {}) {
    return CurriculumSchedule(std::nullopt, difficulty);
  }

  std::optional<int> m() const { return m_; }
  bool is_unbounded() const { return !m_.has_value(); }
  const DifficultyConfig& difficulty() const { return difficulty_; }

  double weight(double difficulty, int iteration) const {
    if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw InvalidArgument("weight: difficulty outside [0, 1]");
    if (iteration < 0) throw InvalidArgument("weight: negative iteration");
    if (!m_) return difficulty;
    if (iteration >= *m_) return 1.0;
    const double r = static_cast<double>(iteration) / *m_;
    return r + (1.0 - r) * difficulty;
  }

  // The weighted loss is weight * loss; the weight is constant in the model
  // parameters, so it scales the gradient by the same factor.
  double weighted_loss(double difficulty, int iteration, double base_loss) const {
    if (!std::isfinite(base_loss)) throw NumericalError("weighted_loss: non-finite base loss");
    return weight(difficulty, iteration) * base_loss;
  }

 private:
  std::optional<int> m_;
  DifficultyConfig difficulty_;
};

inline std::string format_m(std::optional<int> m) { return m ? std::to_string(*m) : "inf"; }

inline std::optional<int> parse_m(const std::string& s) {
  if (s == "inf" || s == "infinity" || s == "∞") return std::nullopt;
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("bad curriculum m '" + s + "'");
  }
  if (used != s.size() || v < 1) throw InvalidArgument("bad curriculum m '" + s + "'");
  return v;
}

}  // namespace curricula
