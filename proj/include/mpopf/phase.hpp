#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mpopf {

using complex = std::complex<double>;

// Dense complex matrices never exceed 6x6 (the 2|phases| PSD block), so the
// storage is fixed-capacity and never touches the heap.
using CMatrix = Eigen::Matrix<complex, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;
using CVector = Eigen::Matrix<complex, Eigen::Dynamic, 1, 0, 6, 1>;

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

/// Ordered subset of {a, b, c}. Rows and columns of every per-bus matrix
/// follow the canonical order a < b < c.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;

  static constexpr PhaseSet abc() { return PhaseSet(0b111); }

  static constexpr PhaseSet from_mask(std::uint8_t mask) {
    if (mask == 0 || mask > 0b111) throw std::invalid_argument("phase set must be a non-empty subset of {a,b,c}");
    return PhaseSet(mask);
  }

  /// Parses strings like "abc", "ac", "b". Order and case are ignored,
  /// repeats are rejected.
  static PhaseSet parse(std::string_view text) {
    std::uint8_t mask = 0;
    for (char ch : text) {
      int bit = -1;
      switch (ch) {
        case 'a': case 'A': bit = 0; break;
        case 'b': case 'B': bit = 1; break;
        case 'c': case 'C': bit = 2; break;
        default:
          throw std::invalid_argument("invalid phase letter '" + std::string(1, ch) + "' in \"" +
                                      std::string(text) + "\"");
      }
      if (mask & (1u << bit)) throw std::invalid_argument("repeated phase in \"" + std::string(text) + "\"");
      mask |= static_cast<std::uint8_t>(1u << bit);
    }
    if (mask == 0) throw std::invalid_argument("empty phase set");
    return PhaseSet(mask);
  }

  constexpr std::uint8_t mask() const { return mask_; }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr bool contains(Phase p) const { return mask_ & (1u << static_cast<int>(p)); }

  constexpr int size() const {
    return ((mask_ >> 0) & 1) + ((mask_ >> 1) & 1) + ((mask_ >> 2) & 1);
  }

  constexpr bool is_subset_of(PhaseSet other) const { return (mask_ & ~other.mask_) == 0; }

  /// Phases in canonical order.
  std::vector<Phase> phases() const {
    std::vector<Phase> out;
    for (int k = 0; k < 3; ++k)
      if (mask_ & (1u << k)) out.push_back(static_cast<Phase>(k));
    return out;
  }

  /// Row index of `p` inside matrices over this set, or -1 when absent.
  constexpr int index_of(Phase p) const {
    if (!contains(p)) return -1;
    int idx = 0;
    for (int k = 0; k < static_cast<int>(p); ++k) idx += (mask_ >> k) & 1;
    return idx;
  }

  std::string to_string() const {
    std::string s;
    if (mask_ & 1) s += 'a';
    if (mask_ & 2) s += 'b';
    if (mask_ & 4) s += 'c';
    return s;
  }

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  constexpr explicit PhaseSet(std::uint8_t mask) : mask_(mask) {}
  std::uint8_t mask_ = 0;
};

namespace detail {

// Positions of `sub` inside matrices indexed by `super`.
inline std::vector<int> embed_positions(PhaseSet sub, PhaseSet super) {
  std::vector<int> pos;
  for (Phase p : sub.phases()) pos.push_back(super.index_of(p));
  return pos;
}

}  // namespace detail

/// Principal submatrix of `m` (indexed by `src`) on the rows/columns of `dst`.
inline CMatrix phase_project(const CMatrix& m, PhaseSet src, PhaseSet dst) {
  if (m.rows() != src.size() || m.cols() != src.size())
    throw std::invalid_argument("phase_project: matrix is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + " but source phases are " + src.to_string());
  if (!dst.is_subset_of(src))
    throw std::invalid_argument("phase_project: " + dst.to_string() + " is not a subset of " + src.to_string());
  const auto pos = detail::embed_positions(dst, src);
  const int n = dst.size();
  CMatrix out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(r, c) = m(pos[r], pos[c]);
  return out;
}

/// Embeds `m` (indexed by `src`) into a zero matrix indexed by `dst`.
inline CMatrix phase_lift(const CMatrix& m, PhaseSet src, PhaseSet dst) {
  if (m.rows() != src.size() || m.cols() != src.size())
    throw std::invalid_argument("phase_lift: matrix is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + " but source phases are " + src.to_string());
  if (!src.is_subset_of(dst))
    throw std::invalid_argument("phase_lift: " + src.to_string() + " is not a subset of " + dst.to_string());
  const auto pos = detail::embed_positions(src, dst);
  const int n = dst.size();
  CMatrix out = CMatrix::Zero(n, n);
  for (int r = 0; r < src.size(); ++r)
    for (int c = 0; c < src.size(); ++c) out(pos[r], pos[c]) = m(r, c);
  return out;
}

inline CVector phase_lift(const CVector& v, PhaseSet src, PhaseSet dst) {
  if (v.size() != src.size()) throw std::invalid_argument("phase_lift: vector length does not match phases");
  if (!src.is_subset_of(dst))
    throw std::invalid_argument("phase_lift: " + src.to_string() + " is not a subset of " + dst.to_string());
  const auto pos = detail::embed_positions(src, dst);
  CVector out = CVector::Zero(dst.size());
  for (int r = 0; r < src.size(); ++r) out(pos[r]) = v(r);
  return out;
}

}  // namespace mpopf
