#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qco {

using Charge = std::int64_t;

enum class GroupKind { Trivial, ZN, U1 };

// Abelian charge group. Fusion is addition (mod N for Z_N).
struct ChargeGroup {
  GroupKind kind = GroupKind::Trivial;
  std::int64_t modulus = 1;  // only meaningful for ZN

  static ChargeGroup trivial() { return {GroupKind::Trivial, 1}; }
  static ChargeGroup z(std::int64_t n) {
    if (n < 2) throw std::invalid_argument("ChargeGroup: Z_N requires N >= 2");
    return {GroupKind::ZN, n};
  }
  static ChargeGroup u1() { return {GroupKind::U1, 1}; }

  Charge canon(Charge q) const {
    switch (kind) {
      case GroupKind::Trivial: return 0;
      case GroupKind::ZN: {
        Charge r = q % modulus;
        return r < 0 ? r + modulus : r;
      }
      case GroupKind::U1: return q;
    }
    return 0;
  }
  Charge fuse(Charge a, Charge b) const { return canon(a + b); }
  Charge inverse(Charge q) const { return canon(-q); }
  Charge identity() const { return 0; }

  bool operator==(const ChargeGroup& o) const {
    if (kind != o.kind) return false;
    return kind != GroupKind::ZN || modulus == o.modulus;
  }
  bool operator!=(const ChargeGroup& o) const { return !(*this == o); }

  std::string name() const {
    switch (kind) {
      case GroupKind::Trivial: return "trivial";
      case GroupKind::ZN: return "z" + std::to_string(modulus);
      case GroupKind::U1: return "u1";
    }
    return "?";
  }
};

enum class Direction { In, Out };

inline Direction flip(Direction d) { return d == Direction::In ? Direction::Out : Direction::In; }

struct Sector {
  Charge charge = 0;
  std::int64_t dim = 0;
  bool operator==(const Sector& o) const { return charge == o.charge && dim == o.dim; }
};

// A graded vector space: ordered list of (charge, degeneracy) sectors plus an
// arrow. Charges are kept canonical, sorted and distinct.
struct IndexSpace {
  ChargeGroup group;
  std::vector<Sector> sectors;
  Direction dir = Direction::Out;

  IndexSpace() = default;
  IndexSpace(ChargeGroup g, std::vector<Sector> s, Direction d);

  std::int64_t dim() const {
    std::int64_t n = 0;
    for (const auto& s : sectors) n += s.dim;
    return n;
  }

  // Flip direction and negate charges.
  IndexSpace dual() const;
  // Flip direction only; the space a leg of this space contracts with.
  IndexSpace flipped() const {
    IndexSpace r = *this;
    r.dir = flip(dir);
    return r;
  }

  // Contribution of charge q on this leg to the fusion balance.
  Charge signed_charge(Charge q) const { return dir == Direction::In ? group.canon(q) : group.inverse(q); }

  bool has(Charge q) const { return sector_dim(q) > 0; }
  std::int64_t sector_dim(Charge q) const;
  // Offset of sector q in the dense (sector-ordered) layout; throws if absent.
  std::int64_t sector_offset(Charge q) const;

  bool operator==(const IndexSpace& o) const {
    return group == o.group && sectors == o.sectors && dir == o.dir;
  }
  bool operator!=(const IndexSpace& o) const { return !(*this == o); }
};

// True when a leg of `a` can be contracted with a leg of `b`:
// same group, same sector list, opposite arrows.
inline bool contractible(const IndexSpace& a, const IndexSpace& b) {
  return a.group == b.group && a.sectors == b.sectors && a.dir != b.dir;
}

}  // namespace qco
