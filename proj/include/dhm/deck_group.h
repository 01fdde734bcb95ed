#pragma once

#include "dhm/geometry.h"

#include <string>
#include <string_view>
#include <vector>

namespace dhm {

// Freely reduced word in the generators of a deck group. Letter +(k+1) is
// generator k, -(k+1) its inverse. Text form: 'a' + k for generators, upper
// case for inverses, "1" for the empty word.
class Word {
public:
  Word() = default;
  static Word generator(int index, bool inverse = false);
  static Word from_letters(std::vector<int> letters);
  static Word parse(std::string_view text);

  const std::vector<int>& letters() const { return letters_; }
  std::size_t length() const { return letters_.size(); }
  bool empty() const { return letters_.empty(); }

  Word inverse() const;
  Word operator*(const Word& rhs) const;
  bool operator==(const Word&) const = default;

  std::string to_string() const;

private:
  std::vector<int> letters_;
};

// Finitely generated group of isometries; evaluates words to matrices.
class DeckGroup {
public:
  DeckGroup() = default;
  DeckGroup(GeometryKind kind, std::vector<Isometry> generators);

  GeometryKind kind() const { return kind_; }
  std::size_t rank() const { return generators_.size(); }
  const std::vector<Isometry>& generators() const { return generators_; }
  const Isometry& letter(int l) const;

  Isometry evaluate(const Word& w) const;

private:
  GeometryKind kind_ = GeometryKind::Euclidean;
  std::vector<Isometry> generators_;
  std::vector<Isometry> inverses_;
};

// Translations of the plane by the two lattice vectors (a, 0) and (shear, b).
DeckGroup torus_lattice(double a, double b, double shear = 0.0);

} // namespace dhm
