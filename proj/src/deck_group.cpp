#include "dhm/deck_group.h"

#include "dhm/errors.h"

#include <cctype>
#include <cstdlib>

namespace dhm {

Word Word::generator(int index, bool inverse) {
  if (index < 0 || index >= 26) throw DomainError("Word: generator index out of range");
  Word w;
  w.letters_.push_back(inverse ? -(index + 1) : index + 1);
  return w;
}

Word Word::from_letters(std::vector<int> letters) {
  Word w;
  for (int l : letters) {
    if (l == 0 || std::abs(l) > 26) throw DomainError("Word: invalid letter");
    if (!w.letters_.empty() && w.letters_.back() == -l)
      w.letters_.pop_back();
    else
      w.letters_.push_back(l);
  }
  return w;
}

Word Word::parse(std::string_view text) {
  if (text == "1") return {};
  std::vector<int> letters;
  for (char c : text) {
    if (c >= 'a' && c <= 'z')
      letters.push_back(c - 'a' + 1);
    else if (c >= 'A' && c <= 'Z')
      letters.push_back(-(c - 'A' + 1));
    else
      throw DomainError("Word: invalid character in '" + std::string(text) + "'");
  }
  if (letters.empty()) throw DomainError("Word: empty text");
  return from_letters(std::move(letters));
}

Word Word::inverse() const {
  Word w;
  w.letters_.reserve(letters_.size());
  for (auto it = letters_.rbegin(); it != letters_.rend(); ++it) w.letters_.push_back(-*it);
  return w;
}

Word Word::operator*(const Word& rhs) const {
  Word w = *this;
  for (int l : rhs.letters_) {
    if (!w.letters_.empty() && w.letters_.back() == -l)
      w.letters_.pop_back();
    else
      w.letters_.push_back(l);
  }
  return w;
}

std::string Word::to_string() const {
  if (letters_.empty()) return "1";
  std::string s;
  for (int l : letters_) s.push_back(l > 0 ? static_cast<char>('a' + l - 1) : static_cast<char>('A' - l - 1));
  return s;
}

DeckGroup::DeckGroup(GeometryKind kind, std::vector<Isometry> generators)
    : kind_(kind), generators_(std::move(generators)) {
  for (const auto& g : generators_) {
    if (g.kind() != kind_) throw DomainError("DeckGroup: generator geometry mismatch");
    inverses_.push_back(g.inverse());
  }
}

const Isometry& DeckGroup::letter(int l) const {
  const std::size_t k = static_cast<std::size_t>(std::abs(l) - 1);
  if (l == 0 || k >= generators_.size()) throw DomainError("DeckGroup: word uses an unknown generator");
  return l > 0 ? generators_[k] : inverses_[k];
}

Isometry DeckGroup::evaluate(const Word& w) const {
  Isometry g = Isometry::identity(kind_);
  for (int l : w.letters()) g = g * letter(l);
  return g;
}

DeckGroup torus_lattice(double a, double b, double shear) {
  if (!(a > 0) || !(b > 0) || !std::isfinite(shear)) throw DomainError("torus lattice: side lengths must be positive");
  return DeckGroup(GeometryKind::Euclidean, {Isometry::translation(Vec2(a, 0)), Isometry::translation(Vec2(shear, b))});
}

} // namespace dhm
