#pragma once

// Reduced SELFIES grammar: tokenizer, sequence confound statistics, a
// valence-constrained graph decoder and a relabeling-invariant graph digest.
//
// Supported vocabulary (see Vocabulary::standard()):
//   atoms          [X] [=X] [#X]   for X in C N O S P F Cl Br I
//   branches       [Branch1] [=Branch1] [#Branch1] [Branch2] [=Branch2] [#Branch2]
//   rings          [Ring1] [=Ring1] [Ring2] [=Ring2]
//   special        [SOS] [EOS] [PAD] [MASK]
//
// Branch and ring tokens read the following one or two tokens as base-16
// index digits using the SELFIES v2 index alphabet.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace latprobe::selfies {

enum class Element : std::uint8_t { C, N, O, S, P, F, Cl, Br, I };

inline constexpr std::array<Element, 9> kElements = {Element::C,  Element::N, Element::O,
                                                      Element::S,  Element::P, Element::F,
                                                      Element::Cl, Element::Br, Element::I};

std::string_view symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view s);

/// Maximum total bond order an atom may carry (the grammar's bonding capacity).
int bonding_capacity(Element e);
/// Smallest allowed valence >= bond_order_sum, minus the sum. -1 when the sum
/// exceeds every allowed valence.
int implicit_hydrogens(Element e, int bond_order_sum);
bool is_allowed_valence(Element e, int total);

struct TokenSequence {
  std::vector<std::string> tokens;
  std::string source;

  std::string joined() const;
  std::size_t size() const noexcept { return tokens.size(); }
};

/// Splits a string of bracketed tokens. Throws UnbalancedBracket (with the
/// character offset) or EmptyToken.
TokenSequence tokenize(std::string_view s);

bool is_special(std::string_view token);
/// Drops [SOS]/[EOS]/[PAD]/[MASK].
TokenSequence strip_special(const TokenSequence& seq);

struct ConfoundRow {
  std::size_t length = 0;
  std::size_t branch_count = 0;
  std::size_t ring_count = 0;
  double entropy = 0.0;  // bits
};

inline constexpr std::array<std::string_view, 4> kConfoundNames = {"length", "branch_count",
                                                                   "ring_count", "entropy"};

ConfoundRow confound_panel(const TokenSequence& seq);

struct Atom {
  Element element = Element::C;
  int implicit_h = 0;
  int charge = 0;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  int order = 1;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::string> derivation_log;

  int bond_order_sum(std::size_t atom) const;
  std::size_t degree(std::size_t atom) const;
  /// Neighbor lists of (atom, bond order).
  std::vector<std::vector<std::pair<std::size_t, int>>> adjacency() const;
  std::size_t component_count() const;
  /// Bond order between a and b, 0 when not bonded.
  int bond_between(std::size_t a, std::size_t b) const;
};

enum class TokenKind { Atom, Branch, Ring, Special };

struct TokenInfo {
  TokenKind kind = TokenKind::Atom;
  Element element = Element::C;  // atoms only
  int bond_order = 1;            // atom bond / branch bond / ring bond
  int index_len = 0;             // branch and ring tokens
};

class Vocabulary {
 public:
  /// Every token of the reduced grammar.
  static const Vocabulary& standard();
  /// One token per line; blank lines ignored. Tokens outside the reduced
  /// grammar raise UnknownToken.
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary from_symbols(const std::vector<std::string>& symbols);

  const TokenInfo* find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token) != nullptr; }
  const std::vector<std::string>& symbols() const noexcept { return order_; }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TokenInfo> info_;
};

/// Parses a reduced-grammar token; nullopt when the symbol is not part of it.
std::optional<TokenInfo> parse_token(std::string_view token);

/// Index digit value of a token under the SELFIES v2 index alphabet.
int index_digit(std::string_view token);

/// Decodes a token sequence (special tokens are stripped first). Unknown
/// tokens throw UnknownToken; unresolvable grammar actions are skipped and
/// recorded in derivation_log.
MolGraph decode(const TokenSequence& seq, const Vocabulary& vocab = Vocabulary::standard());

struct SanityOptions {
  bool allow_multi_fragment = false;
};

/// Valence, bond-table and connectivity check. The empty graph is sane.
bool is_sane(const MolGraph& g, SanityOptions opts = {});

/// Non-empty and sane; the validity notion used for generation metrics.
bool is_valid_molecule(const MolGraph& g);

/// Iterative neighborhood-refinement digest, invariant under atom reindexing.
std::uint64_t canonical_hash(const MolGraph& g);

/// Human-readable atom/bond listing.
std::string describe(const MolGraph& g);

}  // namespace latprobe::selfies
