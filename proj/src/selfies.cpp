#include "latprobe/selfies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "latprobe/errors.hpp"

namespace latprobe::selfies {

namespace {

struct ElementData {
  std::string_view symbol;
  std::array<int, 3> valences;  // ascending, 0-padded
};

constexpr ElementData kData[] = {
    {"C", {4, 0, 0}},  {"N", {3, 0, 0}}, {"O", {2, 0, 0}},  {"S", {2, 4, 6}}, {"P", {3, 5, 0}},
    {"F", {1, 0, 0}},  {"Cl", {1, 0, 0}}, {"Br", {1, 0, 0}}, {"I", {1, 0, 0}},
};

const ElementData& data(Element e) { return kData[static_cast<int>(e)]; }

constexpr std::array<std::string_view, 4> kSpecial = {"[SOS]", "[EOS]", "[PAD]", "[MASK]"};

constexpr std::array<std::string_view, 16> kIndexAlphabet = {
    "[C]",        "[Ring1]",  "[Ring2]",    "[Branch1]", "[=Branch1]", "[#Branch1]",
    "[Branch2]",  "[=Branch2]", "[#Branch2]", "[O]",     "[N]",        "[=N]",
    "[=C]",       "[#C]",     "[S]",        "[P]"};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix(h ^ splitmix(v)); }

int bond_prefix(std::string_view& body) {
  if (!body.empty() && body.front() == '=') {
    body.remove_prefix(1);
    return 2;
  }
  if (!body.empty() && body.front() == '#') {
    body.remove_prefix(1);
    return 3;
  }
  return 1;
}

}  // namespace

std::string_view symbol(Element e) { return data(e).symbol; }

std::optional<Element> element_from_symbol(std::string_view s) {
  for (Element e : kElements)
    if (symbol(e) == s) return e;
  return std::nullopt;
}

int bonding_capacity(Element e) {
  const auto& v = data(e).valences;
  return *std::max_element(v.begin(), v.end());
}

int implicit_hydrogens(Element e, int bond_order_sum) {
  for (int v : data(e).valences)
    if (v > 0 && v >= bond_order_sum) return v - bond_order_sum;
  return -1;
}

bool is_allowed_valence(Element e, int total) {
  for (int v : data(e).valences)
    if (v > 0 && v == total) return true;
  return false;
}

// ---------------------------------------------------------------------------
// tokens

std::string TokenSequence::joined() const {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

TokenSequence tokenize(std::string_view s) {
  TokenSequence seq;
  seq.source = std::string(s);
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '[')
      throw Error(ErrorKind::UnbalancedBracket,
                  "expected '[' at position " + std::to_string(i));
    std::size_t j = i + 1;
    while (j < s.size() && s[j] != ']') {
      if (s[j] == '[')
        throw Error(ErrorKind::UnbalancedBracket, "nested '[' at position " + std::to_string(j));
      ++j;
    }
    if (j == s.size())
      throw Error(ErrorKind::UnbalancedBracket, "unclosed '[' at position " + std::to_string(i));
    if (j == i + 1) throw Error(ErrorKind::EmptyToken, "empty token at position " + std::to_string(i));
    seq.tokens.emplace_back(s.substr(i, j - i + 1));
    i = j + 1;
  }
  return seq;
}

bool is_special(std::string_view token) {
  return std::find(kSpecial.begin(), kSpecial.end(), token) != kSpecial.end();
}

TokenSequence strip_special(const TokenSequence& seq) {
  TokenSequence out;
  for (const auto& t : seq.tokens)
    if (!is_special(t)) out.tokens.push_back(t);
  out.source = out.joined();
  return out;
}

ConfoundRow confound_panel(const TokenSequence& seq) {
  ConfoundRow row;
  row.length = seq.tokens.size();
  std::map<std::string_view, std::size_t> counts;
  for (const auto& t : seq.tokens) {
    if (t.find("Branch") != std::string::npos) ++row.branch_count;
    if (t.find("Ring") != std::string::npos) ++row.ring_count;
    ++counts[t];
  }
  if (row.length > 1) {
    const double n = static_cast<double>(row.length);
    double h = 0.0;
    for (const auto& [tok, c] : counts) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log2(p);
    }
    row.entropy = h > 0.0 ? h : 0.0;
  }
  return row;
}

// ---------------------------------------------------------------------------
// vocabulary

std::optional<TokenInfo> parse_token(std::string_view token) {
  if (token.size() < 3 || token.front() != '[' || token.back() != ']') return std::nullopt;
  if (is_special(token)) return TokenInfo{TokenKind::Special, Element::C, 0, 0};
  std::string_view body = token.substr(1, token.size() - 2);
  const int order = bond_prefix(body);
  if (body == "Branch1" || body == "Branch2")
    return TokenInfo{TokenKind::Branch, Element::C, order, body.back() - '0'};
  if (body == "Ring1" || body == "Ring2") {
    if (order == 3) return std::nullopt;
    return TokenInfo{TokenKind::Ring, Element::C, order, body.back() - '0'};
  }
  if (auto e = element_from_symbol(body)) return TokenInfo{TokenKind::Atom, *e, order, 0};
  return std::nullopt;
}

int index_digit(std::string_view token) {
  for (std::size_t i = 0; i < kIndexAlphabet.size(); ++i)
    if (kIndexAlphabet[i] == token) return static_cast<int>(i);
  return 0;
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab = [] {
    std::vector<std::string> syms;
    for (const char* prefix : {"", "=", "#"})
      for (Element e : kElements) syms.push_back("[" + std::string(prefix) + std::string(symbol(e)) + "]");
    for (const char* b : {"[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]", "[=Branch2]",
                          "[#Branch2]", "[Ring1]", "[=Ring1]", "[Ring2]", "[=Ring2]"})
      syms.emplace_back(b);
    for (auto s : kSpecial) syms.emplace_back(s);
    return from_symbols(syms);
  }();
  return vocab;
}

Vocabulary Vocabulary::from_symbols(const std::vector<std::string>& symbols) {
  Vocabulary v;
  for (const auto& s : symbols) {
    auto info = parse_token(s);
    if (!info) throw Error(ErrorKind::UnknownToken, "token outside the supported grammar: " + s);
    if (v.info_.emplace(s, *info).second) v.order_.push_back(s);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open vocabulary file " + path.string());
  std::vector<std::string> syms;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) syms.push_back(line);
  }
  return from_symbols(syms);
}

const TokenInfo* Vocabulary::find(std::string_view token) const {
  auto it = info_.find(std::string(token));
  return it == info_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// graph helpers

int MolGraph::bond_order_sum(std::size_t atom) const {
  int s = 0;
  for (const auto& b : bonds)
    if (b.a == atom || b.b == atom) s += b.order;
  return s;
}

std::size_t MolGraph::degree(std::size_t atom) const {
  std::size_t d = 0;
  for (const auto& b : bonds)
    if (b.a == atom || b.b == atom) ++d;
  return d;
}

std::vector<std::vector<std::pair<std::size_t, int>>> MolGraph::adjacency() const {
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(atoms.size());
  for (const auto& b : bonds) {
    if (b.a >= atoms.size() || b.b >= atoms.size()) continue;
    adj[b.a].emplace_back(b.b, b.order);
    adj[b.b].emplace_back(b.a, b.order);
  }
  return adj;
}

std::size_t MolGraph::component_count() const {
  const std::size_t n = atoms.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t comps = n;
  for (const auto& b : bonds) {
    if (b.a >= n || b.b >= n) continue;
    auto ra = find(b.a), rb = find(b.b);
    if (ra != rb) {
      parent[ra] = rb;
      --comps;
    }
  }
  return comps;
}

int MolGraph::bond_between(std::size_t a, std::size_t b) const {
  for (const auto& bd : bonds)
    if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) return bd.order;
  return 0;
}

// ---------------------------------------------------------------------------
// decoder

namespace {

struct RingRequest {
  std::size_t left;
  std::size_t right;
  int order;
};

class Derivation {
 public:
  Derivation(std::vector<std::pair<std::string, TokenInfo>> toks) : toks_(std::move(toks)) {}

  MolGraph run() {
    derive(std::nullopt, 0, std::numeric_limits<std::size_t>::max());
    if (pos_ < toks_.size())
      log("derivation terminated; " + std::to_string(toks_.size() - pos_) + " token(s) ignored");
    close_rings();
    for (std::size_t i = 0; i < g_.atoms.size(); ++i)
      g_.atoms[i].implicit_h = implicit_hydrogens(g_.atoms[i].element, load_[i]);
    return std::move(g_);
  }

 private:
  void log(std::string msg) { g_.derivation_log.push_back(std::move(msg)); }

  int read_index(int n) {
    int q = 0;
    for (int i = 0; i < n; ++i) {
      int digit = 0;
      if (pos_ < toks_.size()) {
        digit = index_digit(toks_[pos_].first);
        ++pos_;
      } else {
        log("index digit missing; read as 0");
      }
      q = q * 16 + digit;
    }
    return q;
  }

  std::size_t add_atom(Element e) {
    g_.atoms.push_back(Atom{e, 0, 0});
    load_.push_back(0);
    return g_.atoms.size() - 1;
  }

  void add_bond(std::size_t a, std::size_t b, int order) {
    g_.bonds.push_back(Bond{a, b, order});
    load_[a] += order;
    load_[b] += order;
  }

  // state: remaining bond capacity of prev; prev unset at the very start.
  void derive(std::optional<std::size_t> prev, int state, std::size_t max_derive) {
    std::size_t n_derived = 0;
    while (pos_ < toks_.size() && n_derived < max_derive) {
      if (prev && state == 0) break;
      const auto& [sym, info] = toks_[pos_];
      ++pos_;
      ++n_derived;
      switch (info.kind) {
        case TokenKind::Atom: {
          const int cap = bonding_capacity(info.element);
          const std::size_t idx = add_atom(info.element);
          if (!prev) {
            state = cap;
            log("atom " + sym + " starts chain");
          } else {
            const int order = std::min({info.bond_order, state, cap});
            if (order < info.bond_order) log("bond to " + sym + " clamped to order " + std::to_string(order));
            add_bond(*prev, idx, order);
            state = cap - order;
          }
          prev = idx;
          break;
        }
        case TokenKind::Branch: {
          if (!prev || state <= 1) {
            log("branch " + sym + " skipped (no capacity)");
            break;
          }
          const int q = read_index(info.index_len);
          const int binit = std::min(state - 1, info.bond_order);
          derive(prev, binit, static_cast<std::size_t>(q) + 1);
          state -= binit;
          break;
        }
        case TokenKind::Ring: {
          if (!prev) {
            log("ring " + sym + " skipped (no prior atom)");
            break;
          }
          const int q = read_index(info.index_len);
          const int order = std::min(info.bond_order, state);
          const std::size_t back = static_cast<std::size_t>(q) + 1;
          const std::size_t left = *prev >= back ? *prev - back : 0;
          rings_.push_back({left, *prev, order});
          state -= order;
          break;
        }
        case TokenKind::Special:
          break;
      }
    }
  }

  void close_rings() {
    for (const auto& r : rings_) {
      if (r.left == r.right) {
        log("ring to self skipped");
        continue;
      }
      const int lfree = bonding_capacity(g_.atoms[r.left].element) - load_[r.left];
      const int rfree = bonding_capacity(g_.atoms[r.right].element) - load_[r.right];
      if (lfree <= 0 || rfree <= 0) {
        log("ring " + std::to_string(r.left) + "-" + std::to_string(r.right) + " skipped (no capacity)");
        continue;
      }
      const int order = std::min({r.order, lfree, rfree});
      auto it = std::find_if(g_.bonds.begin(), g_.bonds.end(), [&](const Bond& b) {
        return (b.a == r.left && b.b == r.right) || (b.a == r.right && b.b == r.left);
      });
      if (it != g_.bonds.end()) {
        const int raised = std::min(it->order + order, 3);
        const int delta = raised - it->order;
        it->order = raised;
        load_[r.left] += delta;
        load_[r.right] += delta;
        log("ring on existing bond " + std::to_string(r.left) + "-" + std::to_string(r.right) +
            " raised order to " + std::to_string(raised));
      } else {
        add_bond(r.left, r.right, order);
        log("ring closed " + std::to_string(r.left) + "-" + std::to_string(r.right));
      }
    }
  }

  std::vector<std::pair<std::string, TokenInfo>> toks_;
  std::size_t pos_ = 0;
  MolGraph g_;
  std::vector<int> load_;
  std::vector<RingRequest> rings_;
};

}  // namespace

MolGraph decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::pair<std::string, TokenInfo>> toks;
  toks.reserve(seq.tokens.size());
  for (const auto& t : seq.tokens) {
    const TokenInfo* info = vocab.find(t);
    if (!info) throw Error(ErrorKind::UnknownToken, "token not in vocabulary: " + t);
    if (info->kind == TokenKind::Special) continue;
    toks.emplace_back(t, *info);
  }
  return Derivation(std::move(toks)).run();
}

bool is_sane(const MolGraph& g, SanityOptions opts) {
  const std::size_t n = g.atoms.size();
  std::vector<int> load(n, 0);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& b : g.bonds) {
    if (b.a >= n || b.b >= n || b.a == b.b) return false;
    if (b.order < 1 || b.order > 3) return false;
    if (!seen.emplace(std::min(b.a, b.b), std::max(b.a, b.b)).second) return false;
    load[b.a] += b.order;
    load[b.b] += b.order;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = g.atoms[i];
    if (a.charge != 0 || a.implicit_h < 0) return false;
    if (load[i] > bonding_capacity(a.element)) return false;
    if (!is_allowed_valence(a.element, load[i] + a.implicit_h)) return false;
  }
  if (!opts.allow_multi_fragment && n > 0 && g.component_count() != 1) return false;
  return true;
}

bool is_valid_molecule(const MolGraph& g) { return !g.atoms.empty() && is_sane(g); }

std::uint64_t canonical_hash(const MolGraph& g) {
  const std::size_t n = g.atoms.size();
  const auto adj = g.adjacency();
  std::vector<std::uint64_t> label(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t h = mix(0x5eed, static_cast<std::uint64_t>(g.atoms[i].element));
    h = mix(h, static_cast<std::uint64_t>(g.atoms[i].implicit_h));
    h = mix(h, adj[i].size());
    label[i] = h;
  }
  const std::size_t rounds = std::max<std::size_t>(n, 1);
  std::vector<std::uint64_t> next(n), nb;
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      nb.clear();
      for (auto [j, order] : adj[i]) nb.push_back(mix(static_cast<std::uint64_t>(order), label[j]));
      std::sort(nb.begin(), nb.end());
      std::uint64_t h = mix(label[i], nb.size());
      for (auto v : nb) h = mix(h, v);
      next[i] = h;
    }
    label.swap(next);
  }
  std::vector<std::uint64_t> sorted = label;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::uint64_t> bond_labels;
  for (const auto& b : g.bonds) {
    auto lo = std::min(label[b.a], label[b.b]), hi = std::max(label[b.a], label[b.b]);
    bond_labels.push_back(mix(mix(lo, hi), static_cast<std::uint64_t>(b.order)));
  }
  std::sort(bond_labels.begin(), bond_labels.end());
  std::uint64_t h = mix(mix(0xa70a5, n), g.bonds.size());
  for (auto v : sorted) h = mix(h, v);
  for (auto v : bond_labels) h = mix(h, v);
  return h;
}

std::string describe(const MolGraph& g) {
  std::ostringstream os;
  os << "atoms:";
  for (std::size_t i = 0; i < g.atoms.size(); ++i)
    os << ' ' << i << ':' << symbol(g.atoms[i].element) << "H" << g.atoms[i].implicit_h;
  os << "\nbonds:";
  for (const auto& b : g.bonds) os << ' ' << b.a << '-' << b.b << '(' << b.order << ')';
  os << '\n';
  return os.str();
}

}  // namespace latprobe::selfies
