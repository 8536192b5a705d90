// astkit/bpe.hpp

// Copyright 2026  astkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ASTKIT_BPE_HPP_
#define ASTKIT_BPE_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "astkit/common.hpp"

namespace astkit {
namespace text {

// Word-final marker; merges may absorb it so frequent full words become
// single subword units.
inline const std::string kEndOfWord = "</w>";

struct MergeTable {
  std::vector<std::pair<std::string, std::string>> merges;  // in learned order
  int n_merges() const { return static_cast<int>(merges.size()); }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary() : tokens_{"<pad>", "<bos>", "<eos>", "<unk>"} {
    for (int i = 0; i < kNumReserved; ++i) ids_[tokens_[i]] = i;
  }

  int add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    ids_[token] = id;
    return id;
  }

  // Lookup for real (non-reserved) tokens; reserved names resolve only to
  // their fixed ids, never via BPE symbols.
  std::optional<int> id_of(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end() || it->second < kNumReserved) return std::nullopt;
    return it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
      throw std::invalid_argument("Vocabulary: unknown id " + std::to_string(id));
    return tokens_[id];
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int n_real_tokens() const { return size() - kNumReserved; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TokenSequence {
  std::vector<int> ids;
  std::string utt_id;
};

namespace detail {

inline std::vector<std::uint32_t> utf8_decode(const std::string& s) {
  std::vector<std::uint32_t> cps;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::uint32_t cp = 0;
    std::size_t len = 1;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw std::invalid_argument("utf8_decode: invalid byte sequence");
    }
    if (i + len > s.size()) throw std::invalid_argument("utf8_decode: truncated sequence");
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) throw std::invalid_argument("utf8_decode: invalid continuation");
      cp = (cp << 6) | (b & 0x3F);
    }
    cps.push_back(cp);
    i += len;
  }
  return cps;
}

inline void utf8_append(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Precomposed tonal vowels (pinyin tones 1-4) -> base vowel.
inline std::optional<std::uint32_t> strip_tone(std::uint32_t cp) {
  struct Entry {
    std::uint32_t from, to;
  };
  static const Entry table[] = {
      {0x0101, 'a'}, {0x00E1, 'a'}, {0x01CE, 'a'}, {0x00E0, 'a'},  // a
      {0x0113, 'e'}, {0x00E9, 'e'}, {0x011B, 'e'}, {0x00E8, 'e'},  // e
      {0x012B, 'i'}, {0x00ED, 'i'}, {0x01D0, 'i'}, {0x00EC, 'i'},  // i
      {0x014D, 'o'}, {0x00F3, 'o'}, {0x01D2, 'o'}, {0x00F2, 'o'},  // o
      {0x016B, 'u'}, {0x00FA, 'u'}, {0x01D4, 'u'}, {0x00F9, 'u'},  // u
      {0x01D6, 0xFC}, {0x01D8, 0xFC}, {0x01DA, 0xFC}, {0x01DC, 0xFC},  // u-umlaut
  };
  for (const auto& e : table)
    if (e.from == cp) return e.to;
  return std::nullopt;
}

inline bool is_combining_tone_mark(std::uint32_t cp) {
  return cp == 0x0300 || cp == 0x0301 || cp == 0x0304 || cp == 0x030C;
}

inline std::uint32_t to_lower_cp(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  // Latin-1 supplement uppercase, excluding multiplication sign
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;
  return cp;
}

}  // namespace detail

// Lowercases, collapses whitespace, and optionally removes tone diacritics
// (both precomposed tonal vowels and combining tone marks).
inline std::string normalize_transcript(const std::string& text, bool strip_tone_diacritics) {
  const auto cps = detail::utf8_decode(text);
  std::string out;
  bool pending_space = false;
  bool at_start = true;
  for (std::uint32_t cp : cps) {
    if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r') {
      pending_space = !at_start;
      continue;
    }
    std::uint32_t c = detail::to_lower_cp(cp);
    if (strip_tone_diacritics) {
      if (detail::is_combining_tone_mark(c)) continue;
      if (auto base = detail::strip_tone(c)) c = *base;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    detail::utf8_append(out, c);
    at_start = false;
  }
  return out;
}

namespace detail {

inline std::vector<std::string> word_to_symbols(const std::string& word) {
  std::vector<std::string> symbols;
  for (std::uint32_t cp : utf8_decode(word)) {
    std::string s;
    utf8_append(s, cp);
    symbols.push_back(std::move(s));
  }
  symbols.push_back(kEndOfWord);
  return symbols;
}

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// One left-to-right pass replacing occurrences of the pair; after a merge the
// scan continues past the new symbol, so "aaa" + (a,a) gives [aa, a].
inline void apply_merge(std::vector<std::string>& symbols,
                        const std::pair<std::string, std::string>& pair) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  std::size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(symbols[i] + symbols[i + 1]);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      ++i;
    }
  }
  symbols = std::move(out);
}

}  // namespace detail

// Greedy most-frequent-pair merges within word boundaries. Pair counts are
// per adjacent position weighted by word frequency; ties break to the
// lexicographically smallest pair.
inline MergeTable learn_bpe(const std::vector<std::string>& corpus, int n_merges) {
  check_arg(!corpus.empty(), "learn_bpe: empty corpus");
  check_arg(n_merges >= 0, "learn_bpe: n_merges must be >= 0");

  std::map<std::vector<std::string>, std::int64_t> words;
  for (const auto& line : corpus)
    for (const auto& w : detail::split_words(line)) ++words[detail::word_to_symbols(w)];

  MergeTable table;
  for (int m = 0; m < n_merges; ++m) {
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    for (const auto& [symbols, freq] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
        counts[{symbols[i], symbols[i + 1]}] += freq;
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = std::next(counts.begin()); it != counts.end(); ++it)
      if (it->second > best->second) best = it;  // std::map order = lexicographic tie-break
    const auto pair = best->first;
    std::map<std::vector<std::string>, std::int64_t> next;
    for (const auto& [symbols, freq] : words) {
      auto merged = symbols;
      detail::apply_merge(merged, pair);
      next[merged] += freq;
    }
    words = std::move(next);
    table.merges.push_back(pair);
  }
  return table;
}

// Segments one word with the merge table applied in learned order.
inline std::vector<std::string> segment_word(const std::string& word, const MergeTable& table) {
  auto symbols = detail::word_to_symbols(word);
  for (const auto& pair : table.merges) detail::apply_merge(symbols, pair);
  return symbols;
}

// Vocabulary of every subword the table produces on the given corpus, ids
// assigned in sorted order after the reserved block.
inline Vocabulary make_vocabulary(const std::vector<std::string>& corpus, const MergeTable& table) {
  std::vector<std::string> seen;
  for (const auto& line : corpus)
    for (const auto& w : detail::split_words(line))
      for (auto& s : segment_word(w, table)) seen.push_back(std::move(s));
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  Vocabulary vocab;
  for (const auto& s : seen) vocab.add(s);
  return vocab;
}

// Subword ids for normalized text; symbols outside the vocabulary map to unk.
inline TokenSequence apply_bpe(const std::string& text, const MergeTable& table,
                               const Vocabulary& vocab) {
  TokenSequence seq;
  for (const auto& w : detail::split_words(text)) {
    for (const auto& s : segment_word(w, table)) {
      const auto id = vocab.id_of(s);
      seq.ids.push_back(id ? *id : Vocabulary::kUnk);
    }
  }
  return seq;
}

// Inverse of apply_bpe: concatenates subwords, restores word-final markers to
// spaces, stops at the first eos. pad/bos are skipped; unk renders literally.
inline std::string decode_bpe(const TokenSequence& tokens, const Vocabulary& vocab) {
  std::string joined;
  for (int id : tokens.ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    joined += vocab.token_of(id);  // throws on unknown id
  }
  std::string out;
  std::size_t i = 0;
  while (i < joined.size()) {
    if (joined.compare(i, kEndOfWord.size(), kEndOfWord) == 0) {
      out.push_back(' ');
      i += kEndOfWord.size();
    } else {
      out.push_back(joined[i]);
      ++i;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline const std::string kMergesFileTag = "astkit-bpe v1";

inline void save_merges(const std::string& path, const MergeTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_merges: cannot open " + path);
  out << kMergesFileTag << '\n';
  for (const auto& [l, r] : table.merges) out << l << ' ' << r << '\n';
  if (!out) throw std::runtime_error("save_merges: write failed " + path);
}

inline MergeTable load_merges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_merges: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMergesFileTag)
    throw std::runtime_error("load_merges: bad version tag in " + path);
  MergeTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos)
      throw std::runtime_error("load_merges: malformed line in " + path);
    table.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return table;
}

inline void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_vocabulary: cannot open " + path);
  for (int id = 0; id < vocab.size(); ++id) out << vocab.token_of(id) << '\t' << id << '\n';
  if (!out) throw std::runtime_error("save_vocabulary: write failed " + path);
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vocabulary: cannot open " + path);
  Vocabulary vocab;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("load_vocabulary: malformed line in " + path);
    const std::string token = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (lineno < Vocabulary::kNumReserved) {
      if (id != lineno || token != vocab.token_of(id))
        throw std::runtime_error("load_vocabulary: reserved block mismatch in " + path);
    } else {
      const int got = vocab.add(token);
      if (got != id)
        throw std::runtime_error("load_vocabulary: non-contiguous ids in " + path);
    }
    ++lineno;
  }
  return vocab;
}

}  // namespace text
}  // namespace astkit

#endif  // ASTKIT_BPE_HPP_
