// astkit/manifest.hpp

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

#ifndef ASTKIT_MANIFEST_HPP_
#define ASTKIT_MANIFEST_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "astkit/common.hpp"

namespace astkit {
namespace io {

constexpr int kMaxTranslationRefs = 4;

struct ManifestRow {
  std::string utt_id;
  std::string path;  // feature archive or audio file
  std::string speaker_id;
  double duration = 0.0;  // seconds
  std::string transcript;
  std::vector<std::string> translations;  // 0..4 reference translations
};

struct Manifest {
  std::vector<ManifestRow> rows;

  double total_seconds() const {
    return std::accumulate(rows.begin(), rows.end(), 0.0,
                           [](double acc, const ManifestRow& r) { return acc + r.duration; });
  }

  int n_translation_columns() const {
    std::size_t n = 0;
    for (const auto& r : rows) n = std::max(n, r.translations.size());
    return static_cast<int>(n);
  }
};

namespace detail {

inline std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline void check_tsv_safe(const std::string& s, const std::string& what) {
  if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos)
    throw std::invalid_argument("manifest: " + what + " contains tab or newline");
}

}  // namespace detail

// Tab-separated with a header row. Columns: utt_id, path, speaker_id,
// duration, transcript, then translation_1..translation_k (k <= 4).
inline Manifest load_manifest(const std::string& path, bool check_files = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_manifest: empty file " + path);
  const auto header = detail::split_tsv(line);
  if (header.size() < 5 || header[0] != "utt_id")
    throw std::runtime_error("load_manifest: bad header in " + path);

  Manifest m;
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tsv(line);
    if (f.size() < 5)
      throw std::runtime_error("load_manifest: line " + std::to_string(lineno) + ": too few fields");
    ManifestRow r;
    r.utt_id = f[0];
    r.path = f[1];
    r.speaker_id = f[2];
    r.duration = std::stod(f[3]);
    r.transcript = f[4];
    for (std::size_t i = 5; i < f.size() && i < 5 + kMaxTranslationRefs; ++i)
      if (!f[i].empty()) r.translations.push_back(f[i]);
    if (!seen.insert(r.utt_id).second)
      throw std::invalid_argument("load_manifest: duplicate utt_id " + r.utt_id);
    if (check_files && !std::filesystem::exists(r.path))
      throw std::runtime_error("load_manifest: missing file " + r.path + " for " + r.utt_id);
    m.rows.push_back(std::move(r));
  }
  return m;
}

inline void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
  const int n_trans = m.n_translation_columns();
  out << "utt_id\tpath\tspeaker_id\tduration\ttranscript";
  for (int i = 1; i <= n_trans; ++i) out << "\ttranslation_" << i;
  out << '\n';
  for (const auto& r : m.rows) {
    detail::check_tsv_safe(r.utt_id, "utt_id");
    detail::check_tsv_safe(r.transcript, "transcript");
    out << r.utt_id << '\t' << r.path << '\t' << r.speaker_id << '\t' << r.duration << '\t'
        << r.transcript;
    for (int i = 0; i < n_trans; ++i) {
      out << '\t';
      if (i < static_cast<int>(r.translations.size())) {
        detail::check_tsv_safe(r.translations[i], "translation");
        out << r.translations[i];
      }
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_manifest: write failed " + path);
}

// Random subset whose duration lands within one utterance of target_hours.
// Rows come back sorted by utt_id; deterministic per seed.
inline Manifest downsample_manifest(const Manifest& m, double target_hours, std::uint64_t seed) {
  const double target_seconds = target_hours * 3600.0;
  const double total = m.total_seconds();
  check_arg(target_seconds <= total + 1e-9,
            "downsample_manifest: target exceeds total duration");
  std::vector<std::size_t> order(m.rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(split_seed(seed, "downsample_manifest"));
  std::shuffle(order.begin(), order.end(), rng);
  Manifest out;
  double acc = 0.0;
  for (std::size_t idx : order) {
    if (acc >= target_seconds - 1e-9) break;
    out.rows.push_back(m.rows[idx]);
    acc += m.rows[idx].duration;
  }
  std::sort(out.rows.begin(), out.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.utt_id < b.utt_id; });
  return out;
}

}  // namespace io
}  // namespace astkit

#endif  // ASTKIT_MANIFEST_HPP_
