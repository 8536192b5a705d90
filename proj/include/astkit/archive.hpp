// astkit/archive.hpp

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

#ifndef ASTKIT_ARCHIVE_HPP_
#define ASTKIT_ARCHIVE_HPP_

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "astkit/audio.hpp"
#include "astkit/common.hpp"

namespace astkit {
namespace io {

static_assert(std::endian::native == std::endian::little,
              "feature archives are little-endian; big-endian hosts unsupported");

// Feature archive: per-utterance binary records plus a plain-text index of
// byte offsets. Record: u32 id length, id bytes, u32 T, u32 D, then T*D
// float32 values frame by frame.
class ArchiveWriter {
 public:
  explicit ArchiveWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("ArchiveWriter: cannot open " + path);
  }

  void write(const audio::FeatureSequence& feats) {
    feats.validate();
    if (index_.count(feats.utt_id))
      throw std::invalid_argument("ArchiveWriter: duplicate utt_id " + feats.utt_id);
    index_[feats.utt_id] = static_cast<std::uint64_t>(out_.tellp());
    order_.push_back(feats.utt_id);
    const auto id_len = static_cast<std::uint32_t>(feats.utt_id.size());
    const auto t = static_cast<std::uint32_t>(feats.n_frames());
    const auto d = static_cast<std::uint32_t>(feats.dim());
    out_.write(reinterpret_cast<const char*>(&id_len), 4);
    out_.write(feats.utt_id.data(), id_len);
    out_.write(reinterpret_cast<const char*>(&t), 4);
    out_.write(reinterpret_cast<const char*>(&d), 4);
    // column-major D x T storage lays frames out consecutively
    out_.write(reinterpret_cast<const char*>(feats.frames.data()),
               static_cast<std::streamsize>(sizeof(float) * feats.frames.size()));
    if (!out_) throw std::runtime_error("ArchiveWriter: write failed for " + feats.utt_id);
  }

  // Writes the utt_id -> byte offset index beside the archive.
  void finish() {
    out_.flush();
    std::ofstream idx(path_ + ".idx");
    if (!idx) throw std::runtime_error("ArchiveWriter: cannot open " + path_ + ".idx");
    for (const auto& id : order_) idx << id << '\t' << index_.at(id) << '\n';
    if (!idx) throw std::runtime_error("ArchiveWriter: index write failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::map<std::string, std::uint64_t> index_;
  std::vector<std::string> order_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("ArchiveReader: cannot open " + path);
    std::ifstream idx(path + ".idx");
    if (!idx) throw std::runtime_error("ArchiveReader: cannot open " + path + ".idx");
    std::string id;
    std::uint64_t off;
    while (idx >> id >> off) {
      index_[id] = off;
      order_.push_back(id);
    }
  }

  const std::vector<std::string>& utt_ids() const { return order_; }
  bool contains(const std::string& utt_id) const { return index_.count(utt_id) > 0; }

  audio::FeatureSequence read(const std::string& utt_id) {
    auto it = index_.find(utt_id);
    if (it == index_.end())
      throw std::invalid_argument("ArchiveReader: utt_id not in index: " + utt_id);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(it->second));
    std::uint32_t id_len = 0;
    in_.read(reinterpret_cast<char*>(&id_len), 4);
    std::string id(id_len, '\0');
    in_.read(id.data(), id_len);
    if (id != utt_id)
      throw std::runtime_error("ArchiveReader: index/record mismatch at " + utt_id);
    std::uint32_t t = 0, d = 0;
    in_.read(reinterpret_cast<char*>(&t), 4);
    in_.read(reinterpret_cast<char*>(&d), 4);
    audio::FeatureSequence feats;
    feats.utt_id = utt_id;
    feats.frames.resize(d, t);
    in_.read(reinterpret_cast<char*>(feats.frames.data()),
             static_cast<std::streamsize>(sizeof(float) * feats.frames.size()));
    if (!in_) throw std::runtime_error("ArchiveReader: truncated record for " + utt_id);
    return feats;
  }

 private:
  std::ifstream in_;
  std::map<std::string, std::uint64_t> index_;
  std::vector<std::string> order_;
};

}  // namespace io
}  // namespace astkit

#endif  // ASTKIT_ARCHIVE_HPP_
