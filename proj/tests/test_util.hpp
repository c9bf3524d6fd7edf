#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "snob/corpus.hpp"
#include "snob/text_features.hpp"

namespace testutil {

// Scratch directory wiped on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("snob-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline snob::Biography bio(const std::string& id, const std::string& occupation,
                           snob::PronounGroup group, const std::string& text) {
  snob::Biography b;
  b.id = id;
  b.occupation = occupation;
  b.group = group;
  b.tokens = snob::tokenize(text);
  return b;
}

// A tiny embedding file body: "word v1 .. vd" lines.
inline std::string embedding_lines(
    const std::vector<std::pair<std::string, std::vector<double>>>& rows,
    bool header = false) {
  std::string out;
  if (header && !rows.empty()) {
    out += std::to_string(rows.size()) + " " +
           std::to_string(rows.front().second.size()) + "\n";
  }
  for (const auto& [word, vec] : rows) {
    out += word;
    for (double v : vec) out += " " + std::to_string(v);
    out += "\n";
  }
  return out;
}

}  // namespace testutil
