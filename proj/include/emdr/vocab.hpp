#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace emdr {

// Word-level vocabulary with fixed reserved ids 0-4.
class Vocabulary {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kMask = 2;
  static constexpr int kEos = 3;
  static constexpr int kPad = 4;

  static Vocabulary with_reserved();

  int add(const std::string& token);  // idempotent, returns id
  int id(const std::string& token) const;  // throws on unknown token
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
  std::string decode_string(const std::vector<int>& ids) const;

  void save(const std::string& path) const;  // one token per line
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace emdr
