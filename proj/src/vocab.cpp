#include "emdr/vocab.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace emdr {

Vocabulary Vocabulary::with_reserved() {
  Vocabulary v;
  v.add("[CLS]");
  v.add("[SEP]");
  v.add("[MASK]");
  v.add("[EOS]");
  v.add("[PAD]");
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_[token] = id;
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end())
    throw std::invalid_argument("vocabulary: unknown token '" + token + "'");
  return it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw std::invalid_argument("vocabulary: id out of range " +
                                std::to_string(id));
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::decode_string(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("vocabulary: cannot open " + path);
  for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("vocabulary: cannot open " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) v.add(line);
  if (v.size() < 5 || v.token(kCls) != "[CLS]" || v.token(kPad) != "[PAD]")
    throw std::runtime_error("vocabulary: reserved tokens missing in " + path);
  return v;
}

}  // namespace emdr
