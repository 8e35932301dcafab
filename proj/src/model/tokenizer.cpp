#include "url/model/tokenizer.hpp"

#include "url/errors.hpp"

namespace url::model {

std::vector<int> encode_bytes(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  return ids;
}

std::vector<int> encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(kBos);
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  ids.push_back(kEos);
  return ids;
}

std::string decode(std::span<const int> tokens) {
  std::string text;
  text.reserve(tokens.size());
  for (int id : tokens) {
    if (id < 0 || id >= kVocabSize) {
      throw DataError("decode: token id " + std::to_string(id) +
                      " outside vocabulary");
    }
    if (id < 256) text.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return text;
}

}  // namespace url::model
