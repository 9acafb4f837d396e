#include "zsnmt/vocab.hpp"

namespace zsnmt {

const std::string Vocab::kEmpty;

Vocab::Vocab(const std::vector<std::string>& languages, int surface_size)
    : languages_(languages), surface_size_(surface_size) {
    tokens_ = {"<pad>", "<s>", "</s>", "<mask>"};
    for (const auto& lang : languages_) tokens_.push_back("<2" + lang + ">");
    for (const auto& lang : languages_)
        for (int s = 0; s < surface_size_; ++s) tokens_.push_back(lang + ":" + std::to_string(s));
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) index_[tokens_[i]] = i;
}

int Vocab::tag_id(const std::string& lang) const {
    for (int i = 0; i < n_langs(); ++i)
        if (languages_[i] == lang) return kNumSpecials + i;
    throw ConfigError("unknown language tag: " + lang);
}

int Vocab::surface_base(const std::string& lang) const {
    for (int i = 0; i < n_langs(); ++i)
        if (languages_[i] == lang) return kNumSpecials + n_langs() + i * surface_size_;
    throw ConfigError("unknown language: " + lang);
}

const std::string& Vocab::lang_of(int id) const {
    if (!is_surface(id)) return kEmpty;
    const int block = (id - kNumSpecials - n_langs()) / surface_size_;
    return languages_[block];
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
    return tokens_[id];
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw DataError("unknown token: " + token);
    return it->second;
}

}  // namespace zsnmt
