#ifndef ZSNMT_VOCAB_HPP
#define ZSNMT_VOCAB_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "zsnmt/common.hpp"

namespace zsnmt {

// Shared token id space: specials, then one <2xx> tag per language, then one
// disjoint surface block of `surface_size` tokens per language.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kMask = 3;
    static constexpr int kNumSpecials = 4;

    Vocab() = default;
    Vocab(const std::vector<std::string>& languages, int surface_size);

    int size() const { return static_cast<int>(tokens_.size()); }
    int surface_size() const { return surface_size_; }
    const std::vector<std::string>& languages() const { return languages_; }

    int tag_id(const std::string& lang) const;
    int surface_base(const std::string& lang) const;
    int surface_id(const std::string& lang, int slot) const { return surface_base(lang) + slot; }

    bool is_special(int id) const { return id < kNumSpecials; }
    bool is_tag(int id) const { return id >= kNumSpecials && id < kNumSpecials + n_langs(); }
    bool is_surface(int id) const { return id >= kNumSpecials + n_langs() && id < size(); }

    // Language owning a surface token; empty string for non-surface ids.
    const std::string& lang_of(int id) const;

    const std::string& token(int id) const;
    int id(const std::string& token) const;

private:
    int n_langs() const { return static_cast<int>(languages_.size()); }

    std::vector<std::string> languages_;
    int surface_size_ = 0;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    static const std::string kEmpty;
};

}  // namespace zsnmt

#endif
