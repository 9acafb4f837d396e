#include "zsnmt/synthlang.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace zsnmt {

using nlohmann::json;

std::vector<int> Reorder::apply(const std::vector<int>& in) const {
    const int n = static_cast<int>(in.size());
    std::vector<int> out(in.size());
    switch (kind) {
        case ReorderKind::Identity:
            out = in;
            break;
        case ReorderKind::Reverse:
            for (int i = 0; i < n; ++i) out[i] = in[n - 1 - i];
            break;
        case ReorderKind::AdjacentSwap:
            out = in;
            for (int i = 0; i + 1 < n; i += 2) std::swap(out[i], out[i + 1]);
            break;
        case ReorderKind::Rotate:
            for (int i = 0; i < n; ++i) out[i] = in[(i + k) % n];
            break;
    }
    return out;
}

std::string Reorder::name() const {
    switch (kind) {
        case ReorderKind::Identity: return "identity";
        case ReorderKind::Reverse: return "reverse";
        case ReorderKind::AdjacentSwap: return "adjacent-swap";
        case ReorderKind::Rotate: return "rotate(" + std::to_string(k) + ")";
    }
    return "identity";
}

Reorder Reorder::parse(const std::string& name) {
    if (name == "identity") return {ReorderKind::Identity, 0};
    if (name == "reverse") return {ReorderKind::Reverse, 0};
    if (name == "adjacent-swap") return {ReorderKind::AdjacentSwap, 0};
    if (name.rfind("rotate(", 0) == 0 && name.back() == ')')
        return {ReorderKind::Rotate, std::stoi(name.substr(7, name.size() - 8))};
    throw DataError("unknown reorder rule: " + name);
}

const LanguageSpec& CorpusBundle::spec_of(const std::string& lang) const {
    for (const auto& spec : languages)
        if (spec.lang_id == lang) return spec;
    throw ConfigError("language not in bundle: " + lang);
}

std::vector<SemanticSeq> gen_semantic(std::uint64_t rng_seed, int count, int len_min, int len_max,
                                      int v_sem) {
    if (len_min < 1 || len_min > len_max) throw ConfigError("invalid semantic length range");
    if (count < 1) throw ConfigError("semantic sequence count must be >= 1");
    if (v_sem < 1) throw ConfigError("semantic vocabulary must be non-empty");
    Rng rng(rng_seed);
    std::vector<SemanticSeq> out(count);
    for (int i = 0; i < count; ++i) {
        const int len = static_cast<int>(rng.range(len_min, len_max));
        out[i].tokens.resize(len);
        for (int t = 0; t < len; ++t) out[i].tokens[t] = static_cast<int>(rng.below(v_sem));
    }
    return out;
}

std::vector<int> realize(const SemanticSeq& sem, const LanguageSpec& lang, const Vocab& vocab) {
    const int base = vocab.surface_base(lang.lang_id);
    std::vector<int> surface(sem.tokens.size());
    for (std::size_t i = 0; i < sem.tokens.size(); ++i) {
        const int s = sem.tokens[i];
        if (s < 0 || s >= static_cast<int>(lang.cipher.size()))
            throw DataError("semantic symbol outside cipher domain: " + std::to_string(s));
        surface[i] = base + lang.cipher[s];
    }
    return lang.reorder.apply(surface);
}

SemanticSeq unrealize(const std::vector<int>& surface, const LanguageSpec& lang, const Vocab& vocab) {
    const int base = vocab.surface_base(lang.lang_id);
    std::vector<int> inverse(lang.cipher.size());
    for (int s = 0; s < static_cast<int>(lang.cipher.size()); ++s) inverse[lang.cipher[s]] = s;

    // The reorders used here are involutions except rotation; undo by index map.
    const int n = static_cast<int>(surface.size());
    std::vector<int> unordered(n);
    switch (lang.reorder.kind) {
        case ReorderKind::Identity:
        case ReorderKind::Reverse:
        case ReorderKind::AdjacentSwap:
            unordered = lang.reorder.apply(surface);
            break;
        case ReorderKind::Rotate:
            for (int i = 0; i < n; ++i) unordered[(i + lang.reorder.k) % n] = surface[i];
            break;
    }
    SemanticSeq sem;
    sem.tokens.resize(n);
    for (int i = 0; i < n; ++i) {
        const int slot = unordered[i] - base;
        if (slot < 0 || slot >= static_cast<int>(inverse.size()))
            throw DataError("surface token outside language block");
        sem.tokens[i] = inverse[slot];
    }
    return sem;
}

namespace {

Reorder reorder_for(int non_english_index) {
    switch (non_english_index) {
        case 0: return {ReorderKind::Reverse, 0};
        case 1: return {ReorderKind::AdjacentSwap, 0};
        default: return {ReorderKind::Rotate, non_english_index};
    }
}

ParallelExample make_example(const SemanticSeq& sem, const LanguageSpec& src,
                             const LanguageSpec& tgt, const Vocab& vocab) {
    ParallelExample ex;
    ex.src_lang = src.lang_id;
    ex.tgt_lang = tgt.lang_id;
    ex.src.push_back(vocab.tag_id(tgt.lang_id));
    const auto src_surface = realize(sem, src, vocab);
    ex.src.insert(ex.src.end(), src_surface.begin(), src_surface.end());
    ex.tgt = realize(sem, tgt, vocab);
    return ex;
}

}  // namespace

CorpusBundle build_corpus(const CorpusConfig& config) {
    if (config.languages.size() < 3)
        throw ConfigError("need English plus at least two other languages");
    bool has_en = false;
    for (const auto& l : config.languages) has_en |= (l == "en");
    if (!has_en) throw ConfigError("language list must include \"en\"");

    CorpusBundle bundle;
    bundle.config = config;
    bundle.seed = config.seed;

    // "en" first, then the others in the given order.
    std::vector<std::string> langs = {"en"};
    for (const auto& l : config.languages)
        if (l != "en") langs.push_back(l);
    bundle.vocab = Vocab(langs, config.v_sem);

    Rng rng(config.seed);
    int non_en = 0;
    for (const auto& l : langs) {
        LanguageSpec spec;
        spec.lang_id = l;
        spec.cipher.resize(config.v_sem);
        std::iota(spec.cipher.begin(), spec.cipher.end(), 0);
        rng.shuffle(spec.cipher);
        spec.reorder = (l == "en") ? Reorder{ReorderKind::Identity, 0} : reorder_for(non_en++);
        bundle.languages.push_back(spec);
    }

    const auto& en = bundle.spec_of("en");
    std::uint64_t stream = 0;
    auto fill = [&](const std::string& src, const std::string& tgt, int count,
                    std::vector<ParallelExample>& out) {
        const auto sems = gen_semantic(rng.fork(++stream).seed(), count, config.len_min,
                                       config.len_max, config.v_sem);
        const auto& src_spec = bundle.spec_of(src);
        const auto& tgt_spec = bundle.spec_of(tgt);
        for (const auto& sem : sems) out.push_back(make_example(sem, src_spec, tgt_spec, bundle.vocab));
    };

    // Train: English-centric ordered directions only.
    for (const auto& spec : bundle.languages) {
        if (spec.lang_id == "en") continue;
        fill(spec.lang_id, "en", config.train_per_direction, bundle.train);
        fill("en", spec.lang_id, config.train_per_direction, bundle.train);
    }

    // Dev/test: every ordered direction, zero-shot ones included.
    for (const auto& a : bundle.languages) {
        for (const auto& b : bundle.languages) {
            if (a.lang_id == b.lang_id) continue;
            const auto key = CorpusBundle::dir_key(a.lang_id, b.lang_id);
            fill(a.lang_id, b.lang_id, config.dev_per_direction, bundle.dev[key]);
            fill(a.lang_id, b.lang_id, config.test_per_direction, bundle.test[key]);
        }
    }
    (void)en;
    return bundle;
}

namespace {

void write_split(std::ofstream& out, const std::vector<ParallelExample>& examples,
                 const Vocab& vocab) {
    for (const auto& ex : examples) {
        out << ex.src_lang << '\t' << ex.tgt_lang << '\t';
        for (std::size_t i = 0; i < ex.src.size(); ++i)
            out << (i ? " " : "") << vocab.token(ex.src[i]);
        out << '\t';
        for (std::size_t i = 0; i < ex.tgt.size(); ++i)
            out << (i ? " " : "") << vocab.token(ex.tgt[i]);
        out << '\n';
    }
}

std::vector<int> parse_tokens(const std::string& field, const Vocab& vocab) {
    std::vector<int> ids;
    std::istringstream ss(field);
    std::string tok;
    while (ss >> tok) ids.push_back(vocab.id(tok));
    return ids;
}

void read_split(const std::string& path, const Vocab& vocab,
                const std::function<void(ParallelExample&&)>& sink) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> fields;
        std::size_t start = 0;
        for (int f = 0; f < 4; ++f) {
            const auto tab = line.find('\t', start);
            if (f < 3 && tab == std::string::npos) throw DataError("malformed corpus record: " + line);
            fields[f] = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
            start = tab + 1;
        }
        ParallelExample ex;
        ex.src_lang = fields[0];
        ex.tgt_lang = fields[1];
        ex.src = parse_tokens(fields[2], vocab);
        ex.tgt = parse_tokens(fields[3], vocab);
        sink(std::move(ex));
    }
}

}  // namespace

void save_corpus(const CorpusBundle& bundle, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/train.tsv");
        write_split(out, bundle.train, bundle.vocab);
    }
    for (const char* split : {"dev", "test"}) {
        std::ofstream out(dir + "/" + split + ".tsv");
        const auto& sets = std::string(split) == "dev" ? bundle.dev : bundle.test;
        for (const auto& [key, examples] : sets) write_split(out, examples, bundle.vocab);
    }

    json meta;
    meta["seed"] = bundle.seed;
    meta["config"] = {{"languages", bundle.config.languages},
                      {"v_sem", bundle.config.v_sem},
                      {"len_min", bundle.config.len_min},
                      {"len_max", bundle.config.len_max},
                      {"train_per_direction", bundle.config.train_per_direction},
                      {"dev_per_direction", bundle.config.dev_per_direction},
                      {"test_per_direction", bundle.config.test_per_direction}};
    meta["languages"] = json::array();
    for (const auto& spec : bundle.languages)
        meta["languages"].push_back(
            {{"lang_id", spec.lang_id}, {"cipher", spec.cipher}, {"reorder", spec.reorder.name()}});
    std::vector<std::string> vocab_table;
    for (int i = 0; i < bundle.vocab.size(); ++i) vocab_table.push_back(bundle.vocab.token(i));
    meta["vocab"] = vocab_table;
    std::ofstream out(dir + "/meta.json");
    out << meta.dump(2) << '\n';
}

CorpusBundle load_corpus(const std::string& dir) {
    std::ifstream meta_in(dir + "/meta.json");
    if (!meta_in) throw DataError("cannot open " + dir + "/meta.json");
    json meta = json::parse(meta_in);

    CorpusBundle bundle;
    bundle.seed = meta["seed"].get<std::uint64_t>();
    const auto& jc = meta["config"];
    bundle.config.languages = jc["languages"].get<std::vector<std::string>>();
    bundle.config.v_sem = jc["v_sem"].get<int>();
    bundle.config.len_min = jc["len_min"].get<int>();
    bundle.config.len_max = jc["len_max"].get<int>();
    bundle.config.train_per_direction = jc["train_per_direction"].get<int>();
    bundle.config.dev_per_direction = jc["dev_per_direction"].get<int>();
    bundle.config.test_per_direction = jc["test_per_direction"].get<int>();
    bundle.config.seed = bundle.seed;

    std::vector<std::string> langs;
    for (const auto& jl : meta["languages"]) {
        LanguageSpec spec;
        spec.lang_id = jl["lang_id"].get<std::string>();
        spec.cipher = jl["cipher"].get<std::vector<int>>();
        spec.reorder = Reorder::parse(jl["reorder"].get<std::string>());
        bundle.languages.push_back(spec);
        langs.push_back(spec.lang_id);
    }
    bundle.vocab = Vocab(langs, bundle.config.v_sem);

    // Sanity: the stored vocab table must match the reconstruction.
    const auto stored = meta["vocab"].get<std::vector<std::string>>();
    if (static_cast<int>(stored.size()) != bundle.vocab.size())
        throw DataError("vocab table size mismatch in meta.json");
    for (int i = 0; i < bundle.vocab.size(); ++i)
        if (stored[i] != bundle.vocab.token(i)) throw DataError("vocab table mismatch in meta.json");

    read_split(dir + "/train.tsv", bundle.vocab,
               [&](ParallelExample&& ex) { bundle.train.push_back(std::move(ex)); });
    read_split(dir + "/dev.tsv", bundle.vocab, [&](ParallelExample&& ex) {
        bundle.dev[CorpusBundle::dir_key(ex.src_lang, ex.tgt_lang)].push_back(std::move(ex));
    });
    read_split(dir + "/test.tsv", bundle.vocab, [&](ParallelExample&& ex) {
        bundle.test[CorpusBundle::dir_key(ex.src_lang, ex.tgt_lang)].push_back(std::move(ex));
    });
    return bundle;
}

}  // namespace zsnmt
