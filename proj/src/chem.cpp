#include "armor/chem.hpp"

#include <algorithm>
#include <bit>

#include <nlohmann/json.hpp>

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool is_organic_single(char c) {
    switch (c) {
        case 'B': case 'C': case 'N': case 'O': case 'S': case 'P':
        case 'F': case 'I': case 'H':
        case 'b': case 'c': case 'n': case 'o': case 's': case 'p':
        case '*':
            return true;
        default:
            return false;
    }
}

bool is_bond(char c) {
    switch (c) {
        case '-': case '=': case '#': case '$': case ':': case '/': case '\\':
            return true;
        default:
            return false;
    }
}

}  // namespace

TokenStream tokenize_smiles(std::string_view s) {
    if (s.empty()) throw Error("EmptyInput", "empty SMILES string");
    TokenStream out;
    int depth = 0;
    size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == '[') {
            size_t close = s.find(']', i);
            if (close == std::string_view::npos)
                throw Error("UnterminatedBracket",
                            "unterminated bracket atom at position " + std::to_string(i));
            out.tokens.emplace_back(s.substr(i, close - i + 1));
            i = close + 1;
            continue;
        }
        // Two-letter organic-subset elements take precedence over B/C.
        if ((c == 'C' || c == 'B') && i + 1 < s.size()) {
            char d = s[i + 1];
            if ((c == 'C' && d == 'l') || (c == 'B' && d == 'r')) {
                out.tokens.emplace_back(s.substr(i, 2));
                i += 2;
                continue;
            }
        }
        if (is_organic_single(c)) {
            out.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        if (c >= '0' && c <= '9') {
            out.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        if (c == '%') {
            // Two-digit ring closure, e.g. %12.
            if (i + 2 >= s.size() || !isdigit(static_cast<unsigned char>(s[i + 1])) ||
                !isdigit(static_cast<unsigned char>(s[i + 2])))
                throw Error("UnknownCharacter",
                            "bad ring closure at position " + std::to_string(i));
            out.tokens.emplace_back(s.substr(i, 3));
            i += 3;
            continue;
        }
        if (is_bond(c)) {
            out.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        if (c == '(') {
            ++depth;
            out.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        if (c == ')') {
            if (--depth < 0)
                throw Error("UnbalancedParenthesis",
                            "unmatched ')' at position " + std::to_string(i));
            out.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        if (c == '.') {
            out.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        throw Error("UnknownCharacter", std::string("unknown character '") + c +
                                            "' at position " + std::to_string(i));
    }
    if (depth != 0) throw Error("UnbalancedParenthesis", "unclosed '(' in SMILES");
    return out;
}

int Fingerprint::popcount() const {
    int n = 0;
    for (uint64_t w : words) n += std::popcount(w);
    return n;
}

Fingerprint make_fingerprint(int width) {
    if (width <= 0 || width % 64 != 0)
        throw Error("SpecInvalid", "fingerprint width must be a positive multiple of 64");
    Fingerprint fp;
    fp.width = width;
    fp.words.assign(static_cast<size_t>(width) / 64, 0);
    return fp;
}

namespace {

void side_shingles(const std::string& smiles, int n_max, std::set<std::string>& out) {
    TokenStream ts = tokenize_smiles(smiles);
    const auto& toks = ts.tokens;
    for (int n = 1; n <= n_max; ++n) {
        if (static_cast<size_t>(n) > toks.size()) break;
        for (size_t i = 0; i + n <= toks.size(); ++i) {
            std::string sh = std::to_string(n);
            sh += ':';
            for (int j = 0; j < n; ++j) {
                if (j) sh += ' ';
                sh += toks[i + j];
            }
            out.insert(std::move(sh));
        }
    }
}

}  // namespace

std::set<std::string> reaction_shingles(const Reaction& r, int n_max) {
    std::set<std::string> lhs, rhs;
    side_shingles(r.reactants, n_max, lhs);
    side_shingles(r.product, n_max, rhs);
    std::set<std::string> diff;
    std::set_symmetric_difference(lhs.begin(), lhs.end(), rhs.begin(), rhs.end(),
                                  std::inserter(diff, diff.begin()));
    return diff;
}

Fingerprint fingerprint(const Reaction& r, const FingerprintConfig& cfg) {
    Fingerprint fp = make_fingerprint(cfg.width);
    for (const auto& sh : reaction_shingles(r, cfg.n_max)) {
        uint64_t h = fnv1a64(sh, kFingerprintSeed);
        fp.set(static_cast<int>(h % static_cast<uint64_t>(cfg.width)));
    }
    return fp;
}

int hamming_distance(const Fingerprint& a, const Fingerprint& b) {
    if (a.width != b.width)
        throw Error("WidthMismatch", "fingerprint widths differ: " + std::to_string(a.width) +
                                         " vs " + std::to_string(b.width));
    int d = 0;
    for (size_t i = 0; i < a.words.size(); ++i) d += std::popcount(a.words[i] ^ b.words[i]);
    return d;
}

std::string fingerprint_to_hex(const Fingerprint& fp) {
    static const char* digits = "0123456789abcdef";
    std::string out(static_cast<size_t>(fp.width) / 4, '0');
    for (size_t j = 0; j < out.size(); ++j) {
        int nibble = 0;
        for (int b = 0; b < 4; ++b)
            if (fp.test(static_cast<int>(j * 4 + b))) nibble |= 8 >> b;
        out[j] = digits[nibble];
    }
    return out;
}

Fingerprint fingerprint_from_hex(const std::string& hex, int width) {
    if (hex.size() != static_cast<size_t>(width) / 4)
        throw Error("WidthMismatch", "hex string length " + std::to_string(hex.size()) +
                                         " does not match width " + std::to_string(width));
    Fingerprint fp = make_fingerprint(width);
    for (size_t j = 0; j < hex.size(); ++j) {
        char c = hex[j];
        int nibble;
        if (c >= '0' && c <= '9') nibble = c - '0';
        else if (c >= 'a' && c <= 'f') nibble = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') nibble = c - 'A' + 10;
        else throw Error("MalformedRow", "invalid hex character in fingerprint");
        for (int b = 0; b < 4; ++b)
            if (nibble & (8 >> b)) fp.set(static_cast<int>(j * 4 + b));
    }
    return fp;
}

void SimilarityIndex::add(long idx, Fingerprint fp) {
    if (entries.empty()) width = fp.width;
    if (fp.width != width)
        throw Error("WidthMismatch", "index width " + std::to_string(width) +
                                         " vs entry width " + std::to_string(fp.width));
    for (const auto& [existing, _] : entries)
        if (existing == idx)
            throw Error("DuplicateIdx", "idx " + std::to_string(idx) + " already indexed");
    entries.emplace_back(idx, std::move(fp));
}

std::vector<std::pair<long, int>> top_k_similar(const SimilarityIndex& index,
                                                const Fingerprint& query, int k) {
    if (index.empty()) throw Error("EmptyIndex", "similarity index is empty");
    if (k <= 0) throw Error("SpecInvalid", "k must be positive");
    std::vector<std::pair<long, int>> scored;
    scored.reserve(index.entries.size());
    for (const auto& [idx, fp] : index.entries)
        scored.emplace_back(idx, hamming_distance(fp, query));
    auto cmp = [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    };
    size_t n = std::min<size_t>(static_cast<size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(n), scored.end(), cmp);
    scored.resize(n);
    return scored;
}

SimilarityIndex load_fingerprint_file(const std::filesystem::path& path, int width) {
    SimilarityIndex index;
    for_each_line(path, [&](int line_no, const std::string& line) {
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception&) {
            throw Error("MalformedLine", "invalid JSON at line " + std::to_string(line_no));
        }
        if (!obj.contains("idx") || !obj.contains("bits"))
            throw Error("MissingField", "fingerprint line " + std::to_string(line_no) +
                                            " needs idx and bits");
        index.add(obj["idx"].get<long>(),
                  fingerprint_from_hex(obj["bits"].get<std::string>(), width));
    });
    return index;
}

void save_fingerprint_file(const SimilarityIndex& index, const std::filesystem::path& path) {
    std::string out;
    for (const auto& [idx, fp] : index.entries) {
        ordered_json obj;
        obj["idx"] = idx;
        obj["bits"] = fingerprint_to_hex(fp);
        out += obj.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace armor
