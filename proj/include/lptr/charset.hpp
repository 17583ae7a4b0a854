#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace lptr {

/// Splits a UTF-8 string into individual glyph strings (one per code point).
std::vector<std::string> utf8_glyphs(const std::string& s);

/// The 73-symbol recognition alphabet:
///   0..30   province glyphs
///   31..37  special-use glyphs
///   38..47  digits '0'..'9'
///   48..71  letters A..Z without I and O
///   72      blank '-'
class Charset {
public:
    static Charset builtin();
    static Charset load(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(symbols_.size()); }
    int blank_id() const { return size() - 1; }

    const std::string& glyph(int id) const;
    int id(const std::string& glyph) const;  // throws UnknownGlyph
    bool contains(const std::string& glyph) const;

    /// Plate string -> symbol IDs (blank not allowed in plate strings).
    std::vector<int> encode(const std::string& plate) const;
    std::string decode_ids(const std::vector<int>& ids) const;

    /// FNV-1a over the serialized symbol list; checkpoints store this to
    /// reject incompatible alphabets.
    uint64_t hash() const;

    const std::vector<std::string>& symbols() const { return symbols_; }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int> index_;

    void rebuild_index();
};

}  // namespace lptr
