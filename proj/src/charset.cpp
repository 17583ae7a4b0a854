#include "lptr/charset.hpp"

#include <fstream>

#include "lptr/core/error.hpp"

namespace lptr {

std::vector<std::string> utf8_glyphs(const std::string& s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        size_t len = 1;
        if ((c & 0x80) == 0x00) len = 1;
        else if ((c & 0xe0) == 0xc0) len = 2;
        else if ((c & 0xf0) == 0xe0) len = 3;
        else if ((c & 0xf8) == 0xf0) len = 4;
        if (i + len > s.size()) len = s.size() - i;
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

namespace {

// 31 province abbreviations followed by 7 special-use glyphs.
const char* kProvinces[] = {
    "京", "津", "冀", "晋", "蒙", "辽", "吉", "黑", "沪", "苏", "浙",
    "皖", "闽", "赣", "鲁", "豫", "鄂", "湘", "粤", "桂", "琼", "渝",
    "川", "贵", "云", "藏", "陕", "甘", "青", "宁", "新"};
const char* kSpecial[] = {"学", "警", "港", "澳", "挂", "使", "领"};
const char* kLetters = "ABCDEFGHJKLMNPQRSTUVWXYZ";  // no I, no O

}  // namespace

Charset Charset::builtin() {
    Charset cs;
    for (const char* p : kProvinces) cs.symbols_.emplace_back(p);
    for (const char* p : kSpecial) cs.symbols_.emplace_back(p);
    for (char d = '0'; d <= '9'; ++d) cs.symbols_.emplace_back(1, d);
    for (const char* p = kLetters; *p; ++p) cs.symbols_.emplace_back(1, *p);
    cs.symbols_.emplace_back("-");
    cs.rebuild_index();
    return cs;
}

Charset Charset::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IOError("cannot open charset file: " + path);
    Charset cs;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        cs.symbols_.push_back(line);
    }
    if (cs.symbols_.empty()) throw CorruptFile("empty charset file: " + path);
    cs.rebuild_index();
    return cs;
}

void Charset::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IOError("cannot open charset file for writing: " + path);
    for (const auto& s : symbols_) f << s << "\n";
}

void Charset::rebuild_index() {
    index_.clear();
    for (size_t i = 0; i < symbols_.size(); ++i)
        index_[symbols_[i]] = static_cast<int>(i);
}

const std::string& Charset::glyph(int id) const {
    if (id < 0 || id >= size()) throw UnknownGlyph("id out of range: " + std::to_string(id));
    return symbols_[static_cast<size_t>(id)];
}

int Charset::id(const std::string& glyph) const {
    auto it = index_.find(glyph);
    if (it == index_.end()) throw UnknownGlyph("'" + glyph + "' not in charset");
    return it->second;
}

bool Charset::contains(const std::string& glyph) const { return index_.count(glyph) > 0; }

std::vector<int> Charset::encode(const std::string& plate) const {
    std::vector<int> ids;
    for (const auto& g : utf8_glyphs(plate)) {
        int v = id(g);
        if (v == blank_id()) throw UnknownGlyph("blank is not a plate glyph");
        ids.push_back(v);
    }
    return ids;
}

std::string Charset::decode_ids(const std::vector<int>& ids) const {
    std::string out;
    for (int v : ids) out += glyph(v);
    return out;
}

uint64_t Charset::hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : symbols_) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0x0a;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace lptr
