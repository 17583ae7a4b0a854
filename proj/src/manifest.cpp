#include <fstream>
#include <sstream>

#include "lptr/core/error.hpp"
#include "lptr/datagen.hpp"

namespace lptr::datagen {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string assign_split(uint64_t split_seed, uint64_t sample_seed) {
    uint64_t s = derive_seed(split_seed, sample_seed);
    double u = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
    if (u < 0.8) return "train";
    if (u < 0.9) return "valid";
    return "test";
}

void write_manifest(const std::vector<PlateSample>& samples, const std::string& path,
                    uint64_t split_seed) {
    std::ofstream f(path);
    if (!f) throw IOError("cannot open manifest for writing: " + path);
    for (const PlateSample& s : samples) {
        std::string split =
            s.split.empty() ? assign_split(split_seed, s.seed) : s.split;
        f << s.image_path << '\t' << s.plate << '\t' << layout_name(s.layout) << '\t'
          << s.width << '\t' << s.height << '\t';
        f << format_double(s.bbox[0]) << ',' << format_double(s.bbox[1]) << ','
          << format_double(s.bbox[2]) << ',' << format_double(s.bbox[3]) << '\t';
        for (size_t i = 0; i < s.vertices.size(); ++i) {
            if (i) f << ';';
            f << format_double(s.vertices[i].x) << ',' << format_double(s.vertices[i].y);
        }
        f << '\t' << s.seed << '\t' << s.category << '\t' << split << '\n';
    }
    if (!f) throw IOError("short write on manifest: " + path);
}

std::vector<PlateSample> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IOError("cannot open manifest: " + path);
    std::vector<PlateSample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto err = [&](const std::string& msg) {
            throw MalformedRecord("line " + std::to_string(lineno) + ": " + msg);
        };
        std::vector<std::string> fields = split_on(line, '\t');
        if (fields.size() != 10) err("expected 10 tab-separated fields");
        PlateSample s;
        s.image_path = fields[0];
        s.plate = fields[1];
        try {
            s.layout = layout_from_name(fields[2]);
        } catch (const MalformedRecord& e) {
            err(e.what());
        }
        try {
            s.width = std::stoi(fields[3]);
            s.height = std::stoi(fields[4]);
            std::vector<std::string> bb = split_on(fields[5], ',');
            if (bb.size() != 4) err("bbox needs 4 numbers");
            for (int i = 0; i < 4; ++i) s.bbox[static_cast<size_t>(i)] = std::stod(bb[static_cast<size_t>(i)]);
            for (const std::string& pt : split_on(fields[6], ';')) {
                std::vector<std::string> xy = split_on(pt, ',');
                if (xy.size() != 2) err("vertex needs x,y");
                s.vertices.push_back(
                    geometry::Point2{std::stod(xy[0]), std::stod(xy[1])});
            }
            s.seed = std::stoull(fields[7]);
        } catch (const MalformedRecord&) {
            throw;
        } catch (const std::exception&) {
            err("numeric field parse failure");
        }
        size_t want = s.layout == Layout::single_line ? 4 : 6;
        if (s.vertices.size() != want)
            err("expected " + std::to_string(want) + " vertices, got " +
                std::to_string(s.vertices.size()));
        if (s.bbox[2] <= s.bbox[0] || s.bbox[3] <= s.bbox[1])
            err("degenerate bounding box");
        s.category = fields[8];
        s.split = fields[9];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lptr::datagen
