#include "lptr/evalviz.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lptr/core/error.hpp"
#include "lptr/core/image.hpp"

namespace lptr::evalviz {

int aligned_matches(const std::vector<std::string>& gt,
                    const std::vector<std::string>& pred) {
    const int n = static_cast<int>(gt.size()), m = static_cast<int>(pred.size());
    // dist = edit distance, match = max matches among minimal-edit alignments
    std::vector<std::vector<int>> dist(static_cast<size_t>(n) + 1,
                                       std::vector<int>(static_cast<size_t>(m) + 1, 0));
    std::vector<std::vector<int>> match(static_cast<size_t>(n) + 1,
                                        std::vector<int>(static_cast<size_t>(m) + 1, 0));
    for (int i = 0; i <= n; ++i) dist[static_cast<size_t>(i)][0] = i;
    for (int j = 0; j <= m; ++j) dist[0][static_cast<size_t>(j)] = j;
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= m; ++j) {
            bool eq = gt[static_cast<size_t>(i - 1)] == pred[static_cast<size_t>(j - 1)];
            int sub = dist[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)] + (eq ? 0 : 1);
            int del = dist[static_cast<size_t>(i - 1)][static_cast<size_t>(j)] + 1;
            int ins = dist[static_cast<size_t>(i)][static_cast<size_t>(j - 1)] + 1;
            int best = std::min({sub, del, ins});
            dist[static_cast<size_t>(i)][static_cast<size_t>(j)] = best;
            int bm = -1;
            if (sub == best)
                bm = std::max(bm, match[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)] + (eq ? 1 : 0));
            if (del == best) bm = std::max(bm, match[static_cast<size_t>(i - 1)][static_cast<size_t>(j)]);
            if (ins == best) bm = std::max(bm, match[static_cast<size_t>(i)][static_cast<size_t>(j - 1)]);
            match[static_cast<size_t>(i)][static_cast<size_t>(j)] = bm;
        }
    return match[static_cast<size_t>(n)][static_cast<size_t>(m)];
}

Metrics accuracy_metrics(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw EmptyEvalSet("accuracy_metrics on empty record list");
    long full = 0, tail = 0;
    long chars_total = 0, chars_correct = 0;
    for (const EvalRecord& r : records) {
        std::vector<std::string> g = utf8_glyphs(r.gt);
        std::vector<std::string> p = utf8_glyphs(r.pred);
        if (g == p) ++full;
        if (!g.empty() && !p.empty() &&
            std::vector<std::string>(g.begin() + 1, g.end()) ==
                std::vector<std::string>(p.begin() + 1, p.end()))
            ++tail;
        chars_total += static_cast<long>(g.size());
        if (g.size() == p.size()) {
            for (size_t i = 0; i < g.size(); ++i)
                if (g[i] == p[i]) ++chars_correct;
        } else {
            chars_correct += aligned_matches(g, p);
        }
    }
    Metrics m;
    const double n = static_cast<double>(records.size());
    m.acc_7c = full / n;
    m.acc_6c = tail / n;
    m.cp = chars_total == 0 ? 0.0
                            : static_cast<double>(chars_correct) /
                                  static_cast<double>(chars_total);
    return m;
}

ErrorBreakdown categorize_errors(const std::vector<EvalRecord>& records) {
    ErrorBreakdown b;
    for (const EvalRecord& r : records) {
        std::vector<std::string> g = utf8_glyphs(r.gt);
        std::vector<std::string> p = utf8_glyphs(r.pred);
        if (g == p) continue;
        ++b.total;
        if (r.category == "special") {
            ++b.special;
        } else if (p.size() > g.size()) {
            ++b.mis_increase;
        } else if (p.size() < g.size()) {
            ++b.missing;
        } else if (!g.empty() && g[0] != p[0]) {
            ++b.chinese;
        } else {
            ++b.confusion;
        }
    }
    return b;
}

namespace {

// 5x7 digit faces for page labels (subset; rendering only needs 0-9)
const char* kDigitRows[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
};

void draw_digit(Tensor& img, int digit, int x0, int y0, double v) {
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c) {
            if (kDigitRows[digit][r][c] != '1') continue;
            int y = y0 + r, x = x0 + c;
            if (y < 0 || y >= image_height(img) || x < 0 || x >= image_width(img))
                continue;
            for (int ch = 0; ch < image_channels(img); ++ch) img.at(ch, y, x) = v;
        }
}

void draw_number(Tensor& img, int value, int x0, int y0, double v) {
    std::string s = std::to_string(value);
    for (size_t i = 0; i < s.size(); ++i)
        draw_digit(img, s[i] - '0', x0 + static_cast<int>(i) * 6, y0, v);
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void export_pages(const Tensor& pages, const std::vector<int>& decoded_ids,
                  const std::string& out_dir, const std::string& stem) {
    if (pages.shape.size() != 3) throw ShapeMismatch("export_pages expects (C, H, W)");
    const int C = pages.dim(0), H = pages.dim(1), W = pages.dim(2);
    std::filesystem::create_directories(out_dir);

    // global normalization so pages are comparable
    double lo = pages.data[0], hi = pages.data[0];
    for (double v : pages.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span = hi - lo > 1e-12 ? hi - lo : 1.0;

    const int scale = 6, label_h = 9, gap = 2;
    const int cols = 8, rows = (C + cols - 1) / cols;
    const int cell_w = W * scale + gap, cell_h = H * scale + label_h + gap;
    Tensor grid = make_image(1, rows * cell_h + gap, cols * cell_w + gap, 0.1);
    for (int k = 0; k < C; ++k) {
        int gx = (k % cols) * cell_w + gap;
        int gy = (k / cols) * cell_h + gap;
        draw_number(grid, k, gx + 1, gy + 1, 1.0);
        for (int y = 0; y < H * scale; ++y)
            for (int x = 0; x < W * scale; ++x) {
                double v = (pages.at(k, y / scale, x / scale) - lo) / span;
                grid.at(0, gy + label_h + y, gx + x) = v;
            }
    }
    write_png(out_dir + "/" + stem + ".png", grid);

    std::ofstream csv(out_dir + "/" + stem + ".csv");
    if (!csv) throw IOError("cannot open CSV for writing");
    csv << "greedy_ids";
    for (int id : decoded_ids) csv << ',' << id;
    csv << '\n';
    for (int k = 0; k < C; ++k) {
        csv << k;
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int y = 0; y < H; ++y) s += pages.at(k, y, x);
            csv << ',' << format_value(s / H);
        }
        csv << '\n';
    }
    if (!csv) throw IOError("short write on CSV");
}

BenchStats bench(const std::function<void(int)>& run_sample, int n_samples,
                 int repetitions, int warmup) {
    using clock = std::chrono::steady_clock;
    warmup = std::max(1, warmup);
    for (int r = 0; r < warmup; ++r)
        for (int i = 0; i < n_samples; ++i) run_sample(i);

    std::vector<double> times;
    times.reserve(static_cast<size_t>(repetitions) * n_samples);
    for (int r = 0; r < repetitions; ++r)
        for (int i = 0; i < n_samples; ++i) {
            auto t0 = clock::now();
            run_sample(i);
            auto t1 = clock::now();
            times.push_back(
                std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    std::sort(times.begin(), times.end());
    BenchStats st;
    st.samples = n_samples;
    st.repetitions = repetitions;
    double sum = 0.0;
    for (double t : times) sum += t;
    st.mean_ms = sum / static_cast<double>(times.size());
    st.median_ms = times[times.size() / 2];
    st.p95_ms = times[static_cast<size_t>(std::min(
        times.size() - 1, static_cast<size_t>(std::floor(0.95 * times.size()))))];
    return st;
}

}  // namespace lptr::evalviz
