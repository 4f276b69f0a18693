#include "dgan/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dgan/stats.hpp"

namespace dgan {

double mse(const QuantImage& a, const QuantImage& b) {
    if (a.width != b.width || a.height != b.height) throw DataError("mse: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        double d = (double(a.values[i]) - double(b.values[i])) / 255.0;
        acc += d * d;
    }
    return acc / double(a.values.size());
}

double ssim(const QuantImage& a, const QuantImage& b) {
    if (a.width != b.width || a.height != b.height)
        throw DataError("ssim: dimension mismatch");
    return stats::ssim_global(a.values.data(), b.values.data(),
                              std::int64_t(a.values.size()), 255.0);
}

namespace {

template <typename T>
EnlValue enl_of(const std::vector<T>& values) {
    auto m = stats::moments(values.data(), std::int64_t(values.size()));
    if (m.var <= 0.0) return {false, 0.0};
    return {true, m.mean * m.mean / m.var};
}

}  // namespace

EnlValue enl(const QuantImage& img) { return enl_of(img.values); }
EnlValue enl(const AmplitudeImage& img) { return enl_of(img.values); }

EvalReport evaluate(const std::vector<std::pair<std::string, PatchModel>>& models,
                    const PairSet& test) {
    if (test.pairs.empty()) throw DataError("evaluate: empty test set");
    if (models.empty()) throw DataError("evaluate: no models given");
    EvalReport report;
    for (const auto& [method, model] : models) {
        double sum_mse = 0.0, sum_ssim = 0.0, sum_enl = 0.0;
        int n_enl = 0;
        for (const PairSample& s : test.pairs) {
            QuantImage out = model(s.x);
            MetricRow row;
            row.pair_id = std::to_string(s.grid_index);
            row.method = method;
            row.mse = mse(out, s.y);
            row.ssim = ssim(out, s.y);
            row.enl = enl(out);
            sum_mse += row.mse;
            sum_ssim += row.ssim;
            if (row.enl.defined) {
                sum_enl += row.enl.value;
                ++n_enl;
            }
            report.rows.push_back(std::move(row));
        }
        MetricRow agg;
        agg.pair_id = "test-set mean";
        agg.method = method;
        agg.mse = sum_mse / double(test.pairs.size());
        agg.ssim = sum_ssim / double(test.pairs.size());
        agg.enl = n_enl > 0 ? EnlValue{true, sum_enl / n_enl} : EnlValue{false, 0.0};
        report.rows.push_back(std::move(agg));
    }
    return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream f(path);
    if (!f) throw DataError("write_report_csv: cannot open " + path);
    f << "method,pair,mse,ssim,enl\n";
    char line[256];
    for (const MetricRow& r : report.rows) {
        if (r.enl.defined)
            std::snprintf(line, sizeof(line), "%s,%s,%.6f,%.6f,%.6f\n", r.method.c_str(),
                          r.pair_id.c_str(), r.mse, r.ssim, r.enl.value);
        else
            std::snprintf(line, sizeof(line), "%s,%s,%.6f,%.6f,undefined\n", r.method.c_str(),
                          r.pair_id.c_str(), r.mse, r.ssim);
        f << line;
    }
}

QuantImage translate_scene(const PatchModel& model, const QuantImage& scene) {
    auto [patches, grid] = tile(scene);  // throws if the scene is too small
    std::vector<QuantImage> out;
    out.reserve(patches.size());
    for (const QuantImage& p : patches) out.push_back(model(p));
    return compose(out, grid);
}

std::vector<QuantImage> generate_batch(const GeneratorNet& net,
                                       const std::vector<const QuantImage*>& patches,
                                       int max_batch) {
    std::vector<QuantImage> out;
    out.reserve(patches.size());
    for (std::size_t at = 0; at < patches.size(); at += std::size_t(max_batch)) {
        std::vector<const QuantImage*> chunk(
            patches.begin() + at,
            patches.begin() + std::min(at + std::size_t(max_batch), patches.size()));
        Graph g;
        BoundParams p = bind_params(g, net.params, /*trainable=*/false);
        Graph::Id y = unet_forward(g, net, p, g.constant(to_tensor01(chunk)));
        const Tensor4& v = g.value(y);
        for (int i = 0; i < int(chunk.size()); ++i) out.push_back(from_tensor01(v, i));
    }
    return out;
}

QuantImage translate_scene(const GeneratorNet& net, const QuantImage& scene) {
    auto [patches, grid] = tile(scene);
    std::vector<const QuantImage*> ptrs;
    ptrs.reserve(patches.size());
    for (const QuantImage& p : patches) ptrs.push_back(&p);
    return compose(generate_batch(net, ptrs), grid);
}

QuantImage make_grid(const std::vector<std::vector<const QuantImage*>>& rows) {
    if (rows.empty() || rows[0].empty()) throw DataError("make_grid: empty layout");
    const int ph = rows[0][0]->height, pw = rows[0][0]->width;
    const int sep = 2;
    const int n_cols = int(rows[0].size());
    QuantImage grid(n_cols * pw + (n_cols - 1) * sep,
                    int(rows.size()) * ph + (int(rows.size()) - 1) * sep);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (int(rows[r].size()) != n_cols) throw DataError("make_grid: ragged layout");
        for (int c = 0; c < n_cols; ++c) {
            const QuantImage& img = *rows[r][c];
            if (img.width != pw || img.height != ph)
                throw DataError("make_grid: mixed patch sizes");
            for (int i = 0; i < ph; ++i)
                for (int j = 0; j < pw; ++j)
                    grid.at(int(r) * (ph + sep) + i, c * (pw + sep) + j) = img.at(i, j);
        }
    }
    return grid;
}

}  // namespace dgan
