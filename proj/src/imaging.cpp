#include "dgan/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dgan/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace dgan {

QuantImage quantize(const AmplitudeImage& img, double vmax) {
    if (!(vmax > 0)) throw DataError("quantize: vmax must be > 0");
    QuantImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        double v = std::min(double(img.values[i]), vmax);
        int q = int(std::floor(255.0 * v / vmax));
        out.values[i] = std::uint8_t(std::clamp(q, 0, 255));
    }
    return out;
}

double choose_vmax(const AmplitudeImage& img, double coverage) {
    if (img.values.empty()) throw DataError("choose_vmax: empty image");
    if (!(coverage > 0.0 && coverage <= 1.0)) throw DataError("choose_vmax: coverage range");
    std::vector<float> sorted = img.values;
    std::sort(sorted.begin(), sorted.end());
    std::size_t k = std::size_t(std::ceil(coverage * double(sorted.size())));
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    return sorted[k - 1];
}

std::pair<std::vector<QuantImage>, PatchGrid> tile(const QuantImage& img, int patch_size,
                                                   int stride) {
    if (img.width < patch_size || img.height < patch_size)
        throw DataError("tile: image smaller than patch size");
    if (stride < 1) throw DataError("tile: stride must be >= 1");
    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.stride = stride;
    grid.src_width = img.width;
    grid.src_height = img.height;
    grid.rows = (img.height - patch_size) / stride + 1;
    grid.cols = (img.width - patch_size) / stride + 1;
    std::vector<QuantImage> patches;
    patches.reserve(std::size_t(grid.rows) * grid.cols);
    for (int gr = 0; gr < grid.rows; ++gr) {
        for (int gc = 0; gc < grid.cols; ++gc) {
            int r0 = gr * stride, c0 = gc * stride;
            grid.origins.emplace_back(r0, c0);
            QuantImage p(patch_size, patch_size);
            for (int r = 0; r < patch_size; ++r)
                for (int c = 0; c < patch_size; ++c) p.at(r, c) = img.at(r0 + r, c0 + c);
            patches.push_back(std::move(p));
        }
    }
    return {std::move(patches), std::move(grid)};
}

QuantImage compose(const std::vector<QuantImage>& patches, const PatchGrid& grid) {
    if (patches.size() != grid.origins.size())
        throw DataError("compose: patch count " + std::to_string(patches.size()) +
                        " != grid origin count " + std::to_string(grid.origins.size()));
    std::vector<std::uint32_t> sum(std::size_t(grid.src_width) * grid.src_height, 0);
    std::vector<std::uint16_t> cnt(sum.size(), 0);
    for (std::size_t k = 0; k < patches.size(); ++k) {
        auto [r0, c0] = grid.origins[k];
        const QuantImage& p = patches[k];
        for (int r = 0; r < grid.patch_size; ++r)
            for (int c = 0; c < grid.patch_size; ++c) {
                std::size_t i = std::size_t(r0 + r) * grid.src_width + (c0 + c);
                sum[i] += p.at(r, c);
                cnt[i] += 1;
            }
    }
    QuantImage out(grid.src_width, grid.src_height);
    for (std::size_t i = 0; i < sum.size(); ++i)
        out.values[i] =
            cnt[i] ? std::uint8_t(std::min<std::uint32_t>((2 * sum[i] + cnt[i]) / (2 * cnt[i]), 255))
                   : 0;
    return out;
}

namespace {

void box_blur(const AmplitudeImage& src, int k, AmplitudeImage& dst) {
    dst = src;
    if (k <= 1) return;
    const int lo = -(k / 2), hi = lo + k - 1;
    for (int r = 0; r < src.height; ++r)
        for (int c = 0; c < src.width; ++c) {
            double acc = 0.0;
            int n = 0;
            for (int dr = lo; dr <= hi; ++dr)
                for (int dc = lo; dc <= hi; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= src.height || cc < 0 || cc >= src.width) continue;
                    acc += src.at(rr, cc);
                    ++n;
                }
            dst.at(r, c) = float(acc / n);
        }
}

}  // namespace

std::pair<AmplitudeImage, AmplitudeImage> synth_pair(std::uint64_t seed,
                                                     const SceneParams& p) {
    if (p.width < 128 || p.height < 128) throw DataError("synth_pair: dims must be >= 128");
    if (p.blur_factor < 1) throw DataError("synth_pair: blur_factor must be >= 1");
    Rng rng(Rng::derive(seed, "synth"));

    AmplitudeImage target;
    target.width = p.width;
    target.height = p.height;
    target.sensor_tag = AmplitudeImage::Sensor::kTargetLike;
    target.values.assign(std::size_t(p.width) * p.height, float(p.background));

    for (int i = 0; i < p.n_lines; ++i) {
        bool filled = rng.uniform() < 0.3;
        bool horizontal = rng.uniform() < 0.5;
        int thickness = filled ? int(rng.uniform_int(6, 14)) : int(rng.uniform_int(1, 5));
        int main_axis = horizontal ? p.width : p.height;
        int len = int(rng.uniform_int(main_axis / 4, (main_axis * 17) / 20));
        float amp = float(rng.uniform(p.amp_lo, p.amp_hi));
        int r0, c0, h, w;
        if (horizontal) {
            h = thickness;
            w = len;
        } else {
            h = len;
            w = thickness;
        }
        r0 = int(rng.uniform_int(0, p.height - h));
        c0 = int(rng.uniform_int(0, p.width - w));
        for (int r = r0; r < r0 + h; ++r)
            for (int c = c0; c < c0 + w; ++c)
                target.at(r, c) = std::max(target.at(r, c), amp);
    }

    AmplitudeImage input;
    box_blur(target, p.blur_factor, input);
    input.sensor_tag = AmplitudeImage::Sensor::kInputLike;
    if (p.blur_factor > 1) {
        AmplitudeImage coarse = input;
        const int f = p.blur_factor;
        for (int r = 0; r < p.height; ++r)
            for (int c = 0; c < p.width; ++c)
                input.at(r, c) = coarse.at((r / f) * f, (c / f) * f);
    }
    if (p.speckle) {
        const double shape = p.looks_input;
        for (auto& v : input.values) v = float(v * rng.gamma(shape, 1.0 / shape));
    }
    return {std::move(input), std::move(target)};
}

Split split_of_index(int grid_index, double train_ratio) {
    std::uint64_t h = Rng::derive(std::uint64_t(grid_index), "split");
    return (double(h % 1000000) < train_ratio * 1000000.0) ? Split::kTrain : Split::kTest;
}

std::vector<PairSample> synth_patch_pairs(std::uint64_t seed, int count,
                                          const SceneParams& base) {
    SceneParams p = base;
    p.width = p.height = 128;
    std::vector<PairSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        auto [amp_x, amp_y] = synth_pair(Rng::derive(seed, "bank") + std::uint64_t(i), p);
        PairSample s;
        s.x = quantize(amp_x, kVmaxInput);
        s.y = quantize(amp_y, kVmaxTarget);
        s.grid_index = i;
        out.push_back(std::move(s));
    }
    return out;
}

// --- file formats ----------------------------------------------------------

void store_pgm(const std::string& path, const QuantImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("store_pgm: cannot open " + path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.values.data()),
            std::streamsize(img.values.size()));
    if (!f) throw DataError("store_pgm: write failed for " + path);
}

namespace {

int pgm_next_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines between header fields.
    for (;;) {
        int ch = in.peek();
        if (ch == EOF) throw DataError("load_pgm: truncated header in " + path);
        if (std::isspace(ch)) {
            in.get();
            continue;
        }
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    int v;
    if (!(in >> v)) throw DataError("load_pgm: malformed header in " + path);
    return v;
}

}  // namespace

QuantImage load_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (m0 != 'P' || m1 != '5') throw DataError("load_pgm: bad magic in " + path);
    int w = pgm_next_int(f, path);
    int h = pgm_next_int(f, path);
    int maxval = pgm_next_int(f, path);
    if (w < 1 || h < 1 || std::int64_t(w) * h > (std::int64_t(1) << 31))
        throw DataError("load_pgm: dimension overflow in " + path);
    if (maxval < 1 || maxval > 255)
        throw DataError("load_pgm: unsupported maxval " + std::to_string(maxval));
    f.get();  // single whitespace byte after maxval
    QuantImage img(w, h);
    f.read(reinterpret_cast<char*>(img.values.data()), std::streamsize(img.values.size()));
    if (f.gcount() != std::streamsize(img.values.size()))
        throw DataError("load_pgm: truncated payload in " + path);
    return img;
}

namespace {

std::string sidecar_path(const std::string& path) {
    fs::path p(path);
    p.replace_extension(".json");
    return p.string();
}

}  // namespace

void store_f32(const std::string& path, const AmplitudeImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("store_f32: cannot open " + path);
    f.write(reinterpret_cast<const char*>(img.values.data()),
            std::streamsize(img.values.size() * sizeof(float)));
    if (!f) throw DataError("store_f32: write failed for " + path);
    json side = {{"width", img.width}, {"height", img.height}, {"dtype", "f32le"}};
    std::ofstream js(sidecar_path(path));
    js << side.dump(2) << "\n";
}

AmplitudeImage load_f32(const std::string& path) {
    std::ifstream js(sidecar_path(path));
    if (!js) throw DataError("load_f32: missing sidecar for " + path);
    json side = json::parse(js, nullptr, /*allow_exceptions=*/false);
    if (side.is_discarded() || !side.contains("width") || !side.contains("height"))
        throw DataError("load_f32: malformed sidecar for " + path);
    if (side.value("dtype", "") != "f32le")
        throw DataError("load_f32: unsupported dtype in sidecar for " + path);
    AmplitudeImage img;
    img.width = side["width"].get<int>();
    img.height = side["height"].get<int>();
    if (img.width < 1 || img.height < 1 || std::int64_t(img.width) * img.height > (std::int64_t(1) << 31))
        throw DataError("load_f32: dimension overflow in sidecar for " + path);
    img.values.resize(std::size_t(img.width) * img.height);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_f32: cannot open " + path);
    f.read(reinterpret_cast<char*>(img.values.data()),
           std::streamsize(img.values.size() * sizeof(float)));
    if (f.gcount() != std::streamsize(img.values.size() * sizeof(float)))
        throw DataError("load_f32: truncated payload in " + path);
    return img;
}

namespace {

std::string split_dir_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

void save_split(const fs::path& dir, const PairSet& set) {
    fs::create_directories(dir);
    char name[32];
    for (const PairSample& s : set.pairs) {
        std::snprintf(name, sizeof(name), "%05d_x.pgm", s.grid_index);
        store_pgm((dir / name).string(), s.x);
        std::snprintf(name, sizeof(name), "%05d_y.pgm", s.grid_index);
        store_pgm((dir / name).string(), s.y);
    }
}

PairSet load_split(const fs::path& dir, Split split, const std::vector<int>& indices) {
    PairSet set;
    set.split = split;
    char name[32];
    for (int idx : indices) {
        PairSample s;
        s.grid_index = idx;
        std::snprintf(name, sizeof(name), "%05d_x.pgm", idx);
        s.x = load_pgm((dir / name).string());
        std::snprintf(name, sizeof(name), "%05d_y.pgm", idx);
        s.y = load_pgm((dir / name).string());
        if (s.x.width != s.y.width || s.x.height != s.y.height)
            throw DataError("load_pairs: pair " + std::to_string(idx) + " size mismatch");
        set.pairs.push_back(std::move(s));
    }
    return set;
}

}  // namespace

void save_pairs(const std::string& dir, const PairDataset& ds) {
    fs::create_directories(dir);
    save_split(fs::path(dir) / "train", ds.train);
    save_split(fs::path(dir) / "test", ds.test);
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("save_pairs: cannot write manifest in " + dir);
    mf << ds.manifest_json << "\n";
}

PairDataset load_pairs(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("load_pairs: missing manifest.json in " + dir);
    json m = json::parse(mf, nullptr, false);
    if (m.is_discarded()) throw DataError("load_pairs: malformed manifest.json in " + dir);
    PairDataset ds;
    ds.manifest_json = m.dump(2);
    auto idx = [&](const char* key) {
        std::vector<int> v;
        for (const auto& e : m.at(key)) v.push_back(e.get<int>());
        return v;
    };
    ds.train = load_split(fs::path(dir) / "train", Split::kTrain, idx("train"));
    ds.test = load_split(fs::path(dir) / "test", Split::kTest, idx("test"));
    return ds;
}

PairDataset make_synthetic_dataset(std::uint64_t seed, const SceneParams& params,
                                   double train_ratio) {
    auto [amp_x, amp_y] = synth_pair(seed, params);
    double vmax_x = choose_vmax(amp_x, 0.98);
    double vmax_y = choose_vmax(amp_y, 0.98);
    QuantImage qx = quantize(amp_x, vmax_x);
    QuantImage qy = quantize(amp_y, vmax_y);
    auto [px, grid] = tile(qx);
    auto [py, grid_y] = tile(qy);

    PairDataset ds;
    json train_idx = json::array(), test_idx = json::array();
    for (std::size_t i = 0; i < px.size(); ++i) {
        PairSample s;
        s.x = std::move(px[i]);
        s.y = std::move(py[i]);
        s.grid_index = int(i);
        if (split_of_index(int(i), train_ratio) == Split::kTrain) {
            train_idx.push_back(int(i));
            ds.train.pairs.push_back(std::move(s));
        } else {
            test_idx.push_back(int(i));
            ds.test.pairs.push_back(std::move(s));
        }
    }
    json m = {{"seed", seed},
              {"width", params.width},
              {"height", params.height},
              {"n_lines", params.n_lines},
              {"looks_input", params.looks_input},
              {"blur_factor", params.blur_factor},
              {"speckle", params.speckle},
              {"patch_size", grid.patch_size},
              {"stride", grid.stride},
              {"grid_rows", grid.rows},
              {"grid_cols", grid.cols},
              {"vmax_input", vmax_x},
              {"vmax_target", vmax_y},
              {"train_ratio", train_ratio},
              {"train", train_idx},
              {"test", test_idx}};
    ds.manifest_json = m.dump(2);
    return ds;
}

Tensor4 to_tensor01(const QuantImage& img) {
    Tensor4 t({1, 1, img.height, img.width});
    for (std::int64_t i = 0; i < img.pixel_count(); ++i)
        t[i] = float(img.values[std::size_t(i)]) / 255.0f;
    return t;
}

Tensor4 to_tensor01(const std::vector<const QuantImage*>& imgs) {
    if (imgs.empty()) throw DataError("to_tensor01: empty batch");
    const int h = imgs[0]->height, w = imgs[0]->width;
    Tensor4 t({int(imgs.size()), 1, h, w});
    std::int64_t k = 0;
    for (const QuantImage* img : imgs) {
        if (img->height != h || img->width != w) throw DataError("to_tensor01: size mismatch");
        for (std::int64_t i = 0; i < img->pixel_count(); ++i)
            t[k++] = float(img->values[std::size_t(i)]) / 255.0f;
    }
    return t;
}

QuantImage from_tensor01(const Tensor4& t, int batch_index) {
    const Shape4 s = t.shape();
    QuantImage img(s.w, s.h);
    const float* p = t.data() + std::int64_t(batch_index) * s.c * s.h * s.w;
    for (std::int64_t i = 0; i < img.pixel_count(); ++i) {
        float v = std::clamp(p[i], 0.0f, 1.0f) * 255.0f;
        img.values[std::size_t(i)] = std::uint8_t(std::lround(v));
    }
    return img;
}

}  // namespace dgan
