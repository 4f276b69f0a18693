#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dgan/imaging.hpp"
#include "dgan/models.hpp"

namespace dgan {

// Mean squared difference on [0,1]-scaled pixels.
double mse(const QuantImage& a, const QuantImage& b);

// Global (whole-patch) SSIM with c1=(0.01*255)^2, c2=(0.03*255)^2.
double ssim(const QuantImage& a, const QuantImage& b);

// mu^2/sigma^2 over the whole patch (population sigma). A constant patch has
// no defined ENL.
struct EnlValue {
    bool defined = false;
    double value = 0.0;
};
EnlValue enl(const QuantImage& img);
EnlValue enl(const AmplitudeImage& img);

struct MetricRow {
    std::string pair_id;  // grid index or "test-set mean"
    std::string method;
    double mse = 0.0;
    double ssim = 0.0;
    EnlValue enl;
};

struct EvalReport {
    std::vector<MetricRow> rows;
    std::string config_json;
    std::vector<std::string> scene_paths;
};

using PatchModel = std::function<QuantImage(const QuantImage&)>;

// Per pair: metrics of model(x) against y, ENL on the generated patch; plus a
// "test-set mean" aggregate per method. Rows come out method-major.
EvalReport evaluate(const std::vector<std::pair<std::string, PatchModel>>& models,
                    const PairSet& test);

void write_report_csv(const std::string& path, const EvalReport& report);

// tile -> generate per patch -> compose with overlap averaging.
QuantImage translate_scene(const PatchModel& model, const QuantImage& scene);
// Batched fast path for a trained generator.
QuantImage translate_scene(const GeneratorNet& net, const QuantImage& scene);

std::vector<QuantImage> generate_batch(const GeneratorNet& net,
                                       const std::vector<const QuantImage*>& patches,
                                       int max_batch = 8);

// Side-by-side comparison grid (rows of equally sized patches, 2px separators).
QuantImage make_grid(const std::vector<std::vector<const QuantImage*>>& rows);

}  // namespace dgan
