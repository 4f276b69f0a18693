#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgan/tensor.hpp"

namespace dgan {

// Little-endian tensor container, magic "DGW1":
//   u32 record count, then per record:
//   u16 name length, UTF-8 name, u8 ndim, u32 dims[ndim], f32 data.
// Used for the fixed feature-extractor weights and for model checkpoints.
struct WeightsContainer {
    struct Record {
        std::string name;
        std::vector<std::uint32_t> dims;
        std::vector<float> data;

        std::int64_t count() const {
            std::int64_t n = 1;
            for (auto d : dims) n *= d;
            return n;
        }
    };

    std::vector<Record> records;

    const Record* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }
    const Record& require(const std::string& name) const {
        const Record* r = find(name);
        if (!r) throw DataError("weights container: missing tensor '" + name + "'");
        return *r;
    }
    void add(const std::string& name, std::vector<std::uint32_t> dims,
             std::vector<float> data);

    // Tensor bridging; expects exactly 4 or fewer dims (missing lead dims = 1).
    Tensor4 tensor(const std::string& name) const;
    void add_tensor(const std::string& name, const Tensor4& t);

    // Arbitrary metadata payload, one byte per f32 element.
    void add_text(const std::string& name, const std::string& text);
    std::string text(const std::string& name) const;
};

void save_weights(const std::string& path, const WeightsContainer& c);
WeightsContainer load_weights(const std::string& path);

}  // namespace dgan
