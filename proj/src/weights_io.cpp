#include "dgan/weights_io.hpp"

#include <cstring>
#include <fstream>

namespace dgan {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'W', '1'};

template <typename T>
void write_le(std::ostream& f, T v) {
    // Host is assumed little-endian (x86/aarch64); format is pinned LE.
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& f, const std::string& path) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw DataError("weights container: truncated file " + path);
    return v;
}

}  // namespace

void WeightsContainer::add(const std::string& name, std::vector<std::uint32_t> dims,
                           std::vector<float> data) {
    Record r;
    r.name = name;
    r.dims = std::move(dims);
    r.data = std::move(data);
    if (r.count() != std::int64_t(r.data.size()))
        throw DataError("weights container: dims/data mismatch for '" + name + "'");
    records.push_back(std::move(r));
}

Tensor4 WeightsContainer::tensor(const std::string& name) const {
    const Record& r = require(name);
    if (r.dims.size() > 4)
        throw DataError("weights container: tensor '" + name + "' has ndim > 4");
    int d[4] = {1, 1, 1, 1};
    for (std::size_t i = 0; i < r.dims.size(); ++i)
        d[4 - r.dims.size() + i] = int(r.dims[i]);
    return Tensor4({d[0], d[1], d[2], d[3]}, std::vector<float>(r.data));
}

void WeightsContainer::add_tensor(const std::string& name, const Tensor4& t) {
    const Shape4 s = t.shape();
    add(name,
        {std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h), std::uint32_t(s.w)},
        std::vector<float>(t.data(), t.data() + t.size()));
}

void WeightsContainer::add_text(const std::string& name, const std::string& text) {
    std::vector<float> data(text.size());
    for (std::size_t i = 0; i < text.size(); ++i)
        data[i] = float(static_cast<unsigned char>(text[i]));
    add(name, {std::uint32_t(text.size())}, std::move(data));
}

std::string WeightsContainer::text(const std::string& name) const {
    const Record& r = require(name);
    std::string s(r.data.size(), '\0');
    for (std::size_t i = 0; i < r.data.size(); ++i) s[i] = char(int(r.data[i]) & 0xff);
    return s;
}

void save_weights(const std::string& path, const WeightsContainer& c) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_weights: cannot open " + path);
    f.write(kMagic, 4);
    write_le<std::uint32_t>(f, std::uint32_t(c.records.size()));
    for (const auto& r : c.records) {
        write_le<std::uint16_t>(f, std::uint16_t(r.name.size()));
        f.write(r.name.data(), std::streamsize(r.name.size()));
        write_le<std::uint8_t>(f, std::uint8_t(r.dims.size()));
        for (auto d : r.dims) write_le<std::uint32_t>(f, d);
        f.write(reinterpret_cast<const char*>(r.data.data()),
                std::streamsize(r.data.size() * sizeof(float)));
    }
    if (!f) throw DataError("save_weights: write failed for " + path);
}

WeightsContainer load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_weights: cannot open " + path);
    char magic[4] = {};
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("load_weights: bad magic in " + path);
    auto count = read_le<std::uint32_t>(f, path);
    WeightsContainer c;
    c.records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightsContainer::Record r;
        auto name_len = read_le<std::uint16_t>(f, path);
        r.name.resize(name_len);
        f.read(r.name.data(), name_len);
        auto ndim = read_le<std::uint8_t>(f, path);
        std::int64_t n = 1;
        for (int d = 0; d < ndim; ++d) {
            r.dims.push_back(read_le<std::uint32_t>(f, path));
            n *= r.dims.back();
            if (n < 0 || n > (std::int64_t(1) << 31))
                throw DataError("load_weights: dimension overflow in " + path);
        }
        r.data.resize(std::size_t(n));
        f.read(reinterpret_cast<char*>(r.data.data()), std::streamsize(n * sizeof(float)));
        if (!f) throw DataError("load_weights: truncated tensor '" + r.name + "' in " + path);
        c.records.push_back(std::move(r));
    }
    return c;
}

}  // namespace dgan
