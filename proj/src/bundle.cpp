#include "tslt/bundle.hpp"

#include "tslt/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tslt {

std::string to_string(Task task) { return task == Task::binary ? "binary" : "multiclass"; }

Task parse_task(const std::string& name) {
    if (name == "multiclass") {
        return Task::multiclass;
    }
    if (name == "binary") {
        return Task::binary;
    }
    throw Error("unknown task '" + name + "' (expected multiclass or binary)");
}

namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'S', 'L', 'T'};

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(checked_u32(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    static std::uint32_t checked_u32(std::size_t v) {
        if (v > 0xFFFFFFFFULL) {
            throw BundleFormatError("value " + std::to_string(v) + " does not fit a 32-bit field");
        }
        return static_cast<std::uint32_t>(v);
    }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    void put(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw TruncatedError("bundle is truncated at byte " + std::to_string(pos_) + " (needed " +
                                 std::to_string(n) + " more)");
        }
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::uint64_t get(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1U << 30));
        crc = crc32(crc, bytes.data() + offset, chunk);
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

// Preprocess state:
//   label column str | feature count u32
//   | per feature: name str, kind u8, then
//       numeric: median f64, mean f64, std f64
//       categorical: mode str, category count u32, categories str...
//   | label map count u32 | per entry: name str, index u32
void encode_preprocess(Writer& w, const PreprocessState& s) {
    w.str(s.label_column);
    w.u32(Writer::checked_u32(s.features.size()));
    for (const auto& f : s.features) {
        w.str(f.name);
        w.u8(static_cast<std::uint8_t>(f.kind));
        if (f.kind == ColumnKind::numeric) {
            w.f64(f.median);
            w.f64(f.mean);
            w.f64(f.std);
        } else {
            w.str(f.mode);
            w.u32(Writer::checked_u32(f.categories.size()));
            for (const auto& c : f.categories) {
                w.str(c);
            }
        }
    }
    w.u32(Writer::checked_u32(s.label_map.size()));
    for (const auto& [name, index] : s.label_map) {
        w.str(name);
        w.u32(index);
    }
}

PreprocessState decode_preprocess(Reader& r, const std::vector<std::string>& class_names) {
    PreprocessState s;
    s.label_column = r.str();
    const std::uint32_t n_features = r.u32();
    for (std::uint32_t i = 0; i < n_features; ++i) {
        FeatureStats f;
        f.name = r.str();
        const std::uint8_t kind = r.u8();
        if (kind == static_cast<std::uint8_t>(ColumnKind::numeric)) {
            f.kind = ColumnKind::numeric;
            f.median = r.f64();
            f.mean = r.f64();
            f.std = r.f64();
        } else if (kind == static_cast<std::uint8_t>(ColumnKind::categorical)) {
            f.kind = ColumnKind::categorical;
            f.mode = r.str();
            const std::uint32_t n = r.u32();
            for (std::uint32_t c = 0; c < n; ++c) {
                f.categories.push_back(r.str());
            }
        } else {
            throw BundleFormatError("unknown column kind " + std::to_string(kind) + " for feature '" + f.name + "'");
        }
        s.features.push_back(std::move(f));
    }
    const std::uint32_t n_labels = r.u32();
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        std::string name = r.str();
        const std::uint32_t index = r.u32();
        if (index >= class_names.size()) {
            throw BundleFormatError("label '" + name + "' maps to class " + std::to_string(index) +
                                    " beyond the class table");
        }
        s.label_map.emplace(std::move(name), index);
    }
    s.class_names = class_names;
    return s;
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const ModelBundle& bundle) {
    const std::size_t k = num_classes(bundle.params);
    if (bundle.class_names.size() != k) {
        throw BundleFormatError("bundle has " + std::to_string(bundle.class_names.size()) +
                                " class names for a " + std::to_string(k) + "-class model");
    }
    if (bundle.preprocess.input_dim() != input_dim(bundle.params)) {
        throw BundleFormatError("preprocessor yields " + std::to_string(bundle.preprocess.input_dim()) +
                                " features but the model expects " + std::to_string(input_dim(bundle.params)));
    }
    Writer w;
    w.raw(kMagic);
    w.u16(bundle.format_version);
    w.u8(static_cast<std::uint8_t>(architecture(bundle.params)));
    w.u8(static_cast<std::uint8_t>(bundle.task));
    w.u32(Writer::checked_u32(input_dim(bundle.params)));
    w.u32(Writer::checked_u32(k));
    for (const auto& name : bundle.class_names) {
        w.str(name);
    }
    encode_preprocess(w, bundle.preprocess);

    ModelParams params = bundle.params;
    const auto tensors = stored_tensors(params);
    w.u32(Writer::checked_u32(tensors.size()));
    for (const auto& t : tensors) {
        w.u8(t.layer_id);
        w.u32(Writer::checked_u32(t.value->rows()));
        w.u32(Writer::checked_u32(t.value->cols()));
        for (const double v : t.value->values()) {
            w.f32(static_cast<float>(v));
        }
    }
    w.u32(crc32_of(w.bytes()));
    return w.take();
}

ModelBundle decode_bundle(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw TruncatedError("bundle is shorter than its magic number");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw BadMagicError("not a model bundle (bad magic)");
    }
    Reader r(bytes.subspan(4));
    ModelBundle b;
    b.format_version = r.u16();
    if (b.format_version != kBundleVersion) {
        throw VersionMismatchError("bundle format version " + std::to_string(b.format_version) +
                                   " is not supported (expected " + std::to_string(kBundleVersion) + ")");
    }
    const std::uint8_t arch = r.u8();
    const std::uint8_t task = r.u8();
    if (arch > static_cast<std::uint8_t>(Architecture::mlp)) {
        throw BundleFormatError("unknown architecture tag " + std::to_string(arch));
    }
    if (task > static_cast<std::uint8_t>(Task::binary)) {
        throw BundleFormatError("unknown task tag " + std::to_string(task));
    }
    b.task = static_cast<Task>(task);
    const std::uint32_t in_dim = r.u32();
    const std::uint32_t k = r.u32();
    if (in_dim < 1 || k < 2) {
        throw BundleFormatError("invalid model dimensions " + std::to_string(in_dim) + " -> " + std::to_string(k));
    }
    // every class name costs at least its 4-byte length prefix
    r.need(static_cast<std::size_t>(k) * 4);
    for (std::uint32_t i = 0; i < k; ++i) {
        b.class_names.push_back(r.str());
    }
    b.preprocess = decode_preprocess(r, b.class_names);
    if (b.preprocess.input_dim() != in_dim) {
        throw BundleFormatError("preprocess state has " + std::to_string(b.preprocess.input_dim()) +
                                " features, header says " + std::to_string(in_dim));
    }

    b.params = build_model(static_cast<Architecture>(arch), in_dim, k, 0);
    auto tensors = stored_tensors(b.params);
    const std::uint32_t count = r.u32();
    if (count != tensors.size()) {
        throw BundleFormatError("bundle holds " + std::to_string(count) + " tensors, architecture needs " +
                                std::to_string(tensors.size()));
    }
    for (auto& t : tensors) {
        const std::uint8_t layer = r.u8();
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        if (layer != t.layer_id || rows != t.value->rows() || cols != t.value->cols()) {
            throw BundleFormatError("tensor record for " + t.name + " has layer " + std::to_string(layer) + " (" +
                                    std::to_string(rows) + "x" + std::to_string(cols) + "), expected layer " +
                                    std::to_string(t.layer_id) + " " + shape_string(*t.value));
        }
        r.need(static_cast<std::size_t>(rows) * cols * 4);
        for (double& v : t.value->values()) {
            v = static_cast<double>(r.f32());
        }
    }
    const std::size_t body = 4 + r.position();
    const std::uint32_t stored_crc = r.u32();
    if (r.remaining() != 0) {
        throw BundleFormatError(std::to_string(r.remaining()) + " unexpected bytes after the checksum");
    }
    if (crc32_of(bytes.first(body)) != stored_crc) {
        throw ChecksumError("bundle checksum mismatch (file is corrupted)");
    }
    return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
    const auto bytes = encode_bundle(bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write bundle to " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing bundle to " + path.string());
    }
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw BundleError("cannot open bundle " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_bundle(bytes);
}

std::size_t weight_payload_bytes(const ModelParams& params) {
    ModelParams copy = params;
    std::size_t n = 0;
    for (const auto& t : trainable_tensors(copy)) {
        n += t.value->size();
    }
    return n * sizeof(float);
}

}  // namespace tslt
