#include "streamattn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "streamattn/config.hpp"
#include "streamattn/error.hpp"

namespace streamattn {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'T', 'T', 'N', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Transformer<Scalar>& model, std::uint64_t seed,
                     const nlohmann::json& meta) {
    const auto& cfg = model.config();
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : model.layout().tensors()) tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
    const nlohmann::json header{{"format_version", kFormatVersion},
                                {"config", model_config_to_json(cfg)},
                                {"dtype", precision_name(cfg.precision)},
                                {"tensors", tensors},
                                {"seed", seed},
                                {"meta", meta}};
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (Scalar v : model.params()) {
        if (cfg.precision == Precision::Fp32) {
            put_le<float>(out, static_cast<float>(v));
        } else {
            put_le<double>(out, static_cast<double>(v));
        }
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("not a checkpoint (bad magic): " + path.string());
    }
    const auto header_len = get_le<std::uint64_t>(in, path);
    if (header_len > (1ULL << 30)) throw ParseError("implausible checkpoint header length in " + path.string());
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
        throw IoError("truncated checkpoint " + path.string());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("checkpoint header of " + path.string() + ": " + e.what());
    }
    if (header.value("format_version", 0) != kFormatVersion) {
        throw ParseError("unsupported checkpoint version in " + path.string());
    }

    Checkpoint ck;
    ck.config = model_config_from_json(header.at("config"));
    ck.seed = header.value("seed", std::uint64_t{0});
    ck.meta = header.value("meta", nlohmann::json::object());
    const ParamLayout layout(ck.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != layout.tensors().size()) throw ParseError("checkpoint tensor list does not match config");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& expect = layout.tensors()[i];
        const auto shape = tensors[i].at("shape").get<std::vector<std::size_t>>();
        if (tensors[i].at("name").get<std::string>() != expect.name || shape.size() != 2 || shape[0] != expect.rows ||
            shape[1] != expect.cols) {
            throw ParseError("checkpoint tensor " + std::to_string(i) + " does not match config");
        }
    }
    const auto dtype = parse_precision(header.at("dtype").get<std::string>());
    if (!dtype) throw ParseError("unknown checkpoint dtype in " + path.string());
    ck.params.resize(layout.total());
    for (double& v : ck.params) {
        v = *dtype == Precision::Fp32 ? static_cast<double>(get_le<float>(in, path)) : get_le<double>(in, path);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in checkpoint " + path.string());
    return ck;
}

template void save_checkpoint(const std::filesystem::path&, const Transformer<float>&, std::uint64_t,
                              const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const Transformer<double>&, std::uint64_t,
                              const nlohmann::json&);

}  // namespace streamattn
