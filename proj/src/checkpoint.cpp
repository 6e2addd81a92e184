#include <bit>
#include <cstring>
#include <fstream>

#include "hardneg/config.hpp"
#include "hardneg/encoder.hpp"
#include "hardneg/errors.hpp"

namespace hardneg {

namespace {

constexpr char kMagic[8] = {'H', 'N', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                     const ParamSet& params) {
    validate_params(config, params);
    Json tensors = Json::array();
    std::string payload;
    for (const auto& [name, tensor] : params) {
        tensors.push_back({{"name", name},
                           {"shape", tensor.shape()},
                           {"offset", payload.size()},
                           {"count", tensor.size()}});
        for (double v : tensor.data()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
    }
    const std::string header = Json{{"config", to_json(config)}, {"tensors", tensors}}.dump();

    std::string blob(kMagic, sizeof kMagic);
    put_u64(blob, header.size());
    blob += header;
    blob += payload;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
        throw MalformedHeaderError(path.filename().string() + " is not a checkpoint");
    }
    const std::uint64_t header_len = get_u64(bytes + 8);
    if (header_len > blob.size() - 16) {
        throw TruncatedPayloadError(path.filename().string() + ": header runs past end of file");
    }
    Json header;
    try {
        header = Json::parse(blob.substr(16, header_len));
    } catch (const Json::parse_error& e) {
        throw MalformedHeaderError(path.filename().string() + ": bad header: " + e.what());
    }
    const std::size_t payload_start = 16 + header_len;
    const std::size_t payload_size = blob.size() - payload_start;

    Checkpoint ck;
    try {
        ck.config = encoder_config_from_json(header.at("config"), "checkpoint.config");
        for (const auto& t : header.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<std::vector<std::size_t>>();
            const auto offset = t.at("offset").get<std::size_t>();
            const auto count = t.at("count").get<std::size_t>();
            if (offset > payload_size || count > (payload_size - offset) / 8) {
                throw TruncatedPayloadError(path.filename().string() + ": tensor '" + name +
                                            "' runs past end of file");
            }
            std::vector<double> data(count);
            for (std::size_t i = 0; i < count; ++i) {
                data[i] = std::bit_cast<double>(get_u64(bytes + payload_start + offset + 8 * i));
            }
            ck.params.add(name, Tensor(shape, std::move(data)));
        }
    } catch (const Json::exception& e) {
        throw MalformedHeaderError(path.filename().string() + ": bad header: " + e.what());
    } catch (const ConfigError& e) {
        throw MalformedHeaderError(path.filename().string() + ": " + e.what());
    } catch (const ShapeError& e) {
        throw SchemaError(path.filename().string() + ": " + e.what());
    }
    try {
        validate_params(ck.config, ck.params);
    } catch (const Error& e) {
        throw SchemaError(path.filename().string() + ": " + e.what());
    }
    return ck;
}

}  // namespace hardneg
