#pragma once

// Parameter checkpoint container:
//   bytes 0..7    magic "SATTNCK1"
//   bytes 8..15   header length H, uint64 little-endian
//   next H bytes  JSON header {"format_version", "config", "dtype",
//                 "tensors": [{"name", "shape"}], "seed", "meta"}
//   remainder     tensors in header order, little-endian fp32 or fp64
//                 (dtype follows config.precision)

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "streamattn/model.hpp"

namespace streamattn {

struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<double> params;

    template <typename Scalar>
    Transformer<Scalar> to_model() const {
        return Transformer<Scalar>(config, std::vector<Scalar>(params.begin(), params.end()));
    }
};

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Transformer<Scalar>& model, std::uint64_t seed,
                     const nlohmann::json& meta = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace streamattn
