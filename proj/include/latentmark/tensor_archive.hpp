#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentmark/tensor.hpp"

namespace latentmark {

// Key -> tensor archive with a JSON meta block. Little-endian float32
// blobs after a JSON header; keys are stable strings.
struct Archive {
    std::map<std::string, Tensor> tensors;
    nlohmann::json meta;
};

void write_archive(const std::string& path,
                   const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                   const nlohmann::json& meta);

Archive read_archive(const std::string& path);

} // namespace latentmark
