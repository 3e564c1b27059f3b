#include "latentmark/tensor_archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "latentmark/errors.hpp"

namespace latentmark {

namespace {
constexpr char kMagic[8] = {'L', 'M', 'T', 'A', '0', '0', '0', '1'};
}

void write_archive(const std::string& path,
                   const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                   const nlohmann::json& meta) {
    nlohmann::json header;
    header["meta"] = meta;
    auto& index = header["tensors"];
    index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [key, t] : tensors) {
        nlohmann::json e;
        e["key"] = key;
        e["shape"] = t->shape();
        e["offset"] = offset;
        e["dtype"] = "f32";
        index.push_back(e);
        offset += t->numel() * sizeof(float);
    }
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write archive " + path);
    out.write(kMagic, 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [key, t] : tensors)
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel() * sizeof(float)));
    if (!out) throw DataError("archive write failed: " + path);
}

Archive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read archive " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a tensor archive: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("truncated archive header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    Archive a;
    a.meta = header.value("meta", nlohmann::json::object());
    const std::streampos payload = in.tellg();
    for (const auto& e : header.at("tensors")) {
        const std::string key = e.at("key").get<std::string>();
        const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        in.seekg(payload + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) throw DataError("truncated tensor '" + key + "' in " + path);
        a.tensors.emplace(key, std::move(t));
    }
    return a;
}

} // namespace latentmark
