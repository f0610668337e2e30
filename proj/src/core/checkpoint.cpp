#include "da3/core/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace da3 {

namespace {

constexpr const char* kFormat = "da3-checkpoint-v1";

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

void put_le(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  os.write(bytes.data(), 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const ParameterSet& params, const nlohmann::json& meta) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["meta"] = meta;
  auto& entries = manifest["params"] = nlohmann::json::array();
  std::ofstream blob(with_ext(stem, ".bin"), std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("cannot write checkpoint blob " + with_ext(stem, ".bin").string());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.at(i);
    entries.push_back({{"name", params.name(i)}, {"shape", t.shape()}, {"offset", offset}});
    for (double v : t.data()) put_le(blob, v);
    offset += 8 * t.size();
  }
  manifest["bytes"] = offset;
  std::ofstream man(with_ext(stem, ".json"), std::ios::trunc);
  if (!man) throw std::runtime_error("cannot write checkpoint manifest " + with_ext(stem, ".json").string());
  man << manifest.dump(2) << '\n';
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& stem) {
  std::ifstream man(with_ext(stem, ".json"));
  if (!man) throw std::runtime_error("missing checkpoint manifest " + with_ext(stem, ".json").string());
  auto manifest = nlohmann::json::parse(man);
  if (manifest.value("format", "") != kFormat) throw std::runtime_error("unknown checkpoint format in " + stem.string());
  return manifest;
}

nlohmann::json load_checkpoint(const std::filesystem::path& stem, ParameterSet& params) {
  const auto manifest = read_checkpoint_manifest(stem);
  std::ifstream blob(with_ext(stem, ".bin"), std::ios::binary);
  if (!blob) throw std::runtime_error("missing checkpoint blob " + with_ext(stem, ".bin").string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  const auto& entries = manifest.at("params");
  if (entries.size() != params.size()) {
    throw std::runtime_error("checkpoint " + stem.string() + " has " + std::to_string(entries.size()) +
                             " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    auto& t = params.at(i);
    const auto shape = e.at("shape").get<Shape>();
    if (e.at("name").get<std::string>() != params.name(i) || shape != t.shape()) {
      throw std::runtime_error("checkpoint/architecture mismatch at parameter " + params.name(i) + ": stored " +
                               e.at("name").get<std::string>() + shape_string(shape) + ", expected " +
                               shape_string(t.shape()));
    }
    const auto offset = e.at("offset").get<std::uint64_t>();
    if (offset + 8 * t.size() > bytes.size()) throw std::runtime_error("checkpoint blob truncated: " + stem.string());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = get_le(bytes.data() + offset + 8 * k);
  }
  return manifest.value("meta", nlohmann::json::object());
}

}  // namespace da3
