#include "mmlc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mmlc {
namespace {

constexpr char kMagic[8] = {'M', 'M', 'L', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamVector& params) {
  if (params.values.size() != params.layout.total())
    throw ConfigError("save_checkpoint: values/layout size mismatch");

  nlohmann::ordered_json layout = nlohmann::ordered_json::array();
  for (const LayerShape& e : params.layout.entries())
    layout.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
  const std::string layout_text = layout.dump();

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  put_u32(blob, static_cast<std::uint32_t>(layout_text.size()));
  blob += layout_text;
  put_u64(blob, static_cast<std::uint64_t>(params.values.size()));
  for (Eigen::Index i = 0; i < params.values.size(); ++i)
    put_u64(blob, std::bit_cast<std::uint64_t>(params.values[i]));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

ParamVector load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  const std::size_t size = blob.size();

  if (size < sizeof(kMagic) + 4 || std::memcmp(p, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  std::size_t off = sizeof(kMagic);
  const auto json_len = static_cast<std::size_t>(get_uint(p + off, 4));
  off += 4;
  if (size < off + json_len + 8) throw IoError("truncated checkpoint: " + path);

  nlohmann::json layout_json;
  try {
    layout_json = nlohmann::json::parse(blob.substr(off, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint layout in " + path + ": " + e.what());
  }
  off += json_len;

  std::vector<LayerShape> entries;
  for (const auto& item : layout_json)
    entries.push_back({item.at("name").get<std::string>(),
                       item.at("rows").get<Eigen::Index>(),
                       item.at("cols").get<Eigen::Index>()});

  const auto count = static_cast<Eigen::Index>(get_uint(p + off, 8));
  off += 8;
  if (size != off + static_cast<std::size_t>(count) * 8)
    throw IoError("checkpoint value section has wrong length: " + path);

  ParamVector pv;
  pv.layout = ParamLayout(std::move(entries));
  if (pv.layout.total() != count)
    throw IoError("checkpoint layout does not match value count: " + path);
  pv.values.resize(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    pv.values[i] = std::bit_cast<double>(get_uint(p + off, 8));
    off += 8;
  }
  if (!pv.values.allFinite()) throw NumericError("checkpoint holds non-finite values: " + path);
  return pv;
}

ParamVector concat_params(const std::vector<std::pair<std::string, ParamVector>>& parts) {
  std::vector<LayerShape> entries;
  Eigen::Index total = 0;
  for (const auto& [prefix, pv] : parts) {
    for (const LayerShape& e : pv.layout.entries())
      entries.push_back({prefix + "." + e.name, e.rows, e.cols});
    total += pv.values.size();
  }
  ParamVector out;
  out.layout = ParamLayout(std::move(entries));
  out.values.resize(total);
  Eigen::Index off = 0;
  for (const auto& [prefix, pv] : parts) {
    out.values.segment(off, pv.values.size()) = pv.values;
    off += pv.values.size();
  }
  return out;
}

ParamVector extract_params(const ParamVector& combined, const std::string& prefix) {
  const std::string want = prefix + ".";
  std::vector<LayerShape> entries;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;  // offset, size
  const auto& all = combined.layout.entries();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].name.rfind(want, 0) != 0) continue;
    entries.push_back({all[i].name.substr(want.size()), all[i].rows, all[i].cols});
    spans.emplace_back(combined.layout.offset(i), all[i].rows * all[i].cols);
  }
  if (entries.empty())
    throw ConfigError("checkpoint has no section named '" + prefix + "'");
  ParamVector out;
  out.layout = ParamLayout(std::move(entries));
  out.values.resize(out.layout.total());
  Eigen::Index off = 0;
  for (const auto& [src_off, size] : spans) {
    out.values.segment(off, size) = combined.values.segment(src_off, size);
    off += size;
  }
  return out;
}

}  // namespace mmlc
