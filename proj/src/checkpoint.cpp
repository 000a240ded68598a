#include "fbkws/checkpoint.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fbkws/error.hpp"

namespace fbkws::checkpoint {

namespace {

using nlohmann::json;

struct Section {
  std::string name;
  std::vector<int> shape;
  float* data = nullptr;
  int64_t numel = 0;
};

std::vector<Section> sections(model::KwsSystem& sys) {
  std::vector<Section> out;
  auto add_tensor = [&](const std::string& name, Tensor& t) {
    std::vector<int> shape;
    for (int i = 0; i < t.ndim(); ++i) shape.push_back(t.dim(i));
    out.push_back({name, shape, t.data(), t.numel()});
  };
  auto add_vec = [&](const std::string& name, std::vector<float>& v) {
    out.push_back({name, {static_cast<int>(v.size())}, v.data(),
                   static_cast<int64_t>(v.size())});
  };

  auto& fe = sys.front();
  add_tensor("fb_w", fe.weights());
  add_tensor("fb_gamma", fe.gamma());
  add_tensor("fb_beta", fe.beta());
  add_vec("fb_bn_mean", fe.bn_state().running_mean);
  add_vec("fb_bn_var", fe.bn_state().running_var);
  for (auto& [name, t] : sys.back().parameters()) add_tensor(name, *t);
  auto bns = sys.back().bn_states();
  for (size_t i = 0; i < bns.size(); ++i) {
    add_vec("cnn_bn" + std::to_string(i) + "_mean", bns[i]->running_mean);
    add_vec("cnn_bn" + std::to_string(i) + "_var", bns[i]->running_var);
  }
  return out;
}

json config_header(model::KwsSystem& sys) {
  const auto& fc = sys.front().config();
  const auto& mc = sys.back().config();
  json h;
  h["version"] = 1;
  h["frontend"] = {
      {"arm", frontend::arm_to_string(fc.arm)},
      {"k", fc.k},
      {"bins", fc.bins},
      {"dropout_rate", fc.dropout_rate},
      {"dropout_mode", fc.dropout_mode == DropoutMode::kChannel ? "channel" : "element"},
  };
  h["model"] = {
      {"variant", mc.variant},  {"channels", mc.channels}, {"blocks", mc.blocks},
      {"dilations", mc.dilations}, {"frames", mc.frames},  {"k", mc.k},
      {"classes", mc.classes},
  };
  return h;
}

void parse_configs(const json& h, frontend::FrontendConfig& fc, model::ModelConfig& mc) {
  try {
    require(h.at("version").get<int>() == 1, Error::Kind::kFormat,
            "unsupported checkpoint version");
    const json& f = h.at("frontend");
    fc.arm = frontend::arm_from_string(f.at("arm").get<std::string>());
    fc.k = f.at("k").get<int>();
    fc.bins = f.at("bins").get<int>();
    fc.dropout_rate = f.at("dropout_rate").get<float>();
    const std::string mode = f.at("dropout_mode").get<std::string>();
    require(mode == "element" || mode == "channel", Error::Kind::kFormat,
            "unknown dropout mode '" + mode + "' in checkpoint");
    fc.dropout_mode = mode == "channel" ? DropoutMode::kChannel : DropoutMode::kElement;

    const json& m = h.at("model");
    mc.variant = m.at("variant").get<std::string>();
    mc.channels = m.at("channels").get<int>();
    mc.blocks = m.at("blocks").get<int>();
    mc.dilations = m.at("dilations").get<std::vector<int>>();
    mc.frames = m.at("frames").get<int>();
    mc.k = m.at("k").get<int>();
    mc.classes = m.at("classes").get<int>();
  } catch (const json::exception& e) {
    throw Error(Error::Kind::kFormat,
                std::string("checkpoint header is missing fields: ") + e.what());
  }
}

void append_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64(const std::string& buf, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Error::Kind::kData, "cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

json parse_header(const std::string& buf, size_t* payload_start) {
  const size_t magic_len = sizeof(kMagic) - 1;
  require(buf.size() >= magic_len + 8, Error::Kind::kFormat, "checkpoint file truncated");
  require(std::memcmp(buf.data(), kMagic, magic_len) == 0, Error::Kind::kFormat,
          "bad checkpoint magic");
  const uint64_t header_len = read_u64(buf, magic_len);
  require(buf.size() >= magic_len + 8 + header_len, Error::Kind::kFormat,
          "checkpoint header truncated");
  json h;
  try {
    h = json::parse(buf.substr(magic_len + 8, header_len));
  } catch (const json::exception& e) {
    throw Error(Error::Kind::kFormat,
                std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  *payload_start = magic_len + 8 + static_cast<size_t>(header_len);
  return h;
}

}  // namespace

void save(const std::string& path, model::KwsSystem& sys) {
  auto secs = sections(sys);
  json header = config_header(sys);
  json dir = json::array();
  int64_t offset = 0;
  for (const auto& s : secs) {
    dir.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", offset}});
    offset += s.numel;
  }
  header["tensors"] = dir;
  const std::string header_str = header.dump();

  std::string buf(kMagic, sizeof(kMagic) - 1);
  append_u64(buf, header_str.size());
  buf += header_str;
  for (const auto& s : secs)
    buf.append(reinterpret_cast<const char*>(s.data), static_cast<size_t>(s.numel) * 4);

  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), Error::Kind::kData, "cannot write checkpoint '" + tmp.string() + "'");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), Error::Kind::kData, "short write on '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  require(!ec, Error::Kind::kData, "cannot rename checkpoint into place: " + ec.message());
}

model::KwsSystem load(const std::string& path) {
  const std::string buf = slurp(path);
  size_t payload_start = 0;
  json header = parse_header(buf, &payload_start);

  frontend::FrontendConfig fc;
  model::ModelConfig mc;
  parse_configs(header, fc, mc);
  model::KwsSystem sys(fc, mc, 0);

  auto secs = sections(sys);
  const int64_t payload_floats = static_cast<int64_t>((buf.size() - payload_start) / 4);
  require(header.contains("tensors") && header["tensors"].is_array(), Error::Kind::kFormat,
          "checkpoint header lacks a tensor directory");

  size_t restored = 0;
  for (const auto& entry : header["tensors"]) {
    std::string name;
    std::vector<int> shape;
    int64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<std::vector<int>>();
      offset = entry.at("offset").get<int64_t>();
    } catch (const json::exception& e) {
      throw Error(Error::Kind::kFormat,
                  std::string("malformed tensor directory entry: ") + e.what());
    }
    Section* dst = nullptr;
    for (auto& s : secs)
      if (s.name == name) dst = &s;
    require(dst != nullptr, Error::Kind::kFormat,
            "checkpoint tensor '" + name + "' does not exist in the configured model");
    require(dst->shape == shape, Error::Kind::kFormat,
            "checkpoint tensor '" + name + "' has a mismatched shape");
    require(offset >= 0 && offset + dst->numel <= payload_floats, Error::Kind::kFormat,
            "checkpoint payload truncated at tensor '" + name + "'");
    std::memcpy(dst->data, buf.data() + payload_start + offset * 4,
                static_cast<size_t>(dst->numel) * 4);
    ++restored;
  }
  require(restored == secs.size(), Error::Kind::kFormat,
          "checkpoint is missing tensors: restored " + std::to_string(restored) + " of " +
              std::to_string(secs.size()));
  for (const auto& s : secs)
    for (int64_t i = 0; i < s.numel; ++i)
      require(std::isfinite(s.data[i]), Error::Kind::kFormat,
              "checkpoint tensor '" + s.name + "' contains non-finite values");
  return sys;
}

Meta read_meta(const std::string& path) {
  const std::string buf = slurp(path);
  size_t payload_start = 0;
  json header = parse_header(buf, &payload_start);
  Meta meta;
  parse_configs(header, meta.frontend, meta.model);
  return meta;
}

}  // namespace fbkws::checkpoint
