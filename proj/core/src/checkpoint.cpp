#include "archrecon/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "archrecon/errors.hpp"
#include "detail/bytes.hpp"

namespace archrecon {

using nlohmann::json;

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    index.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(t.value.size());
  }
  const json header{{"format_version", kCheckpointFormatVersion},
                    {"kind", ckpt.kind},
                    {"config", ckpt.config},
                    {"metadata", ckpt.metadata},
                    {"tensors", std::move(index)}};
  const std::string text = header.dump();

  std::string bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes.reserve(bytes.size() + offset * 4);
  for (const auto& t : ckpt.tensors) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) detail::put_f32(bytes, t.value.data()[i]);
  }

  // Write to a sibling file first so an interrupted save never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  if (!detail::slurp(path, bytes)) throw MalformedFile("cannot open " + path.string());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw MalformedFile(where + "bad checkpoint magic");
  }
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t header_len = detail::get_u32(data + 8);
  if (bytes.size() < 12 + std::size_t{header_len}) throw MalformedFile(where + "truncated header");

  Checkpoint ckpt;
  try {
    const json header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    if (header.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw MalformedFile(where + "checkpoint version mismatch");
    }
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.metadata = header.at("metadata");
    const std::size_t blob_floats = (bytes.size() - 12 - header_len) / 4;
    if ((bytes.size() - 12 - header_len) % 4 != 0) throw MalformedFile(where + "ragged tensor blob");
    const unsigned char* blob = data + 12 + header_len;
    std::size_t expected = 0;
    for (const auto& tj : header.at("tensors")) {
      NamedTensor t;
      t.name = tj.at("name").get<std::string>();
      const auto rows = tj.at("rows").get<Eigen::Index>();
      const auto cols = tj.at("cols").get<Eigen::Index>();
      const auto offset = tj.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > blob_floats) {
        throw MalformedFile(where + "tensor " + t.name + " lies outside the blob");
      }
      t.value.resize(rows, cols);
      for (Eigen::Index i = 0; i < t.value.size(); ++i) {
        t.value.data()[i] = detail::get_f32(blob + 4 * (offset + static_cast<std::size_t>(i)));
      }
      expected += static_cast<std::size_t>(t.value.size());
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected != blob_floats) throw MalformedFile(where + "tensor blob size mismatch");
  } catch (const json::exception& e) {
    throw MalformedFile(where + "header: " + e.what());
  }
  return ckpt;
}

void store_params(Checkpoint& ckpt, const nn::ParamList& params, bool with_velocity) {
  for (const auto* p : params) ckpt.tensors.push_back({p->name, p->value});
  if (with_velocity) {
    for (const auto* p : params) ckpt.tensors.push_back({p->name + "@v", p->velocity});
  }
}

void load_params(const Checkpoint& ckpt, const nn::ParamList& params, bool with_velocity) {
  auto fetch = [&](const std::string& name, nn::Mat& dst) {
    const auto* t = ckpt.find(name);
    if (!t) throw MalformedFile("checkpoint lacks tensor " + name);
    if (t->value.rows() != dst.rows() || t->value.cols() != dst.cols()) {
      throw MalformedFile("checkpoint tensor " + name + " has the wrong shape");
    }
    dst = t->value;
  };
  for (auto* p : params) {
    fetch(p->name, p->value);
    if (with_velocity) {
      fetch(p->name + "@v", p->velocity);
    } else {
      p->velocity.setZero();
    }
    p->grad.setZero();
  }
}

}  // namespace archrecon
