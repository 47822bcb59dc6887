#include "hwscene/gltf.hpp"

#include "hwscene/error.hpp"
#include "hwscene/json_io.hpp"

#include <cstring>

namespace hwscene {

namespace {

constexpr const char* kModule = "cad_assembly";
constexpr std::uint32_t kMagic = 0x46546C67;  // "glTF"
constexpr std::uint32_t kChunkJson = 0x4E4F534A;
constexpr std::uint32_t kChunkBin = 0x004E4942;

constexpr int kFloat = 5126;
constexpr int kUnsignedByte = 5121;
constexpr int kUnsignedShort = 5123;
constexpr int kUnsignedInt = 5125;

[[noreturn]] void fail(ErrorKind kind, const std::string& what) { throw Error(kind, kModule, "glb: " + what); }

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

class AccessorReader {
 public:
  AccessorReader(const json& doc, std::string_view bin) : doc_(doc), bin_(bin) {}

  std::vector<Eigen::Vector3d> read_vec3(int index) const {
    const auto& acc = accessor(index);
    if (acc.value("componentType", 0) != kFloat || acc.value("type", "") != "VEC3") {
      fail(ErrorKind::unsupported, "POSITION accessor must be float VEC3");
    }
    const auto count = acc.at("count").get<std::size_t>();
    const auto [base, stride] = locate(acc, 12, count);
    std::vector<Eigen::Vector3d> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const char* p = bin_.data() + base + i * stride;
      out[i] = {load<float>(p), load<float>(p + 4), load<float>(p + 8)};
    }
    return out;
  }

  std::vector<std::uint32_t> read_indices(int index) const {
    const auto& acc = accessor(index);
    if (acc.value("type", "") != "SCALAR") fail(ErrorKind::unsupported, "index accessor must be SCALAR");
    const int ct = acc.value("componentType", 0);
    std::size_t size = 0;
    if (ct == kUnsignedByte) size = 1;
    else if (ct == kUnsignedShort) size = 2;
    else if (ct == kUnsignedInt) size = 4;
    else fail(ErrorKind::unsupported, "unsupported index component type " + std::to_string(ct));
    const auto count = acc.at("count").get<std::size_t>();
    const auto [base, stride] = locate(acc, size, count);
    std::vector<std::uint32_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const char* p = bin_.data() + base + i * stride;
      out[i] = size == 1 ? load<std::uint8_t>(p) : size == 2 ? load<std::uint16_t>(p) : load<std::uint32_t>(p);
    }
    return out;
  }

 private:
  const json& accessor(int index) const {
    const auto& accs = doc_.at("accessors");
    if (index < 0 || static_cast<std::size_t>(index) >= accs.size()) fail(ErrorKind::integrity, "accessor index out of range");
    const auto& acc = accs[static_cast<std::size_t>(index)];
    if (acc.contains("sparse")) fail(ErrorKind::unsupported, "sparse accessors");
    return acc;
  }

  std::pair<std::size_t, std::size_t> locate(const json& acc, std::size_t elem, std::size_t count) const {
    if (!acc.contains("bufferView")) fail(ErrorKind::unsupported, "accessor without bufferView");
    const auto& views = doc_.at("bufferViews");
    const auto vi = acc.at("bufferView").get<std::size_t>();
    if (vi >= views.size()) fail(ErrorKind::integrity, "bufferView index out of range");
    const auto& view = views[vi];
    if (view.value("buffer", 0) != 0) fail(ErrorKind::unsupported, "only the embedded BIN buffer is supported");
    const auto view_off = view.value("byteOffset", std::size_t{0});
    const auto view_len = view.at("byteLength").get<std::size_t>();
    const auto stride = view.value("byteStride", elem);
    const auto base = view_off + acc.value("byteOffset", std::size_t{0});
    if (count > 0 && (base + (count - 1) * stride + elem > view_off + view_len || view_off + view_len > bin_.size())) {
      fail(ErrorKind::integrity, "accessor exceeds its buffer");
    }
    return {base, stride};
  }

  const json& doc_;
  std::string_view bin_;
};

}  // namespace

GltfDocument parse_glb(std::string_view bytes) {
  if (bytes.size() < 20) fail(ErrorKind::parse, "file too short");
  if (load<std::uint32_t>(bytes.data()) != kMagic) fail(ErrorKind::parse, "bad magic");
  if (load<std::uint32_t>(bytes.data() + 4) != 2) fail(ErrorKind::unsupported, "only glTF version 2");
  const auto total = load<std::uint32_t>(bytes.data() + 8);
  if (total > bytes.size()) fail(ErrorKind::parse, "declared length exceeds file");

  std::string_view json_chunk, bin_chunk;
  std::size_t pos = 12;
  while (pos + 8 <= total) {
    const auto len = load<std::uint32_t>(bytes.data() + pos);
    const auto type = load<std::uint32_t>(bytes.data() + pos + 4);
    if (pos + 8 + len > total) fail(ErrorKind::parse, "chunk exceeds file");
    const auto data = bytes.substr(pos + 8, len);
    if (type == kChunkJson && json_chunk.empty()) json_chunk = data;
    else if (type == kChunkBin && bin_chunk.empty()) bin_chunk = data;
    pos += 8 + len;
  }
  if (json_chunk.empty()) fail(ErrorKind::parse, "missing JSON chunk");
  const json doc = parse_json(json_chunk, kModule, "glb JSON chunk");

  GltfDocument out;
  const AccessorReader reader(doc, bin_chunk);
  try {
    const auto& nodes = doc.value("nodes", json::array());
    out.nodes.resize(nodes.size());
    std::vector<int> parent(nodes.size(), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      auto& node = out.nodes[i];
      node.name = n.value("name", "");
      for (const auto& c : n.value("children", json::array())) {
        const int ci = c.get<int>();
        if (ci < 0 || static_cast<std::size_t>(ci) >= nodes.size()) fail(ErrorKind::integrity, "child index out of range");
        if (parent[static_cast<std::size_t>(ci)] != -1) {
          fail(ErrorKind::integrity, "node " + std::to_string(ci) + " has more than one parent");
        }
        parent[static_cast<std::size_t>(ci)] = static_cast<int>(i);
        node.children.push_back(ci);
      }
      if (n.contains("matrix")) {
        const auto& m = n.at("matrix");
        if (m.size() != 16) fail(ErrorKind::parse, "node matrix must have 16 entries");
        Eigen::Matrix4d mat;
        for (int k = 0; k < 16; ++k) mat(k % 4, k / 4) = m[static_cast<std::size_t>(k)].get<double>();
        Eigen::Matrix3d lin = mat.topLeftCorner<3, 3>();
        node.scale = lin.colwise().norm().transpose();
        if ((node.scale.array() <= 0).any()) fail(ErrorKind::unsupported, "singular node matrix");
        lin = lin * node.scale.cwiseInverse().asDiagonal();
        if (lin.determinant() < 0) fail(ErrorKind::unsupported, "mirrored node transform");
        node.rotation = Eigen::Quaterniond(lin).normalized();
        node.translation = mat.topRightCorner<3, 1>();
      } else {
        if (n.contains("translation")) node.translation = vec3_from_json(n.at("translation"));
        if (n.contains("rotation")) {
          const auto& r = n.at("rotation");  // glTF order: x, y, z, w
          node.rotation = Eigen::Quaterniond(r.at(3).get<double>(), r.at(0).get<double>(), r.at(1).get<double>(),
                                             r.at(2).get<double>()).normalized();
        }
        if (n.contains("scale")) node.scale = vec3_from_json(n.at("scale"));
      }
      if (n.contains("mesh")) {
        const auto mi = n.at("mesh").get<std::size_t>();
        const auto& meshes = doc.at("meshes");
        if (mi >= meshes.size()) fail(ErrorKind::integrity, "mesh index out of range");
        TriangleMesh mesh;
        for (const auto& prim : meshes[mi].at("primitives")) {
          if (prim.value("mode", 4) != 4) continue;  // points/lines carry no surface
          TriangleMesh part;
          part.vertices = reader.read_vec3(prim.at("attributes").at("POSITION").get<int>());
          std::vector<std::uint32_t> idx;
          if (prim.contains("indices")) {
            idx = reader.read_indices(prim.at("indices").get<int>());
          } else {
            idx.resize(part.vertices.size());
            for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<std::uint32_t>(k);
          }
          if (idx.size() % 3 != 0) fail(ErrorKind::parse, "triangle index count not a multiple of 3");
          for (std::size_t k = 0; k < idx.size(); k += 3) part.triangles.push_back({idx[k], idx[k + 1], idx[k + 2]});
          part.validate();
          mesh.append(part);
        }
        node.mesh = std::move(mesh);
      }
    }

    // Parent chains longer than the node count can only come from a cycle.
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      int p = parent[i];
      for (std::size_t steps = 0; p != -1; ++steps) {
        if (steps > nodes.size() || p == static_cast<int>(i)) {
          throw Error(ErrorKind::integrity, kModule, "glb: cyclic node hierarchy at node " + std::to_string(i));
        }
        p = parent[static_cast<std::size_t>(p)];
      }
    }

    if (doc.contains("scenes") && !doc.at("scenes").empty()) {
      const auto si = doc.value("scene", std::size_t{0});
      for (const auto& r : doc.at("scenes").at(si).value("nodes", json::array())) {
        const int ri = r.get<int>();
        if (ri < 0 || static_cast<std::size_t>(ri) >= nodes.size()) fail(ErrorKind::integrity, "scene root out of range");
        if (parent[static_cast<std::size_t>(ri)] != -1) fail(ErrorKind::integrity, "scene root has a parent");
        out.roots.push_back(ri);
      }
    } else {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (parent[i] == -1) out.roots.push_back(static_cast<int>(i));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, e.what());
  }
  return out;
}

std::string write_glb(const GltfDocument& gdoc) {
  json doc;
  doc["asset"] = {{"version", "2.0"}, {"generator", "hwscene"}};
  std::string bin;
  json nodes = json::array(), meshes = json::array(), accessors = json::array(), views = json::array();

  const auto add_view = [&](const std::string& data, int target) {
    while (bin.size() % 4 != 0) bin.push_back('\0');
    views.push_back({{"buffer", 0}, {"byteOffset", bin.size()}, {"byteLength", data.size()}, {"target", target}});
    bin += data;
    return static_cast<int>(views.size() - 1);
  };

  for (const auto& node : gdoc.nodes) {
    json n;
    if (!node.name.empty()) n["name"] = node.name;
    if (!node.children.empty()) n["children"] = node.children;
    if (!node.translation.isZero(0)) n["translation"] = to_json(node.translation);
    if (node.rotation.coeffs() != Eigen::Quaterniond::Identity().coeffs()) {
      n["rotation"] = {node.rotation.x(), node.rotation.y(), node.rotation.z(), node.rotation.w()};
    }
    if (node.scale != Eigen::Vector3d::Ones()) n["scale"] = to_json(node.scale);
    if (node.mesh && !node.mesh->vertices.empty()) {
      const auto& m = *node.mesh;
      std::string pos;
      Eigen::Vector3f lo = Eigen::Vector3f::Constant(std::numeric_limits<float>::max());
      Eigen::Vector3f hi = -lo;
      for (const auto& v : m.vertices) {
        const Eigen::Vector3f f = v.cast<float>();
        lo = lo.cwiseMin(f);
        hi = hi.cwiseMax(f);
        pos.append(reinterpret_cast<const char*>(f.data()), 12);
      }
      std::string idx;
      for (const auto& t : m.triangles) idx.append(reinterpret_cast<const char*>(t.data()), 12);
      const int pv = add_view(pos, 34962);
      accessors.push_back({{"bufferView", pv}, {"componentType", kFloat}, {"count", m.vertices.size()},
                           {"type", "VEC3"}, {"min", {lo.x(), lo.y(), lo.z()}}, {"max", {hi.x(), hi.y(), hi.z()}}});
      const int pa = static_cast<int>(accessors.size() - 1);
      const int iv = add_view(idx, 34963);
      accessors.push_back({{"bufferView", iv}, {"componentType", kUnsignedInt}, {"count", m.triangles.size() * 3},
                           {"type", "SCALAR"}});
      const int ia = static_cast<int>(accessors.size() - 1);
      meshes.push_back({{"primitives", json::array({{{"attributes", {{"POSITION", pa}}}, {"indices", ia}, {"mode", 4}}})}});
      n["mesh"] = meshes.size() - 1;
    }
    nodes.push_back(std::move(n));
  }
  while (bin.size() % 4 != 0) bin.push_back('\0');
  doc["nodes"] = nodes;
  doc["scenes"] = json::array({{{"nodes", gdoc.roots}}});
  doc["scene"] = 0;
  if (!meshes.empty()) doc["meshes"] = meshes;
  if (!accessors.empty()) doc["accessors"] = accessors;
  if (!views.empty()) doc["bufferViews"] = views;
  if (!bin.empty()) doc["buffers"] = json::array({{{"byteLength", bin.size()}}});

  std::string js = doc.dump();
  while (js.size() % 4 != 0) js.push_back(' ');

  std::string out;
  const auto put32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  const auto total = static_cast<std::uint32_t>(12 + 8 + js.size() + (bin.empty() ? 0 : 8 + bin.size()));
  put32(kMagic);
  put32(2);
  put32(total);
  put32(static_cast<std::uint32_t>(js.size()));
  put32(kChunkJson);
  out += js;
  if (!bin.empty()) {
    put32(static_cast<std::uint32_t>(bin.size()));
    put32(kChunkBin);
    out += bin;
  }
  return out;
}

}  // namespace hwscene
