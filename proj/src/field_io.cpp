#include "stm/field_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace stm {

namespace {

using json = nlohmann::json;

void append_f32(std::string& out, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void append_f64(std::string& out, double v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

float read_f32(const char* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

double read_f64(const char* p) {
  double v;
  std::memcpy(&v, p, 8);
  return v;
}

json matrix_to_json(const MatX& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX matrix_from_json(const json& rows, Eigen::Index cols_expected) {
  MatX m(rows.size(), cols_expected);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& row = rows[i];
    if (static_cast<Eigen::Index>(row.size()) != cols_expected)
      throw IoError("field json: bad row width");
    for (Eigen::Index j = 0; j < cols_expected; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

}  // namespace

std::string field_to_ply_bytes(const GaussianField& field, bool double_precision) {
  field.validate();
  const int b = field.sh_basis_count();
  const int rest = 3 * (b - 1);
  const char* type = double_precision ? "double" : "float";
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  header << "comment sh_degree " << field.sh_degree << "\n";
  header << "element vertex " << field.size() << "\n";
  header << "property " << type << " x\nproperty " << type << " y\nproperty "
         << type << " z\n";
  for (int i = 0; i < 3; ++i) header << "property " << type << " f_dc_" << i << "\n";
  for (int i = 0; i < rest; ++i)
    header << "property " << type << " f_rest_" << i << "\n";
  header << "property " << type << " opacity\n";
  for (int i = 0; i < 3; ++i) header << "property " << type << " scale_" << i << "\n";
  for (int i = 0; i < 4; ++i) header << "property " << type << " rot_" << i << "\n";
  header << "end_header\n";

  std::string out = header.str();
  out.reserve(out.size() + size_t(field.size()) * (14 + 3 * size_t(b)) *
                               (double_precision ? 8 : 4));
  auto put = [&](double v) {
    if (double_precision)
      append_f64(out, v);
    else
      append_f32(out, float(v));
  };
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    for (int j = 0; j < 3; ++j) put(field.positions(i, j));
    // f_dc: basis 0 rgb; f_rest: channel-major (all R rest, then G, then B).
    for (int c = 0; c < 3; ++c) put(field.sh(i, c));
    for (int c = 0; c < 3; ++c)
      for (int k = 1; k < b; ++k) put(field.sh(i, 3 * k + c));
    put(field.opacity_logits(i));
    for (int j = 0; j < 3; ++j) put(field.log_scales(i, j));
    for (int j = 0; j < 4; ++j) put(field.rotations(i, j));
  }
  return out;
}

GaussianField field_from_ply_bytes(const std::string& bytes) {
  size_t header_end = bytes.find("end_header\n");
  if (header_end == std::string::npos) throw IoError("ply: missing end_header");
  std::istringstream header(bytes.substr(0, header_end));
  std::string line;
  Eigen::Index count = -1;
  bool is_double = false;
  std::vector<std::string> props;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string kind;
      ls >> kind >> count;
      if (kind != "vertex") throw IoError("ply: unsupported element " + kind);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float" && type != "double")
        throw IoError("ply: unsupported property type " + type);
      if (!props.empty() && is_double != (type == "double"))
        throw IoError("ply: mixed property types unsupported");
      is_double = type == "double";
      props.push_back(name);
    } else if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw IoError("ply: unsupported format " + fmt);
    }
  }
  if (count < 0) throw IoError("ply: missing vertex element");

  int rest = 0;
  for (const auto& p : props)
    if (p.rfind("f_rest_", 0) == 0) ++rest;
  if (rest % 3 != 0) throw IoError("ply: f_rest count not divisible by 3");
  const int b = rest / 3 + 1;
  int degree = 0;
  while ((degree + 1) * (degree + 1) < b) ++degree;
  if ((degree + 1) * (degree + 1) != b) throw IoError("ply: sh coefficient count is not a square");

  auto index_of = [&](const std::string& name) {
    for (size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    throw IoError("ply: missing property " + name);
  };

  const size_t elem = is_double ? 8 : 4;
  const size_t stride = props.size() * elem;
  const char* payload = bytes.data() + header_end + 11;
  if (bytes.size() - (header_end + 11) < stride * size_t(count))
    throw IoError("ply: truncated payload");

  GaussianField f = GaussianField::zeros(count, degree);
  const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
  const int iop = index_of("opacity");
  int isc[3], irt[4], idc[3];
  for (int j = 0; j < 3; ++j) isc[j] = index_of("scale_" + std::to_string(j));
  for (int j = 0; j < 4; ++j) irt[j] = index_of("rot_" + std::to_string(j));
  for (int j = 0; j < 3; ++j) idc[j] = index_of("f_dc_" + std::to_string(j));
  std::vector<int> irest(rest);
  for (int j = 0; j < rest; ++j) irest[j] = index_of("f_rest_" + std::to_string(j));

  for (Eigen::Index i = 0; i < count; ++i) {
    const char* row = payload + stride * size_t(i);
    auto get = [&](int idx) {
      return is_double ? read_f64(row + 8 * idx) : double(read_f32(row + 4 * idx));
    };
    f.positions(i, 0) = get(ix);
    f.positions(i, 1) = get(iy);
    f.positions(i, 2) = get(iz);
    for (int c = 0; c < 3; ++c) f.sh(i, c) = get(idc[c]);
    for (int c = 0; c < 3; ++c)
      for (int k = 1; k < b; ++k)
        f.sh(i, 3 * k + c) = get(irest[c * (b - 1) + (k - 1)]);
    f.opacity_logits(i) = get(iop);
    for (int j = 0; j < 3; ++j) f.log_scales(i, j) = get(isc[j]);
    for (int j = 0; j < 4; ++j) f.rotations(i, j) = get(irt[j]);
  }
  return f;
}

void save_ply(const GaussianField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const std::string bytes = field_to_ply_bytes(field);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

GaussianField load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return field_from_ply_bytes(ss.str());
}

void save_field_json(const GaussianField& field, const std::string& path) {
  field.validate();
  json j;
  j["sh_degree"] = field.sh_degree;
  j["positions"] = matrix_to_json(field.positions);
  j["rotations"] = matrix_to_json(field.rotations);
  j["log_scales"] = matrix_to_json(field.log_scales);
  json op = json::array();
  for (Eigen::Index i = 0; i < field.size(); ++i) op.push_back(field.opacity_logits(i));
  j["opacity_logits"] = std::move(op);
  j["sh"] = matrix_to_json(field.sh);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << j.dump(1, '\t') << "\n";
}

GaussianField load_field_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  in >> j;
  GaussianField f;
  f.sh_degree = j.at("sh_degree").get<int>();
  const int b = f.sh_basis_count();
  f.positions = matrix_from_json(j.at("positions"), 3);
  f.rotations = matrix_from_json(j.at("rotations"), 4);
  f.log_scales = matrix_from_json(j.at("log_scales"), 3);
  const auto& op = j.at("opacity_logits");
  f.opacity_logits.resize(op.size());
  for (Eigen::Index i = 0; i < f.opacity_logits.size(); ++i)
    f.opacity_logits(i) = op[i].get<double>();
  f.sh = matrix_from_json(j.at("sh"), 3 * b);
  f.validate();
  return f;
}

}  // namespace stm
