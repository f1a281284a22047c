#include "newsbandit/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "newsbandit/error.hpp"

namespace nb::io {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw IoError("record is not a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw IoError(std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const auto& f = field(j, name);
  if (!f.is_string()) throw IoError(std::string("field '") + name + "' must be a string");
  return f.get<std::string>();
}

std::vector<double> number_array(const json& f, const char* name) {
  if (!f.is_array()) throw IoError(std::string("field '") + name + "' must be an array");
  std::vector<double> out;
  out.reserve(f.size());
  for (const auto& v : f) {
    if (!v.is_number()) throw IoError(std::string("field '") + name + "' must hold numbers");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw IoError(std::string("field '") + name + "' holds a non-finite value");
    out.push_back(d);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  std::vector<EmbeddingRecord> out;
  for_each_json_line(path, [&](const json& j) {
    EmbeddingRecord r{string_field(j, "id"), number_array(field(j, "vec"), "vec")};
    if (r.vec.empty()) throw IoError("field 'vec' must not be empty");
    if (!out.empty() && out.front().vec.size() != r.vec.size())
      throw IoError("inconsistent embedding length " + std::to_string(r.vec.size()) + " vs " +
                    std::to_string(out.front().vec.size()));
    out.push_back(std::move(r));
  });
  return out;
}

void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << json{{"id", r.id}, {"vec", r.vec}}.dump() << '\n';
}

std::vector<TopicRecord> read_topics(const std::filesystem::path& path) {
  std::vector<TopicRecord> out;
  for_each_json_line(path, [&](const json& j) {
    TopicRecord r{string_field(j, "topic"), {}};
    const auto& items = field(j, "items");
    if (!items.is_array()) throw IoError("field 'items' must be an array");
    for (const auto& v : items) {
      if (!v.is_string()) throw IoError("field 'items' must hold strings");
      r.items.push_back(v.get<std::string>());
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_topics(const std::filesystem::path& path, const std::vector<TopicRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << json{{"topic", r.topic}, {"items", r.items}}.dump() << '\n';
}

std::vector<LogRecord> read_logs(const std::filesystem::path& path) {
  std::vector<LogRecord> out;
  for_each_json_line(path, [&](const json& j) {
    const auto& label = field(j, "label");
    if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1))
      throw IoError("field 'label' must be 0 or 1");
    out.push_back({string_field(j, "impression"), string_field(j, "user"), string_field(j, "item"), label.get<int>()});
  });
  return out;
}

void write_logs(const std::filesystem::path& path, const std::vector<LogRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records)
    out << json{{"impression", r.impression}, {"user", r.user}, {"item", r.item}, {"label", r.label}}.dump() << '\n';
}

json simulator_to_json(const GroundTruthModel& model, const std::vector<std::string>& user_names,
                       const std::vector<std::string>& item_names) {
  require_dim(static_cast<long>(user_names.size()), static_cast<long>(model.n_users()), "simulator user names");
  require_dim(static_cast<long>(item_names.size()), static_cast<long>(model.n_items()), "simulator item names");
  auto rows = [](const RowMatrix& m, const std::vector<std::string>& names) {
    json arr = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> v(m.row(r).data(), m.row(r).data() + m.cols());
      arr.push_back({{"id", names[static_cast<std::size_t>(r)]}, {"vec", v}});
    }
    return arr;
  };
  return json{{"dim", model.dim()},
              {"threshold", model.threshold},
              {"flip_prob", model.flip_prob},
              {"seed", model.seed},
              {"users", rows(model.user_vecs, user_names)},
              {"items", rows(model.item_vecs, item_names)}};
}

NamedSimulator simulator_from_json(const json& doc) {
  NamedSimulator out;
  const auto dim = field(doc, "dim").get<std::size_t>();
  if (dim == 0) throw IoError("simulator: dim must be positive");
  out.model.threshold = field(doc, "threshold").get<double>();
  out.model.flip_prob = field(doc, "flip_prob").get<double>();
  out.model.seed = doc.value("seed", std::uint64_t{0});
  if (!(out.model.threshold > 0.0 && out.model.threshold < 1.0)) throw IoError("simulator: threshold outside (0,1)");
  if (!(out.model.flip_prob >= 0.0 && out.model.flip_prob <= 1.0)) throw IoError("simulator: flip_prob outside [0,1]");
  auto load = [&](const char* key, RowMatrix& m, std::vector<std::string>& names) {
    const auto& arr = field(doc, key);
    if (!arr.is_array()) throw IoError(std::string("simulator: '") + key + "' must be an array");
    m.resize(static_cast<Eigen::Index>(arr.size()), static_cast<Eigen::Index>(dim));
    Eigen::Index r = 0;
    for (const auto& rec : arr) {
      names.push_back(string_field(rec, "id"));
      const auto v = number_array(field(rec, "vec"), "vec");
      if (v.size() != dim) throw IoError("simulator: vector length differs from dim");
      for (std::size_t c = 0; c < dim; ++c) m(r, static_cast<Eigen::Index>(c)) = v[c];
      ++r;
    }
  };
  load("users", out.model.user_vecs, out.user_names);
  load("items", out.model.item_vecs, out.item_names);
  return out;
}

json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace nb::io
