#include "mvherit/io_util.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mvherit/errors.hpp"

namespace mvherit {

std::string format_double(double v) {
  // %.17g always round-trips; prefer the shorter %.15g / %.16g when exact.
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v || (v != v && back != back)) return buf;
  }
  return buf;
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + path);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

std::string manifest_text(const std::string& command,
                          const std::map<std::string, std::string>& flags,
                          const std::vector<std::string>& input_paths) {
  nlohmann::ordered_json j;
  j["tool"] = "mvherit";
  j["version"] = "0.1.0";
  j["command"] = command;
  nlohmann::ordered_json jf = nlohmann::ordered_json::object();
  for (const auto& [k, v] : flags) jf[k] = v;
  j["flags"] = jf;
  nlohmann::ordered_json ji = nlohmann::ordered_json::object();
  for (const auto& p : input_paths) ji[p] = "fnv1a64:" + digest_file(p);
  j["inputs"] = ji;
  return j.dump(2) + "\n";
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& flags,
                    const std::vector<std::string>& input_paths) {
  std::ofstream out(out_dir + "/manifest.json");
  if (!out) throw IoError("cannot write manifest in " + out_dir);
  out << manifest_text(command, flags, input_paths);
}

void write_matrix_tsv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& col_names,
                      const std::vector<std::string>& row_names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  if (!col_names.empty()) {
    for (std::size_t i = 0; i < col_names.size(); ++i) {
      if (i) out << '\t';
      out << col_names[i];
    }
    out << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!row_names.empty()) out << row_names[static_cast<std::size_t>(i)] << '\t';
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace mvherit
