#include "manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

#include "hwsc/csv.hpp"
#include "hwsc/error.hpp"

namespace hwsc::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

json resolved_options(const CLI::App& app) {
  json out = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_expected_max() > 1) {
        out[name] = res;
      } else {
        out[name] = res.empty() || opt->get_type_size() == 0 ? std::string("true") : res.back();
      }
    } else if (opt->get_type_size() == 0) {
      out[name] = "false";
    } else {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

void Manifest::write(const std::filesystem::path& dir, const std::string& name) const {
  json j;
  j["tool"] = "hwsc";
  j["command"] = command;
  j["config"] = config;
  j["seeds"] = seeds;
  j["inputs"] = json::array();
  for (const auto& p : inputs) j["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  j["outputs"] = json::array();
  for (const auto& p : outputs) j["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(dir / p)}});
  for (const auto& [k, v] : extra.items()) j[k] = v;
  csv::write_file(dir / name, j.dump(2) + "\n");
}

}  // namespace hwsc::cli
