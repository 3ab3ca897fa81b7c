#include "hst/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hst {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint: " + path + ": " + what);
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) v.push_back(std::stoi(tok));
  return v;
}

std::string real_str(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <class T>
void append_store_rows(std::string& header, const ParamStoreT<T>& store,
                       const std::string& prefix, size_t& offset) {
  for (const std::string& name : store.names()) {
    const TensorT<T>& t = store.at(name);
    header += "tensor " + prefix + name + ' ' + std::to_string(t.ndim());
    for (int d : t.shape()) header += ' ' + std::to_string(d);
    header += ' ' + std::to_string(offset) + '\n';
    offset += t.numel() * sizeof(T);
  }
}

template <class T>
void append_payload(std::ofstream& out, const ParamStoreT<T>& store) {
  for (const std::string& name : store.names()) {
    const TensorT<T>& t = store.at(name);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(T)));
  }
}

struct TensorRow {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;
};

struct ParsedHeader {
  std::string dtype;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> meta;
  std::vector<TensorRow> tensors;
  std::streampos payload_start;
};

ParsedHeader parse_header(std::ifstream& in, const std::string& path) {
  ParsedHeader h;
  std::string line;
  if (!std::getline(in, line) || line != "hstckpt 1")
    fail(path, "missing \"hstckpt 1\" magic");
  if (!std::getline(in, line) || line.rfind("dtype ", 0) != 0)
    fail(path, "missing dtype line");
  h.dtype = line.substr(6);
  if (h.dtype != "f32" && h.dtype != "f64")
    fail(path, "unknown dtype \"" + h.dtype + "\"");

  while (std::getline(in, line)) {
    if (line == "end") {
      h.payload_start = in.tellg();
      return h;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag.rfind("config.", 0) == 0) {
      std::string value;
      ls >> value;
      h.config[tag.substr(7)] = value;
    } else if (tag.rfind("meta.", 0) == 0) {
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      h.meta[tag.substr(5)] = value;
    } else if (tag == "tensor") {
      TensorRow row;
      int ndim = 0;
      ls >> row.name >> ndim;
      if (!ls || ndim < 0 || ndim > 8) fail(path, "bad tensor row: " + line);
      row.shape.resize(ndim);
      for (int& d : row.shape) ls >> d;
      ls >> row.offset;
      if (!ls) fail(path, "bad tensor row: " + line);
      h.tensors.push_back(std::move(row));
    } else {
      fail(path, "unrecognized header line: " + line);
    }
  }
  fail(path, "header never reached \"end\"");
}

HSTConfig config_from_fields(const std::map<std::string, std::string>& f,
                             const std::string& path) {
  HSTConfig c;
  auto want = [&](const char* key) -> const std::string& {
    auto it = f.find(key);
    if (it == f.end()) fail(path, std::string("missing config.") + key);
    return it->second;
  };
  c.branches = std::stoi(want("branches"));
  c.channels = split_ints(want("channels"));
  c.rstbs = split_ints(want("rstbs"));
  c.stl_per_rstb = std::stoi(want("stl_per_rstb"));
  c.window = std::stoi(want("window"));
  c.heads = std::stoi(want("heads"));
  c.mlp_ratio = std::stod(want("mlp_ratio"));
  c.scale = std::stoi(want("scale"));
  c.in_channels = std::stoi(want("in_channels"));
  c.out_channels = std::stoi(want("out_channels"));
  return c;
}

}  // namespace

template <class T>
long long CheckpointT<T>::meta_int(const std::string& key,
                                   long long fallback) const {
  auto it = meta.find(key);
  return it == meta.end() ? fallback : std::stoll(it->second);
}

template <class T>
void save_checkpoint(const std::string& path, const CheckpointT<T>& ckpt) {
  std::string header = "hstckpt 1\n";
  header += std::string("dtype ") + dtype_name<T>() + '\n';
  const HSTConfig& c = ckpt.config;
  header += "config.branches " + std::to_string(c.branches) + '\n';
  header += "config.channels " + join_ints(c.channels) + '\n';
  header += "config.rstbs " + join_ints(c.rstbs) + '\n';
  header += "config.stl_per_rstb " + std::to_string(c.stl_per_rstb) + '\n';
  header += "config.window " + std::to_string(c.window) + '\n';
  header += "config.heads " + std::to_string(c.heads) + '\n';
  header += "config.mlp_ratio " + real_str(c.mlp_ratio) + '\n';
  header += "config.scale " + std::to_string(c.scale) + '\n';
  header += "config.in_channels " + std::to_string(c.in_channels) + '\n';
  header += "config.out_channels " + std::to_string(c.out_channels) + '\n';
  for (const auto& [key, value] : ckpt.meta)
    header += "meta." + key + ' ' + value + '\n';

  size_t offset = 0;
  append_store_rows(header, ckpt.params, "", offset);
  append_store_rows(header, ckpt.opt_m, "opt.m.", offset);
  append_store_rows(header, ckpt.opt_v, "opt.v.", offset);
  header += "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  append_payload(out, ckpt.params);
  append_payload(out, ckpt.opt_m);
  append_payload(out, ckpt.opt_v);
  if (!out) fail(path, "write failed");
}

template <class T>
CheckpointT<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  ParsedHeader h = parse_header(in, path);
  if (h.dtype != dtype_name<T>())
    fail(path, "dtype is " + h.dtype + " but caller expects " +
                   dtype_name<T>());

  CheckpointT<T> ckpt;
  ckpt.config = config_from_fields(h.config, path);
  ckpt.meta = std::move(h.meta);

  for (const TensorRow& row : h.tensors) {
    TensorT<T> t(row.shape);
    in.seekg(h.payload_start + static_cast<std::streamoff>(row.offset));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!in) fail(path, "payload truncated at tensor \"" + row.name + "\"");
    if (row.name.rfind("opt.m.", 0) == 0)
      ckpt.opt_m.add(row.name.substr(6), std::move(t));
    else if (row.name.rfind("opt.v.", 0) == 0)
      ckpt.opt_v.add(row.name.substr(6), std::move(t));
    else
      ckpt.params.add(row.name, std::move(t));
  }
  return ckpt;
}

std::string checkpoint_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  return parse_header(in, path).dtype;
}

template struct CheckpointT<float>;
template struct CheckpointT<double>;
template void save_checkpoint<float>(const std::string&, const CheckpointT<float>&);
template void save_checkpoint<double>(const std::string&, const CheckpointT<double>&);
template CheckpointT<float> load_checkpoint<float>(const std::string&);
template CheckpointT<double> load_checkpoint<double>(const std::string&);

}  // namespace hst
