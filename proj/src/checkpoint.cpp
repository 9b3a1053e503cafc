#include "twinbox/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace twinbox::ckpt {

namespace {

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

Writer::Writer(std::ostream& out, const std::string& kind) : out_(out) {
  out_ << "twinbox-checkpoint v1\n";
  out_ << "kind " << kind << '\n';
}

void Writer::meta(const std::string& key, const std::string& value) {
  out_ << "meta " << key << ' ' << value << '\n';
}

void Writer::meta(const std::string& key, double value) { meta(key, hexfloat(value)); }

void Writer::meta(const std::string& key, int value) { meta(key, std::to_string(value)); }

void Writer::tensor(const std::string& name, const Eigen::MatrixXd& m) {
  out_ << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out_ << ' ';
      out_ << hexfloat(m(r, c));
    }
    out_ << '\n';
  }
}

void Writer::finish() {
  if (!finished_) {
    out_ << "end\n";
    finished_ = true;
  }
}

Writer::~Writer() { finish(); }

Reader::Reader(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "twinbox-checkpoint v1") {
    throw std::runtime_error("checkpoint: bad or missing header");
  }
  if (!std::getline(in, line) || line.rfind("kind ", 0) != 0) {
    throw std::runtime_error("checkpoint: missing kind");
  }
  kind_ = line.substr(5);
  while (std::getline(in, line)) {
    if (line == "end") return;
    if (line.rfind("meta ", 0) == 0) {
      const std::string rest = line.substr(5);
      const std::size_t sp = rest.find(' ');
      if (sp == std::string::npos) throw std::runtime_error("checkpoint: malformed meta line");
      meta_[rest.substr(0, sp)] = rest.substr(sp + 1);
      continue;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream hdr(line.substr(7));
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      if (!(hdr >> name >> rows >> cols) || rows < 0 || cols < 0) {
        throw std::runtime_error("checkpoint: malformed tensor header");
      }
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated tensor");
        const char* p = line.c_str();
        char* endp = nullptr;
        for (Eigen::Index c = 0; c < cols; ++c) {
          m(r, c) = std::strtod(p, &endp);
          if (endp == p) throw std::runtime_error("checkpoint: bad value in tensor " + name);
          p = endp;
        }
      }
      tensors_[name] = std::move(m);
      continue;
    }
    throw std::runtime_error("checkpoint: unexpected line: " + line);
  }
  throw std::runtime_error("checkpoint: missing end marker");
}

bool Reader::has_meta(const std::string& key) const { return meta_.count(key) != 0; }

std::string Reader::meta_str(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw std::runtime_error("checkpoint: missing meta " + key);
  return it->second;
}

double Reader::meta_double(const std::string& key) const {
  return std::strtod(meta_str(key).c_str(), nullptr);
}

int Reader::meta_int(const std::string& key) const { return std::stoi(meta_str(key)); }

bool Reader::has_tensor(const std::string& name) const { return tensors_.count(name) != 0; }

const Eigen::MatrixXd& Reader::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
  return it->second;
}

}  // namespace twinbox::ckpt
