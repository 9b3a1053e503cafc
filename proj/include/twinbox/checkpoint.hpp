#ifndef TWINBOX_CHECKPOINT_HPP
#define TWINBOX_CHECKPOINT_HPP

#include <Eigen/Dense>

#include <iosfwd>
#include <map>
#include <string>

namespace twinbox::ckpt {

// Versioned text container for model checkpoints: a `kind` line, string
// metadata and named tensors. Values are written as C hexfloats, so the
// round-trip is lossless and the files are byte-deterministic.
//
//   twinbox-checkpoint v1
//   kind <kind>
//   meta <key> <value>
//   tensor <name> <rows> <cols>
//   <rows lines of space-separated hexfloats>
//   end

class Writer {
 public:
  Writer(std::ostream& out, const std::string& kind);
  void meta(const std::string& key, const std::string& value);
  void meta(const std::string& key, double value);
  void meta(const std::string& key, int value);
  void tensor(const std::string& name, const Eigen::MatrixXd& m);
  void finish();
  ~Writer();

 private:
  std::ostream& out_;
  bool finished_ = false;
};

class Reader {
 public:
  explicit Reader(std::istream& in);

  const std::string& kind() const { return kind_; }
  bool has_meta(const std::string& key) const;
  std::string meta_str(const std::string& key) const;
  double meta_double(const std::string& key) const;
  int meta_int(const std::string& key) const;
  bool has_tensor(const std::string& name) const;
  const Eigen::MatrixXd& tensor(const std::string& name) const;

 private:
  std::string kind_;
  std::map<std::string, std::string> meta_;
  std::map<std::string, Eigen::MatrixXd> tensors_;
};

}  // namespace twinbox::ckpt

#endif  // TWINBOX_CHECKPOINT_HPP
