// Layers and training utilities on top of the tape: MLPs, Adam, and the
// binary parameter container.

#ifndef REPS_NN_HPP
#define REPS_NN_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reps/autodiff.hpp"
#include "reps/error.hpp"

namespace reps::nn {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;

enum class Activation { relu, identity };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Row-wise MLP: x (n x widths[0]) -> n x widths.back(). Hidden layers use
/// `activation`; the last layer uses it only when `activate_last`.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::string name, std::vector<std::size_t> widths, std::mt19937_64& rng, bool activate_last = false,
      Activation activation = Activation::relu)
      : name_(std::move(name)), widths_(std::move(widths)), activation_(activation), activate_last_(activate_last) {
    detail::require(widths_.size() >= 2, "Mlp: need at least input and output widths");
    for (std::size_t w : widths_) detail::require(w >= 1, "Mlp: widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const auto in = Eigen::Index(widths_[l]), out = Eigen::Index(widths_[l + 1]);
      weights_.emplace_back(name_ + ".w" + std::to_string(l), uniform_init(in, out, widths_[l], rng));
      biases_.emplace_back(name_ + ".b" + std::to_string(l), uniform_init(1, out, widths_[l], rng));
    }
  }

  Tensor forward(Tape& tape, const Tensor& x) const {
    if (std::size_t(x.cols()) != widths_.front())
      throw InvalidArgument(name_ + ": input width " + std::to_string(x.cols()) + " != " +
                            std::to_string(widths_.front()));
    Tensor h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = ad::add_row(ad::matmul(h, tape.parameter(weights_[l])), tape.parameter(biases_[l]));
      const bool last = l + 1 == weights_.size();
      if (activation_ == Activation::relu && (!last || activate_last_)) h = ad::relu(h);
    }
    return h;
  }

  const std::string& name() const { return name_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t in_width() const { return widths_.front(); }
  std::size_t out_width() const { return widths_.back(); }
  std::size_t layers() const { return weights_.size(); }
  Parameter& weight(std::size_t l) { return weights_.at(l); }
  Parameter& bias(std::size_t l) { return biases_.at(l); }
  const Parameter& weight(std::size_t l) const { return weights_.at(l); }
  const Parameter& bias(std::size_t l) const { return biases_.at(l); }
  bool activate_last() const { return activate_last_; }
  Activation activation() const { return activation_; }

  void zero_last_layer() {
    weights_.back().value.setZero();
    biases_.back().value.setZero();
  }

  void collect(std::vector<Parameter*>& out) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
  }

  nlohmann::json manifest() const {
    return {{"name", name_},
            {"widths", widths_},
            {"activation", to_string(activation_)},
            {"activate_last", activate_last_}};
  }

 private:
  std::string name_;
  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::relu;
  bool activate_last_ = false;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

// =============================================================================
// Adam
// =============================================================================

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  /// One update from the accumulated grads, scaled by `grad_scale`.
  void step(double grad_scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      if (!p.grad.allFinite()) throw InvalidState("Adam: non-finite gradient in " + p.name);
      const Matrix g = p.grad * grad_scale;
      m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g.cwiseProduct(g);
      if (cfg_.lr == 0) continue;
      p.value.array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
  }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::uint64_t t_ = 0;
};

// =============================================================================
// Parameter container
// =============================================================================
//
// Layout: "REPS" | u32 version | per tensor until EOF:
//   u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 payload
// All integers and floats little-endian.

inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
bool get_le(std::istream& is, T& v) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return true;
}

}  // namespace detail

inline void write_tensors(std::ostream& os, std::span<const Parameter* const> params) {
  os.write("REPS", 4);
  detail::put_le<std::uint32_t>(os, kContainerVersion);
  for (const Parameter* p : params) {
    detail::put_le<std::uint32_t>(os, std::uint32_t(p->name.size()));
    os.write(p->name.data(), std::streamsize(p->name.size()));
    detail::put_le<std::uint32_t>(os, 2);
    detail::put_le<std::uint64_t>(os, std::uint64_t(p->value.rows()));
    detail::put_le<std::uint64_t>(os, std::uint64_t(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) detail::put_le<double>(os, p->value.data()[i]);
  }
}

inline std::map<std::string, Matrix> read_tensors(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "REPS", 4) != 0) throw ParseError("weights: bad magic bytes");
  std::uint32_t version = 0;
  if (!detail::get_le(is, version)) throw ParseError("weights: truncated header");
  if (version != kContainerVersion) throw ParseError("weights: unsupported version " + std::to_string(version));
  std::map<std::string, Matrix> out;
  std::uint32_t name_len = 0;
  while (detail::get_le(is, name_len)) {
    if (name_len > (1u << 16)) throw ParseError("weights: implausible name length");
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !detail::get_le(is, rank)) throw ParseError("weights: truncated record");
    if (rank < 1 || rank > 2) throw ParseError("weights: tensor " + name + " has unsupported rank");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r)
      if (!detail::get_le(is, dims[r])) throw ParseError("weights: truncated dims");
    const std::uint64_t rows = rank == 2 ? dims[0] : 1, cols = rank == 2 ? dims[1] : dims[0];
    if (rows * cols > (1ull << 28)) throw ParseError("weights: tensor " + name + " too large");
    Matrix m{Eigen::Index(rows), Eigen::Index(cols)};
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (!detail::get_le(is, m.data()[i])) throw ParseError("weights: truncated payload in " + name);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

/// Writes the binary container at `path` and, when `manifest` is non-null,
/// the JSON topology manifest at `path` + ".json".
inline void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params,
                            const nlohmann::json& manifest = nullptr) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  write_tensors(os, params);
  if (!os) throw InvalidState("failed writing " + path.string());
  if (!manifest.is_null()) {
    std::ofstream js(path.string() + ".json");
    js << manifest.dump(2) << "\n";
  }
}

inline std::map<std::string, Matrix> load_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open weights file " + path.string());
  return read_tensors(is);
}

inline nlohmann::json load_manifest(const std::filesystem::path& path) {
  std::ifstream js(path.string() + ".json");
  if (!js) return nullptr;
  try {
    return nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weights manifest: ") + e.what());
  }
}

/// Copies tensors into `params` by name; names and shapes must match.
inline void assign_parameters(const std::map<std::string, Matrix>& tensors, std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw ParseError("weights: missing tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ParseError("weights: shape mismatch for " + p->name);
    p->value = it->second;
    p->zero_grad();
  }
}

/// FNV-1a over parameter names and raw value bytes.
inline std::uint64_t checksum(std::span<const Parameter* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  for (const Parameter* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), std::size_t(p->value.size()) * sizeof(double));
  }
  return h;
}

template <class Model>
std::vector<const Parameter*> const_params(Model& m) {
  auto ps = m.parameters();
  return {ps.begin(), ps.end()};
}

}  // namespace reps::nn

#endif  // REPS_NN_HPP
