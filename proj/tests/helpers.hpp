#ifndef EEGEMO_TESTS_HELPERS_HPP
#define EEGEMO_TESTS_HELPERS_HPP

// Test-only utilities. The DFT here is the independent O(N^2) oracle the FFT
// is checked against; it must stay independent of the dsp implementation.

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline std::vector<std::complex<double>> oracle_dft(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      const double a = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(t) /
                       static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

// One-sided power under the same convention as the implementation:
// P[0] = |X0|^2/N^2, P[N/2] = |X_{N/2}|^2/N^2, else 2|Xk|^2/N^2.
inline std::vector<double> oracle_power(const std::vector<double>& frame) {
  const auto spec = oracle_dft(frame);
  const size_t n = frame.size();
  std::vector<double> p(n / 2 + 1);
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  p[0] = std::norm(spec[0]) * inv_n2;
  p[n / 2] = std::norm(spec[n / 2]) * inv_n2;
  for (size_t k = 1; k < n / 2; ++k) p[k] = 2.0 * std::norm(spec[k]) * inv_n2;
  return p;
}

inline double oracle_band_power(const std::vector<double>& power, double bin_hz,
                                double lo, double hi, bool include_upper) {
  double total = 0.0;
  for (size_t k = 0; k < power.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= lo && (f < hi || (include_upper && f == hi))) total += power[k];
  }
  return total;
}

// Minimal NPY 1.0 writer (little-endian f4/f8, C order) for building inputs.
template <typename T>
void write_npy(const std::string& path, const std::vector<uint64_t>& shape,
               const std::vector<T>& data) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::string dict = "{'descr': '<f";
  dict += std::is_same_v<T, float> ? '4' : '8';
  dict += "', 'fortran_order': False, 'shape': (";
  for (size_t i = 0; i < shape.size(); ++i)
    dict += std::to_string(shape[i]) + (shape.size() == 1 || i + 1 < shape.size() ? ", " : "");
  dict += "), }";
  const size_t base = 10;
  const size_t padded = ((base + dict.size() + 1 + 63) / 64) * 64;
  dict.append(padded - base - dict.size() - 1, ' ');
  dict += '\n';

  std::ofstream os(path, std::ios::binary);
  const unsigned char magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  os.write(reinterpret_cast<const char*>(magic), 8);
  const uint16_t hlen = static_cast<uint16_t>(dict.size());
  const unsigned char lenb[2] = {static_cast<unsigned char>(hlen & 0xff),
                                 static_cast<unsigned char>(hlen >> 8)};
  os.write(reinterpret_cast<const char*>(lenb), 2);
  os.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(T)));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

inline void write_file_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace testutil

#endif
