#include "dtl/rng.hpp"

#include <cmath>
#include <numbers>

namespace dtl {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t(kMul0) * c[0];
        const std::uint64_t p1 = std::uint64_t(kMul1) * c[2];
        const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += kWeyl0;
        k[1] += kWeyl1;
    }
    return c;
}

std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    return h;
}

Stream::Stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
    const std::uint64_t k = splitmix(seed ^ splitmix(hash_tag(purpose)));
    key_ = {std::uint32_t(k), std::uint32_t(k >> 32)};
    stream_ = index;
}

void Stream::refill() {
    buf_ = philox4x32({std::uint32_t(block_), std::uint32_t(block_ >> 32), std::uint32_t(stream_),
                       std::uint32_t(stream_ >> 32)},
                      key_);
    ++block_;
    pos_ = 0;
}

std::uint64_t Stream::next_u64() {
    if (pos_ > 2) refill();
    const std::uint64_t lo = buf_[pos_], hi = buf_[pos_ + 1];
    pos_ += 2;
    return lo | (hi << 32);
}

double Stream::uniform() {
    // 53 random bits, shifted off zero
    return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(th);
    has_spare_ = true;
    return rad * std::cos(th);
}

void Stream::fill_normal(double* out, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) out[i] = stddev * normal();
}

Eigen::MatrixXd Stream::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
    Eigen::MatrixXd m(rows, cols);
    fill_normal(m.data(), std::size_t(m.size()), stddev);
    return m;
}

Eigen::VectorXd Stream::normal_vector(Eigen::Index n, double stddev) {
    Eigen::VectorXd v(n);
    fill_normal(v.data(), std::size_t(n), stddev);
    return v;
}

}  // namespace dtl
