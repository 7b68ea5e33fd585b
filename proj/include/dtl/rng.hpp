#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace dtl {

// Philox4x32-10 counter-based generator. A stream is identified by
// (seed, purpose, index); draws are a pure function of that triple and the
// position in the stream.
class Stream {
public:
    Stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

    std::uint64_t next_u64();
    double uniform();       // in (0, 1)
    double normal();        // standard normal, Box-Muller
    void fill_normal(double* out, std::size_t n, double stddev = 1.0);
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);
    Eigen::VectorXd normal_vector(Eigen::Index n, double stddev = 1.0);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t hash_tag(std::string_view tag);

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

}  // namespace dtl
