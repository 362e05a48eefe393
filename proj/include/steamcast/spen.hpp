#pragma once

#include <array>
#include <string>
#include <vector>

#include "steamcast/tensor.hpp"

namespace steamcast {

enum class SpenVariant { NoEmbd, TimeEmbd, Full };

std::string to_string(SpenVariant v);
SpenVariant spen_variant_from_string(const std::string& s);

// Sinusoidal code of one position or time index. `bits` is the
// ceil(log2(capacity))-length binary representation of the index, kept for
// documentation and tests; the 8-value rho carries the actual encoding:
//   rho[2i]   = sin(index / 10000^(2i/8))
//   rho[2i+1] = cos(index / 10000^(2i/8))     for i in {0,1,2,3}
struct SpenCode {
    int index = 0;
    int capacity = 1;
    std::vector<int> bits;
    std::array<real, 8> rho{};
};

SpenCode encode_index(int index, int capacity);

// 16-value modulation: [pos.rho || time.rho] for Full; TimeEmbd replaces the
// position half with ones; NoEmbd is all ones (identity modulation).
std::array<real, 16> compose_codes(const SpenCode& pos, const SpenCode& time, SpenVariant v);

// Constant modulation matrix for a token matrix: row i is the 16-value code
// of (pos_index[i], time_index[i]) tiled d/16 times. No learned parameters.
Tensor spen_modulation(const std::vector<int>& pos_index, const std::vector<int>& time_index,
                       SpenVariant v, int d, int pos_capacity, int time_capacity);

// h[b,d] with each row multiplied element-wise by its tiled modulation.
Tensor apply_spen(const Tensor& h, const std::vector<int>& pos_index,
                  const std::vector<int>& time_index, SpenVariant v, int pos_capacity,
                  int time_capacity);

}  // namespace steamcast
