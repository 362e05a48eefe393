#include "steamcast/spen.hpp"

#include <cmath>

namespace steamcast {

std::string to_string(SpenVariant v) {
    switch (v) {
        case SpenVariant::NoEmbd: return "noembd";
        case SpenVariant::TimeEmbd: return "timeembd";
        case SpenVariant::Full: return "spen";
    }
    return "spen";
}

SpenVariant spen_variant_from_string(const std::string& s) {
    if (s == "noembd") return SpenVariant::NoEmbd;
    if (s == "timeembd") return SpenVariant::TimeEmbd;
    if (s == "spen" || s == "full") return SpenVariant::Full;
    throw ConfigError("unknown SpEn variant '" + s + "' (expected noembd|timeembd|spen)");
}

SpenCode encode_index(int index, int capacity) {
    if (capacity < 1 || capacity > 65536)
        throw BoundsError("encode_index: capacity out of range");
    if (index < 0 || index >= capacity)
        throw BoundsError("encode_index: index " + std::to_string(index) +
                          " out of range for capacity " + std::to_string(capacity));
    SpenCode code;
    code.index = index;
    code.capacity = capacity;
    int nbits = 0;
    while ((1 << nbits) < capacity) ++nbits;
    code.bits.resize(static_cast<std::size_t>(nbits));
    for (int i = 0; i < nbits; ++i)
        code.bits[static_cast<std::size_t>(i)] = (index >> (nbits - 1 - i)) & 1;
    for (int i = 0; i < 4; ++i) {
        const real freq = std::pow(10000.0, -2.0 * i / 8.0);
        code.rho[static_cast<std::size_t>(2 * i)] = std::sin(index * freq);
        code.rho[static_cast<std::size_t>(2 * i + 1)] = std::cos(index * freq);
    }
    return code;
}

std::array<real, 16> compose_codes(const SpenCode& pos, const SpenCode& time, SpenVariant v) {
    std::array<real, 16> mod;
    mod.fill(1.0);
    if (v == SpenVariant::NoEmbd) return mod;
    for (int i = 0; i < 8; ++i) mod[static_cast<std::size_t>(8 + i)] = time.rho[static_cast<std::size_t>(i)];
    if (v == SpenVariant::Full)
        for (int i = 0; i < 8; ++i) mod[static_cast<std::size_t>(i)] = pos.rho[static_cast<std::size_t>(i)];
    return mod;
}

Tensor spen_modulation(const std::vector<int>& pos_index, const std::vector<int>& time_index,
                       SpenVariant v, int d, int pos_capacity, int time_capacity) {
    if (d % 16 != 0)
        throw ConfigError("SpEn requires token width divisible by 16, got " + std::to_string(d));
    if (pos_index.size() != time_index.size())
        throw DimensionError("spen_modulation: index length mismatch");
    const int b = static_cast<int>(pos_index.size());
    Tensor mod({b, d});
    for (int i = 0; i < b; ++i) {
        const auto row = compose_codes(encode_index(pos_index[static_cast<std::size_t>(i)], pos_capacity),
                                       encode_index(time_index[static_cast<std::size_t>(i)], time_capacity), v);
        for (int j = 0; j < d; ++j) mod.at(i, j) = row[static_cast<std::size_t>(j % 16)];
    }
    return mod;
}

Tensor apply_spen(const Tensor& h, const std::vector<int>& pos_index,
                  const std::vector<int>& time_index, SpenVariant v, int pos_capacity,
                  int time_capacity) {
    if (h.rank() != 2) throw DimensionError("apply_spen: expected [b,d] tokens");
    if (static_cast<int>(pos_index.size()) != h.dim(0))
        throw DimensionError("apply_spen: one index pair per token row required");
    Tensor mod = spen_modulation(pos_index, time_index, v, h.dim(1), pos_capacity, time_capacity);
    Tensor out = h;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mod.data[i];
    return out;
}

}  // namespace steamcast
