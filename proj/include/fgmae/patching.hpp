#pragma once

// Image <-> patch sequence conversion and masked-autoencoder token bookkeeping.
// Patches are numbered in row-major grid order; a flattened patch lists its
// pixels row by row, channels innermost.

#include "fgmae/datamodel.hpp"
#include "fgmae/rng.hpp"

#include <cstdint>
#include <vector>

namespace fgmae {

struct PatchGridSpec {
  int patch = 0;
  int height = 0;
  int width = 0;

  int rows() const { return height / patch; }
  int cols() const { return width / patch; }
  int count() const { return rows() * cols(); }

  // Throws InvalidShape unless H and W are positive multiples of P.
  static PatchGridSpec make(int height, int width, int patch);
};

using BinaryMask = std::vector<std::uint8_t>;

template <typename T>
Matrix<T> patchify(const Matrix<T>& image, const PatchGridSpec& spec);

template <typename T>
Matrix<T> unpatchify(const Matrix<T>& patches, const PatchGridSpec& spec);

// round(r*N) with ties away from zero.
int masked_count(int n, double ratio);

// Uniformly random subset of exactly masked_count(n, ratio) indices set to 1.
BinaryMask generate_mask(int n, double ratio, Rng& rng);

template <typename T>
TokenBatch<T> apply_mask(const Matrix<T>& tokens, const BinaryMask& mask);

// Inverse of apply_mask for a decoder: masked positions receive mask_token.
template <typename T>
Matrix<T> restore_order(const TokenBatch<T>& encoded, const RowVector<T>& mask_token, const BinaryMask& mask);

std::vector<Index> kept_indices(const BinaryMask& mask);

}  // namespace fgmae
