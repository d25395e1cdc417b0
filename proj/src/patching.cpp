#include "fgmae/patching.hpp"

#include <cmath>
#include <numeric>

namespace fgmae {

PatchGridSpec PatchGridSpec::make(int height, int width, int patch) {
  if (patch <= 0 || height <= 0 || width <= 0 || height % patch != 0 || width % patch != 0)
    throw InvalidShape("image " + std::to_string(height) + "x" + std::to_string(width) +
                       " is not divisible into " + std::to_string(patch) + "-pixel patches");
  return PatchGridSpec{patch, height, width};
}

template <typename T>
Matrix<T> patchify(const Matrix<T>& image, const PatchGridSpec& spec) {
  if (image.rows() != Index(spec.height) * spec.width)
    throw InvalidShape("patchify: image has " + std::to_string(image.rows()) + " pixels, expected " +
                       std::to_string(spec.height * spec.width));
  const Index c = image.cols();
  const int p = spec.patch;
  Matrix<T> out(spec.count(), Index(p) * p * c);
  for (int gy = 0; gy < spec.rows(); ++gy)
    for (int gx = 0; gx < spec.cols(); ++gx) {
      const Index row = Index(gy) * spec.cols() + gx;
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px) {
          const Index pix = Index(gy * p + py) * spec.width + gx * p + px;
          out.row(row).segment((Index(py) * p + px) * c, c) = image.row(pix);
        }
    }
  return out;
}

template <typename T>
Matrix<T> unpatchify(const Matrix<T>& patches, const PatchGridSpec& spec) {
  const int p = spec.patch;
  if (patches.rows() != spec.count() || patches.cols() % (Index(p) * p) != 0)
    throw InvalidShape("unpatchify: expected " + std::to_string(spec.count()) + " rows of P*P*C values");
  const Index c = patches.cols() / (Index(p) * p);
  Matrix<T> image(Index(spec.height) * spec.width, c);
  for (int gy = 0; gy < spec.rows(); ++gy)
    for (int gx = 0; gx < spec.cols(); ++gx) {
      const Index row = Index(gy) * spec.cols() + gx;
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px) {
          const Index pix = Index(gy * p + py) * spec.width + gx * p + px;
          image.row(pix) = patches.row(row).segment((Index(py) * p + px) * c, c);
        }
    }
  return image;
}

int masked_count(int n, double ratio) { return static_cast<int>(std::lround(ratio * n)); }

BinaryMask generate_mask(int n, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidParam("mask ratio must lie in [0,1)");
  if (n <= 0) throw InvalidShape("mask length must be positive");
  const int k = masked_count(n, ratio);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // partial Fisher-Yates: the first k slots form a uniform k-subset
  for (int i = 0; i < k; ++i) {
    const int j = uniform_int(rng, i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  BinaryMask mask(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < k; ++i) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return mask;
}

std::vector<Index> kept_indices(const BinaryMask& mask) {
  std::vector<Index> kept;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == 0) kept.push_back(static_cast<Index>(i));
  return kept;
}

template <typename T>
TokenBatch<T> apply_mask(const Matrix<T>& tokens, const BinaryMask& mask) {
  if (tokens.rows() != static_cast<Index>(mask.size()))
    throw InvalidShape("apply_mask: " + std::to_string(tokens.rows()) + " tokens vs mask of length " +
                       std::to_string(mask.size()));
  TokenBatch<T> out;
  out.index_map = kept_indices(mask);
  out.binary_mask = mask;
  out.tokens.resize(static_cast<Index>(out.index_map.size()), tokens.cols());
  for (std::size_t i = 0; i < out.index_map.size(); ++i)
    out.tokens.row(static_cast<Index>(i)) = tokens.row(out.index_map[i]);
  return out;
}

template <typename T>
Matrix<T> restore_order(const TokenBatch<T>& encoded, const RowVector<T>& mask_token, const BinaryMask& mask) {
  const auto kept = kept_indices(mask);
  const Index offset = encoded.has_cls ? 1 : 0;
  if (encoded.tokens.rows() - offset != static_cast<Index>(kept.size()))
    throw InvalidShape("restore_order: " + std::to_string(encoded.tokens.rows() - offset) +
                       " encoded tokens but mask keeps " + std::to_string(kept.size()));
  if (mask_token.size() != encoded.tokens.cols()) throw InvalidShape("restore_order: mask token width");
  Matrix<T> out(static_cast<Index>(mask.size()), encoded.tokens.cols());
  Index next = offset;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.row(static_cast<Index>(i)) = mask_token;
    else out.row(static_cast<Index>(i)) = encoded.tokens.row(next++);
  }
  return out;
}

template Matrix<float> patchify(const Matrix<float>&, const PatchGridSpec&);
template Matrix<double> patchify(const Matrix<double>&, const PatchGridSpec&);
template Matrix<float> unpatchify(const Matrix<float>&, const PatchGridSpec&);
template Matrix<double> unpatchify(const Matrix<double>&, const PatchGridSpec&);
template TokenBatch<float> apply_mask(const Matrix<float>&, const BinaryMask&);
template TokenBatch<double> apply_mask(const Matrix<double>&, const BinaryMask&);
template Matrix<float> restore_order(const TokenBatch<float>&, const RowVector<float>&, const BinaryMask&);
template Matrix<double> restore_order(const TokenBatch<double>&, const RowVector<double>&, const BinaryMask&);

}  // namespace fgmae
