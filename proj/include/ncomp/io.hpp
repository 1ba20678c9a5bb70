#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "ncomp/model.hpp"
#include "ncomp/prune.hpp"
#include "ncomp/report.hpp"

namespace ncomp {

// NCMF ("network compression model format"), version 1. Little-endian
// throughout. Layout:
//   "NCMF" | u16 version | u32 arch-name length | arch-name bytes
//   per parameter group:
//     u32 class-id length | class-id bytes | u8 dtype (0 = float32)
//     u32 rank | u32 dims[rank] | float32 payload | bit-packed mask
//   u32 CRC-32 of all preceding bytes
// Masks pack 8 positions per byte, LSB first, zero-padded to the byte
// boundary. Groups run until the trailing checksum; the reader rebuilds the
// layer graph from the arch name and fails on any structural mismatch.
void save_model(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_model(const std::filesystem::path& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

// Desk-scale synthetic classification data: every class has a distinct 2x2
// bright block plus a class-scaled horizontal intensity ramp, over 1x8x8
// images, with Gaussian pixel noise on top. Fully determined by the seed.
struct SyntheticSpec {
  Index num_classes = 10;
  Index train_samples = 5000;
  Index test_samples = 1000;
  double noise_std = 0.3;
  std::uint64_t seed = 0;
};

std::pair<Dataset<float>, Dataset<float>> gen_synthetic(const SyntheticSpec& spec);

// The class base pattern without noise (test hook and nearest-pattern oracle).
Tensor<float> synthetic_base_pattern(Index cls, Index num_classes);

// IDX ingestion (big-endian, as the format prescribes): images magic
// 0x00000803, labels magic 0x00000801. Pixels scale to [0, 1].
Dataset<float> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void save_idx(const Dataset<float>& data, const std::filesystem::path& images, const std::filesystem::path& labels);

void save_report(const CompressionReport& report, const std::filesystem::path& path);
CompressionReport load_report(const std::filesystem::path& path);

void save_history(const PruneHistory& history, const std::filesystem::path& path);

}  // namespace ncomp
