#pragma once

#include <string>
#include <vector>

#include "navfeat/common.hpp"
#include "navfeat/features.hpp"
#include "navfeat/image_ops.hpp"
#include "navfeat/pairing.hpp"
#include "navfeat/preprocess.hpp"

namespace navfeat {

// Binary containers are little-endian. Encode/Decode work on byte strings so
// round trips can be checked without touching the disk; NaN payloads are
// copied bit for bit.
std::string EncodeGeo1(const CoordGrid& coords);
CoordGrid DecodeGeo1(const std::string& bytes);
std::string EncodeCor1(const CorrespondenceField& field);
CorrespondenceField DecodeCor1(const std::string& bytes);

constexpr std::uint16_t kDfm1Version = 1;
std::string EncodeDfm1(const DenseFeatureMap& map);
DenseFeatureMap DecodeDfm1(const std::string& bytes);

// "RAW1", u32 H, u32 W, u8 type (1 = u16, 2 = f32), then the samples.
enum class RawSampleType : std::uint8_t { kU16 = 1, kF32 = 2 };
std::string EncodeRaw1(const RawImage& img, RawSampleType type);
RawImage DecodeRaw1(const std::string& bytes);

std::string ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::string& bytes);

CoordGrid ReadGeo1(const std::string& path);
void WriteGeo1(const std::string& path, const CoordGrid& coords);
CorrespondenceField ReadCor1(const std::string& path);
void WriteCor1(const std::string& path, const CorrespondenceField& field);
DenseFeatureMap ReadDfm1(const std::string& path);
void WriteDfm1(const std::string& path, const DenseFeatureMap& map);

// Grayscale PNG, 8 or 16 bit (alpha is dropped). Values are not rescaled.
RawImage ReadPngRaw(const std::string& path);
Image8 ReadPng8(const std::string& path);
void WritePng8(const std::string& path, const Image8& img);

// PNG or RAW1 by content.
RawImage ReadRawImage(const std::string& path);

// Sidecar JSON with the viewing geometry of a georeferenced image.
std::string SidecarToJson(const GeoImage& img);
void ApplySidecarJson(const std::string& text, GeoImage* img);

// <stem>.png plus optional <stem>.json sidecar and <stem>.geo backplane.
GeoImage LoadGeoImage(const std::string& png_path);

struct PairManifestRow {
  std::string image_a;
  std::string image_b;
  std::string corr_file;
  double phi = kNaN;
  double alpha = kNaN;
  double beta = kNaN;
  PairSource source = PairSource::kReal;
};

// CSV with header image_a,image_b,corr_file,phi,alpha,beta,source. Missing
// angles are empty cells.
std::vector<PairManifestRow> ReadPairManifest(const std::string& path);
void WritePairManifest(const std::string& path, const std::vector<PairManifestRow>& rows);

}  // namespace navfeat
