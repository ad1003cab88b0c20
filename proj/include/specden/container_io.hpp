#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "specden/containers.hpp"

namespace specden {

/// Writes a spectrum image in the SIC container layout (little-endian):
/// magic "SIC1", u32 rows, u32 cols, u32 n_channels, f64 offset_kev,
/// f64 dispersion_kev, u32 provenance length, provenance UTF-8 bytes,
/// then rows*cols*n_channels f64 values (channel fastest, then col, then
/// row). Byte-stable: saving the same cube twice yields identical files.
void save_container(const SpectrumImage& cube, const std::filesystem::path& path);

/// Reads a SIC container. Throws IoError on unreadable paths, FormatError
/// on bad magic or a header whose declared sizes disagree with the payload
/// length.
SpectrumImage load_container(const std::filesystem::path& path);

/// Deterministic float formatting used by every text artifact
/// (shortest round-trippable form via %.17g).
std::string format_double(double v);

/// One header line "energy_kev,counts", then one line per channel.
void write_spectrum_csv(const Vector& spectrum, const EnergyAxis& axis,
                        const std::filesystem::path& path);

/// 2D map as CSV: one header line naming the columns, then one line per
/// pixel row.
void write_map_csv(const Matrix& map, const std::filesystem::path& path);

/// Generic two-column series CSV with the given header line.
void write_series_csv(const std::vector<std::pair<double, double>>& series,
                      const std::string& header, const std::filesystem::path& path);

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples) with linear
/// min-max scaling; the scale is written to "<path>.scale.txt" so values
/// can be mapped back.
void write_map_pgm(const Matrix& map, const std::filesystem::path& path);

} // namespace specden
