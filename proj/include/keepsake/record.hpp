#pragma once

// Line-oriented record framing shared by every on-disk log.
//
//   field_1 TAB field_2 ... TAB field_n TAB crc32-hex LF
//
// Fields are UTF-8 with backslash escapes for '\\', TAB, LF and CR. The CRC
// is the IEEE CRC32 of the bytes before the final TAB, written as eight
// lowercase hex digits. The first record of every file is the header
// ("H", "keepsake", "1", flags) where flags is "plain"; the slot is reserved
// for at-rest encryption.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace keepsake::record {

using Fields = std::vector<std::string>;

std::uint32_t crc32(std::string_view bytes);

std::string escape(std::string_view raw);
// Throws CorruptRecord on a dangling or unknown escape.
std::string unescape(std::string_view escaped);

// Encoded line including the trailing newline.
std::string encode(std::span<const std::string> fields);
// Line without its newline. Empty when the checksum or escaping is bad.
std::optional<Fields> decode(std::string_view line);

// Shortest round-trip decimal form.
std::string format_number(double v);
double parse_number(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string encode_vector(std::span<const double> v);  // base64 of little-endian float64
std::vector<double> decode_vector(std::string_view text);

inline constexpr std::string_view kHeaderFlagsPlain = "plain";

// Append-only record file. Opening recovers the longest valid prefix:
// a torn or corrupt record and everything after it is discarded and the
// file truncated back to the last good record. A default-constructed log
// lives in memory only.
class AppendLog {
 public:
  AppendLog() = default;
  static AppendLog open(const std::filesystem::path& path, bool sync = true);

  AppendLog(AppendLog&& other) noexcept;
  AppendLog& operator=(AppendLog&& other) noexcept;
  AppendLog(const AppendLog&) = delete;
  AppendLog& operator=(const AppendLog&) = delete;
  ~AppendLog();

  // Records after the header.
  const std::vector<Fields>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  void append(Fields fields);

  bool persistent() const { return fd_ >= 0; }
  const std::filesystem::path& path() const { return path_; }
  // Bytes discarded by recovery on open.
  std::size_t recovered_bytes() const { return recovered_bytes_; }

 private:
  void write_all(std::string_view bytes);

  std::filesystem::path path_;
  int fd_ = -1;
  bool sync_ = true;
  std::size_t recovered_bytes_ = 0;
  std::vector<Fields> records_;
};

}  // namespace keepsake::record
