#include "keepsake/record.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <bit>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "keepsake/error.hpp"

namespace keepsake::record {

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string escape(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '\\') {
      out += escaped[i];
      continue;
    }
    if (++i == escaped.size()) throw Error(ErrorCode::CorruptRecord, "dangling escape");
    switch (escaped[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: throw Error(ErrorCode::CorruptRecord, "unknown escape");
    }
  }
  return out;
}

std::string encode(std::span<const std::string> fields) {
  std::string body;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) body += '\t';
    body += escape(fields[i]);
  }
  char crc[9];
  std::snprintf(crc, sizeof crc, "%08x", crc32(body));
  return body + '\t' + crc + '\n';
}

std::optional<Fields> decode(std::string_view line) {
  const auto tab = line.rfind('\t');
  if (tab == std::string_view::npos || line.size() - tab - 1 != 8) return std::nullopt;
  const auto body = line.substr(0, tab);
  std::uint32_t stored = 0;
  const auto hex = line.substr(tab + 1);
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), stored, 16);
  if (ec != std::errc{} || ptr != hex.data() + hex.size() || stored != crc32(body)) {
    return std::nullopt;
  }
  Fields fields;
  try {
    std::size_t start = 0;
    while (true) {
      const auto next = body.find('\t', start);
      fields.push_back(unescape(body.substr(start, next - start)));
      if (next == std::string_view::npos) break;
      start = next + 1;
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  return fields;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_number(std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::CorruptRecord, "bad number '" + std::string(text) + "'");
  }
  return v;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t b0 = bytes[i];
    const std::uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out += kB64[(triple >> 18) & 63];
    out += kB64[(triple >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(triple >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kB64[triple & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::CorruptRecord, "base64 length");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        v[j] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (v[j] = b64_value(c)) < 0) throw Error(ErrorCode::CorruptRecord, "base64 digit");
    }
    const std::uint32_t triple = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(triple >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(triple >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(triple));
  }
  return out;
}

std::string encode_vector(std::span<const double> v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  std::vector<std::uint8_t> bytes(v.size() * sizeof(double));
  if (!v.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
  return base64_encode(bytes);
}

std::vector<double> decode_vector(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(double) != 0) throw Error(ErrorCode::CorruptRecord, "vector length");
  std::vector<double> v(bytes.size() / sizeof(double));
  if (!v.empty()) std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

// ---------------------------------------------------------------------------
// AppendLog

namespace {

const Fields& header_fields() {
  static const Fields h{"H", "keepsake", "1", std::string(kHeaderFlagsPlain)};
  return h;
}

}  // namespace

AppendLog AppendLog::open(const std::filesystem::path& path, bool sync) {
  AppendLog log;
  log.path_ = path;
  log.sync_ = sync;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  std::string content;
  if (std::ifstream in{path, std::ios::binary}) {
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }

  std::size_t good = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    auto fields = decode(std::string_view(content).substr(pos, nl - pos));
    if (!fields) break;
    if (!header_seen) {
      if (*fields != header_fields()) {
        throw Error(ErrorCode::CorruptRecord, "unsupported log header in " + path.string());
      }
      header_seen = true;
    } else {
      log.records_.push_back(std::move(*fields));
    }
    pos = nl + 1;
    good = pos;
  }
  log.recovered_bytes_ = content.size() - good;

  log.fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (log.fd_ < 0) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  if (::ftruncate(log.fd_, static_cast<off_t>(good)) != 0 ||
      ::lseek(log.fd_, static_cast<off_t>(good), SEEK_SET) < 0) {
    throw Error(ErrorCode::IoError, "cannot truncate " + path.string());
  }
  if (!header_seen) log.write_all(encode(header_fields()));
  return log;
}

AppendLog::AppendLog(AppendLog&& other) noexcept
    : path_(std::move(other.path_)),
      fd_(std::exchange(other.fd_, -1)),
      sync_(other.sync_),
      recovered_bytes_(other.recovered_bytes_),
      records_(std::move(other.records_)) {}

AppendLog& AppendLog::operator=(AppendLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    fd_ = std::exchange(other.fd_, -1);
    sync_ = other.sync_;
    recovered_bytes_ = other.recovered_bytes_;
    records_ = std::move(other.records_);
  }
  return *this;
}

AppendLog::~AppendLog() {
  if (fd_ >= 0) ::close(fd_);
}

void AppendLog::write_all(std::string_view bytes) {
  while (!bytes.empty()) {
    const auto n = ::write(fd_, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "write to " + path_.string() + " failed");
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  if (sync_) ::fdatasync(fd_);
}

void AppendLog::append(Fields fields) {
  if (fd_ >= 0) write_all(encode(fields));
  records_.push_back(std::move(fields));
}

}  // namespace keepsake::record
