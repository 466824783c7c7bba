#include "tierkv/storage_backend.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "tierkv/codec.hpp"
#include "tierkv/error.hpp"

namespace tierkv::storage {

namespace {

[[noreturn]] void io_failure(const std::string& what) {
  raise(ErrorCode::kIoFailure, what + ": " + std::strerror(errno));
}

void pwrite_all(int fd, std::string_view bytes, std::uint64_t offset) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::pwrite(fd, bytes.data() + done, bytes.size() - done,
                               static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      io_failure("log write failed");
    }
    done += static_cast<std::size_t>(n);
  }
}

std::string pread_all(int fd, std::uint64_t offset, std::size_t length) {
  std::string out(length, '\0');
  std::size_t done = 0;
  while (done < length) {
    const ssize_t n = ::pread(fd, out.data() + done, length - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      io_failure("log read failed");
    }
    if (n == 0) break;
    done += static_cast<std::size_t>(n);
  }
  out.resize(done);
  return out;
}

void sleep_us(std::uint32_t us) {
  if (us > 0) std::this_thread::sleep_for(std::chrono::microseconds(us));
}

}  // namespace

void validate_key(std::string_view key) {
  if (key.empty()) raise(ErrorCode::kInvalidArgument, "storage key must not be empty");
  if (key.size() > 0xFFFF) raise(ErrorCode::kInvalidArgument, "storage key longer than 65535 bytes");
  if (key.find('\n') != std::string_view::npos) {
    raise(ErrorCode::kInvalidArgument, "storage key must not contain a newline");
  }
}

namespace logfmt {

std::string encode_record(std::string_view key, const std::optional<std::string>& value) {
  const std::size_t value_len = value ? value->size() : 0;
  const std::size_t total = kFixedBytes + key.size() + value_len;
  if (total > 0xFFFFFFFFu) raise(ErrorCode::kInvalidArgument, "record too large");
  std::string rec;
  rec.reserve(total);
  codec::put_u32le(rec, static_cast<std::uint32_t>(total));
  rec.push_back(static_cast<char>(value ? kPut : kTombstone));
  codec::put_u16le(rec, static_cast<std::uint16_t>(key.size()));
  rec.append(key);
  if (value) rec.append(*value);
  codec::put_u32le(rec, codec::crc32c(rec));
  return rec;
}

DecodeStatus decode_record(std::string_view bytes, DecodedRecord& out) {
  if (bytes.size() < 4) return DecodeStatus::kTruncated;
  const std::uint32_t total = codec::get_u32le(bytes.data());
  if (total < kFixedBytes) return DecodeStatus::kBadFormat;
  if (total > bytes.size()) return DecodeStatus::kTruncated;
  const std::string_view rec = bytes.substr(0, total);
  const std::uint32_t stored = codec::get_u32le(rec.data() + total - 4);
  if (codec::crc32c(rec.substr(0, total - 4)) != stored) return DecodeStatus::kBadChecksum;
  const auto type = static_cast<std::uint8_t>(rec[4]);
  const std::uint16_t key_len = codec::get_u16le(rec.data() + 5);
  if (type != kPut && type != kTombstone) return DecodeStatus::kBadFormat;
  if (key_len > total - kFixedBytes) return DecodeStatus::kBadFormat;
  const std::size_t value_len = total - kFixedBytes - key_len;
  if (type == kTombstone && value_len != 0) return DecodeStatus::kBadFormat;
  out.type = type;
  out.key.assign(rec.substr(7, key_len));
  out.value.assign(rec.substr(7 + key_len, value_len));
  out.size = total;
  return DecodeStatus::kOk;
}

}  // namespace logfmt

// ---------------------------------------------------------------------------
// LogBackend

LogBackend::LogBackend(std::filesystem::path path) : path_(std::move(path)) {
  std::unique_lock lock(mu_);
  open_locked();
}

LogBackend::~LogBackend() {
  std::unique_lock lock(mu_);
  close_locked();
}

void LogBackend::open_locked() {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) io_failure("cannot open log " + path_.string());
  const off_t size = ::lseek(fd_, 0, SEEK_END);
  if (size < 0) io_failure("cannot size log");
  const std::string bytes = pread_all(fd_, 0, static_cast<std::size_t>(size));

  index_.clear();
  std::uint64_t pos = 0;
  logfmt::DecodedRecord rec;
  while (pos < bytes.size()) {
    const std::string_view rest = std::string_view(bytes).substr(pos);
    const auto status = logfmt::decode_record(rest, rec);
    if (status == logfmt::DecodeStatus::kOk) {
      if (rec.type == logfmt::kPut) {
        index_[rec.key] = Location{pos, static_cast<std::uint32_t>(rec.size)};
      } else {
        index_.erase(rec.key);
      }
      pos += rec.size;
      continue;
    }
    // A damaged record is a torn tail only if it is the last thing in the
    // file; anything after it means the log itself is corrupt.
    const bool torn = status == logfmt::DecodeStatus::kTruncated ||
                      (rest.size() >= 4 && codec::get_u32le(rest.data()) == rest.size());
    if (!torn) {
      ::close(fd_);
      fd_ = -1;
      raise(ErrorCode::kChecksumMismatch, "corrupt log record at offset " + std::to_string(pos));
    }
    if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) io_failure("cannot truncate torn tail");
    break;
  }
  end_ = pos;
}

void LogBackend::close_locked() {
  if (fd_ >= 0) {
    ::fdatasync(fd_);
    ::close(fd_);
    fd_ = -1;
  }
}

std::optional<std::string> LogBackend::read_locked(std::string_view key) {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  const std::string bytes = pread_all(fd_, it->second.offset, it->second.length);
  logfmt::DecodedRecord rec;
  const auto status = logfmt::decode_record(bytes, rec);
  if (status != logfmt::DecodeStatus::kOk || rec.key != key || rec.type != logfmt::kPut) {
    raise(ErrorCode::kChecksumMismatch, "checksum mismatch reading key '" + std::string(key) + "'");
  }
  return std::move(rec.value);
}

std::optional<std::string> LogBackend::read(std::string_view key) {
  std::shared_lock lock(mu_);
  ++read_calls_;
  ++reads_;
  return read_locked(key);
}

std::vector<std::optional<std::string>> LogBackend::multi_read(std::span<const std::string> keys) {
  std::shared_lock lock(mu_);
  ++multi_reads_;
  reads_ += keys.size();
  std::vector<std::optional<std::string>> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(read_locked(k));
  return out;
}

void LogBackend::write_batch(std::span<const WriteOp> batch) {
  std::string buf;
  std::vector<std::uint64_t> offsets;
  offsets.reserve(batch.size());
  for (const auto& op : batch) {
    validate_key(op.key);
    offsets.push_back(buf.size());
    buf += logfmt::encode_record(op.key, op.value);
  }
  std::unique_lock lock(mu_);
  try {
    pwrite_all(fd_, buf, end_);
  } catch (...) {
    ++failed_batches_;
    if (::ftruncate(fd_, static_cast<off_t>(end_)) != 0) {
      // Recovery on reopen truncates any partial record.
    }
    throw;
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& op = batch[i];
    if (op.value) {
      const auto len = static_cast<std::uint32_t>(
          (i + 1 < offsets.size() ? offsets[i + 1] : buf.size()) - offsets[i]);
      index_[op.key] = Location{end_ + offsets[i], len};
    } else {
      index_.erase(op.key);
    }
  }
  end_ += buf.size();
  writes_ += batch.size();
  ++batches_;
}

void LogBackend::flush() {
  std::shared_lock lock(mu_);
  if (::fdatasync(fd_) != 0) io_failure("fdatasync failed");
}

void LogBackend::reopen() {
  std::unique_lock lock(mu_);
  close_locked();
  open_locked();
}

StorageCounters LogBackend::counters() const {
  return {reads_.load(), read_calls_.load(), multi_reads_.load(),
          writes_.load(), batches_.load(), failed_batches_.load()};
}

std::uint64_t LogBackend::compact() {
  std::unique_lock lock(mu_);
  const std::uint64_t old_size = end_;

  std::vector<std::pair<std::string, Location>> live(index_.begin(), index_.end());
  std::sort(live.begin(), live.end(),
            [](const auto& a, const auto& b) { return a.second.offset < b.second.offset; });

  const auto tmp = std::filesystem::path(path_.string() + ".compact");
  const int out = ::open(tmp.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (out < 0) io_failure("cannot create compaction file");
  std::unordered_map<std::string, Location> fresh;
  std::uint64_t pos = 0;
  try {
    for (const auto& [key, loc] : live) {
      const std::string rec = pread_all(fd_, loc.offset, loc.length);
      pwrite_all(out, rec, pos);
      fresh[key] = Location{pos, loc.length};
      pos += rec.size();
    }
    if (::fdatasync(out) != 0) io_failure("fdatasync failed");
  } catch (...) {
    ::close(out);
    std::filesystem::remove(tmp);
    throw;
  }
  ::close(out);
  std::error_code ec;
  std::filesystem::rename(tmp, path_, ec);
  if (ec) raise(ErrorCode::kIoFailure, "cannot install compacted log: " + ec.message());
  ::close(fd_);
  fd_ = ::open(path_.c_str(), O_RDWR | O_CLOEXEC);
  if (fd_ < 0) io_failure("cannot reopen compacted log");
  index_ = std::move(fresh);
  end_ = pos;
  return old_size - pos;
}

std::uint64_t LogBackend::log_size() const {
  std::shared_lock lock(mu_);
  return end_;
}

std::size_t LogBackend::live_keys() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

std::map<std::string, LogBackend::Location> LogBackend::index_snapshot() const {
  std::shared_lock lock(mu_);
  return {index_.begin(), index_.end()};
}

// ---------------------------------------------------------------------------
// SimulatedBackend

void SimulatedBackend::check_available() const {
  if (unavailable_.load()) raise(ErrorCode::kIoFailure, "simulated storage is unavailable");
}

std::optional<std::string> SimulatedBackend::read(std::string_view key) {
  sleep_us(read_us_.load());
  check_available();
  ++read_calls_;
  ++reads_;
  std::shared_lock lock(mu_);
  auto it = data_.find(std::string(key));
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::optional<std::string>> SimulatedBackend::multi_read(std::span<const std::string> keys) {
  sleep_us(read_us_.load());
  check_available();
  ++multi_reads_;
  reads_ += keys.size();
  std::shared_lock lock(mu_);
  std::vector<std::optional<std::string>> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    auto it = data_.find(k);
    out.push_back(it == data_.end() ? std::nullopt : std::optional<std::string>(it->second));
  }
  return out;
}

void SimulatedBackend::write_batch(std::span<const WriteOp> batch) {
  for (const auto& op : batch) validate_key(op.key);
  sleep_us(write_us_.load());
  std::unique_lock lock(mu_);
  ++attempts_;
  const std::uint32_t n = fail_every_.load();
  if (unavailable_.load() || (n > 0 && attempts_ % n == 0)) {
    ++failed_batches_;
    raise(ErrorCode::kIoFailure, "simulated write failure on batch " + std::to_string(attempts_));
  }
  for (const auto& op : batch) {
    if (op.value) {
      data_[op.key] = *op.value;
    } else {
      data_.erase(op.key);
    }
    if (record_history_.load()) history_[op.key].push_back(op.value);
  }
  writes_ += batch.size();
  ++batches_;
}

StorageCounters SimulatedBackend::counters() const {
  return {reads_.load(), read_calls_.load(), multi_reads_.load(),
          writes_.load(), batches_.load(), failed_batches_.load()};
}

void SimulatedBackend::set_latency(std::uint32_t read_us, std::uint32_t write_us) {
  read_us_ = read_us;
  write_us_ = write_us;
}

void SimulatedBackend::set_fail_every(std::uint32_t n) { fail_every_ = n; }

void SimulatedBackend::set_unavailable(bool down) { unavailable_ = down; }

void SimulatedBackend::set_record_history(bool on) { record_history_ = on; }

std::map<std::string, std::string> SimulatedBackend::snapshot() const {
  std::shared_lock lock(mu_);
  return {data_.begin(), data_.end()};
}

std::vector<std::optional<std::string>> SimulatedBackend::history(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = history_.find(key);
  if (it == history_.end()) return {};
  return it->second;
}

}  // namespace tierkv::storage
