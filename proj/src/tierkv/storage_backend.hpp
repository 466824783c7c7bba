#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Pluggable storage tier. Implementations:
//   LogBackend        durable append-only log with an in-memory index
//   SimulatedBackend  in-memory map with injectable latency and failures
namespace tierkv::storage {

struct WriteOp {
  std::string key;
  std::optional<std::string> value;  // nullopt = tombstone

  static WriteOp put(std::string k, std::string v) { return {std::move(k), std::move(v)}; }
  static WriteOp del(std::string k) { return {std::move(k), std::nullopt}; }
};

struct StorageCounters {
  std::uint64_t reads = 0;        // keys looked up (read + multi_read)
  std::uint64_t read_calls = 0;   // read() invocations
  std::uint64_t multi_reads = 0;  // multi_read() invocations
  std::uint64_t writes = 0;       // records written
  std::uint64_t batches = 0;      // successful write_batch() calls
  std::uint64_t failed_batches = 0;
};

class StorageBackend {
 public:
  virtual ~StorageBackend() = default;

  virtual std::optional<std::string> read(std::string_view key) = 0;
  virtual std::vector<std::optional<std::string>> multi_read(std::span<const std::string> keys) = 0;

  // Applies the batch atomically with respect to concurrent readers. Within
  // a batch the last write to a key wins. Throws kIoFailure.
  virtual void write_batch(std::span<const WriteOp> batch) = 0;

  virtual void flush() = 0;
  virtual void reopen() = 0;

  virtual StorageCounters counters() const = 0;
  virtual std::string name() const = 0;
};

// Rejects empty keys, keys longer than 65535 bytes and keys with a newline.
void validate_key(std::string_view key);

namespace logfmt {

inline constexpr std::uint8_t kPut = 1;
inline constexpr std::uint8_t kTombstone = 2;
// u32 length + u8 type + u16 key length + u32 crc
inline constexpr std::size_t kFixedBytes = 4 + 1 + 2 + 4;

// Record layout (all little-endian):
//   u32 total record length (including this field and the CRC)
//   u8  type (1 = put, 2 = tombstone)
//   u16 key length
//   key bytes, value bytes
//   u32 CRC-32C over every preceding byte of the record
std::string encode_record(std::string_view key, const std::optional<std::string>& value);

struct DecodedRecord {
  std::uint8_t type = 0;
  std::string key;
  std::string value;
  std::size_t size = 0;
};

enum class DecodeStatus { kOk, kTruncated, kBadChecksum, kBadFormat };

DecodeStatus decode_record(std::string_view bytes, DecodedRecord& out);

}  // namespace logfmt

class LogBackend final : public StorageBackend {
 public:
  explicit LogBackend(std::filesystem::path path);
  ~LogBackend() override;

  std::optional<std::string> read(std::string_view key) override;
  std::vector<std::optional<std::string>> multi_read(std::span<const std::string> keys) override;
  void write_batch(std::span<const WriteOp> batch) override;
  void flush() override;
  void reopen() override;
  StorageCounters counters() const override;
  std::string name() const override { return "log"; }

  // Rewrites the log keeping only live records; returns bytes reclaimed.
  std::uint64_t compact();

  std::uint64_t log_size() const;
  std::size_t live_keys() const;
  const std::filesystem::path& path() const { return path_; }

  struct Location {
    std::uint64_t offset = 0;
    std::uint32_t length = 0;

    bool operator==(const Location&) const = default;
  };
  std::map<std::string, Location> index_snapshot() const;

 private:
  void open_locked();
  void close_locked();
  std::optional<std::string> read_locked(std::string_view key);

  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t end_ = 0;
  std::unordered_map<std::string, Location> index_;
  mutable std::shared_mutex mu_;

  std::atomic<std::uint64_t> reads_{0};
  std::atomic<std::uint64_t> read_calls_{0};
  std::atomic<std::uint64_t> multi_reads_{0};
  std::atomic<std::uint64_t> writes_{0};
  std::atomic<std::uint64_t> batches_{0};
  std::atomic<std::uint64_t> failed_batches_{0};
};

class SimulatedBackend final : public StorageBackend {
 public:
  SimulatedBackend() = default;

  std::optional<std::string> read(std::string_view key) override;
  std::vector<std::optional<std::string>> multi_read(std::span<const std::string> keys) override;
  void write_batch(std::span<const WriteOp> batch) override;
  void flush() override {}
  void reopen() override {}
  StorageCounters counters() const override;
  std::string name() const override { return "sim"; }

  // Each read()/multi_read() call sleeps read_us, each write_batch() write_us.
  void set_latency(std::uint32_t read_us, std::uint32_t write_us);
  // Every n-th write_batch attempt fails (n = 0 disables).
  void set_fail_every(std::uint32_t n);
  // While unavailable every operation throws kIoFailure.
  void set_unavailable(bool down);

  std::map<std::string, std::string> snapshot() const;
  // Record every value each key receives, in order (off by default).
  void set_record_history(bool on);
  std::vector<std::optional<std::string>> history(const std::string& key) const;

 private:
  void check_available() const;

  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> data_;
  std::unordered_map<std::string, std::vector<std::optional<std::string>>> history_;
  std::atomic<std::uint32_t> read_us_{0};
  std::atomic<std::uint32_t> write_us_{0};
  std::atomic<std::uint32_t> fail_every_{0};
  std::atomic<bool> unavailable_{false};
  std::atomic<bool> record_history_{false};
  std::uint64_t attempts_ = 0;

  std::atomic<std::uint64_t> reads_{0};
  std::atomic<std::uint64_t> read_calls_{0};
  std::atomic<std::uint64_t> multi_reads_{0};
  std::atomic<std::uint64_t> writes_{0};
  std::atomic<std::uint64_t> batches_{0};
  std::atomic<std::uint64_t> failed_batches_{0};
};

}  // namespace tierkv::storage
